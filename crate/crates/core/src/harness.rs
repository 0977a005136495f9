//! Run configuration, run directories, ablations, baseline policies and traces.
//!
//! A run directory holds `config.txt` (the effective configuration) and one
//! `seed_<n>/` subdirectory per seed with `metrics.csv`, `best.ckpt`,
//! `last.ckpt`, `last.adam`, `progress.txt` and `summary.txt`.

use std::fmt::{self, Display};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{AvAction, EnvConfig, Observation, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::ma2c::{
    episode_seed, evaluate, mean_std, run_episode, EvalMetrics, Hyperparams, MetricsRow, Policy, TrainConfig, Trainer,
};
use crate::nn::{self, AdamState, Architecture, NetworkParams, TrunkMode};
use crate::traffic::{DensityMode, LaneDecision, VehicleId, VehicleKind};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "HIGHWAY_MARL_OUT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

pub const CONFIG_FILE: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const LAST_OPTIMIZER: &str = "last.adam";
pub const PROGRESS_FILE: &str = "progress.txt";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const COMPARISON_FILE: &str = "comparison.csv";

pub const METRICS_HEADER: &str =
    "step,episode,eval_return_mean,eval_return_std,collision_rate,mean_speed,accel_std,lane_changes_per_episode,wall_clock_s";

pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT), PathBuf::from)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RewardScope {
    /// Average over AVs within `neighbor_radius`.
    Local,
    /// Average over every AV on the road.
    Global,
}

impl Display for RewardScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Local => "local",
            Self::Global => "global",
        })
    }
}

impl FromStr for RewardScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "local" => Ok(Self::Local),
            "global" => Ok(Self::Global),
            other => Err(Error::InvalidConfig(format!("unknown reward scope `{other}` (expected local or global)"))),
        }
    }
}

/// Everything needed to reproduce a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub density_mode: DensityMode,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub reward_scope: RewardScope,
    pub trunk: TrunkMode,
    /// Episodes in the post-training evaluation reported in the summary.
    pub final_eval_episodes: usize,
    pub wall_clock: bool,
    pub env: EnvConfig<f64>,
    pub hp: Hyperparams<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            density_mode: DensityMode::D1,
            seeds: vec![0, 1],
            output_dir: default_output_root(),
            reward_scope: RewardScope::Local,
            trunk: TrunkMode::Shared,
            final_eval_episodes: 30,
            wall_clock: false,
            env: EnvConfig::default(),
            hp: Hyperparams::default(),
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: Display,
{
    value.trim().parse().map_err(|e| Error::InvalidConfig(format!("invalid value `{value}` for `{key}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("invalid value `{value}` for `{key}`: expected true or false"))),
    }
}

impl RunConfig {
    /// Key names accepted by [`RunConfig::set`], in snapshot order.
    pub const KEYS: &'static [&'static str] = &[
        "density_mode",
        "seeds",
        "output_dir",
        "reward_scope",
        "trunk",
        "final_eval_episodes",
        "wall_clock",
        "politeness",
        "b_safe",
        "mobil_threshold",
        "desired_speed",
        "time_headway",
        "max_accel",
        "comfort_decel",
        "accel_exponent",
        "min_gap",
        "w_safety",
        "w_headway",
        "w_speed",
        "comfort_weight",
        "headway_time",
        "comfort_accel",
        "v_min",
        "v_max",
        "neighbor_radius",
        "n_obs",
        "horizon",
        "gamma",
        "learning_rate",
        "rollout_len",
        "total_steps",
        "eval_every",
        "eval_episodes",
        "entropy_coef",
        "value_coef",
        "normalize_advantages",
    ];

    pub fn get(&self, key: &str) -> Result<String> {
        let e = &self.env;
        let hp = &self.hp;
        Ok(match key {
            "density_mode" => self.density_mode.to_string(),
            "seeds" => self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            "output_dir" => self.output_dir.display().to_string(),
            "reward_scope" => self.reward_scope.to_string(),
            "trunk" => self.trunk.to_string(),
            "final_eval_episodes" => self.final_eval_episodes.to_string(),
            "wall_clock" => self.wall_clock.to_string(),
            "politeness" => e.mobil.politeness.to_string(),
            "b_safe" => e.mobil.b_safe.to_string(),
            "mobil_threshold" => e.mobil.threshold.to_string(),
            "desired_speed" => e.idm.desired_speed.to_string(),
            "time_headway" => e.idm.time_headway.to_string(),
            "max_accel" => e.idm.max_accel.to_string(),
            "comfort_decel" => e.idm.comfort_decel.to_string(),
            "accel_exponent" => e.idm.exponent.to_string(),
            "min_gap" => e.idm.min_gap.to_string(),
            "w_safety" => e.reward.w_safety.to_string(),
            "w_headway" => e.reward.w_headway.to_string(),
            "w_speed" => e.reward.w_speed.to_string(),
            "comfort_weight" => e.reward.w_comfort.to_string(),
            "headway_time" => e.reward.headway_time.to_string(),
            "comfort_accel" => e.reward.comfort_accel.to_string(),
            "v_min" => e.reward.v_min.to_string(),
            "v_max" => e.reward.v_max.to_string(),
            "neighbor_radius" => e.reward.neighbor_radius.to_string(),
            "n_obs" => e.n_obs.to_string(),
            "horizon" => e.horizon.to_string(),
            "gamma" => hp.gamma.to_string(),
            "learning_rate" => hp.learning_rate.to_string(),
            "rollout_len" => hp.rollout_len.to_string(),
            "total_steps" => hp.total_steps.to_string(),
            "eval_every" => hp.eval_every.to_string(),
            "eval_episodes" => hp.eval_episodes.to_string(),
            "entropy_coef" => hp.entropy_coef.to_string(),
            "value_coef" => hp.value_coef.to_string(),
            "normalize_advantages" => hp.normalize_advantages.to_string(),
            other => return Err(unknown_key(other)),
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let e = &mut self.env;
        let hp = &mut self.hp;
        match key {
            "density_mode" => self.density_mode = parse(key, value)?,
            "seeds" => {
                self.seeds =
                    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect::<Result<_>>()?
            }
            "output_dir" => self.output_dir = PathBuf::from(value.trim()),
            "reward_scope" => self.reward_scope = parse(key, value)?,
            "trunk" => self.trunk = parse(key, value)?,
            "final_eval_episodes" => self.final_eval_episodes = parse(key, value)?,
            "wall_clock" => self.wall_clock = parse_bool(key, value)?,
            "politeness" => e.mobil.politeness = parse(key, value)?,
            "b_safe" => e.mobil.b_safe = parse(key, value)?,
            "mobil_threshold" => e.mobil.threshold = parse(key, value)?,
            "desired_speed" => e.idm.desired_speed = parse(key, value)?,
            "time_headway" => e.idm.time_headway = parse(key, value)?,
            "max_accel" => e.idm.max_accel = parse(key, value)?,
            "comfort_decel" => e.idm.comfort_decel = parse(key, value)?,
            "accel_exponent" => e.idm.exponent = parse(key, value)?,
            "min_gap" => e.idm.min_gap = parse(key, value)?,
            "w_safety" => e.reward.w_safety = parse(key, value)?,
            "w_headway" => e.reward.w_headway = parse(key, value)?,
            "w_speed" => e.reward.w_speed = parse(key, value)?,
            "comfort_weight" => e.reward.w_comfort = parse(key, value)?,
            "headway_time" => e.reward.headway_time = parse(key, value)?,
            "comfort_accel" => e.reward.comfort_accel = parse(key, value)?,
            "v_min" => e.reward.v_min = parse(key, value)?,
            "v_max" => e.reward.v_max = parse(key, value)?,
            "neighbor_radius" => e.reward.neighbor_radius = parse(key, value)?,
            "n_obs" => e.n_obs = parse(key, value)?,
            "horizon" => e.horizon = parse(key, value)?,
            "gamma" => hp.gamma = parse(key, value)?,
            "learning_rate" => hp.learning_rate = parse(key, value)?,
            "rollout_len" => hp.rollout_len = parse(key, value)?,
            "total_steps" => hp.total_steps = parse(key, value)?,
            "eval_every" => hp.eval_every = parse(key, value)?,
            "eval_episodes" => hp.eval_episodes = parse(key, value)?,
            "entropy_coef" => hp.entropy_coef = parse(key, value)?,
            "value_coef" => hp.value_coef = parse(key, value)?,
            "normalize_advantages" => hp.normalize_advantages = parse_bool(key, value)?,
            other => return Err(unknown_key(other)),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override `{assignment}` is not of the form key=value")))?;
        self.set(key.trim(), value)
    }

    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::InvalidConfig(format!("line {}: duplicate key `{key}`", n + 1)));
            }
            cfg.set(key, value).map_err(|e| Error::InvalidConfig(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse_text(&text)
    }

    /// Every key with its effective value, one `key = value` per line.
    pub fn to_text(&self) -> String {
        Self::KEYS.iter().map(|k| format!("{k} = {}\n", self.get(k).expect("listed key"))).collect()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture { n_obs: self.env.n_obs, trunk: self.trunk, ..Architecture::default() }
    }

    /// Environment with the reward scope folded into the neighbor radius.
    pub fn effective_env(&self) -> EnvConfig<f64> {
        let mut env = self.env;
        if self.reward_scope == RewardScope::Global {
            env.reward.neighbor_radius = env.road.length;
        }
        env
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig<f64> {
        let mut tc = TrainConfig::new(self.density_mode, seed);
        tc.env = self.effective_env();
        tc.hp = Hyperparams { seed, ..self.hp };
        tc.arch = self.architecture();
        tc.record_wall_clock = self.wall_clock;
        tc
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.final_eval_episodes == 0 {
            return Err(Error::InvalidConfig("final_eval_episodes must be positive".into()));
        }
        self.train_config(self.seeds[0]).validate()
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed_{seed}"))
    }
}

fn unknown_key(key: &str) -> Error {
    Error::InvalidConfig(format!("unknown config key `{key}`; valid keys: {}", RunConfig::KEYS.join(", ")))
}

pub fn format_metrics_row(r: &MetricsRow<f64>) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.step,
        r.episode,
        r.eval_return_mean,
        r.eval_return_std,
        r.collision_rate,
        r.mean_speed,
        r.accel_std,
        r.lane_changes_per_episode,
        r.wall_clock_s
    )
}

pub fn metrics_csv(rows: &[MetricsRow<f64>]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format_metrics_row(r));
        out.push('\n');
    }
    out
}

/// Strict parser: exact header, nine columns, strictly increasing steps.
pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRow<f64>>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Contract("metrics file does not start with the expected header".into()));
    }
    let mut rows: Vec<MetricsRow<f64>> = Vec::new();
    for (n, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 9 {
            return Err(Error::Contract(format!("metrics row {} has {} columns, expected 9", n + 1, cols.len())));
        }
        let f = |i: usize| -> Result<f64> {
            cols[i].parse().map_err(|_| Error::Contract(format!("metrics row {}: bad number `{}`", n + 1, cols[i])))
        };
        let u = |i: usize| -> Result<u64> {
            cols[i].parse().map_err(|_| Error::Contract(format!("metrics row {}: bad integer `{}`", n + 1, cols[i])))
        };
        let row = MetricsRow {
            step: u(0)?,
            episode: u(1)?,
            eval_return_mean: f(2)?,
            eval_return_std: f(3)?,
            collision_rate: f(4)?,
            mean_speed: f(5)?,
            accel_std: f(6)?,
            lane_changes_per_episode: f(7)?,
            wall_clock_s: f(8)?,
        };
        if rows.last().is_some_and(|p| p.step >= row.step) {
            return Err(Error::Contract(format!("metrics row {}: step column is not increasing", n + 1)));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Counters persisted next to `last.ckpt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Progress {
    pub steps: u64,
    pub episodes: u64,
    pub best_return: Option<f64>,
}

impl Progress {
    pub fn to_text(&self) -> String {
        let best = self.best_return.map_or_else(|| "none".to_string(), |b| b.to_string());
        format!("steps = {}\nepisodes = {}\nbest_return = {best}\n", self.steps, self.episodes)
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut p = Progress { steps: 0, episodes: 0, best_return: None };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Checkpoint(format!("bad progress line `{line}`")))?;
            let v = v.trim();
            let bad = || Error::Checkpoint(format!("bad progress value `{v}`"));
            match k.trim() {
                "steps" => p.steps = v.parse().map_err(|_| bad())?,
                "episodes" => p.episodes = v.parse().map_err(|_| bad())?,
                "best_return" => p.best_return = if v == "none" { None } else { Some(v.parse().map_err(|_| bad())?) },
                other => return Err(Error::Checkpoint(format!("unknown progress key `{other}`"))),
            }
        }
        Ok(p)
    }
}

pub fn save_checkpoint(path: &Path, params: &NetworkParams<f64>) -> Result<()> {
    fs::write(path, nn::serialize(params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams<f64>> {
    let bytes =
        fs::read(path).map_err(|e| Error::Checkpoint(format!("cannot read checkpoint {}: {e}", path.display())))?;
    nn::deserialize(&bytes)
}

/// Loads a checkpoint and checks it against the architecture a config expects.
pub fn load_checkpoint_for(path: &Path, expected: &Architecture) -> Result<NetworkParams<f64>> {
    let params = load_checkpoint(path)?;
    check_architecture(&params.arch, expected, path)?;
    Ok(params)
}

fn check_architecture(found: &Architecture, expected: &Architecture, path: &Path) -> Result<()> {
    if found.trunk != expected.trunk {
        return Err(Error::InvalidConfig(format!(
            "checkpoint {} was trained with trunk={} but the configuration requests trunk={}; \
             set trunk={} or start a fresh output directory",
            path.display(),
            found.trunk,
            expected.trunk,
            found.trunk
        )));
    }
    if found != expected {
        return Err(Error::InvalidConfig(format!(
            "checkpoint {} has architecture {found:?}, configuration expects {expected:?}",
            path.display()
        )));
    }
    Ok(())
}

/// Outcome of one seed of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub dir: PathBuf,
    pub steps: u64,
    pub episodes: u64,
    pub rows: Vec<MetricsRow<f64>>,
    /// Greedy evaluation of the last parameters over `final_eval_episodes`.
    pub final_metrics: EvalMetrics<f64>,
}

fn write_state(dir: &Path, trainer: &Trainer<f64>) -> Result<()> {
    save_checkpoint(&dir.join(LAST_CHECKPOINT), &trainer.params)?;
    fs::write(dir.join(LAST_OPTIMIZER), nn::serialize_optimizer(&trainer.optimizer))?;
    if let Some((_, best)) = &trainer.best {
        save_checkpoint(&dir.join(BEST_CHECKPOINT), best)?;
    }
    let progress = Progress {
        steps: trainer.steps,
        episodes: trainer.episodes,
        best_return: trainer.best.as_ref().map(|(b, _)| *b),
    };
    fs::write(dir.join(PROGRESS_FILE), progress.to_text())?;
    Ok(())
}

fn append_rows(path: &Path, rows: &[MetricsRow<f64>]) -> Result<()> {
    let mut f = fs::OpenOptions::new().append(true).open(path)?;
    for r in rows {
        writeln!(f, "{}", format_metrics_row(r))?;
    }
    Ok(())
}

/// Eval-stream seed used for a training seed; shared by baselines for comparison.
pub fn eval_seed(cfg: &RunConfig, seed: u64) -> u64 {
    cfg.train_config(seed).eval_seed
}

/// Seed of the post-training evaluation stream, disjoint from periodic evaluation.
pub fn final_eval_seed(cfg: &RunConfig, seed: u64) -> u64 {
    episode_seed(eval_seed(cfg, seed), u64::MAX)
}

fn train_seed(cfg: &RunConfig, seed: u64, resume: bool) -> Result<SeedResult> {
    let dir = cfg.seed_dir(seed);
    fs::create_dir_all(&dir)?;
    let tc = cfg.train_config(seed);
    let metrics_path = dir.join(METRICS_FILE);
    let progress_path = dir.join(PROGRESS_FILE);

    let mut trainer = if resume && progress_path.exists() {
        let progress = Progress::parse_text(&fs::read_to_string(&progress_path)?)?;
        let params = load_checkpoint_for(&dir.join(LAST_CHECKPOINT), &tc.arch)?;
        let optimizer: AdamState<f64> = nn::deserialize_optimizer(&fs::read(dir.join(LAST_OPTIMIZER))?)?;
        // Rows logged after the last saved state are dropped so step numbering stays monotone.
        let kept: Vec<_> = parse_metrics(&fs::read_to_string(&metrics_path)?)?
            .into_iter()
            .filter(|r| r.step <= progress.steps)
            .collect();
        fs::write(&metrics_path, metrics_csv(&kept))?;
        let mut t = Trainer::resume(tc, params, optimizer, progress.steps, progress.episodes)?;
        if let Some(b) = progress.best_return {
            let best = load_checkpoint_for(&dir.join(BEST_CHECKPOINT), &t.config.arch)?;
            t.best = Some((b, best));
        }
        t.log = kept;
        t
    } else {
        if progress_path.exists() {
            return Err(Error::InvalidConfig(format!(
                "{} already holds a run; pass --resume to continue it or choose another output directory",
                dir.display()
            )));
        }
        fs::write(&metrics_path, metrics_csv(&[]))?;
        Trainer::new(tc)?
    };

    let mut flushed = trainer.log.len();
    loop {
        let taken = trainer.step()?;
        if trainer.log.len() > flushed || taken == 0 {
            if taken == 0 {
                trainer.finish()?;
            }
            append_rows(&metrics_path, &trainer.log[flushed..])?;
            flushed = trainer.log.len();
            write_state(&dir, &trainer)?;
        }
        if taken == 0 {
            break;
        }
    }

    let env = trainer.config.env;
    let final_metrics =
        evaluate(&trainer.params, &env, cfg.density_mode, cfg.final_eval_episodes, final_eval_seed(cfg, seed))?;
    fs::write(dir.join(SUMMARY_FILE), summary_text(cfg, seed, &trainer, &final_metrics))?;
    Ok(SeedResult {
        seed,
        dir,
        steps: trainer.steps,
        episodes: trainer.episodes,
        rows: trainer.log.clone(),
        final_metrics,
    })
}

fn summary_text(cfg: &RunConfig, seed: u64, trainer: &Trainer<f64>, m: &EvalMetrics<f64>) -> String {
    let best = trainer.best.as_ref().map_or_else(|| "none".to_string(), |(b, _)| format!("{b:.3}"));
    format!(
        "density {} | seed {seed} | trunk {} | reward scope {}\n\
         trained {} steps over {} episodes, {} evaluations, best eval return {best}\n\
         final evaluation over {} episodes:\n  return {:.3} +/- {:.3}\n  collision rate {:.3}\n  \
         mean speed {:.3} m/s\n  acceleration std {:.3} m/s^2\n  lane changes per episode {:.3}\n",
        cfg.density_mode,
        cfg.trunk,
        cfg.reward_scope,
        trainer.steps,
        trainer.episodes,
        trainer.log.len(),
        m.episodes,
        m.return_mean,
        m.return_std,
        m.collision_rate,
        m.mean_speed,
        m.accel_std,
        m.lane_changes_per_episode,
    )
}

/// Trains every seed of `cfg`, one thread per seed, and writes the run directory.
pub fn train_run(cfg: &RunConfig, resume: bool) -> Result<Vec<SeedResult>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join(CONFIG_FILE), cfg.to_text())?;
    std::thread::scope(|s| {
        let handles: Vec<_> = cfg.seeds.iter().map(|&seed| s.spawn(move || train_seed(cfg, seed, resume))).collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    RewardScope,
    Trunk,
    Comfort,
    Politeness,
}

impl Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RewardScope => "reward_scope",
            Self::Trunk => "trunk",
            Self::Comfort => "comfort",
            Self::Politeness => "politeness",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reward_scope" => Ok(Self::RewardScope),
            "trunk" => Ok(Self::Trunk),
            "comfort" => Ok(Self::Comfort),
            "politeness" => Ok(Self::Politeness),
            other => Err(Error::InvalidConfig(format!(
                "unknown ablation axis `{other}` (expected reward_scope, trunk, comfort or politeness)"
            ))),
        }
    }
}

impl Axis {
    /// Config key varied by this axis and its two settings, reference arm first.
    pub fn settings(self) -> (&'static str, [&'static str; 2]) {
        match self {
            Self::RewardScope => ("reward_scope", ["local", "global"]),
            Self::Trunk => ("trunk", ["shared", "separate"]),
            Self::Comfort => ("comfort_weight", ["1", "0"]),
            Self::Politeness => ("politeness", ["0", "1"]),
        }
    }
}

/// The two arm configurations, identical to `base` except for the axis key and
/// the output directory.
pub fn ablation_arms(axis: Axis, base: &RunConfig) -> Result<Vec<(String, RunConfig)>> {
    let (key, values) = axis.settings();
    values
        .iter()
        .map(|v| {
            let mut cfg = base.clone();
            cfg.set(key, v)?;
            let name = format!("{key}_{v}");
            cfg.output_dir = base.output_dir.join(axis.to_string()).join(&name);
            Ok((name, cfg))
        })
        .collect()
}

/// One arm of an ablation, aggregated over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmSummary {
    pub arm: String,
    pub seeds: Vec<SeedResult>,
    pub final_return_mean: f64,
    pub final_return_std: f64,
    pub accel_std: f64,
    pub collision_rate: f64,
    pub mean_speed: f64,
}

impl ArmSummary {
    pub fn from_seeds(arm: String, seeds: Vec<SeedResult>) -> Self {
        let pick = |f: fn(&EvalMetrics<f64>) -> f64| seeds.iter().map(|s| f(&s.final_metrics)).collect::<Vec<_>>();
        let (final_return_mean, final_return_std) = mean_std(&pick(|m| m.return_mean));
        Self {
            arm,
            final_return_mean,
            final_return_std,
            accel_std: mean_std(&pick(|m| m.accel_std)).0,
            collision_rate: mean_std(&pick(|m| m.collision_rate)).0,
            mean_speed: mean_std(&pick(|m| m.mean_speed)).0,
            seeds,
        }
    }
}

pub const COMPARISON_HEADER: &str = "arm,seeds,final_return_mean,final_return_std,accel_std,collision_rate,mean_speed";

pub fn comparison_csv(arms: &[ArmSummary]) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for a in arms {
        let seeds = a.seeds.iter().map(|s| s.seed.to_string()).collect::<Vec<_>>().join(";");
        out.push_str(&format!(
            "{},{seeds},{},{},{},{},{}\n",
            a.arm, a.final_return_mean, a.final_return_std, a.accel_std, a.collision_rate, a.mean_speed
        ));
    }
    out
}

/// Trains both arms with identical seeds and writes `<output>/<axis>/comparison.csv`.
pub fn run_ablation(axis: Axis, base: &RunConfig) -> Result<Vec<ArmSummary>> {
    let arms = ablation_arms(axis, base)?;
    let results = std::thread::scope(|s| {
        let handles: Vec<_> = arms
            .iter()
            .map(|(name, cfg)| s.spawn(move || train_run(cfg, false).map(|r| ArmSummary::from_seeds(name.clone(), r))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("ablation thread panicked")).collect::<Result<Vec<_>>>()
    })?;
    let dir = base.output_dir.join(axis.to_string());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(COMPARISON_FILE), comparison_csv(&results))?;
    Ok(results)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Random,
    Idle,
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(Self::Random),
            "idle" => Ok(Self::Idle),
            other => Err(Error::InvalidConfig(format!("unknown baseline `{other}` (expected random or idle)"))),
        }
    }
}

/// Uniform over the five actions.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl<T: crate::Scalar> Policy<T> for RandomPolicy {
    fn act(&mut self, _obs: &Observation<T>) -> Result<AvAction> {
        Ok(AvAction::from_index(self.rng.gen_range(0..NUM_ACTIONS)).expect("index below NUM_ACTIONS"))
    }
}

/// Always keeps lane and target speed.
pub struct IdlePolicy;

impl<T: crate::Scalar> Policy<T> for IdlePolicy {
    fn act(&mut self, _obs: &Observation<T>) -> Result<AvAction> {
        Ok(AvAction::Idle)
    }
}

pub fn baseline_policy(kind: BaselineKind, seed: u64) -> Box<dyn Policy<f64>> {
    match kind {
        BaselineKind::Random => Box::new(RandomPolicy::new(seed)),
        BaselineKind::Idle => Box::new(IdlePolicy),
    }
}

/// One vehicle in a trace record. HDV actions are their lane decisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceVehicle {
    pub id: VehicleId,
    pub kind: VehicleKind,
    pub lane: usize,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub a: f64,
    pub action: String,
}

/// One line of a rollout trace: the world after `step` control steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub time_s: f64,
    pub done: bool,
    pub collisions: Vec<(VehicleId, VehicleId)>,
    pub vehicles: Vec<TraceVehicle>,
}

fn lane_decision_name(d: LaneDecision) -> &'static str {
    match d {
        LaneDecision::Keep => "KEEP",
        LaneDecision::Left => "LEFT",
        LaneDecision::Right => "RIGHT",
    }
}

/// Plays one episode (the first of the evaluation stream for `seed`) and writes
/// one JSON record per step. Returns the number of records written.
pub fn write_trace<W: Write>(
    policy: &mut dyn Policy<f64>,
    env: &EnvConfig<f64>,
    mode: DensityMode,
    seed: u64,
    max_steps: u64,
    out: &mut W,
) -> Result<u64> {
    let mut written = 0u64;
    let mut io_err = None;
    run_episode(policy, env, mode, episode_seed(seed, 0), Some(max_steps), |world, result| {
        if io_err.is_some() {
            return;
        }
        let vehicles = world
            .vehicles
            .iter()
            .map(|v| TraceVehicle {
                id: v.id,
                kind: v.kind,
                lane: v.lane,
                x: v.x,
                y: v.y,
                v: v.v,
                a: v.a,
                action: match v.kind {
                    VehicleKind::Av => result.info.actions.get(&v.id).map_or("NONE", |a| a.name()),
                    VehicleKind::Hdv => result.info.hdv_decisions.get(&v.id).map_or("KEEP", |&d| lane_decision_name(d)),
                }
                .to_string(),
            })
            .collect();
        let record = TraceRecord {
            step: world.step_count,
            time_s: world.step_count as f64 * world.dt,
            done: result.done,
            collisions: result.info.collisions.clone(),
            vehicles,
        };
        let line = serde_json::to_string(&record).map_err(|e| Error::Io(std::io::Error::other(e)));
        match line.and_then(|l| writeln!(out, "{l}").map_err(Error::from)) {
            Ok(()) => written += 1,
            Err(e) => io_err = Some(e),
        }
    })?;
    match io_err {
        Some(e) => Err(e),
        None => Ok(written),
    }
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Contract(format!("bad trace record: {e}"))))
        .collect()
}
