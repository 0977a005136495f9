//! Multi-agent advantage actor-critic with one parameter store shared by all
//! agents, on-policy n-step returns and neighborhood-averaged rewards.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{env_reset, env_step, AvAction, EnvConfig, Observation, StepResult};
use crate::error::{Error, Result};
use crate::nn::{
    apply_update, greedy_action, sample_action, AdamConfig, AdamState, Architecture, LossCoefficients, LossStats,
    NetworkParams, Sample,
};
use crate::scalar::Scalar;
use crate::traffic::{DensityMode, VehicleId, WorldState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyperparams<T> {
    pub gamma: T,
    pub learning_rate: T,
    /// Environment steps collected per update.
    pub rollout_len: usize,
    /// Training budget in environment steps.
    pub total_steps: u64,
    /// Training episodes between evaluations.
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub entropy_coef: T,
    pub value_coef: T,
    pub normalize_advantages: bool,
    pub seed: u64,
}

impl<T: Scalar> Default for Hyperparams<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(0.99),
            learning_rate: T::lit(5e-4),
            rollout_len: 20,
            total_steps: 50_000,
            eval_every: 200,
            eval_episodes: 3,
            entropy_coef: T::lit(0.01),
            value_coef: T::lit(0.5),
            normalize_advantages: true,
            seed: 0,
        }
    }
}

impl<T: Scalar> Hyperparams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero() && self.gamma <= T::one()) {
            return Err(Error::InvalidConfig("gamma must lie in (0, 1]".into()));
        }
        if self.rollout_len == 0 {
            return Err(Error::InvalidConfig("rollout_len must be at least 1".into()));
        }
        if !(self.learning_rate > T::zero()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(Error::InvalidConfig("eval_every and eval_episodes must be positive".into()));
        }
        Ok(())
    }

    pub fn loss_coefficients(&self) -> LossCoefficients<T> {
        LossCoefficients { value: self.value_coef, entropy: self.entropy_coef }
    }
}

/// Discounted returns, restarting at terminal transitions and bootstrapping
/// from `bootstrap` after the last transition when it is not terminal.
pub fn compute_returns<T: Scalar>(rewards: &[T], dones: &[bool], bootstrap: T, gamma: T) -> Vec<T> {
    assert_eq!(rewards.len(), dones.len(), "rewards and dones must be aligned");
    let mut out = vec![T::zero(); rewards.len()];
    let mut next = bootstrap;
    for t in (0..rewards.len()).rev() {
        let tail = if dones[t] { T::zero() } else { gamma * next };
        out[t] = rewards[t] + tail;
        next = out[t];
    }
    out
}

const ADVANTAGE_STD_FLOOR: f64 = 1e-8;

/// `R - V`, optionally standardized over the batch.
pub fn compute_advantages<T: Scalar>(returns: &[T], values: &[T], normalize: bool) -> Vec<T> {
    assert_eq!(returns.len(), values.len(), "returns and values must be aligned");
    let mut adv: Vec<T> = returns.iter().zip(values).map(|(&r, &v)| r - v).collect();
    if normalize && !adv.is_empty() {
        let n = T::from_usize_lossy(adv.len());
        let mean = adv.iter().copied().sum::<T>() / n;
        let var = adv.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() / n;
        let std = var.sqrt().max(T::lit(ADVANTAGE_STD_FLOOR));
        for a in &mut adv {
            *a = (*a - mean) / std;
        }
    }
    adv
}

/// Chooses an action for one agent from its own observation.
pub trait Policy<T: Scalar> {
    fn act(&mut self, obs: &Observation<T>) -> Result<AvAction>;
}

/// Deterministic argmax policy used for evaluation.
pub struct GreedyPolicy<'a, T> {
    pub params: &'a NetworkParams<T>,
}

impl<T: Scalar> Policy<T> for GreedyPolicy<'_, T> {
    fn act(&mut self, obs: &Observation<T>) -> Result<AvAction> {
        let out = self.params.forward(obs)?;
        Ok(AvAction::from_index(greedy_action(&out.probs)).expect("index below NUM_ACTIONS"))
    }
}

/// Samples from the policy distribution.
pub struct SamplingPolicy<'a, T> {
    pub params: &'a NetworkParams<T>,
    pub rng: ChaCha8Rng,
}

impl<T: Scalar> Policy<T> for SamplingPolicy<'_, T> {
    fn act(&mut self, obs: &Observation<T>) -> Result<AvAction> {
        let out = self.params.forward(obs)?;
        Ok(AvAction::from_index(sample_action(&out.probs, &mut self.rng)).expect("index below NUM_ACTIONS"))
    }
}

/// Seed of episode `index` in the stream rooted at `seed`.
pub fn episode_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// One agent's contiguous run of transitions within a rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub agent: VehicleId,
    pub episode: u64,
    /// Training step at which the first transition was collected.
    pub start_step: u64,
    pub observations: Vec<Observation<T>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<T>,
    pub values: Vec<T>,
    pub dones: Vec<bool>,
    /// Value of the state following the last transition (zero if terminal).
    pub bootstrap: T,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn returns(&self, gamma: T) -> Vec<T> {
        compute_returns(&self.rewards, &self.dones, self.bootstrap, gamma)
    }
}

/// On-policy transition store, cleared after every update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer<T> {
    pub trajectories: Vec<Trajectory<T>>,
    open: BTreeMap<(u64, VehicleId), usize>,
}

impl<T: Scalar> RolloutBuffer<T> {
    pub fn new() -> Self {
        Self { trajectories: Vec::new(), open: BTreeMap::new() }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        episode: u64,
        agent: VehicleId,
        step: u64,
        obs: Observation<T>,
        action: usize,
        reward: T,
        value: T,
        done: bool,
    ) {
        let idx = *self.open.entry((episode, agent)).or_insert_with(|| {
            self.trajectories.push(Trajectory {
                agent,
                episode,
                start_step: step,
                observations: Vec::new(),
                actions: Vec::new(),
                rewards: Vec::new(),
                values: Vec::new(),
                dones: Vec::new(),
                bootstrap: T::zero(),
            });
            self.trajectories.len() - 1
        });
        let traj = &mut self.trajectories[idx];
        traj.observations.push(obs);
        traj.actions.push(action);
        traj.rewards.push(reward);
        traj.values.push(value);
        traj.dones.push(done);
        if done {
            self.open.remove(&(episode, agent));
        }
    }

    /// Sets the bootstrap value of a trajectory still open at the cut point.
    pub fn set_bootstrap(&mut self, episode: u64, agent: VehicleId, value: T) {
        if let Some(&idx) = self.open.get(&(episode, agent)) {
            self.trajectories[idx].bootstrap = value;
        }
    }

    pub fn num_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.num_transitions() == 0
    }

    pub fn clear(&mut self) {
        self.trajectories.clear();
        self.open.clear();
    }

    /// Pools every agent's transitions into one batch with returns and advantages.
    pub fn to_samples(&self, gamma: T, normalize: bool) -> Vec<Sample<T>> {
        let mut returns = Vec::new();
        let mut values = Vec::new();
        for traj in &self.trajectories {
            returns.extend(traj.returns(gamma));
            values.extend(traj.values.iter().copied());
        }
        let advantages = compute_advantages(&returns, &values, normalize);
        let mut k = 0;
        let mut samples = Vec::with_capacity(returns.len());
        for traj in &self.trajectories {
            for (obs, &action) in traj.observations.iter().zip(&traj.actions) {
                samples.push(Sample { obs: obs.clone(), action, advantage: advantages[k], ret: returns[k] });
                k += 1;
            }
        }
        samples
    }
}

/// Running totals for episode-level metrics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsAccumulator<T> {
    pub returns: Vec<T>,
    pub lengths: Vec<u64>,
    pub collisions: u64,
    pub speed_sum: T,
    pub speed_count: u64,
    pub accelerations: Vec<T>,
    pub lane_changes: u64,
}

impl<T: Scalar> MetricsAccumulator<T> {
    fn record_step(&mut self, result: &StepResult<T>) {
        for &v in result.info.speeds.values() {
            self.speed_sum += v;
            self.speed_count += 1;
        }
        self.accelerations.extend(result.info.accelerations.values().copied());
        self.lane_changes += result.info.lane_changes.len() as u64;
    }

    fn record_episode(&mut self, episode: &EpisodeTally<T>, collided: bool) {
        self.returns.push(episode.mean_return());
        self.lengths.push(episode.length);
        if collided {
            self.collisions += 1;
        }
    }

    pub fn episodes(&self) -> usize {
        self.returns.len()
    }

    pub fn summarize(&self) -> EvalMetrics<T> {
        let (return_mean, return_std) = mean_std(&self.returns);
        let (_, accel_std) = mean_std(&self.accelerations);
        let episodes = self.returns.len();
        let per_episode = |x: u64| {
            if episodes == 0 {
                T::zero()
            } else {
                T::from_usize_lossy(x as usize) / T::from_usize_lossy(episodes)
            }
        };
        EvalMetrics {
            episodes,
            return_mean,
            return_std,
            collision_rate: per_episode(self.collisions),
            mean_speed: if self.speed_count == 0 {
                T::zero()
            } else {
                self.speed_sum / T::from_usize_lossy(self.speed_count as usize)
            },
            accel_std,
            lane_changes_per_episode: per_episode(self.lane_changes),
            mean_length: per_episode(self.lengths.iter().sum()),
        }
    }
}

/// Population mean and standard deviation; zeros for an empty slice.
pub fn mean_std<T: Scalar>(xs: &[T]) -> (T, T) {
    if xs.is_empty() {
        return (T::zero(), T::zero());
    }
    let n = T::from_usize_lossy(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalMetrics<T> {
    pub episodes: usize,
    /// Mean over episodes of the per-agent average undiscounted local return.
    pub return_mean: T,
    pub return_std: T,
    /// Fraction of episodes that ended in a collision.
    pub collision_rate: T,
    pub mean_speed: T,
    pub accel_std: T,
    pub lane_changes_per_episode: T,
    pub mean_length: T,
}

/// Per-agent return sums of the episode in progress.
#[derive(Clone, Debug, Default, PartialEq)]
struct EpisodeTally<T> {
    returns: BTreeMap<VehicleId, T>,
    length: u64,
}

impl<T: Scalar> EpisodeTally<T> {
    fn start(agents: impl IntoIterator<Item = VehicleId>) -> Self {
        Self { returns: agents.into_iter().map(|id| (id, T::zero())).collect(), length: 0 }
    }

    fn record(&mut self, result: &StepResult<T>) {
        for (id, &r) in &result.rewards {
            *self.returns.entry(*id).or_insert(T::zero()) += r;
        }
        self.length += 1;
    }

    fn mean_return(&self) -> T {
        if self.returns.is_empty() {
            T::zero()
        } else {
            self.returns.values().copied().sum::<T>() / T::from_usize_lossy(self.returns.len())
        }
    }
}

/// Plays one episode with `policy` until done or `max_steps`, calling `observer`
/// after every step with the world, the chosen actions and the step result.
pub fn run_episode<T, P, F>(
    policy: &mut P,
    cfg: &EnvConfig<T>,
    mode: DensityMode,
    seed: u64,
    max_steps: Option<u64>,
    mut observer: F,
) -> Result<(MetricsAccumulator<T>, bool)>
where
    T: Scalar,
    P: Policy<T> + ?Sized,
    F: FnMut(&WorldState<T>, &StepResult<T>),
{
    let (mut world, mut obs) = env_reset(mode, seed, cfg)?;
    let mut tally = EpisodeTally::start(obs.keys().copied());
    let mut acc = MetricsAccumulator::default();
    let mut collided = false;
    let mut steps = 0u64;
    loop {
        let actions = obs.iter().map(|(&id, o)| Ok((id, policy.act(o)?))).collect::<Result<BTreeMap<_, _>>>()?;
        let result = env_step(&mut world, &actions, cfg)?;
        steps += 1;
        tally.record(&result);
        acc.record_step(&result);
        collided |= result.info.av_collision;
        observer(&world, &result);
        if result.done || max_steps.is_some_and(|m| steps >= m) {
            acc.record_episode(&tally, collided);
            return Ok((acc, result.done));
        }
        obs = result.observations;
    }
}

/// Runs `episodes` episodes with `policy` and aggregates the metrics.
pub fn evaluate_policy<T: Scalar, P: Policy<T> + ?Sized>(
    policy: &mut P,
    cfg: &EnvConfig<T>,
    mode: DensityMode,
    episodes: usize,
    seed: u64,
) -> Result<EvalMetrics<T>> {
    if episodes == 0 {
        return Err(Error::Contract("evaluation needs at least one episode".into()));
    }
    let mut total = MetricsAccumulator::default();
    for k in 0..episodes {
        let (acc, _) = run_episode(policy, cfg, mode, episode_seed(seed, k as u64), None, |_, _| {})?;
        total.returns.extend(acc.returns);
        total.lengths.extend(acc.lengths);
        total.collisions += acc.collisions;
        total.speed_sum += acc.speed_sum;
        total.speed_count += acc.speed_count;
        total.accelerations.extend(acc.accelerations);
        total.lane_changes += acc.lane_changes;
    }
    Ok(total.summarize())
}

/// Greedy evaluation of `params`.
pub fn evaluate<T: Scalar>(
    params: &NetworkParams<T>,
    cfg: &EnvConfig<T>,
    mode: DensityMode,
    episodes: usize,
    seed: u64,
) -> Result<EvalMetrics<T>> {
    evaluate_policy(&mut GreedyPolicy { params }, cfg, mode, episodes, seed)
}

/// Live episode carried across rollouts.
#[derive(Clone, Debug)]
pub struct EpisodeRunner<T> {
    pub cfg: EnvConfig<T>,
    pub mode: DensityMode,
    pub world: WorldState<T>,
    pub observations: BTreeMap<VehicleId, Observation<T>>,
    /// Index of the current episode in the seed stream.
    pub episode: u64,
    seed_root: u64,
    tally: EpisodeTally<T>,
    collided: bool,
}

impl<T: Scalar> EpisodeRunner<T> {
    pub fn new(cfg: EnvConfig<T>, mode: DensityMode, seed_root: u64, first_episode: u64) -> Result<Self> {
        let (world, observations) = env_reset(mode, episode_seed(seed_root, first_episode), &cfg)?;
        let tally = EpisodeTally::start(observations.keys().copied());
        Ok(Self { cfg, mode, world, observations, episode: first_episode, seed_root, tally, collided: false })
    }

    fn reset(&mut self) -> Result<()> {
        self.episode += 1;
        let (world, observations) = env_reset(self.mode, episode_seed(self.seed_root, self.episode), &self.cfg)?;
        self.tally = EpisodeTally::start(observations.keys().copied());
        self.world = world;
        self.observations = observations;
        self.collided = false;
        Ok(())
    }
}

/// Collects `rollout_len` environment steps with the shared `params`, appending
/// per-agent transitions to `buffer`. Finished episodes are reset in place.
pub fn collect_rollout<T: Scalar>(
    runner: &mut EpisodeRunner<T>,
    params: &NetworkParams<T>,
    buffer: &mut RolloutBuffer<T>,
    rollout_len: usize,
    start_step: u64,
    rng: &mut ChaCha8Rng,
) -> Result<MetricsAccumulator<T>> {
    let mut stats = MetricsAccumulator::default();
    for k in 0..rollout_len {
        let step = start_step + k as u64;
        let mut actions = BTreeMap::new();
        let mut chosen = Vec::with_capacity(runner.observations.len());
        for (&id, obs) in &runner.observations {
            let out = params.forward(obs)?;
            let a = sample_action(&out.probs, rng);
            actions.insert(id, AvAction::from_index(a).expect("index below NUM_ACTIONS"));
            chosen.push((id, a, out.value));
        }
        let result = env_step(&mut runner.world, &actions, &runner.cfg)?;
        let observations = std::mem::take(&mut runner.observations);
        for ((id, a, value), (_, obs)) in chosen.into_iter().zip(observations) {
            let survived = result.observations.contains_key(&id);
            let reward = result.rewards.get(&id).copied().unwrap_or(T::zero());
            buffer.push(runner.episode, id, step, obs, a, reward, value, result.done || !survived);
        }
        runner.tally.record(&result);
        runner.collided |= result.info.av_collision;
        stats.record_step(&result);
        if result.done {
            stats.record_episode(&runner.tally, runner.collided);
            runner.reset()?;
        } else {
            runner.observations = result.observations;
        }
    }
    for (&id, obs) in &runner.observations {
        buffer.set_bootstrap(runner.episode, id, params.forward(obs)?.value);
    }
    Ok(stats)
}

/// One pooled gradient step on every agent's transitions; clears the buffer.
///
/// On a non-finite loss or update the parameters and optimizer state are left
/// untouched and a training fault is returned.
pub fn update<T: Scalar>(
    params: &mut NetworkParams<T>,
    optimizer: &mut AdamState<T>,
    buffer: &mut RolloutBuffer<T>,
    hp: &Hyperparams<T>,
    adam: &AdamConfig<T>,
) -> Result<LossStats<T>> {
    if buffer.is_empty() {
        return Err(Error::Contract("update called with an empty rollout buffer".into()));
    }
    let samples = buffer.to_samples(hp.gamma, hp.normalize_advantages);
    buffer.clear();
    let (grads, stats) = params.backward(&samples, &hp.loss_coefficients())?;
    let mut next = params.clone();
    let mut next_state = optimizer.clone();
    apply_update(&mut next, &grads, &mut next_state, hp.learning_rate, adam)?;
    if !next.is_finite() {
        return Err(Error::TrainingFault("parameters became non-finite".into()));
    }
    *params = next;
    *optimizer = next_state;
    Ok(stats)
}

/// One evaluation entry of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow<T> {
    pub step: u64,
    pub episode: u64,
    pub eval_return_mean: T,
    pub eval_return_std: T,
    pub collision_rate: T,
    pub mean_speed: T,
    pub accel_std: T,
    pub lane_changes_per_episode: T,
    pub wall_clock_s: f64,
}

impl<T: Scalar> MetricsRow<T> {
    pub fn from_eval(step: u64, episode: u64, m: &EvalMetrics<T>, wall_clock_s: f64) -> Self {
        Self {
            step,
            episode,
            eval_return_mean: m.return_mean,
            eval_return_std: m.return_std,
            collision_rate: m.collision_rate,
            mean_speed: m.mean_speed,
            accel_std: m.accel_std,
            lane_changes_per_episode: m.lane_changes_per_episode,
            wall_clock_s,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig<T> {
    pub env: EnvConfig<T>,
    pub mode: DensityMode,
    pub hp: Hyperparams<T>,
    pub arch: Architecture,
    pub adam: AdamConfig<T>,
    /// Seed of the evaluation episode stream.
    pub eval_seed: u64,
    /// Record elapsed time in the log; off keeps logs byte-reproducible.
    pub record_wall_clock: bool,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(mode: DensityMode, seed: u64) -> Self {
        Self {
            env: EnvConfig::default(),
            mode,
            hp: Hyperparams { seed, ..Hyperparams::default() },
            arch: Architecture::default(),
            adam: AdamConfig::default(),
            eval_seed: seed.wrapping_add(0x5EED),
            record_wall_clock: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.hp.validate()?;
        if self.arch.n_obs != self.env.n_obs {
            return Err(Error::InvalidConfig(format!(
                "network expects {} observation rows but the environment produces {}",
                self.arch.n_obs, self.env.n_obs
            )));
        }
        Ok(())
    }
}

/// Mutable training state; resumable from a checkpoint plus counters.
pub struct Trainer<T> {
    pub config: TrainConfig<T>,
    pub params: NetworkParams<T>,
    pub optimizer: AdamState<T>,
    pub steps: u64,
    pub episodes: u64,
    pub log: Vec<MetricsRow<T>>,
    pub best: Option<(T, NetworkParams<T>)>,
    pub last_loss: Option<LossStats<T>>,
    runner: EpisodeRunner<T>,
    rng: ChaCha8Rng,
    buffer: RolloutBuffer<T>,
    next_eval_episode: u64,
    started: Instant,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig<T>) -> Result<Self> {
        let params = NetworkParams::init(config.arch, config.hp.seed);
        let optimizer = AdamState::new(params.num_params());
        Self::resume(config, params, optimizer, 0, 0)
    }

    /// Continues training from `params` and counters of an earlier run.
    pub fn resume(
        config: TrainConfig<T>,
        params: NetworkParams<T>,
        optimizer: AdamState<T>,
        steps: u64,
        episodes: u64,
    ) -> Result<Self> {
        config.validate()?;
        if params.arch != config.arch {
            return Err(Error::InvalidConfig(format!(
                "checkpoint architecture {:?} does not match configured {:?}",
                params.arch, config.arch
            )));
        }
        if optimizer.m.len() != params.num_params() {
            return Err(Error::InvalidConfig("optimizer state does not match the network".into()));
        }
        let seed = config.hp.seed;
        let runner = EpisodeRunner::new(config.env, config.mode, seed.wrapping_add(1), episodes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
        rng.set_stream(steps);
        let every = config.hp.eval_every;
        Ok(Self {
            next_eval_episode: (episodes / every + 1) * every,
            config,
            params,
            optimizer,
            steps,
            episodes,
            log: Vec::new(),
            best: None,
            last_loss: None,
            runner,
            rng,
            buffer: RolloutBuffer::new(),
            started: Instant::now(),
        })
    }

    /// Collects one rollout and applies one update. Returns the number of steps taken.
    pub fn step(&mut self) -> Result<u64> {
        let remaining = self.config.hp.total_steps.saturating_sub(self.steps);
        let n = (self.config.hp.rollout_len as u64).min(remaining);
        if n == 0 {
            return Ok(0);
        }
        let stats =
            collect_rollout(&mut self.runner, &self.params, &mut self.buffer, n as usize, self.steps, &mut self.rng)?;
        self.last_loss =
            Some(update(&mut self.params, &mut self.optimizer, &mut self.buffer, &self.config.hp, &self.config.adam)?);
        self.steps += n;
        self.episodes += stats.episodes() as u64;
        if self.episodes >= self.next_eval_episode {
            self.next_eval_episode = (self.episodes / self.config.hp.eval_every + 1) * self.config.hp.eval_every;
            self.evaluate_now()?;
        }
        Ok(n)
    }

    fn evaluate_now(&mut self) -> Result<()> {
        let m = evaluate(
            &self.params,
            &self.config.env,
            self.config.mode,
            self.config.hp.eval_episodes,
            self.config.eval_seed,
        )?;
        let wall = if self.config.record_wall_clock { self.started.elapsed().as_secs_f64() } else { 0.0 };
        self.log.push(MetricsRow::from_eval(self.steps, self.episodes, &m, wall));
        if self.best.as_ref().is_none_or(|(b, _)| m.return_mean > *b) {
            self.best = Some((m.return_mean, self.params.clone()));
        }
        Ok(())
    }

    /// Trains until the step budget is exhausted, then evaluates once more
    /// unless the last log row already describes the final parameters.
    pub fn run(&mut self) -> Result<()> {
        while self.step()? > 0 {}
        self.finish()
    }

    /// Final evaluation of the current parameters, skipped when nothing was trained
    /// or the last log row already describes them.
    pub fn finish(&mut self) -> Result<()> {
        if self.steps > 0 && self.log.last().is_none_or(|r| r.step != self.steps) {
            self.evaluate_now()?;
        }
        Ok(())
    }
}

/// Output of a complete training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub params: NetworkParams<T>,
    pub best: Option<(T, NetworkParams<T>)>,
    pub optimizer: AdamState<T>,
    pub log: Vec<MetricsRow<T>>,
    pub steps: u64,
    pub episodes: u64,
}

pub fn train<T: Scalar>(config: TrainConfig<T>) -> Result<TrainOutcome<T>> {
    let mut trainer = Trainer::new(config)?;
    trainer.run()?;
    Ok(TrainOutcome {
        params: trainer.params,
        best: trainer.best,
        optimizer: trainer.optimizer,
        log: trainer.log,
        steps: trainer.steps,
        episodes: trainer.episodes,
    })
}
