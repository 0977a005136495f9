use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use highway_marl::harness::{
    self, baseline_policy, format_metrics_row, load_checkpoint_for, run_ablation, train_run, write_trace, Axis,
    BaselineKind, Progress, RunConfig, METRICS_HEADER, PROGRESS_FILE,
};
use highway_marl::ma2c::{evaluate_policy, GreedyPolicy, MetricsRow, Policy};
use highway_marl::traffic::DensityMode;

/// Train and evaluate cooperative lane-changing policies for autonomous vehicles.
#[derive(Parser)]
#[command(name = "highway-marl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per seed and write a run directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        total_steps: Option<u64>,
        /// Continue from the last checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint or a baseline policy with greedy actions.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, default_value_t = 3)]
        episodes: usize,
        /// Where to save the metrics record (defaults next to the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train both arms of an ablation and write a comparison table.
    Ablation {
        #[command(flatten)]
        config: ConfigArgs,
        /// reward_scope, trunk, comfort or politeness.
        #[arg(long)]
        axis: Axis,
        #[arg(long)]
        total_steps: Option<u64>,
    },
    /// Record a per-step trace of one episode as JSON lines.
    Rollout {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, default_value_t = 100)]
        steps: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set politeness=1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    density: Option<DensityMode>,
    /// Seed; repeat for several seeds.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Output directory (defaults to $HIGHWAY_MARL_OUT or ./runs).
    #[arg(long)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        if let Some(d) = self.density {
            cfg.density_mode = d;
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(o) = &self.output {
            cfg.output_dir = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct PolicyArgs {
    /// Checkpoint to act greedily with.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    checkpoint: Option<PathBuf>,
    /// Baseline policy instead of a checkpoint: random or idle.
    #[arg(long)]
    baseline: Option<BaselineKind>,
}

fn first_seed(cfg: &RunConfig) -> u64 {
    cfg.seeds.first().copied().unwrap_or(0)
}

fn with_policy<R>(args: &PolicyArgs, cfg: &RunConfig, f: impl FnOnce(&mut dyn Policy<f64>) -> Result<R>) -> Result<R> {
    match (&args.checkpoint, args.baseline) {
        (Some(path), _) => {
            let params = load_checkpoint_for(path, &cfg.architecture())
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            f(&mut GreedyPolicy { params: &params })
        }
        (None, Some(kind)) => f(baseline_policy(kind, first_seed(cfg)).as_mut()),
        (None, None) => bail!("pass --checkpoint or --baseline"),
    }
}

fn progress_near(checkpoint: &Path) -> Option<Progress> {
    let text = fs::read_to_string(checkpoint.parent()?.join(PROGRESS_FILE)).ok()?;
    Progress::parse_text(&text).ok()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, total_steps, resume } => {
            let mut cfg = config.resolve()?;
            if let Some(n) = total_steps {
                cfg.hp.total_steps = n;
            }
            let results = train_run(&cfg, resume)?;
            for r in &results {
                let m = &r.final_metrics;
                println!(
                    "seed {}: {} steps, {} episodes, final return {:.3} +/- {:.3}, collision rate {:.3} -> {}",
                    r.seed,
                    r.steps,
                    r.episodes,
                    m.return_mean,
                    m.return_std,
                    m.collision_rate,
                    r.dir.display()
                );
            }
        }
        Command::Evaluate { config, policy, episodes, out } => {
            let cfg = config.resolve()?;
            let seed = first_seed(&cfg);
            let env = cfg.effective_env();
            let m = with_policy(&policy, &cfg, |p| Ok(evaluate_policy(p, &env, cfg.density_mode, episodes, seed)?))?;
            let progress = policy.checkpoint.as_deref().and_then(progress_near);
            let (step, episode) = progress.map_or((0, 0), |p| (p.steps, p.episodes));
            let row = MetricsRow::from_eval(step, episode, &m, 0.0);
            let text = format!("{METRICS_HEADER}\n{}\n", format_metrics_row(&row));
            print!("{text}");
            let out = out.unwrap_or_else(|| match &policy.checkpoint {
                Some(ckpt) => ckpt.with_extension(format!("eval_{}_seed{seed}.csv", cfg.density_mode)),
                None => cfg.output_dir.join(format!("baseline_eval_{}_seed{seed}.csv", cfg.density_mode)),
            });
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Ablation { config, axis, total_steps } => {
            let mut cfg = config.resolve()?;
            if let Some(n) = total_steps {
                cfg.hp.total_steps = n;
            }
            let arms = run_ablation(axis, &cfg)?;
            print!("{}", harness::comparison_csv(&arms));
        }
        Command::Rollout { config, policy, steps, out } => {
            let cfg = config.resolve()?;
            let env = cfg.effective_env();
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut writer = BufWriter::new(file);
            let n = with_policy(&policy, &cfg, |p| {
                Ok(write_trace(p, &env, cfg.density_mode, first_seed(&cfg), steps, &mut writer)?)
            })?;
            std::io::Write::flush(&mut writer)?;
            println!("wrote {n} step records to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
