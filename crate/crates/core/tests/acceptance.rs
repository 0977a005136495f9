//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use highway_marl::env::{
    agent_reward, env_reset, env_step, reward_headway, reward_speed, AvAction, EnvConfig, RewardComponents,
    RewardConfig,
};
use highway_marl::harness::{final_eval_seed, train_run, RandomPolicy, RewardScope, RunConfig, SeedResult};
use highway_marl::hdv::{hdv_decide, mobil_incentive, mobil_safety, IdmParams, MobilAccelerations, MobilParams};
use highway_marl::ma2c::{episode_seed, evaluate_policy, Policy};
use highway_marl::nn::{Architecture, LossCoefficients, NetworkParams, Sample, TrunkMode};
use highway_marl::traffic::{Command, DensityMode, RoadConfig, VehicleKind, WorldState};
use highway_marl::{Obs, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Simulates a follower behind a constant-speed leader and returns the final bumper gap.
fn follow_constant_leader(idm: &IdmParams<f64>, follower_v0: f64, seconds: f64) -> f64 {
    let mut w = WorldState::<f64>::empty(RoadConfig { length: 1.0e5, ..RoadConfig::default() }, 0);
    let leader = w.insert_vehicle(VehicleKind::Hdv, 0, 300.0, 25.0);
    let follower = w.insert_vehicle(VehicleKind::Hdv, 0, 100.0, 25.0);
    w.vehicle_mut(follower).unwrap().desired_speed = follower_v0;
    let steps = (seconds / w.dt).round() as usize;
    for _ in 0..steps {
        let (a, _) = hdv_decide(&w, follower, idm, &MobilParams::default()).unwrap();
        let cmd = BTreeMap::from([(leader, Command::keep(0.0)), (follower, Command::keep(a))]);
        w.advance(&cmd).unwrap();
    }
    w.leader(follower, 0).unwrap().unwrap().gap
}

fn c1_idm_equilibrium() -> Outcome {
    let start = Instant::now();
    let idm = IdmParams::<f64>::default();
    // Steady state of the car-following law: s*(v) / sqrt(1 - (v/v0)^delta).
    let oracle = |v0: f64| (idm.min_gap + 25.0 * idm.time_headway) / (1.0 - (25.0 / v0).powf(idm.exponent)).sqrt();
    let gap_default = follow_constant_leader(&idm, idm.desired_speed, 200.0);
    let target_default = oracle(idm.desired_speed);
    // With v0 far above the leader speed the free-road term vanishes and the
    // equilibrium is the desired gap s0 + vT = 47.5 m.
    let gap_fast = follow_constant_leader(&idm, 250.0, 200.0);
    let elapsed = start.elapsed();
    let pass = (gap_default - target_default).abs() <= 0.5
        && (gap_fast - 47.5).abs() <= 0.5
        && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "v0=30: gap {gap_default:.3} m vs analytic {target_default:.3} m; v0=250: gap {gap_fast:.3} m vs 47.5 m; {elapsed:.2?}"
        ),
    )
}

fn c2_mobil_truth_table() -> Outcome {
    struct Case {
        name: &'static str,
        p: f64,
        acc: MobilAccelerations<f64>,
        safe: bool,
        incentive: bool,
    }
    let acc = |ego: f64, ego_after: f64, nf: f64, nf_after: f64, of: f64, of_after: f64| MobilAccelerations {
        ego,
        ego_after,
        new_follower: nf,
        new_follower_after: nf_after,
        old_follower: of,
        old_follower_after: of_after,
    };
    // Values are dyadic so that the boundary cases compare exactly.
    let cases = [
        Case {
            name: "safe, large gain",
            p: 0.0,
            acc: acc(-1.0, 1.0, 0.0, -2.0, 0.0, 0.0),
            safe: true,
            incentive: true,
        },
        Case {
            name: "braking exactly b_safe",
            p: 0.0,
            acc: acc(-1.0, 1.0, 0.0, -9.0, 0.0, 0.0),
            safe: true,
            incentive: true,
        },
        Case {
            name: "braking just past b_safe",
            p: 0.0,
            acc: acc(-1.0, 1.0, 0.0, -9.0625, 0.0, 0.0),
            safe: false,
            incentive: true,
        },
        Case { name: "hard braking", p: 0.0, acc: acc(-1.0, 1.0, 0.0, -12.0, 0.0, 0.0), safe: false, incentive: true },
        Case {
            name: "gain exactly threshold",
            p: 0.0,
            acc: acc(0.0, 0.125, 0.0, 0.0, 0.0, 0.0),
            safe: true,
            incentive: true,
        },
        Case {
            name: "gain below threshold",
            p: 0.0,
            acc: acc(0.0, 0.0625, 0.0, 0.0, 0.0, 0.0),
            safe: true,
            incentive: false,
        },
        Case { name: "no gain", p: 0.0, acc: acc(0.5, 0.5, 0.0, 0.0, 0.0, 0.0), safe: true, incentive: false },
        Case { name: "loss", p: 0.0, acc: acc(1.0, -1.0, 0.0, 0.0, 0.0, 0.0), safe: true, incentive: false },
        Case {
            name: "selfish ignores follower loss",
            p: 0.0,
            acc: acc(0.0, 0.25, 1.0, -8.0, 0.5, -3.0),
            safe: true,
            incentive: true,
        },
        Case {
            name: "polite, follower loss cancels",
            p: 1.0,
            acc: acc(0.0, 0.25, 0.0, -0.125, 0.0, -0.125),
            safe: true,
            incentive: false,
        },
        Case {
            name: "polite, equality after followers",
            p: 1.0,
            acc: acc(0.0, 0.25, 0.0, -0.125, 0.0, 0.0),
            safe: true,
            incentive: true,
        },
        Case {
            name: "polite, follower gain helps",
            p: 1.0,
            acc: acc(0.0, 0.0625, 0.0, 0.0, -1.0, 0.0),
            safe: true,
            incentive: true,
        },
        Case {
            name: "half polite, equality",
            p: 0.5,
            acc: acc(0.0, 0.25, 0.0, -0.25, 0.0, 0.0),
            safe: true,
            incentive: true,
        },
        Case {
            name: "half polite, below",
            p: 0.5,
            acc: acc(0.0, 0.25, 0.0, -0.5, 0.0, 0.0),
            safe: true,
            incentive: false,
        },
        Case {
            name: "polite and unsafe",
            p: 1.0,
            acc: acc(-2.0, 2.0, 0.0, -10.0, 0.0, 0.0),
            safe: false,
            incentive: false,
        },
        Case {
            name: "polite, old follower relieved",
            p: 1.0,
            acc: acc(0.0, 0.0, 0.0, 0.0, -4.0, 0.0),
            safe: true,
            incentive: true,
        },
    ];
    let mut wrong = Vec::new();
    for c in &cases {
        let params = MobilParams { politeness: c.p, b_safe: 9.0, threshold: 0.125 };
        let got = (mobil_safety(c.acc.new_follower_after, &params), mobil_incentive(&c.acc, &params));
        if got != (c.safe, c.incentive) {
            wrong.push(c.name);
        }
    }
    // Selfish drivers: the incentive must not depend on follower terms at all.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let selfish = MobilParams { politeness: 0.0, b_safe: 9.0, threshold: 0.125 };
    let mut p0_violations = 0;
    for c in cases.iter().filter(|c| c.p == 0.0) {
        for _ in 0..200 {
            let mut perturbed = c.acc;
            perturbed.new_follower = rng.gen_range(-1e6..1e6);
            perturbed.new_follower_after = rng.gen_range(-1e6..1e6);
            perturbed.old_follower = rng.gen_range(-1e6..1e6);
            perturbed.old_follower_after = rng.gen_range(-1e6..1e6);
            if mobil_incentive(&perturbed, &selfish) != c.incentive {
                p0_violations += 1;
            }
        }
    }
    outcome(
        wrong.is_empty() && p0_violations == 0 && cases.len() == 16,
        format!(
            "{} cases, misclassified {:?}, p=0 follower-independence violations {p0_violations}",
            cases.len(),
            wrong
        ),
    )
}

fn c3_reward_oracle() -> Outcome {
    let cfg = RewardConfig::<f64>::default();
    let checks = [
        ("r_d d=30", reward_headway(25.0, Some(30.0), &cfg), 0.0),
        ("r_d d=60", reward_headway(25.0, Some(60.0), &cfg), std::f64::consts::LN_2),
        ("r_d d=15", reward_headway(25.0, Some(15.0), &cfg), -std::f64::consts::LN_2),
        ("r_v v=25", reward_speed(25.0, &cfg), 0.5),
        ("r_v v=30", reward_speed(30.0, &cfg), 1.0),
        ("r_v v=35", reward_speed(35.0, &cfg), 1.0),
        (
            "total (0,0,0.5,0)",
            agent_reward(&RewardComponents { safety: 0.0, headway: 0.0, speed: 0.5, comfort: 0.0 }, &cfg),
            0.5,
        ),
        (
            "total (-1,0,0.5,0)",
            agent_reward(&RewardComponents { safety: -1.0, headway: 0.0, speed: 0.5, comfort: 0.0 }, &cfg),
            -199.5,
        ),
    ];
    let bad: Vec<_> = checks
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 1e-12)
        .map(|(n, g, w)| format!("{n}: {g} != {w}"))
        .collect();
    outcome(
        bad.is_empty(),
        if bad.is_empty() { format!("{} values within 1e-12", checks.len()) } else { bad.join("; ") },
    )
}

fn random_batch(rng: &mut ChaCha8Rng, n_obs: usize) -> Vec<Sample<f64>> {
    (0..rng.gen_range(1..=4))
        .map(|_| {
            let mut obs = Obs::zeros(n_obs);
            for row in &mut obs.rows {
                for x in row.iter_mut() {
                    *x = rng.gen_range(-1.0..1.0);
                }
            }
            Sample {
                obs,
                action: rng.gen_range(0..5),
                advantage: rng.gen_range(-2.0..2.0),
                ret: rng.gen_range(-3.0..3.0),
            }
        })
        .collect()
}

fn c4_gradient_check() -> Outcome {
    let start = Instant::now();
    let h = 1e-5;
    let coef = LossCoefficients::<f64>::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let draws = 100;
    for draw in 0..draws {
        let trunk = if draw % 2 == 0 { TrunkMode::Shared } else { TrunkMode::Separate };
        let arch = Architecture {
            n_obs: rng.gen_range(1..=3),
            encoder_width: rng.gen_range(2..=6),
            fusion_width: rng.gen_range(2..=6),
            trunk,
        };
        // Generic parameters: initialization zeroes the biases, which puts dead
        // units exactly on the ReLU kink where no derivative exists.
        let mut params = NetworkParams::<f64>::init(arch, rng.gen());
        let jittered: Vec<f64> = params.to_flat().iter().map(|w| w + rng.gen_range(-0.5..0.5)).collect();
        params.copy_from_flat(&jittered).unwrap();
        let batch = random_batch(&mut rng, arch.n_obs);
        let (grads, _) = params.backward(&batch, &coef).unwrap();
        let analytic = grads.to_flat();
        let flat = params.to_flat();
        let mut probe = params.clone();
        for i in 0..flat.len() {
            let mut shifted = flat.clone();
            shifted[i] = flat[i] + h;
            probe.copy_from_flat(&shifted).unwrap();
            let plus = probe.loss(&batch, &coef).unwrap().total;
            shifted[i] = flat[i] - h;
            probe.copy_from_flat(&shifted).unwrap();
            let minus = probe.loss(&batch, &coef).unwrap().total;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-6 && elapsed < Duration::from_secs(60),
        format!("{draws} draws, {checked} parameters, max relative error {worst:.3e}, {elapsed:.2?}"),
    )
}

struct Arms {
    d1: Vec<SeedResult>,
    d1_no_comfort: Vec<SeedResult>,
    d3_local: Vec<SeedResult>,
    d3_global: Vec<SeedResult>,
    d3_separate: Vec<SeedResult>,
    d1_random: Vec<(f64, f64)>,
    elapsed: Duration,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn final_return(r: &[SeedResult]) -> f64 {
    mean(r.iter().map(|s| s.final_metrics.return_mean))
}

fn train_arms() -> Result<Arms> {
    let root = tempfile::tempdir()?;
    let start = Instant::now();
    let arm = |name: &str, mode: DensityMode, f: &dyn Fn(&mut RunConfig)| -> Result<(RunConfig, Vec<SeedResult>)> {
        let mut cfg = RunConfig { density_mode: mode, output_dir: root.path().join(name), ..RunConfig::default() };
        cfg.hp.total_steps = 50_000;
        f(&mut cfg);
        let r = train_run(&cfg, false)?;
        Ok((cfg, r))
    };
    let (d1_cfg, d1) = arm("d1", DensityMode::D1, &|_| {})?;
    let (_, d1_no_comfort) = arm("d1_no_comfort", DensityMode::D1, &|c| c.env.reward.w_comfort = 0.0)?;
    let (_, d3_local) = arm("d3_local", DensityMode::D3, &|_| {})?;
    let (_, d3_global) = arm("d3_global", DensityMode::D3, &|c| c.reward_scope = RewardScope::Global)?;
    let (_, d3_separate) = arm("d3_separate", DensityMode::D3, &|c| c.trunk = TrunkMode::Separate)?;
    let env = d1_cfg.effective_env();
    let d1_random = d1_cfg
        .seeds
        .iter()
        .map(|&seed| {
            let mut policy = RandomPolicy::new(seed);
            let m = evaluate_policy(
                &mut policy,
                &env,
                DensityMode::D1,
                d1_cfg.final_eval_episodes,
                final_eval_seed(&d1_cfg, seed),
            )?;
            Ok((m.return_mean, m.collision_rate))
        })
        .collect::<Result<_>>()?;
    Ok(Arms { d1, d1_no_comfort, d3_local, d3_global, d3_separate, d1_random, elapsed: start.elapsed() })
}

fn c5_learning(a: &Arms) -> Outcome {
    let trained = final_return(&a.d1);
    let random = mean(a.d1_random.iter().map(|r| r.0));
    let trained_col = mean(a.d1.iter().map(|s| s.final_metrics.collision_rate));
    let random_col = mean(a.d1_random.iter().map(|r| r.1));
    outcome(
        trained >= 1.5 * random && trained_col < random_col && a.elapsed < Duration::from_secs(30 * 60),
        format!(
            "D1 return trained {trained:.3} vs random {random:.3} (need >= {:.3}); collision rate {trained_col:.3} vs {random_col:.3}; all arms trained in {:.1?}",
            1.5 * random,
            a.elapsed
        ),
    )
}

fn c6_comfort(a: &Arms) -> Outcome {
    let with = mean(a.d1.iter().map(|s| s.final_metrics.accel_std));
    let without = mean(a.d1_no_comfort.iter().map(|s| s.final_metrics.accel_std));
    outcome(
        with < without,
        format!("accel std with comfort {with:.4} vs without {without:.4} (ratio {:.3})", with / without),
    )
}

fn c7_local_vs_global(a: &Arms) -> Outcome {
    let local = final_return(&a.d3_local);
    let global = final_return(&a.d3_global);
    outcome(local >= global, format!("D3 final return local {local:.3} vs global {global:.3}"))
}

fn c8_shared_vs_separate(a: &Arms) -> Outcome {
    let shared = final_return(&a.d3_local);
    let separate = final_return(&a.d3_separate);
    outcome(shared >= separate, format!("D3 final return shared {shared:.3} vs separate {separate:.3}"))
}

/// Random-policy rollout with auto-reset; calls `check` with local and raw rewards.
fn random_rollout(
    env: &EnvConfig<f64>,
    steps: usize,
    mut check: impl FnMut(&BTreeMap<u32, f64>, &BTreeMap<u32, f64>),
) -> Result<()> {
    let mut policy = RandomPolicy::new(99);
    let mut episode = 0u64;
    let (mut world, mut obs) = env_reset(DensityMode::D3, episode_seed(5, episode), env)?;
    for _ in 0..steps {
        let actions = obs
            .iter()
            .map(|(&id, o)| Ok((id, Policy::<f64>::act(&mut policy, o)?)))
            .collect::<Result<BTreeMap<_, AvAction>>>()?;
        let result = env_step(&mut world, &actions, env)?;
        check(&result.rewards, &result.raw_rewards);
        if result.done {
            episode += 1;
            (world, obs) = env_reset(DensityMode::D3, episode_seed(5, episode), env)?;
        } else {
            obs = result.observations;
        }
    }
    Ok(())
}

fn c9_degeneracy() -> Outcome {
    let steps = 1000;
    let mut zero = EnvConfig::<f64>::default();
    zero.reward.neighbor_radius = 0.0;
    let mut own_mismatch = 0;
    let mut checked_zero = 0;
    random_rollout(&zero, steps, |local, raw| {
        checked_zero += local.len();
        own_mismatch += local.iter().filter(|(id, r)| raw[id].to_bits() != r.to_bits()).count();
    })
    .unwrap();
    let mut global = EnvConfig::<f64>::default();
    global.reward.neighbor_radius = global.road.length;
    let mut unequal_steps = 0;
    let mut multi_agent_steps = 0;
    random_rollout(&global, steps, |local, _| {
        let mut vals = local.values().map(|v| v.to_bits());
        if let Some(first) = vals.next() {
            if local.len() > 1 {
                multi_agent_steps += 1;
            }
            if vals.any(|v| v != first) {
                unequal_steps += 1;
            }
        }
    })
    .unwrap();
    outcome(
        own_mismatch == 0 && unequal_steps == 0 && multi_agent_steps > 0,
        format!(
            "radius 0: {own_mismatch} mismatches over {checked_zero} agent-steps; radius >= road: {unequal_steps} unequal steps ({multi_agent_steps} multi-agent steps of {steps})"
        ),
    )
}

fn c10_determinism() -> Outcome {
    let run = || -> Result<(Vec<u8>, Vec<u8>)> {
        let dir = tempfile::tempdir()?;
        let mut cfg = RunConfig {
            density_mode: DensityMode::D2,
            seeds: vec![3],
            output_dir: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        cfg.hp.total_steps = 6000;
        cfg.hp.eval_every = 10;
        cfg.final_eval_episodes = 3;
        train_run(&cfg, false)?;
        let seed_dir = cfg.seed_dir(3);
        Ok((std::fs::read(seed_dir.join("metrics.csv"))?, std::fs::read(seed_dir.join("last.ckpt"))?))
    };
    let (a, b) = (run().unwrap(), run().unwrap());
    let rows = a.0.iter().filter(|&&c| c == b'\n').count().saturating_sub(1);
    outcome(
        a == b && rows > 1,
        format!("metrics ({rows} rows, {} bytes) and checkpoint byte-identical: {}", a.0.len(), a == b),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("C1 IDM equilibrium", c1_idm_equilibrium()),
        ("C2 MOBIL truth table", c2_mobil_truth_table()),
        ("C3 reward oracle", c3_reward_oracle()),
        ("C4 gradient check", c4_gradient_check()),
    ];
    let arms = train_arms().expect("acceptance training runs");
    results.push(("C5 learning vs random", c5_learning(&arms)));
    results.push(("C6 comfort ablation", c6_comfort(&arms)));
    results.push(("C7 local vs global reward", c7_local_vs_global(&arms)));
    results.push(("C8 shared vs separate trunk", c8_shared_vs_separate(&arms)));
    results.push(("C9 reward degeneracy", c9_degeneracy()));
    results.push(("C10 determinism", c10_determinism()));

    println!();
    for (name, o) in &results {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
