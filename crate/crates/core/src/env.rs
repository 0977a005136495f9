//! The multi-agent highway environment: observations, the five discrete
//! actions, the multi-objective reward and the synchronized step.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdv::{hdv_decide, IdmParams, MobilParams};
use crate::scalar::Scalar;
use crate::traffic::{
    spawn_world, Command, DensityMode, LaneDecision, RoadConfig, SpawnConfig, VehicleId, VehicleKind, WorldState,
};

pub const NUM_ACTIONS: usize = 5;
pub const NUM_FEATURES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AvAction {
    Slower = 0,
    Idle = 1,
    Faster = 2,
    LaneLeft = 3,
    LaneRight = 4,
}

impl AvAction {
    pub const ALL: [AvAction; NUM_ACTIONS] =
        [AvAction::Slower, AvAction::Idle, AvAction::Faster, AvAction::LaneLeft, AvAction::LaneRight];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AvAction::Slower => "SLOWER",
            AvAction::Idle => "IDLE",
            AvAction::Faster => "FASTER",
            AvAction::LaneLeft => "LANE_LEFT",
            AvAction::LaneRight => "LANE_RIGHT",
        }
    }
}

impl fmt::Display for AvAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-agent observation: `n_obs` rows of `(x, y, vx, vy)` features.
///
/// Row 0 holds the ego's absolute normalized state, the remaining rows the
/// nearest vehicles relative to the ego. Missing vehicles are zero rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation<T> {
    pub rows: Vec<[T; NUM_FEATURES]>,
}

impl<T: Scalar> Observation<T> {
    pub fn zeros(n_obs: usize) -> Self {
        Self { rows: vec![[T::zero(); NUM_FEATURES]; n_obs] }
    }

    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    /// Column pair `(c0, c1)` of every row, flattened row-major.
    pub fn columns(&self, c0: usize, c1: usize) -> Vec<T> {
        self.rows.iter().flat_map(|r| [r[c0], r[c1]]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardConfig<T> {
    pub w_safety: T,
    pub w_headway: T,
    pub w_speed: T,
    pub w_comfort: T,
    /// Time-headway threshold `t_d`, s.
    pub headway_time: T,
    /// Comfort acceleration threshold, m/s².
    pub comfort_accel: T,
    pub v_min: T,
    pub v_max: T,
    /// Radius of the local-reward neighborhood, m.
    pub neighbor_radius: T,
}

impl<T: Scalar> Default for RewardConfig<T> {
    fn default() -> Self {
        Self {
            w_safety: T::lit(200.0),
            w_headway: T::lit(4.0),
            w_speed: T::lit(1.0),
            w_comfort: T::lit(1.0),
            headway_time: T::lit(1.2),
            comfort_accel: T::lit(3.0),
            v_min: T::lit(20.0),
            v_max: T::lit(30.0),
            neighbor_radius: T::lit(60.0),
        }
    }
}

impl<T: Scalar> RewardConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.w_safety, self.w_headway, self.w_speed, self.w_comfort];
        if !weights.iter().all(|w| *w >= T::zero()) {
            return Err(Error::InvalidConfig("reward weights must be nonnegative".into()));
        }
        if !(self.headway_time > T::zero()) {
            return Err(Error::InvalidConfig("headway_time must be positive".into()));
        }
        if !(self.v_min < self.v_max) {
            return Err(Error::InvalidConfig("v_min must be below v_max".into()));
        }
        Ok(())
    }
}

/// Everything that parameterizes one environment instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvConfig<T> {
    pub road: RoadConfig<T>,
    pub spawn: SpawnConfig<T>,
    pub idm: IdmParams<T>,
    pub mobil: MobilParams<T>,
    pub reward: RewardConfig<T>,
    pub n_obs: usize,
    pub obs_range: T,
    /// Episode length limit in control steps.
    pub horizon: u64,
    /// Target-speed change per FASTER/SLOWER action, m/s.
    pub speed_step: T,
    /// Proportional speed-tracking gain, 1/s.
    pub speed_gain: T,
    pub av_accel_min: T,
    pub av_accel_max: T,
}

impl<T: Scalar> Default for EnvConfig<T> {
    fn default() -> Self {
        Self {
            road: RoadConfig::default(),
            spawn: SpawnConfig::default(),
            idm: IdmParams::default(),
            mobil: MobilParams::default(),
            reward: RewardConfig::default(),
            n_obs: 5,
            obs_range: T::lit(100.0),
            horizon: 100,
            speed_step: T::lit(2.5),
            speed_gain: T::lit(2.0),
            av_accel_min: T::lit(-5.0),
            av_accel_max: T::lit(3.0),
        }
    }
}

impl<T: Scalar> EnvConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.road.validate()?;
        self.idm.validate()?;
        self.mobil.validate()?;
        self.reward.validate()?;
        if self.n_obs == 0 {
            return Err(Error::InvalidConfig("n_obs must be at least 1".into()));
        }
        if !(self.obs_range > T::zero()) {
            return Err(Error::InvalidConfig("obs_range must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least one step".into()));
        }
        Ok(())
    }
}

/// The four reward terms before weighting. `comfort` is `<= 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents<T> {
    pub safety: T,
    pub headway: T,
    pub speed: T,
    pub comfort: T,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepInfo<T> {
    pub collisions: Vec<(VehicleId, VehicleId)>,
    /// True when at least one collision pair involves an AV.
    pub av_collision: bool,
    pub speeds: BTreeMap<VehicleId, T>,
    pub accelerations: BTreeMap<VehicleId, T>,
    pub components: BTreeMap<VehicleId, RewardComponents<T>>,
    /// AVs that started a lane change this step.
    pub lane_changes: Vec<VehicleId>,
    /// AVs that left the road this step; they receive no further reward.
    pub exited: Vec<VehicleId>,
    pub actions: BTreeMap<VehicleId, AvAction>,
    pub hdv_decisions: BTreeMap<VehicleId, LaneDecision>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult<T> {
    pub observations: BTreeMap<VehicleId, Observation<T>>,
    /// Local (neighborhood-averaged) rewards.
    pub rewards: BTreeMap<VehicleId, T>,
    pub raw_rewards: BTreeMap<VehicleId, T>,
    pub done: bool,
    pub info: StepInfo<T>,
}

pub fn build_observation<T: Scalar>(
    world: &WorldState<T>,
    agent: VehicleId,
    n_obs: usize,
    obs_range: T,
) -> Result<Observation<T>> {
    let ego = world.vehicle(agent)?;
    if ego.kind != VehicleKind::Av {
        return Err(Error::Contract(format!("vehicle {agent} is not an agent")));
    }
    let road = &world.road;
    let width = road.total_width();
    let vmax = road.speed_max;
    let clip = |x: T| x.clamp_to(-T::one(), T::one());

    let mut obs = Observation::zeros(n_obs);
    if n_obs == 0 {
        return Ok(obs);
    }
    obs.rows[0] = [clip(ego.x / road.length), clip(ego.y / width), clip(ego.v / vmax), clip(ego.vy / vmax)];
    let near = world.neighbors(agent, obs_range)?;
    for (row, id) in obs.rows.iter_mut().skip(1).zip(near) {
        let other = world.vehicle(id)?;
        *row = [
            clip((other.x - ego.x) / obs_range),
            clip((other.y - ego.y) / width),
            clip((other.v - ego.v) / vmax),
            clip((other.vy - ego.vy) / vmax),
        ];
    }
    Ok(obs)
}

pub fn reward_safety<T: Scalar>(collisions: &[(VehicleId, VehicleId)], agent: VehicleId) -> T {
    if collisions.iter().any(|&(a, b)| a == agent || b == agent) {
        -T::one()
    } else {
        T::zero()
    }
}

/// Log headway ratio clamped to `[-2, 2]`; zero without a leader.
pub fn reward_headway<T: Scalar>(v_t: T, headway: Option<T>, cfg: &RewardConfig<T>) -> T {
    let bound = T::lit(2.0);
    match headway {
        None => T::zero(),
        Some(d) if !(d > T::zero()) => -bound,
        Some(_) if !(v_t > T::zero()) => bound,
        Some(d) => (d / (v_t * cfg.headway_time)).ln().clamp_to(-bound, bound),
    }
}

/// Linear speed score, capped at 1 and floored at -1.
pub fn reward_speed<T: Scalar>(v_t: T, cfg: &RewardConfig<T>) -> T {
    ((v_t - cfg.v_min) / (cfg.v_max - cfg.v_min)).min(T::one()).max(-T::one())
}

/// Comfort term in `{0, -1, -2}`: hard acceleration and lane-change initiation.
pub fn reward_comfort<T: Scalar>(a_t: T, changed_lane: bool, cfg: &RewardConfig<T>) -> T {
    let mut r = T::zero();
    if a_t.abs() >= cfg.comfort_accel {
        r -= T::one();
    }
    if changed_lane {
        r -= T::one();
    }
    r
}

/// Weighted total. The comfort term always lowers the reward.
pub fn agent_reward<T: Scalar>(c: &RewardComponents<T>, cfg: &RewardConfig<T>) -> T {
    cfg.w_safety * c.safety + cfg.w_headway * c.headway + cfg.w_speed * c.speed - cfg.w_comfort * c.comfort.abs()
}

/// Mean raw reward over `agent` and the AVs within `radius` of it.
///
/// Members are summed in id order so that agents sharing a neighborhood get
/// bit-identical values.
pub fn local_reward<T: Scalar>(
    agent: VehicleId,
    raw_rewards: &BTreeMap<VehicleId, T>,
    world: &WorldState<T>,
    radius: T,
) -> Result<T> {
    let own = *raw_rewards.get(&agent).ok_or_else(|| Error::Contract(format!("no raw reward for agent {agent}")))?;
    let mut members: BTreeSet<VehicleId> =
        world.neighbors(agent, radius)?.into_iter().filter(|id| raw_rewards.contains_key(id)).collect();
    members.insert(agent);
    if members.len() == 1 {
        return Ok(own);
    }
    let sum: T = members.iter().map(|id| raw_rewards[id]).sum();
    Ok(sum / T::from_usize_lossy(members.len()))
}

/// Per-agent observations keyed by vehicle id.
pub type Observations<T> = BTreeMap<VehicleId, Observation<T>>;

/// Spawns a new episode and returns the initial observation of every agent.
pub fn env_reset<T: Scalar>(
    mode: DensityMode,
    seed: u64,
    cfg: &EnvConfig<T>,
) -> Result<(WorldState<T>, Observations<T>)> {
    cfg.validate()?;
    let world = spawn_world(mode, seed, cfg.road, &cfg.spawn)?;
    let obs = observe_all(&world, cfg)?;
    Ok((world, obs))
}

pub fn observe_all<T: Scalar>(
    world: &WorldState<T>,
    cfg: &EnvConfig<T>,
) -> Result<BTreeMap<VehicleId, Observation<T>>> {
    world
        .ids_of(VehicleKind::Av)
        .into_iter()
        .map(|id| Ok((id, build_observation(world, id, cfg.n_obs, cfg.obs_range)?)))
        .collect()
}

/// Executes one joint action. `actions` must be keyed by exactly the live AVs.
pub fn env_step<T: Scalar>(
    world: &mut WorldState<T>,
    actions: &BTreeMap<VehicleId, AvAction>,
    cfg: &EnvConfig<T>,
) -> Result<StepResult<T>> {
    let agents = world.ids_of(VehicleKind::Av);
    if !actions.keys().copied().eq(agents.iter().copied()) {
        return Err(Error::Contract(format!(
            "action keys {:?} do not match live agents {:?}",
            actions.keys().collect::<Vec<_>>(),
            agents
        )));
    }

    let mut info = StepInfo { actions: actions.clone(), ..StepInfo::default() };
    let mut commands = BTreeMap::new();
    for veh in &world.vehicles {
        let command = match veh.kind {
            VehicleKind::Hdv => {
                let (a, d) = hdv_decide(world, veh.id, &cfg.idm, &cfg.mobil)?;
                info.hdv_decisions.insert(veh.id, d);
                Command { acceleration: a, lane_decision: d }
            }
            VehicleKind::Av => {
                let action = actions[&veh.id];
                let mut target = veh.desired_speed;
                let mut decision = LaneDecision::Keep;
                match action {
                    AvAction::Faster => target += cfg.speed_step,
                    AvAction::Slower => target -= cfg.speed_step,
                    AvAction::Idle => {}
                    AvAction::LaneLeft => decision = LaneDecision::Left,
                    AvAction::LaneRight => decision = LaneDecision::Right,
                }
                if veh.is_changing_lane() || world.road.adjacent_lane(veh.lane, decision).is_none() {
                    decision = LaneDecision::Keep;
                }
                let target = target.clamp_to(cfg.reward.v_min, cfg.reward.v_max);
                let a = (cfg.speed_gain * (target - veh.v)).clamp_to(cfg.av_accel_min, cfg.av_accel_max);
                commands.insert(veh.id, (target, a, decision));
                continue;
            }
        };
        commands.insert(veh.id, (veh.desired_speed, command.acceleration, command.lane_decision));
    }
    for veh in world.vehicles.iter_mut().filter(|v| v.kind == VehicleKind::Av) {
        veh.desired_speed = commands[&veh.id].0;
    }
    let commands: BTreeMap<VehicleId, Command<T>> =
        commands.into_iter().map(|(id, (_, a, d))| (id, Command { acceleration: a, lane_decision: d })).collect();

    let report = world.advance(&commands)?;
    let agent_set: BTreeSet<VehicleId> = agents.iter().copied().collect();
    info.lane_changes = report.lane_changes_started.iter().copied().filter(|id| agent_set.contains(id)).collect();
    info.exited = report.exited.iter().copied().filter(|id| agent_set.contains(id)).collect();

    info.collisions = world.detect_collisions();
    let is_av = |id: VehicleId| world.vehicle(id).map(|v| v.kind == VehicleKind::Av).unwrap_or(false);
    info.av_collision = info.collisions.iter().any(|&(a, b)| is_av(a) || is_av(b));

    let live = world.ids_of(VehicleKind::Av);
    let mut raw_rewards = BTreeMap::new();
    for &id in &live {
        let veh = world.vehicle(id)?;
        let headway = world.leader(id, veh.lane)?.map(|l| l.gap);
        let components = RewardComponents {
            safety: reward_safety(&info.collisions, id),
            headway: reward_headway(veh.v, headway, &cfg.reward),
            speed: reward_speed(veh.v, &cfg.reward),
            comfort: reward_comfort(veh.a, info.lane_changes.contains(&id), &cfg.reward),
        };
        raw_rewards.insert(id, agent_reward(&components, &cfg.reward));
        info.components.insert(id, components);
        info.speeds.insert(id, veh.v);
        info.accelerations.insert(id, veh.a);
    }

    let mut rewards = BTreeMap::new();
    for &id in &live {
        rewards.insert(id, local_reward(id, &raw_rewards, world, cfg.reward.neighbor_radius)?);
    }

    let all_exited = !agents.is_empty() && live.is_empty();
    let done = !info.collisions.is_empty() || all_exited || world.step_count >= cfg.horizon;
    let observations = observe_all(world, cfg)?;

    Ok(StepResult { observations, rewards, raw_rewards, done, info })
}

impl FromStr for AvAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AvAction::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown action '{s}'")))
    }
}
