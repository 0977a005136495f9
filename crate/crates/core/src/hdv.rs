//! Human-driven vehicles: IDM car following and the MOBIL lane-change rule.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::traffic::{LaneDecision, VehicleId, VehicleKind, VehicleState, WorldState};

/// Hard braking floor shared by IDM output and the MOBIL safety bound, m/s².
pub const MAX_BRAKING: f64 = 9.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdmParams<T> {
    /// Desired speed `v0`, m/s. Overridden per HDV by its spawn-time desired speed.
    pub desired_speed: T,
    /// Desired time headway `T`, s.
    pub time_headway: T,
    pub max_accel: T,
    pub comfort_decel: T,
    /// Acceleration exponent `delta`.
    pub exponent: T,
    /// Standstill gap `s0`, m.
    pub min_gap: T,
}

impl<T: Scalar> Default for IdmParams<T> {
    fn default() -> Self {
        Self {
            desired_speed: T::lit(30.0),
            time_headway: T::lit(1.5),
            max_accel: T::lit(3.0),
            comfort_decel: T::lit(5.0),
            exponent: T::lit(4.0),
            min_gap: T::lit(10.0),
        }
    }
}

impl<T: Scalar> IdmParams<T> {
    pub fn validate(&self) -> Result<()> {
        let all =
            [self.desired_speed, self.time_headway, self.max_accel, self.comfort_decel, self.exponent, self.min_gap];
        if all.iter().all(|p| *p > T::zero()) {
            Ok(())
        } else {
            Err(Error::InvalidConfig("IDM parameters must be strictly positive".into()))
        }
    }

    /// Desired dynamic gap `s*` for speed `v` closing at `dv`.
    pub fn desired_gap(&self, v: T, dv: T) -> T {
        self.min_gap + v * self.time_headway + v * dv / (T::lit(2.0) * (self.max_accel * self.comfort_decel).sqrt())
    }

    /// Steady-state gap behind a leader at constant speed `v`: the gap at which
    /// the IDM acceleration vanishes.
    pub fn equilibrium_gap(&self, v: T) -> T {
        let free = T::one() - (v / self.desired_speed).powf(self.exponent);
        self.desired_gap(v, T::zero()) / free.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MobilParams<T> {
    /// Politeness `p` in `[0, 1]`.
    pub politeness: T,
    /// Maximum braking magnitude the new follower may be forced into, m/s².
    pub b_safe: T,
    /// Incentive threshold, m/s².
    pub threshold: T,
}

impl<T: Scalar> Default for MobilParams<T> {
    fn default() -> Self {
        Self { politeness: T::zero(), b_safe: T::lit(9.0), threshold: T::lit(0.1) }
    }
}

impl<T: Scalar> MobilParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.politeness >= T::zero() && self.politeness <= T::one()) {
            return Err(Error::InvalidConfig("politeness must lie in [0, 1]".into()));
        }
        if !(self.b_safe > T::zero()) {
            return Err(Error::InvalidConfig("b_safe must be positive".into()));
        }
        if !(self.threshold >= T::zero()) {
            return Err(Error::InvalidConfig("lane-change threshold must be nonnegative".into()));
        }
        Ok(())
    }
}

/// IDM acceleration plus a flag raised when the gap was already non-positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdmOutput<T> {
    pub acceleration: T,
    pub emergency: bool,
}

/// Evaluates the IDM. `leader` is `(gap, leader speed)` with a bumper-to-bumper gap.
pub fn idm_evaluate<T: Scalar>(v: T, leader: Option<(T, T)>, params: &IdmParams<T>) -> IdmOutput<T> {
    let floor = -T::lit(MAX_BRAKING);
    match idm_unclamped(v, leader, params) {
        Some(a) => IdmOutput { acceleration: a.clamp_to(floor, params.max_accel), emergency: false },
        None => IdmOutput { acceleration: floor, emergency: true },
    }
}

/// The IDM formula without the braking floor; `None` for a non-positive gap.
/// MOBIL uses this so that braking demands beyond the floor stay visible.
pub fn idm_unclamped<T: Scalar>(v: T, leader: Option<(T, T)>, params: &IdmParams<T>) -> Option<T> {
    let free = T::one() - (v / params.desired_speed).powf(params.exponent);
    let interaction = match leader {
        None => T::zero(),
        Some((gap, _)) if !(gap > T::zero()) => return None,
        Some((gap, v_leader)) => {
            let s_star = params.desired_gap(v, v - v_leader).max(T::zero());
            let ratio = s_star / gap;
            ratio * ratio
        }
    };
    Some(params.max_accel * (free - interaction))
}

pub fn idm_acceleration<T: Scalar>(v: T, leader: Option<(T, T)>, params: &IdmParams<T>) -> T {
    idm_evaluate(v, leader, params).acceleration
}

/// Safety criterion: the new follower's braking stays within `b_safe` (inclusive).
pub fn mobil_safety<T: Scalar>(new_follower_accel_after: T, params: &MobilParams<T>) -> bool {
    new_follower_accel_after >= -params.b_safe
}

/// Accelerations before and after a hypothetical lane change.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MobilAccelerations<T> {
    pub ego: T,
    pub ego_after: T,
    pub new_follower: T,
    pub new_follower_after: T,
    pub old_follower: T,
    pub old_follower_after: T,
}

impl<T: Scalar> MobilAccelerations<T> {
    pub fn ego_gain(&self) -> T {
        self.ego_after - self.ego
    }
}

/// Incentive criterion (inclusive threshold).
pub fn mobil_incentive<T: Scalar>(acc: &MobilAccelerations<T>, params: &MobilParams<T>) -> bool {
    let followers = (acc.new_follower_after - acc.new_follower) + (acc.old_follower_after - acc.old_follower);
    acc.ego_gain() + params.politeness * followers >= params.threshold
}

fn leader_excluding<'a, T: Scalar>(
    world: &'a WorldState<T>,
    of: &VehicleState<T>,
    lane: usize,
    excluded: VehicleId,
) -> Option<&'a VehicleState<T>> {
    world
        .vehicles
        .iter()
        .filter(|v| v.id != of.id && v.id != excluded && v.occupies(lane) && v.x > of.x)
        .min_by(|a, b| a.x.partial_cmp(&b.x).expect("finite positions").then(a.id.cmp(&b.id)))
}

fn gap_between<T: Scalar>(follower: &VehicleState<T>, leader: &VehicleState<T>) -> T {
    leader.x - follower.x - (leader.length + follower.length) * T::lit(0.5)
}

fn follow<T: Scalar>(follower: &VehicleState<T>, leader: Option<&VehicleState<T>>, idm: &IdmParams<T>) -> T {
    let params = idm_for(follower, idm);
    idm_acceleration(follower.v, leader.map(|l| (gap_between(follower, l), l.v)), &params)
}

fn follow_unclamped<T: Scalar>(follower: &VehicleState<T>, leader: Option<&VehicleState<T>>, idm: &IdmParams<T>) -> T {
    let params = idm_for(follower, idm);
    idm_unclamped(follower.v, leader.map(|l| (gap_between(follower, l), l.v)), &params).unwrap_or(-T::lit(MAX_BRAKING))
}

fn idm_for<T: Scalar>(vehicle: &VehicleState<T>, idm: &IdmParams<T>) -> IdmParams<T> {
    match vehicle.kind {
        VehicleKind::Hdv => IdmParams { desired_speed: vehicle.desired_speed, ..*idm },
        VehicleKind::Av => *idm,
    }
}

fn leader_in<'a, T: Scalar>(
    world: &'a WorldState<T>,
    of: &VehicleState<T>,
    lane: usize,
) -> Option<&'a VehicleState<T>> {
    world.leader_of(of, lane).and_then(|l| world.vehicle(l.id).ok())
}

/// MOBIL accelerations for moving `ego` into `target`, or `None` when the target
/// lane is physically blocked alongside the ego. Values are unclamped IDM outputs.
pub fn mobil_accelerations<T: Scalar>(
    world: &WorldState<T>,
    ego: &VehicleState<T>,
    target: usize,
    idm: &IdmParams<T>,
) -> Option<MobilAccelerations<T>> {
    let blocked = world
        .vehicles
        .iter()
        .any(|v| v.id != ego.id && v.occupies(target) && (v.x - ego.x).abs() < (v.length + ego.length) * T::lit(0.5));
    if blocked {
        return None;
    }

    let mut acc = MobilAccelerations {
        ego: follow_unclamped(ego, leader_in(world, ego, ego.lane), idm),
        ego_after: follow_unclamped(ego, leader_in(world, ego, target), idm),
        ..MobilAccelerations::default()
    };

    if let Some(n) = world.follower_of(ego, target) {
        acc.new_follower = follow_unclamped(n, leader_in(world, n, target), idm);
        acc.new_follower_after = follow_unclamped(n, Some(ego), idm);
    }
    if let Some(o) = world.follower_of(ego, ego.lane) {
        acc.old_follower = follow_unclamped(o, leader_in(world, o, ego.lane), idm);
        acc.old_follower_after = follow_unclamped(o, leader_excluding(world, o, ego.lane, ego.id), idm);
    }
    Some(acc)
}

/// Longitudinal acceleration and lane decision for one HDV, computed from the
/// current snapshot of `world`.
pub fn hdv_decide<T: Scalar>(
    world: &WorldState<T>,
    id: VehicleId,
    idm: &IdmParams<T>,
    mobil: &MobilParams<T>,
) -> Result<(T, LaneDecision)> {
    let ego = world.vehicle(id)?;
    if ego.kind != VehicleKind::Hdv {
        return Err(Error::NotHdv(id));
    }

    if ego.is_changing_lane() {
        let a = follow(ego, leader_in(world, ego, ego.target_lane), idm);
        return Ok((a, LaneDecision::Keep));
    }

    let keep_accel = follow(ego, leader_in(world, ego, ego.lane), idm);
    let mut best: Option<(T, LaneDecision)> = None;
    for decision in [LaneDecision::Left, LaneDecision::Right] {
        let Some(target) = world.road.adjacent_lane(ego.lane, decision) else {
            continue;
        };
        let Some(acc) = mobil_accelerations(world, ego, target, idm) else {
            continue;
        };
        let has_new_follower = world.follower_of(ego, target).is_some();
        let safe = !has_new_follower || mobil_safety(acc.new_follower_after, mobil);
        if safe && mobil_incentive(&acc, mobil) {
            let gain = acc.ego_gain();
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, decision));
            }
        }
    }

    Ok((keep_accel, best.map_or(LaneDecision::Keep, |(_, d)| d)))
}
