//! Road geometry, vehicle kinematics, spawning, neighbor queries and collision
//! detection.
//!
//! Lane 0 is the leftmost lane; a `Left` decision decreases the lane index.
//! Lane `i` is centered at `y = (i + 0.5) * lane_width`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type VehicleId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VehicleKind {
    #[serde(rename = "AV")]
    Av,
    #[serde(rename = "HDV")]
    Hdv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LaneDecision {
    Keep,
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Command<T> {
    pub acceleration: T,
    pub lane_decision: LaneDecision,
}

impl<T: Scalar> Command<T> {
    pub fn keep(acceleration: T) -> Self {
        Self { acceleration, lane_decision: LaneDecision::Keep }
    }
}

/// Traffic density mode: ranges of AV and HDV counts drawn at spawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DensityMode {
    D1,
    D2,
    D3,
}

impl DensityMode {
    /// Inclusive `(min, max)` count range, identical for AVs and HDVs.
    pub fn count_range(self) -> (usize, usize) {
        match self {
            DensityMode::D1 => (1, 3),
            DensityMode::D2 => (2, 4),
            DensityMode::D3 => (4, 6),
        }
    }
}

impl fmt::Display for DensityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DensityMode::D1 => "D1",
            DensityMode::D2 => "D2",
            DensityMode::D3 => "D3",
        };
        f.write_str(s)
    }
}

impl FromStr for DensityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "D1" | "1" => Ok(DensityMode::D1),
            "D2" | "2" => Ok(DensityMode::D2),
            "D3" | "3" => Ok(DensityMode::D3),
            other => Err(Error::InvalidConfig(format!("unknown density mode '{other}' (expected D1, D2 or D3)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoadConfig<T> {
    pub length: T,
    pub lane_count: usize,
    pub lane_width: T,
    pub speed_min: T,
    pub speed_max: T,
}

impl<T: Scalar> Default for RoadConfig<T> {
    fn default() -> Self {
        Self {
            length: T::lit(520.0),
            lane_count: 2,
            lane_width: T::lit(4.0),
            speed_min: T::lit(20.0),
            speed_max: T::lit(30.0),
        }
    }
}

impl<T: Scalar> RoadConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.length > T::zero()) {
            return Err(Error::InvalidConfig("road length must be positive".into()));
        }
        if self.lane_count < 2 {
            return Err(Error::InvalidConfig("road needs at least two lanes".into()));
        }
        if !(self.lane_width > T::zero()) {
            return Err(Error::InvalidConfig("lane width must be positive".into()));
        }
        if !(self.speed_min < self.speed_max) {
            return Err(Error::InvalidConfig("speed_min must be below speed_max".into()));
        }
        Ok(())
    }

    pub fn lane_center(&self, lane: usize) -> T {
        (T::from_usize_lossy(lane) + T::lit(0.5)) * self.lane_width
    }

    /// Total lateral extent of the carriageway.
    pub fn total_width(&self) -> T {
        T::from_usize_lossy(self.lane_count) * self.lane_width
    }

    /// Lane reached by `decision` from `lane`, if it exists.
    pub fn adjacent_lane(&self, lane: usize, decision: LaneDecision) -> Option<usize> {
        match decision {
            LaneDecision::Keep => None,
            LaneDecision::Left => lane.checked_sub(1),
            LaneDecision::Right => (lane + 1 < self.lane_count).then_some(lane + 1),
        }
    }
}

/// Parameters of the random initial placement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpawnConfig<T> {
    /// Vehicles are placed in `[0, zone_length]`.
    pub zone_length: T,
    /// Minimum bumper-to-bumper gap between same-lane vehicles.
    pub min_gap: T,
    /// Uniform jitter applied around each slot center.
    pub jitter: T,
    pub speed_low: T,
    pub speed_high: T,
    pub hdv_desired_speed_low: T,
    pub hdv_desired_speed_high: T,
    pub vehicle_length: T,
    pub vehicle_width: T,
}

impl<T: Scalar> Default for SpawnConfig<T> {
    fn default() -> Self {
        Self {
            zone_length: T::lit(250.0),
            min_gap: T::lit(15.0),
            jitter: T::lit(2.5),
            speed_low: T::lit(25.0),
            speed_high: T::lit(30.0),
            hdv_desired_speed_low: T::lit(25.0),
            hdv_desired_speed_high: T::lit(30.0),
            vehicle_length: T::lit(5.0),
            vehicle_width: T::lit(2.0),
        }
    }
}

impl<T: Scalar> SpawnConfig<T> {
    fn slot_spacing(&self) -> T {
        self.vehicle_length + self.min_gap + self.jitter + self.jitter
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleState<T> {
    pub id: VehicleId,
    pub kind: VehicleKind,
    pub lane: usize,
    pub target_lane: usize,
    pub x: T,
    pub y: T,
    pub v: T,
    /// Lateral speed, nonzero only during a lane change.
    pub vy: T,
    pub a: T,
    /// 1 when not changing lanes.
    pub lane_change_progress: T,
    pub length: T,
    pub width: T,
    /// IDM desired speed for HDVs, cruise target for AVs.
    pub desired_speed: T,
}

impl<T: Scalar> VehicleState<T> {
    pub fn is_changing_lane(&self) -> bool {
        self.lane_change_progress < T::one()
    }

    /// True when the vehicle is in `lane` or moving into it.
    pub fn occupies(&self, lane: usize) -> bool {
        self.lane == lane || self.target_lane == lane
    }
}

/// Bumper-to-bumper relation to the nearest vehicle ahead.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeaderInfo<T> {
    pub id: VehicleId,
    pub gap: T,
    /// `v_ego - v_leader`.
    pub speed_delta: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState<T> {
    pub step_count: u64,
    pub dt: T,
    pub lane_change_duration: T,
    pub road: RoadConfig<T>,
    pub vehicles: Vec<VehicleState<T>>,
    pub rng: ChaCha8Rng,
}

/// Side effects of one [`WorldState::advance`] call.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdvanceReport {
    /// Vehicles that started a lane change during this step.
    pub lane_changes_started: Vec<VehicleId>,
    /// Vehicles removed after passing the end of the road.
    pub exited: Vec<VehicleId>,
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, low: T, high: T) -> T {
    let u: f64 = rng.gen();
    low + (high - low) * T::lit(u)
}

/// Spawns a fresh world for `mode`. The same `(mode, seed, road, spawn)` always
/// yields the same world.
pub fn spawn_world<T: Scalar>(
    mode: DensityMode,
    seed: u64,
    road: RoadConfig<T>,
    spawn: &SpawnConfig<T>,
) -> Result<WorldState<T>> {
    road.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = mode.count_range();
    let n_av = rng.gen_range(lo..=hi);
    let n_hdv = rng.gen_range(lo..=hi);
    let needed = n_av + n_hdv;

    let spacing = spawn.slot_spacing();
    let zone = spawn.zone_length.min(road.length);
    let per_lane = (zone / spacing).floor().to_usize().unwrap_or(0);
    let available = per_lane * road.lane_count;
    if needed > available {
        return Err(Error::Spawn { needed, available });
    }

    let mut slots: Vec<(usize, usize)> =
        (0..road.lane_count).flat_map(|lane| (0..per_lane).map(move |k| (lane, k))).collect();
    slots.shuffle(&mut rng);
    let mut kinds: Vec<VehicleKind> =
        std::iter::repeat_n(VehicleKind::Av, n_av).chain(std::iter::repeat_n(VehicleKind::Hdv, n_hdv)).collect();
    kinds.shuffle(&mut rng);

    let mut vehicles = Vec::with_capacity(needed);
    for (idx, (&(lane, k), kind)) in slots.iter().zip(kinds).enumerate() {
        let center = (T::from_usize_lossy(k) + T::lit(0.5)) * spacing;
        let x = center + uniform(&mut rng, -spawn.jitter, spawn.jitter);
        let v = uniform(&mut rng, spawn.speed_low, spawn.speed_high);
        let desired_speed = match kind {
            VehicleKind::Hdv => uniform(&mut rng, spawn.hdv_desired_speed_low, spawn.hdv_desired_speed_high),
            VehicleKind::Av => v,
        };
        vehicles.push(VehicleState {
            id: idx as VehicleId,
            kind,
            lane,
            target_lane: lane,
            x,
            y: road.lane_center(lane),
            v,
            vy: T::zero(),
            a: T::zero(),
            lane_change_progress: T::one(),
            length: spawn.vehicle_length,
            width: spawn.vehicle_width,
            desired_speed,
        });
    }
    vehicles.sort_by_key(|v| v.id);

    Ok(WorldState { step_count: 0, dt: T::lit(0.2), lane_change_duration: T::lit(1.0), road, vehicles, rng })
}

impl<T: Scalar> WorldState<T> {
    /// An empty world, mostly useful for hand-built scenarios.
    pub fn empty(road: RoadConfig<T>, seed: u64) -> Self {
        Self {
            step_count: 0,
            dt: T::lit(0.2),
            lane_change_duration: T::lit(1.0),
            road,
            vehicles: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Adds a vehicle centered in `lane` with default footprint. Returns its id.
    pub fn insert_vehicle(&mut self, kind: VehicleKind, lane: usize, x: T, v: T) -> VehicleId {
        let id = self.vehicles.iter().map(|v| v.id + 1).max().unwrap_or(0);
        self.vehicles.push(VehicleState {
            id,
            kind,
            lane,
            target_lane: lane,
            x,
            y: self.road.lane_center(lane),
            v,
            vy: T::zero(),
            a: T::zero(),
            lane_change_progress: T::one(),
            length: T::lit(5.0),
            width: T::lit(2.0),
            desired_speed: v,
        });
        id
    }

    pub fn vehicle(&self, id: VehicleId) -> Result<&VehicleState<T>> {
        self.vehicles.iter().find(|v| v.id == id).ok_or(Error::UnknownVehicle(id))
    }

    pub fn vehicle_mut(&mut self, id: VehicleId) -> Result<&mut VehicleState<T>> {
        self.vehicles.iter_mut().find(|v| v.id == id).ok_or(Error::UnknownVehicle(id))
    }

    /// Ids of vehicles of `kind`, ascending.
    pub fn ids_of(&self, kind: VehicleKind) -> Vec<VehicleId> {
        let mut ids: Vec<_> = self.vehicles.iter().filter(|v| v.kind == kind).map(|v| v.id).collect();
        ids.sort_unstable();
        ids
    }

    /// Advances every vehicle by one control step with semi-implicit Euler.
    ///
    /// Every vehicle must have a command. Lane decisions toward a missing lane,
    /// or issued mid-transition, are treated as `Keep`.
    pub fn advance(&mut self, commands: &BTreeMap<VehicleId, Command<T>>) -> Result<AdvanceReport> {
        for v in &self.vehicles {
            match commands.get(&v.id) {
                Some(c) if c.acceleration.is_finite() => {}
                Some(_) => return Err(Error::Contract(format!("non-finite acceleration for vehicle {}", v.id))),
                None => return Err(Error::Contract(format!("no command for vehicle {}", v.id))),
            }
        }

        let dt = self.dt;
        let duration = self.lane_change_duration;
        let road = self.road;
        let mut report = AdvanceReport::default();

        for veh in &mut self.vehicles {
            let cmd = commands[&veh.id];

            if !veh.is_changing_lane() {
                if let Some(target) = road.adjacent_lane(veh.lane, cmd.lane_decision) {
                    veh.target_lane = target;
                    veh.lane_change_progress = T::zero();
                    report.lane_changes_started.push(veh.id);
                }
            }

            let v_next = (veh.v + cmd.acceleration * dt).max(T::zero());
            veh.a = (v_next - veh.v) / dt;
            veh.v = v_next;
            veh.x += v_next * dt;

            if veh.is_changing_lane() {
                let target_y = road.lane_center(veh.target_lane);
                let lateral_speed = road.lane_width / duration;
                let direction = if target_y > veh.y { T::one() } else { -T::one() };
                let progress = (veh.lane_change_progress + dt / duration).min(T::one());
                if progress >= T::one() - T::lit(1e-6) {
                    veh.lane_change_progress = T::one();
                    veh.y = target_y;
                    veh.vy = T::zero();
                    veh.lane = veh.target_lane;
                } else {
                    veh.lane_change_progress = progress;
                    veh.y += direction * lateral_speed * dt;
                    veh.vy = direction * lateral_speed;
                    if progress >= T::lit(0.5) {
                        veh.lane = veh.target_lane;
                    }
                }
            }
        }

        let length = road.length;
        self.vehicles.retain(|v| {
            let keep = v.x <= length;
            if !keep {
                report.exited.push(v.id);
            }
            keep
        });
        self.step_count += 1;
        Ok(report)
    }

    /// All overlapping vehicle pairs `(lower id, higher id)`, sorted.
    pub fn detect_collisions(&self) -> Vec<(VehicleId, VehicleId)> {
        let mut pairs = Vec::new();
        for (i, a) in self.vehicles.iter().enumerate() {
            for b in &self.vehicles[i + 1..] {
                let half_len = (a.length + b.length) * T::lit(0.5);
                let half_wid = (a.width + b.width) * T::lit(0.5);
                if (a.x - b.x).abs() < half_len && (a.y - b.y).abs() < half_wid {
                    pairs.push((a.id.min(b.id), a.id.max(b.id)));
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }

    /// Other vehicles with `|dx| <= radius`, nearest first, ties by id.
    /// A radius of zero (or less) selects nobody.
    pub fn neighbors(&self, id: VehicleId, radius: T) -> Result<Vec<VehicleId>> {
        let ego = self.vehicle(id)?;
        if !(radius > T::zero()) {
            return Ok(Vec::new());
        }
        let mut found: Vec<(T, VehicleId)> = self
            .vehicles
            .iter()
            .filter(|v| v.id != id)
            .map(|v| ((v.x - ego.x).abs(), v.id))
            .filter(|(d, _)| *d <= radius)
            .collect();
        found.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite positions").then(a.1.cmp(&b.1)));
        Ok(found.into_iter().map(|(_, id)| id).collect())
    }

    /// Nearest vehicle strictly ahead of `id` occupying `lane`.
    pub fn leader(&self, id: VehicleId, lane: usize) -> Result<Option<LeaderInfo<T>>> {
        let ego = self.vehicle(id)?;
        Ok(self.leader_of(ego, lane))
    }

    pub(crate) fn leader_of(&self, ego: &VehicleState<T>, lane: usize) -> Option<LeaderInfo<T>> {
        self.vehicles
            .iter()
            .filter(|v| v.id != ego.id && v.occupies(lane) && v.x > ego.x)
            .min_by(|a, b| a.x.partial_cmp(&b.x).expect("finite positions").then(a.id.cmp(&b.id)))
            .map(|l| LeaderInfo {
                id: l.id,
                gap: l.x - ego.x - (l.length + ego.length) * T::lit(0.5),
                speed_delta: ego.v - l.v,
            })
    }

    /// Nearest vehicle strictly behind `ego` occupying `lane`.
    pub(crate) fn follower_of(&self, ego: &VehicleState<T>, lane: usize) -> Option<&VehicleState<T>> {
        self.vehicles
            .iter()
            .filter(|v| v.id != ego.id && v.occupies(lane) && v.x < ego.x)
            .max_by(|a, b| a.x.partial_cmp(&b.x).expect("finite positions").then(b.id.cmp(&a.id)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn keep_all(world: &WorldState<f64>) -> BTreeMap<VehicleId, Command<f64>> {
        world.vehicles.iter().map(|v| (v.id, Command::keep(0.0))).collect()
    }

    #[test]
    fn spawn_counts_follow_density_ranges() {
        for seed in 0..50 {
            for mode in [DensityMode::D1, DensityMode::D2, DensityMode::D3] {
                let w = spawn_world::<f64>(mode, seed, RoadConfig::default(), &SpawnConfig::default()).unwrap();
                let (lo, hi) = mode.count_range();
                let n_av = w.ids_of(VehicleKind::Av).len();
                let n_hdv = w.ids_of(VehicleKind::Hdv).len();
                assert!((lo..=hi).contains(&n_av), "{mode} av={n_av}");
                assert!((lo..=hi).contains(&n_hdv), "{mode} hdv={n_hdv}");
                for v in &w.vehicles {
                    assert!(v.v >= 25.0 && v.v <= 30.0);
                    assert!(v.x >= 0.0 && v.x <= w.road.length);
                }
            }
        }
    }

    #[test]
    fn spawn_respects_minimum_gap() {
        for seed in 0..100 {
            let w = spawn_world::<f64>(DensityMode::D3, seed, RoadConfig::default(), &SpawnConfig::default()).unwrap();
            for a in &w.vehicles {
                for b in &w.vehicles {
                    if a.id != b.id && a.lane == b.lane {
                        let gap = (a.x - b.x).abs() - (a.length + b.length) / 2.0;
                        assert!(gap >= 15.0 - 1e-9, "seed {seed}: gap {gap}");
                    }
                }
            }
            assert!(w.detect_collisions().is_empty());
        }
    }

    #[test]
    fn spawn_is_deterministic() {
        let a = spawn_world::<f64>(DensityMode::D1, 42, RoadConfig::default(), &SpawnConfig::default()).unwrap();
        let b = spawn_world::<f64>(DensityMode::D1, 42, RoadConfig::default(), &SpawnConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spawn_fails_on_short_road() {
        let road = RoadConfig { length: 40.0, ..RoadConfig::default() };
        let err = spawn_world::<f64>(DensityMode::D3, 1, road, &SpawnConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Spawn { .. }));
    }

    #[test]
    fn zero_acceleration_advances_five_meters() {
        let mut w = WorldState::<f64>::empty(RoadConfig::default(), 0);
        let id = w.insert_vehicle(VehicleKind::Av, 0, 100.0, 25.0);
        w.advance(&keep_all(&w)).unwrap();
        assert_eq!(w.vehicle(id).unwrap().x, 105.0);
        assert_eq!(w.step_count, 1);
    }

    #[test]
    fn left_from_leftmost_lane_is_keep() {
        let mut a = WorldState::<f64>::empty(RoadConfig::default(), 0);
        let id = a.insert_vehicle(VehicleKind::Av, 0, 100.0, 25.0);
        let mut b = a.clone();
        let mut left = BTreeMap::new();
        left.insert(id, Command { acceleration: 1.0, lane_decision: LaneDecision::Left });
        let mut keep = BTreeMap::new();
        keep.insert(id, Command::keep(1.0));
        let ra = a.advance(&left).unwrap();
        b.advance(&keep).unwrap();
        assert_eq!(a, b);
        assert!(ra.lane_changes_started.is_empty());
    }

    #[test]
    fn right_lane_change_completes_after_five_steps() {
        let mut w = WorldState::<f64>::empty(RoadConfig::default(), 0);
        let id = w.insert_vehicle(VehicleKind::Av, 0, 10.0, 25.0);
        let y0 = w.vehicle(id).unwrap().y;
        let mut cmd = BTreeMap::new();
        cmd.insert(id, Command { acceleration: 0.0, lane_decision: LaneDecision::Right });
        let mut prev_y = y0;
        for step in 0..5 {
            let r = w.advance(&cmd).unwrap();
            assert_eq!(r.lane_changes_started.len(), usize::from(step == 0));
            let v = w.vehicle(id).unwrap();
            assert!(v.y > prev_y, "monotone toward target");
            prev_y = v.y;
            if step < 4 {
                assert!(v.is_changing_lane());
                assert_abs_diff_eq!(v.vy, 4.0, epsilon = 1e-12);
            }
            if step == 1 {
                assert_eq!(v.lane, 0, "progress 0.4 keeps the old lane index");
            }
            if step == 2 {
                assert_eq!(v.lane, 1, "progress 0.6 switches the lane index");
            }
        }
        let v = w.vehicle(id).unwrap();
        assert_eq!(v.y - y0, 4.0);
        assert_eq!(v.lane, 1);
        assert_eq!(v.lane_change_progress, 1.0);
        assert_eq!(v.vy, 0.0);
        assert_eq!(v.y, w.road.lane_center(1));
    }

    #[test]
    fn speed_never_negative() {
        let mut w = WorldState::<f64>::empty(RoadConfig::default(), 0);
        let id = w.insert_vehicle(VehicleKind::Hdv, 1, 10.0, 0.5);
        let mut cmd = BTreeMap::new();
        cmd.insert(id, Command::keep(-9.0));
        w.advance(&cmd).unwrap();
        let v = w.vehicle(id).unwrap();
        assert_eq!(v.v, 0.0);
        assert_abs_diff_eq!(v.a, -2.5, epsilon = 1e-12);
    }

    #[test]
    fn vehicles_past_the_end_are_removed() {
        let mut w = WorldState::<f64>::empty(RoadConfig::default(), 0);
        let id = w.insert_vehicle(VehicleKind::Av, 0, 518.0, 25.0);
        let r = w.advance(&keep_all(&w)).unwrap();
        assert_eq!(r.exited, vec![id]);
        assert!(w.vehicles.is_empty());
    }

    #[test]
    fn missing_command_is_rejected() {
        let mut w = WorldState::<f64>::empty(RoadConfig::default(), 0);
        w.insert_vehicle(VehicleKind::Av, 0, 10.0, 25.0);
        assert!(matches!(w.advance(&BTreeMap::new()), Err(Error::Contract(_))));
    }

    #[test]
    fn collision_rectangles() {
        let mut w = WorldState::<f64>::empty(RoadConfig::default(), 0);
        let a = w.insert_vehicle(VehicleKind::Av, 0, 100.0, 25.0);
        let b = w.insert_vehicle(VehicleKind::Hdv, 0, 104.0, 25.0);
        assert_eq!(w.detect_collisions(), vec![(a, b)]);

        w.vehicle_mut(b).unwrap().x = 105.1;
        assert!(w.detect_collisions().is_empty());

        w.vehicle_mut(b).unwrap().x = 100.0;
        let bv = w.vehicle_mut(b).unwrap();
        bv.lane = 1;
        bv.target_lane = 1;
        bv.y = 6.0;
        assert!(w.detect_collisions().is_empty());
    }

    #[test]
    fn neighbors_sorted_by_distance() {
        let mut w = WorldState::<f64>::empty(RoadConfig::default(), 0);
        let ego = w.insert_vehicle(VehicleKind::Av, 0, 100.0, 25.0);
        let far_ahead = w.insert_vehicle(VehicleKind::Av, 0, 130.0, 25.0);
        let behind = w.insert_vehicle(VehicleKind::Hdv, 1, 90.0, 25.0);
        w.insert_vehicle(VehicleKind::Hdv, 1, 300.0, 25.0);
        assert_eq!(w.neighbors(ego, 50.0).unwrap(), vec![behind, far_ahead]);
        assert!(w.neighbors(ego, 0.0).unwrap().is_empty());
        assert!(matches!(w.neighbors(99, 10.0), Err(Error::UnknownVehicle(99))));
    }

    #[test]
    fn neighbor_ties_broken_by_id() {
        let mut w = WorldState::<f64>::empty(RoadConfig::default(), 0);
        let ego = w.insert_vehicle(VehicleKind::Av, 0, 100.0, 25.0);
        let a = w.insert_vehicle(VehicleKind::Av, 0, 120.0, 25.0);
        let b = w.insert_vehicle(VehicleKind::Av, 1, 80.0, 25.0);
        assert_eq!(w.neighbors(ego, 30.0).unwrap(), vec![a, b]);
    }

    #[test]
    fn leader_gap_is_bumper_to_bumper() {
        let mut w = WorldState::<f64>::empty(RoadConfig::default(), 0);
        let ego = w.insert_vehicle(VehicleKind::Hdv, 0, 100.0, 25.0);
        assert!(w.leader(ego, 0).unwrap().is_none());
        let near = w.insert_vehicle(VehicleKind::Hdv, 0, 120.0, 20.0);
        w.insert_vehicle(VehicleKind::Hdv, 0, 140.0, 20.0);
        let l = w.leader(ego, 0).unwrap().unwrap();
        assert_eq!(l.id, near);
        assert_eq!(l.gap, 15.0);
        assert_eq!(l.speed_delta, 5.0);
        assert!(w.leader(ego, 1).unwrap().is_none());
    }

    #[test]
    fn works_in_single_precision() {
        let mut w = WorldState::<f32>::empty(RoadConfig::default(), 0);
        let id = w.insert_vehicle(VehicleKind::Av, 0, 10.0, 25.0);
        let mut cmd = BTreeMap::new();
        cmd.insert(id, Command { acceleration: 0.0f32, lane_decision: LaneDecision::Right });
        for _ in 0..5 {
            w.advance(&cmd).unwrap();
        }
        let v = w.vehicle(id).unwrap();
        assert_eq!(v.lane, 1);
        assert_eq!(v.lane_change_progress, 1.0);
    }
}
