//! Scene-level subscores and the per-frame PDMS / EPDMS aggregates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    normalize_angle, obb_overlap, segment_intersects_box, segments_intersect, OrientedBox, Polyline, Pose2, Vec2,
};
use crate::world::{AgentClass, LightState, RoadModel, Scenario, SparseWorld};

/// Kinematic comfort limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComfortBounds {
    pub max_lon_accel: f64,
    pub max_lat_accel: f64,
    pub max_jerk: f64,
    pub max_yaw_rate: f64,
}

impl Default for ComfortBounds {
    fn default() -> Self {
        ComfortBounds {
            max_lon_accel: 4.89,
            max_lat_accel: 4.89,
            max_jerk: 8.37,
            max_yaw_rate: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub weight_ep: f64,
    pub weight_ttc: f64,
    pub weight_c: f64,
    pub weight_lk: f64,
    pub weight_hc: f64,
    pub weight_ec: f64,
    pub comfort: ComfortBounds,
    /// Constant-velocity look-ahead for TTC, seconds.
    pub ttc_horizon: f64,
    /// Below this speed the ego counts as stationary for fault assignment.
    pub stationary_speed: f64,
    pub lane_keeping_threshold: f64,
    pub wrong_way_soft: f64,
    pub wrong_way_hard: f64,
    pub consistency_threshold: f64,
    /// Leading plan waypoints compared against the previous plan.
    pub consistency_waypoints: usize,
    /// History poses prepended to the plan for history comfort.
    pub history_tail: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            weight_ep: 5.0,
            weight_ttc: 5.0,
            weight_c: 2.0,
            weight_lk: 2.0,
            weight_hc: 2.0,
            weight_ec: 2.0,
            comfort: ComfortBounds::default(),
            ttc_horizon: 1.0,
            stationary_speed: 0.05,
            lane_keeping_threshold: 0.5,
            wrong_way_soft: 2.0,
            wrong_way_hard: 6.0,
            consistency_threshold: 1.0,
            consistency_waypoints: 4,
            history_tail: 4,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("metrics.weight_ep", self.weight_ep),
            ("metrics.weight_ttc", self.weight_ttc),
            ("metrics.weight_c", self.weight_c),
            ("metrics.weight_lk", self.weight_lk),
            ("metrics.weight_hc", self.weight_hc),
            ("metrics.weight_ec", self.weight_ec),
            ("metrics.comfort.max_lon_accel", self.comfort.max_lon_accel),
            ("metrics.comfort.max_lat_accel", self.comfort.max_lat_accel),
            ("metrics.comfort.max_jerk", self.comfort.max_jerk),
            ("metrics.comfort.max_yaw_rate", self.comfort.max_yaw_rate),
            ("metrics.ttc_horizon", self.ttc_horizon),
            ("metrics.stationary_speed", self.stationary_speed),
            ("metrics.lane_keeping_threshold", self.lane_keeping_threshold),
            ("metrics.wrong_way_soft", self.wrong_way_soft),
            ("metrics.wrong_way_hard", self.wrong_way_hard),
            ("metrics.consistency_threshold", self.consistency_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if self.wrong_way_hard < self.wrong_way_soft {
            return Err(Error::invalid("metrics.wrong_way_hard", "must be at least wrong_way_soft"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubscoreVector {
    pub nc: f64,
    pub dac: f64,
    pub ddc: f64,
    pub tlc: f64,
    pub ep: f64,
    pub ttc: f64,
    pub c: f64,
    pub lk: f64,
    pub hc: f64,
    pub ec: f64,
}

impl SubscoreVector {
    pub const ONES: SubscoreVector = SubscoreVector {
        nc: 1.0,
        dac: 1.0,
        ddc: 1.0,
        tlc: 1.0,
        ep: 1.0,
        ttc: 1.0,
        c: 1.0,
        lk: 1.0,
        hc: 1.0,
        ec: 1.0,
    };

    /// True when every field lies in its allowed value set.
    pub fn in_range(&self) -> bool {
        let tri = |v: f64| v == 0.0 || v == 0.5 || v == 1.0;
        let bin = |v: f64| v == 0.0 || v == 1.0;
        tri(self.nc)
            && tri(self.ddc)
            && bin(self.dac)
            && bin(self.tlc)
            && bin(self.ttc)
            && bin(self.c)
            && bin(self.lk)
            && bin(self.hc)
            && bin(self.ec)
            && (0.0..=1.0).contains(&self.ep)
    }

    /// Safe for EP normalization: no at-fault collision and inside the drivable area.
    pub fn is_safe(&self) -> bool {
        self.nc > 0.0 && self.dac == 1.0
    }
}

fn bool_score(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Ego pose before step `h` (the initial pose for `h = 0`).
fn prev_pose(traj: &[Pose2], start: Pose2, h: usize) -> Pose2 {
    if h == 0 {
        start
    } else {
        traj[h - 1]
    }
}

/// No at-fault collisions: 1 when clean, 0.5 when only static objects are hit,
/// 0 on an at-fault contact with a vehicle or pedestrian. Only the first
/// contact with each agent is judged; it is not the ego's fault when the ego
/// is stationary and the agent touches its rear half.
pub fn score_nc(world: &SparseWorld, scenario: &Scenario, cfg: &MetricConfig) -> f64 {
    let mut static_hit = false;
    for (agent, fut) in scenario.agents.iter().zip(&world.agent_futures) {
        let contact = (0..world.ego_traj.len()).find(|&h| {
            agent.is_valid(h) && obb_overlap(&scenario.ego_box(world.ego_traj[h]), &agent.box_at(fut[h]))
        });
        let Some(h) = contact else { continue };
        if agent.class == AgentClass::StaticObject {
            static_hit = true;
            continue;
        }
        let ego = world.ego_traj[h];
        let speed = ego.position().distance(prev_pose(&world.ego_traj, scenario.ego.pose, h).position()) / scenario.dt;
        let rear = ego.inverse_transform_point(fut[h].position()).x < 0.0;
        if !(speed < cfg.stationary_speed && rear) {
            return 0.0;
        }
    }
    if static_hit {
        0.5
    } else {
        1.0
    }
}

/// Drivable area compliance: every corner at every step samples >= 0.5.
pub fn score_dac(ego_traj: &[Pose2], scenario: &Scenario) -> f64 {
    let road = &scenario.road;
    bool_score(ego_traj.iter().all(|&p| corners_drivable(&scenario.ego_box(p), road)))
}

pub(crate) fn corners_drivable(b: &OrientedBox, road: &RoadModel) -> bool {
    b.corners().iter().all(|&c| road.drivable.sample_or_zero(c) >= 0.5)
}

/// Time-to-collision within bound: ego and vehicle agents are projected at
/// constant velocity in half-step increments up to `ttc_horizon`.
pub fn score_ttc(world: &SparseWorld, scenario: &Scenario, cfg: &MetricConfig) -> f64 {
    let dt = scenario.dt;
    let sub = dt / 2.0;
    let n_sub = (cfg.ttc_horizon / sub + 1e-9).floor() as usize;
    for (h, &ego) in world.ego_traj.iter().enumerate() {
        let ego_vel = (ego.position() - prev_pose(&world.ego_traj, scenario.ego.pose, h).position()) * (1.0 / dt);
        for (agent, fut) in scenario.agents.iter().zip(&world.agent_futures) {
            if agent.class != AgentClass::Vehicle || !agent.is_valid(h) {
                continue;
            }
            let a = fut[h];
            let a_prev = if h == 0 { agent.current } else { fut[h - 1] };
            let a_vel = (a.position() - a_prev.position()) * (1.0 / dt);
            for k in 1..=n_sub {
                let tau = k as f64 * sub;
                let e = Pose2::from_position(ego.position() + ego_vel * tau, ego.heading());
                let o = Pose2::from_position(a.position() + a_vel * tau, a.heading());
                if obb_overlap(&scenario.ego_box(e), &agent.box_at(o)) {
                    return 0.0;
                }
            }
        }
    }
    1.0
}

/// Route arc length between the projections of the first and last waypoints.
pub fn route_progress(ego_traj: &[Pose2], route: &Polyline) -> f64 {
    match (ego_traj.first(), ego_traj.last()) {
        (Some(a), Some(b)) => route.project(b.position()).s - route.project(a.position()).s,
        _ => 0.0,
    }
}

/// Ego progress for a candidate set: each progress over the best progress
/// among safe candidates (or all candidates when none is safe).
pub fn normalize_progress(progress: &[f64], safe: &[bool]) -> Vec<f64> {
    let max_of = |only_safe: bool| {
        progress
            .iter()
            .zip(safe)
            .filter(|(_, &s)| s || !only_safe)
            .map(|(&p, _)| p)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let denom = if safe.iter().any(|&s| s) {
        max_of(true)
    } else {
        max_of(false)
    };
    progress
        .iter()
        .map(|&p| {
            if denom < 0.1 {
                1.0
            } else {
                (p / denom).clamp(0.0, 1.0)
            }
        })
        .collect()
}

pub fn score_ep(ego_traj: &[Pose2], route: &Polyline, candidates: &[Vec<Pose2>], safe: &[bool]) -> f64 {
    let mut progress: Vec<f64> = candidates.iter().map(|c| route_progress(c, route)).collect();
    progress.push(route_progress(ego_traj, route));
    let mut flags = safe.to_vec();
    flags.resize(candidates.len(), false);
    flags.push(true);
    *normalize_progress(&progress, &flags).last().unwrap()
}

fn within(v: f64, bound: f64) -> bool {
    v.abs() <= bound * (1.0 + 1e-9)
}

/// Comfort from finite differences of the waypoint positions.
pub fn score_comfort(ego_traj: &[Pose2], dt: f64, bounds: &ComfortBounds) -> f64 {
    let n = ego_traj.len();
    for w in ego_traj.windows(2) {
        if !within(normalize_angle(w[1].heading() - w[0].heading()) / dt, bounds.max_yaw_rate) {
            return 0.0;
        }
    }
    if n < 3 {
        return 1.0;
    }
    let vel: Vec<Vec2> = ego_traj
        .windows(2)
        .map(|w| (w[1].position() - w[0].position()) * (1.0 / dt))
        .collect();
    let acc: Vec<Vec2> = vel.windows(2).map(|w| (w[1] - w[0]) * (1.0 / dt)).collect();
    for (i, a) in acc.iter().enumerate() {
        let dir = ego_traj[i + 1].direction();
        let lon = a.dot(dir);
        let lat = dir.cross(*a);
        if !within(lon, bounds.max_lon_accel) || !within(lat, bounds.max_lat_accel) {
            return 0.0;
        }
    }
    for w in acc.windows(2) {
        if !within((w[1] - w[0]).norm() / dt, bounds.max_jerk) {
            return 0.0;
        }
    }
    1.0
}

fn nearest_centerline(p: Vec2, road: &RoadModel) -> Option<crate::geometry::Projection> {
    road.centerlines
        .iter()
        .map(|c| c.project(p))
        .min_by(|a, b| a.distance.total_cmp(&b.distance))
}

/// Driving direction compliance from the distance driven against the
/// nearest centerline's direction.
pub fn score_ddc(ego_traj: &[Pose2], scenario: &Scenario, cfg: &MetricConfig) -> f64 {
    let mut wrong = 0.0;
    for (h, p) in ego_traj.iter().enumerate() {
        let Some(proj) = nearest_centerline(p.position(), &scenario.road) else {
            return 1.0;
        };
        if p.direction().dot(proj.tangent) < 0.0 {
            wrong += p.position().distance(prev_pose(ego_traj, scenario.ego.pose, h).position());
        }
    }
    if wrong < cfg.wrong_way_soft {
        1.0
    } else if wrong < cfg.wrong_way_hard {
        0.5
    } else {
        0.0
    }
}

/// Traffic light compliance: the ego box must not touch a stop line, and the
/// front bumper must not sweep across one, while that light is red.
pub fn score_tlc(ego_traj: &[Pose2], scenario: &Scenario) -> f64 {
    let half = scenario.ego.length / 2.0;
    for (h, &p) in ego_traj.iter().enumerate() {
        let t = (h + 1) as f64 * scenario.dt;
        let prev = prev_pose(ego_traj, scenario.ego.pose, h);
        let front = p.transform_point(Vec2::new(half, 0.0));
        let prev_front = prev.transform_point(Vec2::new(half, 0.0));
        let b = scenario.ego_box(p);
        for light in &scenario.road.traffic_lights {
            if light.state_at(t) != LightState::Red {
                continue;
            }
            let [a, c] = light.stop_line;
            if segment_intersects_box(a, c, &b) || segments_intersect(prev_front, front, a, c) {
                return 0.0;
            }
        }
    }
    1.0
}

/// Lane keeping: lateral offset to the nearest centerline within threshold.
pub fn score_lk(ego_traj: &[Pose2], road: &RoadModel, cfg: &MetricConfig) -> f64 {
    if road.centerlines.is_empty() {
        return 1.0;
    }
    bool_score(ego_traj.iter().all(|p| {
        nearest_centerline(p.position(), road).is_some_and(|pr| pr.distance <= cfg.lane_keeping_threshold)
    }))
}

/// History comfort: comfort over the history tail followed by the plan.
pub fn score_hc(ego_traj: &[Pose2], scenario: &Scenario, cfg: &MetricConfig) -> f64 {
    let Some(history) = &scenario.history else {
        return 1.0;
    };
    let tail = &history[history.len().saturating_sub(cfg.history_tail)..];
    let joined: Vec<Pose2> = tail.iter().chain(ego_traj).copied().collect();
    score_comfort(&joined, scenario.dt, &cfg.comfort)
}

/// Extended comfort: the leading waypoints stay close to the previous plan.
pub fn score_ec(ego_traj: &[Pose2], scenario: &Scenario, cfg: &MetricConfig) -> f64 {
    let Some(prev) = &scenario.previous_plan else {
        return 1.0;
    };
    bool_score(
        ego_traj
            .iter()
            .zip(prev)
            .take(cfg.consistency_waypoints)
            .all(|(a, b)| a.position().distance(b.position()) <= cfg.consistency_threshold),
    )
}

/// (ddc, tlc, lk, hc, ec)
pub fn score_extended(ego_traj: &[Pose2], scenario: &Scenario, cfg: &MetricConfig) -> (f64, f64, f64, f64, f64) {
    (
        score_ddc(ego_traj, scenario, cfg),
        score_tlc(ego_traj, scenario),
        score_lk(ego_traj, &scenario.road, cfg),
        score_hc(ego_traj, scenario, cfg),
        score_ec(ego_traj, scenario, cfg),
    )
}

/// All subscores of one world; `ep` comes from the candidate-set normalization.
pub fn subscores(world: &SparseWorld, scenario: &Scenario, cfg: &MetricConfig, ep: f64) -> SubscoreVector {
    let traj = &world.ego_traj;
    let (ddc, tlc, lk, hc, ec) = score_extended(traj, scenario, cfg);
    SubscoreVector {
        nc: score_nc(world, scenario, cfg),
        dac: score_dac(traj, scenario),
        ddc,
        tlc,
        ep,
        ttc: score_ttc(world, scenario, cfg),
        c: score_comfort(traj, scenario.dt, &cfg.comfort),
        lk,
        hc,
        ec,
    }
}

pub fn pdms(s: &SubscoreVector, cfg: &MetricConfig) -> f64 {
    let weighted = cfg.weight_ep * s.ep + cfg.weight_ttc * s.ttc + cfg.weight_c * s.c;
    s.nc * s.dac * weighted / (cfg.weight_ep + cfg.weight_ttc + cfg.weight_c)
}

/// Replaces every metric the human trajectory fails (score 0) by 1.
pub fn mask_human_violations(pred: &SubscoreVector, human: &SubscoreVector) -> SubscoreVector {
    let m = |p: f64, h: f64| if h == 0.0 { 1.0 } else { p };
    SubscoreVector {
        nc: m(pred.nc, human.nc),
        dac: m(pred.dac, human.dac),
        ddc: m(pred.ddc, human.ddc),
        tlc: m(pred.tlc, human.tlc),
        ep: m(pred.ep, human.ep),
        ttc: m(pred.ttc, human.ttc),
        c: m(pred.c, human.c),
        lk: m(pred.lk, human.lk),
        hc: m(pred.hc, human.hc),
        ec: m(pred.ec, human.ec),
    }
}

pub fn epdms(pred: &SubscoreVector, human: &SubscoreVector, cfg: &MetricConfig) -> f64 {
    let s = mask_human_violations(pred, human);
    let weighted = cfg.weight_ep * s.ep
        + cfg.weight_ttc * s.ttc
        + cfg.weight_lk * s.lk
        + cfg.weight_hc * s.hc
        + cfg.weight_ec * s.ec;
    let total = cfg.weight_ep + cfg.weight_ttc + cfg.weight_lk + cfg.weight_hc + cfg.weight_ec;
    s.nc * s.dac * s.ddc * s.tlc * weighted / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ProbGrid;
    use crate::world::test_support::*;
    use crate::world::{build_sparse_worlds, LightPhase, TrafficLight};
    use proptest::prelude::*;

    fn world(s: &Scenario, traj: Vec<Pose2>) -> SparseWorld {
        build_sparse_worlds(&[traj], s).unwrap().remove(0)
    }

    fn cfg() -> MetricConfig {
        MetricConfig::default()
    }

    #[test]
    fn pdms_examples() {
        let c = cfg();
        assert_eq!(pdms(&SubscoreVector::ONES, &c), 1.0);
        let s = SubscoreVector { nc: 0.0, ..SubscoreVector::ONES };
        assert_eq!(pdms(&s, &c), 0.0);
        let s = SubscoreVector { ep: 0.8, ..SubscoreVector::ONES };
        assert!((pdms(&s, &c) - 11.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn epdms_examples() {
        let c = cfg();
        assert_eq!(epdms(&SubscoreVector::ONES, &SubscoreVector::ONES, &c), 1.0);
        let pred = SubscoreVector { dac: 0.0, ..SubscoreVector::ONES };
        let human = SubscoreVector { dac: 0.0, ..SubscoreVector::ONES };
        assert_eq!(epdms(&pred, &human, &c), 1.0);
        let pred = SubscoreVector { ep: 0.5, ec: 0.0, ..SubscoreVector::ONES };
        assert!((epdms(&pred, &SubscoreVector::ONES, &c) - 0.71875).abs() < 1e-12);
    }

    #[test]
    fn nc_cases() {
        let mut s = open_road(8, 0.5);
        let traj = straight_traj(0.0, 2.0, 8);
        assert_eq!(score_nc(&world(&s, traj.clone()), &s, &cfg()), 1.0);

        // Pedestrian standing where the ego is at step 4 (x = 10).
        let mut ped = vehicle(1, Pose2::new(10.0, 3.0, -1.57), vec![Pose2::new(10.0, 0.0, -1.57); 8]);
        ped.class = AgentClass::Pedestrian;
        ped.length = 0.5;
        ped.width = 0.5;
        s.agents.push(ped);
        assert_eq!(score_nc(&world(&s, traj.clone()), &s, &cfg()), 0.0);

        s.agents[0].class = AgentClass::StaticObject;
        assert_eq!(score_nc(&world(&s, traj), &s, &cfg()), 0.5);
    }

    #[test]
    fn nc_rear_end_on_stationary_ego_is_not_at_fault() {
        let mut s = open_road(4, 0.5);
        s.agents.push(vehicle(1, Pose2::new(-8.0, 0.0, 0.0), straight_traj(-8.0, 2.0, 4)));
        let still = vec![Pose2::new(0.0, 0.0, 0.0); 4];
        assert_eq!(score_nc(&world(&s, still), &s, &cfg()), 1.0);
        // Reversing into the same vehicle is at fault.
        let back = straight_traj(0.0, -0.5, 4);
        assert_eq!(score_nc(&world(&s, back), &s, &cfg()), 0.0);
    }

    #[test]
    fn dac_cases() {
        let s = open_road(8, 0.5);
        assert_eq!(score_dac(&straight_traj(0.0, 2.0, 8), &s), 1.0);
        // Grid spans x in [-50, 150]; by the last step the front corners leave it.
        assert_eq!(score_dac(&straight_traj(100.0, 7.0, 8), &s), 0.0);

        // Corner exactly on the 0.5 contour.
        // Cell centers sit at half-integers; the column at x = 1.5 holds 0.5.
        let grid = ProbGrid::from_fn(Vec2::new(-10.0, -10.0), 1.0, 20, 20, |p| {
            if p.x < 1.0 {
                0.0
            } else if p.x < 2.0 {
                0.5
            } else {
                1.0
            }
        })
        .unwrap();
        let mut s2 = open_road(1, 0.5);
        s2.road.drivable = grid;
        assert_eq!(score_dac(&[Pose2::new(3.5, 0.0, 0.0)], &s2), 1.0);
        assert_eq!(score_dac(&[Pose2::new(3.4, 0.0, 0.0)], &s2), 0.0);
    }

    #[test]
    fn ttc_cases() {
        let mut s = open_road(1, 0.5);
        let still = vec![Pose2::new(0.0, 0.0, 0.0)];
        assert_eq!(score_ttc(&world(&s, still), &s, &cfg()), 1.0);

        // Head-on at 5 m/s each with a 4 m gap between bumpers at step 0.
        s.agents.push(vehicle(1, Pose2::new(11.5, 0.0, std::f64::consts::PI), vec![Pose2::new(9.0, 0.0, std::f64::consts::PI)]));
        let ego = vec![Pose2::new(1.0, 0.0, 0.0)];
        let mut s5 = s.clone();
        s5.ego.pose = Pose2::new(-1.5, 0.0, 0.0);
        assert_eq!(score_ttc(&world(&s5, ego.clone()), &s5, &cfg()), 0.0);

        // Parallel lanes 3 m apart.
        let mut sp = open_road(1, 0.5);
        sp.agents.push(vehicle(1, Pose2::new(0.0, 5.0, 0.0), vec![Pose2::new(5.0, 5.0, 0.0)]));
        sp.ego.pose = Pose2::new(0.0, 0.0, 0.0);
        assert_eq!(score_ttc(&world(&sp, vec![Pose2::new(5.0, 0.0, 0.0)]), &sp, &cfg()), 1.0);
    }

    #[test]
    fn ep_cases() {
        assert_eq!(normalize_progress(&[10.0, 5.0], &[true, true]), vec![1.0, 0.5]);
        assert_eq!(normalize_progress(&[0.02, 0.01], &[true, true]), vec![1.0, 1.0]);
        // Unsafe leader is excluded from the denominator.
        assert_eq!(normalize_progress(&[20.0, 10.0], &[false, true]), vec![1.0, 1.0]);
        assert_eq!(normalize_progress(&[20.0, 10.0], &[false, false]), vec![1.0, 0.5]);
        let s = open_road(4, 0.5);
        let a = straight_traj(0.0, 2.0, 4);
        let b = straight_traj(0.0, 1.0, 4);
        assert!((score_ep(&b, &s.route, &[a.clone(), b.clone()], &[true, true]) - 0.5).abs() < 1e-12);
        assert_eq!(score_ep(&a, &s.route, &[a.clone(), b], &[true, true]), 1.0);
    }

    #[test]
    fn comfort_cases() {
        let b = ComfortBounds::default();
        assert_eq!(score_comfort(&straight_traj(0.0, 3.0, 8), 0.5, &b), 1.0);
        let mut jump = straight_traj(0.0, 1.0, 8);
        jump[4].x += 10.0;
        assert_eq!(score_comfort(&jump, 0.5, &b), 0.0);

        // Constant acceleration of exactly max_lon_accel.
        let dt = 0.5;
        let graze: Vec<Pose2> = (0..8)
            .map(|i| {
                let t = i as f64 * dt;
                Pose2::new(5.0 * t + 0.5 * b.max_lon_accel * t * t, 0.0, 0.0)
            })
            .collect();
        assert_eq!(score_comfort(&graze, dt, &b), 1.0);
        let over: Vec<Pose2> = graze.iter().map(|p| Pose2::new(p.x * 1.01, 0.0, 0.0)).collect();
        assert_eq!(score_comfort(&over, dt, &b), 0.0);
    }

    #[test]
    fn extended_clean_and_violations() {
        let mut s = open_road(8, 0.5);
        let traj = straight_traj(0.0, 2.0, 8);
        assert_eq!(score_extended(&traj, &s, &cfg()), (1.0, 1.0, 1.0, 1.0, 1.0));

        // 12 m driven against the lane direction.
        let wrong: Vec<Pose2> = (1..=8).map(|i| Pose2::new(-1.5 * i as f64, 0.0, std::f64::consts::PI)).collect();
        s.ego.pose = Pose2::new(0.0, 0.0, std::f64::consts::PI);
        assert_eq!(score_ddc(&wrong, &s, &cfg()), 0.0);
        s.ego.pose = Pose2::new(0.0, 0.0, 0.0);

        s.road.traffic_lights.push(TrafficLight {
            stop_line: [Vec2::new(9.0, -3.0), Vec2::new(9.0, 3.0)],
            phases: vec![LightPhase { start: 0.0, end: 100.0, state: LightState::Red }],
        });
        assert_eq!(score_tlc(&traj, &s), 0.0);
        s.road.traffic_lights[0].phases[0].state = LightState::Green;
        assert_eq!(score_tlc(&traj, &s), 1.0);

        let drift: Vec<Pose2> = (1..=8).map(|i| Pose2::new(2.0 * i as f64, 0.1 * i as f64, 0.0)).collect();
        assert_eq!(score_lk(&drift, &s.road, &cfg()), 0.0);

        s.previous_plan = Some(straight_traj(0.0, 2.0, 8).iter().map(|p| Pose2::new(p.x, 1.5, 0.0)).collect());
        assert_eq!(score_ec(&traj, &s, &cfg()), 0.0);

        s.history = Some(vec![Pose2::new(-20.0, 0.0, 0.0), Pose2::new(0.0, 0.0, 0.0)]);
        assert_eq!(score_hc(&traj, &s, &cfg()), 0.0);
        s.history = Some(vec![Pose2::new(-2.0, 0.0, 0.0), Pose2::new(0.0, 0.0, 0.0)]);
        assert_eq!(score_hc(&traj, &s, &cfg()), 1.0);
    }

    fn arb_sub() -> impl Strategy<Value = SubscoreVector> {
        let tri = prop::sample::select(vec![0.0, 0.5, 1.0]);
        let bin = || prop::sample::select(vec![0.0, 1.0]);
        (tri.clone(), bin(), tri, bin(), 0.0..=1.0f64, bin(), bin(), bin(), bin(), bin()).prop_map(
            |(nc, dac, ddc, tlc, ep, ttc, c, lk, hc, ec)| SubscoreVector { nc, dac, ddc, tlc, ep, ttc, c, lk, hc, ec },
        )
    }

    proptest! {
        #[test]
        fn aggregates_are_monotone(s in arb_sub(), h in arb_sub(), bump in 0usize..10) {
            let c = cfg();
            let mut up = s;
            let fields: [&mut f64; 10] = [
                &mut up.nc, &mut up.dac, &mut up.ddc, &mut up.tlc, &mut up.ep,
                &mut up.ttc, &mut up.c, &mut up.lk, &mut up.hc, &mut up.ec,
            ];
            *fields.into_iter().nth(bump).unwrap() = 1.0;
            prop_assert!(pdms(&up, &c) >= pdms(&s, &c));
            prop_assert!(epdms(&up, &h, &c) >= epdms(&s, &h, &c));
            prop_assert_eq!(epdms(&s, &SubscoreVector::ONES, &c), {
                let w = c.weight_ep * s.ep + c.weight_ttc * s.ttc + c.weight_lk * s.lk + c.weight_hc * s.hc + c.weight_ec * s.ec;
                s.nc * s.dac * s.ddc * s.tlc * w / 16.0
            });
            prop_assert_eq!(epdms(&SubscoreVector::ONES, &h, &c), 1.0);
        }

        #[test]
        fn ep_always_has_a_leader(p in prop::collection::vec(-5.0..50.0f64, 1..20), safe in prop::collection::vec(any::<bool>(), 20)) {
            let safe = &safe[..p.len()];
            let ep = normalize_progress(&p, safe);
            prop_assert!(ep.contains(&1.0));
            prop_assert!(ep.iter().all(|&e| (0.0..=1.0).contains(&e)));
        }

        #[test]
        fn subscores_in_range(
            steps in prop::collection::vec((-1.0..8.0f64, -0.6..0.6f64), 8),
            agents in prop::collection::vec((-20.0..30.0f64, -6.0..6.0f64, -3.0..3.0f64, 0usize..3), 0..4),
        ) {
            let mut s = open_road(8, 0.5);
            for (i, (x, y, h, cls)) in agents.into_iter().enumerate() {
                let cur = Pose2::new(x, y, h);
                let fut = (1..=8).map(|k| cur.compose(&Pose2::new(k as f64, 0.0, 0.0))).collect();
                let mut a = vehicle(i as u64, cur, fut);
                a.class = [AgentClass::Vehicle, AgentClass::Pedestrian, AgentClass::StaticObject][cls];
                s.agents.push(a);
            }
            s.history = Some(vec![Pose2::new(-1.0, 0.0, 0.0), Pose2::new(0.0, 0.0, 0.0)]);
            s.previous_plan = Some(straight_traj(0.0, 2.0, 8));
            let mut p = Pose2::new(0.0, 0.0, 0.0);
            let traj: Vec<Pose2> = steps.iter().map(|&(dx, dh)| { p = p.compose(&Pose2::new(dx, 0.0, dh)); p }).collect();
            let sub = subscores(&world(&s, traj), &s, &cfg(), 0.3);
            prop_assert!(sub.in_range(), "{:?}", sub);
        }
    }
}
