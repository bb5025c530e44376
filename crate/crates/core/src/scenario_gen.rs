//! Seeded synthetic scenarios. Each template is laid out in a local frame
//! (ego at the origin facing +x), given a comfortable expert that yields to
//! the scripted agents, and then placed in the world by a random rigid motion.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anchors::TrajectoryCorpus;
use crate::error::{Error, Result};
use crate::geometry::{min_distance, obb_overlap, OrientedBox, Polyline, Pose2, ProbGrid, Vec2};
use crate::metrics::{score_comfort, score_dac, score_nc, ComfortBounds, MetricConfig};
use crate::world::{build_sparse_worlds, AgentClass, AgentInstance, EgoState, RoadModel, Scenario};

const MAX_ATTEMPTS: usize = 100;
const GRID_RESOLUTION: f64 = 0.5;
const EGO_LENGTH: f64 = 4.0;
const EGO_WIDTH: f64 = 2.0;
const MAX_DECEL: f64 = 3.0;
/// Clearance the expert keeps to every agent.
const EXPERT_CLEARANCE: f64 = 1.0;
const ROUTE_LENGTH: f64 = 80.0;
const HISTORY_POSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Straight,
    LeadBrake,
    CrossingPed,
    Merge,
    Turn,
    Narrow,
}

impl Template {
    pub const ALL: [Template; 6] = [
        Template::Straight,
        Template::LeadBrake,
        Template::CrossingPed,
        Template::Merge,
        Template::Turn,
        Template::Narrow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::Straight => "straight",
            Template::LeadBrake => "lead_brake",
            Template::CrossingPed => "crossing_ped",
            Template::Merge => "merge",
            Template::Turn => "turn",
            Template::Narrow => "narrow",
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::invalid("template", format!("unknown template `{s}`")))
    }
}

/// Closed interval `[lo, hi]`, written as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

impl From<[f64; 2]> for Range {
    fn from(v: [f64; 2]) -> Self {
        Range::new(v[0], v[1])
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.lo, r.hi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub template: Template,
    pub seed: u64,
    pub count: usize,
    pub horizon_steps: usize,
    pub dt: f64,
    /// Initial ego speed, m/s.
    pub speed: Range,
    /// Distance to the hazard, m.
    pub gap: Range,
    /// Time at which the scripted agent starts its manoeuvre, s.
    pub trigger: Range,
}

impl GenSpec {
    pub fn new(template: Template, seed: u64, count: usize) -> Self {
        GenSpec {
            template,
            seed,
            count,
            horizon_steps: 8,
            dt: 0.5,
            speed: Range::new(6.0, 12.0),
            gap: Range::new(12.0, 30.0),
            trigger: Range::new(0.5, 2.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(Error::invalid("count", "must be at least 1"));
        }
        if self.horizon_steps < 3 {
            return Err(Error::invalid("horizon_steps", "must be at least 3"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        for (name, r) in [("speed", self.speed), ("gap", self.gap), ("trigger", self.trigger)] {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo <= r.hi && r.lo >= 0.0) {
                return Err(Error::invalid(name, format!("[{}, {}] is not a non-negative interval", r.lo, r.hi)));
            }
        }
        Ok(())
    }
}

/// Piecewise constant-curvature path; the last piece extends forever.
#[derive(Debug, Clone)]
struct Path {
    pieces: Vec<(f64, f64)>,
}

impl Path {
    fn straight() -> Self {
        Path { pieces: vec![(f64::INFINITY, 0.0)] }
    }

    fn pose_at(&self, s: f64) -> Pose2 {
        if s <= 0.0 {
            return Pose2::new(s, 0.0, 0.0);
        }
        let mut pose = Pose2::new(0.0, 0.0, 0.0);
        let mut left = s;
        for &(len, kappa) in &self.pieces {
            let d = left.min(len);
            pose = pose.compose(&arc(d, kappa));
            left -= d;
            if left <= 0.0 {
                break;
            }
        }
        pose
    }

    fn sample(&self, from: f64, to: f64, step: f64) -> Vec<Vec2> {
        let n = ((to - from) / step).ceil() as usize;
        (0..=n)
            .map(|i| self.pose_at(from + (to - from) * i as f64 / n as f64).position())
            .collect()
    }
}

fn arc(d: f64, kappa: f64) -> Pose2 {
    if kappa.abs() < 1e-12 {
        Pose2::new(d, 0.0, 0.0)
    } else {
        let th = kappa * d;
        Pose2::new(th.sin() / kappa, (1.0 - th.cos()) / kappa, th)
    }
}

/// Distance after `t` seconds from speed `v0` under acceleration `a`, which
/// stops acting once the speed reaches `v_end`.
fn travelled(t: f64, v0: f64, a: f64, v_end: f64) -> f64 {
    if a == 0.0 {
        return v0 * t;
    }
    let t_star = ((v_end - v0) / a).max(0.0);
    let tt = t.min(t_star);
    v0 * tt + 0.5 * a * tt * tt + v_end * (t - tt).max(0.0)
}

struct Strip {
    points: Vec<Vec2>,
    half_width: f64,
}

/// A template instance in the local frame, before the expert is chosen.
struct Draft {
    strips: Vec<Strip>,
    centerlines: Vec<Vec<Vec2>>,
    path: Path,
    v0: f64,
    /// Cruise acceleration and target speed when no yielding is needed.
    cruise: (f64, f64),
    agents: Vec<AgentInstance>,
}

fn track(id: u64, class: AgentClass, dims: (f64, f64), h: usize, dt: f64, f: impl Fn(f64) -> Pose2) -> AgentInstance {
    AgentInstance {
        id,
        class,
        length: dims.0,
        width: dims.1,
        current: f(0.0),
        future: (1..=h).map(|k| f(k as f64 * dt)).collect(),
        valid: vec![true; h],
    }
}

const CAR: (f64, f64) = (4.5, 2.0);
const WALKER: (f64, f64) = (0.6, 0.6);

fn straight_road(y: f64, half_width: f64) -> Strip {
    Strip {
        points: vec![Vec2::new(-30.0, y), Vec2::new(ROUTE_LENGTH + 30.0, y)],
        half_width,
    }
}

fn lane(y: f64, forward: bool) -> Vec<Vec2> {
    let (a, b) = (Vec2::new(-30.0, y), Vec2::new(ROUTE_LENGTH + 30.0, y));
    if forward {
        vec![a, b]
    } else {
        vec![b, a]
    }
}

fn draft(template: Template, spec: &GenSpec, rng: &mut ChaCha8Rng) -> Draft {
    let (h, dt) = (spec.horizon_steps, spec.dt);
    let v0 = spec.speed.sample(rng);
    let mut d = Draft {
        strips: vec![straight_road(0.0, 3.0)],
        centerlines: vec![lane(0.0, true)],
        path: Path::straight(),
        v0,
        cruise: (0.0, v0),
        agents: Vec::new(),
    };
    match template {
        Template::Straight => {
            let target = spec.speed.sample(rng);
            let a = if target > v0 { 1.0 } else { -1.0 };
            d.cruise = (a, target);
        }
        Template::LeadBrake => {
            let gap = spec.gap.sample(rng);
            let trigger = spec.trigger.sample(rng);
            let decel = rng.random_range(3.0..6.0);
            let x0 = gap + (EGO_LENGTH + CAR.0) / 2.0;
            d.agents.push(track(1, AgentClass::Vehicle, CAR, h, dt, |t| {
                let s = if t <= trigger {
                    v0 * t
                } else {
                    v0 * trigger + travelled(t - trigger, v0, -decel, 0.0)
                };
                Pose2::new(x0 + s, 0.0, 0.0)
            }));
        }
        Template::CrossingPed => {
            let gap = spec.gap.sample(rng);
            let trigger = spec.trigger.sample(rng);
            let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let offset = rng.random_range(3.5..5.0);
            let walk = rng.random_range(1.2..2.0);
            let heading = -side * std::f64::consts::FRAC_PI_2;
            let x = gap + EGO_LENGTH / 2.0;
            d.agents.push(track(1, AgentClass::Pedestrian, WALKER, h, dt, |t| {
                let moved = (t - trigger).max(0.0) * walk;
                Pose2::new(x, side * (offset - moved), heading)
            }));
        }
        Template::Merge => {
            let gap = spec.gap.sample(rng) * 0.5;
            let trigger = spec.trigger.sample(rng);
            let v = (v0 - rng.random_range(0.0..3.0)).max(2.0);
            let duration = 3.0;
            d.strips = vec![straight_road(1.75, 4.8)];
            d.centerlines.push(lane(3.5, true));
            let x0 = gap + (EGO_LENGTH + CAR.0) / 2.0;
            let lateral = move |t: f64| {
                let u = ((t - trigger) / duration).clamp(0.0, 1.0);
                3.5 * 0.5 * (1.0 + (std::f64::consts::PI * u).cos())
            };
            d.agents.push(track(1, AgentClass::Vehicle, CAR, h, dt, move |t| {
                let eps = 1e-3;
                let dy = (lateral(t + eps) - lateral(t)) / eps;
                Pose2::new(x0 + v * t, lateral(t), dy.atan2(v))
            }));
        }
        Template::Turn => {
            let radius = rng.random_range(12.0..20.0);
            let lead_in = rng.random_range(0.0..5.0);
            let quarter = std::f64::consts::FRAC_PI_2 * radius;
            d.v0 = v0.min((3.5 * radius).sqrt()).min(0.8 * 0.95 * radius);
            d.cruise = (0.0, d.v0);
            d.path = Path {
                pieces: vec![(lead_in, 0.0), (quarter, 1.0 / radius), (f64::INFINITY, 0.0)],
            };
            let exit_x = lead_in + radius;
            d.strips = vec![
                straight_road(1.75, 4.8),
                Strip {
                    points: vec![Vec2::new(exit_x - 1.75, -10.0), Vec2::new(exit_x - 1.75, ROUTE_LENGTH + 20.0)],
                    half_width: 4.8,
                },
                Strip {
                    points: d.path.sample(0.0, lead_in + quarter + 5.0, 1.0),
                    half_width: 3.0,
                },
            ];
            d.centerlines = vec![
                d.path.sample(-30.0, ROUTE_LENGTH + 20.0, 1.0),
                lane(3.5, false),
            ];
            // Oncoming vehicle in the opposite lane, crossing the turn.
            let v = rng.random_range(6.0..10.0);
            let cross_x = lead_in + (radius * radius - (radius - 3.5).powi(2)).sqrt();
            let arrival = spec.gap.sample(rng) / v0.max(1.0);
            let x0 = cross_x + v * arrival;
            d.agents.push(track(1, AgentClass::Vehicle, CAR, h, dt, move |t| {
                Pose2::new(x0 - v * t, 3.5, std::f64::consts::PI)
            }));
        }
        Template::Narrow => {
            let kappa = rng.random_range(1.0 / 80.0..1.0 / 40.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            d.path = Path {
                pieces: vec![(5.0, 0.0), (20.0, kappa), (20.0, -kappa), (f64::INFINITY, 0.0)],
            };
            let half = rng.random_range(1.5..1.75);
            d.strips = vec![Strip {
                points: d.path.sample(-30.0, ROUTE_LENGTH + 30.0, 1.0),
                half_width: half,
            }];
            d.centerlines = vec![d.path.sample(-30.0, ROUTE_LENGTH + 30.0, 1.0)];
        }
    }
    d
}

fn expert_for(d: &Draft, h: usize, dt: f64, accel: f64, v_end: f64) -> Vec<Pose2> {
    (1..=h)
        .map(|k| d.path.pose_at(travelled(k as f64 * dt, d.v0, accel, v_end)))
        .collect()
}

fn clearance_ok(expert: &[Pose2], agents: &[AgentInstance]) -> bool {
    expert.iter().enumerate().all(|(k, &p)| {
        let ego = OrientedBox::from_dims(p, EGO_LENGTH, EGO_WIDTH);
        agents.iter().all(|a| {
            let b = a.box_at(a.future[k]);
            !obb_overlap(&ego, &b) && min_distance(&ego, &b) >= EXPERT_CLEARANCE
        })
    })
}

/// Cruise if that keeps clear of every agent, otherwise the gentlest
/// constant deceleration (to a stop) that does.
fn choose_expert(d: &Draft, h: usize, dt: f64) -> Option<Vec<Pose2>> {
    let cruise = expert_for(d, h, dt, d.cruise.0, d.cruise.1);
    if clearance_ok(&cruise, &d.agents) {
        return Some(cruise);
    }
    (1..=12)
        .map(|i| MAX_DECEL * i as f64 / 12.0)
        .map(|a| expert_for(d, h, dt, -a, 0.0))
        .find(|e| clearance_ok(e, &d.agents))
}

fn quantize(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn place(d: &Draft, expert: Vec<Pose2>, name: String, spec: &GenSpec, world: Pose2) -> Result<Scenario> {
    let to_world = |p: Vec2| world.transform_point(p);
    let pose_world = |p: &Pose2| world.compose(p);

    let strips: Vec<(Polyline, f64)> = d
        .strips
        .iter()
        .map(|s| Ok((Polyline::new(s.points.iter().map(|&p| to_world(p)).collect())?, s.half_width)))
        .collect::<Result<_>>()?;
    let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for (line, hw) in &strips {
        for p in line.points() {
            lo = Vec2::new(lo.x.min(p.x - hw), lo.y.min(p.y - hw));
            hi = Vec2::new(hi.x.max(p.x + hw), hi.y.max(p.y + hw));
        }
    }
    let margin = 4.0;
    let origin = Vec2::new(
        ((lo.x - margin) / GRID_RESOLUTION).floor() * GRID_RESOLUTION,
        ((lo.y - margin) / GRID_RESOLUTION).floor() * GRID_RESOLUTION,
    );
    let width = ((hi.x + margin - origin.x) / GRID_RESOLUTION).ceil() as usize;
    let height = ((hi.y + margin - origin.y) / GRID_RESOLUTION).ceil() as usize;
    let drivable = ProbGrid::from_fn(origin, GRID_RESOLUTION, width, height, |p| {
        let v = strips
            .iter()
            .map(|(line, hw)| (hw - line.project(p).distance + 0.5).clamp(0.0, 1.0))
            .fold(0.0, f64::max);
        quantize(v)
    })?;

    let mut road = RoadModel::new(drivable);
    road.centerlines = d
        .centerlines
        .iter()
        .map(|c| Polyline::new(c.iter().map(|&p| to_world(p)).collect()))
        .collect::<Result<_>>()?;
    let route = Polyline::new(d.path.sample(0.0, ROUTE_LENGTH, 1.0).into_iter().map(to_world).collect())?;
    let history = (0..HISTORY_POSES)
        .rev()
        .map(|k| pose_world(&Pose2::new(-d.v0 * spec.dt * k as f64, 0.0, 0.0)))
        .collect();
    let agents = d
        .agents
        .iter()
        .map(|a| AgentInstance {
            current: pose_world(&a.current),
            future: a.future.iter().map(pose_world).collect(),
            ..a.clone()
        })
        .collect();
    let scenario = Scenario {
        name,
        road,
        ego: EgoState {
            pose: world,
            speed: d.v0,
            length: EGO_LENGTH,
            width: EGO_WIDTH,
        },
        agents,
        route,
        expert: Some(expert.iter().map(pose_world).collect()),
        history: Some(history),
        previous_plan: None,
        horizon_steps: spec.horizon_steps,
        dt: spec.dt,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Expert passes comfort, collision and drivable-area checks in its own scenario.
fn expert_is_clean(s: &Scenario) -> bool {
    let expert = s.expert.as_ref().expect("generated scenarios carry an expert");
    let world = build_sparse_worlds(std::slice::from_ref(expert), s).expect("expert has horizon length");
    score_comfort(expert, s.dt, &ComfortBounds::default()) == 1.0
        && score_nc(&world.remove_first(), s, &MetricConfig::default()) == 1.0
        && score_dac(expert, s) == 1.0
}

trait RemoveFirst<T> {
    fn remove_first(self) -> T;
}

impl<T> RemoveFirst<T> for Vec<T> {
    fn remove_first(mut self) -> T {
        self.swap_remove(0)
    }
}

pub fn generate(spec: &GenSpec) -> Result<Vec<Scenario>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut made = None;
        for _ in 0..MAX_ATTEMPTS {
            let d = draft(spec.template, spec, &mut rng);
            let world = Pose2::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            );
            let Some(expert) = choose_expert(&d, spec.horizon_steps, spec.dt) else {
                continue;
            };
            let name = format!("{}_{}_{:04}", spec.template, spec.seed, i);
            let s = place(&d, expert, name, spec, world)?;
            if expert_is_clean(&s) {
                made = Some(s);
                break;
            }
        }
        match made {
            Some(s) => out.push(s),
            None => {
                return Err(Error::Infeasible(format!(
                    "{}: no comfortable collision-free expert for speed [{}, {}] m/s, gap [{}, {}] m after {MAX_ATTEMPTS} attempts",
                    spec.template, spec.speed.lo, spec.speed.hi, spec.gap.lo, spec.gap.hi
                )))
            }
        }
    }
    Ok(out)
}

/// Expert trajectories expressed in each scenario's ego frame at t = 0.
pub fn corpus_from(scenarios: &[Scenario]) -> Result<TrajectoryCorpus> {
    let trajs = scenarios
        .iter()
        .map(|s| {
            let expert = s.expert.as_ref().ok_or_else(|| Error::MissingExpert(s.name.clone()))?;
            Ok(expert.iter().map(|p| s.ego.pose.inverse_transform_point(p.position())).collect())
        })
        .collect::<Result<Vec<Vec<Vec2>>>>()?;
    TrajectoryCorpus::new(trajs)
}

/// Three well-separated ego-frame templates (straight, left and right
/// curves) with Gaussian jitter of `sigma` metres on every waypoint.
pub fn cluster_corpus(seed: u64, per_cluster: usize, horizon: usize, sigma: f64) -> (TrajectoryCorpus, Vec<Vec<Vec2>>) {
    let templates: Vec<Vec<Vec2>> = [0.0, 1.0 / 15.0, -1.0 / 15.0]
        .iter()
        .map(|&k| (1..=horizon).map(|i| arc(4.0 * i as f64, k).position()).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || {
        // Box-Muller
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let mut trajs = Vec::with_capacity(3 * per_cluster);
    for i in 0..3 * per_cluster {
        let t = &templates[i % 3];
        trajs.push(t.iter().map(|&p| p + Vec2::new(normal(), normal())).collect());
    }
    (TrajectoryCorpus::new(trajs).expect("non-empty uniform corpus"), templates)
}
