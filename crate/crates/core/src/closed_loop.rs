//! Receding-horizon episodes with infraction bookkeeping, Driving Score and
//! Success Rate.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::error::{Error, Result};
use crate::geometry::{
    normalize_angle, obb_overlap, point_in_polygon, distance_to_polygon, segment_intersects_box, segments_intersect,
    OrientedBox, Pose2, Vec2,
};
use crate::pipeline::{evaluate, PipelineConfig};
use crate::world::{load_scenario_file, AgentClass, AgentInstance, LightPhase, LightState, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfractionKind {
    PedestrianCollision,
    VehicleCollision,
    OtherCollision,
    RedLight,
    ScenarioTimeout,
    TooSlow,
    NoGiveWay,
}

impl InfractionKind {
    pub fn penalty(self) -> f64 {
        match self {
            InfractionKind::PedestrianCollision => 0.50,
            InfractionKind::VehicleCollision => 0.60,
            InfractionKind::OtherCollision => 0.65,
            InfractionKind::RedLight
            | InfractionKind::ScenarioTimeout
            | InfractionKind::TooSlow
            | InfractionKind::NoGiveWay => 0.70,
        }
    }

    fn collision(class: AgentClass) -> Self {
        match class {
            AgentClass::Pedestrian => InfractionKind::PedestrianCollision,
            AgentClass::Vehicle => InfractionKind::VehicleCollision,
            AgentClass::StaticObject => InfractionKind::OtherCollision,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfractionEvent {
    pub kind: InfractionKind,
    pub step: usize,
    pub penalty: f64,
}

impl InfractionEvent {
    pub fn new(kind: InfractionKind, step: usize) -> Self {
        InfractionEvent {
            kind,
            step,
            penalty: kind.penalty(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Goal,
    OffRoad,
    RouteDeviation,
    AgentBlocked,
    RouteTimeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub route: String,
    pub rc: f64,
    pub infractions: Vec<InfractionEvent>,
    pub ds: f64,
    pub success: bool,
    pub terminal: Terminal,
    pub steps: usize,
}

impl EpisodeResult {
    /// Builds a result with `ds` and `success` derived from the other fields.
    pub fn new(route: impl Into<String>, rc: f64, infractions: Vec<InfractionEvent>, terminal: Terminal, steps: usize) -> Self {
        let ds = rc * infractions.iter().map(|e| e.penalty).product::<f64>();
        EpisodeResult {
            route: route.into(),
            rc,
            success: terminal == Terminal::Goal && infractions.is_empty(),
            infractions,
            ds,
            terminal,
            steps,
        }
    }
}

pub fn driving_score(results: &[EpisodeResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Empty("episode results"));
    }
    Ok(results.iter().map(|r| r.ds).sum::<f64>() / results.len() as f64)
}

pub fn success_rate(results: &[EpisodeResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Empty("episode results"));
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub name: String,
    pub scenario: Scenario,
    pub goal_radius: f64,
    pub time_limit: f64,
    /// Vehicles slow down when the ego blocks their path.
    pub reactive_agents: bool,
    /// The ego never moves (planner is not consulted).
    pub hold_ego: bool,
}

impl Route {
    pub fn new(scenario: Scenario) -> Self {
        Route {
            name: scenario.name.clone(),
            scenario,
            goal_radius: 2.0,
            time_limit: 300.0,
            reactive_agents: false,
            hold_ego: false,
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail too
    pub fn validate(&self) -> Result<()> {
        if !(self.goal_radius > 0.0) {
            return Err(Error::invalid(format!("routes[{}].goal_radius", self.name), "must be positive"));
        }
        if !(self.time_limit > 0.0) {
            return Err(Error::invalid(format!("routes[{}].time_limit", self.name), "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClosedLoopConfig {
    /// Plan waypoints executed before replanning.
    pub exec_steps: usize,
    pub scenario_timeout: f64,
    pub too_slow_speed: f64,
    pub too_slow_window: f64,
    /// Length of the corridor ahead of the ego that must be free for too_slow.
    pub too_slow_clearance: f64,
    pub blocked_time: f64,
    pub blocked_speed: f64,
    pub max_deviation: f64,
    pub give_way_radius: f64,
    /// Yield factor of reactive agents.
    pub reactive_yield: f64,
    pub reactive_reach: f64,
    /// Ego poses kept as planner history.
    pub history_len: usize,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        ClosedLoopConfig {
            exec_steps: 1,
            scenario_timeout: 240.0,
            too_slow_speed: 0.5,
            too_slow_window: 10.0,
            too_slow_clearance: 20.0,
            blocked_time: 180.0,
            blocked_speed: 0.1,
            max_deviation: 30.0,
            give_way_radius: 10.0,
            reactive_yield: 0.5,
            reactive_reach: 5.0,
            history_len: 4,
        }
    }
}

impl ClosedLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.exec_steps < 1 {
            return Err(Error::invalid("closed_loop.exec_steps", "must be at least 1"));
        }
        if !(self.reactive_yield > 0.0 && self.reactive_yield <= 1.0) {
            return Err(Error::invalid("closed_loop.reactive_yield", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Produces a horizon-length plan for the situation in `scenario`.
pub trait Planner {
    fn plan(&mut self, scenario: &Scenario) -> Result<Vec<Pose2>>;
}

impl<F: FnMut(&Scenario) -> Result<Vec<Pose2>>> Planner for F {
    fn plan(&mut self, scenario: &Scenario) -> Result<Vec<Pose2>> {
        self(scenario)
    }
}

/// The full two-stage pipeline as a closed-loop planner.
pub struct PipelinePlanner<'a> {
    pub anchors: &'a AnchorSet,
    pub config: PipelineConfig,
}

impl Planner for PipelinePlanner<'_> {
    fn plan(&mut self, scenario: &Scenario) -> Result<Vec<Pose2>> {
        let ev = evaluate(scenario, self.anchors, &self.config)?;
        Ok(ev.selected_record().trajectory.clone())
    }
}

/// An agent replayed along its log, with constant-velocity extrapolation
/// past the end and an optional virtual clock that slows when yielding.
struct AgentTrack<'a> {
    agent: &'a AgentInstance,
    path: Vec<Pose2>,
    clock: f64,
}

impl<'a> AgentTrack<'a> {
    fn new(agent: &'a AgentInstance) -> Self {
        let path = std::iter::once(agent.current).chain(agent.future.iter().copied()).collect();
        AgentTrack { agent, path, clock: 0.0 }
    }

    fn pose_at(&self, tau: f64) -> Pose2 {
        let last = self.path.len() - 1;
        if tau >= last as f64 {
            if self.agent.class == AgentClass::StaticObject || last == 0 {
                return self.path[last];
            }
            let (a, b) = (self.path[last - 1], self.path[last]);
            let extra = tau - last as f64;
            return Pose2::from_position(b.position() + (b.position() - a.position()) * extra, b.heading());
        }
        let i = tau.max(0.0).floor() as usize;
        let t = tau - i as f64;
        let (a, b) = (self.path[i], self.path[i + 1]);
        Pose2::from_position(
            a.position().lerp(b.position(), t),
            a.heading() + t * normalize_angle(b.heading() - a.heading()),
        )
    }

    fn present_at(&self, tau: f64) -> bool {
        let i = tau.round().max(1.0) as usize;
        self.agent.valid.get(i - 1).or(self.agent.valid.last()).copied().unwrap_or(true)
    }

    fn pose(&self) -> Pose2 {
        self.pose_at(self.clock)
    }

    fn bbox(&self) -> OrientedBox {
        self.agent.box_at(self.pose())
    }
}

fn forward_box(b: &OrientedBox, reach: f64) -> OrientedBox {
    let center = Pose2::from_position(b.pose.position() + b.pose.direction() * (b.half_length + reach * 0.5), b.pose.heading());
    OrientedBox::new(center, reach * 0.5, b.half_width)
}

struct Monitor {
    contacts: BTreeSet<u64>,
    lights: BTreeSet<usize>,
    zones: BTreeSet<usize>,
    timeout_fired: bool,
    too_slow_fired: bool,
    speeds: Vec<f64>,
    idle: f64,
    events: Vec<InfractionEvent>,
}

pub fn run_episode(route: &Route, planner: &mut dyn Planner, cfg: &ClosedLoopConfig) -> Result<EpisodeResult> {
    route.validate()?;
    cfg.validate()?;
    let sc = &route.scenario;
    let dt = sc.dt;
    let length = sc.route.arc_length();
    let mut tracks: Vec<AgentTrack> = sc.agents.iter().map(AgentTrack::new).collect();
    let mut ego = sc.ego.pose;
    let mut speed = sc.ego.speed;
    let mut history = sc.history.clone().unwrap_or_else(|| vec![ego]);
    let mut prev_plan: Option<Vec<Pose2>> = None;
    let mut mon = Monitor {
        contacts: BTreeSet::new(),
        lights: BTreeSet::new(),
        zones: BTreeSet::new(),
        timeout_fired: false,
        too_slow_fired: false,
        speeds: Vec::new(),
        idle: 0.0,
        events: Vec::new(),
    };
    let mut best_progress = sc.route.project(ego.position()).s.max(0.0);
    let mut step = 0usize;
    let window = (cfg.too_slow_window / dt).round().max(1.0) as usize;

    loop {
        let plan = if route.hold_ego {
            vec![ego; cfg.exec_steps]
        } else {
            let snap = snapshot(sc, &tracks, ego, speed, &history, prev_plan.as_deref(), step, cfg);
            let plan = planner.plan(&snap).map_err(|e| Error::Planner {
                step,
                source: Box::new(e),
            })?;
            if plan.len() < cfg.exec_steps || plan.iter().any(|p| !p.is_finite()) {
                return Err(Error::Planner {
                    step,
                    source: Box::new(Error::invalid("plan", format!("needs {} finite poses", cfg.exec_steps))),
                });
            }
            prev_plan = Some(plan.clone());
            plan
        };

        for &next in plan.iter().take(cfg.exec_steps) {
            let prev = ego;
            speed = next.position().distance(prev.position()) / dt;
            ego = next;
            step += 1;
            let t = step as f64 * dt;
            history.push(ego);
            if history.len() > cfg.history_len.max(1) {
                history.remove(0);
            }

            let ego_box = sc.ego_box(ego);
            for tr in tracks.iter_mut() {
                let mut rate = 1.0;
                if route.reactive_agents && tr.agent.class == AgentClass::Vehicle {
                    let ahead = tr.agent.box_at(tr.pose_at(tr.clock + 1.0));
                    if obb_overlap(&forward_box(&ahead, cfg.reactive_reach), &sc.ego_box(prev)) {
                        rate = cfg.reactive_yield;
                    }
                }
                tr.clock += rate;
            }

            detect(&mut mon, sc, &tracks, prev, ego, &ego_box, speed, t, step, window, cfg);

            let proj = sc.route.project(ego.position());
            best_progress = best_progress.max(proj.s);
            let rc = |p: f64| (100.0 * p / length).clamp(0.0, 100.0);
            let finish = |terminal: Terminal, rc_value: f64, mon: Monitor| {
                Ok(EpisodeResult::new(route.name.clone(), rc_value, mon.events, terminal, step))
            };
            if proj.s >= length - route.goal_radius {
                return finish(Terminal::Goal, 100.0, mon);
            }
            if sc.road.drivable.sample_or_zero(ego.position()) < 0.5 {
                return finish(Terminal::OffRoad, rc(best_progress), mon);
            }
            if proj.distance > cfg.max_deviation {
                return finish(Terminal::RouteDeviation, rc(best_progress), mon);
            }
            mon.idle = if speed < cfg.blocked_speed { mon.idle + dt } else { 0.0 };
            if mon.idle >= cfg.blocked_time - 1e-9 {
                return finish(Terminal::AgentBlocked, rc(best_progress), mon);
            }
            if t >= route.time_limit - 1e-9 {
                return finish(Terminal::RouteTimeout, rc(best_progress), mon);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn detect(
    mon: &mut Monitor,
    sc: &Scenario,
    tracks: &[AgentTrack],
    prev: Pose2,
    ego: Pose2,
    ego_box: &OrientedBox,
    speed: f64,
    t: f64,
    step: usize,
    window: usize,
    cfg: &ClosedLoopConfig,
) {
    for tr in tracks {
        let id = tr.agent.id;
        let hit = tr.present_at(tr.clock) && obb_overlap(ego_box, &tr.bbox());
        if hit && mon.contacts.insert(id) {
            mon.events.push(InfractionEvent::new(InfractionKind::collision(tr.agent.class), step));
        } else if !hit {
            mon.contacts.remove(&id);
        }
    }

    let half = sc.ego.length / 2.0;
    let front = ego.transform_point(Vec2::new(half, 0.0));
    let prev_front = prev.transform_point(Vec2::new(half, 0.0));
    for (i, light) in sc.road.traffic_lights.iter().enumerate() {
        let [a, b] = light.stop_line;
        let touching = segment_intersects_box(a, b, ego_box) || segments_intersect(prev_front, front, a, b);
        if touching && light.state_at(t) == LightState::Red {
            if mon.lights.insert(i) {
                mon.events.push(InfractionEvent::new(InfractionKind::RedLight, step));
            }
        } else if !touching {
            mon.lights.remove(&i);
        }
    }

    for (i, zone) in sc.road.give_way_zones.iter().enumerate() {
        let inside = ego_box.corners().iter().any(|&c| point_in_polygon(c, &zone.polygon))
            || point_in_polygon(ego.position(), &zone.polygon);
        if !inside {
            mon.zones.remove(&i);
            continue;
        }
        if mon.zones.insert(i) {
            let priority_near = tracks.iter().any(|tr| {
                zone.priority_agents.contains(&tr.agent.id)
                    && tr.present_at(tr.clock)
                    && distance_to_polygon(tr.pose().position(), &zone.polygon) <= cfg.give_way_radius
            });
            if priority_near {
                mon.events.push(InfractionEvent::new(InfractionKind::NoGiveWay, step));
            }
        }
    }

    if t > cfg.scenario_timeout && !mon.timeout_fired {
        mon.timeout_fired = true;
        mon.events.push(InfractionEvent::new(InfractionKind::ScenarioTimeout, step));
    }

    mon.speeds.push(speed);
    if !mon.too_slow_fired && mon.speeds.len() >= window {
        let recent = &mon.speeds[mon.speeds.len() - window..];
        let mean = recent.iter().sum::<f64>() / window as f64;
        if mean < cfg.too_slow_speed && path_clear(sc, tracks, ego_box, t, cfg) {
            mon.too_slow_fired = true;
            mon.events.push(InfractionEvent::new(InfractionKind::TooSlow, step));
        }
    }
}

/// No agent and no red stop line in the corridor ahead of the ego.
fn path_clear(sc: &Scenario, tracks: &[AgentTrack], ego_box: &OrientedBox, t: f64, cfg: &ClosedLoopConfig) -> bool {
    let ahead = forward_box(ego_box, cfg.too_slow_clearance);
    let agent_free = tracks
        .iter()
        .all(|tr| !(tr.present_at(tr.clock) && obb_overlap(&ahead, &tr.bbox())));
    let light_free = sc.road.traffic_lights.iter().all(|l| {
        l.state_at(t) != LightState::Red || !segment_intersects_box(l.stop_line[0], l.stop_line[1], &ahead)
    });
    agent_free && light_free
}

/// The planning problem as seen from the current simulation state. Light
/// phases are shifted so that time 0 is now.
#[allow(clippy::too_many_arguments)]
fn snapshot(
    sc: &Scenario,
    tracks: &[AgentTrack],
    ego: Pose2,
    speed: f64,
    history: &[Pose2],
    prev_plan: Option<&[Pose2]>,
    step: usize,
    cfg: &ClosedLoopConfig,
) -> Scenario {
    let h = sc.horizon_steps;
    let now = step as f64 * sc.dt;
    let mut out = sc.clone();
    out.ego.pose = ego;
    out.ego.speed = speed;
    out.expert = None;
    out.history = Some(history.to_vec());
    out.previous_plan = prev_plan
        .filter(|p| p.len() > cfg.exec_steps)
        .map(|p| p[cfg.exec_steps..].iter().copied().take(h).collect());
    out.agents = tracks
        .iter()
        .map(|tr| AgentInstance {
            current: tr.pose(),
            future: (1..=h).map(|k| tr.pose_at(tr.clock + k as f64)).collect(),
            valid: (1..=h).map(|k| tr.present_at(tr.clock + k as f64)).collect(),
            ..tr.agent.clone()
        })
        .collect();
    for light in &mut out.road.traffic_lights {
        light.phases = light
            .phases
            .iter()
            .filter(|p| p.end > now)
            .map(|p| LightPhase {
                start: (p.start - now).max(0.0),
                end: p.end - now,
                state: p.state,
            })
            .collect();
    }
    out
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    format_version: u32,
    #[serde(default)]
    defaults: RouteDefaults,
    routes: Vec<RouteEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RouteDefaults {
    goal_radius: f64,
    time_limit: f64,
    reactive_agents: bool,
    hold_ego: bool,
}

impl Default for RouteDefaults {
    fn default() -> Self {
        RouteDefaults {
            goal_radius: 2.0,
            time_limit: 300.0,
            reactive_agents: false,
            hold_ego: false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RouteEntry {
    name: Option<String>,
    scenario: String,
    goal_radius: Option<f64>,
    time_limit: Option<f64>,
    reactive_agents: Option<bool>,
    hold_ego: Option<bool>,
}

/// Reads a route suite manifest; scenario paths are relative to the manifest.
pub fn load_suite(path: impl AsRef<Path>) -> Result<Vec<Route>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SuiteFile = toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
    if file.format_version != 1 {
        return Err(Error::invalid(
            format!("{}: format_version", path.display()),
            format!("unsupported version {}", file.format_version),
        ));
    }
    if file.routes.is_empty() {
        return Err(Error::Empty("route suite"));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let d = &file.defaults;
    file.routes
        .iter()
        .map(|r| {
            let scenario = load_scenario_file(base.join(&r.scenario))?;
            let route = Route {
                name: r.name.clone().unwrap_or_else(|| scenario.name.clone()),
                scenario,
                goal_radius: r.goal_radius.unwrap_or(d.goal_radius),
                time_limit: r.time_limit.unwrap_or(d.time_limit),
                reactive_agents: r.reactive_agents.unwrap_or(d.reactive_agents),
                hold_ego: r.hold_ego.unwrap_or(d.hold_ego),
            };
            route.validate()?;
            Ok(route)
        })
        .collect()
}
