//! Scenario data model: road structure, surrounding agents with their logged
//! futures, the ego vehicle, and the per-candidate sparse worlds.

mod format;
mod refine;

pub use format::{load_scenario, load_scenario_file, save_scenario, SCENARIO_FORMAT_VERSION};
pub use refine::{build_sparse_worlds, refine_world, smooth_trajectory, RefineParams, SparseWorld};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Polyline, Pose2, ProbGrid, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentClass {
    Vehicle,
    Pedestrian,
    StaticObject,
}

/// A surrounding road user. `future[h]` is its pose at time `(h + 1)·dt`;
/// `current` is its pose at time 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentInstance {
    pub id: u64,
    pub class: AgentClass,
    pub length: f64,
    pub width: f64,
    pub current: Pose2,
    pub future: Vec<Pose2>,
    pub valid: Vec<bool>,
}

impl AgentInstance {
    pub fn box_at(&self, pose: Pose2) -> OrientedBox {
        OrientedBox::from_dims(pose, self.length, self.width)
    }

    pub fn is_valid(&self, step: usize) -> bool {
        self.valid.get(step).copied().unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightState {
    Red,
    Green,
}

/// A light phase active on `[start, end)` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightPhase {
    pub start: f64,
    pub end: f64,
    pub state: LightState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficLight {
    pub stop_line: [Vec2; 2],
    pub phases: Vec<LightPhase>,
}

impl TrafficLight {
    /// State at time `t`; times not covered by any phase count as green.
    pub fn state_at(&self, t: f64) -> LightState {
        self.phases
            .iter()
            .find(|p| p.start <= t && t < p.end)
            .map_or(LightState::Green, |p| p.state)
    }
}

/// Area where the agents listed in `priority_agents` have right of way.
#[derive(Debug, Clone, PartialEq)]
pub struct GiveWayZone {
    pub polygon: Vec<Vec2>,
    pub priority_agents: Vec<u64>,
}

/// Lane centerlines are directed: travel direction follows point order.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadModel {
    pub drivable: ProbGrid,
    pub centerlines: Vec<Polyline>,
    pub traffic_lights: Vec<TrafficLight>,
    pub give_way_zones: Vec<GiveWayZone>,
}

impl RoadModel {
    pub fn new(drivable: ProbGrid) -> Self {
        RoadModel {
            drivable,
            centerlines: Vec::new(),
            traffic_lights: Vec::new(),
            give_way_zones: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoState {
    pub pose: Pose2,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
}

impl EgoState {
    pub fn box_at(&self, pose: Pose2) -> OrientedBox {
        OrientedBox::from_dims(pose, self.length, self.width)
    }
}

/// A complete planning problem. Trajectories (expert, candidates, agent
/// futures) hold `horizon_steps` poses at times `dt, 2·dt, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub road: RoadModel,
    pub ego: EgoState,
    pub agents: Vec<AgentInstance>,
    pub route: Polyline,
    pub expert: Option<Vec<Pose2>>,
    /// Past ego poses, oldest first, ending at time 0.
    pub history: Option<Vec<Pose2>>,
    /// The previous frame's plan, time-aligned with the current horizon.
    pub previous_plan: Option<Vec<Pose2>>,
    pub horizon_steps: usize,
    pub dt: f64,
}

impl Scenario {
    /// Checks every invariant, naming the offending field on failure.
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail too
    pub fn validate(&self) -> Result<()> {
        let h = self.horizon_steps;
        if h < 1 {
            return Err(Error::invalid("horizon_steps", "must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        let ego = &self.ego;
        if !(ego.length > 0.0 && ego.width > 0.0 && ego.length.is_finite() && ego.width.is_finite()) {
            return Err(Error::invalid("ego.length/width", "must be positive"));
        }
        if !(ego.speed >= 0.0 && ego.speed.is_finite()) {
            return Err(Error::invalid("ego.speed", "must be non-negative"));
        }
        if !ego.pose.is_finite() {
            return Err(Error::invalid("ego.pose", "must be finite"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            let path = format!("agents[{i}] (id {})", a.id);
            if !seen.insert(a.id) {
                return Err(Error::invalid(path, "duplicate id"));
            }
            if !(a.length > 0.0 && a.width > 0.0) {
                return Err(Error::invalid(format!("{path}.length/width"), "must be positive"));
            }
            if a.future.len() != h {
                return Err(Error::invalid(
                    format!("{path}.future"),
                    format!("has {} poses, horizon is {h}", a.future.len()),
                ));
            }
            if a.valid.len() != h {
                return Err(Error::invalid(
                    format!("{path}.valid"),
                    format!("has {} entries, horizon is {h}", a.valid.len()),
                ));
            }
            if !a.current.is_finite() || a.future.iter().any(|p| !p.is_finite()) {
                return Err(Error::invalid(path, "non-finite pose"));
            }
        }
        for (name, traj) in [("expert", &self.expert), ("previous_plan", &self.previous_plan)] {
            if let Some(t) = traj {
                if name == "expert" && t.len() != h {
                    return Err(Error::invalid(name, format!("has {} poses, horizon is {h}", t.len())));
                }
                if t.is_empty() || t.iter().any(|p| !p.is_finite()) {
                    return Err(Error::invalid(name, "must be non-empty and finite"));
                }
            }
        }
        if let Some(hist) = &self.history {
            if hist.is_empty() || hist.iter().any(|p| !p.is_finite()) {
                return Err(Error::invalid("history", "must be non-empty and finite"));
            }
        }
        for (i, light) in self.road.traffic_lights.iter().enumerate() {
            let mut phases = light.phases.clone();
            phases.sort_by(|a, b| a.start.total_cmp(&b.start));
            for (j, p) in phases.iter().enumerate() {
                if !(p.start < p.end) {
                    return Err(Error::invalid(
                        format!("road.traffic_lights[{i}].phases[{j}]"),
                        "start must precede end",
                    ));
                }
            }
            if phases.windows(2).any(|w| w[1].start < w[0].end) {
                return Err(Error::invalid(
                    format!("road.traffic_lights[{i}].phases"),
                    "intervals overlap",
                ));
            }
            if light.stop_line[0].distance(light.stop_line[1]) <= Polyline::MIN_SEPARATION {
                return Err(Error::invalid(format!("road.traffic_lights[{i}].stop_line"), "degenerate"));
            }
        }
        for (i, z) in self.road.give_way_zones.iter().enumerate() {
            if z.polygon.len() < 3 {
                return Err(Error::invalid(format!("road.give_way_zones[{i}].polygon"), "needs 3+ points"));
            }
        }
        Ok(())
    }

    pub fn ego_box(&self, pose: Pose2) -> OrientedBox {
        self.ego.box_at(pose)
    }
}
