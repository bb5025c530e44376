//! TOML scenario files. Field-by-field reference: `docs/formats.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AgentClass, AgentInstance, EgoState, GiveWayZone, LightPhase, RoadModel, Scenario, TrafficLight,
};
use crate::error::{Error, Result};
use crate::geometry::{Polyline, Pose2, ProbGrid, Vec2};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

// Scalars and plain arrays must precede tables for TOML output.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    format_version: u32,
    name: String,
    horizon_steps: usize,
    dt: f64,
    route: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expert: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    history: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    previous_plan: Option<Vec<[f64; 3]>>,
    ego: EgoFile,
    road: RoadFile,
    #[serde(default)]
    agents: Vec<AgentFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EgoFile {
    pose: [f64; 3],
    speed: f64,
    length: f64,
    width: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoadFile {
    drivable: GridFile,
    #[serde(default)]
    centerlines: Vec<LineFile>,
    #[serde(default)]
    traffic_lights: Vec<LightFile>,
    #[serde(default)]
    give_way_zones: Vec<ZoneFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    origin: [f64; 2],
    resolution: f64,
    width: usize,
    height: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineFile {
    points: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LightFile {
    stop_line: [[f64; 2]; 2],
    phases: Vec<LightPhase>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZoneFile {
    polygon: Vec<[f64; 2]>,
    priority_agents: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    id: u64,
    class: AgentClass,
    length: f64,
    width: f64,
    current: [f64; 3],
    future: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    valid: Option<Vec<bool>>,
}

fn poses(raw: &[[f64; 3]]) -> Vec<Pose2> {
    raw.iter().map(|&p| Pose2::from(p)).collect()
}

fn raw_poses(p: &[Pose2]) -> Vec<[f64; 3]> {
    p.iter().map(|&p| p.into()).collect()
}

fn points(raw: &[[f64; 2]]) -> Vec<Vec2> {
    raw.iter().map(|&p| Vec2::from(p)).collect()
}

fn raw_points(p: &[Vec2]) -> Vec<[f64; 2]> {
    p.iter().map(|&p| p.into()).collect()
}

fn polyline(raw: &[[f64; 2]], path: &str) -> Result<Polyline> {
    Polyline::new(points(raw)).map_err(|e| match e {
        Error::Validation { path: p, message } => Error::invalid(format!("{path}.{p}"), message),
        other => other,
    })
}

fn with_prefix(prefix: &str, e: Error) -> Error {
    match e {
        Error::Validation { path, message } => Error::invalid(format!("{prefix}.{path}"), message),
        Error::LengthMismatch { what, expected, actual } => Error::LengthMismatch {
            what: format!("{prefix}.{what}"),
            expected,
            actual,
        },
        other => other,
    }
}

/// Parses and validates a scenario file.
pub fn load_scenario(bytes: &[u8]) -> Result<Scenario> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse("scenario", e))?;
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::parse("scenario", e))?;
    if file.format_version != SCENARIO_FORMAT_VERSION {
        return Err(Error::invalid(
            "format_version",
            format!("unsupported version {}", file.format_version),
        ));
    }
    let g = &file.road.drivable;
    let drivable = ProbGrid::new(Vec2::from(g.origin), g.resolution, g.width, g.height, g.values.clone())
        .map_err(|e| with_prefix("road", e))?;
    let centerlines = file
        .road
        .centerlines
        .iter()
        .enumerate()
        .map(|(i, l)| polyline(&l.points, &format!("road.centerlines[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let traffic_lights = file
        .road
        .traffic_lights
        .iter()
        .map(|l| TrafficLight {
            stop_line: [l.stop_line[0].into(), l.stop_line[1].into()],
            phases: l.phases.clone(),
        })
        .collect();
    let give_way_zones = file
        .road
        .give_way_zones
        .iter()
        .map(|z| GiveWayZone {
            polygon: points(&z.polygon),
            priority_agents: z.priority_agents.clone(),
        })
        .collect();
    let agents = file
        .agents
        .iter()
        .map(|a| AgentInstance {
            id: a.id,
            class: a.class,
            length: a.length,
            width: a.width,
            current: a.current.into(),
            future: poses(&a.future),
            valid: a.valid.clone().unwrap_or_else(|| vec![true; a.future.len()]),
        })
        .collect();
    let scenario = Scenario {
        name: file.name,
        road: RoadModel {
            drivable,
            centerlines,
            traffic_lights,
            give_way_zones,
        },
        ego: EgoState {
            pose: file.ego.pose.into(),
            speed: file.ego.speed,
            length: file.ego.length,
            width: file.ego.width,
        },
        agents,
        route: polyline(&file.route, "route")?,
        expert: file.expert.as_deref().map(poses),
        history: file.history.as_deref().map(poses),
        previous_plan: file.previous_plan.as_deref().map(poses),
        horizon_steps: file.horizon_steps,
        dt: file.dt,
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_scenario(&bytes).map_err(|e| match e {
        Error::Parse { context, message } => Error::Parse {
            context: format!("{} ({context})", path.display()),
            message,
        },
        Error::Validation { path: field, message } => {
            Error::invalid(format!("{}: {field}", path.display()), message)
        }
        other => other,
    })
}

/// Canonical text form. `save_scenario(&load_scenario(x)?)` reproduces `x`
/// byte for byte whenever `x` was itself produced by this function.
pub fn save_scenario(s: &Scenario) -> String {
    let g = &s.road.drivable;
    let file = ScenarioFile {
        format_version: SCENARIO_FORMAT_VERSION,
        name: s.name.clone(),
        horizon_steps: s.horizon_steps,
        dt: s.dt,
        route: raw_points(s.route.points()),
        expert: s.expert.as_deref().map(raw_poses),
        history: s.history.as_deref().map(raw_poses),
        previous_plan: s.previous_plan.as_deref().map(raw_poses),
        ego: EgoFile {
            pose: s.ego.pose.into(),
            speed: s.ego.speed,
            length: s.ego.length,
            width: s.ego.width,
        },
        road: RoadFile {
            drivable: GridFile {
                origin: g.origin().into(),
                resolution: g.resolution(),
                width: g.width(),
                height: g.height(),
                values: g.values().to_vec(),
            },
            centerlines: s
                .road
                .centerlines
                .iter()
                .map(|l| LineFile {
                    points: raw_points(l.points()),
                })
                .collect(),
            traffic_lights: s
                .road
                .traffic_lights
                .iter()
                .map(|l| LightFile {
                    stop_line: [l.stop_line[0].into(), l.stop_line[1].into()],
                    phases: l.phases.clone(),
                })
                .collect(),
            give_way_zones: s
                .road
                .give_way_zones
                .iter()
                .map(|z| ZoneFile {
                    polygon: raw_points(&z.polygon),
                    priority_agents: z.priority_agents.clone(),
                })
                .collect(),
        },
        agents: s
            .agents
            .iter()
            .map(|a| AgentFile {
                id: a.id,
                class: a.class,
                length: a.length,
                width: a.width,
                current: a.current.into(),
                future: raw_poses(&a.future),
                valid: Some(a.valid.clone()),
            })
            .collect(),
    };
    toml::to_string(&file).expect("scenario serialization is infallible")
}
