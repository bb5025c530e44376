//! Scenario builders shared by the integration test targets.
#![allow(dead_code)]

use std::path::Path;

use trajsafe_core::anchors::{fit_anchors, AnchorSet};
use trajsafe_core::geometry::{Polyline, Pose2, ProbGrid, Vec2};
use trajsafe_core::scenario_gen::{corpus_from, generate, GenSpec, Range, Template};
use trajsafe_core::world::{save_scenario, AgentClass, AgentInstance, EgoState, RoadModel, Scenario};

/// Fully drivable 200 m x 100 m area, route from the origin along +x.
pub fn open_road(name: &str, route_len: f64, speed: f64, horizon: usize) -> Scenario {
    let grid = ProbGrid::uniform(Vec2::new(-50.0, -50.0), 1.0, 200, 100, 1.0).unwrap();
    let mut road = RoadModel::new(grid);
    road.centerlines
        .push(Polyline::new(vec![Vec2::new(-40.0, 0.0), Vec2::new(140.0, 0.0)]).unwrap());
    Scenario {
        name: name.into(),
        road,
        ego: EgoState {
            pose: Pose2::new(0.0, 0.0, 0.0),
            speed,
            length: 4.0,
            width: 2.0,
        },
        agents: Vec::new(),
        route: Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(route_len, 0.0)]).unwrap(),
        expert: None,
        history: None,
        previous_plan: None,
        horizon_steps: horizon,
        dt: 0.5,
    }
}

pub fn agent(id: u64, class: AgentClass, dims: (f64, f64), current: Pose2, future: Vec<Pose2>) -> AgentInstance {
    let n = future.len();
    AgentInstance {
        id,
        class,
        length: dims.0,
        width: dims.1,
        current,
        future,
        valid: vec![true; n],
    }
}

/// A 30 m truck overtaking at 120 m/s: it sweeps through the ego once,
/// whatever the ego does.
pub fn with_truck(mut s: Scenario) -> Scenario {
    let h = s.horizon_steps;
    let future = (1..=h).map(|k| Pose2::new(-60.0 + 60.0 * k as f64, 0.0, 0.0)).collect();
    s.agents.push(agent(9, AgentClass::Vehicle, (30.0, 6.0), Pose2::new(-60.0, 0.0, 0.0), future));
    s
}

/// Anchors fitted on experts of generated straight-road scenarios.
pub fn straight_anchors(horizon: usize, k: usize) -> AnchorSet {
    let spec = GenSpec {
        horizon_steps: horizon,
        speed: Range::new(5.0, 10.0),
        ..GenSpec::new(Template::Straight, 101, 80)
    };
    let corpus = corpus_from(&generate(&spec).unwrap()).unwrap();
    fit_anchors(&corpus, k, 7).unwrap()
}

/// Writes each scenario next to a suite manifest listing them in order.
pub fn write_suite(dir: &Path, scenarios: &[Scenario]) -> std::path::PathBuf {
    let mut manifest = String::from("format_version = 1\n\n");
    for s in scenarios {
        let file = format!("{}.toml", s.name);
        std::fs::write(dir.join(&file), save_scenario(s)).unwrap();
        manifest.push_str(&format!("[[routes]]\nscenario = \"{file}\"\n\n"));
    }
    let path = dir.join("suite.toml");
    std::fs::write(&path, manifest).unwrap();
    path
}
