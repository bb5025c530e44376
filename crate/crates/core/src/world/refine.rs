use serde::{Deserialize, Serialize};

use super::{AgentClass, AgentInstance, Scenario};
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, obb_overlap, OrientedBox, Pose2};

/// Parameters of the reactive refinement rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    /// Reaction delay in steps: an agent at step `h` reacts to the ego at `h - reaction_steps`.
    pub reaction_steps: usize,
    /// Look-ahead distance in front of the agent that counts as a conflict.
    pub react_distance: f64,
    /// Speed factor applied to a yielding agent.
    pub yield_factor: f64,
    /// Smoothing passes applied to the ego candidate.
    pub iterations: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            reaction_steps: 1,
            react_distance: 5.0,
            yield_factor: 0.5,
            iterations: 1,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.react_distance >= 0.0 && self.react_distance.is_finite()) {
            return Err(Error::invalid("refine.react_distance", "must be non-negative"));
        }
        if !(self.yield_factor > 0.0 && self.yield_factor <= 1.0) {
            return Err(Error::invalid("refine.yield_factor", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// One candidate ego trajectory paired with its own copy of the agent futures.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseWorld {
    pub candidate_index: usize,
    /// The unrefined candidate, kept so refinement can be recomputed from scratch.
    pub candidate: Vec<Pose2>,
    pub ego_traj: Vec<Pose2>,
    /// Indexed like `Scenario::agents`.
    pub agent_futures: Vec<Vec<Pose2>>,
}

pub fn build_sparse_worlds(candidates: &[Vec<Pose2>], scenario: &Scenario) -> Result<Vec<SparseWorld>> {
    let h = scenario.horizon_steps;
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if c.len() != h {
                return Err(Error::LengthMismatch {
                    what: format!("candidate {i}"),
                    expected: h,
                    actual: c.len(),
                });
            }
            Ok(SparseWorld {
                candidate_index: i,
                candidate: c.clone(),
                ego_traj: c.clone(),
                agent_futures: scenario.agents.iter().map(|a| a.future.clone()).collect(),
            })
        })
        .collect()
}

/// Passes of a 1-2-1 kernel over interior waypoints; the first and last
/// waypoints stay fixed.
pub fn smooth_trajectory(traj: &[Pose2], passes: usize) -> Vec<Pose2> {
    let mut cur = traj.to_vec();
    if cur.len() < 3 {
        return cur;
    }
    for _ in 0..passes {
        let prev = cur.clone();
        for i in 1..prev.len() - 1 {
            let (a, b, c) = (prev[i - 1], prev[i], prev[i + 1]);
            let pos = (a.position() + b.position() * 2.0 + c.position()) * 0.25;
            let dh = normalize_angle(a.heading() - b.heading()) + normalize_angle(c.heading() - b.heading());
            cur[i] = Pose2::from_position(pos, b.heading() + 0.25 * dh);
        }
    }
    cur
}

/// Recomputes the world from its raw candidate and the logged agent futures,
/// so applying it to its own output gives the same result.
pub fn refine_world(world: &SparseWorld, scenario: &Scenario, params: &RefineParams) -> SparseWorld {
    let ego_traj = smooth_trajectory(&world.candidate, params.iterations);
    let ego_box_at = |step: isize| {
        let pose = if step < 0 {
            scenario.ego.pose
        } else {
            ego_traj[(step as usize).min(ego_traj.len() - 1)]
        };
        scenario.ego.box_at(pose)
    };
    let agent_futures = scenario
        .agents
        .iter()
        .map(|agent| match agent.class {
            AgentClass::Vehicle => yield_future(agent, &ego_box_at, params),
            AgentClass::Pedestrian | AgentClass::StaticObject => agent.future.clone(),
        })
        .collect();
    SparseWorld {
        candidate_index: world.candidate_index,
        candidate: world.candidate.clone(),
        ego_traj,
        agent_futures,
    }
}

/// Forward-looking corridor: the agent box stretched `reach` meters ahead.
fn corridor(b: &OrientedBox, reach: f64) -> OrientedBox {
    let shift = b.pose.direction() * (reach * 0.5);
    let center = Pose2::from_position(b.pose.position() + shift, b.pose.heading());
    OrientedBox::new(center, b.half_length + reach * 0.5, b.half_width)
}

/// Replays the agent along its logged path. Until the first conflict the
/// logged poses are kept verbatim; from then on every step covers
/// `yield_factor` of its logged distance.
fn yield_future(
    agent: &AgentInstance,
    ego_box_at: &dyn Fn(isize) -> OrientedBox,
    params: &RefineParams,
) -> Vec<Pose2> {
    let path: Vec<Pose2> = std::iter::once(agent.current).chain(agent.future.iter().copied()).collect();
    let mut cum = Vec::with_capacity(path.len());
    cum.push(0.0);
    for w in path.windows(2) {
        cum.push(cum.last().unwrap() + w[0].position().distance(w[1].position()));
    }

    let mut out = Vec::with_capacity(agent.future.len());
    let mut yielding = false;
    let mut s = 0.0;
    for h in 0..agent.future.len() {
        let step_len = cum[h + 1] - cum[h];
        if !yielding {
            let tentative = agent.future[h];
            if agent.is_valid(h) {
                let ego = ego_box_at(h as isize - params.reaction_steps as isize);
                let reach = corridor(&agent.box_at(tentative), params.react_distance);
                yielding = obb_overlap(&reach, &ego);
            }
            if !yielding {
                s = cum[h + 1];
                out.push(tentative);
                continue;
            }
        }
        s += params.yield_factor * step_len;
        out.push(pose_along(&path, &cum, s));
    }
    out
}

fn pose_along(path: &[Pose2], cum: &[f64], s: f64) -> Pose2 {
    let seg = match cum.iter().position(|&c| c >= s) {
        Some(0) => return path[0],
        Some(i) => i,
        None => return *path.last().unwrap(),
    };
    let (a, b) = (path[seg - 1], path[seg]);
    let len = cum[seg] - cum[seg - 1];
    if len <= 0.0 {
        return b;
    }
    let t = (s - cum[seg - 1]) / len;
    let heading = a.heading() + t * normalize_angle(b.heading() - a.heading());
    Pose2::from_position(a.position().lerp(b.position(), t), heading)
}
