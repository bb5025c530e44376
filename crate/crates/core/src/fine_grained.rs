//! Per-agent, per-step collision-free scores and per-step drivable-area
//! scores, with their product aggregates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ego_keypoints, min_distance, obb_overlap, Pose2};
use crate::world::{Scenario, SparseWorld};

const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineGrainedParams {
    /// Clearance at which a pair counts as fully collision-free.
    pub safe_distance: f64,
    /// Inflation of the ego box for the per-step drivable check.
    pub margin: f64,
}

impl Default for FineGrainedParams {
    fn default() -> Self {
        FineGrainedParams {
            safe_distance: 3.0,
            margin: 0.1,
        }
    }
}

impl FineGrainedParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.safe_distance > 0.0 && self.safe_distance.is_finite()) {
            return Err(Error::invalid("fine_grained.safe_distance", "must be positive"));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::invalid("fine_grained.margin", "must be non-negative"));
        }
        Ok(())
    }
}

/// Rows are agents (scenario order), columns are steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwncMatrix {
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwdacVector {
    pub step_scores: Vec<f64>,
    /// Drivable samples at the nine ego keypoints per step.
    pub map_samples: Vec<[f64; 9]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineGrainedScores {
    pub pwnc_total: f64,
    pub twdac_total: f64,
    /// Natural logs of the totals with the underflow floor applied per factor.
    pub pwnc_log: f64,
    pub twdac_log: f64,
    pub matrix: PwncMatrix,
    pub vector: TwdacVector,
}

/// Product of probabilities computed as a sum of logs. Any exact zero gives
/// exactly 0. Logs are summed in sorted order so the result does not depend
/// on the order of the factors. Returns `(product, log_product)`.
pub fn log_product(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let mut logs = Vec::new();
    let mut zero = false;
    for v in values {
        if v <= 0.0 {
            zero = true;
        }
        logs.push(v.max(LOG_FLOOR).ln());
    }
    logs.sort_by(f64::total_cmp);
    let log: f64 = logs.iter().sum();
    if zero {
        (0.0, log)
    } else {
        (log.exp(), log)
    }
}

pub fn pwnc_oracle(world: &SparseWorld, scenario: &Scenario, params: &FineGrainedParams) -> PwncMatrix {
    let values = scenario
        .agents
        .iter()
        .zip(&world.agent_futures)
        .map(|(agent, fut)| {
            world
                .ego_traj
                .iter()
                .enumerate()
                .map(|(h, &ego)| {
                    if !agent.is_valid(h) {
                        return 1.0;
                    }
                    let (e, a) = (scenario.ego_box(ego), agent.box_at(fut[h]));
                    if obb_overlap(&e, &a) {
                        0.0
                    } else {
                        (min_distance(&e, &a) / params.safe_distance).min(1.0)
                    }
                })
                .collect()
        })
        .collect();
    PwncMatrix { values }
}

pub fn pwnc_aggregate(m: &PwncMatrix) -> f64 {
    log_product(m.values.iter().flatten().copied()).0
}

pub fn twdac_oracle(ego_traj: &[Pose2], scenario: &Scenario, params: &FineGrainedParams) -> TwdacVector {
    let grid = &scenario.road.drivable;
    let mut step_scores = Vec::with_capacity(ego_traj.len());
    let mut map_samples = Vec::with_capacity(ego_traj.len());
    for &p in ego_traj {
        let b = scenario.ego_box(p);
        let corners = b.inflated(params.margin).corners().map(|c| grid.sample_or_zero(c));
        let score = if corners.iter().all(|&v| v >= 0.5) {
            1.0
        } else {
            corners.iter().sum::<f64>() / 4.0
        };
        step_scores.push(score);
        map_samples.push(ego_keypoints(&b).map(|k| grid.sample_or_zero(k)));
    }
    TwdacVector {
        step_scores,
        map_samples,
    }
}

fn twdac_factors(v: &TwdacVector) -> impl Iterator<Item = f64> + '_ {
    v.step_scores
        .iter()
        .copied()
        .chain(v.map_samples.iter().flat_map(|s| s.iter().copied()))
}

pub fn twdac_aggregate(v: &TwdacVector) -> f64 {
    log_product(twdac_factors(v)).0
}

pub fn fine_grained_scores(world: &SparseWorld, scenario: &Scenario, params: &FineGrainedParams) -> FineGrainedScores {
    let matrix = pwnc_oracle(world, scenario, params);
    let vector = twdac_oracle(&world.ego_traj, scenario, params);
    let (pwnc_total, pwnc_log) = log_product(matrix.values.iter().flatten().copied());
    let (twdac_total, twdac_log) = log_product(twdac_factors(&vector));
    FineGrainedScores {
        pwnc_total,
        twdac_total,
        pwnc_log,
        twdac_log,
        matrix,
        vector,
    }
}
