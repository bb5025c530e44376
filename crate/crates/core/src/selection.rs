//! Two-stage weighted log-sum candidate selection.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::error::{Error, Result};
use crate::fine_grained::FineGrainedScores;
use crate::geometry::{Pose2, Vec2};
use crate::metrics::SubscoreVector;
use crate::world::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalWeights {
    pub imitation: f64,
    pub nc: f64,
    pub dac: f64,
    pub ttc: f64,
    pub ep: f64,
    pub c: f64,
}

impl Default for ProposalWeights {
    fn default() -> Self {
        ProposalWeights {
            imitation: 1.0,
            nc: 2.0,
            dac: 2.0,
            ttc: 1.0,
            ep: 1.0,
            c: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinalWeights {
    pub imitation: f64,
    pub pwnc: f64,
    pub twdac: f64,
    pub ep: f64,
    pub c: f64,
    pub ttc: f64,
}

impl Default for FinalWeights {
    fn default() -> Self {
        FinalWeights {
            imitation: 1.0,
            pwnc: 3.0,
            twdac: 3.0,
            ep: 1.0,
            c: 1.0,
            ttc: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub proposal: ProposalWeights,
    #[serde(rename = "final")]
    pub final_: FinalWeights,
    /// Number of candidates kept after the proposal stage.
    pub top_k: usize,
    /// Probability floor applied before taking logs.
    pub epsilon: f64,
    /// Decay rate of the imitation score per meter of deviation from the expert.
    pub imitation_lambda: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            proposal: ProposalWeights::default(),
            final_: FinalWeights::default(),
            top_k: 128,
            epsilon: 1e-6,
            imitation_lambda: 0.1,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.proposal;
        let f = &self.final_;
        let weights = [
            ("selection.proposal.imitation", p.imitation),
            ("selection.proposal.nc", p.nc),
            ("selection.proposal.dac", p.dac),
            ("selection.proposal.ttc", p.ttc),
            ("selection.proposal.ep", p.ep),
            ("selection.proposal.c", p.c),
            ("selection.final.imitation", f.imitation),
            ("selection.final.pwnc", f.pwnc),
            ("selection.final.twdac", f.twdac),
            ("selection.final.ep", f.ep),
            ("selection.final.c", f.c),
            ("selection.final.ttc", f.ttc),
        ];
        for (name, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        if self.top_k < 1 {
            return Err(Error::invalid("selection.top_k", "must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-3) {
            return Err(Error::invalid("selection.epsilon", "must lie in (0, 1e-3]"));
        }
        if !(self.imitation_lambda > 0.0 && self.imitation_lambda.is_finite()) {
            return Err(Error::invalid("selection.imitation_lambda", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub trajectory: Vec<Pose2>,
    pub imitation: f64,
    pub sub: SubscoreVector,
    pub fine: Option<FineGrainedScores>,
}

/// One itemized term `weight * ln(max(value, epsilon))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreTerm {
    pub name: &'static str,
    pub weight: f64,
    pub value: f64,
    pub log_term: f64,
}

fn term(name: &'static str, weight: f64, value: f64, eps: f64) -> ScoreTerm {
    ScoreTerm {
        name,
        weight,
        value,
        log_term: weight * value.max(eps).ln(),
    }
}

pub fn proposal_terms(c: &Candidate, cfg: &SelectionConfig) -> [ScoreTerm; 6] {
    let w = &cfg.proposal;
    let e = cfg.epsilon;
    [
        term("imitation", w.imitation, c.imitation, e),
        term("nc", w.nc, c.sub.nc, e),
        term("dac", w.dac, c.sub.dac, e),
        term("ttc", w.ttc, c.sub.ttc, e),
        term("ep", w.ep, c.sub.ep, e),
        term("c", w.c, c.sub.c, e),
    ]
}

pub fn final_terms(c: &Candidate, cfg: &SelectionConfig) -> Result<[ScoreTerm; 6]> {
    let fine = c
        .fine
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("candidate {}", c.index), "missing fine-grained scores"))?;
    let w = &cfg.final_;
    let e = cfg.epsilon;
    Ok([
        term("imitation", w.imitation, c.imitation, e),
        term("pwnc", w.pwnc, fine.pwnc_total, e),
        term("twdac", w.twdac, fine.twdac_total, e),
        term("ep", w.ep, c.sub.ep, e),
        term("c", w.c, c.sub.c, e),
        term("ttc", w.ttc, c.sub.ttc, e),
    ])
}

fn total(terms: &[ScoreTerm]) -> f64 {
    terms.iter().map(|t| t.log_term).sum()
}

pub fn proposal_score(c: &Candidate, cfg: &SelectionConfig) -> f64 {
    total(&proposal_terms(c, cfg))
}

pub fn final_score(c: &Candidate, cfg: &SelectionConfig) -> Result<f64> {
    Ok(total(&final_terms(c, cfg)?))
}

/// Positions (into `candidates`) of the `top_k` best proposal scores, best
/// first; equal scores keep the lower candidate index first.
pub fn proposal_stage(candidates: &[Candidate], cfg: &SelectionConfig) -> Result<Vec<usize>> {
    if candidates.len() < cfg.top_k {
        return Err(Error::TooFewCandidates {
            needed: cfg.top_k,
            available: candidates.len(),
        });
    }
    let scores: Vec<f64> = candidates.iter().map(|c| proposal_score(c, cfg)).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(candidates[a].index.cmp(&candidates[b].index))
    });
    order.truncate(cfg.top_k);
    Ok(order)
}

/// The `index` of the best final score; ties go to higher imitation, then
/// lower index.
pub fn final_select(candidates: &[Candidate], cfg: &SelectionConfig) -> Result<usize> {
    let mut best: Option<(&Candidate, f64)> = None;
    for c in candidates {
        let s = final_score(c, cfg)?;
        let better = match best {
            None => true,
            Some((b, bs)) => match s.total_cmp(&bs) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => match c.imitation.total_cmp(&b.imitation) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => c.index < b.index,
                },
            },
        };
        if better {
            best = Some((c, s));
        }
    }
    best.map(|(c, _)| c.index).ok_or(Error::Empty("candidate set"))
}

fn flat_l2(a: &[Vec2], b: &[Vec2]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.distance(*q).powi(2)).sum::<f64>().sqrt()
}

/// exp(-lambda * L2 to the expert) when an expert exists, otherwise
/// 1 / (1 + distance to the nearest anchor) in the ego frame, otherwise 1.
pub fn imitation_score(
    traj: &[Pose2],
    scenario: &Scenario,
    anchors: Option<&AnchorSet>,
    lambda: f64,
) -> Result<f64> {
    let pts: Vec<Vec2> = traj.iter().map(|p| p.position()).collect();
    if let Some(expert) = &scenario.expert {
        if expert.len() != traj.len() {
            return Err(Error::HorizonMismatch {
                expected: expert.len(),
                actual: traj.len(),
            });
        }
        let e: Vec<Vec2> = expert.iter().map(|p| p.position()).collect();
        return Ok((-lambda * flat_l2(&pts, &e)).exp());
    }
    match anchors {
        Some(a) => {
            let origin = scenario.ego.pose;
            let local: Vec<Vec2> = pts.iter().map(|&p| origin.inverse_transform_point(p)).collect();
            let (_, d) = a.nearest(&local)?;
            Ok(1.0 / (1.0 + d))
        }
        None => Ok(1.0),
    }
}
