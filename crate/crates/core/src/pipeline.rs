//! Open-loop planning for one scenario: anchors become candidates, the
//! proposal stage keeps the best `top_k` under coarse scene-level estimates,
//! each survivor gets its own refined sparse world and fine-grained scores,
//! and the final stage picks one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::error::{Error, Result};
use crate::fine_grained::{fine_grained_scores, FineGrainedParams, FineGrainedScores};
use crate::geometry::Pose2;
use crate::metrics::{
    self, epdms, normalize_progress, pdms, route_progress, score_comfort, score_nc, score_ttc, MetricConfig,
    SubscoreVector,
};
use crate::selection::{
    final_select, final_terms, imitation_score, proposal_stage, proposal_terms, Candidate, ScoreTerm,
    SelectionConfig,
};
use crate::world::{build_sparse_worlds, refine_world, RefineParams, Scenario, SparseWorld};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub metrics: MetricConfig,
    pub selection: SelectionConfig,
    pub fine_grained: FineGrainedParams,
    pub refine: RefineParams,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.metrics.validate()?;
        self.selection.validate()?;
        self.fine_grained.validate()?;
        self.refine.validate()
    }
}

/// Stage-1 view of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProposalRecord {
    pub index: usize,
    pub imitation: f64,
    /// Coarse estimates (constant-velocity agents, center-only drivable check).
    pub estimate: SubscoreVector,
    pub terms: [ScoreTerm; 6],
    pub score: f64,
}

/// Stage-2 view of one surviving candidate, scored in its refined world.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalistRecord {
    pub index: usize,
    pub trajectory: Vec<Pose2>,
    pub imitation: f64,
    pub sub: SubscoreVector,
    pub pdms: f64,
    pub epdms: f64,
    pub fine: FineGrainedScores,
    pub terms: [ScoreTerm; 6],
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpertRecord {
    pub trajectory: Vec<Pose2>,
    pub sub: SubscoreVector,
    pub pdms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub scenario: String,
    pub proposals: Vec<ProposalRecord>,
    /// Candidate indices in proposal-stage order, best first.
    pub shortlist: Vec<usize>,
    /// In shortlist order.
    pub finalists: Vec<FinalistRecord>,
    pub selected: usize,
    /// What a proposal-stage-only planner would have chosen.
    pub proposal_pick: usize,
    pub expert: Option<ExpertRecord>,
}

impl Evaluation {
    pub fn finalist(&self, index: usize) -> Option<&FinalistRecord> {
        self.finalists.iter().find(|f| f.index == index)
    }

    pub fn selected_record(&self) -> &FinalistRecord {
        self.finalist(self.selected).expect("selected candidate is a finalist")
    }

    pub fn proposal_pick_record(&self) -> &FinalistRecord {
        self.finalist(self.proposal_pick).expect("proposal pick is a finalist")
    }
}

/// Anchors placed at the ego's current pose.
pub fn anchor_candidates(anchors: &AnchorSet, scenario: &Scenario) -> Result<Vec<Vec<Pose2>>> {
    if anchors.horizon() != scenario.horizon_steps {
        return Err(Error::HorizonMismatch {
            expected: scenario.horizon_steps,
            actual: anchors.horizon(),
        });
    }
    let origin = scenario.ego.pose;
    Ok((0..anchors.k())
        .map(|i| anchors.poses(i).iter().map(|p| origin.compose(p)).collect())
        .collect())
}

/// Agent futures extrapolated at constant velocity from the first logged step.
pub fn constant_velocity_futures(scenario: &Scenario) -> Vec<Vec<Pose2>> {
    scenario
        .agents
        .iter()
        .map(|a| {
            let step = a.future.first().map_or(crate::geometry::Vec2::new(0.0, 0.0), |f| {
                f.position() - a.current.position()
            });
            (1..=scenario.horizon_steps)
                .map(|k| Pose2::from_position(a.current.position() + step * k as f64, a.current.heading()))
                .collect()
        })
        .collect()
}

fn coarse_estimates(candidates: &[Vec<Pose2>], scenario: &Scenario, cfg: &PipelineConfig) -> Vec<SubscoreVector> {
    let predicted = constant_velocity_futures(scenario);
    let mut subs: Vec<SubscoreVector> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, traj)| {
            let world = SparseWorld {
                candidate_index: i,
                candidate: traj.clone(),
                ego_traj: traj.clone(),
                agent_futures: predicted.clone(),
            };
            let center_ok = traj
                .iter()
                .all(|p| scenario.road.drivable.sample_or_zero(p.position()) >= 0.5);
            SubscoreVector {
                nc: score_nc(&world, scenario, &cfg.metrics),
                dac: if center_ok { 1.0 } else { 0.0 },
                ttc: score_ttc(&world, scenario, &cfg.metrics),
                c: score_comfort(traj, scenario.dt, &cfg.metrics.comfort),
                ep: 0.0,
                ..SubscoreVector::ONES
            }
        })
        .collect();
    let progress: Vec<f64> = candidates.iter().map(|c| route_progress(c, &scenario.route)).collect();
    let safe: Vec<bool> = subs.iter().map(SubscoreVector::is_safe).collect();
    for (s, ep) in subs.iter_mut().zip(normalize_progress(&progress, &safe)) {
        s.ep = ep;
    }
    subs
}

/// Subscores in the refined world with `ep` left at 0 for later normalization.
fn ground_truth(world: &SparseWorld, scenario: &Scenario, cfg: &MetricConfig) -> SubscoreVector {
    metrics::subscores(world, scenario, cfg, 0.0)
}

pub fn evaluate_candidates(
    candidates: &[Vec<Pose2>],
    scenario: &Scenario,
    anchors: Option<&AnchorSet>,
    cfg: &PipelineConfig,
) -> Result<Evaluation> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    let sel = SelectionConfig {
        top_k: cfg.selection.top_k.min(candidates.len()),
        ..cfg.selection
    };
    // Validates candidate lengths.
    let worlds = build_sparse_worlds(candidates, scenario)?;

    let estimates = coarse_estimates(candidates, scenario, cfg);
    let mut stage1 = Vec::with_capacity(candidates.len());
    for (i, (traj, est)) in candidates.iter().zip(&estimates).enumerate() {
        stage1.push(Candidate {
            index: i,
            trajectory: traj.clone(),
            imitation: imitation_score(traj, scenario, anchors, sel.imitation_lambda)?,
            sub: *est,
            fine: None,
        });
    }
    let shortlist = proposal_stage(&stage1, &sel)?;
    let proposals = stage1
        .iter()
        .map(|c| {
            let terms = proposal_terms(c, &sel);
            ProposalRecord {
                index: c.index,
                imitation: c.imitation,
                estimate: c.sub,
                terms,
                score: terms.iter().map(|t| t.log_term).sum(),
            }
        })
        .collect();

    let refined: Vec<(SparseWorld, SubscoreVector, FineGrainedScores)> = shortlist
        .par_iter()
        .map(|&i| {
            let w = refine_world(&worlds[i], scenario, &cfg.refine);
            let sub = ground_truth(&w, scenario, &cfg.metrics);
            let fine = fine_grained_scores(&w, scenario, &cfg.fine_grained);
            (w, sub, fine)
        })
        .collect();

    let expert = match &scenario.expert {
        Some(e) => {
            let w = build_sparse_worlds(std::slice::from_ref(e), scenario)?.remove(0);
            let w = refine_world(&w, scenario, &cfg.refine);
            Some((ground_truth(&w, scenario, &cfg.metrics), w.ego_traj))
        }
        None => None,
    };

    // Progress is normalized over the finalists plus the expert.
    let mut progress: Vec<f64> = refined.iter().map(|(w, _, _)| route_progress(&w.ego_traj, &scenario.route)).collect();
    let mut safe: Vec<bool> = refined.iter().map(|(_, s, _)| s.is_safe()).collect();
    if let Some((sub, traj)) = &expert {
        progress.push(route_progress(traj, &scenario.route));
        safe.push(sub.is_safe());
    }
    let ep = normalize_progress(&progress, &safe);
    let expert = expert.map(|(mut sub, trajectory)| {
        sub.ep = *ep.last().unwrap();
        ExpertRecord {
            pdms: pdms(&sub, &cfg.metrics),
            sub,
            trajectory,
        }
    });
    let human = expert.as_ref().map_or(SubscoreVector::ONES, |e| e.sub);

    let mut stage2 = Vec::with_capacity(refined.len());
    for ((w, mut sub, fine), ep) in refined.into_iter().zip(ep) {
        sub.ep = ep;
        let c = &stage1[w.candidate_index];
        stage2.push(Candidate {
            index: c.index,
            trajectory: w.ego_traj,
            imitation: c.imitation,
            sub,
            fine: Some(fine),
        });
    }
    let selected = final_select(&stage2, &sel)?;
    let finalists = stage2
        .into_iter()
        .map(|c| {
            let terms = final_terms(&c, &sel).expect("finalists carry fine scores");
            FinalistRecord {
                index: c.index,
                pdms: pdms(&c.sub, &cfg.metrics),
                epdms: epdms(&c.sub, &human, &cfg.metrics),
                score: terms.iter().map(|t| t.log_term).sum(),
                terms,
                trajectory: c.trajectory,
                imitation: c.imitation,
                sub: c.sub,
                fine: c.fine.expect("set above"),
            }
        })
        .collect();

    Ok(Evaluation {
        scenario: scenario.name.clone(),
        proposals,
        proposal_pick: shortlist[0],
        shortlist,
        finalists,
        selected,
        expert,
    })
}

pub fn evaluate(scenario: &Scenario, anchors: &AnchorSet, cfg: &PipelineConfig) -> Result<Evaluation> {
    let candidates = anchor_candidates(anchors, scenario)?;
    evaluate_candidates(&candidates, scenario, Some(anchors), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::world::test_support::*;
    use crate::world::AgentClass;

    fn fan(h: usize) -> AnchorSet {
        let mut anchors = Vec::new();
        for speed in [0.5, 1.0, 1.5, 2.0] {
            for lat in [-0.05, 0.0, 0.05] {
                anchors.push((1..=h).map(|i| Vec2::new(speed * i as f64, lat * (i * i) as f64)).collect());
            }
        }
        AnchorSet::new(anchors, 0).unwrap()
    }

    #[test]
    fn clean_scenario_selects_perfect_pdms() {
        let s = open_road(8, 0.5);
        let a = fan(8);
        let ev = evaluate(&s, &a, &PipelineConfig::default()).unwrap();
        assert_eq!(ev.shortlist.len(), a.k());
        let sel = ev.selected_record();
        assert_eq!(sel.pdms, 1.0, "{:?}", sel.sub);
    }

    #[test]
    fn candidates_start_from_ego_pose() {
        let mut s = open_road(8, 0.5);
        s.ego.pose = Pose2::new(3.0, -1.0, 0.5);
        let c = anchor_candidates(&fan(8), &s).unwrap();
        let first = c[1][0];
        let expect = s.ego.pose.transform_point(Vec2::new(0.5, 0.0));
        assert!(first.position().distance(expect) < 1e-12);
        assert!(matches!(anchor_candidates(&fan(6), &s), Err(Error::HorizonMismatch { .. })));
    }

    #[test]
    fn constant_velocity_prediction() {
        let mut s = open_road(3, 0.5);
        s.agents.push(vehicle(1, Pose2::new(0.0, 5.0, 0.0), vec![Pose2::new(1.0, 5.0, 0.0), Pose2::new(9.0, 5.0, 0.0), Pose2::new(9.0, 5.0, 0.0)]));
        let p = constant_velocity_futures(&s);
        assert_eq!(p[0].iter().map(|q| q.x).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn rescue_when_fastest_candidate_collides() {
        // A pedestrian waits at the roadside, then steps into the lane the
        // fastest candidates occupy late in the horizon.
        let mut s = open_road(8, 0.5);
        let mut fut = vec![Pose2::new(14.0, 4.0, -1.57); 8];
        for (h, f) in fut.iter_mut().enumerate().skip(4) {
            *f = Pose2::new(14.0, 4.0 - 1.6 * (h - 3) as f64, -1.57);
        }
        let mut ped = vehicle(1, Pose2::new(14.0, 4.0, -1.57), fut);
        ped.class = AgentClass::Pedestrian;
        ped.length = 0.6;
        ped.width = 0.6;
        s.agents.push(ped);
        let cfg = PipelineConfig {
            selection: SelectionConfig { top_k: 6, ..Default::default() },
            ..Default::default()
        };
        let ev = evaluate(&s, &fan(8), &cfg).unwrap();
        assert_eq!(ev.proposal_pick_record().sub.nc, 0.0);
        assert_eq!(ev.selected_record().sub.nc, 1.0);
    }
}
