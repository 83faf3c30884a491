//! Committee-reliability ablation: rerun consensus and calibration on
//! subsampled witness sets of the dominant aspect cluster.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::icsv::{
    aggregate_consensus, assign_credibility, calibrate_confidence, AspectCluster, Relation,
};
use crate::model::VerdictLabel;

use super::EvalError;

const MAX_VOTERS: usize = 25;

/// One paywalled fixture: its clusters (with source papers), the planted
/// per-cluster relations, witness influences, and the ground-truth verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationCase {
    pub clusters: Vec<AspectCluster>,
    pub relations: Vec<Relation>,
    pub influences: BTreeMap<String, (f64, bool)>,
    pub truth: VerdictLabel,
}

impl AblationCase {
    /// Witnesses of the dominant (argmax gamma) cluster.
    fn dominant_witnesses(&self) -> Vec<String> {
        self.clusters
            .iter()
            .max_by(|a, b| a.gamma.total_cmp(&b.gamma))
            .map(|c| c.source_papers.iter().cloned().collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub n_voter: usize,
    pub non_abstention_rate: f64,
    /// Accuracy among non-abstaining samples; absent when the bucket never
    /// decided.
    pub conditional_accuracy: Option<f64>,
    pub mean_conf: f64,
    pub n_samples: usize,
}

/// For each n_voter in 1..=25, subsamples the dominant cluster's witnesses
/// without replacement and reruns aggregation plus calibration. Same seed,
/// same table.
pub fn committee_ablation(
    pool: &[AblationCase],
    trials_per_case: usize,
    seed: u64,
) -> Result<Vec<AblationRow>, EvalError> {
    for (i, case) in pool.iter().enumerate() {
        let witnesses = case.dominant_witnesses();
        if witnesses.len() < MAX_VOTERS {
            return Err(EvalError::PoolTooSmall(i, witnesses.len()));
        }
    }

    let mut rows = Vec::with_capacity(MAX_VOTERS);
    for n_voter in 1..=MAX_VOTERS {
        let mut decided = 0usize;
        let mut correct = 0usize;
        let mut conf_sum = 0.0f64;
        let mut samples = 0usize;
        for (case_idx, case) in pool.iter().enumerate() {
            let mut witnesses = case.dominant_witnesses();
            witnesses.sort();
            for trial in 0..trials_per_case {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ (n_voter as u64) << 40 ^ (case_idx as u64) << 20 ^ trial as u64,
                );
                let subsample: Vec<String> = witnesses
                    .choose_multiple(&mut rng, n_voter)
                    .cloned()
                    .collect();
                let verdict = rerun(case, &subsample);
                samples += 1;
                conf_sum += verdict.conf;
                if verdict.verdict != VerdictLabel::Undecidable {
                    decided += 1;
                    if verdict.verdict == case.truth {
                        correct += 1;
                    }
                }
            }
        }
        rows.push(AblationRow {
            n_voter,
            non_abstention_rate: decided as f64 / samples.max(1) as f64,
            conditional_accuracy: (decided > 0).then(|| correct as f64 / decided as f64),
            mean_conf: conf_sum / samples.max(1) as f64,
            n_samples: samples,
        });
    }
    Ok(rows)
}

/// Restricts the case to a witness subsample and reruns the pure tail of
/// the committee pipeline.
fn rerun(case: &AblationCase, subsample: &[String]) -> crate::icsv::CommitteeVerdict {
    let mut clusters: Vec<AspectCluster> = Vec::new();
    let mut relations: Vec<Relation> = Vec::new();
    for (cluster, relation) in case.clusters.iter().zip(&case.relations) {
        let mut restricted = cluster.clone();
        restricted.source_papers = cluster
            .source_papers
            .iter()
            .filter(|p| subsample.contains(p))
            .cloned()
            .collect();
        if restricted.source_papers.is_empty() {
            continue;
        }
        clusters.push(restricted);
        relations.push(*relation);
    }
    assign_credibility(&mut clusters, &case.influences);
    let (v_final, _) = aggregate_consensus(&clusters, &relations);
    calibrate_confidence(&clusters, &relations, v_final, subsample.len())
}

/// Serializes the table with the fixed column order.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("n_voter,non_abstention_rate,conditional_accuracy,mean_conf,n_samples\n");
    for r in rows {
        let acc = r
            .conditional_accuracy
            .map(|a| format!("{a:.6}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{:.6},{},{:.6},{}\n",
            r.n_voter, r.non_abstention_rate, acc, r.mean_conf, r.n_samples
        ));
    }
    out
}

/// A synthetic coherent committee: `n` witnesses, each contributing one
/// claim to each of four balanced aspect clusters, all entailing. Used by
/// tests and the reliability analysis.
pub fn coherent_case(n_witnesses: usize, truth: VerdictLabel) -> AblationCase {
    let vote = match truth {
        VerdictLabel::Miscitation => -1,
        _ => 1,
    };
    let witnesses: Vec<String> = (0..n_witnesses).map(|i| format!("w{i}")).collect();
    let clusters: Vec<AspectCluster> = (0..4)
        .map(|j| AspectCluster {
            cluster_id: format!("C{}", j + 1),
            cluster_name: format!("aspect {}", j + 1),
            aspect_summary: String::new(),
            claim_ids: vec![j + 1],
            source_papers: witnesses.iter().cloned().collect(),
            evidence_statement: String::new(),
            gamma: 0.25,
        })
        .collect();
    AblationCase {
        clusters,
        relations: vec![Relation { vote, stability: 1.0 }; 4],
        influences: witnesses.iter().map(|w| (w.clone(), (0.5, false))).collect(),
        truth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undersized_pool_is_rejected() {
        let pool = vec![coherent_case(10, VerdictLabel::Supported)];
        assert!(matches!(
            committee_ablation(&pool, 1, 0).unwrap_err(),
            EvalError::PoolTooSmall(0, 10)
        ));
    }

    #[test]
    fn knee_appears_at_the_committee_minimum() {
        let pool = vec![coherent_case(30, VerdictLabel::Supported)];
        let rows = committee_ablation(&pool, 50, 7).unwrap();
        assert_eq!(rows.len(), 25);
        assert!(rows[0].non_abstention_rate < 0.05, "{:?}", rows[0]);
        assert!(rows[4].non_abstention_rate < 0.05, "{:?}", rows[4]);
        let plateau = &rows[5];
        assert!(plateau.non_abstention_rate > 0.95, "{plateau:?}");
        assert_eq!(plateau.conditional_accuracy, Some(1.0));
    }

    #[test]
    fn same_seed_same_table() {
        let pool = vec![coherent_case(25, VerdictLabel::Supported)];
        let a = committee_ablation(&pool, 5, 42).unwrap();
        let b = committee_ablation(&pool, 5, 42).unwrap();
        assert_eq!(a, b);
    }
}
