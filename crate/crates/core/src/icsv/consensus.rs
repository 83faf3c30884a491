//! Credibility-weighted consensus, calibration, and abstention.

use serde::{Deserialize, Serialize};

use crate::model::VerdictLabel;

use super::cluster::AspectCluster;
use super::relation::Relation;

/// Minimum committee size for a non-abstaining verdict.
pub const K_MIN: usize = 6;
/// Symmetric consensus margin; |v_final| must clear it.
pub const T_SUPPORT: f64 = 0.3;
/// Confidence floor.
const CONF_MIN: f64 = 0.5;
/// Entropy ceiling.
const H_MAX: f64 = 0.6;
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbstentionTrigger {
    InsufficientWitnesses,
    LowMargin,
    LowConfidence,
    HighDisagreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitteeVerdict {
    pub relations: Vec<Relation>,
    pub v_final: f64,
    pub n_eff: f64,
    pub entropy: f64,
    pub a_bar: f64,
    pub conf: f64,
    pub verdict: VerdictLabel,
    pub abstention_triggers: Vec<AbstentionTrigger>,
}

/// v_final = sum of vote * gamma; the provisional verdict applies the
/// symmetric margin before calibration.
pub fn aggregate_consensus(
    clusters: &[AspectCluster],
    relations: &[Relation],
) -> (f64, VerdictLabel) {
    let v_final: f64 = clusters
        .iter()
        .zip(relations)
        .map(|(c, r)| r.vote as f64 * c.gamma)
        .sum();
    let label = if v_final > T_SUPPORT {
        VerdictLabel::Supported
    } else if v_final < -T_SUPPORT {
        VerdictLabel::Miscitation
    } else {
        VerdictLabel::Undecidable
    };
    (v_final, label)
}

/// Confidence calibration and the ordered abstention gates. Any firing
/// trigger forces Undecidable; all firing triggers are recorded.
pub fn calibrate_confidence(
    clusters: &[AspectCluster],
    relations: &[Relation],
    v_final: f64,
    committee_size: usize,
) -> CommitteeVerdict {
    let n_eff = {
        let sq: f64 = clusters.iter().map(|c| c.gamma * c.gamma).sum();
        if sq > 0.0 {
            1.0 / sq
        } else {
            1.0
        }
    };

    // Label masses over {entails, neutral, contradicts}; entropy always
    // normalizes by log 3 regardless of how many labels appear.
    let mut w = [0.0f64; 3];
    for (c, r) in clusters.iter().zip(relations) {
        let slot = match r.vote {
            1 => 0,
            -1 => 2,
            _ => 1,
        };
        w[slot] += c.gamma;
    }
    let entropy = -w
        .iter()
        .map(|wl| wl * (wl + EPS).ln())
        .sum::<f64>()
        / 3f64.ln();
    let entropy = entropy.clamp(0.0, 1.0);

    let a_bar: f64 = clusters
        .iter()
        .zip(relations)
        .map(|(c, r)| c.gamma * r.stability)
        .sum();

    let conf = v_final.abs() * (n_eff / K_MIN as f64).min(1.0) * (1.0 - entropy) * a_bar;
    let conf = conf.clamp(0.0, 1.0);

    let (_, provisional) = aggregate_consensus(clusters, relations);
    let mut triggers = Vec::new();
    if committee_size < K_MIN {
        triggers.push(AbstentionTrigger::InsufficientWitnesses);
    }
    if (-T_SUPPORT..=T_SUPPORT).contains(&v_final) {
        triggers.push(AbstentionTrigger::LowMargin);
    }
    if conf < CONF_MIN {
        triggers.push(AbstentionTrigger::LowConfidence);
    }
    if entropy > H_MAX {
        triggers.push(AbstentionTrigger::HighDisagreement);
    }

    let verdict = if triggers.is_empty() {
        provisional
    } else {
        VerdictLabel::Undecidable
    };
    CommitteeVerdict {
        relations: relations.to_vec(),
        v_final,
        n_eff,
        entropy,
        a_bar,
        conf,
        verdict,
        abstention_triggers: triggers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn clusters(gammas: &[f64]) -> Vec<AspectCluster> {
        gammas
            .iter()
            .enumerate()
            .map(|(i, g)| AspectCluster {
                cluster_id: format!("C{}", i + 1),
                cluster_name: String::new(),
                aspect_summary: String::new(),
                claim_ids: vec![i + 1],
                source_papers: BTreeSet::new(),
                evidence_statement: String::new(),
                gamma: *g,
            })
            .collect()
    }

    fn rel(vote: i8, stability: f64) -> Relation {
        Relation { vote, stability }
    }

    #[test]
    fn hand_summed_margin_cases() {
        let c = clusters(&[0.5, 0.3, 0.2]);
        let r = vec![rel(1, 1.0), rel(-1, 1.0), rel(0, 1.0)];
        let (v, label) = aggregate_consensus(&c, &r);
        assert!((v - 0.2).abs() < 1e-12);
        assert_eq!(label, VerdictLabel::Undecidable);

        let c = clusters(&[0.6, 0.4]);
        let r = vec![rel(-1, 1.0), rel(-1, 1.0)];
        let (v, label) = aggregate_consensus(&c, &r);
        assert!((v + 1.0).abs() < 1e-12);
        assert_eq!(label, VerdictLabel::Miscitation);
    }

    #[test]
    fn uniform_gamma_gives_n_eff_k() {
        let c = clusters(&[0.25; 4]);
        let r = vec![rel(1, 1.0); 4];
        let out = calibrate_confidence(&c, &r, 1.0, 8);
        assert!((out.n_eff - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_dominant_cluster_triggers_low_confidence() {
        let c = clusters(&[1.0]);
        let r = vec![rel(1, 1.0)];
        let out = calibrate_confidence(&c, &r, 1.0, 8);
        assert!((out.conf - 1.0 / 6.0).abs() < 1e-9, "{}", out.conf);
        assert_eq!(out.verdict, VerdictLabel::Undecidable);
        assert!(out.abstention_triggers.contains(&AbstentionTrigger::LowConfidence));
    }

    #[test]
    fn saturated_committee_supports() {
        let c = clusters(&[1.0 / 6.0; 6]);
        let r = vec![rel(1, 1.0); 6];
        let out = calibrate_confidence(&c, &r, 1.0, 10);
        assert_eq!(out.verdict, VerdictLabel::Supported);
        assert!(out.conf > 0.99, "{}", out.conf);
    }

    #[test]
    fn symmetric_split_records_both_triggers() {
        let c = clusters(&[0.5, 0.5]);
        let r = vec![rel(1, 1.0), rel(-1, 1.0)];
        let (v, _) = aggregate_consensus(&c, &r);
        let out = calibrate_confidence(&c, &r, v, 10);
        assert_eq!(out.verdict, VerdictLabel::Undecidable);
        assert_eq!(
            out.abstention_triggers,
            vec![
                AbstentionTrigger::LowMargin,
                AbstentionTrigger::LowConfidence,
                AbstentionTrigger::HighDisagreement
            ]
        );
    }

    #[test]
    fn entropy_extremes() {
        let c = clusters(&[1.0]);
        let out = calibrate_confidence(&c, &[rel(1, 1.0)], 1.0, 8);
        assert!(out.entropy < 1e-10);

        let c = clusters(&[1.0 / 3.0; 3]);
        let r = vec![rel(1, 1.0), rel(0, 1.0), rel(-1, 1.0)];
        let out = calibrate_confidence(&c, &r, 0.0, 8);
        assert!((out.entropy - 1.0).abs() < 1e-6, "{}", out.entropy);
    }
}
