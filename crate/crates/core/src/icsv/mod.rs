//! Inaccessible-source verification via the Evidence Committee: the claim
//! behind the citation is paraphrased into an atomic form, papers citing the
//! same target are collected as witnesses, their attributed claims are
//! clustered into aspects, weighted by field-normalized influence, and voted
//! into a calibrated committee verdict.

pub mod claim;
pub mod cluster;
pub mod committee;
pub mod consensus;
pub mod credibility;
pub mod relation;

pub use claim::{extract_atomic_claim, AtomicClaim};
pub use cluster::{cluster_claims, distill_evidence, AspectCluster};
pub use committee::{assemble_committee, WitnessPaper};
pub use consensus::{
    aggregate_consensus, calibrate_confidence, AbstentionTrigger, CommitteeVerdict, K_MIN,
    T_SUPPORT,
};
pub use credibility::{assign_credibility, influence_score, ReferenceStats, VenueType};
pub use relation::{classify_relation, Relation};

use serde_json::json;
use thiserror::Error;

use crate::csac::{ClientError, MetadataClient, MetadataSnapshot};
use crate::gateway::{Gateway, GatewayError};
use crate::model::{
    CitationEdge, EvidenceBundle, ParsedDocument, Route, Verdict, VerdictLabel,
    VerificationResult,
};

#[derive(Debug, Error)]
pub enum IcsvError {
    /// The citing sentence could not be resolved into an atomic claim even
    /// at the maximum context radius.
    #[error("claim underspecified for {0}")]
    Underspecified(String),
    #[error("committee assembly inconclusive: {0}")]
    Inconclusive(#[from] ClientError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Dpcm(#[from] crate::dpcm::DpcmError),
}

/// Full committee pipeline for one MetadataOnly citation. Every intermediate
/// artifact lands in the evidence bundle; empty committees abstain rather
/// than invent evidence.
pub fn verify_inaccessible(
    edge: &CitationEdge,
    target: &MetadataSnapshot,
    citing_doc: &ParsedDocument,
    client: &dyn MetadataClient,
    gateway: &Gateway,
    stats: &ReferenceStats,
    seed: u64,
) -> Result<VerificationResult, IcsvError> {
    let mut stage_log = Vec::new();
    let citing_context = citing_doc
        .sentence(edge.sentence_index)
        .map(|s| s.text.clone())
        .unwrap_or_default();

    let claim = match extract_atomic_claim(citing_doc, edge, gateway, seed) {
        Ok(c) => c,
        Err(IcsvError::Underspecified(_)) => {
            stage_log.push("claim: underspecified after radius exhaustion".to_string());
            return Ok(abstaining_result(
                edge,
                citing_context,
                json!({ "claim": null, "reason": "underspecified" }),
                stage_log,
                gateway,
            ));
        }
        Err(e) => return Err(e),
    };
    stage_log.push(format!("claim: radius {} accepted", claim.window_radius_used));

    let committee = assemble_committee(target, client, gateway, seed)?;
    stage_log.push(format!("committee: {} witnesses", committee.len()));
    if committee.is_empty() {
        return Ok(abstaining_result(
            edge,
            citing_context,
            json!({
                "claim": claim.text,
                "committee_size": 0,
                "abstention_triggers": ["InsufficientWitnesses"],
            }),
            stage_log,
            gateway,
        ));
    }

    // Claims are numbered 1..n across the committee; source ids ride along
    // so credibility can sum over unique papers.
    let numbered: Vec<(String, String)> = committee
        .iter()
        .flat_map(|w| w.claims.iter().map(move |c| (c.text.clone(), w.record_id.clone())))
        .collect();

    let (mut clusters, degraded) = cluster_claims(&numbered, target, gateway, seed)?;
    stage_log.push(format!(
        "clusters: {}{}",
        clusters.len(),
        if degraded { " (degraded singleton fallback)" } else { "" }
    ));
    for cluster in clusters.iter_mut() {
        cluster.evidence_statement = distill_evidence(cluster, &numbered, gateway, seed)?;
    }

    let influences = credibility::committee_influences(&committee, stats);
    let fallback_used = influences.values().any(|(_, f)| *f);
    assign_credibility(&mut clusters, &influences);
    stage_log.push(format!(
        "credibility: gamma over {} clusters{}",
        clusters.len(),
        if fallback_used { " (empirical-CDF fallback)" } else { "" }
    ));

    let mut relations = Vec::with_capacity(clusters.len());
    for (j, cluster) in clusters.iter().enumerate() {
        let tag = format!("icsv/relation@{}-c{}", edge.occurrence_id, j + 1);
        relations.push(classify_relation(
            &claim.text,
            &cluster.evidence_statement,
            gateway,
            seed,
            &tag,
        )?);
    }

    let (v_final, provisional) = aggregate_consensus(&clusters, &relations);
    stage_log.push(format!("consensus: v_final {v_final:.3} -> {provisional:?}"));
    let verdict = calibrate_confidence(&clusters, &relations, v_final, committee.len());
    stage_log.push(format!(
        "calibration: conf {:.3}, triggers {:?}",
        verdict.conf, verdict.abstention_triggers
    ));

    let committee_evidence = json!({
        "claim": claim.text,
        "claim_radius": claim.window_radius_used,
        "committee_size": committee.len(),
        "witnesses": committee.iter().map(|w| json!({
            "record_id": w.record_id,
            "title": w.metadata.title,
            "venue_type": w.venue_type,
            "citation_count": w.citation_count,
            "claims": w.claims.iter().map(|c| c.text.clone()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "clusters": clusters,
        "degraded_clustering": degraded,
        "influence_fallback": fallback_used,
        "relations": relations,
        "committee_verdict": verdict,
    });

    let usage = gateway.usage_report(&format!("icsv/*@{}*", edge.occurrence_id));
    Ok(VerificationResult {
        occurrence_id: edge.occurrence_id.clone(),
        verdict: Verdict::new(
            verdict.verdict,
            verdict.conf.clamp(0.0, 1.0),
            Route::Inaccessible,
        ),
        taxonomy_code: None,
        evidence: EvidenceBundle {
            citing_context,
            accessible_evidence: None,
            committee_evidence: Some(committee_evidence),
            metadata: Some(serde_json::to_value(target).expect("snapshot serializes")),
            notes: String::new(),
        },
        token_usage: vec![usage],
        stage_log,
    })
}

fn abstaining_result(
    edge: &CitationEdge,
    citing_context: String,
    committee_evidence: serde_json::Value,
    stage_log: Vec<String>,
    gateway: &Gateway,
) -> VerificationResult {
    let usage = gateway.usage_report(&format!("icsv/*@{}*", edge.occurrence_id));
    VerificationResult {
        occurrence_id: edge.occurrence_id.clone(),
        verdict: Verdict::new(VerdictLabel::Undecidable, 0.0, Route::Inaccessible),
        taxonomy_code: None,
        evidence: EvidenceBundle {
            citing_context,
            accessible_evidence: None,
            committee_evidence: Some(committee_evidence),
            metadata: None,
            notes: String::new(),
        },
        token_usage: vec![usage],
        stage_log,
    }
}
