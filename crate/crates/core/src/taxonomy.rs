//! Primary error-code assignment for confirmed miscitations: metadata
//! short-circuits first, then a self-consistent classifier vote over the
//! precedence-ordered decision tree.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets;
use crate::csac::{AccessStatus, AccessibilityVerdict, MetadataSnapshot};
use crate::gateway::{CompletionRequest, DecodingConfig, Gateway, GatewayError};
use crate::model::{precedence_min, EvidenceBundle, TaxonomyCode};

const SAMPLE_COUNT: u32 = 5;
const TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDecision {
    pub code: TaxonomyCode,
    pub rationale: String,
    pub votes: BTreeMap<TaxonomyCode, usize>,
    /// count(code) / total samples.
    pub confidence: f64,
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    /// No sample produced a usable code; raw replies retained for audit.
    #[error("no classifiable sample among {0:?}")]
    Unclassifiable(Vec<String>),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Assigns the single primary code. Ghost routes and retraction or
/// secondary-source metadata decide without any model call; everything else
/// goes through the classifier ensemble.
pub fn assign_error_code(
    bundle: &EvidenceBundle,
    accessibility: &AccessibilityVerdict,
    gateway: &Gateway,
    seed: u64,
    tag: &str,
) -> Result<LabelDecision, TaxonomyError> {
    if matches!(accessibility.status, AccessStatus::Ghost) {
        return Ok(short_circuit(
            TaxonomyCode::AttributionTraceability,
            "cited source does not resolve to any indexed work",
        ));
    }
    if let Some(snapshot) = snapshot_of(accessibility) {
        if snapshot.retracted {
            return Ok(short_circuit(
                TaxonomyCode::CitationValidity,
                "cited source is retracted",
            ));
        }
        if is_secondary(snapshot) {
            return Ok(short_circuit(
                TaxonomyCode::CitationValidity,
                "cited source is a secondary source for the claim",
            ));
        }
    }

    let metadata = snapshot_of(accessibility)
        .map(|s| serde_json::to_string_pretty(s).expect("snapshot serializes"))
        .unwrap_or_default();
    let evidence = evidence_text(bundle);
    let user = assets::fill(
        assets::TAXONOMY_USER,
        &[
            ("citing_context", bundle.citing_context.as_str()),
            ("evidence", evidence.as_str()),
            ("metadata", metadata.as_str()),
        ],
    );
    let request = CompletionRequest::text(
        assets::TAXONOMY_SYSTEM,
        user,
        DecodingConfig::self_consistency(SAMPLE_COUNT, TEMPERATURE, seed),
        tag,
    );
    let replies = gateway.complete(&request)?;

    let mut votes: BTreeMap<TaxonomyCode, usize> = BTreeMap::new();
    let mut raw = Vec::new();
    for (text, _) in &replies {
        raw.push(text.clone());
        if let Some(code) = parse_code(text) {
            *votes.entry(code).or_insert(0) += 1;
        }
    }
    if votes.is_empty() {
        return Err(TaxonomyError::Unclassifiable(raw));
    }

    let total = replies.len();
    let top = *votes.values().max().expect("non-empty votes");
    // Strict majority, else most frequent non-abstaining code; frequency
    // ties fall back to precedence order.
    let code = precedence_min(
        votes
            .iter()
            .filter(|(_, c)| **c == top)
            .map(|(code, _)| *code),
    )
    .expect("non-empty winner set");
    Ok(LabelDecision {
        code,
        rationale: format!("majority of {top}/{total} classifier samples"),
        votes,
        confidence: top as f64 / total as f64,
    })
}

fn short_circuit(code: TaxonomyCode, rationale: &str) -> LabelDecision {
    LabelDecision {
        code,
        rationale: rationale.to_string(),
        votes: [(code, 1)].into(),
        confidence: 1.0,
    }
}

fn snapshot_of(accessibility: &AccessibilityVerdict) -> Option<&MetadataSnapshot> {
    match &accessibility.status {
        AccessStatus::Accessible(doc) => Some(&doc.snapshot),
        AccessStatus::MetadataOnly(snapshot) => Some(snapshot),
        AccessStatus::Ghost => None,
    }
}

fn is_secondary(snapshot: &MetadataSnapshot) -> bool {
    matches!(
        snapshot.article_type.as_deref().map(str::to_ascii_lowercase).as_deref(),
        Some("review") | Some("editorial") | Some("comment") | Some("secondary")
    )
}

fn evidence_text(bundle: &EvidenceBundle) -> String {
    if let Some(windows) = &bundle.accessible_evidence {
        return windows
            .iter()
            .map(|w| w.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
    }
    if let Some(committee) = &bundle.committee_evidence {
        return serde_json::to_string_pretty(committee).expect("evidence serializes");
    }
    String::new()
}

/// First line of the reply that names a taxonomy code; ABSTAIN and prose
/// lines are skipped.
fn parse_code(reply: &str) -> Option<TaxonomyCode> {
    reply
        .lines()
        .filter(|l| !l.trim().eq_ignore_ascii_case("abstain"))
        .find_map(|l| TaxonomyCode::parse(l.trim()))
}
