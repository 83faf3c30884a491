//! End-to-end per-document orchestration: parse, route, verify, label,
//! and summarize into audit bundles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acsv::{verify_accessible, FunnelConfig};
use crate::csac::{classify_accessibility, AccessStatus, AccessibilityVerdict, MetadataClient};
use crate::dpcm::{
    align_citations, detect_citations, parse_bibliography, parse_markdown, verify_extraction,
    DpcmError, ExtractionAnomaly,
};
use crate::gateway::Gateway;
use crate::icsv::{verify_inaccessible, IcsvError, ReferenceStats};
use crate::model::{
    AuditBundle, BibEntry, CitationEdge, EvidenceBundle, ParsedDocument, Route, Verdict,
    VerdictLabel, VerificationResult,
};
use crate::taxonomy::{assign_error_code, TaxonomyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RouteForce {
    Accessible,
    Inaccessible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub funnel: FunnelConfig,
    pub seed: u64,
    /// Forces every resolvable edge down one branch; testing aid.
    pub route_force: Option<RouteForce>,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            funnel: FunnelConfig::default(),
            seed: 0,
            route_force: None,
        }
    }
}

/// Paper-level integrity summary; counts mirror the bundle multiset exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub citation_count: usize,
    pub verdict_counts: BTreeMap<String, usize>,
    pub taxonomy_counts: BTreeMap<String, usize>,
    pub mean_confidence: f64,
    pub abstention_rate: f64,
    pub anomaly_count: usize,
    pub partial_failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentReport {
    pub bundles: Vec<AuditBundle>,
    pub anomalies: Vec<ExtractionAnomaly>,
    pub summary: Summary,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dpcm(#[from] DpcmError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}

/// Verifies every citation edge of one markdown document. Per-edge failures
/// are recorded in their bundles; only document-level failures abort.
pub fn verify_document(
    markdown: &str,
    client: &dyn MetadataClient,
    gateway: &Gateway,
    stats: &ReferenceStats,
    config: &PipelineConfig,
) -> Result<DocumentReport, PipelineError> {
    let doc = parse_markdown(markdown, 1);
    verify_parsed(&doc, client, gateway, stats, config)
}

/// Same pipeline over an already normalized document (markup inputs).
pub fn verify_parsed(
    doc: &ParsedDocument,
    client: &dyn MetadataClient,
    gateway: &Gateway,
    stats: &ReferenceStats,
    config: &PipelineConfig,
) -> Result<DocumentReport, PipelineError> {
    let mut anomalies = verify_extraction(doc);
    let (entries, bib_anomaly) = parse_bibliography(doc);
    anomalies.extend(bib_anomaly);
    let (_, drafts) = detect_citations(doc);
    let edges = align_citations(&drafts, &entries, gateway, config.seed)?;

    let mut results = Vec::with_capacity(edges.len());
    let mut partial_failures = 0usize;
    for edge in &edges {
        let ledger_before = gateway.ledger_len();
        let mut result = verify_edge(edge, &entries, doc, client, gateway, stats, config);
        let rows = gateway.ledger_rows();
        result.token_usage = rows[ledger_before..].to_vec();
        if result.stage_log.iter().any(|l| l.starts_with("error:")) {
            partial_failures += 1;
        }
        results.push(result);
    }

    let summary = summarize(&results, anomalies.len(), partial_failures);
    Ok(DocumentReport {
        bundles: results.iter().map(AuditBundle::from).collect(),
        anomalies,
        summary,
    })
}

fn verify_edge(
    edge: &CitationEdge,
    entries: &[BibEntry],
    doc: &ParsedDocument,
    client: &dyn MetadataClient,
    gateway: &Gateway,
    stats: &ReferenceStats,
    config: &PipelineConfig,
) -> VerificationResult {
    let citing_context = doc
        .sentence(edge.sentence_index)
        .map(|s| s.text.clone())
        .unwrap_or_default();

    let Some(entry) = edge.target_keys.first().and_then(|k| entries.iter().find(|e| &e.key == k))
    else {
        return note_result(
            edge,
            citing_context,
            VerdictLabel::Undecidable,
            0.0,
            Route::Ghost,
            "citation could not be aligned to any bibliography entry",
        );
    };

    let accessibility = match classify_accessibility(entry, client) {
        Ok(v) => v,
        Err(e) => {
            let mut r = note_result(
                edge,
                citing_context,
                VerdictLabel::Undecidable,
                0.0,
                Route::Inaccessible,
                "accessibility classification inconclusive",
            );
            r.stage_log.push(format!("error: {e}"));
            return r;
        }
    };

    match routed_status(&accessibility, config.route_force) {
        AccessStatus::Ghost => ghost_result(edge, citing_context, &accessibility, gateway, config),
        AccessStatus::Accessible(doc_box) => {
            let prev = edge
                .sentence_index
                .checked_sub(1)
                .and_then(|i| doc.sentence(i))
                .map(|s| s.text.clone());
            let next = doc.sentence(edge.sentence_index + 1).map(|s| s.text.clone());
            match verify_accessible(
                &edge.occurrence_id,
                &citing_context,
                prev.as_deref(),
                next.as_deref(),
                &doc_box.document,
                &config.funnel,
                gateway,
                config.seed,
            ) {
                Ok(out) => {
                    let mut result = VerificationResult {
                        occurrence_id: edge.occurrence_id.clone(),
                        verdict: Verdict::new(out.verdict, out.confidence, Route::Accessible),
                        taxonomy_code: None,
                        evidence: EvidenceBundle {
                            citing_context,
                            accessible_evidence: Some(out.windows),
                            committee_evidence: None,
                            metadata: Some(
                                serde_json::to_value(&doc_box.snapshot)
                                    .expect("snapshot serializes"),
                            ),
                            notes: String::new(),
                        },
                        token_usage: Vec::new(),
                        stage_log: out.stage_log,
                    };
                    label_if_miscited(&mut result, &accessibility, gateway, config);
                    result
                }
                Err(e) => error_result(edge, e.to_string()),
            }
        }
        AccessStatus::MetadataOnly(snapshot) => {
            match verify_inaccessible(edge, &snapshot, doc, client, gateway, stats, config.seed) {
                Ok(mut result) => {
                    label_if_miscited(&mut result, &accessibility, gateway, config);
                    result
                }
                Err(IcsvError::Underspecified(_)) => note_result(
                    edge,
                    citing_context,
                    VerdictLabel::Undecidable,
                    0.0,
                    Route::Inaccessible,
                    "claim underspecified",
                ),
                Err(e) => error_result(edge, e.to_string()),
            }
        }
    }
}

/// Applies the route override. Forcing Inaccessible degrades Accessible
/// sources to their metadata snapshot; forcing Accessible turns everything
/// else into an unverifiable edge handled upstream as Ghost.
fn routed_status(
    accessibility: &AccessibilityVerdict,
    force: Option<RouteForce>,
) -> AccessStatus {
    match (force, &accessibility.status) {
        (Some(RouteForce::Inaccessible), AccessStatus::Accessible(doc_box)) => {
            AccessStatus::MetadataOnly(doc_box.snapshot.clone())
        }
        (Some(RouteForce::Accessible), AccessStatus::MetadataOnly(_)) => AccessStatus::Ghost,
        (_, status) => status.clone(),
    }
}

fn ghost_result(
    edge: &CitationEdge,
    citing_context: String,
    accessibility: &AccessibilityVerdict,
    gateway: &Gateway,
    config: &PipelineConfig,
) -> VerificationResult {
    let mut result = VerificationResult {
        occurrence_id: edge.occurrence_id.clone(),
        verdict: Verdict::ghost(),
        taxonomy_code: None,
        evidence: EvidenceBundle {
            citing_context,
            accessible_evidence: None,
            committee_evidence: None,
            metadata: None,
            notes: "source unresolvable from metadata".to_string(),
        },
        token_usage: Vec::new(),
        stage_log: vec!["route: ghost".to_string()],
    };
    let ghost_verdict = AccessibilityVerdict {
        status: AccessStatus::Ghost,
        equivalence_evidence: accessibility.equivalence_evidence.clone(),
    };
    label_if_miscited(&mut result, &ghost_verdict, gateway, config);
    result
}

fn label_if_miscited(
    result: &mut VerificationResult,
    accessibility: &AccessibilityVerdict,
    gateway: &Gateway,
    config: &PipelineConfig,
) {
    if result.verdict.label != VerdictLabel::Miscitation {
        return;
    }
    let tag = format!("taxonomy/label@{}", result.occurrence_id);
    match assign_error_code(&result.evidence, accessibility, gateway, config.seed, &tag) {
        Ok(decision) => {
            result
                .stage_log
                .push(format!("taxonomy: {:?} ({})", decision.code, decision.rationale));
            result.taxonomy_code = Some(decision.code);
        }
        Err(TaxonomyError::Unclassifiable(raw)) => {
            result
                .stage_log
                .push(format!("error: taxonomy unclassifiable over {} samples", raw.len()));
        }
        Err(e) => result.stage_log.push(format!("error: {e}")),
    }
}

fn note_result(
    edge: &CitationEdge,
    citing_context: String,
    label: VerdictLabel,
    confidence: f64,
    route: Route,
    note: &str,
) -> VerificationResult {
    VerificationResult {
        occurrence_id: edge.occurrence_id.clone(),
        verdict: Verdict::new(label, confidence, route),
        taxonomy_code: None,
        evidence: EvidenceBundle {
            citing_context,
            accessible_evidence: None,
            committee_evidence: None,
            metadata: None,
            notes: note.to_string(),
        },
        token_usage: Vec::new(),
        stage_log: vec![format!("route: {note}")],
    }
}

fn error_result(edge: &CitationEdge, message: String) -> VerificationResult {
    let mut result = note_result(
        edge,
        String::new(),
        VerdictLabel::Undecidable,
        0.0,
        Route::Inaccessible,
        "verification failed",
    );
    result.stage_log.push(format!("error: {message}"));
    result
}

fn summarize(
    results: &[VerificationResult],
    anomaly_count: usize,
    partial_failures: usize,
) -> Summary {
    let mut verdict_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut taxonomy_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut confidence_sum = 0.0;
    let mut abstentions = 0usize;
    for r in results {
        *verdict_counts
            .entry(format!("{:?}", r.verdict.label))
            .or_insert(0) += 1;
        if let Some(code) = r.taxonomy_code {
            *taxonomy_counts.entry(code.name().to_string()).or_insert(0) += 1;
        }
        confidence_sum += r.verdict.confidence;
        if r.verdict.label == VerdictLabel::Undecidable {
            abstentions += 1;
        }
    }
    let n = results.len();
    Summary {
        citation_count: n,
        verdict_counts,
        taxonomy_counts,
        mean_confidence: if n > 0 { confidence_sum / n as f64 } else { 0.0 },
        abstention_rate: if n > 0 { abstentions as f64 / n as f64 } else { 0.0 },
        anomaly_count,
        partial_failures,
    }
}
