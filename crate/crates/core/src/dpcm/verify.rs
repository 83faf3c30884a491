//! Structural extraction audit: heading progression, numbering sequences,
//! and citation-index density checks, plus the LLM semantic audit for
//! residual suspicious segments.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::assets;
use crate::gateway::{CompletionRequest, DecodingConfig, Gateway};
use crate::model::{BlockKind, ParsedDocument, SourceSpan};

use super::DpcmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnomalyKind {
    HeadingJump,
    NumberingGap,
    CitationSequenceGap,
    SuspiciousSegment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionAnomaly {
    pub kind: AnomalyKind,
    pub span: SourceSpan,
    pub detail: String,
}

/// Maximum run of missing citation indices before the sequence is flagged.
const MAX_CITATION_GAP: u32 = 10;
/// Maximum tolerated fraction of out-of-order adjacent first occurrences.
const MAX_OUT_OF_ORDER: f64 = 0.2;
/// Numbering gaps of at most this length are tolerated.
const MAX_NUMBERING_GAP: u32 = 1;

/// Pure structural analysis; returns the empty list on a clean document.
pub fn verify_extraction(doc: &ParsedDocument) -> Vec<ExtractionAnomaly> {
    let mut anomalies = Vec::new();
    check_headings(doc, &mut anomalies);
    check_numbering(doc, &mut anomalies);
    check_citation_sequence(doc, &mut anomalies);
    anomalies
}

fn check_headings(doc: &ParsedDocument, out: &mut Vec<ExtractionAnomaly>) {
    let mut prev: Option<(u8, SourceSpan)> = None;
    for block in &doc.blocks {
        if let BlockKind::Heading(level) = block.kind {
            if let Some((p, _)) = prev {
                if level.abs_diff(p) > 1 {
                    out.push(ExtractionAnomaly {
                        kind: AnomalyKind::HeadingJump,
                        span: block.span,
                        detail: format!("heading level jumps from {p} to {level}"),
                    });
                }
            }
            prev = Some((level, block.span));
        }
    }
}

fn check_numbering(doc: &ParsedDocument, out: &mut Vec<ExtractionAnomaly>) {
    let eq_re = Regex::new(r"\((\d+)\)\s*\$*\s*$").unwrap();
    let float_re = Regex::new(r"^(Figure|Table|Fig\.|Tab\.)\s*(\d+)").unwrap();
    let mut equations: Vec<(u32, SourceSpan)> = Vec::new();
    let mut figures: Vec<(u32, SourceSpan)> = Vec::new();
    let mut tables: Vec<(u32, SourceSpan)> = Vec::new();
    for block in &doc.blocks {
        match block.kind {
            BlockKind::DisplayMath => {
                if let Some(cap) = eq_re.captures(block.text.trim_end_matches('$').trim_end()) {
                    equations.push((cap[1].parse().unwrap(), block.span));
                }
            }
            BlockKind::Caption => {
                if let Some(cap) = float_re.captures(&block.text) {
                    let n = cap[2].parse().unwrap();
                    if cap[1].starts_with("Fig") {
                        figures.push((n, block.span));
                    } else {
                        tables.push((n, block.span));
                    }
                }
            }
            _ => {}
        }
    }
    for (name, seq) in [("equation", equations), ("figure", figures), ("table", tables)] {
        check_sequence(name, &seq, out);
    }
}

fn check_sequence(name: &str, seq: &[(u32, SourceSpan)], out: &mut Vec<ExtractionAnomaly>) {
    for window in seq.windows(2) {
        let ((a, _), (b, span)) = (window[0], window[1]);
        if b == a {
            out.push(ExtractionAnomaly {
                kind: AnomalyKind::NumberingGap,
                span,
                detail: format!("duplicate {name} number {b}"),
            });
        } else if b > a && b - a - 1 > MAX_NUMBERING_GAP {
            out.push(ExtractionAnomaly {
                kind: AnomalyKind::NumberingGap,
                span,
                detail: format!("{name} numbering gap: {a} then {b}"),
            });
        } else if b < a {
            out.push(ExtractionAnomaly {
                kind: AnomalyKind::NumberingGap,
                span,
                detail: format!("{name} numbering regresses: {a} then {b}"),
            });
        }
    }
}

fn check_citation_sequence(doc: &ParsedDocument, out: &mut Vec<ExtractionAnomaly>) {
    let group_re = Regex::new(r"\[(\d+(?:\s*[,\u{2013}\u{2014}-]\s*\d+)*)\]").unwrap();
    let num_re = Regex::new(r"\d+").unwrap();
    // All citation indices in document order, with spans.
    let mut occurrences: Vec<(u32, SourceSpan)> = Vec::new();
    for block in &doc.blocks {
        if matches!(block.kind, BlockKind::BibEntry { .. } | BlockKind::DisplayMath) {
            continue;
        }
        for group in group_re.captures_iter(&block.text) {
            for num in num_re.find_iter(&group[1]) {
                occurrences.push((num.as_str().parse().unwrap(), block.span));
            }
        }
    }
    if occurrences.is_empty() {
        return;
    }

    // Density over sorted unique indices.
    let mut unique: Vec<(u32, SourceSpan)> = Vec::new();
    for &(n, span) in &occurrences {
        if !unique.iter().any(|&(u, _)| u == n) {
            unique.push((n, span));
        }
    }
    let mut sorted = unique.clone();
    sorted.sort_by_key(|&(n, _)| n);
    for window in sorted.windows(2) {
        let ((a, _), (b, span)) = (window[0], window[1]);
        if b - a - 1 > MAX_CITATION_GAP {
            out.push(ExtractionAnomaly {
                kind: AnomalyKind::CitationSequenceGap,
                span,
                detail: format!("no citation indices between [{a}] and [{b}]"),
            });
        }
    }

    // Monotonicity over first occurrences; re-citations of earlier indices
    // are normal and not counted.
    if unique.len() >= 2 {
        let inversions = unique
            .windows(2)
            .filter(|w| w[1].0 < w[0].0)
            .count();
        let frac = inversions as f64 / (unique.len() - 1) as f64;
        if frac > MAX_OUT_OF_ORDER {
            out.push(ExtractionAnomaly {
                kind: AnomalyKind::CitationSequenceGap,
                span: unique[0].1,
                detail: format!(
                    "citation first occurrences out of order: {inversions}/{} adjacent pairs",
                    unique.len() - 1
                ),
            });
        }
    }
}

/// Level-3 semantic audit of one suspicious segment. Returns an anomaly when
/// the model labels the segment SUSPICIOUS_*.
pub fn audit_segment(
    segment: &str,
    description: &str,
    span: SourceSpan,
    gateway: &Gateway,
    seed: u64,
) -> Result<Option<ExtractionAnomaly>, DpcmError> {
    let request = CompletionRequest::text(
        assets::AUDIT_SYSTEM,
        format!("[Structure]\n{description}\n\n[Segment]\n{segment}"),
        DecodingConfig::deterministic(seed),
        "dpcm/audit",
    );
    let reply = gateway.complete(&request)?.remove(0).0;
    let label = reply
        .lines()
        .map(str::trim)
        .find(|l| l.starts_with("OK") || l.starts_with("SUSPICIOUS_"));
    Ok(match label {
        Some(l) if l.starts_with("SUSPICIOUS_") => Some(ExtractionAnomaly {
            kind: AnomalyKind::SuspiciousSegment,
            span,
            detail: reply.trim().to_string(),
        }),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpcm::markdown::parse_markdown;

    #[test]
    fn heading_jump_both_directions() {
        let doc = parse_markdown("# A\n\n### B\n\ntext.", 1);
        let anomalies = verify_extraction(&doc);
        assert_eq!(anomalies.len(), 1);
        assert_eq!(anomalies[0].kind, AnomalyKind::HeadingJump);

        let doc = parse_markdown("# A\n\n## B\n\n#### C\n\n# D\n\ntext.", 1);
        let kinds: Vec<AnomalyKind> = verify_extraction(&doc).iter().map(|a| a.kind).collect();
        assert_eq!(kinds, vec![AnomalyKind::HeadingJump, AnomalyKind::HeadingJump]);
    }

    #[test]
    fn contiguous_equations_are_clean() {
        let doc = parse_markdown("$$ a (1) $$\n\n$$ b (2) $$\n\n$$ c (3) $$", 1);
        assert!(verify_extraction(&doc).is_empty());
    }

    #[test]
    fn long_equation_gap_and_duplicate_flagged() {
        let doc = parse_markdown("$$ a (1) $$\n\n$$ b (5) $$", 1);
        let anomalies = verify_extraction(&doc);
        assert_eq!(anomalies.len(), 1);
        assert_eq!(anomalies[0].kind, AnomalyKind::NumberingGap);

        let doc = parse_markdown("Figure 2: x.\n\nFigure 2: y.", 1);
        assert_eq!(verify_extraction(&doc).len(), 1);
    }

    #[test]
    fn single_missing_number_tolerated() {
        let doc = parse_markdown("$$ a (1) $$\n\n$$ b (3) $$", 1);
        assert!(verify_extraction(&doc).is_empty());
    }

    #[test]
    fn citation_gap_flagged() {
        let doc = parse_markdown("We cite [1] and [2] and then [20].", 1);
        let anomalies = verify_extraction(&doc);
        assert_eq!(anomalies.len(), 1);
        assert_eq!(anomalies[0].kind, AnomalyKind::CitationSequenceGap);
        assert!(anomalies[0].detail.contains("[2]") && anomalies[0].detail.contains("[20]"));
    }

    #[test]
    fn recitations_do_not_count_as_inversions() {
        let doc = parse_markdown("We cite [1], [2], [3], then again [1] and [2], then [4].", 1);
        assert!(verify_extraction(&doc).is_empty());
    }

    #[test]
    fn clean_document_yields_no_anomalies() {
        let doc = parse_markdown(
            "# Title\n\n## Methods\n\nWe cite [1] and [2, 3].\n\n$$ E (1) $$\n\nFigure 1: caption.\n\nMore text [4].",
            1,
        );
        assert!(verify_extraction(&doc).is_empty());
    }
}
