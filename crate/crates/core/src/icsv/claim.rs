//! Atomic claim extraction: a claim-preserving paraphrase of the citing
//! sentence, computed over a growing context window until two consecutive
//! radii agree.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::acsv::cosine;
use crate::assets;
use crate::gateway::{CompletionRequest, DecodingConfig, Gateway};
use crate::model::{BlockKind, CitationEdge, ParsedDocument};

use super::IcsvError;

/// Two paraphrases are the same claim when normalization-identical or at
/// this embedding cosine.
const STABILITY_COSINE: f64 = 0.95;

/// One self-contained sentence, free of citation markers, author names,
/// and years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicClaim {
    pub text: String,
    pub window_radius_used: usize,
    pub occurrence_id: String,
}

/// Paraphrases the citing sentence at radius 1, widening toward the full
/// paragraph and then the adjacent paragraphs. The earlier paraphrase is
/// accepted once two consecutive radii stabilize; INSUFFICIENT_CONTEXT
/// restarts the stability chain at the next radius.
pub fn extract_atomic_claim(
    doc: &ParsedDocument,
    edge: &CitationEdge,
    gateway: &Gateway,
    seed: u64,
) -> Result<AtomicClaim, IcsvError> {
    let target = doc
        .sentence(edge.sentence_index)
        .ok_or_else(|| IcsvError::Underspecified(edge.occurrence_id.clone()))?;
    let windows = context_windows(doc, edge.sentence_index);

    let mut previous: Option<(usize, String)> = None;
    for (radius, window) in windows.iter().enumerate() {
        let user = assets::fill(
            assets::PARAPHRASE_USER,
            &[("W_A", window.as_str()), ("s_A", target.text.as_str())],
        );
        let request = CompletionRequest::text(
            assets::PARAPHRASE_SYSTEM,
            user,
            DecodingConfig::deterministic(seed),
            format!("icsv/paraphrase@{}", edge.occurrence_id),
        );
        let reply = gateway.complete(&request)?.remove(0).0;
        let reply = reply.trim().to_string();
        if reply == "INSUFFICIENT_CONTEXT" {
            previous = None;
            continue;
        }
        if let Some((prev_radius, prev_text)) = &previous {
            if stable(prev_text, &reply, gateway)? {
                return Ok(AtomicClaim {
                    text: strip_markers(prev_text),
                    window_radius_used: prev_radius + 1,
                    occurrence_id: edge.occurrence_id.clone(),
                });
            }
        }
        previous = Some((radius, reply));
    }
    Err(IcsvError::Underspecified(edge.occurrence_id.clone()))
}

fn stable(a: &str, b: &str, gateway: &Gateway) -> Result<bool, IcsvError> {
    if normalize(a) == normalize(b) {
        return Ok(true);
    }
    let vectors = gateway.embed(&[a.to_string(), b.to_string()])?;
    Ok(cosine(&vectors[0], &vectors[1]) >= STABILITY_COSINE)
}

fn normalize(text: &str) -> String {
    text.chars()
        .filter_map(|c| {
            if c.is_alphanumeric() {
                Some(c.to_ascii_lowercase())
            } else if c.is_whitespace() {
                Some(' ')
            } else {
                None
            }
        })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Growing window texts around the target sentence: in-paragraph radii
/// until the paragraph is exhausted, then the adjacent prose paragraphs.
/// The last window repeats when there are no adjacent paragraphs, which
/// lets a context-free sentence stabilize trivially.
fn context_windows(doc: &ParsedDocument, sentence_index: usize) -> Vec<String> {
    let Some(target) = doc.sentence(sentence_index) else {
        return Vec::new();
    };
    let block = target.block_index;
    let in_block: Vec<&str> = doc
        .sentences
        .iter()
        .filter(|s| s.block_index == block)
        .map(|s| s.text.as_str())
        .collect();
    let pos = doc
        .sentences
        .iter()
        .filter(|s| s.block_index == block)
        .position(|s| s.sentence_index == sentence_index)
        .unwrap_or(0);

    let mut windows = Vec::new();
    let mut r = 1usize;
    loop {
        let lo = pos.saturating_sub(r);
        let hi = (pos + r + 1).min(in_block.len());
        windows.push(in_block[lo..hi].join(" "));
        if lo == 0 && hi == in_block.len() {
            break;
        }
        r += 1;
    }

    let mut expanded: Vec<&str> = Vec::new();
    for neighbor in [block.checked_sub(1), Some(block + 1)] {
        if let Some(nb) = neighbor {
            if doc
                .blocks
                .get(nb)
                .is_some_and(|b| matches!(b.kind, BlockKind::Paragraph | BlockKind::ListItem))
            {
                expanded.extend(
                    doc.sentences
                        .iter()
                        .filter(|s| s.block_index == nb)
                        .map(|s| s.text.as_str()),
                );
            }
        }
    }
    if expanded.is_empty() {
        windows.push(windows.last().cloned().unwrap_or_default());
    } else {
        let mut all: Vec<&str> = Vec::new();
        if block > 0 {
            all.extend(
                doc.sentences
                    .iter()
                    .filter(|s| s.block_index == block - 1)
                    .map(|s| s.text.as_str()),
            );
        }
        all.extend(in_block.iter().copied());
        all.extend(
            doc.sentences
                .iter()
                .filter(|s| s.block_index == block + 1)
                .map(|s| s.text.as_str()),
        );
        windows.push(all.join(" "));
    }
    windows
}

/// Removes residual citation markers and bare year parentheticals; the
/// paraphrase instructions already forbid them, this enforces the invariant.
pub fn strip_markers(text: &str) -> String {
    let numeric = Regex::new(r"\[\^?\d+(?:\s*[,\u{2013}\u{2014}-]\s*\d+)*\]").unwrap();
    let parenthetical = Regex::new(r"\((?:[^()]*\b[12]\d{3}[a-z]?\b[^()]*)\)").unwrap();
    let cleaned = numeric.replace_all(text, "");
    let cleaned = parenthetical.replace_all(&cleaned, "");
    let space = Regex::new(r"\s+([.,;:!?])").unwrap();
    let cleaned = space.replace_all(cleaned.trim(), "$1");
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpcm::parse_markdown;
    use crate::gateway::{StubBackend, StubOptions};
    use crate::model::CitationStyle;

    fn gw() -> Gateway {
        Gateway::new(Box::new(StubBackend::new("stub", StubOptions::default())))
    }

    fn edge(sentence_index: usize) -> CitationEdge {
        CitationEdge {
            occurrence_id: "occ-1".into(),
            sentence_index,
            surface_text: "[1]".into(),
            style: CitationStyle::Numeric,
            target_keys: vec!["a".into()],
            ambiguity_flag: false,
        }
    }

    #[test]
    fn pronoun_free_sentence_accepts_at_first_radius() {
        let doc = parse_markdown(
            "Filler before. The catalyst raises yield by ten percent [1]. Filler after.",
            1,
        );
        let claim = extract_atomic_claim(&doc, &edge(1), &gw(), 0).unwrap();
        assert_eq!(claim.window_radius_used, 1);
        assert!(claim.text.contains("catalyst raises yield"));
        assert!(!claim.text.contains("[1]"));
    }

    #[test]
    fn needs_gate_widens_until_referent_in_window() {
        // The referent word appears two sentences away, so radius 1 fails
        // and radius 2 succeeds; stability then lands on radius 2.
        let doc = parse_markdown(
            "The photon detector was recalibrated. Filler sentence here. This device [[needs:photon]] improves timing [1]. More filler. Final filler.",
            1,
        );
        let claim = extract_atomic_claim(&doc, &edge(2), &gw(), 0).unwrap();
        assert!(claim.window_radius_used >= 2);
    }

    #[test]
    fn perpetual_insufficiency_is_underspecified() {
        let doc = parse_markdown("It improves results [[needs:zzzmissing]] notably [1].", 1);
        let err = extract_atomic_claim(&doc, &edge(0), &gw(), 0).unwrap_err();
        assert!(matches!(err, IcsvError::Underspecified(_)));
    }

    #[test]
    fn marker_stripping_patterns() {
        assert_eq!(
            strip_markers("The rate doubles [3, 5] under load (Smith, 2019)."),
            "The rate doubles under load."
        );
    }
}
