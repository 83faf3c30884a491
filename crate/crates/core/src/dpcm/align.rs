//! Citation-to-entry alignment.

use crate::assets;
use crate::gateway::{CompletionRequest, DecodingConfig, Gateway};
use crate::model::{BibEntry, CitationEdge};

use super::citations::CitationDraft;
use super::DpcmError;

/// Acceptance threshold on the author-year composite score.
const ACCEPT_THRESHOLD: f64 = 0.8;
/// Candidates below this score are not even offered to the disambiguator.
const CANDIDATE_FLOOR: f64 = 0.3;

const W_NAME: f64 = 0.5;
const W_YEAR: f64 = 0.3;
const W_TITLE: f64 = 0.2;

/// Composite author-year similarity between a draft and an entry.
fn author_year_score(names: &[String], year: Option<i32>, entry: &BibEntry) -> f64 {
    let entry_families: Vec<String> = entry
        .authors
        .iter()
        .map(|a| a.family.to_lowercase())
        .collect();
    let name_overlap = if names.is_empty() {
        0.0
    } else {
        let hits = names.iter().filter(|n| entry_families.contains(n)).count();
        hits as f64 / names.len() as f64
    };
    let year_eq = match (year, entry.year.known()) {
        (Some(a), Some(b)) if a == b => 1.0,
        _ => 0.0,
    };
    // Surface citations carry no title text; the title term contributes only
    // when a draft name doubles as a title token (rare, but harmless).
    let title_overlap = if names.is_empty() {
        0.0
    } else {
        let hits = names.iter().filter(|n| entry.title_tokens.contains(n)).count();
        hits as f64 / names.len() as f64
    };
    W_NAME * name_overlap + W_YEAR * year_eq + W_TITLE * title_overlap
}

/// Aligns drafts to entries. Markup anchors map exactly; numeric indices map
/// positionally; author-year uses the composite score with constrained LLM
/// disambiguation for ties and sub-threshold cases.
pub fn align_citations(
    drafts: &[CitationDraft],
    entries: &[BibEntry],
    gateway: &Gateway,
    seed: u64,
) -> Result<Vec<CitationEdge>, DpcmError> {
    let mut edges = Vec::with_capacity(drafts.len());
    for draft in drafts {
        edges.push(align_one(draft, entries, gateway, seed)?);
    }
    Ok(edges)
}

fn align_one(
    draft: &CitationDraft,
    entries: &[BibEntry],
    gateway: &Gateway,
    seed: u64,
) -> Result<CitationEdge, DpcmError> {
    let mut edge = CitationEdge {
        occurrence_id: draft.occurrence_id.clone(),
        sentence_index: draft.sentence_index,
        surface_text: draft.surface_text.clone(),
        style: draft.style,
        target_keys: Vec::new(),
        ambiguity_flag: false,
    };

    if let Some(keys) = &draft.anchor_keys {
        // Exact anchors: no string matching. Unknown keys flag the edge.
        for key in keys {
            if entries.iter().any(|e| &e.key == key) {
                edge.target_keys.push(key.clone());
            } else {
                edge.ambiguity_flag = true;
            }
        }
        if edge.target_keys.is_empty() && !keys.is_empty() {
            edge.target_keys = keys.clone();
        }
        return Ok(edge);
    }

    if let Some(index) = draft.numeric_index {
        match entries.iter().find(|e| e.entry_index == index) {
            Some(entry) => edge.target_keys.push(entry.key.clone()),
            None => edge.ambiguity_flag = true,
        }
        return Ok(edge);
    }

    let Some((names, year)) = &draft.author_year else {
        edge.ambiguity_flag = true;
        return Ok(edge);
    };
    let mut scored: Vec<(f64, &BibEntry)> = entries
        .iter()
        .map(|e| (author_year_score(names, *year, e), e))
        .filter(|(s, _)| *s >= CANDIDATE_FLOOR)
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.entry_index.cmp(&b.1.entry_index)));

    match scored.as_slice() {
        [] => edge.ambiguity_flag = true,
        [(best, entry), rest @ ..] => {
            let tied = rest.first().is_some_and(|(s, _)| (best - s).abs() < 1e-9);
            if *best >= ACCEPT_THRESHOLD && !tied {
                edge.target_keys.push(entry.key.clone());
            } else {
                let candidates: Vec<&BibEntry> =
                    scored.iter().take(5).map(|(_, e)| *e).collect();
                match disambiguate(draft, &candidates, gateway, seed)? {
                    Some(key) => edge.target_keys.push(key),
                    None => edge.ambiguity_flag = true,
                }
            }
        }
    }
    Ok(edge)
}

/// Constrained LLM disambiguation: the model may only answer with a listed
/// candidate key or NONE.
fn disambiguate(
    draft: &CitationDraft,
    candidates: &[&BibEntry],
    gateway: &Gateway,
    seed: u64,
) -> Result<Option<String>, DpcmError> {
    let listing: String = candidates
        .iter()
        .map(|e| format!("{}: {}\n", e.key, e.raw.trim()))
        .collect();
    let user = assets::fill(
        assets::DISAMBIGUATE_USER,
        &[("surface", &draft.surface_text), ("candidates", listing.trim_end())],
    );
    let request = CompletionRequest::text(
        assets::DISAMBIGUATE_SYSTEM,
        user,
        DecodingConfig::deterministic(seed),
        format!("dpcm/disambiguate@{}", draft.occurrence_id),
    );
    let reply = gateway.complete(&request)?.remove(0).0;
    let answer = reply.trim();
    Ok(candidates
        .iter()
        .find(|e| e.key == answer)
        .map(|e| e.key.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpcm::bibliography::parse_entry;
    use crate::gateway::{StubBackend, StubOptions};
    use crate::model::CitationStyle;

    fn gw() -> Gateway {
        Gateway::new(Box::new(StubBackend::new("stub", StubOptions::default())))
    }

    fn draft_author_year(names: &[&str], year: i32) -> CitationDraft {
        CitationDraft {
            occurrence_id: "occ-1".into(),
            sentence_index: 0,
            surface_text: format!("({}, {year})", names.join(" & ")),
            style: CitationStyle::AuthorYear,
            numeric_index: None,
            author_year: Some((names.iter().map(|n| n.to_lowercase()).collect(), Some(year))),
            anchor_keys: None,
        }
    }

    #[test]
    fn year_equality_breaks_same_author_pairs() {
        let entries = vec![
            parse_entry("[1] A. Smith. First study. V, 2020.", "s2020".into(), 1),
            parse_entry("[2] A. Smith. Second study. V, 2021.", "s2021".into(), 2),
        ];
        let edges =
            align_citations(&[draft_author_year(&["Smith"], 2020)], &entries, &gw(), 0).unwrap();
        assert_eq!(edges[0].target_keys, vec!["s2020"]);
        assert!(!edges[0].ambiguity_flag);
    }

    #[test]
    fn out_of_range_numeric_index_is_unresolved() {
        let entries = vec![parse_entry("[1] A. Smith. T. V, 2020.", "a".into(), 1)];
        let draft = CitationDraft {
            occurrence_id: "occ-1".into(),
            sentence_index: 0,
            surface_text: "[99]".into(),
            style: CitationStyle::Numeric,
            numeric_index: Some(99),
            author_year: None,
            anchor_keys: None,
        };
        let edges = align_citations(&[draft], &entries, &gw(), 0).unwrap();
        assert!(edges[0].target_keys.is_empty());
        assert!(edges[0].ambiguity_flag);
    }

    #[test]
    fn anchor_backed_edge_maps_exactly() {
        let entries = vec![parse_entry("[1] A. Smith. T. V, 2020.", "a".into(), 1)];
        let draft = CitationDraft {
            occurrence_id: "occ-1".into(),
            sentence_index: 0,
            surface_text: String::new(),
            style: CitationStyle::Numeric,
            numeric_index: None,
            author_year: None,
            anchor_keys: Some(vec!["a".into()]),
        };
        let edges = align_citations(&[draft], &entries, &gw(), 0).unwrap();
        assert_eq!(edges[0].target_keys, vec!["a"]);
        assert!(!edges[0].ambiguity_flag);
    }

    #[test]
    fn ambiguous_tie_abstains_via_stub() {
        // Two entries identical under the score; stub disambiguator answers
        // NONE, so the edge is flagged.
        let entries = vec![
            parse_entry("[1] A. Smith. First. V, 2020.", "a".into(), 1),
            parse_entry("[2] A. Smith. Second. V, 2020.", "b".into(), 2),
        ];
        let edges =
            align_citations(&[draft_author_year(&["Smith"], 2020)], &entries, &gw(), 0).unwrap();
        assert!(edges[0].target_keys.is_empty());
        assert!(edges[0].ambiguity_flag);
    }

    #[test]
    fn pick_directive_resolves_tie() {
        let entries = vec![
            parse_entry("[1] A. Smith. First [[pick:b]]. V, 2020.", "a".into(), 1),
            parse_entry("[2] A. Smith. Second. V, 2020.", "b".into(), 2),
        ];
        let edges =
            align_citations(&[draft_author_year(&["Smith"], 2020)], &entries, &gw(), 0).unwrap();
        assert_eq!(edges[0].target_keys, vec!["b"]);
    }
}
