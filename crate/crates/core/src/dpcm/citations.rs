//! Style-agnostic in-text citation detection.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{CitationStyle, ParsedDocument};

/// A detected but not yet aligned citation occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationDraft {
    pub occurrence_id: String,
    pub sentence_index: usize,
    /// Full surface form of the containing group, e.g. "[3-5]".
    pub surface_text: String,
    pub style: CitationStyle,
    /// Numeric style: the single expanded index this draft points at.
    pub numeric_index: Option<u32>,
    /// Author-year style: (normalized family names, year).
    pub author_year: Option<(Vec<String>, Option<i32>)>,
    /// Markup inputs: the exact anchor keys; no string matching needed.
    pub anchor_keys: Option<Vec<String>>,
}

/// Expands "a-b" (or en/em dash) to the inclusive index list; single numbers
/// map to themselves.
pub fn expand_range(item: &str) -> Vec<u32> {
    let parts: Vec<&str> = item
        .split(['-', '\u{2013}', '\u{2014}'])
        .map(str::trim)
        .collect();
    match parts.as_slice() {
        [single] => single.parse().into_iter().collect(),
        [a, b] => match (a.parse::<u32>(), b.parse::<u32>()) {
            (Ok(a), Ok(b)) if b >= a => (a..=b).collect(),
            (Ok(a), Ok(b)) => {
                log::warn!("descending citation range {a}-{b}; keeping endpoints");
                vec![a, b]
            }
            _ => Vec::new(),
        },
        _ => Vec::new(),
    }
}

/// Detects numeric, author-year, and footnote citations over the sentence
/// index. Markup anchors take precedence: when the document carries anchors,
/// drafts are derived from them and detection only infers the style.
pub fn detect_citations(doc: &ParsedDocument) -> (CitationStyle, Vec<CitationDraft>) {
    let numeric_re = Regex::new(r"\[(\d+(?:\s*[,\u{2013}\u{2014}-]\s*\d+)*)\]").unwrap();
    let footnote_re = Regex::new(r"\[\^(\d+)\]").unwrap();
    // Parenthetical author-year groups must contain a year to qualify.
    let paren_re = Regex::new(r"\(([^()]*(?:19|20)\d{2}[a-z]?[^()]*)\)").unwrap();
    let narrative_re = Regex::new(
        r"\b([A-Z][\w'\u{2019}-]+(?:\s+(?:&|and)\s+[A-Z][\w'\u{2019}-]+)?(?:\s+et al\.)?)\s+\(((?:19|20)\d{2}[a-z]?)\)",
    )
    .unwrap();

    let mut numeric_hits = 0usize;
    let mut author_year_hits = 0usize;
    let mut footnote_hits = 0usize;

    let mut drafts: Vec<CitationDraft> = Vec::new();
    let mut next_occ = doc.anchor_occurrences.len() + 1;

    for sentence in &doc.sentences {
        let text = &sentence.text;
        footnote_hits += footnote_re.find_iter(text).count();

        let mut numeric_spans: Vec<(usize, usize)> = Vec::new();
        for cap in numeric_re.captures_iter(text) {
            if footnote_re.is_match(cap.get(0).unwrap().as_str()) {
                continue;
            }
            let m = cap.get(0).unwrap();
            numeric_spans.push((m.start(), m.end()));
            numeric_hits += 1;
            for item in cap[1].split(',') {
                for index in expand_range(item) {
                    drafts.push(CitationDraft {
                        occurrence_id: format!("occ-{next_occ}"),
                        sentence_index: sentence.sentence_index,
                        surface_text: m.as_str().to_string(),
                        style: CitationStyle::Numeric,
                        numeric_index: Some(index),
                        author_year: None,
                        anchor_keys: None,
                    });
                    next_occ += 1;
                }
            }
        }

        for cap in paren_re.captures_iter(text) {
            let m = cap.get(0).unwrap();
            if numeric_spans.iter().any(|&(s, e)| m.start() >= s && m.end() <= e) {
                continue;
            }
            // Each ';'-separated item is one draft edge within the group.
            for item in cap[1].split(';') {
                let Some((names, year)) = parse_author_year(item) else {
                    continue;
                };
                author_year_hits += 1;
                drafts.push(CitationDraft {
                    occurrence_id: format!("occ-{next_occ}"),
                    sentence_index: sentence.sentence_index,
                    surface_text: m.as_str().to_string(),
                    style: CitationStyle::AuthorYear,
                    numeric_index: None,
                    author_year: Some((names, year)),
                    anchor_keys: None,
                });
                next_occ += 1;
            }
        }

        for cap in narrative_re.captures_iter(text) {
            author_year_hits += 1;
            let names = normalize_names(&cap[1]);
            let year = cap[2][..4].parse::<i32>().ok();
            drafts.push(CitationDraft {
                occurrence_id: format!("occ-{next_occ}"),
                sentence_index: sentence.sentence_index,
                surface_text: cap[0].to_string(),
                style: CitationStyle::AuthorYear,
                numeric_index: None,
                author_year: Some((names, year)),
                anchor_keys: None,
            });
            next_occ += 1;
        }
    }

    let dominant = if footnote_hits > numeric_hits && footnote_hits > author_year_hits {
        CitationStyle::Footnote
    } else if author_year_hits > numeric_hits {
        CitationStyle::AuthorYear
    } else {
        CitationStyle::Numeric
    };

    if !doc.anchor_occurrences.is_empty() {
        // Anchor-backed drafts replace string detection entirely.
        let drafts = doc
            .anchor_occurrences
            .iter()
            .map(|occ| {
                let sentence_index = doc
                    .sentence_at(occ.block_index, occ.offset)
                    .map(|s| s.sentence_index)
                    .unwrap_or(0);
                CitationDraft {
                    occurrence_id: occ.occurrence_id.clone(),
                    sentence_index,
                    surface_text: String::new(),
                    style: dominant,
                    numeric_index: None,
                    author_year: None,
                    anchor_keys: Some(occ.keys.clone()),
                }
            })
            .collect();
        return (dominant, drafts);
    }

    (dominant, drafts)
}

/// Parses "Smith, 2020" / "Brown & Lee, 2019" / "Smith et al., 2021" items.
fn parse_author_year(item: &str) -> Option<(Vec<String>, Option<i32>)> {
    let year_re = Regex::new(r"\b((?:19|20)\d{2})[a-z]?\b").unwrap();
    let year = year_re.captures(item).and_then(|c| c[1].parse().ok());
    year?;
    let name_part = item.split(|c: char| c.is_ascii_digit()).next().unwrap_or("");
    let names = normalize_names(name_part);
    if names.is_empty() {
        return None;
    }
    Some((names, year))
}

/// Extracts normalized (lowercased) family names, dropping connectives and
/// "et al." markers.
pub fn normalize_names(text: &str) -> Vec<String> {
    text.split(|c: char| c == '&' || c == ',' || c.is_whitespace())
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| {
            !w.is_empty()
                && !matches!(w.to_ascii_lowercase().as_str(), "and" | "et" | "al" | "eds")
                && w.chars().next().is_some_and(|c| c.is_uppercase())
                && w.chars().count() > 1
        })
        .map(|w| w.to_lowercase())
        .collect()
}
