//! Bibliography entry normalization.

use regex::Regex;

use crate::model::{Author, BibEntry, BlockKind, ParsedDocument, SourceSpan, Year};

use super::verify::{AnomalyKind, ExtractionAnomaly};

/// Parses every bibliography block into a normalized entry. When the document
/// has no bibliography section, returns an empty list plus an anomaly.
pub fn parse_bibliography(doc: &ParsedDocument) -> (Vec<BibEntry>, Option<ExtractionAnomaly>) {
    let mut entries = Vec::new();
    let mut position = 0u32;
    for block in &doc.blocks {
        let BlockKind::BibEntry { key, index } = &block.kind else {
            continue;
        };
        position += 1;
        let entry_index = index.unwrap_or(position);
        let key = key.clone().unwrap_or_else(|| format!("ref-{entry_index}"));
        entries.push(parse_entry(&block.text, key, entry_index));
    }
    if entries.is_empty() {
        let anomaly = ExtractionAnomaly {
            kind: AnomalyKind::SuspiciousSegment,
            span: SourceSpan::new(1, 0, 0),
            detail: "no bibliography section found".into(),
        };
        return (entries, Some(anomaly));
    }
    (entries, None)
}

/// Parses one raw entry string ("[7] A. Smith. Title. Venue, 2020.").
pub fn parse_entry(raw: &str, key: String, entry_index: u32) -> BibEntry {
    let body = Regex::new(r"^\s*(?:\[\d+\]|\d+\.)\s*")
        .unwrap()
        .replace(raw, "")
        .to_string();

    let doi = Regex::new(r"\b10\.\d{4,9}/[^\s,;]+")
        .unwrap()
        .find(&body)
        .map(|m| m.as_str().trim_end_matches(['.', ')']).to_string());
    let archive_id = Regex::new(r"arXiv:\s*(\d{4}\.\d{4,5}(?:v\d+)?)")
        .unwrap()
        .captures(&body)
        .map(|c| c[1].to_string());
    let year = Regex::new(r"\b((?:19|20)\d{2})[a-z]?\b")
        .unwrap()
        .captures(&body)
        .and_then(|c| c[1].parse().ok())
        .map_or(Year::Unknown, Year::Known);

    // Segments split on sentence periods; initials are protected so
    // "A. B. Smith" stays one segment.
    let protected = Regex::new(r"\b([A-Z])\.")
        .unwrap()
        .replace_all(&body, "$1\u{1}");
    let segments: Vec<String> = protected
        .split(". ")
        .map(|s| s.replace('\u{1}', ".").trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let (author_seg, title_seg, venue_seg) = split_segments(&segments);
    let authors = parse_authors(&author_seg);
    let title_tokens = tokenize_title(&title_seg);
    let venue = venue_seg.trim_end_matches('.').trim().to_string();

    BibEntry {
        key,
        authors,
        year,
        title_tokens,
        venue,
        doi,
        archive_id,
        entry_index,
        raw: raw.to_string(),
    }
}

/// The author list is the leading run of segments that look like names
/// (initials plus capitalized words); the next segment is the title and the
/// remainder the venue.
fn split_segments(segments: &[String]) -> (String, String, String) {
    let name_like = Regex::new(
        r"^(?:[A-Z]\.(?:\s*[A-Z]\.)*\s+[A-Z][\w'\u{2019}-]+|[A-Z][\w'\u{2019}-]+,\s*[A-Z]\.)",
    )
    .unwrap();
    let mut rest = segments;
    let mut authors = String::new();
    if let Some((first, tail)) = rest.split_first() {
        if name_like.is_match(first) {
            authors = first.clone();
            rest = tail;
        }
    }
    let title = rest.first().cloned().unwrap_or_default();
    let venue = rest.get(1..).unwrap_or(&[]).join(". ");
    (authors, title, venue)
}

fn parse_authors(text: &str) -> Vec<Author> {
    let mut authors = Vec::new();
    // "A. Smith" form.
    for cap in Regex::new(r"([A-Z]\.(?:\s*[A-Z]\.)*)\s+([A-Z][\w'\u{2019}-]+)")
        .unwrap()
        .captures_iter(text)
    {
        authors.push(Author::new(&cap[2], cap[1].replace(' ', "")));
    }
    // "Smith, A." form.
    for cap in Regex::new(r"([A-Z][\w'\u{2019}-]+),\s*([A-Z]\.(?:\s*[A-Z]\.)*)")
        .unwrap()
        .captures_iter(text)
    {
        if !authors.iter().any(|a| a.family.eq_ignore_ascii_case(&cap[1])) {
            authors.push(Author::new(&cap[1], cap[2].replace(' ', "")));
        }
    }
    authors
}

/// Lowercased alphanumeric title tokens; version suffixes like "v2" are
/// stripped so preprint revisions compare equal.
pub fn tokenize_title(title: &str) -> Vec<String> {
    let version = Regex::new(r"(?i)^v\d+$").unwrap();
    title
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .filter(|t| !version.is_match(t))
        .collect()
}
