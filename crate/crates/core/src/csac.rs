//! Source accessibility classification: every cited source is routed to
//! exactly one of Accessible, MetadataOnly, or Ghost, with transport
//! failures kept distinct from resolved absence.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpcm::bibliography::tokenize_title;
use crate::dpcm::parse_markdown;
use crate::model::{BibEntry, ParsedDocument};

/// Acceptance thresholds for surrogate equivalence.
const TITLE_THRESHOLD: f64 = 0.9;
const AUTHOR_THRESHOLD: f64 = 0.5;

/// A resolved source record as returned by the metadata client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub id: String,
    #[serde(default)]
    pub doi: Option<String>,
    pub title: String,
    /// Family names, normalized by the client.
    pub authors: Vec<String>,
    #[serde(default, rename = "abstract")]
    pub abstract_text: Option<String>,
    #[serde(default)]
    pub venue: String,
    #[serde(default)]
    pub year: Option<i32>,
    /// "journal" | "conference" | "preprint".
    #[serde(default)]
    pub venue_type: Option<String>,
    /// e.g. "primary", "review", "editorial".
    #[serde(default)]
    pub article_type: Option<String>,
    #[serde(default)]
    pub retracted: bool,
    #[serde(default)]
    pub citation_count: u64,
    #[serde(default)]
    pub field_id: Option<String>,
    /// Venue metric in the venue type's native units (impact factor for
    /// journals, citation rate otherwise).
    #[serde(default)]
    pub venue_metric: Option<f64>,
    #[serde(default)]
    pub open_access: bool,
    /// ids of works this record cites (drives citing_works lookups).
    #[serde(default)]
    pub cites: Vec<String>,
}

/// Metadata snapshot routed to ICSV alongside MetadataOnly verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataSnapshot {
    pub title: String,
    pub authors: Vec<String>,
    pub abstract_text: Option<String>,
    pub venue: String,
    pub year: Option<i32>,
    /// identifier kind -> value ("doi", "record", "arxiv", ...).
    pub identifiers: BTreeMap<String, String>,
    pub source_of_record: String,
    pub venue_type: Option<String>,
    pub article_type: Option<String>,
    pub retracted: bool,
}

impl MetadataSnapshot {
    pub fn from_record(record: &SourceRecord, source: &str) -> MetadataSnapshot {
        let mut identifiers = BTreeMap::new();
        identifiers.insert("record".to_string(), record.id.clone());
        if let Some(doi) = &record.doi {
            identifiers.insert("doi".to_string(), doi.clone());
        }
        MetadataSnapshot {
            title: record.title.clone(),
            authors: record.authors.clone(),
            abstract_text: record.abstract_text.clone(),
            venue: record.venue.clone(),
            year: record.year,
            identifiers,
            source_of_record: source.to_string(),
            venue_type: record.venue_type.clone(),
            article_type: record.article_type.clone(),
            retracted: record.retracted,
        }
    }
}

/// A retrieved, parseable full text together with its snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessibleDocument {
    pub snapshot: MetadataSnapshot,
    pub document: ParsedDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AccessStatus {
    Accessible(Box<AccessibleDocument>),
    MetadataOnly(MetadataSnapshot),
    Ghost,
}

/// Component scores behind a surrogate equivalence decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub title_similarity: f64,
    pub author_overlap: f64,
    pub has_abstract: bool,
    /// Present only when reference lists were available on both sides.
    pub reference_overlap: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessibilityVerdict {
    pub status: AccessStatus,
    pub equivalence_evidence: Option<MatchReport>,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed record: {0}")]
    Malformed(String),
}

/// Classification could not complete because the client failed; distinct
/// from Ghost, which is a resolved absence. The run may retry.
#[derive(Debug, Error)]
#[error("accessibility inconclusive: {0}")]
pub struct Inconclusive(#[from] pub ClientError);

/// Citation-index / publisher client. Production adapters live outside the
/// test path; tests use [`FixtureClient`].
pub trait MetadataClient: Send + Sync {
    fn query_by_doi(&self, doi: &str) -> Result<Option<SourceRecord>, ClientError>;

    /// Candidate records for (title tokens, family names, year).
    fn query_by_metadata(
        &self,
        title_tokens: &[String],
        authors: &[String],
        year: Option<i32>,
    ) -> Result<Vec<SourceRecord>, ClientError>;

    fn fetch_full_text(&self, record_id: &str) -> Result<Option<String>, ClientError>;

    fn citing_works(&self, record_id: &str) -> Result<Vec<SourceRecord>, ClientError>;

    fn source_id(&self) -> &str;
}

/// Dice similarity over normalized title token sets.
pub fn title_similarity(a: &[String], b: &[String]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let sa: std::collections::BTreeSet<&String> = a.iter().collect();
    let sb: std::collections::BTreeSet<&String> = b.iter().collect();
    let inter = sa.intersection(&sb).count();
    2.0 * inter as f64 / (sa.len() + sb.len()) as f64
}

fn normalize_family(name: &str) -> String {
    // Accepts both "Smith" and "A. Smith" spellings from fixture records.
    name.split_whitespace()
        .last()
        .unwrap_or(name)
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Equivalence check between a candidate record and the cited entry. Accepts
/// iff title similarity >= 0.9 and author overlap >= 0.5; all component
/// scores are retained in the report.
pub fn match_surrogate(
    candidate: &MetadataSnapshot,
    candidate_references: Option<&[String]>,
    entry: &BibEntry,
    entry_references: Option<&[String]>,
) -> MatchReport {
    let candidate_tokens = tokenize_title(&candidate.title);
    let title_sim = title_similarity(&entry.title_tokens, &candidate_tokens);

    let entry_families: Vec<String> = entry
        .authors
        .iter()
        .map(|a| a.family.to_lowercase())
        .collect();
    let candidate_families: Vec<String> =
        candidate.authors.iter().map(|a| normalize_family(a)).collect();
    let author_overlap = if entry_families.is_empty() {
        0.0
    } else {
        let hits = entry_families
            .iter()
            .filter(|f| candidate_families.contains(f))
            .count();
        hits as f64 / entry_families.len() as f64
    };

    let reference_overlap = match (candidate_references, entry_references) {
        (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => {
            let sa: std::collections::BTreeSet<&String> = a.iter().collect();
            let sb: std::collections::BTreeSet<&String> = b.iter().collect();
            Some(sa.intersection(&sb).count() as f64 / sa.len().min(sb.len()) as f64)
        }
        _ => None,
    };

    let accepted = title_sim >= TITLE_THRESHOLD && author_overlap >= AUTHOR_THRESHOLD;
    MatchReport {
        title_similarity: title_sim,
        author_overlap,
        has_abstract: candidate.abstract_text.is_some(),
        reference_overlap,
        accepted,
    }
}

/// Routes one bibliography entry: DOI resolution first, then full text, then
/// surrogate search by metadata. No plausible match anywhere means Ghost.
pub fn classify_accessibility(
    entry: &BibEntry,
    client: &dyn MetadataClient,
) -> Result<AccessibilityVerdict, Inconclusive> {
    if let Some(doi) = &entry.doi {
        if let Some(record) = client.query_by_doi(doi)? {
            let snapshot = MetadataSnapshot::from_record(&record, client.source_id());
            match try_full_text(&record, snapshot.clone(), client)? {
                Some(verdict) => return Ok(verdict),
                None => {
                    return Ok(AccessibilityVerdict {
                        status: AccessStatus::MetadataOnly(snapshot),
                        equivalence_evidence: None,
                    })
                }
            }
        }
    }

    let families: Vec<String> = entry.authors.iter().map(|a| a.family.to_lowercase()).collect();
    let candidates =
        client.query_by_metadata(&entry.title_tokens, &families, entry.year.known())?;
    let mut best: Option<(MatchReport, SourceRecord)> = None;
    for record in candidates {
        let snapshot = MetadataSnapshot::from_record(&record, client.source_id());
        let report = match_surrogate(&snapshot, None, entry, None);
        if report.accepted {
            let better = match &best {
                Some((b, _)) => report.title_similarity > b.title_similarity,
                None => true,
            };
            if better {
                best = Some((report, record));
            }
        }
    }

    match best {
        Some((report, record)) => {
            let snapshot = MetadataSnapshot::from_record(&record, client.source_id());
            match try_full_text(&record, snapshot.clone(), client)? {
                Some(mut verdict) => {
                    verdict.equivalence_evidence = Some(report);
                    Ok(verdict)
                }
                None => Ok(AccessibilityVerdict {
                    status: AccessStatus::MetadataOnly(snapshot),
                    equivalence_evidence: Some(report),
                }),
            }
        }
        None => Ok(AccessibilityVerdict {
            status: AccessStatus::Ghost,
            equivalence_evidence: None,
        }),
    }
}

/// Accessible requires a retrievable, parseable full text.
fn try_full_text(
    record: &SourceRecord,
    snapshot: MetadataSnapshot,
    client: &dyn MetadataClient,
) -> Result<Option<AccessibilityVerdict>, Inconclusive> {
    let Some(text) = client.fetch_full_text(&record.id)? else {
        return Ok(None);
    };
    let document = parse_markdown(&text, 1);
    if document.blocks.is_empty() {
        log::warn!("full text for {} did not parse; downgrading to metadata", record.id);
        return Ok(None);
    }
    Ok(Some(AccessibilityVerdict {
        status: AccessStatus::Accessible(Box::new(AccessibleDocument { snapshot, document })),
        equivalence_evidence: None,
    }))
}

/// Fixture-backed client over a directory: `records.json` holds the record
/// list; full texts live in `fulltext/<id>.md`.
pub struct FixtureClient {
    records: Vec<SourceRecord>,
    fulltext_dir: PathBuf,
    fail_ids: Vec<String>,
}

impl FixtureClient {
    pub fn load(dir: impl Into<PathBuf>) -> Result<FixtureClient, ClientError> {
        let dir = dir.into();
        let raw = fs::read_to_string(dir.join("records.json"))
            .map_err(|e| ClientError::Transport(format!("records.json: {e}")))?;
        let records: Vec<SourceRecord> =
            serde_json::from_str(&raw).map_err(|e| ClientError::Malformed(e.to_string()))?;
        Ok(FixtureClient {
            records,
            fulltext_dir: dir.join("fulltext"),
            fail_ids: Vec::new(),
        })
    }

    pub fn from_records(records: Vec<SourceRecord>, fulltext_dir: impl Into<PathBuf>) -> FixtureClient {
        FixtureClient {
            records,
            fulltext_dir: fulltext_dir.into(),
            fail_ids: Vec::new(),
        }
    }

    /// Marks record ids whose lookups fail with a transport error; used to
    /// exercise the Inconclusive path.
    pub fn failing_on(mut self, ids: Vec<String>) -> FixtureClient {
        self.fail_ids = ids;
        self
    }

    fn check_fail(&self, id: &str) -> Result<(), ClientError> {
        if self.fail_ids.iter().any(|f| f == id) {
            return Err(ClientError::Transport(format!("simulated outage for {id}")));
        }
        Ok(())
    }
}

impl MetadataClient for FixtureClient {
    fn query_by_doi(&self, doi: &str) -> Result<Option<SourceRecord>, ClientError> {
        self.check_fail(doi)?;
        Ok(self
            .records
            .iter()
            .find(|r| r.doi.as_deref() == Some(doi))
            .cloned())
    }

    fn query_by_metadata(
        &self,
        title_tokens: &[String],
        authors: &[String],
        _year: Option<i32>,
    ) -> Result<Vec<SourceRecord>, ClientError> {
        // Loose recall: share any title token or author; precision comes from
        // match_surrogate.
        Ok(self
            .records
            .iter()
            .filter(|r| {
                let rec_tokens = tokenize_title(&r.title);
                let rec_authors: Vec<String> =
                    r.authors.iter().map(|a| normalize_family(a)).collect();
                title_tokens.iter().any(|t| rec_tokens.contains(t))
                    || authors.iter().any(|a| rec_authors.contains(a))
            })
            .cloned()
            .collect())
    }

    fn fetch_full_text(&self, record_id: &str) -> Result<Option<String>, ClientError> {
        self.check_fail(record_id)?;
        let record = self.records.iter().find(|r| r.id == record_id);
        if !record.is_some_and(|r| r.open_access) {
            return Ok(None);
        }
        let path = self.fulltext_dir.join(format!("{record_id}.md"));
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(text)),
            Err(_) => Ok(None),
        }
    }

    fn citing_works(&self, record_id: &str) -> Result<Vec<SourceRecord>, ClientError> {
        self.check_fail(record_id)?;
        Ok(self
            .records
            .iter()
            .filter(|r| r.cites.iter().any(|c| c == record_id))
            .cloned()
            .collect())
    }

    fn source_id(&self) -> &str {
        "fixture"
    }
}
