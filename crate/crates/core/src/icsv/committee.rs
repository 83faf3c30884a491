//! Witness collection: papers citing the target qualify only with a
//! verified in-text mention, and contribute de-duplicated atomic claims.

use serde::{Deserialize, Serialize};

use crate::acsv::cosine;
use crate::csac::{MetadataClient, MetadataSnapshot, SourceRecord};
use crate::dpcm::{align_citations, detect_citations, parse_bibliography, parse_markdown};
use crate::gateway::Gateway;
use crate::model::BibEntry;

use super::claim::{extract_atomic_claim, AtomicClaim};
use super::credibility::VenueType;
use super::IcsvError;

/// Near-duplicate claims within one witness collapse at this cosine.
const CLAIM_DEDUP_COSINE: f64 = 0.95;
/// Title similarity for bibliography-entry matching of the target.
const TITLE_MATCH: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessPaper {
    pub record_id: String,
    pub metadata: MetadataSnapshot,
    pub venue_type: VenueType,
    pub citation_count: u64,
    pub field_id: String,
    pub year: i32,
    /// Per-venue metric value (impact factor or citation rate), when known.
    pub venue_metric: Option<f64>,
    pub claims: Vec<AtomicClaim>,
}

/// Enumerates citing works, keeps open-access parseable papers with a
/// verified in-text mention of the target, and extracts one atomic claim
/// per mention. Zero witnesses is a valid empty committee.
pub fn assemble_committee(
    target: &MetadataSnapshot,
    client: &dyn MetadataClient,
    gateway: &Gateway,
    seed: u64,
) -> Result<Vec<WitnessPaper>, IcsvError> {
    let target_id = target
        .identifiers
        .get("record")
        .cloned()
        .unwrap_or_default();
    let citing = client.citing_works(&target_id).map_err(IcsvError::Inconclusive)?;

    let mut seen: Vec<String> = Vec::new();
    let mut committee = Vec::new();
    for record in citing {
        let dedup_key = record
            .doi
            .clone()
            .unwrap_or_else(|| normalize_title(&record.title));
        if seen.contains(&dedup_key) {
            continue;
        }
        seen.push(dedup_key);

        let Some(text) = client
            .fetch_full_text(&record.id)
            .map_err(IcsvError::Inconclusive)?
        else {
            continue;
        };
        let doc = parse_markdown(&text, 1);
        if doc.blocks.is_empty() {
            continue;
        }

        let (entries, _) = parse_bibliography(&doc);
        let Some(target_entry) = find_target_entry(&entries, target) else {
            continue;
        };
        let (_, drafts) = detect_citations(&doc);
        let edges = align_citations(&drafts, &entries, gateway, seed)?;
        let mentions: Vec<_> = edges
            .iter()
            .filter(|e| e.target_keys.contains(&target_entry.key))
            .collect();
        if mentions.is_empty() {
            continue;
        }

        let mut claims: Vec<AtomicClaim> = Vec::new();
        for mention in mentions {
            match extract_atomic_claim(&doc, mention, gateway, seed) {
                Ok(claim) => claims.push(claim),
                Err(IcsvError::Underspecified(id)) => {
                    log::warn!("witness {} mention {id} underspecified; skipped", record.id);
                }
                Err(e) => return Err(e),
            }
        }
        let claims = dedup_claims(claims, gateway)?;
        if claims.is_empty() {
            continue;
        }
        committee.push(witness_from(&record, client, claims));
    }
    Ok(committee)
}

fn witness_from(
    record: &SourceRecord,
    client: &dyn MetadataClient,
    claims: Vec<AtomicClaim>,
) -> WitnessPaper {
    WitnessPaper {
        record_id: record.id.clone(),
        metadata: MetadataSnapshot::from_record(record, client.source_id()),
        venue_type: VenueType::parse(record.venue_type.as_deref()),
        citation_count: record.citation_count,
        field_id: record.field_id.clone().unwrap_or_default(),
        year: record.year.unwrap_or(0),
        venue_metric: record.venue_metric,
        claims,
    }
}

/// Target entry in a witness bibliography: DOI match, else title tokens at
/// high similarity.
fn find_target_entry<'a>(
    entries: &'a [BibEntry],
    target: &MetadataSnapshot,
) -> Option<&'a BibEntry> {
    if let Some(doi) = target.identifiers.get("doi") {
        if let Some(e) = entries.iter().find(|e| e.doi.as_deref() == Some(doi)) {
            return Some(e);
        }
    }
    let target_tokens = crate::dpcm::bibliography::tokenize_title(&target.title);
    entries
        .iter()
        .find(|e| crate::csac::title_similarity(&e.title_tokens, &target_tokens) >= TITLE_MATCH)
}

/// Collapses near-identical claims, keeping first appearances.
fn dedup_claims(
    claims: Vec<AtomicClaim>,
    gateway: &Gateway,
) -> Result<Vec<AtomicClaim>, IcsvError> {
    if claims.len() < 2 {
        return Ok(claims);
    }
    let texts: Vec<String> = claims.iter().map(|c| c.text.clone()).collect();
    let vectors = gateway.embed(&texts)?;
    let mut kept: Vec<(AtomicClaim, Vec<f64>)> = Vec::new();
    for (claim, vector) in claims.into_iter().zip(vectors) {
        let duplicate = kept
            .iter()
            .any(|(_, v)| cosine(v, &vector) >= CLAIM_DEDUP_COSINE);
        if !duplicate {
            kept.push((claim, vector));
        }
    }
    Ok(kept.into_iter().map(|(c, _)| c).collect())
}

fn normalize_title(title: &str) -> String {
    title
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}
