//! Aspect clustering and evidence distillation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::assets;
use crate::csac::MetadataSnapshot;
use crate::dpcm::split_sentences;
use crate::gateway::{CompletionRequest, DecodingConfig, Gateway};

use super::IcsvError;

/// One semantically coherent aspect of the target paper, as attributed by
/// the committee. Claim ids are 1-based positions in the committee-wide
/// claim list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectCluster {
    pub cluster_id: String,
    pub cluster_name: String,
    pub aspect_summary: String,
    pub claim_ids: Vec<usize>,
    /// Unique source papers behind the member claims.
    pub source_papers: BTreeSet<String>,
    pub evidence_statement: String,
    /// Normalized credibility; zero until assigned.
    pub gamma: f64,
}

#[derive(Deserialize)]
struct ClusterReply {
    clusters: Vec<ClusterEntry>,
}

#[derive(Deserialize)]
struct ClusterEntry {
    cluster_id: String,
    #[serde(default)]
    cluster_name: String,
    #[serde(default)]
    aspect_summary: String,
    claim_ids: Vec<usize>,
}

/// Clusters committee claims into aspects. The reply must be a strict JSON
/// partition of the claim ids; one repair retry is allowed, after which the
/// deterministic singleton fallback keeps the pipeline total (flagged).
pub fn cluster_claims(
    claims: &[(String, String)],
    target: &MetadataSnapshot,
    gateway: &Gateway,
    seed: u64,
) -> Result<(Vec<AspectCluster>, bool), IcsvError> {
    if claims.is_empty() {
        return Ok((Vec::new(), false));
    }
    if claims.len() == 1 {
        return Ok((singleton_fallback(claims), false));
    }

    let listing: String = claims
        .iter()
        .enumerate()
        .map(|(i, (text, _))| format!("{}) {}\n", i + 1, text))
        .collect();
    let year = target.year.map(|y| y.to_string()).unwrap_or_default();
    let user = assets::fill(
        assets::CLUSTER_USER,
        &[
            ("title_B", target.title.as_str()),
            ("year_B", year.as_str()),
            ("venue_B", target.venue.as_str()),
            ("claims", listing.trim_end()),
        ],
    );

    for attempt in 0..2 {
        // Retries carry a repair note so the deterministic cache does not
        // replay the rejected reply.
        let user_text = if attempt == 0 {
            user.clone()
        } else {
            format!("{user}\n\nThe previous reply was not a valid partition. Output every claim id exactly once.")
        };
        let request = CompletionRequest::text(
            assets::CLUSTER_SYSTEM,
            user_text,
            DecodingConfig::deterministic(seed),
            "icsv/cluster@committee",
        );
        let reply = gateway.complete(&request)?.remove(0).0;
        if let Some(clusters) = parse_partition(&reply, claims) {
            return Ok((clusters, false));
        }
        log::warn!("clustering reply rejected (attempt {})", attempt + 1);
    }
    Ok((singleton_fallback(claims), true))
}

fn parse_partition(reply: &str, claims: &[(String, String)]) -> Option<Vec<AspectCluster>> {
    let parsed: ClusterReply = serde_json::from_str(extract_json(reply)?).ok()?;
    let mut seen = BTreeSet::new();
    for entry in &parsed.clusters {
        for id in &entry.claim_ids {
            if *id == 0 || *id > claims.len() || !seen.insert(*id) {
                return None;
            }
        }
    }
    if seen.len() != claims.len() {
        return None;
    }
    Some(
        parsed
            .clusters
            .into_iter()
            .filter(|e| !e.claim_ids.is_empty())
            .map(|e| AspectCluster {
                source_papers: e
                    .claim_ids
                    .iter()
                    .map(|id| claims[id - 1].1.clone())
                    .collect(),
                cluster_id: e.cluster_id,
                cluster_name: e.cluster_name,
                aspect_summary: e.aspect_summary,
                claim_ids: e.claim_ids,
                evidence_statement: String::new(),
                gamma: 0.0,
            })
            .collect(),
    )
}

fn extract_json(reply: &str) -> Option<&str> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    reply.get(start..=end)
}

fn singleton_fallback(claims: &[(String, String)]) -> Vec<AspectCluster> {
    claims
        .iter()
        .enumerate()
        .map(|(i, (text, source))| AspectCluster {
            cluster_id: format!("C{}", i + 1),
            cluster_name: format!("claim {}", i + 1),
            aspect_summary: text.clone(),
            claim_ids: vec![i + 1],
            source_papers: [source.clone()].into(),
            evidence_statement: String::new(),
            gamma: 0.0,
        })
        .collect()
}

/// Canonical one-sentence evidence statement for a cluster. Singletons pass
/// the claim through verbatim without a model call.
pub fn distill_evidence(
    cluster: &AspectCluster,
    claims: &[(String, String)],
    gateway: &Gateway,
    seed: u64,
) -> Result<String, IcsvError> {
    if cluster.claim_ids.len() == 1 {
        return Ok(claims[cluster.claim_ids[0] - 1].0.clone());
    }
    let listing: String = cluster
        .claim_ids
        .iter()
        .map(|id| format!("- {}\n", claims[id - 1].0))
        .collect();
    let user = assets::fill(
        assets::DISTILL_USER,
        &[
            ("title_B", ""),
            ("cluster_id", cluster.cluster_id.as_str()),
            ("cluster_name", cluster.cluster_name.as_str()),
            ("claims", listing.trim_end()),
        ],
    );
    let request = CompletionRequest::text(
        assets::DISTILL_SYSTEM,
        user,
        DecodingConfig::deterministic(seed),
        format!("icsv/distill@{}", cluster.cluster_id),
    );
    let reply = gateway.complete(&request)?.remove(0).0;
    let sentences = split_sentences(reply.trim());
    match sentences.as_slice() {
        [] => Ok(reply.trim().to_string()),
        [single] => Ok(single.clone()),
        [first, ..] => {
            log::warn!("distillation returned multiple sentences; keeping the first");
            Ok(first.clone())
        }
    }
}
