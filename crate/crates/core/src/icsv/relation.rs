//! Relation voting between the atomic claim and each evidence statement.

use serde::{Deserialize, Serialize};

use crate::assets;
use crate::gateway::{CompletionRequest, DecodingConfig, Gateway};

use super::IcsvError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    /// +1 entails, 0 neutral, -1 contradicts.
    pub vote: i8,
    /// Fraction of runs agreeing with the majority label.
    pub stability: f64,
}

#[derive(Deserialize)]
struct RelationReply {
    label: String,
}

/// Three deterministic runs with distinct seeds; the majority label wins and
/// stability is its vote share. Unparseable runs count as NEUTRAL with a
/// warning; a three-way split resolves to NEUTRAL.
pub fn classify_relation(
    claim: &str,
    evidence: &str,
    gateway: &Gateway,
    seed: u64,
    tag: &str,
) -> Result<Relation, IcsvError> {
    let user = assets::fill(assets::RELATION_USER, &[("c_A", claim), ("e_j", evidence)]);
    let mut votes = [0i8; 3];
    for (i, vote) in votes.iter_mut().enumerate() {
        let request = CompletionRequest::text(
            assets::RELATION_SYSTEM,
            user.clone(),
            DecodingConfig::deterministic(seed.wrapping_add(i as u64)),
            tag,
        );
        let reply = gateway.complete(&request)?.remove(0).0;
        *vote = match parse_label(&reply) {
            Some(v) => v,
            None => {
                log::warn!("unparseable relation reply treated as NEUTRAL: {reply:?}");
                0
            }
        };
    }
    let count = |v: i8| votes.iter().filter(|x| **x == v).count();
    let best = [1i8, 0, -1]
        .into_iter()
        .max_by_key(|v| count(*v))
        .expect("non-empty label set");
    let top = count(best);
    if top == 1 {
        // 1-1-1 split: no majority, stay neutral.
        return Ok(Relation { vote: 0, stability: 1.0 / 3.0 });
    }
    Ok(Relation {
        vote: best,
        stability: top as f64 / votes.len() as f64,
    })
}

fn parse_label(reply: &str) -> Option<i8> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    let parsed: RelationReply = serde_json::from_str(reply.get(start..=end)?).ok()?;
    match parsed.label.to_ascii_uppercase().as_str() {
        "ENTAILS" => Some(1),
        "NEUTRAL" => Some(0),
        "CONTRADICTS" => Some(-1),
        _ => None,
    }
}
