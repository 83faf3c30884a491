//! Deterministic stub backend for offline runs and tests.
//!
//! Every capability is a pure function of (request, seed): repeated runs are
//! byte-identical. Behaviors are driven by lightweight `[[...]]` directives
//! planted in fixture texts, with content-based heuristics as fallback:
//!
//! - `[[fixture:id]]`     completion text comes from `<fixture_dir>/id.txt`
//!   (single text) or `<fixture_dir>/id.json` (array of variants; sampled
//!   requests pick variants with a seeded RNG).
//! - `[[votes:a,b,c]]`    sample i replies with vote i (cycled). Single
//!   letters map to verdict words (m = MISCITATION, s = SUPPORTED,
//!   u = UNDECIDABLE); anything else is returned verbatim.
//! - `[[relation:L]]`     relation-classification calls reply with label L.
//! - `[[clusters:C1=1|3;C2=2]]`  clustering calls reply with the strict JSON
//!   partition encoded in the directive.
//! - `[[pick:key]]`       disambiguation calls reply with that key.
//! - `[[grade:G]]`        grader calls reply CORRECT/INCORRECT as given.
//! - `[[needs:w]]`        paraphrase calls reply INSUFFICIENT_CONTEXT unless
//!   `w` occurs elsewhere in the provided context window.
//! - `[[entail:p]]`, `[[neutral:p]]`, `[[contradict:p]]`  NLI calls read the
//!   planted distribution from the premise.

use std::fs;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use super::{approx_token_count, Backend, BackendError, Completion, CompletionRequest, NliDistribution};

const EMBED_DIM: usize = 512;

#[derive(Debug, Clone, Default)]
pub struct StubOptions {
    pub fixture_dir: Option<PathBuf>,
}

pub struct StubBackend {
    id: String,
    options: StubOptions,
    directive: Regex,
    nli_marker: Regex,
}

impl StubBackend {
    pub fn new(id: impl Into<String>, options: StubOptions) -> StubBackend {
        StubBackend {
            id: id.into(),
            options,
            directive: Regex::new(r"\[\[([a-z]+):([^\]]*)\]\]").unwrap(),
            nli_marker: Regex::new(r"\[\[(entail|neutral|contradict):([0-9.]+)\]\]").unwrap(),
        }
    }

    fn find_directive(&self, text: &str, name: &str) -> Option<String> {
        self.directive
            .captures_iter(text)
            .find(|c| &c[1] == name)
            .map(|c| c[2].to_string())
    }

    fn strip_directives(&self, text: &str) -> String {
        self.directive.replace_all(text, "").to_string()
    }

    fn reply(&self, request: &CompletionRequest, sample: usize, rng: &mut ChaCha8Rng) -> Result<String, BackendError> {
        let combined = format!("{}\n{}", request.system_text, request.user_text);

        if !request.image_parts.is_empty() {
            // Page transcription: the image ref is a path to a fixture
            // transcript file.
            let path = &request.image_parts[0];
            let content = fs::read_to_string(path)
                .map_err(|e| BackendError::Malformed(format!("page image fixture {path}: {e}")))?;
            if content.trim().is_empty() {
                return Ok("null".to_string());
            }
            return Ok(content);
        }

        if let Some(id) = self.find_directive(&combined, "fixture") {
            return self.fixture_reply(&id, request, rng);
        }

        if let Some(votes) = self.find_directive(&combined, "votes") {
            let votes: Vec<&str> = votes.split(',').map(str::trim).collect();
            if votes.is_empty() {
                return Err(BackendError::Malformed("empty votes directive".into()));
            }
            let vote = votes[sample % votes.len()];
            return Ok(expand_vote(vote));
        }

        if let Some(spec) = self.find_directive(&combined, "clusters") {
            return Ok(clusters_json(&spec));
        }

        if let Some(label) = self.find_directive(&combined, "relation") {
            return Ok(format!(
                "{{\"label\": \"{}\", \"justification\": \"planted fixture relation\"}}",
                label.to_uppercase()
            ));
        }

        if let Some(key) = self.find_directive(&combined, "pick") {
            return Ok(key);
        }

        if let Some(grade) = self.find_directive(&combined, "grade") {
            return Ok(grade.to_uppercase());
        }

        let tag = request.call_tag.as_str();
        if tag.contains("paraphrase") {
            return Ok(self.paraphrase_reply(&request.user_text));
        }
        if combined.contains("PREV_FIXED") {
            return Ok(self.boundary_reply(&request.user_text));
        }
        if tag.contains("cluster") {
            return Ok(self.cluster_reply(&request.user_text));
        }
        if tag.contains("relation") {
            return Ok(self.relation_reply(&request.user_text));
        }
        if tag.contains("distill") {
            return Ok(self.distill_reply(&request.user_text));
        }
        if tag.contains("grader") {
            return Ok(self.grader_reply(&request.user_text));
        }
        if tag.contains("disambiguate") {
            return Ok("NONE".to_string());
        }
        if tag.contains("taxonomy") {
            return Ok("ABSTAIN".to_string());
        }
        if combined.contains("[Target sentence") {
            return Ok(self.paraphrase_reply(&request.user_text));
        }
        Ok("UNDECIDABLE".to_string())
    }

    fn fixture_reply(
        &self,
        id: &str,
        request: &CompletionRequest,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, BackendError> {
        let dir = self
            .options
            .fixture_dir
            .as_ref()
            .ok_or_else(|| BackendError::Malformed("fixture directive but no fixture dir".into()))?;
        let txt = dir.join(format!("{id}.txt"));
        if txt.exists() {
            return fs::read_to_string(&txt)
                .map_err(|e| BackendError::Transport(format!("{}: {e}", txt.display())));
        }
        let json = dir.join(format!("{id}.json"));
        let raw = fs::read_to_string(&json)
            .map_err(|e| BackendError::Malformed(format!("missing fixture {id}: {e}")))?;
        let variants: Vec<String> = serde_json::from_str(&raw)
            .map_err(|e| BackendError::Malformed(format!("fixture {id}: {e}")))?;
        if variants.is_empty() {
            return Err(BackendError::Malformed(format!("fixture {id} is empty")));
        }
        let idx = if request.decoding.temperature == 0.0 {
            0
        } else {
            rng.gen_range(0..variants.len())
        };
        Ok(variants[idx].clone())
    }

    /// Claim-preserving paraphrase stub: echoes the target sentence with
    /// citation markers and directives stripped; honors `[[needs:w]]`.
    fn paraphrase_reply(&self, user_text: &str) -> String {
        let context = section(user_text, "[Context window", "[Target sentence");
        let context = context.split_once('\n').map(|(_, r)| r).unwrap_or(&context).to_string();
        let target = section(user_text, "[Target sentence", "Instructions:");
        let target = target.split_once('\n').map(|(_, r)| r).unwrap_or(&target);
        let target = target.trim();
        if let Some(word) = self.find_directive(target, "needs") {
            let window = self.strip_directives(&context).to_lowercase();
            if !window.contains(&word.to_lowercase()) {
                return "INSUFFICIENT_CONTEXT".to_string();
            }
        }
        let mut claim = strip_citation_markers(&self.strip_directives(target));
        claim = claim.split_whitespace().collect::<Vec<_>>().join(" ");
        if !claim.ends_with(['.', '!', '?']) {
            claim.push('.');
        }
        claim
    }

    /// Boundary-repair stub: echoes PREV and NEXT unchanged in the required
    /// output format (callers keep the originals when the junction is
    /// unchanged).
    fn boundary_reply(&self, user_text: &str) -> String {
        let prev = section(user_text, "PREV:", "NEXT:");
        let next = section(user_text, "NEXT:", "\u{0}");
        format!(
            "PREV_FIXED:\n{}\n---\nNEXT_FIXED:\n{}",
            prev.trim(),
            next.trim()
        )
    }

    /// Default clustering stub: groups claims whose normalized text is
    /// identical, preserving first-appearance order.
    fn cluster_reply(&self, user_text: &str) -> String {
        let claim_re = Regex::new(r"(?m)^(\d+)\)\s*(.+)$").unwrap();
        let mut groups: Vec<(String, Vec<u64>)> = Vec::new();
        for cap in claim_re.captures_iter(user_text) {
            let id: u64 = cap[1].parse().unwrap();
            let norm = normalize(&self.strip_directives(&cap[2]));
            match groups.iter_mut().find(|(k, _)| *k == norm) {
                Some((_, ids)) => ids.push(id),
                None => groups.push((norm, vec![id])),
            }
        }
        let clusters: Vec<serde_json::Value> = groups
            .iter()
            .enumerate()
            .map(|(i, (_, ids))| {
                serde_json::json!({
                    "cluster_id": format!("C{}", i + 1),
                    "cluster_name": format!("aspect {}", i + 1),
                    "aspect_summary": "Shared aspect distilled from identical attributions.",
                    "claim_ids": ids,
                })
            })
            .collect();
        serde_json::json!({ "clusters": clusters }).to_string()
    }

    /// Default relation stub: high text similarity means ENTAILS, similarity
    /// with a polarity mismatch means CONTRADICTS, anything else NEUTRAL.
    fn relation_reply(&self, user_text: &str) -> String {
        let claim = self.strip_directives(&section(user_text, "Claim c_A", "Evidence e_j"));
        let evidence = self.strip_directives(&section(user_text, "Evidence e_j", "Return JSON"));
        let claim = claim.trim().trim_start_matches("(about paper B):").trim();
        let evidence = evidence
            .trim()
            .trim_start_matches("(community-attributed statement about paper B):")
            .trim();
        let sim = trigram_cosine(claim, evidence);
        let label = if sim >= 0.6 {
            if polarity(claim) != polarity(evidence) {
                "CONTRADICTS"
            } else {
                "ENTAILS"
            }
        } else if sim >= 0.35 && polarity(claim) != polarity(evidence) {
            "CONTRADICTS"
        } else {
            "NEUTRAL"
        };
        format!("{{\"label\": \"{label}\", \"justification\": \"text-similarity stub\"}}")
    }

    /// Default distillation stub: the first claim bullet verbatim.
    fn distill_reply(&self, user_text: &str) -> String {
        user_text
            .lines()
            .find_map(|l| l.trim().strip_prefix("- ").map(str::to_string))
            .unwrap_or_else(|| "No shared content could be distilled.".to_string())
    }

    /// Default grader stub: explanations are equivalent when their trigram
    /// similarity clears 0.6.
    fn grader_reply(&self, user_text: &str) -> String {
        let gold = section(user_text, "Gold explanation:", "[PREDICTION]");
        let pred = section(user_text, "Predicted explanation:", "Respond with");
        if trigram_cosine(gold.trim(), pred.trim()) >= 0.6 {
            "CORRECT".to_string()
        } else {
            "INCORRECT".to_string()
        }
    }
}

/// Text between the first occurrence of `start` and the following occurrence
/// of `end` (or end of text).
fn section(text: &str, start: &str, end: &str) -> String {
    let Some(s) = text.find(start) else {
        return String::new();
    };
    let after = &text[s + start.len()..];
    match after.find(end) {
        Some(e) => after[..e].to_string(),
        None => after.to_string(),
    }
}

fn expand_vote(vote: &str) -> String {
    match vote.to_ascii_lowercase().as_str() {
        "m" => "MISCITATION".to_string(),
        "s" => "SUPPORTED".to_string(),
        "u" => "UNDECIDABLE".to_string(),
        other if other.is_empty() => "UNDECIDABLE".to_string(),
        _ => vote.to_string(),
    }
}

fn clusters_json(spec: &str) -> String {
    let clusters: Vec<serde_json::Value> = spec
        .split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|part| {
            let (id, ids) = part.split_once('=').unwrap_or((part, ""));
            let claim_ids: Vec<u64> = ids
                .split('|')
                .filter_map(|n| n.trim().parse().ok())
                .collect();
            serde_json::json!({
                "cluster_id": id.trim(),
                "cluster_name": format!("aspect {}", id.trim()),
                "aspect_summary": "Planted fixture aspect.",
                "claim_ids": claim_ids,
            })
        })
        .collect();
    serde_json::json!({ "clusters": clusters }).to_string()
}

fn strip_citation_markers(text: &str) -> String {
    let numeric = Regex::new(r"\[[0-9,\s\u{2013}\u{2014}-]+\]").unwrap();
    let author_year = Regex::new(r"\((?:[^()]*\b(?:19|20)\d{2}[a-z]?[^()]*)\)").unwrap();
    let narrative = Regex::new(r"\b[A-Z][\w'-]+(?:\s+(?:&|and)\s+[A-Z][\w'-]+)?(?:\s+et al\.)?\s+\((?:19|20)\d{2}[a-z]?\)").unwrap();
    let t = narrative.replace_all(text, "");
    let t = author_year.replace_all(&t, "");
    let t = numeric.replace_all(&t, "");
    t.replace("  ", " ").trim().to_string()
}

fn normalize(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

const NEGATIVE_CUES: [&str; 8] = [
    "not", "no ", "never", "fails", "decrease", "worse", "cannot", "degrade",
];

fn polarity(text: &str) -> bool {
    let lower = text.to_lowercase();
    !NEGATIVE_CUES.iter().any(|c| lower.contains(c))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Bag-of-character-trigram embedding hashed into a fixed dimension.
pub fn trigram_embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0f64; EMBED_DIM];
    let norm = normalize(text);
    let chars: Vec<char> = norm.chars().collect();
    if chars.len() < 3 {
        if !chars.is_empty() {
            let idx = (fnv1a(norm.as_bytes()) % EMBED_DIM as u64) as usize;
            v[idx] += 1.0;
        }
        return v;
    }
    for w in chars.windows(3) {
        let tri: String = w.iter().collect();
        let idx = (fnv1a(tri.as_bytes()) % EMBED_DIM as u64) as usize;
        v[idx] += 1.0;
    }
    v
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn trigram_cosine(a: &str, b: &str) -> f64 {
    cosine(&trigram_embed(a), &trigram_embed(b))
}

impl Backend for StubBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn supports_vision(&self) -> bool {
        true
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Vec<Completion>, BackendError> {
        let input_tokens =
            approx_token_count(&request.system_text) + approx_token_count(&request.user_text);
        let seed = request.decoding.seed
            ^ fnv1a(request.user_text.as_bytes())
            ^ fnv1a(request.system_text.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(request.decoding.sample_count as usize);
        for sample in 0..request.decoding.sample_count as usize {
            let text = self.reply(request, sample, &mut rng)?;
            let output_tokens = approx_token_count(&text);
            out.push(Completion {
                text,
                input_tokens,
                output_tokens,
            });
        }
        Ok(out)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(texts
            .iter()
            .map(|t| trigram_embed(&self.strip_directives(t)))
            .collect())
    }

    fn score_pair(&self, query: &str, passage: &str) -> Result<f64, BackendError> {
        Ok(trigram_cosine(
            &self.strip_directives(query),
            &self.strip_directives(passage),
        ))
    }

    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliDistribution, BackendError> {
        let mut planted: Vec<(String, f64)> = Vec::new();
        for cap in self.nli_marker.captures_iter(premise) {
            if let Ok(p) = cap[2].parse::<f64>() {
                planted.push((cap[1].to_string(), p.clamp(0.0, 1.0)));
            }
        }
        if !planted.is_empty() {
            let mut e = None;
            let mut n = None;
            let mut c = None;
            for (label, p) in planted {
                match label.as_str() {
                    "entail" => e = Some(p),
                    "neutral" => n = Some(p),
                    "contradict" => c = Some(p),
                    _ => {}
                }
            }
            let specified: f64 = e.unwrap_or(0.0) + n.unwrap_or(0.0) + c.unwrap_or(0.0);
            let missing = [e.is_none(), n.is_none(), c.is_none()]
                .iter()
                .filter(|m| **m)
                .count();
            let fill = if missing > 0 {
                ((1.0 - specified).max(0.0)) / missing as f64
            } else {
                0.0
            };
            let dist = NliDistribution {
                p_entail: e.unwrap_or(fill),
                p_neutral: n.unwrap_or(fill),
                p_contradict: c.unwrap_or(fill),
            };
            let s = dist.p_entail + dist.p_neutral + dist.p_contradict;
            return Ok(NliDistribution {
                p_entail: dist.p_entail / s,
                p_neutral: dist.p_neutral / s,
                p_contradict: dist.p_contradict / s,
            });
        }

        let p = normalize(&self.strip_directives(premise));
        let h = normalize(&self.strip_directives(hypothesis));
        if p == h || (!h.is_empty() && p.contains(&h)) {
            return Ok(NliDistribution {
                p_entail: 0.95,
                p_neutral: 0.04,
                p_contradict: 0.01,
            });
        }
        let sim = trigram_cosine(&p, &h);
        let p_entail = 0.10 + 0.35 * sim.max(0.0);
        let p_contradict = 0.05;
        Ok(NliDistribution {
            p_entail,
            p_neutral: 1.0 - p_entail - p_contradict,
            p_contradict,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::DecodingConfig;

    fn stub() -> StubBackend {
        StubBackend::new("stub", StubOptions::default())
    }

    #[test]
    fn embeddings_are_deterministic_and_topical() {
        let s = stub();
        let vs = s
            .embed(&["x".to_string(), "x".to_string()])
            .unwrap();
        assert_eq!(vs[0], vs[1]);
        let sim_related = trigram_cosine("citation accuracy", "citation correctness");
        let sim_unrelated = trigram_cosine("citation accuracy", "weather report");
        assert!(
            sim_unrelated < sim_related,
            "{sim_unrelated} !< {sim_related}"
        );
        assert!((trigram_cosine("citation accuracy", "citation accuracy") - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nli_identity_and_planted_markers() {
        let s = stub();
        let d = s.nli("the sky is blue", "the sky is blue").unwrap();
        assert!(d.p_entail >= 0.9);

        let d = s
            .nli("some text [[entail:0.95]] more text", "hypothesis")
            .unwrap();
        assert!((d.p_entail - 0.95).abs() < 1e-9);
        assert!((d.p_entail + d.p_neutral + d.p_contradict - 1.0).abs() < 1e-6);
    }

    #[test]
    fn votes_directive_cycles_per_sample() {
        let s = stub();
        let req = CompletionRequest::text(
            "sys",
            "decide [[votes:m,m,m,s,u]]",
            DecodingConfig::self_consistency(5, 0.7, 1),
            "acsv/lrm",
        );
        let replies = s.complete(&req).unwrap();
        let texts: Vec<&str> = replies.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(
            texts,
            vec![
                "MISCITATION",
                "MISCITATION",
                "MISCITATION",
                "SUPPORTED",
                "UNDECIDABLE"
            ]
        );
    }

    #[test]
    fn deterministic_at_temperature_zero() {
        let s = stub();
        let req = CompletionRequest::text(
            "sys",
            "anything at all",
            DecodingConfig {
                temperature: 0.0,
                nucleus_mass: 1.0,
                sample_count: 3,
                seed: 7,
            },
            "misc",
        );
        let a = s.complete(&req).unwrap();
        let b = s.complete(&req).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|c| c.text == a[0].text));
    }

    #[test]
    fn relation_stub_detects_polarity_mismatch() {
        let s = stub();
        let prompt = "Claim c_A (about paper B):\nThe method improves accuracy on benchmark X.\n\nEvidence e_j (community-attributed statement about paper B):\nThe method does not improve accuracy on benchmark X.\n\nReturn JSON:";
        let reply = s.relation_reply(prompt);
        assert!(reply.contains("CONTRADICTS"), "{reply}");
        let prompt = "Claim c_A (about paper B):\nThe method improves accuracy on benchmark X.\n\nEvidence e_j (community-attributed statement about paper B):\nThe method improves accuracy on benchmark X.\n\nReturn JSON:";
        assert!(s.relation_reply(prompt).contains("ENTAILS"));
    }

    #[test]
    fn paraphrase_stub_strips_citations_and_honors_needs() {
        let s = stub();
        let user = "[Context window W_A]\nThe FooNet model was introduced earlier. It is fast [3].\n\n[Target sentence s_A that contains the in-text citation to paper B]\nIt is fast [3]. [[needs:FooNet]]\n\nInstructions:\n1) ...";
        let reply = s.paraphrase_reply(user);
        assert!(!reply.contains("[3]"));
        let user_missing = "[Context window W_A]\nSome unrelated context.\n\n[Target sentence s_A that contains the in-text citation to paper B]\nIt is fast [3]. [[needs:FooNet]]\n\nInstructions:\n1) ...";
        assert_eq!(s.paraphrase_reply(user_missing), "INSUFFICIENT_CONTEXT");
    }
}
