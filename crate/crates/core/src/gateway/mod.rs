//! Single choke point for all model-dependent capabilities: text generation
//! (optionally with page images), embeddings, cross-encoder scoring, and NLI
//! classification, with deterministic stub backends, a content-addressed
//! cache, and a per-instance token ledger.

mod stub;

pub use stub::{StubBackend, StubOptions};

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::TokenUsage;

/// Decoding configuration for one completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub temperature: f64,
    pub nucleus_mass: f64,
    pub sample_count: u32,
    pub seed: u64,
}

impl DecodingConfig {
    /// Greedy decoding; a single deterministic sample.
    pub fn deterministic(seed: u64) -> DecodingConfig {
        DecodingConfig {
            temperature: 0.0,
            nucleus_mass: 1.0,
            sample_count: 1,
            seed,
        }
    }

    /// Self-consistency sampling: M completions at the given temperature
    /// with top-p 0.95.
    pub fn self_consistency(samples: u32, temperature: f64, seed: u64) -> DecodingConfig {
        DecodingConfig {
            temperature,
            nucleus_mass: 0.95,
            sample_count: samples,
            seed,
        }
    }
}

/// One completion request routed through the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system_text: String,
    pub user_text: String,
    /// Page-image references; only allowed for vision-capable backends.
    pub image_parts: Vec<String>,
    pub decoding: DecodingConfig,
    pub call_tag: String,
}

impl CompletionRequest {
    pub fn text(
        system_text: impl Into<String>,
        user_text: impl Into<String>,
        decoding: DecodingConfig,
        call_tag: impl Into<String>,
    ) -> CompletionRequest {
        CompletionRequest {
            system_text: system_text.into(),
            user_text: user_text.into(),
            image_parts: Vec::new(),
            decoding,
            call_tag: call_tag.into(),
        }
    }
}

/// A three-way NLI probability distribution; the components sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliDistribution {
    pub p_entail: f64,
    pub p_neutral: f64,
    pub p_contradict: f64,
}

impl NliDistribution {
    pub fn new(p_entail: f64, p_neutral: f64, p_contradict: f64) -> Result<Self, GatewayError> {
        let d = NliDistribution {
            p_entail,
            p_neutral,
            p_contradict,
        };
        d.normalized()
    }

    fn sum(&self) -> f64 {
        self.p_entail + self.p_neutral + self.p_contradict
    }

    /// Renormalizes with a warning when the sum is within 1e-3 of 1; larger
    /// deviations are backend parse errors.
    fn normalized(self) -> Result<Self, GatewayError> {
        let s = self.sum();
        if (s - 1.0).abs() <= 1e-6 {
            return Ok(self);
        }
        if (s - 1.0).abs() <= 1e-3 {
            log::warn!("NLI distribution sums to {s}; renormalizing");
            return Ok(NliDistribution {
                p_entail: self.p_entail / s,
                p_neutral: self.p_neutral / s,
                p_contradict: self.p_contradict / s,
            });
        }
        Err(GatewayError::MalformedReply {
            raw: format!("NLI distribution sums to {s}"),
        })
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed backend reply: {raw}")]
    MalformedReply { raw: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("backend '{backend}' does not support images")]
    VisionUnsupported { backend: String },
}

/// Raw backend interface. Errors are classified as retryable (transport) or
/// permanent (malformed reply); the gateway owns retries, caching, and token
/// accounting.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    fn supports_vision(&self) -> bool {
        false
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Vec<Completion>, BackendError>;

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;

    fn score_pair(&self, query: &str, passage: &str) -> Result<f64, BackendError>;

    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliDistribution, BackendError>;
}

/// One completion with provider-reported token counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed reply: {0}")]
    Malformed(String),
}

#[derive(Debug, Default)]
struct CacheState {
    entries: HashMap<[u8; 32], Vec<Completion>>,
    hits: u64,
}

/// The gateway: shareable across tasks; ledger and cache mutations are
/// atomic. Retries transport errors up to 3 attempts with exponential
/// backoff. Caching is on for deterministic (temperature 0) calls and off
/// for sampling calls so majority voting is not collapsed by the cache.
pub struct Gateway {
    backend: Box<dyn Backend>,
    ledger: Mutex<Vec<TokenUsage>>,
    cache: Mutex<CacheState>,
    cache_enabled: bool,
    max_attempts: u32,
    backoff_base: Duration,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>) -> Gateway {
        Gateway {
            backend,
            ledger: Mutex::new(Vec::new()),
            cache: Mutex::new(CacheState::default()),
            cache_enabled: true,
            max_attempts: 3,
            backoff_base: Duration::from_millis(50),
        }
    }

    pub fn with_cache(mut self, enabled: bool) -> Gateway {
        self.cache_enabled = enabled;
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    /// Serializes the deterministic-call cache for reuse by a later process.
    pub fn export_cache(&self) -> Vec<(String, Vec<Completion>)> {
        let cache = self.cache.lock().unwrap();
        let mut out: Vec<(String, Vec<Completion>)> = cache
            .entries
            .iter()
            .map(|(k, v)| (hex(k), v.clone()))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Seeds the cache from a previous export; malformed keys are skipped.
    pub fn import_cache(&self, entries: Vec<(String, Vec<Completion>)>) {
        let mut cache = self.cache.lock().unwrap();
        for (key, completions) in entries {
            if let Some(bytes) = unhex(&key) {
                cache.entries.insert(bytes, completions);
            }
        }
    }

    fn cache_key(&self, request: &CompletionRequest) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.backend.id().as_bytes());
        hasher.update(serde_json::to_vec(request).expect("request serializes"));
        hasher.finalize().into()
    }

    fn record(&self, usage: TokenUsage) {
        self.ledger.lock().unwrap().push(usage);
    }

    fn retrying<T>(
        &self,
        mut call: impl FnMut() -> Result<T, BackendError>,
    ) -> Result<T, GatewayError> {
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            match call() {
                Ok(v) => return Ok(v),
                Err(BackendError::Transport(msg)) => {
                    last = msg;
                    if attempt < self.max_attempts {
                        std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
                    }
                }
                Err(BackendError::Malformed(raw)) => {
                    return Err(GatewayError::MalformedReply { raw })
                }
            }
        }
        Err(GatewayError::Transport {
            attempts: self.max_attempts,
            message: last,
        })
    }

    /// Runs a completion request. Returns exactly `sample_count` completions
    /// and appends one ledger row per call. A cache hit returns the identical
    /// payload with zero new ledger rows; only deterministic (temperature 0)
    /// requests are cached.
    pub fn complete(
        &self,
        request: &CompletionRequest,
    ) -> Result<Vec<(String, TokenUsage)>, GatewayError> {
        if !request.image_parts.is_empty() && !self.backend.supports_vision() {
            return Err(GatewayError::VisionUnsupported {
                backend: self.backend.id().to_string(),
            });
        }
        if request.decoding.sample_count == 0 {
            return Err(GatewayError::Contract("sample_count must be >= 1".into()));
        }

        let cacheable = self.cache_enabled && request.decoding.temperature == 0.0;
        let key = self.cache_key(request);
        if cacheable {
            let mut cache = self.cache.lock().unwrap();
            if let Some(hit) = cache.entries.get(&key).cloned() {
                cache.hits += 1;
                return Ok(hit
                    .iter()
                    .map(|c| {
                        (
                            c.text.clone(),
                            TokenUsage::new(c.input_tokens, c.output_tokens, &request.call_tag),
                        )
                    })
                    .collect());
            }
        }

        let completions = self.retrying(|| self.backend.complete(request))?;
        if completions.len() != request.decoding.sample_count as usize {
            return Err(GatewayError::MalformedReply {
                raw: format!(
                    "backend returned {} completions for sample_count {}",
                    completions.len(),
                    request.decoding.sample_count
                ),
            });
        }
        let out: Vec<(String, TokenUsage)> = completions
            .iter()
            .map(|c| {
                let usage = TokenUsage::new(c.input_tokens, c.output_tokens, &request.call_tag);
                self.record(usage.clone());
                (c.text.clone(), usage)
            })
            .collect();
        if cacheable {
            self.cache.lock().unwrap().entries.insert(key, completions);
        }
        Ok(out)
    }

    /// Embeds each text into a fixed-dimension vector. Identical inputs yield
    /// identical vectors.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::Contract("embed requires a non-empty list".into()));
        }
        self.retrying(|| self.backend.embed(texts))
    }

    /// Cross-encoder relevance score; higher means more relevant.
    pub fn score_pair(&self, query: &str, passage: &str) -> Result<f64, GatewayError> {
        if query.is_empty() || passage.is_empty() {
            return Err(GatewayError::Contract(
                "score_pair requires non-empty query and passage".into(),
            ));
        }
        self.retrying(|| self.backend.score_pair(query, passage))
    }

    /// NLI classification of (premise, hypothesis).
    pub fn nli_classify(
        &self,
        premise: &str,
        hypothesis: &str,
    ) -> Result<NliDistribution, GatewayError> {
        if premise.is_empty() || hypothesis.is_empty() {
            return Err(GatewayError::Contract(
                "nli_classify requires non-empty premise and hypothesis".into(),
            ));
        }
        let dist = self.retrying(|| self.backend.nli(premise, hypothesis))?;
        dist.normalized()
    }

    /// Aggregated token usage over ledger rows whose call_tag matches the
    /// glob pattern ('*' matches any run of characters). Exact integer sums;
    /// an empty match yields zeros.
    pub fn usage_report(&self, pattern: &str) -> TokenUsage {
        let ledger = self.ledger.lock().unwrap();
        let mut input = 0u64;
        let mut output = 0u64;
        for row in ledger.iter().filter(|r| glob_match(pattern, &r.call_tag)) {
            input += row.input_tokens;
            output += row.output_tokens;
        }
        TokenUsage::new(input, output, pattern)
    }

    /// Snapshot of all ledger rows, in call order.
    pub fn ledger_rows(&self) -> Vec<TokenUsage> {
        self.ledger.lock().unwrap().clone()
    }

    pub fn ledger_len(&self) -> usize {
        self.ledger.lock().unwrap().len()
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache.lock().unwrap().hits
    }
}

/// Minimal glob matcher: '*' matches any (possibly empty) run of characters.
fn hex(bytes: &[u8; 32]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let hi = (chunk[0] as char).to_digit(16)?;
        let lo = (chunk[1] as char).to_digit(16)?;
        out[i] = (hi * 16 + lo) as u8;
    }
    Some(out)
}

pub fn glob_match(pattern: &str, text: &str) -> bool {
    fn inner(p: &[u8], t: &[u8]) -> bool {
        match p.first() {
            None => t.is_empty(),
            Some(b'*') => (0..=t.len()).any(|i| inner(&p[1..], &t[i..])),
            Some(&c) => t.first() == Some(&c) && inner(&p[1..], &t[1..]),
        }
    }
    inner(pattern.as_bytes(), text.as_bytes())
}

/// Counts whitespace-separated tokens; the offline proxy for provider
/// tokenizers used by stub backends.
pub fn approx_token_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}
