//! Accessible-source verification funnel: dense retrieval over the cited
//! document, cross-encoder rerank, an NLI gate with early exit, and a
//! self-consistent deep reading for the ambiguous remainder.

use serde::{Deserialize, Serialize};

use crate::assets;
use crate::dpcm::split_sentences;
use crate::gateway::{CompletionRequest, DecodingConfig, Gateway, GatewayError};
use crate::model::{BlockKind, ParsedDocument, ScoredWindow, VerdictLabel};

/// Funnel parameters. Defaults are the operating point used throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelConfig {
    /// Retrieval depth K.
    pub top_k: usize,
    /// Passages kept after rerank.
    pub focus_n: usize,
    /// Sentences per evidence window.
    pub window_size: usize,
    /// NLI early-exit threshold.
    pub tau_high: f64,
    /// Self-consistency sample count for the deep phase.
    pub sc_samples: usize,
    pub sc_temperature: f64,
    /// Majority fraction below which the deep verdict is withheld.
    pub safety_threshold: f64,
}

impl Default for FunnelConfig {
    fn default() -> FunnelConfig {
        FunnelConfig {
            top_k: 10,
            focus_n: 3,
            window_size: 3,
            tau_high: 0.9,
            sc_samples: 5,
            sc_temperature: 0.7,
            safety_threshold: 0.6,
        }
    }
}

impl FunnelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.focus_n == 0 || self.top_k < self.focus_n {
            return Err("require top_k >= focus_n >= 1".into());
        }
        if self.window_size == 0 {
            return Err("window_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.tau_high) || !(0.0..=1.0).contains(&self.safety_threshold) {
            return Err("thresholds must lie in [0, 1]".into());
        }
        if self.sc_samples == 0 {
            return Err("sc_samples must be positive".into());
        }
        Ok(())
    }
}

/// How far a citation travelled through the funnel before a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    NliGate,
    ExpandedGate,
    Deep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelTrace {
    pub phase_reached: Phase,
    pub m_entail: f64,
    pub m_contradict: f64,
    /// True when entailment and contradiction both exceeded the threshold.
    pub conflict: bool,
    pub lrm_votes: Vec<VerdictLabel>,
    pub confidence: f64,
}

/// Cosine-ranked candidate passages. Returns (paragraph index, score) for
/// min(top_k, candidate count) passages; score ties keep document order.
pub fn retrieve_candidates(
    query: &str,
    paragraphs: &[String],
    top_k: usize,
    gateway: &Gateway,
) -> Result<Vec<(usize, f64)>, GatewayError> {
    if paragraphs.is_empty() {
        return Ok(Vec::new());
    }
    let mut texts: Vec<String> = vec![query.to_string()];
    texts.extend(paragraphs.iter().cloned());
    let vectors = gateway.embed(&texts)?;
    let (qv, rest) = vectors.split_first().expect("embed returned fewer vectors");
    let mut scored: Vec<(usize, f64)> = rest
        .iter()
        .enumerate()
        .map(|(i, v)| (i, cosine(qv, v)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(top_k.min(paragraphs.len()));
    Ok(scored)
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

/// Cross-encoder rerank of retrieved passages, then sliding sentence windows
/// over the focus passages. A passage shorter than the window size yields one
/// whole-passage window; otherwise stride-1 windows, len - W + 1 of them.
pub fn rerank_and_window(
    query: &str,
    candidates: &[(usize, f64)],
    paragraphs: &[String],
    config: &FunnelConfig,
    gateway: &Gateway,
) -> Result<Vec<ScoredWindow>, GatewayError> {
    let mut reranked: Vec<(usize, f64, f64)> = Vec::with_capacity(candidates.len());
    for &(idx, retrieval) in candidates {
        let score = gateway.score_pair(query, &paragraphs[idx])?;
        reranked.push((idx, retrieval, score));
    }
    reranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    reranked.truncate(config.focus_n);

    let mut windows = Vec::new();
    for (idx, retrieval, rerank) in reranked {
        for text in sentence_windows(&paragraphs[idx], config.window_size) {
            windows.push(ScoredWindow {
                text,
                retrieval_score: retrieval,
                rerank_score: rerank,
                p_entail: 0.0,
                p_neutral: 0.0,
                p_contradict: 0.0,
            });
        }
    }
    Ok(windows)
}

/// Stride-1 sentence windows of a passage.
pub fn sentence_windows(paragraph: &str, window_size: usize) -> Vec<String> {
    let sentences = split_sentences(paragraph);
    if sentences.len() <= window_size {
        return vec![paragraph.trim().to_string()];
    }
    sentences
        .windows(window_size)
        .map(|w| w.join(" "))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateDecision {
    Supported(f64),
    Miscitation(f64),
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    pub decision: GateDecision,
    pub phase: Phase,
    pub m_entail: f64,
    pub m_contradict: f64,
    pub conflict: bool,
}

/// NLI gate over the windows. Pass one tests the citing sentence itself;
/// if neither class clears tau_high, pass two retests with the expanded
/// context as hypothesis. Confidence of an early exit is the triggering
/// maximum.
pub fn nli_gate(
    windows: &mut [ScoredWindow],
    citing_sentence: &str,
    expanded: &str,
    tau_high: f64,
    gateway: &Gateway,
) -> Result<GateOutcome, GatewayError> {
    let first = gate_pass(windows, citing_sentence, true, tau_high, gateway)?;
    if !matches!(first.decision, GateDecision::Ambiguous) {
        return Ok(first);
    }
    let mut second = gate_pass(windows, expanded, false, tau_high, gateway)?;
    second.phase = Phase::ExpandedGate;
    Ok(second)
}

fn gate_pass(
    windows: &mut [ScoredWindow],
    hypothesis: &str,
    record: bool,
    tau_high: f64,
    gateway: &Gateway,
) -> Result<GateOutcome, GatewayError> {
    let mut m_entail = 0.0f64;
    let mut m_contradict = 0.0f64;
    for window in windows.iter_mut() {
        let dist = gateway.nli_classify(&window.text, hypothesis)?;
        if record {
            window.p_entail = dist.p_entail;
            window.p_neutral = dist.p_neutral;
            window.p_contradict = dist.p_contradict;
        }
        m_entail = m_entail.max(dist.p_entail);
        m_contradict = m_contradict.max(dist.p_contradict);
    }
    let e_hit = m_entail >= tau_high;
    let c_hit = m_contradict >= tau_high;
    let conflict = e_hit && c_hit;
    if conflict {
        log::warn!(
            "nli gate conflict: entail {m_entail:.3} and contradict {m_contradict:.3} both exceed {tau_high}"
        );
    }
    let decision = match (e_hit, c_hit) {
        (true, true) => {
            if m_entail >= m_contradict {
                GateDecision::Supported(m_entail)
            } else {
                GateDecision::Miscitation(m_contradict)
            }
        }
        (true, false) => GateDecision::Supported(m_entail),
        (false, true) => GateDecision::Miscitation(m_contradict),
        (false, false) => GateDecision::Ambiguous,
    };
    Ok(GateOutcome {
        decision,
        phase: Phase::NliGate,
        m_entail,
        m_contradict,
        conflict,
    })
}

/// Deep reading by self-consistency: sc_samples reasoning runs, each ending
/// in a verdict label on its own line. Strict majority below the safety
/// threshold, an exact tie, and unparseable replies all degrade toward
/// Undecidable rather than guessing.
pub fn adjudicate_deep(
    s_expanded: &str,
    p_focus: &str,
    config: &FunnelConfig,
    gateway: &Gateway,
    seed: u64,
    tag: &str,
) -> Result<(VerdictLabel, f64, Vec<VerdictLabel>), GatewayError> {
    let user = assets::fill(
        assets::LRM_USER,
        &[("S_expanded", s_expanded), ("P_focus", p_focus)],
    );
    let request = CompletionRequest::text(
        assets::LRM_SYSTEM,
        user,
        DecodingConfig::self_consistency(config.sc_samples as u32, config.sc_temperature, seed),
        tag,
    );
    let replies = gateway.complete(&request)?;
    let votes: Vec<VerdictLabel> = replies
        .iter()
        .map(|(text, _)| parse_vote(text).unwrap_or(VerdictLabel::Undecidable))
        .collect();

    let count = |label: VerdictLabel| votes.iter().filter(|v| **v == label).count();
    let supported = count(VerdictLabel::Supported);
    let miscited = count(VerdictLabel::Miscitation);
    let undecided = count(VerdictLabel::Undecidable);
    let top = supported.max(miscited).max(undecided);
    let winners: Vec<VerdictLabel> = [
        (VerdictLabel::Supported, supported),
        (VerdictLabel::Miscitation, miscited),
        (VerdictLabel::Undecidable, undecided),
    ]
    .into_iter()
    .filter(|(_, c)| *c == top)
    .map(|(l, _)| l)
    .collect();

    let confidence = top as f64 / config.sc_samples as f64;
    let verdict = if winners.len() > 1 || confidence < config.safety_threshold {
        VerdictLabel::Undecidable
    } else {
        winners[0]
    };
    Ok((verdict, confidence, votes))
}

/// Last line of the reply that is exactly a verdict label, case-insensitive.
pub fn parse_vote(reply: &str) -> Option<VerdictLabel> {
    reply
        .lines()
        .rev()
        .filter_map(|line| VerdictLabel::parse(line.trim()))
        .next()
}

pub struct AccessibleVerdict {
    pub verdict: VerdictLabel,
    pub confidence: f64,
    pub windows: Vec<ScoredWindow>,
    pub trace: FunnelTrace,
    pub stage_log: Vec<String>,
}

/// Runs the full funnel for one citation against the cited document.
pub fn verify_accessible(
    occurrence_id: &str,
    citing_sentence: &str,
    prev_sentence: Option<&str>,
    next_sentence: Option<&str>,
    cited_document: &ParsedDocument,
    config: &FunnelConfig,
    gateway: &Gateway,
    seed: u64,
) -> Result<AccessibleVerdict, GatewayError> {
    config.validate().map_err(GatewayError::Contract)?;
    let paragraphs = evidence_paragraphs(cited_document);
    let mut stage_log = Vec::new();

    if paragraphs.is_empty() {
        stage_log.push("retrieve: cited document has no evidence passages".to_string());
        return Ok(AccessibleVerdict {
            verdict: VerdictLabel::Undecidable,
            confidence: 0.0,
            windows: Vec::new(),
            trace: FunnelTrace {
                phase_reached: Phase::NliGate,
                m_entail: 0.0,
                m_contradict: 0.0,
                conflict: false,
                lrm_votes: Vec::new(),
                confidence: 0.0,
            },
            stage_log,
        });
    }

    let candidates = retrieve_candidates(citing_sentence, &paragraphs, config.top_k, gateway)?;
    stage_log.push(format!(
        "retrieve: {} of {} passages kept",
        candidates.len(),
        paragraphs.len()
    ));
    let mut windows =
        rerank_and_window(citing_sentence, &candidates, &paragraphs, config, gateway)?;
    stage_log.push(format!("rerank: {} evidence windows", windows.len()));

    let expanded = expand_context(prev_sentence, citing_sentence, next_sentence);
    let gate = nli_gate(&mut windows, citing_sentence, &expanded, config.tau_high, gateway)?;
    let mut trace = FunnelTrace {
        phase_reached: gate.phase,
        m_entail: gate.m_entail,
        m_contradict: gate.m_contradict,
        conflict: gate.conflict,
        lrm_votes: Vec::new(),
        confidence: 0.0,
    };
    match gate.decision {
        GateDecision::Supported(conf) => {
            stage_log.push(format!("gate: early exit supported at {conf:.3}"));
            trace.confidence = conf;
            return Ok(AccessibleVerdict {
                verdict: VerdictLabel::Supported,
                confidence: conf,
                windows,
                trace,
                stage_log,
            });
        }
        GateDecision::Miscitation(conf) => {
            stage_log.push(format!("gate: early exit miscitation at {conf:.3}"));
            trace.confidence = conf;
            return Ok(AccessibleVerdict {
                verdict: VerdictLabel::Miscitation,
                confidence: conf,
                windows,
                trace,
                stage_log,
            });
        }
        GateDecision::Ambiguous => {
            stage_log.push(format!(
                "gate: ambiguous (m_entail {:.3}, m_contradict {:.3})",
                gate.m_entail, gate.m_contradict
            ));
        }
    }

    let p_focus = windows
        .iter()
        .map(|w| w.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n");
    let tag = format!("acsv/lrm@{occurrence_id}");
    let (verdict, confidence, votes) =
        adjudicate_deep(&expanded, &p_focus, config, gateway, seed, &tag)?;
    stage_log.push(format!(
        "deep: {verdict:?} at {confidence:.2} from {} samples",
        votes.len()
    ));
    trace.phase_reached = Phase::Deep;
    trace.lrm_votes = votes;
    trace.confidence = confidence;
    Ok(AccessibleVerdict {
        verdict,
        confidence,
        windows,
        trace,
        stage_log,
    })
}

/// Prose blocks of the cited document, in order.
pub fn evidence_paragraphs(document: &ParsedDocument) -> Vec<String> {
    document
        .blocks
        .iter()
        .filter(|b| matches!(b.kind, BlockKind::Paragraph | BlockKind::ListItem))
        .map(|b| b.text.clone())
        .collect()
}

/// Neighborhood of the citing sentence; absent neighbors contribute nothing.
pub fn expand_context(prev: Option<&str>, cite: &str, next: Option<&str>) -> String {
    [prev.unwrap_or(""), cite, next.unwrap_or("")]
        .iter()
        .filter(|s| !s.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join(" ")
}
