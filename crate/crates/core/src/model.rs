//! Shared domain vocabulary: documents, citations, verdicts, taxonomy codes,
//! confidence, and audit bundles used by every other module.
//!
//! All types here are immutable value objects after construction and are safe
//! to share between concurrent tasks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The five miscitation error codes, ordered by checking precedence.
///
/// Verification aborts at the first point of failure, so each code carries a
/// precedence rank (1 = checked first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaxonomyCode {
    AttributionTraceability,
    CitationValidity,
    ContentMisrepresentation,
    ScopeExtrapolation,
    EvidenceCharacterization,
}

impl TaxonomyCode {
    pub const ALL: [TaxonomyCode; 5] = [
        TaxonomyCode::AttributionTraceability,
        TaxonomyCode::CitationValidity,
        TaxonomyCode::ContentMisrepresentation,
        TaxonomyCode::ScopeExtrapolation,
        TaxonomyCode::EvidenceCharacterization,
    ];

    /// Precedence rank in {1..5}; lower ranks are checked first.
    pub fn precedence_rank(self) -> u8 {
        match self {
            TaxonomyCode::AttributionTraceability => 1,
            TaxonomyCode::CitationValidity => 2,
            TaxonomyCode::ContentMisrepresentation => 3,
            TaxonomyCode::ScopeExtrapolation => 4,
            TaxonomyCode::EvidenceCharacterization => 5,
        }
    }

    /// Canonical display name.
    pub fn name(self) -> &'static str {
        match self {
            TaxonomyCode::AttributionTraceability => "Attribution & Traceability Error",
            TaxonomyCode::CitationValidity => "Citation Validity Error",
            TaxonomyCode::ContentMisrepresentation => "Content Misrepresentation Error",
            TaxonomyCode::ScopeExtrapolation => "Scope Extrapolation Error",
            TaxonomyCode::EvidenceCharacterization => "Evidence Characterization Error",
        }
    }

    /// Parse a label in any of the common spellings ("Scope Extrapolation
    /// Error", "ScopeExtrapolation", "scope extrapolation", ...).
    pub fn parse(label: &str) -> Option<TaxonomyCode> {
        let norm: String = label
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let norm = norm
            .strip_suffix("error")
            .unwrap_or(&norm)
            .trim_end_matches('s')
            .to_string();
        match norm.as_str() {
            "attributiontraceability" | "attributionandtraceability" | "attribution" => {
                Some(TaxonomyCode::AttributionTraceability)
            }
            "citationvalidity" | "validity" => Some(TaxonomyCode::CitationValidity),
            "contentmisrepresentation" | "content" => Some(TaxonomyCode::ContentMisrepresentation),
            "scopeextrapolation" | "scope" => Some(TaxonomyCode::ScopeExtrapolation),
            "evidencecharacterization" | "evidence" => {
                Some(TaxonomyCode::EvidenceCharacterization)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
#[error("precedence_min requires a non-empty set of taxonomy codes")]
pub struct EmptyCodeSet;

/// Returns the member with minimal precedence rank (the "first point of
/// failure" among the given codes).
pub fn precedence_min<I>(codes: I) -> Result<TaxonomyCode, EmptyCodeSet>
where
    I: IntoIterator<Item = TaxonomyCode>,
{
    codes
        .into_iter()
        .min_by_key(|c| c.precedence_rank())
        .ok_or(EmptyCodeSet)
}

/// Validity verdict for one citation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictLabel {
    Supported,
    Miscitation,
    Undecidable,
}

impl VerdictLabel {
    pub fn parse(s: &str) -> Option<VerdictLabel> {
        match s.trim().to_ascii_lowercase().as_str() {
            "supported" | "correct" => Some(VerdictLabel::Supported),
            "miscitation" | "miscited" => Some(VerdictLabel::Miscitation),
            "undecidable" => Some(VerdictLabel::Undecidable),
            _ => None,
        }
    }
}

/// Which verification branch handled the citation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Route {
    Accessible,
    Inaccessible,
    Ghost,
}

/// A verdict with calibrated confidence and its routing provenance.
///
/// Ghost-routed verdicts are always Miscitation / AttributionTraceability;
/// use [`Verdict::ghost`] to construct that case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: VerdictLabel,
    /// In [0,1]; stored even for Undecidable so abstentions can be ranked.
    pub confidence: f64,
    pub route: Route,
}

impl Verdict {
    pub fn new(label: VerdictLabel, confidence: f64, route: Route) -> Verdict {
        debug_assert!((0.0..=1.0).contains(&confidence));
        Verdict {
            label,
            confidence,
            route,
        }
    }

    /// The forced verdict for an unresolvable (ghost) citation.
    pub fn ghost() -> Verdict {
        Verdict {
            label: VerdictLabel::Miscitation,
            confidence: 1.0,
            route: Route::Ghost,
        }
    }
}

/// Structural block kinds produced by document normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// Heading with level 1-6.
    Heading(u8),
    Paragraph,
    DisplayMath,
    ListItem,
    Caption,
    /// Bibliography entry; `key` is present for markup inputs, `index` for
    /// numbered reference lists.
    BibEntry {
        key: Option<String>,
        index: Option<u32>,
    },
}

/// Source-span provenance: page index and character offsets within that page
/// (or within the source file for single-stream inputs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub page: usize,
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    pub fn new(page: usize, start: usize, end: usize) -> SourceSpan {
        SourceSpan { page, start, end }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub text: String,
    pub span: SourceSpan,
}

/// One sentence with its owning block and global sentence index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub block_index: usize,
    pub sentence_index: usize,
}

/// An inline-citation anchor recovered from markup: the occurrence id plus the
/// bibliography keys it referenced, in original order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorOccurrence {
    pub occurrence_id: String,
    pub keys: Vec<String>,
    pub block_index: usize,
    /// Character offset of the rendered surface form within the block text.
    pub offset: usize,
    /// True when some key did not resolve to a bibliography entry.
    pub unresolved: bool,
}

/// Hierarchical normalized document with sentence index, citation anchors,
/// and provenance spans.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParsedDocument {
    pub blocks: Vec<Block>,
    pub sentences: Vec<Sentence>,
    /// occurrence id -> bibliography keys in original order.
    pub anchors: BTreeMap<String, Vec<String>>,
    /// Occurrence metadata backing `anchors` (position, resolution state).
    pub anchor_occurrences: Vec<AnchorOccurrence>,
}

impl ParsedDocument {
    /// The sentence that contains character `offset` of block `block_index`,
    /// if that block was segmented.
    pub fn sentence_at(&self, block_index: usize, offset: usize) -> Option<&Sentence> {
        let block = self.blocks.get(block_index)?;
        let mut consumed = 0usize;
        let mut last: Option<&Sentence> = None;
        for s in self.sentences.iter().filter(|s| s.block_index == block_index) {
            if let Some(pos) = block.text[consumed..].find(&s.text) {
                let start = consumed + pos;
                let end = start + s.text.len();
                if (start..end).contains(&offset) {
                    return Some(s);
                }
                consumed = end;
            }
            last = Some(s);
        }
        last
    }

    pub fn sentence(&self, index: usize) -> Option<&Sentence> {
        self.sentences.get(index)
    }
}

/// Publication year; unknown years are represented explicitly so alignment
/// scoring stays honest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Year {
    Known(i32),
    Unknown,
}

impl Year {
    pub fn known(self) -> Option<i32> {
        match self {
            Year::Known(y) => Some(y),
            Year::Unknown => None,
        }
    }
}

/// One author as (family name, initials).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Author {
    pub family: String,
    pub initials: String,
}

impl Author {
    pub fn new(family: impl Into<String>, initials: impl Into<String>) -> Author {
        Author {
            family: family.into(),
            initials: initials.into(),
        }
    }
}

/// A normalized bibliography entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BibEntry {
    pub key: String,
    pub authors: Vec<Author>,
    pub year: Year,
    pub title_tokens: Vec<String>,
    pub venue: String,
    pub doi: Option<String>,
    pub archive_id: Option<String>,
    /// 1-based position in the bibliography.
    pub entry_index: u32,
    /// The raw entry text, kept for audit trails.
    pub raw: String,
}

/// Surface style of an in-text citation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CitationStyle {
    Numeric,
    AuthorYear,
    Footnote,
}

/// One in-text citation occurrence linked to resolved bibliography entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationEdge {
    pub occurrence_id: String,
    pub sentence_index: usize,
    /// e.g. "[3-5]" or "(Smith, 2020)".
    pub surface_text: String,
    pub style: CitationStyle,
    pub target_keys: Vec<String>,
    /// Set when alignment abstained or no entry matched; such edges feed
    /// Ghost handling downstream.
    pub ambiguity_flag: bool,
}

/// Token accounting for one model call, keyed by pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub call_tag: String,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64, call_tag: impl Into<String>) -> TokenUsage {
        TokenUsage {
            input_tokens,
            output_tokens,
            call_tag: call_tag.into(),
        }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

/// A scored evidence window surfaced in the audit bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredWindow {
    pub text: String,
    pub retrieval_score: f64,
    pub rerank_score: f64,
    pub p_entail: f64,
    pub p_neutral: f64,
    pub p_contradict: f64,
}

/// The classifier-facing evidence for one citation. For non-Ghost routes
/// exactly one of `accessible_evidence` / `committee_evidence` is populated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub citing_context: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accessible_evidence: Option<Vec<ScoredWindow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub committee_evidence: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
    pub notes: String,
}

/// Final per-citation result: verdict, taxonomy code, evidence and cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub occurrence_id: String,
    pub verdict: Verdict,
    /// Attached only to Miscitation verdicts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taxonomy_code: Option<TaxonomyCode>,
    pub evidence: EvidenceBundle,
    pub token_usage: Vec<TokenUsage>,
    pub stage_log: Vec<String>,
}

/// The fixed-field JSON audit bundle written per citation for downstream
/// tooling. Field names are part of the external contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditBundle {
    pub occurrence_id: String,
    pub route: Route,
    pub verdict: VerdictLabel,
    pub confidence: f64,
    pub taxonomy_code: Option<String>,
    pub evidence: EvidenceBundle,
    pub token_usage: Vec<TokenUsage>,
    pub stage_log: Vec<String>,
}

impl From<&VerificationResult> for AuditBundle {
    fn from(r: &VerificationResult) -> AuditBundle {
        AuditBundle {
            occurrence_id: r.occurrence_id.clone(),
            route: r.verdict.route,
            verdict: r.verdict.label,
            confidence: r.verdict.confidence,
            taxonomy_code: r.taxonomy_code.map(|c| c.name().to_string()),
            evidence: r.evidence.clone(),
            token_usage: r.token_usage.clone(),
            stage_log: r.stage_log.clone(),
        }
    }
}
