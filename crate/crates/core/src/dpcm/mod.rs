//! Document parsing and citation mapping: markup and transcript
//! normalization, cross-page repair, extraction auditing, citation
//! detection, bibliography parsing, and citation-to-entry alignment.

pub mod align;
pub mod bibliography;
pub mod citations;
pub mod markdown;
pub mod markup;
pub mod sentence;
pub mod transcript;
pub mod verify;

pub use align::align_citations;
pub use bibliography::{parse_bibliography, parse_entry};
pub use citations::{detect_citations, expand_range, CitationDraft};
pub use markdown::parse_markdown;
pub use markup::{normalize_markup, StyleConfig};
pub use sentence::split_sentences;
pub use transcript::{merge_pages, transcribe_pages, PageTranscript};
pub use verify::{audit_segment, verify_extraction, AnomalyKind, ExtractionAnomaly};

use thiserror::Error;

use crate::gateway::GatewayError;

#[derive(Debug, Error)]
pub enum DpcmError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("transcription requires at least one page")]
    EmptyPageList,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}
