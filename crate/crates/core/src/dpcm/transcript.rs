//! Page transcription and cross-page boundary repair.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::assets;
use crate::gateway::{CompletionRequest, DecodingConfig, Gateway};

use super::markdown::is_caption;
use super::DpcmError;

/// Markdown transcript of a single page, with boundary-incompleteness tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageTranscript {
    /// 1-based, unique per document.
    pub page_index: usize,
    pub markdown: String,
    pub incomplete_start: bool,
    pub incomplete_end: bool,
}

/// Connectives that mark a page head as a sentence continuation.
const CONNECTIVES: [&str; 16] = [
    "and", "but", "however", "therefore", "which", "that", "because", "thus", "moreover",
    "furthermore", "hence", "while", "whereas", "nor", "so", "yet",
];

/// Transcribes each page image through the vision backend with the fixed
/// transcription prompt. Code fences are stripped; a "null" reply yields an
/// empty transcript.
pub fn transcribe_pages(
    pages: &[String],
    gateway: &Gateway,
    seed: u64,
) -> Result<Vec<PageTranscript>, DpcmError> {
    if pages.is_empty() {
        return Err(DpcmError::EmptyPageList);
    }
    let mut transcripts = Vec::with_capacity(pages.len());
    for (i, page_ref) in pages.iter().enumerate() {
        let request = CompletionRequest {
            system_text: assets::TRANSCRIBE_SYSTEM.to_string(),
            user_text: String::new(),
            image_parts: vec![page_ref.clone()],
            decoding: DecodingConfig::deterministic(seed),
            call_tag: format!("dpcm/transcribe@page-{}", i + 1),
        };
        let reply = gateway.complete(&request)?.remove(0).0;
        let markdown = clean_transcript(&reply);
        transcripts.push(tag_boundaries(i + 1, markdown));
    }
    Ok(transcripts)
}

fn clean_transcript(reply: &str) -> String {
    let text = reply.trim();
    let text = match text.strip_prefix("```") {
        Some(rest) => {
            // Drop the fence language line and the closing fence.
            let rest = rest.split_once('\n').map(|(_, r)| r).unwrap_or(rest);
            rest.strip_suffix("```").unwrap_or(rest).trim()
        }
        None => text,
    };
    if text.eq_ignore_ascii_case("null") {
        String::new()
    } else {
        text.to_string()
    }
}

fn tag_boundaries(page_index: usize, markdown: String) -> PageTranscript {
    let incomplete_end = match last_main_paragraph(&markdown) {
        Some(tail) => !tail_complete(tail),
        None => false,
    };
    let incomplete_start = match first_main_paragraph(&markdown) {
        Some(head) => head_is_continuation(head),
        None => false,
    };
    PageTranscript {
        page_index,
        markdown,
        incomplete_start,
        incomplete_end,
    }
}

fn paragraphs(markdown: &str) -> Vec<&str> {
    markdown
        .split("\n\n")
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect()
}

fn last_main_paragraph(markdown: &str) -> Option<&str> {
    paragraphs(markdown)
        .into_iter()
        .rev()
        .find(|p| !is_caption(p) && !p.starts_with('#'))
}

fn first_main_paragraph(markdown: &str) -> Option<&str> {
    paragraphs(markdown)
        .into_iter()
        .find(|p| !is_caption(p) && !p.starts_with('#'))
}

/// A tail is complete iff it ends with sentence-final punctuation (Latin or
/// CJK), closes a math block, ends with a citation pattern, or is a heading
/// or caption.
fn tail_complete(paragraph: &str) -> bool {
    let p = paragraph.trim_end();
    if p.starts_with('#') || is_caption(p) {
        return true;
    }
    if p.ends_with(['.', '!', '?', ':', '\u{3002}', '\u{ff01}', '\u{ff1f}'])
        || p.ends_with("$$")
        || p.ends_with('$')
    {
        return true;
    }
    Regex::new(r"\[\d+(?:\s*[,\u{2013}\u{2014}-]\s*\d+)*\]$")
        .unwrap()
        .is_match(p)
}

/// A head continues the previous page iff it starts with a lowercase letter,
/// a listed connective, or an opening bracket.
fn head_is_continuation(paragraph: &str) -> bool {
    let p = paragraph.trim_start();
    let Some(first) = p.chars().next() else {
        return false;
    };
    if matches!(first, '(' | '[' | '{') {
        return true;
    }
    if first.is_lowercase() {
        return true;
    }
    let first_word: String = p
        .chars()
        .take_while(|c| c.is_alphabetic())
        .collect::<String>()
        .to_lowercase();
    CONNECTIVES.contains(&first_word.as_str())
}

/// Merges per-page transcripts into one Markdown stream, repairing sentence
/// and word breaks at page boundaries. Unresolved boundaries go through the
/// LLM repair prompt; its reply is adopted only when PREV_FIXED/NEXT_FIXED
/// parse and the junction actually changed.
pub fn merge_pages(
    transcripts: &[PageTranscript],
    gateway: &Gateway,
    seed: u64,
) -> Result<String, DpcmError> {
    let mut acc: Vec<String> = Vec::new();
    for t in transcripts {
        let mut incoming: Vec<String> = paragraphs(&t.markdown)
            .into_iter()
            .map(str::to_string)
            .collect();
        if let (Some(tail_pos), Some(head_pos)) = (tail_position(&acc), head_position(&incoming)) {
            let tail = acc[tail_pos].clone();
            let head = incoming[head_pos].clone();
            match repair_boundary(&tail, &head, gateway, seed)? {
                Boundary::Merge(joined) => {
                    acc[tail_pos] = joined;
                    incoming.remove(head_pos);
                }
                Boundary::Replace(new_tail, new_head) => {
                    acc[tail_pos] = new_tail;
                    if new_head.is_empty() {
                        incoming.remove(head_pos);
                    } else {
                        incoming[head_pos] = new_head;
                    }
                }
                Boundary::Keep => {}
            }
        }
        acc.extend(incoming);
    }
    let merged = acc.join("\n\n");
    Ok(strip_debug_tags(&merged))
}

enum Boundary {
    Merge(String),
    Replace(String, String),
    Keep,
}

fn tail_position(acc: &[String]) -> Option<usize> {
    acc.iter()
        .rposition(|p| !is_caption(p) && !p.starts_with('#'))
}

fn head_position(incoming: &[String]) -> Option<usize> {
    incoming.iter().position(|p| !is_caption(p) && !p.starts_with('#'))
}

fn repair_boundary(
    tail: &str,
    head: &str,
    gateway: &Gateway,
    seed: u64,
) -> Result<Boundary, DpcmError> {
    if tail_complete(tail) {
        return Ok(Boundary::Keep);
    }
    if head.starts_with('#') {
        return Ok(Boundary::Keep);
    }
    if head == tail {
        // Exact duplicate boundary fragment.
        return Ok(Boundary::Merge(tail.to_string()));
    }
    let hyphen_fragment = Regex::new(r"[A-Za-z]+-$").unwrap().is_match(tail.trim_end());
    if hyphen_fragment && head.chars().next().is_some_and(|c| c.is_alphabetic()) {
        return Ok(Boundary::Merge(format!("{}{}", tail.trim_end(), head.trim_start())));
    }
    if head_is_continuation(head) {
        return Ok(Boundary::Merge(format!("{} {}", tail.trim_end(), head.trim_start())));
    }

    let request = CompletionRequest::text(
        assets::BOUNDARY_REPAIR_SYSTEM,
        format!("PREV:\n{tail}\n\nNEXT:\n{head}"),
        DecodingConfig::deterministic(seed),
        "dpcm/boundary-repair",
    );
    let reply = gateway.complete(&request)?.remove(0).0;
    match parse_repair(&reply) {
        Some((prev_fixed, next_fixed)) => {
            if prev_fixed == tail.trim() && next_fixed == head.trim() {
                Ok(Boundary::Keep)
            } else {
                Ok(Boundary::Replace(prev_fixed, next_fixed))
            }
        }
        None => {
            log::warn!("boundary repair reply missing PREV_FIXED/NEXT_FIXED; keeping originals");
            Ok(Boundary::Keep)
        }
    }
}

fn parse_repair(reply: &str) -> Option<(String, String)> {
    let prev_start = reply.find("PREV_FIXED:")? + "PREV_FIXED:".len();
    let sep = reply[prev_start..].find("\n---")? + prev_start;
    let next_start = reply.find("NEXT_FIXED:")? + "NEXT_FIXED:".len();
    Some((
        reply[prev_start..sep].trim().to_string(),
        reply[next_start..].trim().to_string(),
    ))
}

fn strip_debug_tags(text: &str) -> String {
    let tag = Regex::new(r"<INCOMPLETE_(START|END)_P\d+>\s*").unwrap();
    let cleaned = tag.replace_all(text, "").to_string();
    Regex::new(r"\n{3,}")
        .unwrap()
        .replace_all(&cleaned, "\n\n")
        .trim()
        .to_string()
}
