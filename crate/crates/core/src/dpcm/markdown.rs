//! Markdown-to-ParsedDocument structuring shared by transcript and fixture
//! inputs.

use regex::Regex;

use crate::model::{Block, BlockKind, ParsedDocument, Sentence, SourceSpan};

use super::sentence::split_sentences;

/// True for caption lines ("Figure 3: ...", "Tab. 2 ...").
pub fn is_caption(line: &str) -> bool {
    let t = line.trim_start();
    ["Figure", "Table", "Fig.", "Tab."]
        .iter()
        .any(|p| t.starts_with(p))
}

fn heading_level(line: &str) -> Option<u8> {
    let t = line.trim_start();
    let hashes = t.chars().take_while(|&c| c == '#').count();
    if (1..=6).contains(&hashes) && t.chars().nth(hashes) == Some(' ') {
        Some(hashes as u8)
    } else {
        None
    }
}

fn is_list_item(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("- ")
        || t.starts_with("* ")
        || Regex::new(r"^\d+\.\s").unwrap().is_match(t)
}

fn is_bib_heading(text: &str) -> bool {
    let t = text.trim().to_ascii_lowercase();
    t == "references" || t == "bibliography" || t == "works cited" || t == "literature cited"
}

/// Parses Markdown into typed blocks and a sentence index. `page` seeds the
/// provenance spans; offsets are character offsets into `text`.
pub fn parse_markdown(text: &str, page: usize) -> ParsedDocument {
    let bib_index_re = Regex::new(r"^\s*\[(\d+)\]").unwrap();
    let mut blocks: Vec<Block> = Vec::new();
    let mut in_bibliography = false;

    let mut offset = 0usize;
    for raw_block in text.split("\n\n") {
        let block_start = offset;
        offset += raw_block.chars().count() + 2;
        let trimmed = raw_block.trim();
        if trimmed.is_empty() {
            continue;
        }
        let span = SourceSpan::new(page, block_start, block_start + trimmed.chars().count());

        if let Some(level) = heading_level(trimmed) {
            let title = trimmed.trim_start_matches('#').trim().to_string();
            if is_bib_heading(&title) {
                in_bibliography = true;
            }
            blocks.push(Block {
                kind: BlockKind::Heading(level),
                text: title,
                span,
            });
            continue;
        }
        if trimmed.starts_with("$$") {
            blocks.push(Block {
                kind: BlockKind::DisplayMath,
                text: trimmed.to_string(),
                span,
            });
            continue;
        }
        if in_bibliography {
            // Each non-heading line (or paragraph) after the references
            // heading is one entry; numbered entries carry their index.
            for line in trimmed.lines() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let index = bib_index_re
                    .captures(line)
                    .and_then(|c| c[1].parse::<u32>().ok());
                blocks.push(Block {
                    kind: BlockKind::BibEntry { key: None, index },
                    text: line.to_string(),
                    span,
                });
            }
            continue;
        }
        if is_caption(trimmed) && !trimmed.contains("\n\n") {
            blocks.push(Block {
                kind: BlockKind::Caption,
                text: trimmed.to_string(),
                span,
            });
            continue;
        }
        if trimmed.lines().all(is_list_item) {
            for line in trimmed.lines() {
                blocks.push(Block {
                    kind: BlockKind::ListItem,
                    text: line.trim().to_string(),
                    span,
                });
            }
            continue;
        }
        blocks.push(Block {
            kind: BlockKind::Paragraph,
            text: trimmed.replace('\n', " "),
            span,
        });
    }

    let sentences = index_sentences(&blocks);
    ParsedDocument {
        blocks,
        sentences,
        anchors: Default::default(),
        anchor_occurrences: Vec::new(),
    }
}

/// Builds the global sentence index over prose-bearing blocks. Headings,
/// captions, and list items each count as one sentence.
pub fn index_sentences(blocks: &[Block]) -> Vec<Sentence> {
    let mut sentences = Vec::new();
    for (block_index, block) in blocks.iter().enumerate() {
        let texts: Vec<String> = match block.kind {
            BlockKind::Paragraph => split_sentences(&block.text),
            BlockKind::Heading(_) | BlockKind::Caption | BlockKind::ListItem => {
                vec![block.text.clone()]
            }
            BlockKind::DisplayMath | BlockKind::BibEntry { .. } => continue,
        };
        for text in texts {
            let sentence_index = sentences.len();
            sentences.push(Sentence {
                text,
                block_index,
                sentence_index,
            });
        }
    }
    sentences
}
