//! Markup normalization: LaTeX-like and minimal XML/HTML sources become
//! ParsedDocuments with exact citation anchors.

use std::collections::BTreeMap;

use regex::Regex;

use crate::model::{
    AnchorOccurrence, Block, BlockKind, CitationStyle, ParsedDocument, SourceSpan,
};

use super::markdown::index_sentences;
use super::DpcmError;

/// Rendering configuration for citation commands.
#[derive(Debug, Clone)]
pub struct StyleConfig {
    pub style: CitationStyle,
    /// key -> numeric index; missing keys fall back to bibliography order.
    pub indices: BTreeMap<String, u32>,
    /// key -> author-year display label, e.g. "Smith, 2020".
    pub labels: BTreeMap<String, String>,
}

impl StyleConfig {
    pub fn numeric() -> StyleConfig {
        StyleConfig {
            style: CitationStyle::Numeric,
            indices: BTreeMap::new(),
            labels: BTreeMap::new(),
        }
    }

    pub fn author_year(labels: BTreeMap<String, String>) -> StyleConfig {
        StyleConfig {
            style: CitationStyle::AuthorYear,
            indices: BTreeMap::new(),
            labels,
        }
    }
}

/// Converts markup into a normalized document. Sectioning becomes headings,
/// presentational macros are stripped, math is preserved, and every citation
/// command is rendered to its surface form and recorded as an anchor.
pub fn normalize_markup(source: &str, style: &StyleConfig) -> Result<ParsedDocument, DpcmError> {
    if source.trim_start().starts_with('<') {
        normalize_html(source, style)
    } else {
        normalize_latex(source, style)
    }
}

struct AnchorSink {
    next_id: usize,
    anchors: BTreeMap<String, Vec<String>>,
    occurrences: Vec<AnchorOccurrence>,
}

impl AnchorSink {
    fn new() -> AnchorSink {
        AnchorSink {
            next_id: 1,
            anchors: BTreeMap::new(),
            occurrences: Vec::new(),
        }
    }

    fn record(&mut self, keys: Vec<String>, block_index: usize, offset: usize, unresolved: bool) {
        let occurrence_id = format!("occ-{}", self.next_id);
        self.next_id += 1;
        self.anchors.insert(occurrence_id.clone(), keys.clone());
        self.occurrences.push(AnchorOccurrence {
            occurrence_id,
            keys,
            block_index,
            offset,
            unresolved,
        });
    }
}

fn normalize_latex(source: &str, style: &StyleConfig) -> Result<ParsedDocument, DpcmError> {
    check_environments(source)?;
    check_braces(source)?;

    // Bibliography first: order defines fallback numeric indices.
    let bib_re = Regex::new(
        r"(?s)\\begin\{thebibliography\}(?:\{[^}]*\})?(.*?)\\end\{thebibliography\}",
    )
    .unwrap();
    let mut bib_entries: Vec<(String, String)> = Vec::new();
    if let Some(cap) = bib_re.captures(source) {
        for piece in cap[1].split("\\bibitem{").skip(1) {
            if let Some((key, rest)) = piece.split_once('}') {
                bib_entries.push((key.to_string(), rest.trim().to_string()));
            }
        }
    }
    let mut indices = style.indices.clone();
    for (i, (key, _)) in bib_entries.iter().enumerate() {
        indices.entry(key.clone()).or_insert(i as u32 + 1);
    }

    let body = bib_re.replace(source, "").to_string();
    let body = preprocess_latex(&body);

    let mut blocks: Vec<Block> = Vec::new();
    let mut sink = AnchorSink::new();
    let section_re =
        Regex::new(r"^\\(section|subsection|subsubsection|paragraph)\*?\{(.*)\}$").unwrap();

    let mut char_offset = 0usize;
    for chunk in body.split("\n\n") {
        let start = char_offset;
        char_offset += chunk.chars().count() + 2;
        let chunk = chunk.trim();
        if chunk.is_empty() || chunk == "\\maketitle" || chunk.starts_with("\\documentclass") {
            continue;
        }
        let span = SourceSpan::new(1, start, start + chunk.chars().count());

        if let Some(cap) = section_re.captures(chunk) {
            let level = match &cap[1] {
                "section" => 1,
                "subsection" => 2,
                "subsubsection" => 3,
                _ => 4,
            };
            blocks.push(Block {
                kind: BlockKind::Heading(level),
                text: strip_presentational(&cap[2]),
                span,
            });
            continue;
        }
        if chunk.starts_with("$$") || chunk.starts_with("\\[") {
            blocks.push(Block {
                kind: BlockKind::DisplayMath,
                text: chunk.to_string(),
                span,
            });
            continue;
        }
        if let Some(caption) = chunk.strip_prefix("\\caption{").and_then(|c| c.strip_suffix('}')) {
            blocks.push(Block {
                kind: BlockKind::Caption,
                text: strip_presentational(caption),
                span,
            });
            continue;
        }
        if chunk.lines().all(|l| l.trim_start().starts_with("- ")) {
            for line in chunk.lines() {
                let block_index = blocks.len();
                let text =
                    render_citations(line.trim().trim_start_matches("- "), style, &indices, block_index, &mut sink);
                blocks.push(Block {
                    kind: BlockKind::ListItem,
                    text,
                    span,
                });
            }
            continue;
        }
        let block_index = blocks.len();
        let text = render_citations(&chunk.replace('\n', " "), style, &indices, block_index, &mut sink);
        blocks.push(Block {
            kind: BlockKind::Paragraph,
            text,
            span,
        });
    }

    for (i, (key, raw)) in bib_entries.iter().enumerate() {
        blocks.push(Block {
            kind: BlockKind::BibEntry {
                key: Some(key.clone()),
                index: Some(indices.get(key).copied().unwrap_or(i as u32 + 1)),
            },
            text: strip_presentational(raw),
            span: SourceSpan::new(1, 0, 0),
        });
    }

    let sentences = index_sentences(&blocks);
    Ok(ParsedDocument {
        blocks,
        sentences,
        anchors: sink.anchors,
        anchor_occurrences: sink.occurrences,
    })
}

/// Flattens list environments, isolates sectioning commands and display math
/// on their own chunks, and drops pure-layout commands.
fn preprocess_latex(body: &str) -> String {
    let mut text = body.to_string();
    for env in ["itemize", "enumerate"] {
        text = text
            .replace(&format!("\\begin{{{env}}}"), "")
            .replace(&format!("\\end{{{env}}}"), "");
    }
    text = text.replace("\\item ", "\n- ").replace("\\item\n", "\n- ");
    text = Regex::new(r"(?s)\\begin\{equation\}(.*?)\\end\{equation\}")
        .unwrap()
        .replace_all(&text, "\n\n$$$$ $1 $$$$\n\n")
        .to_string();
    text = Regex::new(r"\\(section|subsection|subsubsection|paragraph)(\*?\{[^}]*\})")
        .unwrap()
        .replace_all(&text, "\n\n\\$1$2\n\n")
        .to_string();
    // Figure environments reduce to their captions.
    text = Regex::new(r"(?s)\\begin\{figure\}(?:\[[^\]]*\])?(.*?)\\end\{figure\}")
        .unwrap()
        .replace_all(&text, |cap: &regex::Captures| {
            match Regex::new(r"\\caption\{([^}]*)\}").unwrap().captures(&cap[1]) {
                Some(c) => format!("\n\n\\caption{{{}}}\n\n", &c[1]),
                None => String::new(),
            }
        })
        .to_string();
    text.replace('~', " ")
}

/// Strips presentational macros, keeping their content. Unknown macros pass
/// through verbatim with a warning.
fn strip_presentational(text: &str) -> String {
    let known = Regex::new(r"\\(emph|textbf|textit|texttt|underline|mbox)\{([^{}]*)\}").unwrap();
    let mut out = text.to_string();
    // Nested presentational macros unwrap from the inside out.
    loop {
        let next = known.replace_all(&out, "$2").to_string();
        if next == out {
            break;
        }
        out = next;
    }
    let unknown = Regex::new(r"\\[a-zA-Z]+(\{[^{}]*\})?").unwrap();
    for m in unknown.find_iter(&out) {
        let s = m.as_str();
        if !s.starts_with("\\cite") {
            log::warn!("unknown macro passed through verbatim: {s}");
        }
    }
    out
}

/// Replaces citation commands with their surface forms, recording an anchor
/// per occurrence at the rendered offset.
fn render_citations(
    text: &str,
    style: &StyleConfig,
    indices: &BTreeMap<String, u32>,
    block_index: usize,
    sink: &mut AnchorSink,
) -> String {
    let cite_re = Regex::new(r"\\(citep|citet|cite)\{([^}]*)\}").unwrap();
    let mut out = String::new();
    let mut last = 0usize;
    for cap in cite_re.captures_iter(text) {
        let m = cap.get(0).unwrap();
        out.push_str(&strip_presentational(&text[last..m.start()]));
        let keys: Vec<String> = cap[2].split(',').map(|k| k.trim().to_string()).collect();
        let narrative = &cap[1] == "citet";
        let offset = out.chars().count();
        let (surface, unresolved) = render_surface(&keys, style, indices, narrative);
        sink.record(keys, block_index, offset, unresolved);
        out.push_str(&surface);
        last = m.end();
    }
    out.push_str(&strip_presentational(&text[last..]));
    out
}

fn render_surface(
    keys: &[String],
    style: &StyleConfig,
    indices: &BTreeMap<String, u32>,
    narrative: bool,
) -> (String, bool) {
    let mut unresolved = false;
    match style.style {
        CitationStyle::Numeric | CitationStyle::Footnote => {
            let parts: Vec<String> = keys
                .iter()
                .map(|k| match indices.get(k) {
                    Some(i) => i.to_string(),
                    None => {
                        unresolved = true;
                        "?".to_string()
                    }
                })
                .collect();
            (format!("[{}]", parts.join(", ")), unresolved)
        }
        CitationStyle::AuthorYear => {
            let labels: Vec<String> = keys
                .iter()
                .map(|k| match style.labels.get(k) {
                    Some(l) => l.clone(),
                    None => {
                        unresolved = true;
                        format!("{k}, n.d.")
                    }
                })
                .collect();
            if narrative && labels.len() == 1 {
                // "Smith, 2020" -> "Smith (2020)"
                let label = &labels[0];
                match label.rsplit_once(", ") {
                    Some((name, year)) => (format!("{name} ({year})"), unresolved),
                    None => (format!("({label})"), unresolved),
                }
            } else {
                (format!("({})", labels.join("; ")), unresolved)
            }
        }
    }
}

fn check_environments(source: &str) -> Result<(), DpcmError> {
    let env_re = Regex::new(r"\\(begin|end)\{(\w+)\}").unwrap();
    let mut stack: Vec<(String, usize)> = Vec::new();
    for (line_no, line) in source.lines().enumerate() {
        for cap in env_re.captures_iter(line) {
            let name = cap[2].to_string();
            if &cap[1] == "begin" {
                stack.push((name, line_no + 1));
            } else {
                match stack.pop() {
                    Some((open, _)) if open == name => {}
                    Some((open, at)) => {
                        return Err(DpcmError::Parse {
                            line: line_no + 1,
                            message: format!("\\end{{{name}}} closes \\begin{{{open}}} from line {at}"),
                        })
                    }
                    None => {
                        return Err(DpcmError::Parse {
                            line: line_no + 1,
                            message: format!("\\end{{{name}}} without matching \\begin"),
                        })
                    }
                }
            }
        }
    }
    if let Some((open, at)) = stack.pop() {
        return Err(DpcmError::Parse {
            line: at,
            message: format!("unclosed environment \\begin{{{open}}}"),
        });
    }
    Ok(())
}

fn check_braces(source: &str) -> Result<(), DpcmError> {
    let mut depth = 0i64;
    let mut prev = ' ';
    for (line_no, line) in source.lines().enumerate() {
        for c in line.chars() {
            if prev != '\\' {
                match c {
                    '{' => depth += 1,
                    '}' => {
                        depth -= 1;
                        if depth < 0 {
                            return Err(DpcmError::Parse {
                                line: line_no + 1,
                                message: "unbalanced closing brace".into(),
                            });
                        }
                    }
                    _ => {}
                }
            }
            prev = c;
        }
    }
    if depth != 0 {
        return Err(DpcmError::Parse {
            line: source.lines().count(),
            message: format!("{depth} unclosed group(s)"),
        });
    }
    Ok(())
}

fn normalize_html(source: &str, style: &StyleConfig) -> Result<ParsedDocument, DpcmError> {
    let tag_re = Regex::new(r"(?s)<(h[1-6]|p|li)>(.*?)</(h[1-6]|p|li)>").unwrap();
    let open_count = Regex::new(r"<(h[1-6]|p|li)>").unwrap().find_iter(source).count();
    let close_count = Regex::new(r"</(h[1-6]|p|li)>").unwrap().find_iter(source).count();
    if open_count != close_count {
        return Err(DpcmError::Parse {
            line: 1,
            message: format!("{open_count} opening vs {close_count} closing block tags"),
        });
    }

    let cite_tag_re = Regex::new(r#"<cite\s+data-keys="([^"]*)"\s*/>"#).unwrap();
    let strip_inline = Regex::new(r"</?(em|b|i|strong|code)>").unwrap();
    let mut blocks = Vec::new();
    let mut sink = AnchorSink::new();

    for cap in tag_re.captures_iter(source) {
        if cap[1] != cap[3] {
            return Err(DpcmError::Parse {
                line: 1,
                message: format!("<{}> closed by </{}>", &cap[1], &cap[3]),
            });
        }
        let inner = strip_inline.replace_all(cap[2].trim(), "").to_string();
        let span = SourceSpan::new(1, cap.get(0).unwrap().start(), cap.get(0).unwrap().end());
        let kind = match &cap[1] {
            "p" => BlockKind::Paragraph,
            "li" => BlockKind::ListItem,
            h => BlockKind::Heading(h[1..].parse().unwrap()),
        };

        // Render <cite/> elements with anchors, as for LaTeX.
        let block_index = blocks.len();
        let mut out = String::new();
        let mut last = 0usize;
        for c in cite_tag_re.captures_iter(&inner) {
            let m = c.get(0).unwrap();
            out.push_str(&inner[last..m.start()]);
            let keys: Vec<String> = c[1].split(',').map(|k| k.trim().to_string()).collect();
            let offset = out.chars().count();
            let (surface, unresolved) = render_surface(&keys, style, &style.indices, false);
            sink.record(keys, block_index, offset, unresolved);
            out.push_str(&surface);
            last = m.end();
        }
        out.push_str(&inner[last..]);
        blocks.push(Block {
            kind,
            text: out.replace('\n', " "),
            span,
        });
    }

    let sentences = index_sentences(&blocks);
    Ok(ParsedDocument {
        blocks,
        sentences,
        anchors: sink.anchors,
        anchor_occurrences: sink.occurrences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_citep_renders_and_anchors() {
        let src = "Prior work \\citep{a,b} agrees.\n\n\\begin{thebibliography}{9}\n\\bibitem{a} A. Smith. First. V, 2020.\n\\bibitem{b} B. Brown. Second. V, 2019.\n\\end{thebibliography}\n";
        let doc = normalize_markup(src, &StyleConfig::numeric()).unwrap();
        assert!(doc.blocks[0].text.contains("[1, 2]"), "{}", doc.blocks[0].text);
        assert_eq!(doc.anchors["occ-1"], vec!["a", "b"]);
        let occ = &doc.anchor_occurrences[0];
        assert!(!occ.unresolved);
        let rendered: String = doc.blocks[0].text.chars().skip(occ.offset).take(6).collect();
        assert_eq!(rendered, "[1, 2]");
    }

    #[test]
    fn author_year_and_narrative_forms() {
        let mut labels = BTreeMap::new();
        labels.insert("a".to_string(), "Smith, 2020".to_string());
        labels.insert("b".to_string(), "Brown & Brown, 2019".to_string());
        let style = StyleConfig::author_year(labels);
        let src = "Grouped \\citep{a,b} and narrative \\citet{a} both occur.";
        let doc = normalize_markup(src, &style).unwrap();
        assert!(doc.blocks[0].text.contains("(Smith, 2020; Brown & Brown, 2019)"));
        assert!(doc.blocks[0].text.contains("Smith (2020)"));
    }

    #[test]
    fn section_and_emph_projection() {
        let src = "\\section{X}\nBody with \\emph{y} kept.";
        let doc = normalize_markup(src, &StyleConfig::numeric()).unwrap();
        assert!(matches!(doc.blocks[0].kind, BlockKind::Heading(1)));
        assert_eq!(doc.blocks[0].text, "X");
        assert!(doc.blocks[1].text.contains("with y kept"));
    }

    #[test]
    fn unbalanced_environment_is_a_parse_error() {
        let src = "\\begin{itemize}\n\\item one\n";
        let err = normalize_markup(src, &StyleConfig::numeric()).unwrap_err();
        assert!(matches!(err, DpcmError::Parse { .. }));
    }

    #[test]
    fn unbalanced_braces_are_a_parse_error() {
        let src = "Text \\emph{unclosed.";
        assert!(normalize_markup(src, &StyleConfig::numeric()).is_err());
    }

    #[test]
    fn html_headings_paragraphs_and_cites() {
        let mut style = StyleConfig::numeric();
        style.indices.insert("k1".into(), 1);
        let src = "<h1>Title</h1><p>Claim text <cite data-keys=\"k1\"/> here.</p>";
        let doc = normalize_markup(src, &style).unwrap();
        assert!(matches!(doc.blocks[0].kind, BlockKind::Heading(1)));
        assert!(doc.blocks[1].text.contains("[1]"));
        assert_eq!(doc.anchors["occ-1"], vec!["k1"]);
    }
}
