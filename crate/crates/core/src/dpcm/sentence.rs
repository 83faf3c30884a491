//! Punctuation-based sentence segmentation with protections for
//! abbreviations, decimals, inline math, and bracketed spans.

/// Abbreviations that end with a period but do not end a sentence.
const ABBREVIATIONS: [&str; 22] = [
    "al", "fig", "figs", "tab", "eq", "eqs", "sec", "ch", "no", "pp", "vol", "vs", "cf", "resp",
    "dr", "prof", "mr", "mrs", "ms", "st", "etc", "approx",
];

/// Splits a block of prose into sentences. Bracket depth, inline math, and
/// abbreviation lookbehind suppress false breaks; the split keeps terminal
/// punctuation with the preceding sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut paren_depth = 0i32;
    let mut bracket_depth = 0i32;
    let mut in_math = false;

    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '$' => in_math = !in_math,
            '(' => paren_depth += 1,
            ')' => paren_depth = (paren_depth - 1).max(0),
            '[' => bracket_depth += 1,
            ']' => bracket_depth = (bracket_depth - 1).max(0),
            '.' | '!' | '?' | '\u{3002}' | '\u{ff01}' | '\u{ff1f}' => {
                if paren_depth == 0 && bracket_depth == 0 && !in_math && is_boundary(&chars, i) {
                    // Keep trailing quotes and brackets with the sentence.
                    let mut end = i + 1;
                    while end < chars.len() && matches!(chars[end], '"' | '\'' | '\u{201d}' | ')') {
                        end += 1;
                    }
                    let s: String = chars[start..end].iter().collect();
                    let s = s.trim();
                    if !s.is_empty() {
                        sentences.push(s.to_string());
                    }
                    start = end;
                    i = end;
                    continue;
                }
            }
            _ => {}
        }
        i += 1;
    }
    let tail: String = chars[start..].iter().collect();
    let tail = tail.trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}

fn is_boundary(chars: &[char], i: usize) -> bool {
    let c = chars[i];
    if c == '.' {
        // Decimal number: digit on both sides.
        if i > 0
            && i + 1 < chars.len()
            && chars[i - 1].is_ascii_digit()
            && chars[i + 1].is_ascii_digit()
        {
            return false;
        }
        // Initial ("A. Smith") or abbreviation.
        let word = preceding_word(chars, i);
        if word.chars().count() == 1 && word.chars().all(|c| c.is_ascii_uppercase()) {
            return false;
        }
        if ABBREVIATIONS.contains(&word.to_ascii_lowercase().as_str()) {
            return false;
        }
    }
    // A boundary needs following whitespace then a plausible sentence opener,
    // or end of text.
    let mut j = i + 1;
    while j < chars.len() && matches!(chars[j], '"' | '\'' | '\u{201d}' | ')') {
        j += 1;
    }
    if j >= chars.len() {
        return true;
    }
    if !chars[j].is_whitespace() {
        return false;
    }
    while j < chars.len() && chars[j].is_whitespace() {
        j += 1;
    }
    match chars.get(j) {
        None => true,
        Some(&n) => {
            n.is_uppercase()
                || n.is_ascii_digit()
                || matches!(n, '(' | '[' | '$' | '"' | '\u{201c}' | '-' | '*')
                || !n.is_ascii()
        }
    }
}

fn preceding_word(chars: &[char], i: usize) -> String {
    let mut start = i;
    while start > 0 && (chars[start - 1].is_alphanumeric() || chars[start - 1] == '-') {
        start -= 1;
    }
    chars[start..i].iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_plain_sentences() {
        let got = split_sentences("First sentence. Second sentence. Third.");
        assert_eq!(got, vec!["First sentence.", "Second sentence.", "Third."]);
    }

    #[test]
    fn protects_abbreviations_and_initials() {
        let got = split_sentences("As shown by A. Smith et al. in Fig. 3, the rate rises.");
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn protects_decimals_and_math() {
        let got = split_sentences("The value is 3.14 here. Let $x. y$ denote a pair. Done.");
        assert_eq!(got.len(), 3);
        assert_eq!(got[0], "The value is 3.14 here.");
    }

    #[test]
    fn keeps_citation_brackets_inside_sentence() {
        let got = split_sentences("Prior work [3, 5] agrees. A second point follows.");
        assert_eq!(got.len(), 2);
        assert!(got[0].contains("[3, 5]"));
    }

    #[test]
    fn requires_capitalized_continuation() {
        let got = split_sentences("We use v1.2 of the tool. it works");
        // "it" is lowercase, so the period before it is not a boundary.
        assert_eq!(got.len(), 1);
    }
}
