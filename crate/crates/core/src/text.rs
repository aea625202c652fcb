//! Text utilities shared across the pipeline: tokenization, whole-phrase
//! matching, and sentence normalization.

use std::sync::LazyLock;

use regex::Regex;

/// Lowercased maximal runs of ASCII alphanumerics. This is the tokenizer for
/// both the deterministic embedder and the baseline vocabulary.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() {
            current.push(ch.to_ascii_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Whole-phrase, case-insensitive containment.
///
/// The phrase matches only with non-alphanumeric boundaries on both ends, so
/// "Execution" does not match inside "executions". Interior whitespace in the
/// phrase matches any run of whitespace in the haystack; with
/// `hyphen_separators` set it additionally matches a single hyphen
/// ("Privilege-Escalation" for "Privilege Escalation").
pub fn contains_phrase(haystack: &str, phrase: &str, hyphen_separators: bool) -> bool {
    let words: Vec<Vec<char>> = phrase
        .split_whitespace()
        .map(|w| w.chars().map(|c| c.to_ascii_lowercase()).collect())
        .collect();
    if words.is_empty() {
        return false;
    }
    let hay: Vec<char> = haystack.chars().collect();

    'outer: for start in 0..hay.len() {
        if start > 0 && hay[start - 1].is_alphanumeric() {
            continue;
        }
        let mut pos = start;
        for (wi, word) in words.iter().enumerate() {
            if wi > 0 {
                // Separator: a whitespace run, or one hyphen when allowed.
                if pos < hay.len() && hyphen_separators && hay[pos] == '-' {
                    pos += 1;
                } else {
                    let ws_start = pos;
                    while pos < hay.len() && hay[pos].is_whitespace() {
                        pos += 1;
                    }
                    if pos == ws_start {
                        continue 'outer;
                    }
                }
            }
            if pos + word.len() > hay.len() {
                continue 'outer;
            }
            for (i, wc) in word.iter().enumerate() {
                if hay[pos + i].to_ascii_lowercase() != *wc {
                    continue 'outer;
                }
            }
            pos += word.len();
        }
        if pos < hay.len() && hay[pos].is_alphanumeric() {
            continue;
        }
        return true;
    }
    false
}

static CITATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(Citation:[^)]*\)").expect("valid regex"));
static MARKDOWN_LINK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[([^\]\[]*)\]\([^)\s]*\)").expect("valid regex"));
static CODE_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"</?code>").expect("valid regex"));

/// Normalize an ATT&CK sentence for filtering, embedding, and output:
/// citation markers dropped, markdown links reduced to their text,
/// `<code>` tags stripped, whitespace collapsed.
pub fn normalize_sentence(raw: &str) -> String {
    let s = CITATION.replace_all(raw, "");
    let s = MARKDOWN_LINK.replace_all(&s, "$1");
    let s = CODE_TAG.replace_all(&s, "");
    collapse_whitespace(&s)
}

/// Collapse whitespace runs to single spaces and trim.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_on_non_alphanumerics() {
        assert_eq!(tokenize("DLL search-order hijacking!"), ["dll", "search", "order", "hijacking"]);
        assert_eq!(tokenize("procdump64.exe"), ["procdump64", "exe"]);
        assert!(tokenize("  ~~ ").is_empty());
    }

    #[test]
    fn phrase_requires_word_boundaries() {
        assert!(contains_phrase("maintains persistence via registry keys", "Persistence", false));
        assert!(!contains_phrase(
            "Threat Group-3390 has performed DLL search order hijacking to execute their payload.",
            "Execution",
            false
        ));
        assert!(!contains_phrase("persistent mechanisms", "Persistence", false));
        assert!(contains_phrase("achieved Persistence.", "Persistence", false));
    }

    #[test]
    fn multi_word_phrase_spans_whitespace() {
        assert!(contains_phrase("uses HTTP for command and control", "Command and Control", false));
        assert!(contains_phrase("Command  and\tControl channel", "Command and Control", false));
        assert!(!contains_phrase("commanders and controllers", "Command and Control", false));
    }

    #[test]
    fn hyphen_separator_is_opt_in() {
        assert!(contains_phrase("Privilege-Escalation noted", "Privilege Escalation", true));
        assert!(!contains_phrase("Privilege-Escalation noted", "Privilege Escalation", false));
        assert!(contains_phrase("lateral-movement", "Lateral Movement", true));
    }

    #[test]
    fn phrase_boundaries_accept_punctuation() {
        assert!(contains_phrase("`Credential Access', `Discovery'", "Credential Access", false));
        assert!(contains_phrase("(Impact)", "Impact", false));
        assert!(!contains_phrase("C2s deployed", "C2", false));
        assert!(contains_phrase("used C2 channels", "C2", false));
    }

    #[test]
    fn normalize_strips_citations_links_and_code() {
        let raw = "[Empire](https://attack.example/software/S0363) dumps creds (Citation: Some Report 2019)  using <code>procdump</code>.";
        assert_eq!(normalize_sentence(raw), "Empire dumps creds using procdump.");
    }

    #[test]
    fn normalize_collapses_whitespace() {
        assert_eq!(normalize_sentence("a\n b\t\tc "), "a b c");
    }
}
