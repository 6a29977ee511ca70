//! Tokenization and surface-text cleanup shared by generation, distractor
//! sampling and scoring.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::seed::fnv1a;

/// Lowercase, split on whitespace and punctuation. No stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Collapse runs of whitespace into single spaces and trim.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Remove fill-in blanks (`_`, `___`) from node text.
pub fn strip_blanks(text: &str) -> String {
    collapse_whitespace(&text.replace('_', " "))
}

/// `PersonX`, `PersonY`, ... as a lowercased token.
fn is_agent_token_lower(tok: &str) -> bool {
    tok.len() == 7 && tok.starts_with("person") && tok.as_bytes()[6].is_ascii_lowercase()
}

/// Byte ranges of agent tokens (`Person` + one uppercase letter, word-bounded).
fn agent_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut from = 0;
    while let Some(pos) = text[from..].find("Person") {
        let start = from + pos;
        let end = start + 7;
        let bounded_left = start == 0 || !(bytes[start - 1] as char).is_alphanumeric();
        if end <= bytes.len()
            && bytes[start + 6].is_ascii_uppercase()
            && bounded_left
            && (end == bytes.len() || !(bytes[end] as char).is_alphanumeric())
        {
            spans.push((start, end));
            from = end;
        } else {
            from = start + 6;
        }
    }
    spans
}

/// Distinct agent tokens in order of first appearance.
pub fn agent_tokens(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for (s, e) in agent_spans(text) {
        let tok = &text[s..e];
        if !out.iter().any(|t| t == tok) {
            out.push(tok.to_string());
        }
    }
    out
}

pub fn contains_agent_token(text: &str) -> bool {
    !agent_spans(text).is_empty()
}

/// Replace every agent token that has an entry in `names`.
pub fn substitute_agents(text: &str, names: &BTreeMap<String, String>) -> String {
    let spans = agent_spans(text);
    if spans.is_empty() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len() + 8);
    let mut last = 0;
    for (s, e) in spans {
        out.push_str(&text[last..s]);
        match names.get(&text[s..e]) {
            Some(name) => out.push_str(name),
            None => out.push_str(&text[s..e]),
        }
        last = e;
    }
    out.push_str(&text[last..]);
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Stopwords(words.into_iter().map(|w| w.as_ref().to_lowercase()).collect())
    }

    /// One word per line; `#` starts a comment.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut words = HashSet::new();
        for line in reader.lines() {
            let line = line?;
            let word = line.split('#').next().unwrap_or("").trim();
            if !word.is_empty() {
                words.insert(word.to_lowercase());
            }
        }
        Ok(Stopwords(words))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Which tokens participate in an overlap test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    AllTokens,
    /// Stopwords and agent placeholders are ignored.
    KeywordTokens,
}

/// Sorted, deduplicated hashes of the tokens that count for overlap.
pub fn token_signature(text: &str, stopwords: &Stopwords, mode: OverlapMode) -> Vec<u64> {
    let mut sig: Vec<u64> = tokenize(text)
        .into_iter()
        .filter(|t| match mode {
            OverlapMode::AllTokens => true,
            OverlapMode::KeywordTokens => !stopwords.contains(t) && !is_agent_token_lower(t),
        })
        .map(|t| fnv1a(t.as_bytes()))
        .collect();
    sig.sort_unstable();
    sig.dedup();
    sig
}

/// Merge-intersect two sorted signatures.
pub fn signatures_intersect(a: &[u64], b: &[u64]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

pub fn has_keyword_overlap(head: &str, tail: &str, stopwords: &Stopwords, mode: OverlapMode) -> bool {
    signatures_intersect(
        &token_signature(head, stopwords, mode),
        &token_signature(tail, stopwords, mode),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sw() -> Stopwords {
        Stopwords::new(["the", "an", "a", "to", "is", "for"])
    }

    #[test]
    fn tokenize_lowercases_and_splits_punctuation() {
        assert_eq!(tokenize("Robin's  dog, barks!"), vec!["robin", "s", "dog", "barks"]);
        assert!(tokenize(" ,. ").is_empty());
    }

    #[test]
    fn blank_removal() {
        assert_eq!(strip_blanks("goes to the ___ store"), "goes to the store");
        assert_eq!(strip_blanks("_ eats"), "eats");
    }

    #[test]
    fn agent_detection_is_word_bounded() {
        assert_eq!(agent_tokens("PersonX gives PersonY a PersonX hug"), vec!["PersonX", "PersonY"]);
        assert!(agent_tokens("Personal PersonXY xPersonX Persons").is_empty());
        assert_eq!(agent_tokens("PersonZ."), vec!["PersonZ"]);
    }

    #[test]
    fn substitution_leaves_unmapped_agents() {
        let mut m = BTreeMap::new();
        m.insert("PersonX".to_string(), "Robin".to_string());
        assert_eq!(substitute_agents("PersonX hugs PersonY", &m), "Robin hugs PersonY");
    }

    #[test]
    fn overlap_examples() {
        let s = sw();
        assert!(has_keyword_overlap("losing weight", "losing hair", &s, OverlapMode::AllTokens));
        assert!(has_keyword_overlap(
            "PersonX eats the apple",
            "to eat an apple",
            &s,
            OverlapMode::KeywordTokens
        ));
        assert!(!has_keyword_overlap("relaxing", "feeling better", &s, OverlapMode::AllTokens));
        // stopwords only count in all-token mode
        assert!(has_keyword_overlap("go to bed", "to sleep", &s, OverlapMode::AllTokens));
        assert!(!has_keyword_overlap("go to bed", "to sleep", &s, OverlapMode::KeywordTokens));
        // agent placeholders are not keywords
        assert!(!has_keyword_overlap("PersonX sleeps", "PersonX wakes", &s, OverlapMode::KeywordTokens));
    }

    #[test]
    fn stopword_file_comments() {
        let sw = Stopwords::read("# header\nThe\n  of # trailing\n\n".as_bytes()).unwrap();
        assert!(sw.contains("the") && sw.contains("of"));
        assert_eq!(sw.len(), 2);
    }
}
