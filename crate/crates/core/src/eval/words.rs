//! Word frequencies over misclassified descriptions.

use std::collections::{HashMap, HashSet};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledExample;
use crate::error::check_len;
use crate::model::Prediction;
use crate::Result;

/// Embedded English stop-word list applied before counting.
pub const STOP_WORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any",
    "are", "aren", "as", "at", "be", "because", "been", "before", "being", "below", "between",
    "both", "but", "by", "can", "cannot", "could", "did", "didn", "do", "does", "doesn", "doing",
    "don", "down", "during", "each", "either", "few", "for", "from", "further", "had", "has",
    "have", "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how",
    "however", "if", "in", "into", "is", "isn", "it", "its", "itself", "just", "may", "me",
    "might", "more", "most", "must", "my", "myself", "no", "nor", "not", "now", "of", "off", "on",
    "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same",
    "shall", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs",
    "them", "themselves", "then", "there", "these", "they", "this", "those", "through", "thus",
    "to", "too", "under", "until", "up", "upon", "us", "very", "via", "was", "wasn", "we", "were",
    "weren", "what", "when", "where", "whether", "which", "while", "who", "whom", "why", "will",
    "with", "within", "without", "would", "you", "your", "yours", "yourself", "yourselves",
];

static STOP_SET: LazyLock<HashSet<&'static str>> = LazyLock::new(|| STOP_WORDS.iter().copied().collect());

const MIN_TOKEN_CHARS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordCount {
    pub token: String,
    pub count: u64,
}

/// Entries sorted by descending count, ties alphabetical.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordFrequencyTable {
    pub entries: Vec<WordCount>,
}

/// Which prediction errors make a sample count as misclassified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorScope {
    #[default]
    Either,
    Severity,
    Types,
}

impl ErrorScope {
    pub fn is_error(self, example: &LabeledExample, prediction: &Prediction) -> bool {
        let severity = example.severity != prediction.severity;
        let types = example.types != prediction.types;
        match self {
            ErrorScope::Either => severity || types,
            ErrorScope::Severity => severity,
            ErrorScope::Types => types,
        }
    }
}

/// Lowercased alphanumeric runs, minus stop words and short tokens.
pub fn content_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= MIN_TOKEN_CHARS)
        .map(|w| w.to_lowercase())
        .filter(|w| !STOP_SET.contains(w.as_str()))
}

pub fn word_frequencies<'a>(texts: impl IntoIterator<Item = &'a str>, top_k: usize) -> WordFrequencyTable {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for text in texts {
        for w in content_words(text) {
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut entries: Vec<WordCount> = counts
        .into_iter()
        .map(|(token, count)| WordCount { token, count })
        .collect();
    entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.token.cmp(&b.token)));
    entries.truncate(top_k);
    WordFrequencyTable { entries }
}

pub fn misclassified_word_frequencies(
    examples: &[LabeledExample],
    predictions: &[Prediction],
    top_k: usize,
    scope: ErrorScope,
) -> Result<WordFrequencyTable> {
    check_len(examples.len(), predictions.len())?;
    let texts = examples
        .iter()
        .zip(predictions)
        .filter(|(e, p)| scope.is_error(e, p))
        .map(|(e, _)| e.description.as_str());
    Ok(word_frequencies(texts, top_k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_table() {
        let t = word_frequencies(["buffer overflow in kernel", "kernel buffer issue"], 10);
        let got: Vec<(&str, u64)> = t.entries.iter().map(|e| (e.token.as_str(), e.count)).collect();
        assert_eq!(got, [("buffer", 2), ("kernel", 2), ("issue", 1), ("overflow", 1)]);
    }

    #[test]
    fn filters_and_truncation() {
        let t = word_frequencies(["The XSS in the UI, via an <img> tag: XSS!"], 2);
        assert_eq!(t.entries[0], WordCount { token: "xss".into(), count: 2 });
        assert_eq!(t.entries.len(), 2);
        assert!(t.entries.iter().all(|e| e.token != "the" && e.token != "ui"));
        assert!(word_frequencies(Vec::<&str>::new(), 5).entries.is_empty());
    }
}
