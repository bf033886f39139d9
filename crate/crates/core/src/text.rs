//! Tokenization and orthography shared by the matcher, the corpus pipeline
//! and the neural context builder.

use alloc::string::String;
use alloc::vec::Vec;

/// Lowercases, drops every character outside `[a-z0-9_]` and whitespace, and
/// splits on whitespace. This is the tokenizer used on both sides of the
/// TF-IDF matcher.
pub fn normalize_query(text: &str) -> Vec<String> {
    let mut cleaned = String::with_capacity(text.len());
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_ascii_lowercase() || ch.is_ascii_digit() || ch == '_' {
            cleaned.push(ch);
        } else if ch.is_whitespace() {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().map(String::from).collect()
}

/// True for placeholder and action tags such as `_time_` or
/// `_api_cancel_reminder_`.
pub fn is_tag(word: &str) -> bool {
    word.len() >= 3
        && word.starts_with('_')
        && word.ends_with('_')
        && word
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

/// True when `word` matches `_api_[a-z_]+_`.
pub fn is_action_tag(word: &str) -> bool {
    word.len() >= 7
        && word.starts_with("_api_")
        && word.ends_with('_')
        && word.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
}

/// Final orthography pass of the corpus pipeline: lowercase, strip
/// punctuation, drop free digits (digits survive only inside tags) and
/// collapse whitespace. The output alphabet is `{a-z, _, ' '}` plus digits
/// inside tags.
pub fn normalize_orthography(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        let filtered: String = word
            .chars()
            .flat_map(char::to_lowercase)
            .filter(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || *c == '_')
            .collect();
        let kept: String = if is_tag(&filtered) {
            filtered
        } else {
            filtered.chars().filter(|c| !c.is_ascii_digit()).collect()
        };
        if kept.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&kept);
    }
    out
}
