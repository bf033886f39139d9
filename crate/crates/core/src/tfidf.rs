//! Sparse TF-IDF vectors and cosine similarity for state identification.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use crate::text::normalize_query;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TfidfError {
    #[error("cannot fit an index on zero templates")]
    EmptyCorpus,
    #[error("template {index} of state `{state_id}` has no terms after normalization")]
    EmptyPhrase { state_id: String, index: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfidfConfig {
    /// Use `1 + ln(tf)` instead of raw counts.
    #[serde(default)]
    pub sublinear_tf: bool,
}

/// Sparse vector with entries sorted by column.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    entries: Vec<(usize, f64)>,
}

impl SparseVec {
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.entries.iter().map(|(_, w)| w * w).sum())
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (ci, wi) = self.entries[i];
            let (cj, wj) = other.entries[j];
            match ci.cmp(&cj) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    acc += wi * wj;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    fn shared_terms(&self, other: &SparseVec) -> usize {
        self.entries
            .iter()
            .filter(|(c, _)| other.entries.binary_search_by_key(c, |(k, _)| *k).is_ok())
            .count()
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &SparseVec, b: &SparseVec) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        (a.dot(b) / denom).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub state_id: String,
    pub template_index: usize,
    pub score: f64,
    /// Distinct query terms that also occur in the template.
    pub matched_terms: usize,
}

#[derive(Debug, Clone)]
pub struct TfidfIndex {
    vocabulary: BTreeMap<String, usize>,
    idf: Vec<f64>,
    vectors: Vec<SparseVec>,
    owners: Vec<String>,
    phrases: Vec<String>,
    config: TfidfConfig,
}

impl TfidfIndex {
    /// idf = ln((1 + N) / (1 + df)) + 1, weight = tf * idf, vectors
    /// L2-normalized.
    pub fn fit<S, P>(templates: &[(S, P)]) -> Result<Self, TfidfError>
    where
        S: AsRef<str>,
        P: AsRef<str>,
    {
        Self::fit_with(templates, TfidfConfig::default())
    }

    pub fn fit_with<S, P>(templates: &[(S, P)], config: TfidfConfig) -> Result<Self, TfidfError>
    where
        S: AsRef<str>,
        P: AsRef<str>,
    {
        if templates.is_empty() {
            return Err(TfidfError::EmptyCorpus);
        }
        let tokenized: Vec<Vec<String>> = templates.iter().map(|(_, p)| normalize_query(p.as_ref())).collect();
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for (index, terms) in tokenized.iter().enumerate() {
            if terms.is_empty() {
                return Err(TfidfError::EmptyPhrase {
                    state_id: templates[index].0.as_ref().into(),
                    index,
                });
            }
            let mut seen: Vec<&str> = terms.iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = templates.len() as f64;
        let vocabulary: BTreeMap<String, usize> = df.keys().enumerate().map(|(i, t)| (String::from(*t), i)).collect();
        let idf: Vec<f64> = df.values().map(|&d| libm::log((1.0 + n) / (1.0 + d as f64)) + 1.0).collect();

        let mut index = TfidfIndex {
            vocabulary,
            idf,
            vectors: Vec::with_capacity(templates.len()),
            owners: templates.iter().map(|(s, _)| s.as_ref().into()).collect(),
            phrases: templates.iter().map(|(_, p)| p.as_ref().into()).collect(),
            config,
        };
        index.vectors = tokenized.iter().map(|terms| index.vectorize(terms)).collect();
        Ok(index)
    }

    fn vectorize(&self, terms: &[String]) -> SparseVec {
        let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
        for t in terms {
            if let Some(&col) = self.vocabulary.get(t) {
                *counts.entry(col).or_default() += 1;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(col, tf)| {
                let tf = if self.config.sublinear_tf {
                    1.0 + libm::log(tf as f64)
                } else {
                    tf as f64
                };
                (col, tf * self.idf[col])
            })
            .collect();
        let norm = libm::sqrt(entries.iter().map(|(_, w)| w * w).sum());
        if norm > 0.0 {
            for (_, w) in &mut entries {
                *w /= norm;
            }
        }
        SparseVec { entries }
    }

    /// Unit-normalized query vector; zero when no term is in the vocabulary.
    pub fn query_vector(&self, text: &str) -> SparseVec {
        self.vectorize(&normalize_query(text))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vocabulary(&self) -> &BTreeMap<String, usize> {
        &self.vocabulary
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn vector(&self, template_index: usize) -> &SparseVec {
        &self.vectors[template_index]
    }

    pub fn owner(&self, template_index: usize) -> &str {
        &self.owners[template_index]
    }

    pub fn phrase(&self, template_index: usize) -> &str {
        &self.phrases[template_index]
    }

    /// Scores of every template owned by an allowed state, in template order.
    pub fn scores(&self, text: &str, allowed_states: &[&str]) -> Vec<MatchResult> {
        let q = self.query_vector(text);
        self.vectors
            .iter()
            .enumerate()
            .filter(|(i, _)| allowed_states.contains(&self.owners[*i].as_str()))
            .map(|(i, v)| MatchResult {
                state_id: self.owners[i].clone(),
                template_index: i,
                score: q.dot(v).clamp(0.0, 1.0),
                matched_terms: q.shared_terms(v),
            })
            .collect()
    }

    /// Highest-cosine template among allowed states, lower template index on
    /// ties. `None` when the query shares no term with any allowed template.
    pub fn best_match(&self, text: &str, allowed_states: &[&str]) -> Option<MatchResult> {
        let mut best: Option<MatchResult> = None;
        for m in self.scores(text, allowed_states) {
            if m.matched_terms == 0 {
                continue;
            }
            if best.as_ref().is_none_or(|b| m.score > b.score) {
                best = Some(m);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn dense_oracle(templates: &[&str], query: &str) -> (Vec<Vec<f64>>, Vec<f64>) {
        // Independent dense computation over a sorted vocabulary.
        let docs: Vec<Vec<String>> = templates.iter().map(|t| normalize_query(t)).collect();
        let mut vocab: Vec<String> = docs.iter().flatten().cloned().collect();
        vocab.sort();
        vocab.dedup();
        let n = docs.len() as f64;
        let idf: Vec<f64> = vocab
            .iter()
            .map(|t| {
                let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
                libm::log((1.0 + n) / (1.0 + df)) + 1.0
            })
            .collect();
        let dense = |terms: &[String]| -> Vec<f64> {
            let mut v: Vec<f64> = vocab
                .iter()
                .zip(&idf)
                .map(|(t, w)| terms.iter().filter(|x| *x == t).count() as f64 * w)
                .collect();
            let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            v
        };
        (docs.iter().map(|d| dense(d)).collect(), dense(&normalize_query(query)))
    }

    #[test]
    fn identity_and_orthogonality() {
        let idx = TfidfIndex::fit(&[("wake", "wake me up")]).unwrap();
        assert!((idx.vector(0).norm() - 1.0).abs() < 1e-12);
        assert!((cosine(idx.vector(0), idx.vector(0)) - 1.0).abs() < 1e-12);

        let idx = TfidfIndex::fit(&[("a", "set alarm"), ("b", "drink water")]).unwrap();
        assert_eq!(cosine(idx.vector(0), idx.vector(1)), 0.0);
    }

    #[test]
    fn three_template_corpus_matches_dense_oracle() {
        let phrases = ["set alarm", "set reminder", "cancel reminder"];
        let templates: Vec<(&str, &str)> = phrases.iter().map(|p| ("s", *p)).collect();
        let idx = TfidfIndex::fit(&templates).unwrap();
        let (dense, _) = dense_oracle(&phrases, "");
        let terms: Vec<&String> = idx.vocabulary().keys().collect();
        assert_eq!(terms, ["alarm", "cancel", "reminder", "set"]);
        for (i, d) in dense.iter().enumerate() {
            let mut sparse_dense = vec![0.0; terms.len()];
            for (c, w) in idx.vector(i).entries() {
                sparse_dense[*c] = *w;
            }
            for (a, b) in sparse_dense.iter().zip(d) {
                assert!((a - b).abs() < 1e-9);
            }
            for (j, e) in dense.iter().enumerate() {
                let oracle: f64 = d.iter().zip(e).map(|(x, y)| x * y).sum();
                assert!((cosine(idx.vector(i), idx.vector(j)) - oracle).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn build_errors() {
        let none: [(&str, &str); 0] = [];
        assert_eq!(TfidfIndex::fit(&none).unwrap_err(), TfidfError::EmptyCorpus);
        assert_eq!(
            TfidfIndex::fit(&[("ok", "hi"), ("bad", "!!")]).unwrap_err(),
            TfidfError::EmptyPhrase {
                state_id: "bad".into(),
                index: 1
            }
        );
    }

    #[test]
    fn best_match_cases() {
        let idx = TfidfIndex::fit(&[("wake", "wake me up"), ("water", "remind me to drink water")]).unwrap();
        let m = idx.best_match("wake me up", &["wake", "water"]).unwrap();
        assert_eq!((m.template_index, m.state_id.as_str()), (0, "wake"));
        assert!((m.score - 1.0).abs() < 1e-12);
        assert!(idx.best_match("qwerty zxcv", &["wake", "water"]).is_none());
        // Restriction to allowed states.
        assert_eq!(idx.best_match("wake me up", &["water"]).unwrap().state_id, "water");
        assert!(idx.best_match("wake up", &["water"]).is_none());
    }

    #[test]
    fn ties_prefer_lower_template_index() {
        let idx = TfidfIndex::fit(&[("b", "hello there"), ("a", "hello there")]).unwrap();
        assert_eq!(idx.best_match("hello", &["a", "b"]).unwrap().template_index, 0);
    }

    proptest::proptest! {
        #[test]
        fn repeated_query_keeps_match(words in proptest::collection::vec("[a-e]{1,2}", 1..6), k in 2usize..5) {
            let idx = TfidfIndex::fit(&[("x", "a b c"), ("y", "b d e"), ("z", "aa bb e")]).unwrap();
            let q = words.join(" ");
            let rep = vec![q.as_str(); k].join(" ");
            let a = idx.best_match(&q, &["x", "y", "z"]);
            let b = idx.best_match(&rep, &["x", "y", "z"]);
            proptest::prop_assert_eq!(a.as_ref().map(|m| m.template_index), b.as_ref().map(|m| m.template_index));
            if let (Some(a), Some(b)) = (a, b) {
                proptest::prop_assert!((a.score - b.score).abs() < 1e-12);
            }
        }

        #[test]
        fn cosine_is_symmetric(a in "[a-f ]{1,20}", b in "[a-f ]{1,20}") {
            let idx = TfidfIndex::fit(&[("s", "a b c d e f"), ("t", "a a b")]).unwrap();
            let (va, vb) = (idx.query_vector(&a), idx.query_vector(&b));
            proptest::prop_assert!((cosine(&va, &vb) - cosine(&vb, &va)).abs() < 1e-12);
        }
    }
}
