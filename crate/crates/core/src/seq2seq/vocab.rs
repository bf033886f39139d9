//! Token vocabulary with reserved markers and a pre-allocated buffer.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub const PAD: u32 = 0;
pub const GO: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const RESERVED: [&str; 4] = ["_pad_", "_go_", "_eos_", "_unk_"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VocabError {
    #[error("vocabulary buffer is full ({capacity} slots)")]
    BufferFull { capacity: usize },
    #[error("token list must start with the reserved markers")]
    MissingReserved,
    #[error("duplicate token `{0}`")]
    Duplicate(String),
    #[error("size_total {total} is smaller than the {active} active tokens")]
    TooSmall { total: usize, active: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyData", into = "VocabularyData")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
    size_total: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyData {
    tokens: Vec<String>,
    size_total: usize,
}

impl TryFrom<VocabularyData> for Vocabulary {
    type Error = VocabError;
    fn try_from(d: VocabularyData) -> Result<Self, VocabError> {
        Vocabulary::from_tokens(d.tokens, d.size_total)
    }
}

impl From<Vocabulary> for VocabularyData {
    fn from(v: Vocabulary) -> Self {
        VocabularyData {
            tokens: v.tokens,
            size_total: v.size_total,
        }
    }
}

impl Vocabulary {
    /// Reserved markers, then tokens seen at least `min_count` times ordered
    /// by descending count and then lexicographically, then `buffer` free
    /// slots.
    pub fn build<'a, I, S>(sequences: I, min_count: usize, buffer: usize) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for seq in sequences {
            for t in seq {
                *counts.entry(t.as_ref()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count.max(1) && !RESERVED.contains(t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens: Vec<String> = RESERVED
            .iter()
            .copied()
            .chain(kept.into_iter().map(|(t, _)| t))
            .map(String::from)
            .collect();
        let total = tokens.len() + buffer;
        Self::from_tokens(tokens, total).expect("built tokens are unique")
    }

    pub fn from_tokens(tokens: Vec<String>, size_total: usize) -> Result<Self, VocabError> {
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(VocabError::MissingReserved);
        }
        if size_total < tokens.len() {
            return Err(VocabError::TooSmall {
                total: size_total,
                active: tokens.len(),
            });
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(VocabError::Duplicate(t.clone()));
            }
        }
        Ok(Vocabulary {
            tokens,
            index,
            size_total,
        })
    }

    pub fn size_active(&self) -> usize {
        self.tokens.len()
    }

    pub fn size_total(&self) -> usize {
        self.size_total
    }

    pub fn free_slots(&self) -> usize {
        self.size_total - self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or the unknown marker.
    pub fn id(&self, token: &str) -> u32 {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Binds `token` to the next free buffer slot. Existing tokens return
    /// their index unchanged.
    pub fn add_buffered(&mut self, token: &str) -> Result<u32, VocabError> {
        if let Some(i) = self.get(token) {
            return Ok(i);
        }
        if self.free_slots() == 0 {
            return Err(VocabError::BufferFull {
                capacity: self.size_total,
            });
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.into());
        self.index.insert(token.into(), id);
        Ok(id)
    }
}
