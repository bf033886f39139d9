//! Length buckets and padding.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::vocab::{EOS, PAD};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BucketError {
    #[error("bucket list is empty")]
    Empty,
    #[error("buckets must be strictly increasing in both lengths")]
    NotIncreasing,
    #[error("{len} tokens do not fit a bucket of length {bucket_len} with an end marker")]
    Overflow { len: usize, bucket_len: usize },
}

/// Ordered `(max_context_len, max_target_len)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct BucketConfig {
    buckets: Vec<(usize, usize)>,
}

impl TryFrom<Vec<(usize, usize)>> for BucketConfig {
    type Error = BucketError;
    fn try_from(v: Vec<(usize, usize)>) -> Result<Self, BucketError> {
        BucketConfig::new(v)
    }
}

impl From<BucketConfig> for Vec<(usize, usize)> {
    fn from(b: BucketConfig) -> Self {
        b.buckets
    }
}

impl Default for BucketConfig {
    fn default() -> Self {
        BucketConfig {
            buckets: alloc::vec![(10, 10), (20, 15), (40, 25), (160, 40)],
        }
    }
}

impl BucketConfig {
    pub fn new(buckets: Vec<(usize, usize)>) -> Result<Self, BucketError> {
        if buckets.is_empty() {
            return Err(BucketError::Empty);
        }
        if buckets.windows(2).any(|w| w[1].0 <= w[0].0 || w[1].1 <= w[0].1) || buckets[0].0 == 0 || buckets[0].1 == 0 {
            return Err(BucketError::NotIncreasing);
        }
        Ok(BucketConfig { buckets })
    }

    pub fn buckets(&self) -> &[(usize, usize)] {
        &self.buckets
    }

    pub fn largest(&self) -> (usize, usize) {
        *self.buckets.last().expect("non-empty")
    }

    /// Smallest bucket holding both lengths.
    pub fn bucket_assign(&self, len_ctx: usize, len_tgt: usize) -> Option<usize> {
        self.buckets.iter().position(|&(c, t)| c >= len_ctx && t >= len_tgt)
    }
}

/// `tokens`, an end marker, then padding up to `bucket_len`.
pub fn pad_to_bucket(tokens: &[u32], bucket_len: usize) -> Result<Vec<u32>, BucketError> {
    if tokens.len() + 1 > bucket_len {
        return Err(BucketError::Overflow {
            len: tokens.len(),
            bucket_len,
        });
    }
    let mut out = Vec::with_capacity(bucket_len);
    out.extend_from_slice(tokens);
    out.push(EOS);
    out.resize(bucket_len, PAD);
    Ok(out)
}

/// Inverse of [`pad_to_bucket`] applied to a context padded without an end
/// marker, or a target padded with one: drops trailing pads and one end marker.
pub fn strip_padding(seq: &[u32]) -> &[u32] {
    let mut end = seq.len();
    while end > 0 && seq[end - 1] == PAD {
        end -= 1;
    }
    if end > 0 && seq[end - 1] == EOS {
        end -= 1;
    }
    &seq[..end]
}
