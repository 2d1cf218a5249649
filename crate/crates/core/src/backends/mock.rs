//! Character-trigram hashing embedder.

use super::Embedder;
use crate::error::Result;
use crate::retrieval::EmbeddingVector;

pub const MOCK_EMBEDDING_DIM: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
// Mixed into the FNV offset basis so bucket assignment is fixed per release.
const SEED: u64 = 0x6772_6f75_6e64_6564;

/// Lowercases, counts character trigrams into 64 hashed buckets, then
/// L2-normalizes. Texts with fewer than three characters map to the zero
/// vector.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockEmbedder;

impl MockEmbedder {
    pub fn bucket(trigram: &str) -> usize {
        Self::bucket_bytes(trigram.as_bytes())
    }

    fn bucket_bytes(bytes: &[u8]) -> usize {
        let mut hash = FNV_OFFSET ^ SEED;
        for b in bytes {
            hash ^= u64::from(*b);
            hash = hash.wrapping_mul(FNV_PRIME);
        }
        (hash % MOCK_EMBEDDING_DIM as u64) as usize
    }

    pub fn counts(text: &str) -> [u32; MOCK_EMBEDDING_DIM] {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut counts = [0u32; MOCK_EMBEDDING_DIM];
        let mut buf = [0u8; 12];
        for w in chars.windows(3) {
            let mut len = 0;
            for c in w {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            counts[Self::bucket_bytes(&buf[..len])] += 1;
        }
        counts
    }

    pub fn embed_one(text: &str) -> EmbeddingVector {
        let counts = Self::counts(text);
        let norm = counts.iter().map(|&c| u64::from(c) * u64::from(c)).sum::<u64>() as f64;
        let norm = norm.sqrt();
        let values = counts
            .iter()
            .map(|&c| if norm == 0.0 { 0.0 } else { f64::from(c) / norm })
            .collect();
        EmbeddingVector::new(values).expect("mock embedding is finite with positive dimension")
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| Self::embed_one(t)).collect())
    }
}
