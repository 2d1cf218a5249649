//! Per-claim evidence retrieval: cosine ranking of context chunks and
//! greedy prefix packing of the best chunks into the NLI window.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nli::EntailmentScores;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Rejects empty vectors and non-finite components.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::contract("embedding vector must have positive dimension"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!("embedding component {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

/// Token budget for one NLI call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingBudget {
    pub window: usize,
    /// Special tokens of the encoder.
    pub fixed_reserve: usize,
    /// Separator tokens around each evidence chunk.
    pub per_chunk_reserve: usize,
    pub k_target: usize,
    pub k_max: usize,
    pub context_overlap: usize,
    pub context_chunk_min: usize,
    pub context_chunk_max: usize,
}

impl Default for PackingBudget {
    fn default() -> Self {
        Self {
            window: 512,
            fixed_reserve: 8,
            per_chunk_reserve: 2,
            k_target: 4,
            k_max: 8,
            context_overlap: 12,
            context_chunk_min: 32,
            context_chunk_max: 160,
        }
    }
}

impl PackingBudget {
    pub fn validate(&self) -> Result<()> {
        if self.k_target == 0 || self.k_max == 0 {
            return Err(Error::config("k_target and k_max must be positive"));
        }
        if self.k_target > self.k_max {
            return Err(Error::config("k_target must not exceed k_max"));
        }
        if self.context_chunk_min == 0 || self.context_chunk_min > self.context_chunk_max {
            return Err(Error::config("context chunk bounds must satisfy 1 <= min <= max"));
        }
        if self.window <= self.fixed_reserve + self.per_chunk_reserve + self.context_chunk_min {
            return Err(Error::config(
                "window must exceed fixed_reserve + per_chunk_reserve + context_chunk_min",
            ));
        }
        Ok(())
    }

    /// Largest claim that still leaves room for one minimum-size chunk.
    pub fn max_claim_tokens(&self) -> usize {
        self.window
            .saturating_sub(self.fixed_reserve + self.per_chunk_reserve + self.context_chunk_min)
    }

    /// Tokens used by a claim plus the given evidence chunks.
    pub fn packed_tokens(&self, claim_tokens: usize, chunk_tokens: impl IntoIterator<Item = usize>) -> usize {
        claim_tokens
            + self.fixed_reserve
            + chunk_tokens
                .into_iter()
                .map(|t| t + self.per_chunk_reserve)
                .sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedChunk {
    pub chunk: usize,
    pub similarity: f64,
}

/// Evidence retrieved for one claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimEvidence {
    pub claim_index: usize,
    pub ranked_chunks: Vec<RankedChunk>,
    pub selected_k: usize,
    /// Set when the top chunk alone overflowed and must be cut to this many
    /// budgeted tokens.
    pub truncate_top_to: Option<usize>,
    pub entailment: Vec<EntailmentScores>,
}

impl ClaimEvidence {
    pub fn selected(&self) -> &[RankedChunk] {
        &self.ranked_chunks[..self.selected_k]
    }
}

/// Cosine similarity; zero vectors have similarity 0.
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::contract(format!(
            "dimension mismatch: {} vs {}",
            u.dim(),
            v.dim()
        )));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = u.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Descending similarity, ties broken by ascending chunk index.
pub fn rank_order(a: &RankedChunk, b: &RankedChunk) -> Ordering {
    b.similarity.total_cmp(&a.similarity).then(a.chunk.cmp(&b.chunk))
}

pub fn rank_chunks(claim: &EmbeddingVector, chunks: &[EmbeddingVector]) -> Result<Vec<RankedChunk>> {
    if chunks.is_empty() {
        return Err(Error::contract("cannot rank an empty chunk list"));
    }
    let mut ranked = chunks
        .iter()
        .enumerate()
        .map(|(chunk, v)| {
            Ok(RankedChunk {
                chunk,
                similarity: cosine_similarity(claim, v)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(rank_order);
    Ok(ranked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub k: usize,
    pub truncate_top_to: Option<usize>,
}

/// Largest prefix of the ranking (at most `k_max` chunks) that fits the
/// window next to the claim. `ranked_tokens` are budgeted token counts in
/// rank order. If even the top chunk overflows it is selected alone, to be
/// truncated to `truncate_top_to` tokens.
pub fn select_k(budget: &PackingBudget, claim_tokens: usize, ranked_tokens: &[usize]) -> Result<Selection> {
    if claim_tokens + budget.fixed_reserve + budget.per_chunk_reserve >= budget.window {
        return Err(Error::contract(format!(
            "claim of {claim_tokens} tokens leaves no room for evidence"
        )));
    }
    let mut used = claim_tokens + budget.fixed_reserve;
    let mut k = 0;
    for &tokens in ranked_tokens.iter().take(budget.k_max) {
        let next = used + tokens + budget.per_chunk_reserve;
        if next > budget.window {
            break;
        }
        used = next;
        k += 1;
    }
    if k == 0 && !ranked_tokens.is_empty() {
        let room = budget.window - claim_tokens - budget.fixed_reserve - budget.per_chunk_reserve;
        return Ok(Selection {
            k: 1,
            truncate_top_to: Some(room),
        });
    }
    Ok(Selection {
        k,
        truncate_top_to: None,
    })
}
