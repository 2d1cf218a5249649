//! Entailment scoring of claim/evidence pairs.
//!
//! Evidence is always the premise and the claim the hypothesis. Only the
//! entailment probability is consumed downstream; neutral and contradiction
//! are not distinguished.

use std::borrow::Cow;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::backends::NliBackend;
use crate::chunker::Chunk;
use crate::error::{Error, Result};
use crate::retrieval::{ClaimEvidence, PackingBudget};
use crate::tokenize::TokenCounter;

const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntailmentScores {
    #[serde(rename = "entail")]
    pub p_entail: f64,
    #[serde(rename = "neutral")]
    pub p_neutral: f64,
    #[serde(rename = "contradict")]
    pub p_contradict: f64,
}

impl EntailmentScores {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.p_entail, self.p_neutral, self.p_contradict];
        if parts.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
            return Err(Error::Protocol(format!("NLI probabilities out of range: {self:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Protocol(format!("NLI probabilities sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliPair {
    pub premise: String,
    pub hypothesis: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// One NLI call per selected chunk.
    #[default]
    Pairwise,
    /// One NLI call whose premise joins all selected chunks in document order.
    Packed,
}

/// Calls the backend and checks arity and normalization of its answer.
pub fn score_pairs(backend: &dyn NliBackend, pairs: &[NliPair]) -> Result<Vec<EntailmentScores>> {
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let scores = backend.score(pairs)?;
    if scores.len() != pairs.len() {
        return Err(Error::Protocol(format!(
            "NLI backend returned {} scores for {} pairs",
            scores.len(),
            pairs.len()
        )));
    }
    for s in &scores {
        s.validate()?;
    }
    Ok(scores)
}

pub fn score_pair(
    backend: &dyn NliBackend,
    counter: &TokenCounter,
    budget: &PackingBudget,
    premise: &str,
    hypothesis: &str,
) -> Result<EntailmentScores> {
    let used = counter.budgeted_count(premise) + counter.budgeted_count(hypothesis) + budget.fixed_reserve;
    if used > budget.window {
        return Err(Error::contract(format!(
            "NLI input of {used} tokens exceeds the {}-token window",
            budget.window
        )));
    }
    let pair = NliPair {
        premise: premise.to_string(),
        hypothesis: hypothesis.to_string(),
    };
    score_pairs(backend, std::slice::from_ref(&pair))
        .map(|mut s| s.remove(0))
        .map_err(|e| {
            e.with_context(format!(
                "premise {:?} / hypothesis {:?}",
                clip(premise),
                clip(hypothesis)
            ))
        })
}

/// Builds the NLI inputs for one claim's selected evidence.
pub fn build_pairs(
    mode: ScoringMode,
    counter: &TokenCounter,
    budget: &PackingBudget,
    claim_text: &str,
    evidence: &ClaimEvidence,
    chunks: &[Chunk],
) -> Result<Vec<NliPair>> {
    if evidence.selected_k == 0 {
        return Err(Error::contract("claim has no selected evidence"));
    }
    let premises: Vec<(usize, &str)> = evidence
        .selected()
        .iter()
        .enumerate()
        .map(|(rank, r)| {
            let chunk = chunks
                .get(r.chunk)
                .ok_or_else(|| Error::contract(format!("chunk index {} out of range", r.chunk)))?;
            let text = match (rank, evidence.truncate_top_to) {
                (0, Some(limit)) => counter.truncate_to_budget(&chunk.text, limit),
                _ => chunk.text.as_str(),
            };
            Ok((r.chunk, text))
        })
        .collect::<Result<_>>()?;

    let claim_tokens = counter.budgeted_count(claim_text);
    let used = budget.packed_tokens(claim_tokens, premises.iter().map(|(_, p)| counter.budgeted_count(p)));
    if used > budget.window {
        return Err(Error::contract(format!(
            "packed evidence for claim {} uses {used} of {} tokens",
            evidence.claim_index, budget.window
        )));
    }

    Ok(match mode {
        ScoringMode::Pairwise => premises
            .into_iter()
            .map(|(_, premise)| NliPair {
                premise: premise.to_string(),
                hypothesis: claim_text.to_string(),
            })
            .collect(),
        ScoringMode::Packed => {
            let mut ordered = premises;
            ordered.sort_by_key(|(chunk, _)| *chunk);
            let premise = ordered.iter().map(|(_, p)| *p).collect::<Vec<_>>().join("\n");
            vec![NliPair {
                premise,
                hypothesis: claim_text.to_string(),
            }]
        }
    })
}

/// Scores the selected evidence of one claim and stores the result in
/// `evidence.entailment` (rank order for pairwise, one entry for packed).
pub fn score_claim(
    backend: &dyn NliBackend,
    mode: ScoringMode,
    counter: &TokenCounter,
    budget: &PackingBudget,
    claim_text: &str,
    mut evidence: ClaimEvidence,
    chunks: &[Chunk],
) -> Result<ClaimEvidence> {
    let pairs = build_pairs(mode, counter, budget, claim_text, &evidence, chunks)?;
    evidence.entailment =
        score_pairs(backend, &pairs).map_err(|e| e.with_context(format!("claim {}", evidence.claim_index)))?;
    Ok(evidence)
}

fn clip(s: &str) -> String {
    s.chars().take(40).collect()
}

/// Words ignored by the containment oracle.
pub const ORACLE_STOPWORDS: [&str; 30] = [
    "a", "an", "the", "and", "or", "but", "of", "to", "in", "on", "at", "by", "for", "with", "from", "is", "are",
    "was", "were", "be", "been", "it", "this", "that", "as", "has", "have", "had", "its", "which",
];

/// Lowercased alphanumeric tokens minus stopwords.
pub fn content_tokens(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !ORACLE_STOPWORDS.contains(&w.as_str()))
        .collect()
}

/// Deterministic NLI stand-in: entailment is the fraction of the
/// hypothesis's content tokens that also occur in the premise.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleNli;

impl OracleNli {
    pub fn entailment(premise: &str, hypothesis: &str) -> EntailmentScores {
        let hyp = content_tokens(hypothesis);
        let p_entail = if hyp.is_empty() {
            1.0
        } else {
            let mut found: HashSet<&str> = HashSet::with_capacity(hyp.len());
            for word in premise.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
                let word = lowercase(word);
                if let Some(t) = hyp.get(word.as_ref()) {
                    found.insert(t.as_str());
                    if found.len() == hyp.len() {
                        break;
                    }
                }
            }
            found.len() as f64 / hyp.len() as f64
        };
        EntailmentScores {
            p_entail,
            p_neutral: 1.0 - p_entail,
            p_contradict: 0.0,
        }
    }
}

fn lowercase(word: &str) -> Cow<'_, str> {
    if word.chars().any(|c| !c.is_lowercase() && c.is_alphabetic()) {
        Cow::Owned(word.to_lowercase())
    } else {
        Cow::Borrowed(word)
    }
}

impl NliBackend for OracleNli {
    fn score(&self, pairs: &[NliPair]) -> Result<Vec<EntailmentScores>> {
        Ok(pairs
            .iter()
            .map(|p| Self::entailment(&p.premise, &p.hypothesis))
            .collect())
    }
}
