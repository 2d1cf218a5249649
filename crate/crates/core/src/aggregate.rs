//! Turning entailment probabilities into claim and response verdicts.
//!
//! A claim's grounding score is its best entailment probability over the
//! retrieved evidence. The response score is a soft minimum of the claim
//! scores, so a single ungrounded claim pulls the whole response down.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimReducer {
    #[default]
    Max,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseReducer {
    /// Exponential mean `-(1/β)·ln(mean(exp(-β·g)))`: monotone in every
    /// claim score, strictly below the arithmetic mean for β > 0.
    #[default]
    ExpMean,
    /// Weighted mean with weights `exp(-β·g)`. Converges to the minimum
    /// exponentially fast but is not monotone for large β.
    WeightedSoftmin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub beta: f64,
    pub theta: f64,
    #[serde(default)]
    pub claim_reducer: ClaimReducer,
    #[serde(default)]
    pub response_reducer: ResponseReducer,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            beta: 10.0,
            theta: 0.5,
            claim_reducer: ClaimReducer::Max,
            response_reducer: ResponseReducer::ExpMean,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::config(format!(
                "beta must be a finite value >= 0, got {}",
                self.beta
            )));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::config(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimLabel {
    Grounded,
    Hallucinated,
    NonFactualUnscored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseLabel {
    Grounded,
    Hallucinated,
    NoFactualClaims,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRef {
    /// Index into the request's context chunks.
    pub chunk: usize,
    pub document: usize,
    pub similarity: f64,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimVerdict {
    pub claim_index: usize,
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub tokens: usize,
    pub factual_prob: f64,
    pub grounding_score: Option<f64>,
    pub label: ClaimLabel,
    pub best_chunk_index: Option<usize>,
    /// Selected evidence in rank order.
    pub evidence: Vec<EvidenceRef>,
    /// Entailment probabilities: one per evidence chunk (pairwise) or a
    /// single entry (packed).
    pub entailment: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseVerdict {
    pub response_score: f64,
    pub label: ResponseLabel,
    pub claim_verdicts: Vec<ClaimVerdict>,
    pub warnings: Vec<String>,
}

/// Best entailment over a claim's evidence, with the position of the best
/// entry (first on ties).
pub fn claim_score(entailment: &[f64]) -> Result<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, &p) in entailment.iter().enumerate() {
        if best.is_none_or(|(b, _)| p > b) {
            best = Some((p, i));
        }
    }
    best.ok_or_else(|| Error::contract("claim score needs at least one entailment score"))
}

pub fn claim_label(score: f64, config: &AggregationConfig) -> ClaimLabel {
    if score < config.theta {
        ClaimLabel::Hallucinated
    } else {
        ClaimLabel::Grounded
    }
}

pub fn response_score(scores: &[f64], config: &AggregationConfig) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::contract("response score needs at least one claim score"));
    }
    Ok(match config.response_reducer {
        ResponseReducer::ExpMean => exp_mean(scores, config.beta),
        ResponseReducer::WeightedSoftmin => weighted_softmin(scores, config.beta),
    })
}

fn arithmetic_mean(scores: &[f64]) -> f64 {
    scores.iter().sum::<f64>() / scores.len() as f64
}

fn bounds(scores: &[f64]) -> (f64, f64) {
    scores.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &g| {
        (lo.min(g), hi.max(g))
    })
}

pub fn exp_mean(scores: &[f64], beta: f64) -> f64 {
    let (lo, hi) = bounds(scores);
    if lo == hi {
        return lo;
    }
    if beta == 0.0 {
        return arithmetic_mean(scores).clamp(lo, hi);
    }
    // Shift by the minimum so every exponent is <= 0 and the sum is >= 1/n.
    let mean_exp = scores.iter().map(|&g| (-beta * (g - lo)).exp()).sum::<f64>() / scores.len() as f64;
    (lo - mean_exp.ln() / beta).clamp(lo, hi)
}

pub fn weighted_softmin(scores: &[f64], beta: f64) -> f64 {
    let (lo, hi) = bounds(scores);
    if lo == hi {
        return lo;
    }
    if beta == 0.0 {
        return arithmetic_mean(scores).clamp(lo, hi);
    }
    let (num, den) = scores.iter().fold((0.0, 0.0), |(num, den), &g| {
        let w = (-beta * (g - lo)).exp();
        (num + w * g, den + w)
    });
    (num / den).clamp(lo, hi)
}

/// Final verdict. With no scored claims the response is labelled
/// `no-factual-claims` with score 1.0.
pub fn classify_response(
    score: Option<f64>,
    config: &AggregationConfig,
    claim_verdicts: Vec<ClaimVerdict>,
    mut warnings: Vec<String>,
) -> ResponseVerdict {
    match score {
        None => {
            warnings.push("no factual claims to score".to_string());
            ResponseVerdict {
                response_score: 1.0,
                label: ResponseLabel::NoFactualClaims,
                claim_verdicts,
                warnings,
            }
        }
        Some(s) => ResponseVerdict {
            response_score: s,
            label: if s < config.theta {
                ResponseLabel::Hallucinated
            } else {
                ResponseLabel::Grounded
            },
            claim_verdicts,
            warnings,
        },
    }
}
