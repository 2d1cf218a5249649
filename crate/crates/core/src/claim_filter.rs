//! Claims: splitting a model output into propositions and removing the
//! non-factual ones (titles, greetings, questions) before grounding.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::ClaimClassifier;
use crate::chunker::{chunk_text, ChunkerConfig};
use crate::error::{Error, Result};
use crate::tokenize::{count_builtin, TokenCounter};

pub const DEFAULT_FACTUAL_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub index: usize,
    pub text: String,
    /// Character offsets `[start, end)` into the output.
    pub start: usize,
    pub end: usize,
    pub tokens: usize,
    pub factual_prob: Option<f64>,
    #[serde(skip)]
    pub byte_span: Range<usize>,
}

/// Splits an output into claims with the (sentence-bounded) claim chunker.
pub fn split_output_into_claims(config: &ChunkerConfig, counter: &TokenCounter, output: &str) -> Result<Vec<Claim>> {
    if config.o_max != 0 {
        return Err(Error::config("claims must not overlap (o_max must be 0)"));
    }
    Ok(chunk_text(config, counter, output)?
        .into_iter()
        .map(|c| Claim {
            index: c.index,
            text: c.text,
            start: c.start,
            end: c.end,
            tokens: c.tokens,
            factual_prob: None,
            byte_span: c.byte_span,
        })
        .collect())
}

pub fn classify_factual(backend: &dyn ClaimClassifier, mut claims: Vec<Claim>) -> Result<Vec<Claim>> {
    if claims.is_empty() {
        return Ok(claims);
    }
    let texts: Vec<&str> = claims.iter().map(|c| c.text.as_str()).collect();
    let indices = || {
        let ids: Vec<String> = claims.iter().map(|c| c.index.to_string()).collect();
        format!("claims [{}]", ids.join(", "))
    };
    let probs = backend.classify(&texts).map_err(|e| e.with_context(indices()))?;
    if probs.len() != claims.len() {
        return Err(Error::Protocol(format!(
            "classifier returned {} probabilities for {} claims",
            probs.len(),
            claims.len()
        )));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Protocol(format!("factual probability {p} out of range")));
    }
    for (claim, p) in claims.iter_mut().zip(probs) {
        claim.factual_prob = Some(p);
    }
    Ok(claims)
}

/// Keeps claims with `factual_prob >= threshold`, in order.
pub fn filter_claims(claims: &[Claim], threshold: f64) -> Result<Vec<Claim>> {
    let mut kept = Vec::new();
    for claim in claims {
        let p = claim
            .factual_prob
            .ok_or_else(|| Error::contract(format!("claim {} has not been classified", claim.index)))?;
        if p >= threshold {
            kept.push(claim.clone());
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeuristicRule {
    /// Markdown heading, all-caps title, or short line ending in ':'.
    Heading,
    Greeting,
    Question,
    TooShort,
}

impl HeuristicRule {
    pub fn probability(self) -> f64 {
        match self {
            HeuristicRule::Heading | HeuristicRule::Greeting | HeuristicRule::Question => 0.0,
            HeuristicRule::TooShort => 0.2,
        }
    }
}

pub const DEFAULT_GREETINGS: [&str; 6] = [
    "hello",
    "hi there",
    "happy to help",
    "best regards",
    "let me know",
    "sure!",
];

const SHORT_LINE_TOKENS: usize = 6;
const MIN_FACTUAL_TOKENS: usize = 4;

/// Rule-table factual-claim classifier. First matching rule wins; a claim
/// matching none scores 1.0.
#[derive(Debug, Clone)]
pub struct HeuristicClassifier {
    greetings: Vec<String>,
}

impl Default for HeuristicClassifier {
    fn default() -> Self {
        Self::with_greetings(DEFAULT_GREETINGS.iter().map(|g| g.to_string()))
    }
}

impl HeuristicClassifier {
    pub fn with_greetings(greetings: impl IntoIterator<Item = String>) -> Self {
        Self {
            greetings: greetings
                .into_iter()
                .map(|g| g.trim().to_lowercase())
                .filter(|g| !g.is_empty())
                .collect(),
        }
    }

    /// Loads the greeting lexicon from a file with one phrase per line.
    pub fn from_lexicon_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::with_greetings(text.lines().map(str::to_string)))
    }

    pub fn greetings(&self) -> &[String] {
        &self.greetings
    }

    pub fn rule(&self, text: &str) -> Option<HeuristicRule> {
        let text = text.trim();
        let tokens = count_builtin(text);
        if is_heading(text, tokens) {
            return Some(HeuristicRule::Heading);
        }
        let lower = text.to_lowercase();
        if self.greetings.iter().any(|g| starts_with_phrase(&lower, g)) {
            return Some(HeuristicRule::Greeting);
        }
        if text.ends_with('?') {
            return Some(HeuristicRule::Question);
        }
        if tokens < MIN_FACTUAL_TOKENS {
            return Some(HeuristicRule::TooShort);
        }
        None
    }

    pub fn probability(&self, text: &str) -> f64 {
        self.rule(text).map_or(1.0, HeuristicRule::probability)
    }
}

impl ClaimClassifier for HeuristicClassifier {
    fn classify(&self, texts: &[&str]) -> Result<Vec<f64>> {
        Ok(texts.iter().map(|t| self.probability(t)).collect())
    }
}

fn is_heading(text: &str, tokens: usize) -> bool {
    if text.starts_with('#') {
        return true;
    }
    let has_letters = text.chars().any(char::is_alphabetic);
    let all_caps = has_letters && !text.chars().any(char::is_lowercase);
    if all_caps && tokens <= SHORT_LINE_TOKENS {
        return true;
    }
    text.ends_with(':') && tokens <= SHORT_LINE_TOKENS
}

fn starts_with_phrase(lower: &str, phrase: &str) -> bool {
    let Some(rest) = lower.strip_prefix(phrase) else {
        return false;
    };
    let phrase_ends_in_word = phrase.chars().last().is_some_and(char::is_alphanumeric);
    !phrase_ends_in_word || !rest.chars().next().is_some_and(char::is_alphanumeric)
}
