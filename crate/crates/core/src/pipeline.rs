//! End-to-end detection for one (context documents, output) pair.
//!
//! 1. split the output into claims;
//! 2. drop non-factual claims;
//! 3. chunk the joined context at a size calibrated to the claim length;
//! 4. embed, rank and pack the best chunks for each claim;
//! 5. score claim/chunk entailment;
//! 6. aggregate into claim and response verdicts.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{
    claim_label, claim_score, classify_response, response_score, AggregationConfig, ClaimLabel, ClaimVerdict,
    EvidenceRef, ResponseVerdict,
};
use crate::backends::Backends;
use crate::chunker::{chunk_context, context_chunk_size, Chunk, ChunkerConfig};
use crate::claim_filter::{
    classify_factual, filter_claims, split_output_into_claims, Claim, DEFAULT_FACTUAL_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::nli::{score_claim, ScoringMode};
use crate::retrieval::{rank_chunks, select_k, ClaimEvidence, EmbeddingVector, PackingBudget};
use crate::tokenize::{TokenCounter, DEFAULT_SAFETY_MARGIN};

pub const CONTEXT_JOINER: &str = "\n\n";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigOverrides {
    pub beta: Option<f64>,
    pub theta: Option<f64>,
    pub scoring_mode: Option<ScoringMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRequest {
    pub context_documents: Vec<String>,
    pub output_text: String,
    #[serde(default)]
    pub overrides: Option<ConfigOverrides>,
}

impl DetectionRequest {
    pub fn new(context_documents: Vec<String>, output_text: impl Into<String>) -> Self {
        Self {
            context_documents,
            output_text: output_text.into(),
            overrides: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub claim_chunker: ChunkerConfig,
    pub budget: PackingBudget,
    pub factual_threshold: f64,
    pub aggregation: AggregationConfig,
    pub scoring_mode: ScoringMode,
    /// Multiplier on builtin token counts for every window check.
    pub token_margin: f64,
    /// Claims are grouped into bands of this many tokens; the context is
    /// chunked once per band.
    pub claim_band_width: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            claim_chunker: ChunkerConfig::claims(),
            budget: PackingBudget::default(),
            factual_threshold: DEFAULT_FACTUAL_THRESHOLD,
            aggregation: AggregationConfig::default(),
            scoring_mode: ScoringMode::Pairwise,
            token_margin: DEFAULT_SAFETY_MARGIN,
            claim_band_width: 16,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.claim_chunker.validate()?;
        if self.claim_chunker.o_max != 0 {
            return Err(Error::config("claim chunker must not overlap"));
        }
        self.budget.validate()?;
        self.aggregation.validate()?;
        if !(0.0..=1.0).contains(&self.factual_threshold) {
            return Err(Error::config("factual_threshold must lie in [0, 1]"));
        }
        if !self.token_margin.is_finite() || self.token_margin < 1.0 {
            return Err(Error::config("token_margin must be >= 1.0"));
        }
        if self.claim_band_width == 0 {
            return Err(Error::config("claim_band_width must be positive"));
        }
        Ok(())
    }

    pub fn with_overrides(&self, overrides: &ConfigOverrides) -> Self {
        let mut cfg = self.clone();
        if let Some(beta) = overrides.beta {
            cfg.aggregation.beta = beta;
        }
        if let Some(theta) = overrides.theta {
            cfg.aggregation.theta = theta;
        }
        if let Some(mode) = overrides.scoring_mode {
            cfg.scoring_mode = mode;
        }
        cfg
    }

    pub fn counter(&self) -> TokenCounter {
        TokenCounter::builtin().with_margin(self.token_margin)
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    backends: Backends,
    parallel: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, backends: Backends) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            backends,
            parallel: false,
        })
    }

    /// Fan per-claim retrieval and scoring out over the rayon pool.
    pub fn parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn detect(&self, request: &DetectionRequest) -> Result<ResponseVerdict> {
        match &request.overrides {
            Some(o) => {
                let config = self.config.with_overrides(o);
                config.validate()?;
                run(&config, &self.backends, request, self.parallel)
            }
            None => run(&self.config, &self.backends, request, self.parallel),
        }
    }
}

pub fn detect(request: &DetectionRequest, config: &PipelineConfig, backends: &Backends) -> Result<ResponseVerdict> {
    Pipeline::new(config.clone(), backends.clone())?.detect(request)
}

/// Context chunks for one claim band.
struct BandContext {
    chunks: Vec<Chunk>,
    vectors: Vec<EmbeddingVector>,
    budgeted: Vec<usize>,
}

/// A factual claim prepared for scoring.
struct ScoredClaim<'a> {
    claim: &'a Claim,
    text: String,
    tokens: usize,
    band: usize,
}

struct ClaimOutcome {
    verdict: ClaimVerdict,
    score: f64,
    warnings: Vec<String>,
}

fn run(
    config: &PipelineConfig,
    backends: &Backends,
    request: &DetectionRequest,
    parallel: bool,
) -> Result<ResponseVerdict> {
    if request.context_documents.is_empty() {
        return Err(Error::contract("request needs at least one context document"));
    }
    let counter = config.counter();
    let budget = &config.budget;
    let agg = &config.aggregation;

    let claims = split_output_into_claims(&config.claim_chunker, &counter, &request.output_text)?;
    let claims = classify_factual(backends.classifier.as_ref(), claims)?;
    let factual = filter_claims(&claims, config.factual_threshold)?;

    let mut warnings = Vec::new();
    let mut scored = Vec::with_capacity(factual.len());
    let max_claim = budget.max_claim_tokens();
    for claim in &factual {
        let mut text = claim.text.clone();
        let mut tokens = counter.budgeted_count(&text);
        if tokens > max_claim {
            text = counter.truncate_to_budget(&claim.text, max_claim).to_string();
            let cut = counter.budgeted_count(&text);
            warnings.push(format!(
                "claim {} truncated from {tokens} to {cut} tokens to fit the NLI window",
                claim.index
            ));
            tokens = cut;
        }
        scored.push(ScoredClaim {
            claim,
            text,
            tokens,
            band: tokens / config.claim_band_width,
        });
    }

    if scored.is_empty() {
        let verdicts = claims.iter().map(unscored_verdict).collect();
        return Ok(classify_response(None, agg, verdicts, warnings));
    }

    let context = request.context_documents.join(CONTEXT_JOINER);
    let doc_starts = document_starts(&request.context_documents);

    // One chunking per band, sized for the longest claim in it.
    let mut band_claim_tokens: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &scored {
        let e = band_claim_tokens.entry(s.band).or_default();
        *e = (*e).max(s.tokens);
    }
    // Bands whose claims yield the same chunk size share one context.
    let mut contexts: Vec<BandContext> = Vec::new();
    let mut by_size: BTreeMap<usize, usize> = BTreeMap::new();
    let mut bands: BTreeMap<usize, usize> = BTreeMap::new();
    for (&band, &claim_tokens) in &band_claim_tokens {
        let size = context_chunk_size(budget, claim_tokens)?;
        if let Some(&i) = by_size.get(&size) {
            bands.insert(band, i);
            continue;
        }
        let chunks = chunk_context(&counter, &context, claim_tokens, budget)?;
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        let vectors = if texts.is_empty() {
            Vec::new()
        } else {
            embed_checked(backends, &texts).map_err(|e| e.with_context("embedding context chunks"))?
        };
        let budgeted = chunks.iter().map(|c| counter.budgeted_count(&c.text)).collect();
        by_size.insert(size, contexts.len());
        bands.insert(band, contexts.len());
        contexts.push(BandContext {
            chunks,
            vectors,
            budgeted,
        });
    }

    let claim_texts: Vec<&str> = scored.iter().map(|s| s.text.as_str()).collect();
    let claim_vectors = embed_checked(backends, &claim_texts).map_err(|e| e.with_context("embedding claims"))?;

    let score_one = |(s, vector): (&ScoredClaim, &EmbeddingVector)| -> Result<ClaimOutcome> {
        score_single_claim(
            config,
            backends,
            &counter,
            s,
            vector,
            &contexts[bands[&s.band]],
            &doc_starts,
        )
    };
    let outcomes: Vec<ClaimOutcome> = if parallel {
        scored
            .par_iter()
            .zip(claim_vectors.par_iter())
            .map(score_one)
            .collect::<Result<_>>()?
    } else {
        scored
            .iter()
            .zip(claim_vectors.iter())
            .map(score_one)
            .collect::<Result<_>>()?
    };

    let mut by_claim: BTreeMap<usize, ClaimOutcome> = BTreeMap::new();
    for outcome in outcomes {
        by_claim.insert(outcome.verdict.claim_index, outcome);
    }
    let mut verdicts = Vec::with_capacity(claims.len());
    let mut scores = Vec::with_capacity(by_claim.len());
    for claim in &claims {
        match by_claim.remove(&claim.index) {
            Some(outcome) => {
                warnings.extend(outcome.warnings);
                scores.push(outcome.score);
                verdicts.push(outcome.verdict);
            }
            None => verdicts.push(unscored_verdict(claim)),
        }
    }
    let score = response_score(&scores, agg)?;
    Ok(classify_response(Some(score), agg, verdicts, warnings))
}

fn embed_checked(backends: &Backends, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
    let vectors = backends.embedder.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(Error::Protocol(format!(
            "embedder returned {} vectors for {} texts",
            vectors.len(),
            texts.len()
        )));
    }
    Ok(vectors)
}

fn score_single_claim(
    config: &PipelineConfig,
    backends: &Backends,
    counter: &TokenCounter,
    s: &ScoredClaim,
    vector: &EmbeddingVector,
    band: &BandContext,
    doc_starts: &[usize],
) -> Result<ClaimOutcome> {
    let agg = &config.aggregation;
    let budget = &config.budget;
    let index = s.claim.index;
    let mut warnings = Vec::new();

    if band.chunks.is_empty() {
        warnings.push(format!("claim {index}: context is empty, claim is unsupported"));
        let verdict = scored_verdict(s.claim, 0.0, agg, None, Vec::new(), vec![]);
        return Ok(ClaimOutcome {
            verdict,
            score: 0.0,
            warnings,
        });
    }
    if vector.is_zero() {
        warnings.push(format!("claim {index}: zero embedding, evidence ranked by position"));
    }

    let ranked = rank_chunks(vector, &band.vectors)?;
    let ranked_tokens: Vec<usize> = ranked.iter().map(|r| band.budgeted[r.chunk]).collect();
    let selection = select_k(budget, s.tokens, &ranked_tokens)?;
    if let Some(limit) = selection.truncate_top_to {
        warnings.push(format!(
            "claim {index}: top evidence chunk truncated to {limit} tokens to fit the NLI window"
        ));
    }
    let evidence = ClaimEvidence {
        claim_index: index,
        ranked_chunks: ranked,
        selected_k: selection.k,
        truncate_top_to: selection.truncate_top_to,
        entailment: Vec::new(),
    };
    let evidence = score_claim(
        backends.nli.as_ref(),
        config.scoring_mode,
        counter,
        budget,
        &s.text,
        evidence,
        &band.chunks,
    )?;

    let entailment: Vec<f64> = evidence.entailment.iter().map(|e| e.p_entail).collect();
    let (g, best) = claim_score(&entailment)?;
    let refs: Vec<EvidenceRef> = evidence
        .selected()
        .iter()
        .map(|r| {
            let chunk = &band.chunks[r.chunk];
            let document = doc_starts.partition_point(|&start| start <= chunk.start) - 1;
            EvidenceRef {
                chunk: r.chunk,
                document,
                similarity: r.similarity,
                start: chunk.start - doc_starts[document],
                end: chunk.end - doc_starts[document],
            }
        })
        .collect();
    let best_chunk = match config.scoring_mode {
        ScoringMode::Pairwise => Some(refs[best].chunk),
        ScoringMode::Packed => Some(refs[0].chunk),
    };
    let verdict = scored_verdict(s.claim, g, agg, best_chunk, refs, entailment);
    Ok(ClaimOutcome {
        verdict,
        score: g,
        warnings,
    })
}

fn scored_verdict(
    claim: &Claim,
    g: f64,
    agg: &AggregationConfig,
    best_chunk_index: Option<usize>,
    evidence: Vec<EvidenceRef>,
    entailment: Vec<f64>,
) -> ClaimVerdict {
    ClaimVerdict {
        claim_index: claim.index,
        text: claim.text.clone(),
        start: claim.start,
        end: claim.end,
        tokens: claim.tokens,
        factual_prob: claim.factual_prob.unwrap_or(1.0),
        grounding_score: Some(g),
        label: claim_label(g, agg),
        best_chunk_index,
        evidence,
        entailment,
    }
}

fn unscored_verdict(claim: &Claim) -> ClaimVerdict {
    ClaimVerdict {
        claim_index: claim.index,
        text: claim.text.clone(),
        start: claim.start,
        end: claim.end,
        tokens: claim.tokens,
        factual_prob: claim.factual_prob.unwrap_or(0.0),
        grounding_score: None,
        label: ClaimLabel::NonFactualUnscored,
        best_chunk_index: None,
        evidence: Vec::new(),
        entailment: Vec::new(),
    }
}

/// Character offset of each document within the joined context.
fn document_starts(docs: &[String]) -> Vec<usize> {
    let joiner = CONTEXT_JOINER.chars().count();
    let mut starts = Vec::with_capacity(docs.len());
    let mut offset = 0;
    for doc in docs {
        starts.push(offset);
        offset += doc.chars().count() + joiner;
    }
    starts
}
