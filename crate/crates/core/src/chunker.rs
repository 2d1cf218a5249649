//! Recursive, token-aware text chunker.
//!
//! Text is split at the coarsest separator level present (paragraphs, lines,
//! sentences, clauses, words, then single characters). Adjacent pieces are
//! merged greedily while the merged span stays within `s_max` tokens; a piece
//! that is still too large descends to the next level. Chunks are always
//! verbatim, whitespace-trimmed substrings of the source.
//!
//! The same machinery splits model outputs into claims. For claims the
//! paragraph, line and sentence levels are hard boundaries: pieces split at
//! those levels are never merged back together, so a claim is at most one
//! sentence (long sentences are cut further at clause or word level).

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::PackingBudget;
use crate::tokenize::{builtin_token_spans, TokenCounter};

pub const DEFAULT_CLAIM_S_MAX: usize = 60;

/// Number of leading hierarchy levels (paragraph, line, sentence) that claim
/// splitting never merges across.
pub const CLAIM_HARD_BOUNDARY_LEVELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparatorLevel {
    /// Split after any occurrence of one of these patterns.
    Patterns(Vec<String>),
    /// Split into single characters.
    Chars,
}

impl SeparatorLevel {
    fn patterns(ps: &[&str]) -> Self {
        SeparatorLevel::Patterns(ps.iter().map(|p| p.to_string()).collect())
    }
}

pub fn default_hierarchy() -> Vec<SeparatorLevel> {
    vec![
        SeparatorLevel::patterns(&["\n\n"]),
        SeparatorLevel::patterns(&["\n"]),
        SeparatorLevel::patterns(&[". ", "! ", "? "]),
        SeparatorLevel::patterns(&["; "]),
        SeparatorLevel::patterns(&[", "]),
        SeparatorLevel::patterns(&[" "]),
        SeparatorLevel::Chars,
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkerConfig {
    pub s_max: usize,
    pub o_max: usize,
    pub separators: Vec<SeparatorLevel>,
    /// Leading separator levels whose pieces are never merged together.
    #[serde(default)]
    pub hard_boundary_levels: usize,
}

impl Default for ChunkerConfig {
    fn default() -> Self {
        Self::claims()
    }
}

impl ChunkerConfig {
    /// Plain recursive chunking with greedy merging at every level.
    pub fn new(s_max: usize, o_max: usize) -> Self {
        Self {
            s_max,
            o_max,
            separators: default_hierarchy(),
            hard_boundary_levels: 0,
        }
    }

    /// Claim splitting: 60-token maximum, no overlap, sentence-bounded.
    pub fn claims() -> Self {
        Self::claims_with_max(DEFAULT_CLAIM_S_MAX)
    }

    pub fn claims_with_max(s_max: usize) -> Self {
        Self {
            s_max,
            o_max: 0,
            separators: default_hierarchy(),
            hard_boundary_levels: CLAIM_HARD_BOUNDARY_LEVELS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s_max < 1 {
            return Err(Error::config("s_max must be at least 1"));
        }
        if self.o_max >= self.s_max {
            return Err(Error::config(format!(
                "o_max ({}) must be smaller than s_max ({})",
                self.o_max, self.s_max
            )));
        }
        match self.separators.last() {
            Some(SeparatorLevel::Chars) => {}
            _ => {
                return Err(Error::config(
                    "separator hierarchy must end with the single-character level",
                ))
            }
        }
        for level in &self.separators {
            if let SeparatorLevel::Patterns(ps) = level {
                if ps.is_empty() || ps.iter().any(|p| p.is_empty()) {
                    return Err(Error::config("separator patterns must be non-empty"));
                }
            }
        }
        Ok(())
    }
}

/// A verbatim span of a source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub index: usize,
    /// Character offset (inclusive) into the source.
    pub start: usize,
    /// Character offset (exclusive) into the source.
    pub end: usize,
    pub tokens: usize,
    pub text: String,
    #[serde(skip)]
    pub byte_span: Range<usize>,
}

impl Chunk {
    pub fn char_span(&self) -> Range<usize> {
        self.start..self.end
    }
}

pub fn chunk_text(config: &ChunkerConfig, counter: &TokenCounter, text: &str) -> Result<Vec<Chunk>> {
    config.validate()?;
    let Some(root) = trim_span(text, 0..text.len()) else {
        return Ok(Vec::new());
    };
    let splitter = Splitter {
        config,
        counter,
        text,
        limit: config.s_max - config.o_max,
    };
    let mut spans = Vec::new();
    splitter.split(root, 0, &mut spans);
    let spans = if config.o_max > 0 {
        splitter.add_overlap(&spans)
    } else {
        spans
    };
    Ok(build_chunks(counter, text, spans))
}

/// One chunk per non-blank paragraph, with no size limit.
pub fn chunk_paragraphs(counter: &TokenCounter, text: &str) -> Vec<Chunk> {
    let spans = split_at_patterns(text, 0..text.len(), &["\n\n".to_string()]);
    build_chunks(counter, text, spans)
}

/// Context chunk size (in budgeted tokens) for a claim of `claim_tokens`.
pub fn context_chunk_size(budget: &PackingBudget, claim_tokens: usize) -> Result<usize> {
    if claim_tokens > budget.max_claim_tokens() {
        return Err(Error::ClaimOverflow {
            claim_tokens,
            window: budget.window,
            reserve: budget.fixed_reserve + budget.per_chunk_reserve + budget.context_chunk_min,
        });
    }
    let available = budget.window - budget.fixed_reserve;
    let per_chunk = (available - claim_tokens) / budget.k_target.max(1);
    let size = per_chunk.saturating_sub(budget.per_chunk_reserve);
    Ok(size.clamp(budget.context_chunk_min, budget.context_chunk_max))
}

/// Chunks a context document at a size calibrated so that about
/// `budget.k_target` chunks fit next to the claim in the NLI window.
pub fn chunk_context(
    counter: &TokenCounter,
    document: &str,
    claim_tokens: usize,
    budget: &PackingBudget,
) -> Result<Vec<Chunk>> {
    budget.validate()?;
    let size = context_chunk_size(budget, claim_tokens)?;
    // `size` is in budgeted units; chunk_text measures raw counts.
    let s_max = ((size as f64 / counter.safety_margin()).floor() as usize).max(1);
    let o_max = budget.context_overlap.min(s_max / 2);
    chunk_text(&ChunkerConfig::new(s_max, o_max), counter, document)
}

struct Splitter<'a> {
    config: &'a ChunkerConfig,
    counter: &'a TokenCounter,
    text: &'a str,
    /// Size of a chunk before overlap is added.
    limit: usize,
}

impl Splitter<'_> {
    fn count(&self, span: &Range<usize>) -> usize {
        self.counter.count(&self.text[span.clone()])
    }

    /// `span` is trimmed and non-empty. Emits spans that each fit `s_max`.
    fn split(&self, span: Range<usize>, level: usize, out: &mut Vec<Range<usize>>) {
        let hard = level < self.config.hard_boundary_levels;
        if !hard && self.count(&span) <= self.limit {
            out.push(span);
            return;
        }
        let Some(sep) = self.config.separators.get(level) else {
            // Past the character level: nothing left to split.
            out.push(span);
            return;
        };
        let pieces = match sep {
            SeparatorLevel::Patterns(ps) => split_at_patterns(self.text, span.clone(), ps),
            SeparatorLevel::Chars => split_chars(self.text, span.clone()),
        };
        if pieces.len() <= 1 {
            self.split(span, level + 1, out);
            return;
        }
        if hard {
            for piece in pieces {
                self.split(piece, level + 1, out);
            }
            return;
        }
        let mut fitted = Vec::with_capacity(pieces.len());
        for piece in pieces {
            if self.count(&piece) <= self.limit {
                fitted.push(piece);
            } else {
                self.split(piece, level + 1, &mut fitted);
            }
        }
        self.merge(fitted, out);
    }

    fn merge(&self, pieces: Vec<Range<usize>>, out: &mut Vec<Range<usize>>) {
        let mut iter = pieces.into_iter();
        let Some(mut current) = iter.next() else {
            return;
        };
        let mut tokens = self.count(&current);
        for piece in iter {
            let merged = self.counter.count_concat(
                self.text,
                current.start..piece.end,
                current.end,
                || tokens,
                || self.count(&(current.end..piece.end)),
            );
            if merged <= self.limit {
                current.end = piece.end;
                tokens = merged;
            } else {
                tokens = self.count(&piece);
                out.push(std::mem::replace(&mut current, piece));
            }
        }
        out.push(current);
    }

    /// Extends each chunk backwards into its predecessor by up to `o_max`
    /// tokens, keeping the chunk within `s_max`.
    fn add_overlap(&self, spans: &[Range<usize>]) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(spans.len());
        for (i, span) in spans.iter().enumerate() {
            if i == 0 {
                out.push(span.clone());
                continue;
            }
            let prev = &spans[i - 1];
            let tail = &self.text[prev.start..span.start];
            let starts: Vec<usize> = builtin_token_spans(tail)
                .map(|r| prev.start + r.start)
                .filter(|&s| s > prev.start)
                .collect();
            let span_tokens = self.count(span);
            let mut start = span.start;
            let mut overlap = 0;
            for &candidate in starts.iter().rev() {
                let with = self.counter.count_concat(
                    self.text,
                    candidate..span.start,
                    start,
                    || self.count(&(candidate..start)),
                    || overlap,
                );
                let total =
                    self.counter
                        .count_concat(self.text, candidate..span.end, span.start, || with, || span_tokens);
                if with > self.config.o_max || total > self.config.s_max {
                    break;
                }
                start = candidate;
                overlap = with;
            }
            out.push(start..span.end);
        }
        out
    }
}

fn trim_span(text: &str, span: Range<usize>) -> Option<Range<usize>> {
    let slice = &text[span.clone()];
    let trimmed_start = slice.trim_start();
    if trimmed_start.is_empty() {
        return None;
    }
    let start = span.start + (slice.len() - trimmed_start.len());
    let end = start + trimmed_start.trim_end().len();
    Some(start..end)
}

/// Splits after every pattern occurrence, trimming pieces and dropping blanks.
fn split_at_patterns(text: &str, span: Range<usize>, patterns: &[String]) -> Vec<Range<usize>> {
    let slice = &text[span.clone()];
    let mut cuts: Vec<usize> = patterns
        .iter()
        .flat_map(|p| slice.match_indices(p.as_str()).map(move |(i, m)| i + m.len()))
        .collect();
    cuts.sort_unstable();
    cuts.dedup();

    let mut pieces = Vec::with_capacity(cuts.len() + 1);
    let mut last = 0;
    for cut in cuts.into_iter().chain(std::iter::once(slice.len())) {
        if cut > last {
            if let Some(piece) = trim_span(text, span.start + last..span.start + cut) {
                pieces.push(piece);
            }
            last = cut;
        }
    }
    pieces
}

fn split_chars(text: &str, span: Range<usize>) -> Vec<Range<usize>> {
    text[span.clone()]
        .char_indices()
        .filter(|(_, c)| !c.is_whitespace())
        .map(|(i, c)| span.start + i..span.start + i + c.len_utf8())
        .collect()
}

fn build_chunks(counter: &TokenCounter, text: &str, spans: Vec<Range<usize>>) -> Vec<Chunk> {
    let offsets = CharOffsets::new(text);
    spans
        .into_iter()
        .enumerate()
        .map(|(index, span)| {
            let slice = &text[span.clone()];
            Chunk {
                index,
                start: offsets.char_at(span.start),
                end: offsets.char_at(span.end),
                tokens: counter.count(slice),
                text: slice.to_string(),
                byte_span: span,
            }
        })
        .collect()
}

/// Byte offset to character offset conversion.
pub(crate) struct CharOffsets {
    boundaries: Vec<usize>,
}

impl CharOffsets {
    pub(crate) fn new(text: &str) -> Self {
        Self {
            boundaries: text.char_indices().map(|(i, _)| i).collect(),
        }
    }

    pub(crate) fn char_at(&self, byte: usize) -> usize {
        self.boundaries.partition_point(|&b| b < byte)
    }
}
