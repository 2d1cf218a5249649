//! Retrieval-grounded hallucination detection.
//!
//! A model output is split into claims, non-factual claims are filtered
//! out, each remaining claim retrieves its most similar context chunks, an
//! NLI model scores entailment against them and the per-claim scores are
//! folded into one response-level score.
//!
//! ```
//! use groundcheck::{detect, Backends, DetectionRequest, PipelineConfig, ResponseLabel};
//!
//! let context = "The tower was completed in 1889 for the World's Fair.";
//! let req = DetectionRequest::new(vec![context.to_string()], context);
//! let verdict = detect(&req, &PipelineConfig::default(), &Backends::builtin()).unwrap();
//! assert_eq!(verdict.label, ResponseLabel::Grounded);
//! ```

pub mod aggregate;
pub mod backends;
pub mod bench;
pub mod chunker;
pub mod claim_filter;
pub mod error;
pub mod nli;
pub mod pipeline;
pub mod retrieval;
pub mod tokenize;

pub use aggregate::{AggregationConfig, ClaimLabel, ClaimVerdict, ResponseLabel, ResponseReducer, ResponseVerdict};
pub use backends::{BackendDescriptor, BackendKind, Backends};
pub use chunker::{chunk_context, chunk_text, Chunk, ChunkerConfig};
pub use claim_filter::{Claim, HeuristicClassifier};
pub use error::{Error, Result};
pub use nli::{EntailmentScores, NliPair, ScoringMode};
pub use pipeline::{detect, ConfigOverrides, DetectionRequest, Pipeline, PipelineConfig};
pub use retrieval::{EmbeddingVector, PackingBudget};
pub use tokenize::TokenCounter;
