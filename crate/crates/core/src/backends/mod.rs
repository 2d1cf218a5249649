//! Pluggable model interfaces and their built-in implementations.
//!
//! Real models run out of process behind a small JSON-over-HTTP protocol
//! (see [`remote`]); the built-ins are deterministic test doubles.

mod mock;
pub mod remote;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::claim_filter::HeuristicClassifier;
use crate::error::{Error, Result};
use crate::nli::{EntailmentScores, NliPair, OracleNli};
use crate::retrieval::EmbeddingVector;

pub use mock::{MockEmbedder, MOCK_EMBEDDING_DIM};
pub use remote::RemoteClient;

pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;
}

pub trait NliBackend: Send + Sync {
    /// Scores each pair; the result has one entry per input, in order.
    fn score(&self, pairs: &[NliPair]) -> Result<Vec<EntailmentScores>>;
}

pub trait ClaimClassifier: Send + Sync {
    /// Probability that each text is a factual claim.
    fn classify(&self, texts: &[&str]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    MockEmbedder,
    OracleNli,
    HeuristicClaims,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_batch: usize,
    pub retries: usize,
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
}

impl BackendDescriptor {
    pub fn builtin(kind: BackendKind) -> Self {
        Self {
            kind,
            endpoint: None,
            timeout_ms: 10_000,
            max_batch: 32,
            retries: 2,
            backoff_base_ms: 250,
            max_in_flight: 8,
        }
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: Some(endpoint.into()),
            ..Self::builtin(BackendKind::Remote)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == BackendKind::Remote && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(Error::config("remote backend requires an endpoint"));
        }
        if self.timeout_ms == 0 {
            return Err(Error::config("backend timeout must be positive"));
        }
        if self.max_batch == 0 || self.max_in_flight == 0 {
            return Err(Error::config("max_batch and max_in_flight must be positive"));
        }
        Ok(())
    }
}

/// The three model roles used by the pipeline.
#[derive(Clone)]
pub struct Backends {
    pub embedder: Arc<dyn Embedder>,
    pub nli: Arc<dyn NliBackend>,
    pub classifier: Arc<dyn ClaimClassifier>,
}

impl Backends {
    /// Trigram mock embedder, containment oracle NLI and heuristic claim rules.
    pub fn builtin() -> Self {
        Self {
            embedder: Arc::new(MockEmbedder),
            nli: Arc::new(OracleNli),
            classifier: Arc::new(HeuristicClassifier::default()),
        }
    }

    /// All three roles served by one remote endpoint.
    pub fn remote(descriptor: BackendDescriptor) -> Result<Self> {
        let client = Arc::new(RemoteClient::new(descriptor)?);
        Ok(Self {
            embedder: client.clone(),
            nli: client.clone(),
            classifier: client,
        })
    }

    pub fn from_descriptor(descriptor: &BackendDescriptor) -> Result<Self> {
        descriptor.validate()?;
        match descriptor.kind {
            BackendKind::Remote => Self::remote(descriptor.clone()),
            _ => Ok(Self::builtin()),
        }
    }
}
