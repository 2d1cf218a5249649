//! JSON-over-HTTP client for out-of-process models.
//!
//! Routes (all `POST`, UTF-8 JSON):
//!
//! | route               | request                                        | response                                                   |
//! |---------------------|------------------------------------------------|------------------------------------------------------------|
//! | `/embed`            | `{"texts":[string]}`                           | `{"vectors":[[number]]}`                                   |
//! | `/nli`              | `{"pairs":[{"premise":s,"hypothesis":s}]}`     | `{"scores":[{"entail":n,"neutral":n,"contradict":n}]}`     |
//! | `/classify_factual` | `{"texts":[string]}`                           | `{"probs":[number]}`                                       |
//!
//! Inputs are sent in batches of at most `max_batch`. Transport errors and
//! 5xx responses are retried with exponential backoff.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{BackendDescriptor, ClaimClassifier, Embedder, NliBackend};
use crate::error::{Error, Result};
use crate::nli::{EntailmentScores, NliPair};
use crate::retrieval::EmbeddingVector;

pub const ROUTE_EMBED: &str = "/embed";
pub const ROUTE_NLI: &str = "/nli";
pub const ROUTE_CLASSIFY: &str = "/classify_factual";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliRequest {
    pub pairs: Vec<NliPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliResponse {
    pub scores: Vec<EntailmentScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub probs: Vec<f64>,
}

/// Counting semaphore bounding in-flight requests.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteClient {
    descriptor: BackendDescriptor,
    base: String,
    agent: ureq::Agent,
    permits: Permits,
}

impl RemoteClient {
    pub fn new(descriptor: BackendDescriptor) -> Result<Self> {
        descriptor.validate()?;
        let base = descriptor
            .endpoint
            .clone()
            .ok_or_else(|| Error::config("remote backend requires an endpoint"))?
            .trim_end_matches('/')
            .to_string();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(descriptor.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let permits = Permits {
            free: Mutex::new(descriptor.max_in_flight),
            cv: Condvar::new(),
        };
        Ok(Self {
            descriptor,
            base,
            agent,
            permits,
        })
    }

    pub fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    /// POSTs `payload` to `route`, retrying transport failures and 5xx.
    pub fn call<Req: Serialize, Resp: DeserializeOwned>(&self, route: &str, payload: &Req) -> Result<Resp> {
        let url = format!("{}{route}", self.base);
        let attempts = self.descriptor.retries + 1;
        let mut last_failure = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self
                    .descriptor
                    .backoff_base_ms
                    .saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            let _permit = self.permits.acquire();
            let mut response = match self.agent.post(&url).send_json(payload) {
                Ok(r) => r,
                Err(e) => {
                    last_failure = format!("{url}: {e}");
                    continue;
                }
            };
            let status = response.status().as_u16();
            if status >= 500 {
                last_failure = format!("{url}: HTTP {status}");
                continue;
            }
            if !(200..300).contains(&status) {
                return Err(Error::Backend {
                    context: url,
                    message: format!("HTTP {status}"),
                });
            }
            return response
                .body_mut()
                .read_json::<Resp>()
                .map_err(|e| Error::Protocol(format!("{url}: malformed response: {e}")));
        }
        Err(Error::BackendUnavailable {
            attempts,
            message: last_failure,
        })
    }

    fn batches<'a, T>(&self, items: &'a [T]) -> impl Iterator<Item = &'a [T]> {
        items.chunks(self.descriptor.max_batch)
    }
}

fn check_arity(route: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Protocol(format!(
            "{route} returned {got} results for {expected} inputs"
        )));
    }
    Ok(())
}

impl Embedder for RemoteClient {
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in self.batches(texts) {
            let req = EmbedRequest {
                texts: batch.iter().map(|t| t.to_string()).collect(),
            };
            let resp: EmbedResponse = self.call(ROUTE_EMBED, &req)?;
            check_arity(ROUTE_EMBED, resp.vectors.len(), batch.len())?;
            for v in resp.vectors {
                out.push(EmbeddingVector::new(v).map_err(|e| Error::Protocol(format!("{ROUTE_EMBED}: {e}")))?);
            }
        }
        if let Some(first) = out.first() {
            if out.iter().any(|v| v.dim() != first.dim()) {
                return Err(Error::Protocol(format!(
                    "{ROUTE_EMBED}: inconsistent vector dimensions"
                )));
            }
        }
        Ok(out)
    }
}

impl NliBackend for RemoteClient {
    fn score(&self, pairs: &[NliPair]) -> Result<Vec<EntailmentScores>> {
        let mut out = Vec::with_capacity(pairs.len());
        for batch in self.batches(pairs) {
            let req = NliRequest { pairs: batch.to_vec() };
            let resp: NliResponse = self.call(ROUTE_NLI, &req)?;
            check_arity(ROUTE_NLI, resp.scores.len(), batch.len())?;
            for s in &resp.scores {
                s.validate()?;
            }
            out.extend(resp.scores);
        }
        Ok(out)
    }
}

impl ClaimClassifier for RemoteClient {
    fn classify(&self, texts: &[&str]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in self.batches(texts) {
            let req = ClassifyRequest {
                texts: batch.iter().map(|t| t.to_string()).collect(),
            };
            let resp: ClassifyResponse = self.call(ROUTE_CLASSIFY, &req)?;
            check_arity(ROUTE_CLASSIFY, resp.probs.len(), batch.len())?;
            if let Some(p) = resp.probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::Protocol(format!(
                    "{ROUTE_CLASSIFY}: probability {p} out of range"
                )));
            }
            out.extend(resp.probs);
        }
        Ok(out)
    }
}
