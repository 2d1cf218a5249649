//! Remote client against an in-process HTTP/1.1 server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use groundcheck::backends::{ClaimClassifier, Embedder, MockEmbedder, NliBackend, RemoteClient};
use groundcheck::nli::{NliPair, OracleNli};
use groundcheck::{detect, BackendDescriptor, Backends, DetectionRequest, Error, HeuristicClassifier, PipelineConfig};

type Handler = dyn Fn(&str, &Value) -> (u16, String) + Send + Sync;

struct Server {
    url: String,
    hits: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
}

fn read_request(reader: &mut BufReader<TcpStream>) -> Option<(String, Vec<u8>)> {
    let mut line = String::new();
    if reader.read_line(&mut line).ok()? == 0 {
        return None;
    }
    let route = line.split_whitespace().nth(1)?.to_string();
    let mut length = 0;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some((route, body))
}

fn serve(handler: Arc<Handler>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let active = Arc::new(AtomicUsize::new(0));
    let (h, p) = (hits.clone(), peak.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let (handler, hits, peak, active) = (handler.clone(), h.clone(), p.clone(), active.clone());
            thread::spawn(move || {
                let mut writer = stream.try_clone().unwrap();
                let mut reader = BufReader::new(stream);
                while let Some((route, body)) = read_request(&mut reader) {
                    hits.fetch_add(1, Ordering::SeqCst);
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    let payload: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                    let (status, text) = handler(&route, &payload);
                    active.fetch_sub(1, Ordering::SeqCst);
                    let response = format!(
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{text}",
                        text.len()
                    );
                    if writer.write_all(response.as_bytes()).is_err() {
                        break;
                    }
                }
            });
        }
    });
    Server { url, hits, peak }
}

fn descriptor(url: &str) -> BackendDescriptor {
    BackendDescriptor {
        backoff_base_ms: 5,
        timeout_ms: 2_000,
        ..BackendDescriptor::remote(url)
    }
}

fn strings(v: &Value, key: &str) -> Vec<String> {
    v[key]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect()
}

/// Serves the built-in doubles over the wire.
fn reference_handler(route: &str, body: &Value) -> (u16, String) {
    match route {
        "/embed" => {
            let texts = strings(body, "texts");
            let vectors: Vec<Vec<f64>> = texts
                .iter()
                .map(|t| MockEmbedder::embed_one(t).values().to_vec())
                .collect();
            (200, json!({ "vectors": vectors }).to_string())
        }
        "/nli" => {
            let scores: Vec<Value> = body["pairs"]
                .as_array()
                .unwrap()
                .iter()
                .map(|p| {
                    let s = OracleNli::entailment(p["premise"].as_str().unwrap(), p["hypothesis"].as_str().unwrap());
                    json!({ "entail": s.p_entail, "neutral": s.p_neutral, "contradict": s.p_contradict })
                })
                .collect();
            (200, json!({ "scores": scores }).to_string())
        }
        "/classify_factual" => {
            let h = HeuristicClassifier::default();
            let probs: Vec<f64> = strings(body, "texts").iter().map(|t| h.probability(t)).collect();
            (200, json!({ "probs": probs }).to_string())
        }
        _ => (404, "{}".to_string()),
    }
}

#[test]
fn embed_batches_and_preserves_order() {
    let server = serve(Arc::new(reference_handler));
    let client = RemoteClient::new(BackendDescriptor {
        max_batch: 2,
        ..descriptor(&server.url)
    })
    .unwrap();
    let texts = ["alpha beta", "gamma delta", "epsilon", "zeta eta theta", "iota"];
    let got = client.embed(&texts).unwrap();
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
    let want: Vec<_> = texts.iter().map(|t| MockEmbedder::embed_one(t)).collect();
    assert_eq!(got, want);
}

#[test]
fn nli_and_classifier_shapes() {
    let server = serve(Arc::new(reference_handler));
    let client = RemoteClient::new(descriptor(&server.url)).unwrap();
    let pairs = vec![
        NliPair {
            premise: "The bridge opened in 1932.".into(),
            hypothesis: "The bridge opened in 1932.".into(),
        },
        NliPair {
            premise: "The bridge opened in 1932.".into(),
            hypothesis: "Purple whales sing.".into(),
        },
    ];
    let scores = client.score(&pairs).unwrap();
    assert_eq!(scores.len(), 2);
    assert_eq!(scores[0].p_entail, 1.0);
    assert_eq!(scores[1].p_entail, 0.0);
    let probs = client.classify(&["# Title", "The bridge opened in 1932."]).unwrap();
    assert_eq!(probs, vec![0.0, 1.0]);
}

#[test]
fn remote_pipeline_matches_builtin() {
    let server = serve(Arc::new(reference_handler));
    let remote = Backends::remote(descriptor(&server.url)).unwrap();
    let context = "The dam was finished in 1936. It spans the Colorado river between two states.";
    let req = DetectionRequest::new(
        vec![context.to_string()],
        "The dam was finished in 1936. Penguins operate its turbines at night.",
    );
    let config = PipelineConfig::default();
    let over_wire = detect(&req, &config, &remote).unwrap();
    let local = detect(&req, &config, &Backends::builtin()).unwrap();
    assert_eq!(over_wire, local);
}

#[test]
fn server_errors_are_retried_then_reported() {
    let server = serve(Arc::new(|_: &str, _: &Value| (500, "{}".to_string())));
    let client = RemoteClient::new(descriptor(&server.url)).unwrap();
    let err = client.embed(&["text"]).unwrap_err();
    assert!(matches!(err, Error::BackendUnavailable { attempts: 3, .. }), "{err}");
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
    assert!(err.is_backend());
}

#[test]
fn transient_failure_recovers() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let server = serve(Arc::new(move |route: &str, body: &Value| {
        if c.fetch_add(1, Ordering::SeqCst) == 0 {
            (503, "{}".to_string())
        } else {
            reference_handler(route, body)
        }
    }));
    let client = RemoteClient::new(descriptor(&server.url)).unwrap();
    assert_eq!(client.classify(&["The bridge opened in 1932."]).unwrap(), vec![1.0]);
    assert_eq!(server.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let server = serve(Arc::new(|_: &str, _: &Value| (400, r#"{"error":"bad"}"#.to_string())));
    let client = RemoteClient::new(descriptor(&server.url)).unwrap();
    let err = client.embed(&["text"]).unwrap_err();
    assert!(matches!(err, Error::Backend { .. }), "{err}");
    assert!(err.to_string().contains("400"));
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_responses_are_protocol_errors() {
    let server = serve(Arc::new(|route: &str, _: &Value| match route {
        "/embed" => (200, "not json".to_string()),
        "/nli" => (
            200,
            r#"{"scores":[{"entail":0.9,"neutral":0.9,"contradict":0.0}]}"#.to_string(),
        ),
        _ => (200, r#"{"probs":[0.5, 0.5]}"#.to_string()),
    }));
    let client = RemoteClient::new(descriptor(&server.url)).unwrap();
    assert!(matches!(client.embed(&["a"]), Err(Error::Protocol(_))));
    let pair = NliPair {
        premise: "p".into(),
        hypothesis: "h".into(),
    };
    assert!(matches!(client.score(&[pair]), Err(Error::Protocol(_))));
    // Two probabilities for one text.
    assert!(matches!(client.classify(&["a"]), Err(Error::Protocol(_))));
}

#[test]
fn unreachable_endpoint() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let client = RemoteClient::new(BackendDescriptor {
        retries: 1,
        ..descriptor(&format!("http://127.0.0.1:{port}"))
    })
    .unwrap();
    let err = client.embed(&["a"]).unwrap_err();
    assert!(matches!(err, Error::BackendUnavailable { attempts: 2, .. }), "{err}");
}

#[test]
fn slow_server_times_out() {
    let server = serve(Arc::new(|route: &str, body: &Value| {
        thread::sleep(Duration::from_millis(600));
        reference_handler(route, body)
    }));
    let client = RemoteClient::new(BackendDescriptor {
        timeout_ms: 100,
        retries: 0,
        ..descriptor(&server.url)
    })
    .unwrap();
    assert!(matches!(client.embed(&["a"]), Err(Error::BackendUnavailable { .. })));
}

#[test]
fn in_flight_requests_are_bounded() {
    let server = serve(Arc::new(|route: &str, body: &Value| {
        thread::sleep(Duration::from_millis(30));
        reference_handler(route, body)
    }));
    let client = Arc::new(
        RemoteClient::new(BackendDescriptor {
            max_in_flight: 2,
            ..descriptor(&server.url)
        })
        .unwrap(),
    );
    let workers: Vec<_> = (0..8)
        .map(|i| {
            let client = client.clone();
            thread::spawn(move || client.embed(&[format!("text number {i}").as_str()]).unwrap())
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    assert_eq!(server.hits.load(Ordering::SeqCst), 8);
    assert!(server.peak.load(Ordering::SeqCst) <= 2);
}
