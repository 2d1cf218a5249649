//! Seeded synthetic corpora shared by the integration tests.

#![allow(dead_code)]

use groundcheck::bench::{EvalSample, TaskType};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const CORPUS_SEED: u64 = 0x5eed_2024;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const CONTEXT_ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const NOVEL_ONSETS: &[&str] = &["v", "w", "x", "z", "qu"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

fn word(rng: &mut ChaCha8Rng, onsets: &[&str]) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(onsets.choose(rng).unwrap());
        w.push_str(VOWELS.choose(rng).unwrap());
    }
    w
}

/// A sentence of `words` words drawn from `onsets`, capitalised, ending in '.'.
fn sentence(rng: &mut ChaCha8Rng, onsets: &[&str], words: usize) -> String {
    let mut parts: Vec<String> = (0..words).map(|_| word(rng, onsets)).collect();
    if let Some(first) = parts.first_mut() {
        let mut c = first.chars();
        *first = c
            .next()
            .map(|h| h.to_uppercase().chain(c).collect())
            .unwrap_or_default();
    }
    if words > 8 && rng.gen_bool(0.3) {
        let at = rng.gen_range(2..words - 2);
        parts[at].push(',');
    }
    format!("{}.", parts.join(" "))
}

pub fn context_sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(6..=14);
    sentence(rng, CONTEXT_ONSETS, n)
}

/// A sentence sharing no content word with any context sentence.
pub fn novel_sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(6..=12);
    sentence(rng, NOVEL_ONSETS, n)
}

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub sample: EvalSample,
    /// The planted ungrounded sentence, for hallucinated samples.
    pub planted: Option<String>,
}

fn document(rng: &mut ChaCha8Rng, sentences: &mut Vec<String>) -> String {
    let paragraphs = rng.gen_range(2..=4);
    let mut out = Vec::new();
    for _ in 0..paragraphs {
        let n = rng.gen_range(2..=5);
        let para: Vec<String> = (0..n).map(|_| context_sentence(rng)).collect();
        sentences.extend(para.iter().cloned());
        out.push(para.join(" "));
    }
    out.join("\n\n")
}

/// `faithful` samples whose responses are verbatim context sentences and
/// `hallucinated` samples that additionally carry one planted sentence.
pub fn detection_corpus(seed: u64, faithful: usize, hallucinated: usize) -> Vec<SyntheticSample> {
    let mut rng = rng(seed);
    let tasks = [TaskType::Qa, TaskType::DataToText, TaskType::Summarization];
    let total = faithful + hallucinated;
    let mut out = Vec::with_capacity(total);
    for i in 0..total {
        let is_hallucinated = i >= faithful;
        let mut sentences = Vec::new();
        let docs = rng.gen_range(1..=3);
        let context: Vec<String> = (0..docs).map(|_| document(&mut rng, &mut sentences)).collect();
        let picked = rng.gen_range(2..=4).min(sentences.len());
        let mut response: Vec<String> = sentences.choose_multiple(&mut rng, picked).cloned().collect();
        let planted = is_hallucinated.then(|| {
            let s = novel_sentence(&mut rng);
            let at = rng.gen_range(0..=response.len());
            response.insert(at, s.clone());
            s
        });
        let mut text = response.join(" ");
        if rng.gen_bool(0.2) {
            text = format!("## Answer\n\n{text}");
        }
        out.push(SyntheticSample {
            sample: EvalSample {
                id: format!("syn-{i:03}"),
                task_type: tasks[i % tasks.len()],
                context,
                response: text,
                label_hallucinated: is_hallucinated,
                line: i + 1,
            },
            planted,
        });
    }
    out
}

pub fn to_jsonl(samples: &[SyntheticSample]) -> String {
    let mut out = String::new();
    for s in samples {
        let s = &s.sample;
        let line = json!({
            "id": s.id,
            "task_type": s.task_type,
            "context": s.context,
            "response": s.response,
            "label_hallucinated": s.label_hallucinated,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

fn prose_word(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..40) {
        0 => "über-naïve".to_string(),
        1 => "x".repeat(rng.gen_range(30..120)),
        2 => format!("{}%", rng.gen_range(0..1000)),
        3 => "e.g.".to_string(),
        4 => "(see below)".to_string(),
        5 => "日本語テキスト".to_string(),
        _ => word(rng, CONTEXT_ONSETS),
    }
}

fn prose_sentence(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.gen_range(1..=max_words);
    let mut s = String::new();
    for i in 0..n {
        if i > 0 {
            s.push_str(match rng.gen_range(0..20) {
                0 => ", ",
                1 => "; ",
                2 => "  ",
                _ => " ",
            });
        }
        s.push_str(&prose_word(rng));
    }
    s.push_str([".", "!", "?", ":", ""].choose(rng).unwrap());
    s
}

/// One sentence-free run of `words` words, usable as a single claim.
pub fn random_claim(rng: &mut ChaCha8Rng, words: usize) -> String {
    let mut s = String::new();
    for i in 0..words {
        if i > 0 {
            s.push_str(if rng.gen_bool(0.05) { ", " } else { " " });
        }
        s.push_str(&prose_word(rng));
    }
    s
}

/// Mixed prose, markdown headings, lists and code-like blocks of roughly
/// `target_tokens` builtin tokens.
pub fn random_document(rng: &mut ChaCha8Rng, target_tokens: usize) -> String {
    let mut blocks = Vec::new();
    let mut tokens = 0;
    while tokens < target_tokens {
        let block = match rng.gen_range(0..10) {
            0 => format!("{} {}", "#".repeat(rng.gen_range(1..=3)), prose_sentence(rng, 6)),
            1 | 2 => (0..rng.gen_range(2..8))
                .map(|i| {
                    let bullet = if rng.gen_bool(0.5) {
                        "-".to_string()
                    } else {
                        format!("{}.", i + 1)
                    };
                    format!("{bullet} {}", prose_sentence(rng, 15))
                })
                .collect::<Vec<_>>()
                .join("\n"),
            3 => (0..rng.gen_range(1..5))
                .map(|_| format!("    let v = f({}, {});", rng.gen_range(0..99), rng.gen_range(0..99)))
                .collect::<Vec<_>>()
                .join("\n"),
            4 => (0..rng.gen_range(20..90))
                .map(|_| prose_word(rng))
                .collect::<Vec<_>>()
                .join(" "),
            _ => (0..rng.gen_range(1..8))
                .map(|_| prose_sentence(rng, 30))
                .collect::<Vec<_>>()
                .join(" "),
        };
        tokens += groundcheck::tokenize::count_builtin(&block);
        blocks.push(block);
    }
    let sep = ["\n\n", "\n", "\n\n\n", " \n \n"];
    let mut out = String::new();
    for (i, b) in blocks.iter().enumerate() {
        if i > 0 {
            out.push_str(sep.choose(rng).unwrap());
        }
        out.push_str(b);
    }
    out
}
