use proptest::prelude::*;

use groundcheck::aggregate::{ClaimLabel, ResponseLabel};
use groundcheck::chunker::{chunk_context, chunk_text, ChunkerConfig};
use groundcheck::retrieval::PackingBudget;
use groundcheck::tokenize::TokenCounter;
use groundcheck::{Backends, DetectionRequest, Pipeline, PipelineConfig};

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            "[A-Za-z]{1,12}",
            "[0-9]{1,4}",
            Just("\n\n".to_string()),
            Just("\n".to_string()),
            Just(". ".to_string()),
            Just("? ".to_string()),
            Just("; ".to_string()),
            Just(", ".to_string()),
            Just(" ".to_string()),
            Just("  ".to_string()),
            Just("# ".to_string()),
            Just("- ".to_string()),
            Just("é".to_string()),
            Just("—".to_string()),
        ],
        0..200,
    )
    .prop_map(|parts| parts.concat())
}

fn covered(text: &str, spans: impl Iterator<Item = (usize, usize)>) -> bool {
    let mut mask = vec![false; text.chars().count()];
    for (s, e) in spans {
        mask[s..e].iter_mut().for_each(|m| *m = true);
    }
    text.chars().zip(mask).all(|(c, m)| m || c.is_whitespace())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chunks_fit_cover_and_repeat(text in text_strategy(), s_max in 1usize..40, o_frac in 0usize..4) {
        let counter = TokenCounter::builtin();
        let o_max = (s_max * o_frac / 8).min(s_max - 1);
        let config = ChunkerConfig::new(s_max, o_max);
        let chunks = chunk_text(&config, &counter, &text).unwrap();
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.index, i);
            prop_assert!(c.tokens <= s_max);
            prop_assert_eq!(c.tokens, counter.count(&c.text));
            prop_assert!(!c.text.trim().is_empty());
            let chars: String = text.chars().skip(c.start).take(c.end - c.start).collect();
            prop_assert_eq!(&chars, &c.text);
        }
        prop_assert!(covered(&text, chunks.iter().map(|c| (c.start, c.end))));
        for w in chunks.windows(2) {
            prop_assert!(w[0].start < w[1].start);
            if o_max == 0 {
                prop_assert!(w[0].end <= w[1].start);
            } else if w[1].start < w[0].end {
                let shared: String = text.chars().skip(w[1].start).take(w[0].end - w[1].start).collect();
                prop_assert!(counter.count(&shared) <= o_max);
            }
        }
        prop_assert_eq!(chunk_text(&config, &counter, &text).unwrap(), chunks);
    }

    #[test]
    fn claims_are_disjoint_and_sentence_bounded(text in text_strategy(), s_max in 1usize..80) {
        let counter = TokenCounter::builtin();
        let claims = chunk_text(&ChunkerConfig::claims_with_max(s_max), &counter, &text).unwrap();
        for w in claims.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
        for c in &claims {
            prop_assert!(c.tokens <= s_max);
            prop_assert!(!c.text.contains('\n'));
            for sep in [". ", "! ", "? "] {
                prop_assert!(!c.text.contains(sep), "claim {:?} spans a sentence boundary", c.text);
            }
        }
        prop_assert!(covered(&text, claims.iter().map(|c| (c.start, c.end))));
    }

    #[test]
    fn context_chunks_respect_budget(text in text_strategy(), claim_tokens in 0usize..=470, margin in 1.0f64..2.0) {
        let counter = TokenCounter::builtin().with_margin(margin);
        let budget = PackingBudget::default();
        for c in chunk_context(&counter, &text, claim_tokens, &budget).unwrap() {
            prop_assert!(counter.budgeted_count(&c.text) <= budget.context_chunk_max);
        }
    }

    #[test]
    fn verdicts_are_well_formed(context in text_strategy(), output in text_strategy()) {
        let pipeline = Pipeline::new(PipelineConfig::default(), Backends::builtin()).unwrap();
        let v = pipeline.detect(&DetectionRequest::new(vec![context], output)).unwrap();
        prop_assert!((0.0..=1.0).contains(&v.response_score));
        let scored: Vec<f64> = v.claim_verdicts.iter().filter_map(|c| c.grounding_score).collect();
        if scored.is_empty() {
            prop_assert_eq!(v.label, ResponseLabel::NoFactualClaims);
        } else {
            let lo = scored.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = scored.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= v.response_score && v.response_score <= hi);
        }
        for (i, c) in v.claim_verdicts.iter().enumerate() {
            prop_assert_eq!(c.claim_index, i);
            match c.label {
                ClaimLabel::NonFactualUnscored => prop_assert!(c.grounding_score.is_none()),
                _ => prop_assert!(c.grounding_score.is_some()),
            }
        }
    }

    #[test]
    fn verbatim_output_is_grounded(context in text_strategy()) {
        prop_assume!(context.chars().any(char::is_alphanumeric));
        let pipeline = Pipeline::new(PipelineConfig::default(), Backends::builtin()).unwrap();
        let v = pipeline.detect(&DetectionRequest::new(vec![context.clone()], context)).unwrap();
        prop_assert_ne!(v.label, ResponseLabel::Hallucinated);
    }
}
