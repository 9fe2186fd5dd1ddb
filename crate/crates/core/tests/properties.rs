mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use maskpolicy::baselines::{random_span, salient_spans, tag_text};
use maskpolicy::corpus::{chunk_ranges, split_words, tokenize, AnchorExample, Chunk, Vocab};
use maskpolicy::corruption::{corrupt, Masking};
use maskpolicy::evaluation::{span_hit_metrics, token_f1, RandomSpanProposer, SalientProposer};
use maskpolicy::policy::{forward, select_span, top_k_spans, DeploymentMode, PolicyDims, PolicyParams};
use maskpolicy::span::{count_valid_spans, nth_valid_span};
use maskpolicy::Span;

fn logits(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_len).prop_flat_map(|n| {
        (
            prop::collection::vec(-4i32..=4, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            prop::collection::vec(-4i32..=4, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
        )
    })
}

proptest! {
    #[test]
    fn top_k_matches_enumeration((start, end) in logits(20), k in 1usize..8, max_len in 1usize..8) {
        let got: Vec<(Span, f64)> = top_k_spans(&start, &end, k, max_len)
            .unwrap()
            .into_iter()
            .map(|c| (c.span, c.score))
            .collect();
        prop_assert_eq!(got, common::brute_top_k(&start, &end, k, max_len));
    }

    #[test]
    fn top_k_spans_are_valid((start, end) in logits(30), k in 1usize..10, max_len in 1usize..12) {
        let n = start.len();
        let got = top_k_spans(&start, &end, k, max_len).unwrap();
        prop_assert_eq!(got.len(), k.min(count_valid_spans(n, max_len)));
        for w in got.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
        for c in &got {
            prop_assert!(c.span.fits(n) && c.span.len() <= max_len);
        }
    }

    #[test]
    fn nth_span_enumerates_in_order(n in 1usize..25, max_len in 1usize..12) {
        let total = count_valid_spans(n, max_len);
        let all: Vec<Span> = (0..total).map(|i| nth_valid_span(n, max_len, i).unwrap()).collect();
        prop_assert!(all.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(all.iter().all(|s| s.fits(n) && s.len() <= max_len));
        prop_assert_eq!(nth_valid_span(n, max_len, total), None);
    }

    #[test]
    fn random_span_stays_in_bounds(n in 1usize..200, max_len in 1usize..15, seed in any::<u64>()) {
        let s = random_span(n, max_len, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(s.fits(n) && s.len() <= max_len);
    }

    #[test]
    fn selected_span_comes_from_pool((start, end) in logits(15), seed in any::<u64>()) {
        let pool = top_k_spans(&start, &end, 5, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let top1 = select_span(&pool, DeploymentMode::Top1, &mut rng).unwrap();
        prop_assert_eq!(top1, pool[0].span);
        let drawn = select_span(&pool, DeploymentMode::SampleTop5, &mut rng).unwrap();
        prop_assert!(pool.iter().any(|c| c.span == drawn));
    }

    #[test]
    fn chunks_tile_a_prefix(n in 0usize..2000, len in 2usize..300) {
        let ranges = chunk_ranges(n, len).unwrap();
        let mut next = 0;
        for r in &ranges {
            prop_assert_eq!(r.start, next);
            prop_assert!(r.len() <= len && r.len() >= 1);
            next = r.end;
        }
        // only a tail shorter than a quarter chunk may be dropped
        prop_assert!(n - next < (len / 4).max(1));
    }

    #[test]
    fn tokens_are_ordered_and_nonblank(text in "[a-zA-Z0-9 ,.!é\u{4e16}\n-]{0,80}") {
        let words = split_words(&text);
        for w in &words {
            let s = &text[w.byte_start..w.byte_end];
            prop_assert!(!s.is_empty() && !s.chars().any(char::is_whitespace));
            prop_assert_eq!(s.chars().count(), w.char_end - w.char_start);
        }
        for pair in words.windows(2) {
            prop_assert!(pair[0].byte_end <= pair[1].byte_start);
        }
        let stripped: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let joined: String = words.iter().map(|w| &text[w.byte_start..w.byte_end]).collect();
        prop_assert_eq!(stripped, joined);
    }

    #[test]
    fn vocab_file_round_trips(text in "[a-z]{1,5}( [a-z]{1,5}){0,40}", max_size in 4usize..40) {
        let v = Vocab::from_texts([text.as_str()], max_size, 1).unwrap();
        let back = Vocab::parse(&v.to_file_string()).unwrap();
        prop_assert_eq!(back.tokens(), v.tokens());
        prop_assert_eq!(back.hash(), v.hash());
        prop_assert!(v.len() <= max_size);
    }

    #[test]
    fn corruption_reconstructs(words in prop::collection::vec("[a-e]{1,3}", 2..40), a in 0usize..40, b in 0usize..40) {
        let text = words.join(" ");
        let vocab = Vocab::from_texts([text.as_str()], 100, 1).unwrap();
        let chunk = Chunk::from_text("d", &text, &vocab);
        let n = chunk.len();
        let (lo, hi) = (a.min(b) % n, a.max(b) % n);
        let span = Span::new(lo.min(hi), lo.max(hi));
        let m = Masking::Span { span, produced_by: "p".into() };
        match corrupt(&chunk, &m, 0) {
            Ok(ex) => {
                prop_assert_eq!(ex.reconstruct(), chunk.ids().to_vec());
                prop_assert_eq!(ex.target_ids.len(), ex.masked_positions.len());
                prop_assert_eq!(ex.masked_runs(), vec![span]);
                for (i, &id) in ex.input_ids.iter().enumerate() {
                    prop_assert_eq!(id == maskpolicy::corpus::MASK_ID, span.contains(i));
                }
            }
            Err(_) => prop_assert_eq!(span.len(), n),
        }
    }

    #[test]
    fn salient_tags_are_sorted_and_disjoint(text in "(Ada|Paris|March 3 , 1950|1991|the|a|New York|\\.|12,500| ){1,30}") {
        // tags depend on surface text only, so any vocabulary will do
        let vocab = Vocab::from_tokens(["Ada"]).unwrap();
        let chunk = Chunk::from_text("d", &text, &vocab);
        let tags = salient_spans(&chunk);
        for w in tags.windows(2) {
            prop_assert!(w[0].span.end < w[1].span.start);
        }
        prop_assert!(tags.iter().all(|t| t.span.fits(chunk.len())));
        prop_assert_eq!(tag_text(&text).len(), tags.len());
    }

    #[test]
    fn f1_is_symmetric_and_bounded(a in 0usize..20, b in 0usize..20, c in 0usize..20, d in 0usize..20) {
        let p = Span::new(a.min(b), a.max(b));
        let g = Span::new(c.min(d), c.max(d));
        let f = token_f1(p, g);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - token_f1(g, p)).abs() < 1e-12);
        prop_assert_eq!(f == 1.0, p == g);
    }

    #[test]
    fn f32_forward_tracks_f64(seed in any::<u64>(), len in 1usize..12) {
        let dims = PolicyDims { vocab_size: 9, embedding_dim: 3, hidden_dim: 3, num_layers: 2 };
        let p64 = PolicyParams::<f64>::random(dims, 0.5, &mut ChaCha8Rng::seed_from_u64(seed));
        let p32: PolicyParams<f32> = p64.cast();
        let ids: Vec<u32> = (0..len as u32).map(|i| (i * 7 + seed as u32) % 9).collect();
        let (s64, e64) = forward(&p64, &ids, 64).unwrap();
        let (s32, e32) = forward(&p32, &ids, 64).unwrap();
        for (a, b) in s64.iter().chain(&e64).zip(s32.iter().chain(&e32)) {
            prop_assert!((a - f64::from(*b)).abs() < 1e-4);
        }
    }
}

#[test]
fn report_invariants_and_permutation_invariance() {
    let task = common::sentinel_task(4);
    let mut reversed = task.test.clone();
    reversed.reverse();
    for proposer in [
        &RandomSpanProposer { seed: 3 } as &dyn maskpolicy::evaluation::SpanProposer,
        &SalientProposer { seed: 3 },
    ] {
        let r = span_hit_metrics(proposer, &task.test, 10).unwrap();
        assert!(r.em_at_1 <= r.em_at_5);
        assert!(r.token_f1_at_1 >= r.em_at_1);
        assert!([r.em_at_1, r.em_at_5, r.token_f1_at_1].iter().all(|x| (0.0..=1.0).contains(x)));
        assert_eq!(r, span_hit_metrics(proposer, &reversed, 10).unwrap());
    }
}

#[test]
fn tokenized_context_aligns_answers() {
    let vocab = Vocab::from_texts(["alpha beta gamma"], 10, 1).unwrap();
    let ex = AnchorExample::new("Alpha, beta gamma!", "q", "beta gamma", &vocab).unwrap();
    assert_eq!(ex.answer_span, Span::new(2, 3));
    assert_eq!(tokenize("Alpha, beta gamma!", &vocab).len(), 5);
}
