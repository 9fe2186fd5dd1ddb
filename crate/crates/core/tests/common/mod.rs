//! Independent oracles and synthetic data shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use maskpolicy::corpus::{AnchorExample, Vocab};
use maskpolicy::policy::{PolicyParams, TrainConfig};
use maskpolicy::Span;

pub const OPEN: &str = "⟨";
pub const CLOSE: &str = "⟩";

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM direction over `xs`, evaluated element by element.
fn scalar_lstm(weight: &[f64], bias: &[f64], input_dim: usize, hidden: usize, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cols = 4 * hidden;
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        let mut z = bias.to_vec();
        for (r, v) in x.iter().chain(h.iter()).enumerate() {
            for k in 0..cols {
                z[k] += v * weight[r * cols + k];
            }
        }
        assert_eq!(x.len(), input_dim);
        for j in 0..hidden {
            let i_gate = sigmoid(z[j]);
            let f_gate = sigmoid(z[hidden + j]);
            let g_gate = z[2 * hidden + j].tanh();
            let o_gate = sigmoid(z[3 * hidden + j]);
            c[j] = f_gate * c[j] + i_gate * g_gate;
            h[j] = o_gate * c[j].tanh();
        }
        out.push(h.clone());
    }
    out
}

/// Start and end logits computed with plain loops over the parameter data.
pub fn scalar_forward(params: &PolicyParams<f64>, ids: &[u32]) -> (Vec<f64>, Vec<f64>) {
    let dims = params.dims();
    let e = dims.embedding_dim;
    let h = dims.hidden_dim;
    let emb = params.embedding.data();
    let mut xs: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| emb[id as usize * e..(id as usize + 1) * e].to_vec())
        .collect();
    for layer in &params.layers {
        let d_in = xs[0].len();
        let fwd = scalar_lstm(layer.forward.weight.data(), layer.forward.bias.data(), d_in, h, &xs);
        let reversed: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let mut bwd = scalar_lstm(layer.backward.weight.data(), layer.backward.bias.data(), d_in, h, &reversed);
        bwd.reverse();
        xs = fwd.into_iter().zip(bwd).map(|(f, b)| [f, b].concat()).collect();
    }
    let head = |w: &[f64], b: f64| -> Vec<f64> {
        xs.iter().map(|x| x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b).collect()
    };
    (
        head(params.start_weight.data(), params.start_bias.data()[0]),
        head(params.end_weight.data(), params.end_bias.data()[0]),
    )
}

/// Top-k spans by repeatedly scanning every pair for the best one not yet
/// taken. Ties keep the first pair in (start, end) order.
pub fn brute_top_k(start: &[f64], end: &[f64], k: usize, max_len: usize) -> Vec<(Span, f64)> {
    let n = start.len();
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut out = Vec::new();
    while out.len() < k {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            for j in i..n.min(i + max_len) {
                if taken.contains(&(i, j)) {
                    continue;
                }
                let s = start[i] + end[j];
                if best.map_or(true, |(_, _, b)| s > b) {
                    best = Some((i, j, s));
                }
            }
        }
        match best {
            Some((i, j, s)) => {
                taken.push((i, j));
                out.push((Span::new(i, j), s));
            }
            None => break,
        }
    }
    out
}

/// Upper-tail p-value of Pearson's statistic against equal expected counts.
pub fn chi_square_uniform_p(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Filler words of the sentinel task. With the two sentinels and the three
/// reserved tokens the vocabulary has exactly 50 entries.
pub fn sentinel_words() -> Vec<String> {
    (0..45).map(|i| format!("w{i:02}")).collect()
}

pub struct SentinelTask {
    pub vocab: Vocab,
    pub train: Vec<AnchorExample>,
    pub valid: Vec<AnchorExample>,
    pub test: Vec<AnchorExample>,
}

/// A context of filler words with the answer wrapped in sentinels, plus the
/// answer text. The answer does not occur anywhere else in the context.
pub fn sentinel_context(rng: &mut impl Rng, words: &[String]) -> (String, String) {
    loop {
        let answer_len = rng.gen_range(1..=4);
        let before = rng.gen_range(0..=10);
        let after = rng.gen_range(0..=10);
        let pick = |rng: &mut dyn rand::RngCore, n: usize| -> Vec<String> {
            (0..n).map(|_| words.choose(rng).unwrap().clone()).collect()
        };
        let left = pick(rng, before);
        let answer = pick(rng, answer_len);
        let right = pick(rng, after);
        let context = [left.clone(), vec![OPEN.into()], answer.clone(), vec![CLOSE.into()], right.clone()]
            .concat()
            .join(" ");
        let answer = answer.join(" ");
        let filler = [left, right].concat().join(" ");
        if !format!(" {filler} ").contains(&format!(" {answer} ")) {
            return (context, answer);
        }
    }
}

pub fn sentinel_task(seed: u64) -> SentinelTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = sentinel_words();
    let mut tokens: Vec<&str> = words.iter().map(String::as_str).collect();
    tokens.extend([OPEN, CLOSE]);
    let vocab = Vocab::from_tokens(tokens).unwrap();
    assert_eq!(vocab.len(), 50);
    let mut make = |n: usize| -> Vec<AnchorExample> {
        (0..n)
            .map(|_| {
                let (context, answer) = sentinel_context(&mut rng, &words);
                let ex = AnchorExample::new(&context, "what is marked?", &answer, &vocab).unwrap();
                let ids = ex.context_tokens.ids();
                assert_eq!(vocab.token(ids[ex.answer_span.start - 1]), Some(OPEN));
                assert_eq!(vocab.token(ids[ex.answer_span.end + 1]), Some(CLOSE));
                ex
            })
            .collect()
    };
    let train = make(500);
    let valid = make(100);
    let test = make(100);
    SentinelTask {
        vocab,
        train,
        valid,
        test,
    }
}

/// Training settings that learn the sentinel task quickly on one thread.
pub fn sentinel_train_config() -> TrainConfig {
    TrainConfig {
        epochs: 12,
        learning_rate: 1e-2,
        batch_size: 16,
        embedding_dim: 16,
        hidden_dim: 16,
        num_layers: 2,
        max_input_len: 64,
        max_span_len: 10,
        seed: 7,
        ..TrainConfig::default()
    }
}

/// Plain-text documents with names, dates and numbers for the salient tagger,
/// with at least `target_tokens` tokens surviving chunking at length 128.
pub fn prose_documents(seed: u64, target_tokens: usize) -> Vec<maskpolicy::corpus::Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["Ada Lovelace", "Alan Turing", "New York", "Grace Hopper", "Rolling Stone", "Cape Fear"];
    let months = ["January", "March", "July", "October"];
    let fillers = [
        "the", "report", "was", "written", "by", "a", "small", "team", "and", "later", "revised", "in", "about",
        "with", "for", "people", "of", "city",
    ];
    let mut docs = Vec::new();
    let mut total = 0;
    while total < target_tokens {
        let mut words: Vec<String> = Vec::new();
        let len = rng.gen_range(20..300);
        while words.len() < len {
            match rng.gen_range(0..10) {
                0 => words.push(names.choose(&mut rng).unwrap().to_string()),
                1 => words.push(format!("{} {}, {}", months.choose(&mut rng).unwrap(), rng.gen_range(1..29), rng.gen_range(1900..2020))),
                2 => words.push(format!("{}", rng.gen_range(10..5000))),
                3 => words.push(".".into()),
                _ => words.push(fillers.choose(&mut rng).unwrap().to_string()),
            }
        }
        let text = words.join(" ");
        let n = maskpolicy::corpus::split_words(&text).len();
        total += maskpolicy::corpus::chunk_ranges(n, 128).unwrap().iter().map(|r| r.len()).sum::<usize>();
        docs.push(maskpolicy::corpus::Document {
            id: format!("doc{:06}", docs.len()),
            text,
        });
    }
    docs
}
