#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scg_core::synth::random_program;
use scg_core::*;
use scg_model::model::BlockParams;
use scg_model::{Model, ModelError, NextTokenScorer, ParamStore};

pub fn scg(src: &str, variant: Variant) -> Scg {
    build_scg(&parse_mini(src).unwrap(), &lex(src).unwrap(), variant).unwrap()
}

pub fn random_scg(seed: u64, depth: usize, variant: Variant) -> Scg {
    scg(&random_program(&mut ChaCha8Rng::seed_from_u64(seed), depth), variant)
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Encodes `graphs` against a vocabulary built from them.
pub fn encode_all(graphs: &[Scg]) -> (Vocab, Vec<EncodedGraph>) {
    let vocab = Vocab::build(graphs, 50_000, 30_000).unwrap();
    let enc = graphs.iter().map(|g| encode_graph(g, &vocab)).collect();
    (vocab, enc)
}

/// Overwrites every parameter with uniform noise in `[-a, a]` (norm scales
/// around one), so no parameter sits at a special value.
pub fn randomize(store: &mut ParamStore, a: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in store.ids().collect::<Vec<_>>() {
        let is_gamma = store.name(id).ends_with(".gamma");
        store.value_mut(id).mapv_inplace(|_| {
            let x = rng.random_range(-a..a);
            if is_gamma {
                1.0 + x
            } else {
                x
            }
        });
    }
}

pub fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum()).collect())
        .collect()
}

fn layer_norm(x: &[Vec<f64>], gamma: &[f64], beta: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            row.iter().enumerate().map(|(k, v)| (v - mean) / (var + 1e-6).sqrt() * gamma[k] + beta[k]).collect()
        })
        .collect()
}

/// A textbook post-norm Transformer encoder layer (full self-attention, no
/// masking, no dropout), written with plain loops.
pub fn vanilla_encoder_layer(store: &ParamStore, block: &BlockParams, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = |id| to_rows(store.value(id));
    let v1 = |id| store.value(id).row(0).to_vec();
    let heads = block.attn.heads;
    let (q, k, v) = (matmul(x, &p(block.attn.wq)), matmul(x, &p(block.attn.wk)), matmul(x, &p(block.attn.wv)));
    let (dk, dv) = (q[0].len() / heads, v[0].len() / heads);
    let n = x.len();
    let mut concat = vec![vec![0.0; heads * dv]; n];
    for h in 0..heads {
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| (0..dk).map(|c| q[i][h * dk + c] * k[j][h * dk + c]).sum::<f64>() / (dk as f64).sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for j in 0..n {
                for c in 0..dv {
                    concat[i][h * dv + c] += e[j] / z * v[j][h * dv + c];
                }
            }
        }
    }
    let attn = matmul(&concat, &p(block.attn.wo));
    let a: Vec<Vec<f64>> = x.iter().zip(&attn).map(|(r, s)| r.iter().zip(s).map(|(u, w)| u + w).collect()).collect();
    let ln1 = block.ln1.as_ref().unwrap();
    let y = layer_norm(&a, &v1(ln1.gamma), &v1(ln1.beta));
    let (b1, b2) = (v1(block.ffn.b1), v1(block.ffn.b2));
    let hidden: Vec<Vec<f64>> = matmul(&y, &p(block.ffn.w1))
        .into_iter()
        .map(|r| r.iter().zip(&b1).map(|(u, b)| (u + b).max(0.0)).collect())
        .collect();
    let f = matmul(&hidden, &p(block.ffn.w2));
    let z: Vec<Vec<f64>> = y
        .iter()
        .zip(&f)
        .map(|(yr, fr)| yr.iter().zip(fr).zip(&b2).map(|((u, w), b)| u + w + b).collect())
        .collect();
    let ln2 = block.ln2.as_ref().unwrap();
    layer_norm(&z, &v1(ln2.gamma), &v1(ln2.beta))
}

/// Next-token distribution drawn from a generator keyed by the prefix, so
/// every prefix has its own fixed, strictly positive distribution.
pub struct RandomScorer {
    pub vocab: usize,
    pub seed: u64,
}

impl NextTokenScorer for RandomScorer {
    fn log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>, ModelError> {
        let mut h = DefaultHasher::new();
        (self.seed, prefix).hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let logits: Vec<f64> = (0..self.vocab).map(|_| rng.random_range(-3.0..3.0)).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z = logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln() + m;
        Ok(logits.iter().map(|l| l - z).collect())
    }
}

/// Brute force over every output of at most `max_len` tokens: the best
/// EOS-terminated sequence, or the best full-length one if none ends.
/// Ties go to the lexicographically smaller sequence. Returns the sequence
/// and its summed log-probability.
pub fn exhaustive<S: NextTokenScorer>(s: &S, vocab: usize, bos: usize, eos: usize, max_len: usize, normalize: bool) -> (Vec<usize>, f64) {
    let mut finished: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut unfinished: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut frontier = vec![(vec![bos], 0.0)];
    for step in 1..=max_len {
        let mut next = Vec::new();
        for (prefix, score) in &frontier {
            let lp = s.log_probs(prefix).unwrap();
            for t in 0..vocab {
                let mut seq = prefix.clone();
                seq.push(t);
                let sc = score + lp[t];
                if t == eos {
                    finished.push((seq, sc));
                } else if step == max_len {
                    unfinished.push((seq, sc));
                } else {
                    next.push((seq, sc));
                }
            }
        }
        frontier = next;
    }
    let pool = if finished.is_empty() { unfinished } else { finished };
    let rank = |(seq, sc): &(Vec<usize>, f64)| if normalize { sc / (seq.len() - 1) as f64 } else { *sc };
    pool.into_iter()
        .min_by(|a, b| rank(b).partial_cmp(&rank(a)).unwrap().then_with(|| a.0.cmp(&b.0)))
        .unwrap()
}

/// Model with every parameter randomized, for structural tests.
pub fn random_model(config: &scg_model::Config, vocab: &Vocab, seed: u64) -> Model {
    let mut m = Model::new(config, scg_model::Dims::of(vocab), seed).unwrap();
    randomize(&mut m.store, 0.5, seed ^ 0xABCD);
    m
}
