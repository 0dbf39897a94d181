//! Greedy and beam-search decoding.
//!
//! Beam search keeps the `beam` best candidates of every step; candidates
//! ending in EOS move to the finished pool. Scores are summed
//! log-probabilities (optionally divided by length). Ties are broken by the
//! lexicographically smaller token sequence, which makes `beam = 1`
//! coincide with greedy decoding.

use std::cmp::Ordering;

use ndarray::Array2;

use crate::decoder::{log_softmax, next_logits_full};
use crate::error::ModelError;
use crate::model::Model;

/// Next-token log-probabilities for a prefix.
pub trait NextTokenScorer {
    fn log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>, ModelError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Starts with BOS; ends with EOS when `finished`.
    pub tokens: Vec<usize>,
    pub logprob: f64,
    pub finished: bool,
}

impl Hypothesis {
    fn rank_score(&self, length_normalization: bool) -> f64 {
        if length_normalization {
            self.logprob / (self.tokens.len() - 1).max(1) as f64
        } else {
            self.logprob
        }
    }
}

fn better(a: &Hypothesis, b: &Hypothesis, norm: bool) -> Ordering {
    b.rank_score(norm)
        .partial_cmp(&a.rank_score(norm))
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

pub fn greedy<S: NextTokenScorer>(scorer: &S, bos: usize, eos: usize, max_len: usize) -> Result<Hypothesis, ModelError> {
    let mut h = Hypothesis {
        tokens: vec![bos],
        logprob: 0.0,
        finished: false,
    };
    for _ in 0..max_len {
        let lp = scorer.log_probs(&h.tokens)?;
        let (best, score) = lp
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (t, &s)| if s > acc.1 { (t, s) } else { acc });
        h.tokens.push(best);
        h.logprob += score;
        if best == eos {
            h.finished = true;
            break;
        }
    }
    Ok(h)
}

/// Beam search for at most `max_len` tokens after BOS.
pub fn beam_search<S: NextTokenScorer>(
    scorer: &S,
    bos: usize,
    eos: usize,
    beam: usize,
    max_len: usize,
    length_normalization: bool,
) -> Result<Hypothesis, ModelError> {
    let beam = beam.max(1);
    let mut alive = vec![Hypothesis {
        tokens: vec![bos],
        logprob: 0.0,
        finished: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        let mut candidates = Vec::with_capacity(alive.len() * 8);
        for h in &alive {
            for (t, lp) in scorer.log_probs(&h.tokens)?.into_iter().enumerate() {
                let mut tokens = h.tokens.clone();
                tokens.push(t);
                candidates.push(Hypothesis {
                    tokens,
                    logprob: h.logprob + lp,
                    finished: t == eos,
                });
            }
        }
        candidates.sort_by(|a, b| better(a, b, length_normalization));
        candidates.truncate(beam);
        alive.clear();
        for c in candidates {
            if c.finished {
                finished.push(c);
            } else {
                alive.push(c);
            }
        }
        if alive.is_empty() {
            break;
        }
        // Extensions only lower an unnormalized score.
        if !length_normalization {
            let best_finished = finished.iter().map(|h| h.logprob).fold(f64::NEG_INFINITY, f64::max);
            let best_alive = alive.iter().map(|h| h.logprob).fold(f64::NEG_INFINITY, f64::max);
            if !finished.is_empty() && best_finished >= best_alive {
                break;
            }
        }
    }
    let pool = if finished.is_empty() { alive } else { finished };
    Ok(pool
        .into_iter()
        .min_by(|a, b| better(a, b, length_normalization))
        .expect("beam search keeps at least one hypothesis"))
}

/// Scores continuations with a trained model against fixed encoder memory.
pub struct ModelScorer<'m> {
    pub model: &'m Model,
    /// Real (unpadded) memory rows.
    pub memory: Array2<f64>,
}

impl NextTokenScorer for ModelScorer<'_> {
    fn log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>, ModelError> {
        let logits = next_logits_full(self.model, &self.memory, prefix)?;
        Ok(log_softmax(logits.row(logits.nrows() - 1)))
    }
}
