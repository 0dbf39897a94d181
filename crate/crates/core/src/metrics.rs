//! Text-generation metrics for generated summaries.
//!
//! * BLEU: clipped n-gram precision up to 4-grams with a brevity penalty.
//!   Corpus BLEU is unsmoothed and skips orders for which the candidates
//!   contain no n-grams at all; sentence BLEU adds one to numerator and
//!   denominator of every order n >= 2 that has no match.
//! * ROUGE-L: LCS precision/recall combined with a balanced F-score.
//! * METEOR: exact-match unigram alignment (no stemming or synonyms) chosen
//!   to maximize matches and then minimize chunks;
//!   `F = 10PR / (R + 9P)`, `penalty = 0.5 * (chunks / matches)^3`,
//!   `score = F * (1 - penalty)`.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and total candidate n-grams for one order.
fn clipped<T: Eq + Hash>(cand: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let matched = c
        .iter()
        .map(|(g, k)| (*k).min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, cand.len().saturating_sub(n - 1))
}

fn brevity_penalty(cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 {
        0.0
    } else if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    }
}

pub fn corpus_bleu<T: Eq + Hash>(candidates: &[Vec<T>], references: &[Vec<T>], max_n: usize) -> Result<f64, MetricError> {
    if candidates.is_empty() || candidates.len() != references.len() {
        return Err(MetricError::EmptyInput("candidate and reference lists must be non-empty and aligned"));
    }
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let (mut c_len, mut r_len) = (0, 0);
    for (c, r) in candidates.iter().zip(references) {
        c_len += c.len();
        r_len += r.len();
        for n in 1..=max_n {
            let (m, t) = clipped(c, r, n);
            matched[n - 1] += m;
            total[n - 1] += t;
        }
    }
    // Orders longer than every candidate carry no evidence and are left out
    // of the geometric mean.
    let orders: Vec<(usize, usize)> = matched.into_iter().zip(total).filter(|(_, t)| *t > 0).collect();
    if orders.is_empty() || orders.iter().any(|(m, _)| *m == 0) {
        return Ok(0.0);
    }
    let log_mean = orders
        .iter()
        .map(|(m, t)| (*m as f64 / *t as f64).ln())
        .sum::<f64>()
        / orders.len() as f64;
    Ok(brevity_penalty(c_len, r_len) * log_mean.exp())
}

/// Modified precisions used by [`sentence_bleu`], after smoothing.
pub fn smoothed_precisions<T: Eq + Hash>(cand: &[T], reference: &[T], max_n: usize) -> Vec<f64> {
    (1..=max_n)
        .map(|n| {
            let (m, t) = clipped(cand, reference, n);
            if n >= 2 && m == 0 {
                1.0 / (t as f64 + 1.0)
            } else if t == 0 {
                0.0
            } else {
                m as f64 / t as f64
            }
        })
        .collect()
}

pub fn sentence_bleu<T: Eq + Hash>(cand: &[T], reference: &[T], max_n: usize) -> f64 {
    let p = smoothed_precisions(cand, reference, max_n);
    if p.contains(&0.0) {
        return 0.0;
    }
    let log_mean = p.iter().map(|x| x.ln()).sum::<f64>() / max_n as f64;
    brevity_penalty(cand.len(), reference.len()) * log_mean.exp()
}

pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: Eq>(cand: &[T], reference: &[T]) -> Result<f64, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyInput("ROUGE-L needs a non-empty reference"));
    }
    let lcs = lcs_len(cand, reference);
    if lcs == 0 {
        return Ok(0.0);
    }
    let p = lcs as f64 / cand.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    Ok(2.0 * p * r / (p + r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeteorDetail {
    pub matches: usize,
    pub chunks: usize,
    pub precision: f64,
    pub recall: f64,
    pub fmean: f64,
    pub penalty: f64,
    pub score: f64,
}

/// Upper bound on alignment search nodes; beyond it the best alignment
/// found so far is used.
const METEOR_SEARCH_BUDGET: usize = 1 << 20;

struct AlignSearch<'a> {
    cand: &'a [usize],
    ref_positions: Vec<Vec<usize>>,
    used: Vec<bool>,
    quota: Vec<usize>,
    remaining: Vec<usize>,
    assign: Vec<Option<usize>>,
    best: Option<usize>,
    visited: usize,
}

impl AlignSearch<'_> {
    /// Maximizes adjacent matched pairs that stay adjacent in the reference.
    fn search(&mut self, i: usize, continuations: usize) {
        self.visited += 1;
        if i == self.cand.len() {
            if self.best.is_none_or(|b| continuations > b) {
                self.best = Some(continuations);
            }
            return;
        }
        if self.best.is_some_and(|b| continuations + (self.cand.len() - i) <= b)
            || self.visited > METEOR_SEARCH_BUDGET
        {
            return;
        }
        let w = self.cand[i];
        self.remaining[w] -= 1;
        let prev = if i > 0 { self.assign[i - 1] } else { None };
        if self.quota[w] > 0 {
            let mut options: Vec<usize> = self.ref_positions[w].iter().copied().filter(|&p| !self.used[p]).collect();
            // Try the continuing position first for earlier pruning.
            if let Some(pp) = prev {
                if let Some(k) = options.iter().position(|&p| p == pp + 1) {
                    options[..=k].rotate_right(1);
                }
            }
            for p in options {
                self.used[p] = true;
                self.quota[w] -= 1;
                self.assign[i] = Some(p);
                let cont = usize::from(prev.is_some_and(|pp| pp + 1 == p));
                self.search(i + 1, continuations + cont);
                self.assign[i] = None;
                self.quota[w] += 1;
                self.used[p] = false;
            }
        }
        // Leaving this occurrence unmatched is only allowed if the rest of
        // the candidate can still fill the match quota for `w`.
        if self.remaining[w] >= self.quota[w] {
            self.search(i + 1, continuations);
        }
        self.remaining[w] += 1;
    }
}

pub fn meteor_detail<T: Eq + Hash>(cand: &[T], reference: &[T]) -> MeteorDetail {
    let mut ids: HashMap<&T, usize> = HashMap::new();
    let mut intern = |t| {
        let next = ids.len();
        *ids.entry(t).or_insert(next)
    };
    let c: Vec<usize> = cand.iter().map(&mut intern).collect();
    let r: Vec<usize> = reference.iter().map(&mut intern).collect();
    let vocab = ids.len();

    let mut ref_positions = vec![Vec::new(); vocab];
    for (p, &w) in r.iter().enumerate() {
        ref_positions[w].push(p);
    }
    let mut remaining = vec![0usize; vocab];
    for &w in &c {
        remaining[w] += 1;
    }
    let quota: Vec<usize> = (0..vocab).map(|w| remaining[w].min(ref_positions[w].len())).collect();
    let matches: usize = quota.iter().sum();

    let zero = MeteorDetail {
        matches: 0,
        chunks: 0,
        precision: 0.0,
        recall: 0.0,
        fmean: 0.0,
        penalty: 0.0,
        score: 0.0,
    };
    if matches == 0 {
        return zero;
    }
    let mut s = AlignSearch {
        cand: &c,
        ref_positions,
        used: vec![false; r.len()],
        quota,
        remaining,
        assign: vec![None; c.len()],
        best: None,
        visited: 0,
    };
    s.search(0, 0);
    let chunks = matches - s.best.unwrap_or(0);

    let precision = matches as f64 / c.len() as f64;
    let recall = matches as f64 / r.len() as f64;
    let fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (chunks as f64 / matches as f64).powi(3);
    MeteorDetail {
        matches,
        chunks,
        precision,
        recall,
        fmean,
        penalty,
        score: fmean * (1.0 - penalty),
    }
}

pub fn meteor<T: Eq + Hash>(cand: &[T], reference: &[T]) -> f64 {
    meteor_detail(cand, reference).score
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthBucket {
    pub threshold: f64,
    pub mean_length: Option<f64>,
    pub count: usize,
}

/// Mean code length of the samples scoring strictly below each threshold.
pub fn length_analysis(scores: &[f64], code_lengths: &[usize], thresholds: &[f64]) -> Vec<LengthBucket> {
    thresholds
        .iter()
        .map(|&threshold| {
            let (sum, count) = scores
                .iter()
                .zip(code_lengths)
                .filter(|(s, _)| **s < threshold)
                .fold((0usize, 0usize), |(sum, n), (_, len)| (sum + len, n + 1));
            LengthBucket {
                threshold,
                mean_length: (count > 0).then(|| sum as f64 / count as f64),
                count,
            }
        })
        .collect()
}

pub const DEFAULT_THRESHOLDS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub id: String,
    pub bleu: f64,
    pub meteor: f64,
    pub rouge_l: f64,
    pub code_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Corpus BLEU.
    pub bleu: f64,
    /// Mean sentence METEOR.
    pub meteor: f64,
    /// Mean sentence ROUGE-L.
    pub rouge_l: f64,
    pub count: usize,
    pub per_sample: Vec<SampleScores>,
    /// `[threshold, mean code length]` over sentence BLEU; `null` for empty buckets.
    pub length_table: Vec<(f64, Option<f64>)>,
    pub length_table_meteor: Vec<(f64, Option<f64>)>,
    pub length_table_rouge_l: Vec<(f64, Option<f64>)>,
}

pub struct Sample<'a> {
    pub id: &'a str,
    pub hypothesis: &'a [String],
    pub reference: &'a [String],
    pub code_length: usize,
}

impl MetricReport {
    pub fn compute(samples: &[Sample<'_>], thresholds: &[f64]) -> Result<MetricReport, MetricError> {
        if samples.is_empty() {
            return Err(MetricError::EmptyInput("no samples to score"));
        }
        let per_sample = samples
            .iter()
            .map(|s| {
                Ok(SampleScores {
                    id: s.id.to_string(),
                    bleu: sentence_bleu(s.hypothesis, s.reference, 4),
                    meteor: meteor(s.hypothesis, s.reference),
                    rouge_l: rouge_l(s.hypothesis, s.reference)?,
                    code_length: s.code_length,
                })
            })
            .collect::<Result<Vec<_>, MetricError>>()?;
        let hyps: Vec<Vec<&String>> = samples.iter().map(|s| s.hypothesis.iter().collect()).collect();
        let refs: Vec<Vec<&String>> = samples.iter().map(|s| s.reference.iter().collect()).collect();
        let n = per_sample.len() as f64;
        let lengths: Vec<usize> = per_sample.iter().map(|s| s.code_length).collect();
        let table = |f: fn(&SampleScores) -> f64| {
            let scores: Vec<f64> = per_sample.iter().map(f).collect();
            length_analysis(&scores, &lengths, thresholds)
                .into_iter()
                .map(|b| (b.threshold, b.mean_length))
                .collect()
        };
        Ok(MetricReport {
            bleu: corpus_bleu(&hyps, &refs, 4)?,
            meteor: per_sample.iter().map(|s| s.meteor).sum::<f64>() / n,
            rouge_l: per_sample.iter().map(|s| s.rouge_l).sum::<f64>() / n,
            count: per_sample.len(),
            length_table: table(|s| s.bleu),
            length_table_meteor: table(|s| s.meteor),
            length_table_rouge_l: table(|s| s.rouge_l),
            per_sample,
        })
    }
}
