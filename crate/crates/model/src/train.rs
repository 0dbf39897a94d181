//! Loss, batched gradients, the epoch loop with early stopping, and
//! decoding helpers.

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use scg_core::vocab::{BOS, EOS, PAD};
use scg_core::EncodedGraph;

use crate::beam::{beam_search, greedy, Hypothesis, ModelScorer};
use crate::config::Config;
use crate::decoder::{decode_on_tape, log_softmax};
use crate::encoder::{encode_on_tape, EncoderInput};
use crate::error::ModelError;
use crate::model::{Dims, Dropout, Forward, Model};
use crate::optim::Adam;
use crate::params::{Grads, ParamStore};
use crate::tape::Tape;

/// Mean negative log-likelihood over non-pad targets. `logits` is
/// `[B, T, V]`, `targets` is `[B, T]`.
pub fn loss(logits: &Array3<f64>, targets: &Array2<usize>) -> Result<f64, ModelError> {
    let (b, t, v) = logits.dim();
    if targets.dim() != (b, t) {
        return Err(ModelError::Dimension(format!("targets {:?} against logits {:?}", targets.dim(), (b, t))));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 0..b {
        for i in 0..t {
            let target = targets[[k, i]];
            if target == PAD {
                continue;
            }
            if target >= v {
                return Err(ModelError::Dimension(format!("target {target} outside {v} classes")));
            }
            total -= log_softmax(logits.slice(ndarray::s![k, i, ..]))[target];
            count += 1;
        }
    }
    if count == 0 {
        return Err(ModelError::EmptyData("no non-pad targets".into()));
    }
    Ok(total / count as f64)
}

/// Summed target NLL of one graph (teacher forcing) and the number of
/// predicted positions. With `grads`, accumulates `scale * d(sum)/d(param)`.
pub fn sample_loss(
    model: &Model,
    store: &ParamStore,
    graph: &EncodedGraph,
    dropout_seed: Option<u64>,
    grads: Option<(&mut Grads, f64)>,
) -> Result<(f64, usize), ModelError> {
    let n = graph.target_ids.len();
    if n < 2 {
        return Err(ModelError::EmptyData("target sequence needs BOS and EOS".into()));
    }
    let mut tape = Tape::new(store);
    let mut rng = dropout_seed.filter(|_| model.config.dropout > 0.0).map(ChaCha8Rng::seed_from_u64);
    let mut fwd = Forward {
        tape: &mut tape,
        dropout: rng.as_mut().map(|rng| Dropout {
            p: model.config.dropout,
            rng,
        }),
    };
    let input = EncoderInput::from_graph(graph);
    let enc = encode_on_tape(&mut fwd, model, &input)?;
    let logits = decode_on_tape(&mut fwd, model, enc.memory, input.token_rows.len(), &graph.target_ids[..n - 1])?;
    let nll = tape.nll(logits, graph.target_ids[1..].to_vec());
    let value = tape.value(nll)[[0, 0]];
    if !value.is_finite() {
        return Err(ModelError::NonFinite("loss".into()));
    }
    if let Some((g, scale)) = grads {
        tape.backward(nll, scale, g);
    }
    Ok((value, n - 1))
}

/// Mean per-token loss and its gradient over a batch. Samples run in
/// parallel; their gradients are summed in sample order, so the result does
/// not depend on the thread count.
pub fn batch_gradients(model: &Model, graphs: &[&EncodedGraph], dropout_seeds: Option<&[u64]>) -> Result<(f64, Grads), ModelError> {
    let tokens: usize = graphs.iter().map(|g| g.target_ids.len().saturating_sub(1)).sum();
    if tokens == 0 {
        return Err(ModelError::EmptyData("empty batch".into()));
    }
    let scale = 1.0 / tokens as f64;
    let parts: Vec<Result<(f64, Grads), ModelError>> = graphs
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let mut grads = Grads::new(&model.store);
            let seed = dropout_seeds.map(|s| s[i]);
            let (l, _) = sample_loss(model, &model.store, g, seed, Some((&mut grads, scale)))?;
            Ok((l, grads))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = Grads::new(&model.store);
    for part in parts {
        let (l, g) = part?;
        total += l;
        grads.merge(&g);
    }
    Ok((total * scale, grads))
}

/// Mean per-token evaluation loss over a data set.
pub fn evaluate_loss(model: &Model, data: &[EncodedGraph]) -> Result<f64, ModelError> {
    let parts: Vec<Result<(f64, usize), ModelError>> = data.par_iter().map(|g| sample_loss(model, &model.store, g, None, None)).collect();
    let (mut total, mut count) = (0.0, 0usize);
    for p in parts {
        let (l, n) = p?;
        total += l;
        count += n;
    }
    if count == 0 {
        return Err(ModelError::EmptyData("evaluation set".into()));
    }
    Ok(total / count as f64)
}

/// Tracks the best validation loss; stops after `max(patience, 1)`
/// consecutive epochs without strict improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopper {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: Option<usize>,
    pub bad_epochs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: None,
            best_epoch: None,
            bad_epochs: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, valid_loss: f64) -> StopDecision {
        let improved = self.best.is_none_or(|b| valid_loss < b);
        if improved {
            self.best = Some(valid_loss);
            self.best_epoch = Some(epoch);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        StopDecision {
            improved,
            stop: self.bad_epochs >= self.patience.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub steps: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,step,train_loss,valid_loss,lr\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{},{},{}\n", e.epoch, e.step, e.train_loss, e.valid_loss, e.lr));
        }
        out
    }
}

fn dropout_seed(seed: u64, step: usize, sample: usize) -> u64 {
    let mut z = seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (sample as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn numeric(epoch: usize, batch: usize) -> impl Fn(ModelError) -> ModelError {
    move |e| {
        if e.is_numeric() {
            ModelError::Numeric {
                epoch,
                batch,
                message: e.to_string(),
            }
        } else {
            e
        }
    }
}

/// Trains a fresh model from `config.seed` and returns the parameters of the
/// epoch with the lowest validation loss.
pub fn train(config: &Config, dims: Dims, train_set: &[EncodedGraph], valid_set: &[EncodedGraph]) -> Result<(Model, TrainReport), ModelError> {
    config.validate()?;
    let model = Model::new(config, dims, config.seed)?;
    train_model(model, train_set, valid_set)
}

/// Continues training `model` with its own configuration.
pub fn train_model(mut model: Model, train_set: &[EncodedGraph], valid_set: &[EncodedGraph]) -> Result<(Model, TrainReport), ModelError> {
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(ModelError::EmptyData("training and validation sets must be non-empty".into()));
    }
    let config = model.config.clone();
    let mut adam = Adam::new(&model.store, config.adam_beta1, config.adam_beta2, config.adam_eps);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopper = EarlyStopper::new(config.early_stop_epochs);
    let mut best_store = model.store.clone();
    let mut epochs = Vec::new();
    let mut step = 0usize;
    let mut stopped_early = false;
    let step_limit = config.max_steps.unwrap_or(usize::MAX);

    for epoch in 0..config.max_epochs {
        if step >= step_limit {
            break;
        }
        let lr = config.learning_rate(epoch);
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut batches) = (0.0, 0usize);
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            if step >= step_limit {
                break;
            }
            let graphs: Vec<&EncodedGraph> = chunk.iter().map(|&i| &train_set[i]).collect();
            let seeds: Vec<u64> = (0..graphs.len()).map(|i| dropout_seed(config.seed, step, i)).collect();
            let (l, mut grads) = batch_gradients(&model, &graphs, Some(&seeds)).map_err(numeric(epoch, bi))?;
            if let Some(clip) = config.grad_clip {
                let norm = grads.norm();
                if norm > clip {
                    grads.scale(clip / norm);
                }
            }
            adam.update(&mut model.store, &grads, lr).map_err(numeric(epoch, bi))?;
            step += 1;
            epoch_loss += l;
            batches += 1;
        }
        let valid_loss = evaluate_loss(&model, valid_set).map_err(numeric(epoch, 0))?;
        let train_loss = epoch_loss / batches.max(1) as f64;
        log::info!("epoch {epoch} step {step} train {train_loss:.5} valid {valid_loss:.5} lr {lr:e}");
        epochs.push(EpochLog {
            epoch,
            step,
            train_loss,
            valid_loss,
            lr,
        });
        let decision = stopper.observe(epoch, valid_loss);
        if decision.improved {
            best_store = model.store.clone();
        }
        if decision.stop {
            stopped_early = true;
            break;
        }
    }
    model.store = best_store;
    let report = TrainReport {
        epochs,
        best_epoch: stopper.best_epoch.unwrap_or(0),
        best_valid_loss: stopper.best.unwrap_or(f64::NAN),
        steps: step,
        stopped_early,
    };
    Ok((model, report))
}

/// Encoder token features (evaluation mode) for one graph.
pub fn encode_memory(model: &Model, graph: &EncodedGraph) -> Result<Array2<f64>, ModelError> {
    let mut tape = Tape::new(&model.store);
    let mut fwd = Forward { tape: &mut tape, dropout: None };
    let enc = encode_on_tape(&mut fwd, model, &EncoderInput::from_graph(graph))?;
    Ok(tape.value(enc.memory).clone())
}

/// Decodes a summary with beam search (`beam = 1` is greedy) for at most
/// `max_summary_len` words plus EOS.
pub fn summarize(model: &Model, graph: &EncodedGraph, beam: usize) -> Result<Hypothesis, ModelError> {
    let scorer = ModelScorer {
        model,
        memory: encode_memory(model, graph)?,
    };
    let max_len = model.config.max_summary_len + 1;
    beam_search(&scorer, BOS, EOS, beam, max_len, model.config.length_normalization)
}

pub fn summarize_greedy(model: &Model, graph: &EncodedGraph) -> Result<Hypothesis, ModelError> {
    let scorer = ModelScorer {
        model,
        memory: encode_memory(model, graph)?,
    };
    greedy(&scorer, BOS, EOS, model.config.max_summary_len + 1)
}

/// Summary word ids without BOS/EOS.
pub fn strip_markers(tokens: &[usize]) -> Vec<usize> {
    tokens.iter().copied().filter(|&t| t != BOS && t != EOS && t != PAD).collect()
}

type TokenSeqs = Vec<Vec<usize>>;

/// Hypotheses and references (word ids, markers stripped) for a data set.
pub fn decode_corpus(model: &Model, data: &[EncodedGraph], beam: usize) -> Result<(TokenSeqs, TokenSeqs), ModelError> {
    let hyps: Vec<Result<Vec<usize>, ModelError>> = data.par_iter().map(|g| summarize(model, g, beam).map(|h| strip_markers(&h.tokens))).collect();
    let hyps = hyps.into_iter().collect::<Result<Vec<_>, _>>()?;
    let refs = data.iter().map(|g| strip_markers(&g.target_ids)).collect();
    Ok((hyps, refs))
}
