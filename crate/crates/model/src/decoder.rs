//! Transformer decoder over encoder token features.
//!
//! Post-norm layers of masked self-attention, cross-attention over the real
//! (unpadded) memory rows and a feed-forward sublayer. Target embeddings are
//! scaled by `sqrt(d_model)` and summed with sinusoidal positions; the output
//! projection has its own weights and bias.

use ndarray::{Array2, Array3};

use crate::error::ModelError;
use crate::model::{neighbors, Forward, Model};
use crate::tape::{Tape, Var};

/// `PE[pos, 2i] = sin(pos / 10000^(2i/d))`, `PE[pos, 2i+1] = cos(...)`.
pub fn sinusoid(len: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, d), |(pos, k)| {
        let angle = pos as f64 / 10000f64.powf((k - k % 2) as f64 / d as f64);
        if k % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Logits `[T, |targets|]` for `prefix` (starting with BOS) against
/// `memory`, whose first `memory_len` rows are real.
pub(crate) fn decode_on_tape(fwd: &mut Forward, model: &Model, memory: Var, memory_len: usize, prefix: &[usize]) -> Result<Var, ModelError> {
    let d = model.config.d_model;
    let dec = &model.decoder;
    let t = prefix.len();
    if t == 0 {
        return Err(ModelError::Dimension("empty decoder prefix".into()));
    }
    if let Some(&bad) = prefix.iter().find(|&&id| id >= model.dims.targets) {
        return Err(ModelError::Dimension(format!("target id {bad} outside a vocabulary of {}", model.dims.targets)));
    }
    if fwd.tape.value(memory).ncols() != d || fwd.tape.value(memory).nrows() < memory_len {
        return Err(ModelError::Dimension("memory shape disagrees with the model".into()));
    }
    let rows = prefix.iter().map(|&id| Some((dec.target_embedding, id))).collect();
    let e = fwd.tape.embed(rows, d, (d as f64).sqrt());
    let pe = fwd.tape.constant(sinusoid(t, d));
    let x0 = fwd.tape.add(e, pe);
    let mut x = fwd.drop(x0);

    let causal = neighbors((0..t).map(|i| (0..=i).collect()).collect());
    let cross = neighbors(vec![(0..memory_len).collect(); t]);
    for layer in &dec.layers {
        let (s, _) = fwd.mha(x, x, &layer.self_attn, causal.clone());
        let s = fwd.drop(s);
        let r = fwd.tape.add(x, s);
        x = fwd.ln(r, &layer.ln1);
        let (c, _) = fwd.mha(x, memory, &layer.cross_attn, cross.clone());
        let c = fwd.drop(c);
        let r = fwd.tape.add(x, c);
        x = fwd.ln(r, &layer.ln2);
        let f = fwd.ffn(x, &layer.ffn);
        let f = fwd.drop(f);
        let r = fwd.tape.add(x, f);
        x = fwd.ln(r, &layer.ln3);
    }
    let w = fwd.tape.param(dec.out_w);
    let b = fwd.tape.param(dec.out_b);
    let logits = fwd.tape.matmul(x, w);
    Ok(fwd.tape.add_row(logits, b))
}

/// Evaluation-mode logits `[B, T, |targets|]`. `memory_mask[b, l]` marks real
/// memory rows, which must form a prefix of each row.
pub fn decoder_forward(model: &Model, prefix: &Array2<usize>, memory: &Array3<f64>, memory_mask: &Array2<bool>) -> Result<Array3<f64>, ModelError> {
    let (b, t) = prefix.dim();
    if memory.dim().0 != b || memory_mask.dim() != (b, memory.dim().1) {
        return Err(ModelError::Dimension("prefix, memory and mask batch sizes disagree".into()));
    }
    let mut out = Array3::zeros((b, t, model.dims.targets));
    for k in 0..b {
        let len = memory_mask.row(k).iter().take_while(|m| **m).count();
        if memory_mask.row(k).iter().skip(len).any(|m| *m) {
            return Err(ModelError::Dimension("memory mask must mark a prefix".into()));
        }
        let logits = next_logits_full(model, &memory.slice(ndarray::s![k, ..len, ..]).to_owned(), &prefix.row(k).to_vec())?;
        out.slice_mut(ndarray::s![k, .., ..]).assign(&logits);
    }
    Ok(out)
}

/// Evaluation-mode logits for every prefix position given real memory rows.
pub fn next_logits_full(model: &Model, memory: &Array2<f64>, prefix: &[usize]) -> Result<Array2<f64>, ModelError> {
    let mut tape = Tape::new(&model.store);
    let mut fwd = Forward { tape: &mut tape, dropout: None };
    let mem = fwd.tape.constant(memory.clone());
    let logits = decode_on_tape(&mut fwd, model, mem, memory.nrows(), prefix)?;
    Ok(tape.value(logits).clone())
}

/// Log-softmax of one logit row.
pub fn log_softmax(row: ndarray::ArrayView1<f64>) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = row.iter().map(|x| (x - m).exp()).sum::<f64>().ln() + m;
    row.iter().map(|x| x - z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::model::Dims;
    use ndarray::array;

    fn model(c: &Config) -> Model {
        Model::new(
            c,
            Dims {
                tokens: 10,
                ast_types: 10,
                targets: 7,
            },
            9,
        )
        .unwrap()
    }

    #[test]
    fn sinusoid_values() {
        let pe = sinusoid(3, 4);
        assert_eq!(pe.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert!((pe[[2, 0]] - 2f64.sin()).abs() < 1e-15);
        assert!((pe[[2, 3]] - (2.0 / 100.0f64).cos()).abs() < 1e-15);
    }

    #[test]
    fn causal_prefix_invariance() {
        let m = model(&Config::tiny(8, 2));
        let memory = Array2::from_shape_fn((5, 8), |(i, j)| ((i * 8 + j) as f64 * 0.37).sin());
        let short = next_logits_full(&m, &memory, &[2, 4, 5]).unwrap();
        let long = next_logits_full(&m, &memory, &[2, 4, 5, 6, 1]).unwrap();
        assert_eq!(short, long.slice(ndarray::s![..3, ..]));
    }

    #[test]
    fn padded_memory_is_ignored() {
        let m = model(&Config::tiny(8, 1));
        let memory = Array2::from_shape_fn((3, 8), |(i, j)| (i as f64 - j as f64) * 0.1);
        let mut padded = Array3::zeros((1, 5, 8));
        padded.slice_mut(ndarray::s![0, ..3, ..]).assign(&memory);
        padded.slice_mut(ndarray::s![0, 3.., ..]).fill(42.0);
        let mask = array![[true, true, true, false, false]];
        let prefix = array![[2usize, 5, 4]];
        let a = decoder_forward(&m, &prefix, &padded, &mask).unwrap();
        let b = next_logits_full(&m, &memory, &[2, 5, 4]).unwrap();
        assert_eq!(a.slice(ndarray::s![0, .., ..]), b);
        assert!(decoder_forward(&m, &prefix, &padded, &array![[true, false, true, false, false]]).is_err());
    }

    #[test]
    fn single_layer_width_two_matches_hand_evaluation() {
        // One head of width 2, no norms, zero FFN: every step is checkable by
        // hand with the formulas written out below.
        let c = Config {
            attention_heads: 1,
            d_k: 2,
            d_v: 2,
            d_model: 2,
            ffn_hidden: 1,
            num_layers: 1,
            layer_norm: false,
            ..Config::default()
        };
        let mut m = model(&c);
        let l = m.decoder.layers[0].clone();
        let eye = array![[1.0, 0.0], [0.0, 1.0]];
        for id in [l.self_attn.wq, l.self_attn.wk, l.self_attn.wv, l.self_attn.wo, l.cross_attn.wv, l.cross_attn.wo] {
            *m.store.value_mut(id) = eye.clone();
        }
        for id in [l.cross_attn.wq, l.cross_attn.wk, l.ffn.w1, l.ffn.w2] {
            m.store.value_mut(id).fill(0.0);
        }
        let emb = m.decoder.target_embedding;
        m.store.value_mut(emb).row_mut(2).assign(&array![0.5, -0.5]);
        *m.store.value_mut(m.decoder.out_w) = Array2::from_shape_fn((2, 7), |(i, j)| if i == 0 { j as f64 } else { -(j as f64) * 0.5 });
        let memory = array![[1.0, 2.0], [3.0, -2.0]];
        let logits = next_logits_full(&m, &memory, &[2]).unwrap();
        // x0 = sqrt(2) * [0.5, -0.5] + PE[0] = [0.7071, 0.2929]
        // self-attention over itself: x1 = 2 * x0
        // cross-attention with zero scores: uniform mean of memory = [2, 0]
        // x2 = x1 + [2, 0]; FFN zero; logits_j = x2[0] * j - 0.5 * j * x2[1]
        let s = 2f64.sqrt() * 0.5;
        let x0 = [s, -s + 1.0];
        let x2 = [2.0 * x0[0] + 2.0, 2.0 * x0[1]];
        for j in 0..7 {
            let expected = x2[0] * j as f64 - 0.5 * j as f64 * x2[1];
            assert!((logits[[0, j]] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn log_softmax_normalizes() {
        let l = log_softmax(array![1.0, 2.0, 3.0].view());
        assert!((l.iter().map(|x| x.exp()).sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
