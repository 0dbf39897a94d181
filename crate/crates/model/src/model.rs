//! Parameter layout of the encoder-decoder and the shared forward helpers.

use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ApeMode, Config};
use crate::error::ModelError;
use crate::params::{uniform_std, xavier_uniform, ParamId, ParamStore};
use crate::tape::{Neighbors, Tape, Var};

/// Vocabulary sizes of the three embedding namespaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub tokens: usize,
    pub ast_types: usize,
    pub targets: usize,
}

impl Dims {
    pub fn of(vocab: &scg_core::Vocab) -> Dims {
        Dims {
            tokens: vocab.tokens.len(),
            ast_types: vocab.ast_types.len(),
            targets: vocab.targets.len(),
        }
    }
}

/// Per-head projections are stored side by side: `wq`, `wk` are
/// `[d_model, heads * d_k]`, `wv` is `[d_model, heads * d_v]`, `wo` is
/// `[heads * d_v, d_model]`. No biases.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub heads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LnParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// One GN-Transformer block. `attn2` is the second attention sublayer of the
/// 2-hop configuration; norms are `None` when normalization is disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub attn: AttnParams,
    pub attn2: Option<AttnParams>,
    pub ln1: Option<LnParams>,
    pub ffn: FfnParams,
    pub ln2: Option<LnParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub token_embedding: ParamId,
    pub ast_embedding: ParamId,
    pub ape: Option<ParamId>,
    pub blocks: Vec<BlockParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayerParams {
    pub self_attn: AttnParams,
    pub ln1: Option<LnParams>,
    pub cross_attn: AttnParams,
    pub ln2: Option<LnParams>,
    pub ffn: FfnParams,
    pub ln3: Option<LnParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub target_embedding: ParamId,
    pub layers: Vec<DecoderLayerParams>,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: Config,
    pub dims: Dims,
    pub seed: u64,
    pub store: ParamStore,
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

/// Names of tables excluded from the parameter count.
pub fn is_embedding(name: &str) -> bool {
    name.ends_with("_embedding") || name == "encoder.ape" || name.starts_with("decoder.out.")
}

struct Builder<'a> {
    store: ParamStore,
    rng: ChaCha8Rng,
    config: &'a Config,
}

impl Builder<'_> {
    fn matrix(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        let m = xavier_uniform(rows, cols, &mut self.rng);
        self.store.add(name, m)
    }

    fn embedding(&mut self, name: &str, rows: usize) -> ParamId {
        let d = self.config.d_model;
        let m = uniform_std(rows, d, (d as f64).powf(-0.5), &mut self.rng);
        self.store.add(name, m)
    }

    fn attn(&mut self, prefix: &str) -> AttnParams {
        let c = self.config;
        let (d, h) = (c.d_model, c.attention_heads);
        AttnParams {
            wq: self.matrix(format!("{prefix}.wq"), d, h * c.d_k),
            wk: self.matrix(format!("{prefix}.wk"), d, h * c.d_k),
            wv: self.matrix(format!("{prefix}.wv"), d, h * c.d_v),
            wo: self.matrix(format!("{prefix}.wo"), h * c.d_v, d),
            heads: h,
        }
    }

    fn ln(&mut self, prefix: &str) -> Option<LnParams> {
        let d = self.config.d_model;
        self.config.layer_norm.then(|| LnParams {
            gamma: self.store.add(format!("{prefix}.gamma"), Array2::ones((1, d))),
            beta: self.store.add(format!("{prefix}.beta"), Array2::zeros((1, d))),
        })
    }

    fn ffn(&mut self, prefix: &str) -> FfnParams {
        let (d, f) = (self.config.d_model, self.config.ffn_hidden);
        FfnParams {
            w1: self.matrix(format!("{prefix}.w1"), d, f),
            b1: self.store.add(format!("{prefix}.b1"), Array2::zeros((1, f))),
            w2: self.matrix(format!("{prefix}.w2"), f, d),
            b2: self.store.add(format!("{prefix}.b2"), Array2::zeros((1, d))),
        }
    }
}

impl Model {
    /// Builds and initializes every parameter from `seed`: Xavier-uniform
    /// matrices, zero biases, unit/zero norms and zero-mean uniform
    /// embeddings with standard deviation `d_model^-1/2`.
    pub fn new(config: &Config, dims: Dims, seed: u64) -> Result<Model, ModelError> {
        if config.d_model == 0 || config.attention_heads == 0 || config.d_k == 0 || config.d_v == 0 || config.ffn_hidden == 0 {
            return Err(ModelError::Config("model dimensions must be positive".into()));
        }
        if dims.tokens <= scg_core::vocab::EOS || dims.ast_types <= scg_core::vocab::EOS || dims.targets <= scg_core::vocab::EOS {
            return Err(ModelError::Dimension("vocabularies must include the reserved entries".into()));
        }
        let mut b = Builder {
            store: ParamStore::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            config,
        };
        let token_embedding = b.embedding("encoder.token_embedding", dims.tokens);
        let ast_embedding = b.embedding("encoder.ast_embedding", dims.ast_types);
        let ape = (config.ape != ApeMode::Off).then(|| b.embedding("encoder.ape", config.max_positions));
        let blocks = (0..config.num_layers)
            .map(|l| BlockParams {
                attn: b.attn(&format!("encoder.{l}.attn")),
                attn2: config.two_hop.then(|| b.attn(&format!("encoder.{l}.attn2"))),
                ln1: b.ln(&format!("encoder.{l}.ln1")),
                ffn: b.ffn(&format!("encoder.{l}.ffn")),
                ln2: b.ln(&format!("encoder.{l}.ln2")),
            })
            .collect();
        let target_embedding = b.embedding("decoder.target_embedding", dims.targets);
        let layers = (0..config.decoder_depth())
            .map(|l| DecoderLayerParams {
                self_attn: b.attn(&format!("decoder.{l}.self_attn")),
                ln1: b.ln(&format!("decoder.{l}.ln1")),
                cross_attn: b.attn(&format!("decoder.{l}.cross_attn")),
                ln2: b.ln(&format!("decoder.{l}.ln2")),
                ffn: b.ffn(&format!("decoder.{l}.ffn")),
                ln3: b.ln(&format!("decoder.{l}.ln3")),
            })
            .collect();
        let out_w = b.matrix("decoder.out.w".into(), config.d_model, dims.targets);
        let out_b = b.store.add("decoder.out.b", Array2::zeros((1, dims.targets)));
        Ok(Model {
            config: config.clone(),
            dims,
            seed,
            store: b.store,
            encoder: EncoderParams {
                token_embedding,
                ast_embedding,
                ape,
                blocks,
            },
            decoder: DecoderParams {
                target_embedding,
                layers,
                out_w,
                out_b,
            },
        })
    }

    /// Parameters outside the embedding tables and the output projection.
    pub fn param_count(&self) -> usize {
        self.store.element_count(|n| !is_embedding(n))
    }
}

/// Dropout state for a training forward pass.
pub struct Dropout<'r> {
    pub p: f64,
    pub rng: &'r mut ChaCha8Rng,
}

/// Forward-pass helpers shared by the encoder and decoder.
pub(crate) struct Forward<'t, 's, 'r> {
    pub tape: &'t mut Tape<'s>,
    pub dropout: Option<Dropout<'r>>,
}

impl Forward<'_, '_, '_> {
    pub fn drop(&mut self, x: Var) -> Var {
        match &mut self.dropout {
            Some(d) => self.tape.dropout(x, d.p, d.rng),
            None => x,
        }
    }

    /// Returns the projected output and the raw attention node (for maps).
    pub fn mha(&mut self, xq: Var, xkv: Var, p: &AttnParams, neighbors: Neighbors) -> (Var, Var) {
        let t = &mut *self.tape;
        let (wq, wk, wv, wo) = (t.param(p.wq), t.param(p.wk), t.param(p.wv), t.param(p.wo));
        let q = t.matmul(xq, wq);
        let k = t.matmul(xkv, wk);
        let v = t.matmul(xkv, wv);
        let a = t.attention(q, k, v, p.heads, neighbors);
        (t.matmul(a, wo), a)
    }

    pub fn ln(&mut self, x: Var, p: &Option<LnParams>) -> Var {
        match p {
            Some(p) => {
                let g = self.tape.param(p.gamma);
                let b = self.tape.param(p.beta);
                self.tape.layer_norm(x, g, b)
            }
            None => x,
        }
    }

    pub fn ffn(&mut self, x: Var, p: &FfnParams) -> Var {
        let t = &mut *self.tape;
        let (w1, b1, w2, b2) = (t.param(p.w1), t.param(p.b1), t.param(p.w2), t.param(p.b2));
        let h = t.matmul(x, w1);
        let h = t.add_row(h, b1);
        let h = t.relu(h);
        let o = t.matmul(h, w2);
        t.add_row(o, b2)
    }
}

pub(crate) fn neighbors(lists: Vec<Vec<usize>>) -> Neighbors {
    Arc::new(lists)
}

pub(crate) fn check_finite(a: &Array2<f64>, what: &str) -> Result<(), ModelError> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite(what.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims {
            tokens: 20,
            ast_types: 10,
            targets: 15,
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let c = Config::tiny(8, 2);
        let a = Model::new(&c, dims(), 5).unwrap();
        assert_eq!(a, Model::new(&c, dims(), 5).unwrap());
        let b = Model::new(&c, dims(), 6).unwrap();
        assert!(a.store.ids().any(|id| a.store.value(id) != b.store.value(id)));
    }

    #[test]
    fn counted_parameters_match_the_formula() {
        for c in [
            Config::tiny(8, 2),
            Config { two_hop: true, ..Config::tiny(8, 3) },
            Config { layer_norm: false, decoder_layers: Some(1), ..Config::tiny(16, 2) },
            Config { ape: ApeMode::All, ..Config::tiny(8, 1) },
        ] {
            let m = Model::new(&c, dims(), 0).unwrap();
            assert_eq!(m.param_count(), c.param_count());
        }
    }

    #[test]
    fn layout_names_and_norm_init() {
        let m = Model::new(&Config::tiny(8, 1), dims(), 0).unwrap();
        assert_eq!(m.store.name(ParamId(0)), "encoder.token_embedding");
        assert_eq!(m.store.value(m.encoder.token_embedding).dim(), (20, 8));
        let ln = m.encoder.blocks[0].ln1.as_ref().unwrap();
        assert!(m.store.value(ln.gamma).iter().all(|x| *x == 1.0));
        assert!(m.store.value(ln.beta).iter().all(|x| *x == 0.0));
        assert_eq!(m.store.value(m.decoder.out_w).dim(), (8, 15));
        assert!(m.encoder.ape.is_none());
    }
}
