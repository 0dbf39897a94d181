//! GN-Transformer encoder.
//!
//! A block is an attention sublayer restricted to each node's neighbor set
//! `N_i` followed by a node sublayer:
//!
//! ```text
//! x  = h + dropout(MHA_N(h))            (2-hop: x = x + dropout(MHA_N(x)))
//! y  = LN1(x)
//! h' = LN2(dropout(FFN(y)) + y)
//! ```
//!
//! Input features are `sqrt(d_model) * embedding` from the token or AST-type
//! table (by node kind), plus an optional positional embedding. After the
//! last block only token-node rows are kept, in token order.

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use scg_core::{AttentionWeights, EncodedGraph, GraphBatch, NodeKind};

use crate::config::ApeMode;
use crate::error::ModelError;
use crate::model::{check_finite, neighbors, AttnParams, BlockParams, Dropout, Forward, Model};
use crate::params::ParamStore;
use crate::tape::{HeadWeights, Neighbors, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout active, masks drawn from a generator seeded with `seed`.
    Train { seed: u64 },
}

/// Encoder inputs of one graph, padded to the batch size it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderInput {
    pub node_ids: Vec<usize>,
    pub kinds: Vec<NodeKind>,
    pub positions: Vec<usize>,
    pub neighbors: Neighbors,
    /// Node row of each token position; padded positions point at row 0.
    pub token_rows: Vec<usize>,
    pub token_mask: Vec<bool>,
}

impl EncoderInput {
    pub fn from_batch(batch: &GraphBatch, b: usize) -> Self {
        EncoderInput {
            node_ids: batch.node_ids.row(b).to_vec(),
            kinds: batch.node_kind.row(b).to_vec(),
            positions: batch.positions.row(b).to_vec(),
            neighbors: neighbors(batch.neighbors(b)),
            token_rows: batch.token_index.row(b).to_vec(),
            token_mask: batch.token_mask.row(b).to_vec(),
        }
    }

    pub fn from_graph(g: &EncodedGraph) -> Self {
        EncoderInput {
            node_ids: g.node_ids.clone(),
            kinds: g.node_kind.clone(),
            positions: g.positions.clone(),
            neighbors: neighbors(g.adjacency.clone()),
            token_rows: g.token_order.clone(),
            token_mask: vec![true; g.token_order.len()],
        }
    }

    pub fn token_count(&self) -> usize {
        self.token_mask.iter().filter(|m| **m).count()
    }
}

/// Attention weights of one attention sublayer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAttention {
    pub block: usize,
    /// 0 for the first attention sublayer, 1 for the second in 2-hop blocks.
    pub hop: usize,
    /// `heads[h][i]` lists `(j, weight)` for `j` in `N_i`.
    pub heads: HeadWeights,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttentionMap {
    pub layers: Vec<LayerAttention>,
}

impl AttentionMap {
    /// Weights of one sublayer for the first `nodes` rows, averaged over
    /// heads when `head` is `None`.
    pub fn weights(&self, layer: usize, head: Option<usize>, nodes: usize) -> Option<AttentionWeights> {
        let l = self.layers.get(layer)?;
        let selected: Vec<&Vec<Vec<(usize, f64)>>> = match head {
            Some(h) => vec![l.heads.get(h)?],
            None => l.heads.iter().collect(),
        };
        let n = selected.len() as f64;
        let rows = (0..nodes.min(selected[0].len()))
            .map(|i| {
                selected[0][i]
                    .iter()
                    .enumerate()
                    .map(|(k, (j, _))| (*j, selected.iter().map(|h| h[i][k].1).sum::<f64>() / n))
                    .collect()
            })
            .collect();
        Some(AttentionWeights { rows })
    }
}

/// Positional-table row for each node under `mode`, `None` where no
/// positional embedding is added.
pub fn ape_rows(kinds: &[NodeKind], positions: &[usize], mode: ApeMode, size: usize) -> Result<Vec<Option<usize>>, ModelError> {
    kinds
        .iter()
        .zip(positions)
        .map(|(k, &p)| {
            let used = !matches!((mode, k), (ApeMode::Off, _) | (_, NodeKind::Pad) | (ApeMode::Token, NodeKind::Ast));
            match used {
                false => Ok(None),
                true if p < size => Ok(Some(p)),
                true => Err(ModelError::PositionRange { position: p, size }),
            }
        })
        .collect()
}

/// `h0` plus the positional embedding rows selected by [`ape_rows`].
pub fn apply_ape(
    h0: &Array2<f64>,
    kinds: &[NodeKind],
    positions: &[usize],
    mode: ApeMode,
    table: &Array2<f64>,
) -> Result<Array2<f64>, ModelError> {
    if table.ncols() != h0.ncols() || kinds.len() != h0.nrows() || positions.len() != h0.nrows() {
        return Err(ModelError::Dimension("positional embedding inputs disagree".into()));
    }
    let mut out = h0.clone();
    for (i, r) in ape_rows(kinds, positions, mode, table.nrows())?.into_iter().enumerate() {
        if let Some(p) = r {
            out.row_mut(i).scaled_add(1.0, &table.row(p));
        }
    }
    Ok(out)
}

pub(crate) struct EncodedVars {
    /// `[V, d_model]` final features of every node row.
    pub nodes: Var,
    /// `[L, d_model]` token rows in sequence order (padded positions hold row 0).
    pub memory: Var,
    pub attention: Vec<(usize, usize, Var)>,
}

pub(crate) fn run_block(fwd: &mut Forward, h: Var, block: &BlockParams, nb: &Neighbors) -> (Var, Vec<Var>) {
    let (a, att) = fwd.mha(h, h, &block.attn, nb.clone());
    let a = fwd.drop(a);
    let mut x = fwd.tape.add(h, a);
    let mut maps = vec![att];
    if let Some(attn2) = &block.attn2 {
        let (a2, att2) = fwd.mha(x, x, attn2, nb.clone());
        let a2 = fwd.drop(a2);
        x = fwd.tape.add(x, a2);
        maps.push(att2);
    }
    let y = fwd.ln(x, &block.ln1);
    let f = fwd.ffn(y, &block.ffn);
    let f = fwd.drop(f);
    let z = fwd.tape.add(f, y);
    (fwd.ln(z, &block.ln2), maps)
}

pub(crate) fn encode_on_tape(fwd: &mut Forward, model: &Model, input: &EncoderInput) -> Result<EncodedVars, ModelError> {
    let enc = &model.encoder;
    let d = model.config.d_model;
    let v = input.node_ids.len();
    if input.kinds.len() != v || input.positions.len() != v || input.neighbors.len() != v {
        return Err(ModelError::Dimension("encoder input lengths disagree".into()));
    }
    if input.neighbors.iter().flatten().any(|&j| j >= v) || input.token_rows.iter().any(|&r| r >= v.max(1)) {
        return Err(ModelError::Dimension("neighbor or token index out of range".into()));
    }
    let mut rows = Vec::with_capacity(v);
    for (&id, kind) in input.node_ids.iter().zip(&input.kinds) {
        let (table, size) = match kind {
            NodeKind::Token => (enc.token_embedding, model.dims.tokens),
            NodeKind::Ast => (enc.ast_embedding, model.dims.ast_types),
            NodeKind::Pad => {
                rows.push(None);
                continue;
            }
        };
        if id >= size {
            return Err(ModelError::Dimension(format!("node id {id} outside a vocabulary of {size}")));
        }
        rows.push(Some((table, id)));
    }
    let mut h = fwd.tape.embed(rows, d, (d as f64).sqrt());
    if let Some(ape) = enc.ape {
        let size = model.store.value(ape).nrows();
        let pos = ape_rows(&input.kinds, &input.positions, model.config.ape, size)?;
        let e = fwd.tape.embed(pos.into_iter().map(|p| p.map(|p| (ape, p))).collect(), d, 1.0);
        h = fwd.tape.add(h, e);
    }
    h = fwd.drop(h);

    let mut attention = Vec::new();
    for (l, block) in enc.blocks.iter().enumerate() {
        let (next, maps) = run_block(fwd, h, block, &input.neighbors);
        attention.extend(maps.into_iter().enumerate().map(|(hop, a)| (l, hop, a)));
        h = next;
    }
    check_finite(fwd.tape.value(h), "encoder activations")?;
    let memory = if v == 0 {
        fwd.tape.constant(Array2::zeros((input.token_rows.len(), d)))
    } else {
        fwd.tape.rows(h, input.token_rows.clone())
    };
    Ok(EncodedVars { nodes: h, memory, attention })
}

pub(crate) fn collect_map(tape: &Tape, vars: &[(usize, usize, Var)]) -> AttentionMap {
    AttentionMap {
        layers: vars
            .iter()
            .map(|&(block, hop, v)| LayerAttention {
                block,
                hop,
                heads: tape.attention_weights(v).expect("attention node"),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    /// `[B, L_max, d_model]`; padded token positions are zero.
    pub tokens: Array3<f64>,
    pub token_mask: Array2<bool>,
    /// Final features of every (padded) node row, per graph.
    pub nodes: Vec<Array2<f64>>,
    pub maps: Vec<AttentionMap>,
}

pub fn encoder_forward(model: &Model, batch: &GraphBatch, mode: Mode) -> Result<EncoderOutput, ModelError> {
    let l_max = batch.token_mask.ncols();
    let d = model.config.d_model;
    let mut out = EncoderOutput {
        tokens: Array3::zeros((batch.len(), l_max, d)),
        token_mask: batch.token_mask.clone(),
        nodes: Vec::with_capacity(batch.len()),
        maps: Vec::with_capacity(batch.len()),
    };
    for b in 0..batch.len() {
        let input = EncoderInput::from_batch(batch, b);
        let mut tape = Tape::new(&model.store);
        let mut rng = match mode {
            Mode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed.wrapping_add(b as u64))),
            Mode::Eval => None,
        };
        let mut fwd = Forward {
            tape: &mut tape,
            dropout: rng.as_mut().map(|rng| Dropout {
                p: model.config.dropout,
                rng,
            }),
        };
        let vars = encode_on_tape(&mut fwd, model, &input)?;
        let mem = tape.value(vars.memory);
        for (l, &real) in input.token_mask.iter().enumerate() {
            if real {
                out.tokens.slice_mut(ndarray::s![b, l, ..]).assign(&mem.row(l));
            }
        }
        out.nodes.push(tape.value(vars.nodes).clone());
        out.maps.push(collect_map(&tape, &vars.attention));
    }
    Ok(out)
}

/// Runs the encoder blocks (evaluation mode) from given initial features.
pub fn run_blocks(store: &ParamStore, blocks: &[BlockParams], h0: &Array2<f64>, adjacency: &[Vec<usize>]) -> (Array2<f64>, AttentionMap) {
    let nb = neighbors(adjacency.to_vec());
    let mut tape = Tape::new(store);
    let mut fwd = Forward { tape: &mut tape, dropout: None };
    let mut h = fwd.tape.constant(h0.clone());
    let mut vars = Vec::new();
    for (l, block) in blocks.iter().enumerate() {
        let (next, maps) = run_block(&mut fwd, h, block, &nb);
        vars.extend(maps.into_iter().enumerate().map(|(hop, a)| (l, hop, a)));
        h = next;
    }
    (tape.value(h).clone(), collect_map(&tape, &vars))
}

/// Attention sublayer alone: `ā = Concat_γ(head_γ) W_O` with per-head
/// weights over `N_i`.
pub fn attention_block(store: &ParamStore, attn: &AttnParams, h: &Array2<f64>, adjacency: &[Vec<usize>]) -> (Array2<f64>, HeadWeights) {
    let mut tape = Tape::new(store);
    let mut fwd = Forward { tape: &mut tape, dropout: None };
    let x = fwd.tape.constant(h.clone());
    let (a, att) = fwd.mha(x, x, attn, neighbors(adjacency.to_vec()));
    (tape.value(a).clone(), tape.attention_weights(att).unwrap())
}

/// Node sublayer alone: `LN2(FFN(LN1(h + ā)) + LN1(h + ā))`.
pub fn node_block(store: &ParamStore, block: &BlockParams, h: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
    let mut tape = Tape::new(store);
    let mut fwd = Forward { tape: &mut tape, dropout: None };
    let hv = fwd.tape.constant(h.clone());
    let av = fwd.tape.constant(a.clone());
    let x = fwd.tape.add(hv, av);
    let y = fwd.ln(x, &block.ln1);
    let f = fwd.ffn(y, &block.ffn);
    let z = fwd.tape.add(f, y);
    let out = fwd.ln(z, &block.ln2);
    tape.value(out).clone()
}
