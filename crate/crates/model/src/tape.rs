//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! read in place from a borrowed [`ParamStore`]; [`Tape::backward`] walks the
//! records in reverse and accumulates parameter gradients into [`Grads`].
//!
//! Attention is a single fused op: query row `i` attends only to the key rows
//! listed in `neighbors[i]` (ascending), which is how graph masks, causal
//! masks and memory padding are all expressed. A row with no neighbors
//! produces zeros.

use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::Rng;

use scg_core::vocab::PAD;

use crate::params::{Grads, ParamId, ParamStore};

/// Per head, per row: `(key, weight)` over the row's neighbors.
pub type HeadWeights = Vec<Vec<Vec<(usize, f64)>>>;

pub const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

pub type Neighbors = Arc<Vec<Vec<usize>>>;

enum Op {
    Param(ParamId),
    Const,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Mul(Var, Array2<f64>),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<f64>,
        inv_std: Vec<f64>,
    },
    Embed {
        rows: Vec<Option<(ParamId, usize)>>,
        scale: f64,
    },
    Rows {
        x: Var,
        rows: Vec<usize>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        neighbors: Neighbors,
        /// Softmax weights per `(row, head)`, aligned with `neighbors[row]`.
        probs: Vec<Vec<f64>>,
    },
    Nll {
        logits: Var,
        targets: Vec<usize>,
        softmax: Array2<f64>,
    },
}

struct Node {
    value: Option<Array2<f64>>,
    op: Op,
}

pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape { store, nodes: Vec::new() }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(standard(value)),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.store.value(id),
            _ => node.value.as_ref().expect("non-parameter nodes hold a value"),
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Const)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.ncols(), bv.nrows(), "matmul shape mismatch");
        let out = av.dot(bv);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape mismatch");
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    /// `x + bias` with `bias` shaped `[1, n]` broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(bias));
        assert_eq!((1, xv.ncols()), bv.dim(), "bias shape mismatch");
        let out = xv + bv;
        self.push(out, Op::AddRow(x, bias))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x) * s;
        self.push(out, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    /// Element-wise product with a constant matrix.
    pub fn mul_const(&mut self, x: Var, m: Array2<f64>) -> Var {
        assert_eq!(self.value(x).dim(), m.dim(), "mask shape mismatch");
        let out = self.value(x) * &m;
        self.push(out, Op::Mul(x, m))
    }

    /// Inverted dropout; identity when `p == 0`.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, rng: &mut R) -> Var {
        if p == 0.0 {
            return x;
        }
        let keep = 1.0 / (1.0 - p);
        let mask = self.value(x).mapv(|_| if rng.random::<f64>() >= p { keep } else { 0.0 });
        self.mul_const(x, mask)
    }

    /// Row-wise normalization with learned scale and shift (`[1, n]` each).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Gathers `scale * table[id]` rows; `None` rows are zero.
    pub fn embed(&mut self, rows: Vec<Option<(ParamId, usize)>>, width: usize, scale: f64) -> Var {
        let mut out = Array2::zeros((rows.len(), width));
        for (r, src) in rows.iter().enumerate() {
            if let Some((table, id)) = src {
                let t = self.store.value(*table);
                assert_eq!(t.ncols(), width, "embedding width mismatch");
                out.row_mut(r).scaled_add(scale, &t.row(*id));
            }
        }
        self.push(out, Op::Embed { rows, scale })
    }

    /// Selects (and possibly repeats) rows of `x`.
    pub fn rows(&mut self, x: Var, rows: Vec<usize>) -> Var {
        let out = self.value(x).select(Axis(0), &rows);
        self.push(out, Op::Rows { x, rows })
    }

    /// Multi-head scaled dot-product attention restricted to neighbor lists.
    /// `q`, `k` are `[*, heads * d_k]`, `v` is `[*, heads * d_v]`; the result
    /// is the concatenation of head outputs, `[rows(q), heads * d_v]`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, neighbors: Neighbors) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        assert_eq!(neighbors.len(), qv.nrows(), "one neighbor list per query row");
        assert_eq!(kv.nrows(), vv.nrows(), "keys and values disagree");
        assert_eq!(qv.ncols(), kv.ncols(), "queries and keys disagree");
        assert!(qv.ncols() % heads == 0 && vv.ncols() % heads == 0, "head split");
        let (dk, dv) = (qv.ncols() / heads, vv.ncols() / heads);
        let (qc, kc, vc) = (qv.ncols(), kv.ncols(), vv.ncols());
        let scale = 1.0 / (dk as f64).sqrt();
        let (qs, ks, vs) = (qv.as_slice().unwrap(), kv.as_slice().unwrap(), vv.as_slice().unwrap());

        let mut out = Array2::<f64>::zeros((qv.nrows(), vc));
        let os = out.as_slice_mut().unwrap();
        let mut probs = Vec::with_capacity(qv.nrows() * heads);
        for (i, nb) in neighbors.iter().enumerate() {
            for h in 0..heads {
                let qi = &qs[i * qc + h * dk..i * qc + (h + 1) * dk];
                let mut p: Vec<f64> = nb
                    .iter()
                    .map(|&j| dot(qi, &ks[j * kc + h * dk..j * kc + (h + 1) * dk]) * scale)
                    .collect();
                if !p.is_empty() {
                    let m = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    p.iter_mut().for_each(|x| *x = (*x - m).exp());
                    let z: f64 = p.iter().sum();
                    p.iter_mut().for_each(|x| *x /= z);
                    let orow = &mut os[i * vc + h * dv..i * vc + (h + 1) * dv];
                    for (w, &j) in p.iter().zip(nb) {
                        let vj = &vs[j * vc + h * dv..j * vc + (h + 1) * dv];
                        orow.iter_mut().zip(vj).for_each(|(o, x)| *o += w * x);
                    }
                }
                probs.push(p);
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                neighbors,
                probs,
            },
        )
    }

    /// Attention weights of an attention node: `[head][row]` lists of
    /// `(key, weight)`.
    pub fn attention_weights(&self, v: Var) -> Option<HeadWeights> {
        match &self.nodes[v.0].op {
            Op::Attention {
                heads, neighbors, probs, ..
            } => Some(
                (0..*heads)
                    .map(|h| {
                        neighbors
                            .iter()
                            .enumerate()
                            .map(|(i, nb)| nb.iter().copied().zip(probs[i * heads + h].iter().copied()).collect())
                            .collect()
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Summed negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`; rows whose target is the pad id contribute nothing. `[1, 1]`.
    pub fn nll(&mut self, logits: Var, targets: Vec<usize>) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.nrows(), targets.len(), "one target per logit row");
        let mut softmax = lv.clone();
        let mut total = 0.0;
        for (mut row, &t) in softmax.rows_mut().into_iter().zip(&targets) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - m).exp());
            let z = row.sum();
            if t != PAD {
                total -= (row[t] / z).ln();
            }
            row /= z;
        }
        self.push(
            Array2::from_elem((1, 1), total),
            Op::Nll {
                logits,
                targets,
                softmax,
            },
        )
    }

    /// Accumulates `seed * d(root)/d(param)` into `grads`, treating `root`'s
    /// every entry as weighted by `seed`.
    pub fn backward(&self, root: Var, seed: f64, grads: &mut Grads) {
        let mut g: Vec<Option<Array2<f64>>> = (0..=root.0).map(|_| None).collect();
        g[root.0] = Some(Array2::from_elem(self.value(root).dim(), seed));

        fn acc(slot: &mut Option<Array2<f64>>, d: Array2<f64>) {
            match slot {
                Some(s) => *s += &d,
                None => *slot = Some(d),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(gi) = g[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Param(id) => grads.add(*id, &gi),
                Op::Const => {}
                Op::MatMul(a, b) => {
                    let da = gi.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&gi);
                    acc(&mut g[a.0], da);
                    acc(&mut g[b.0], db);
                }
                Op::Add(a, b) => {
                    acc(&mut g[b.0], gi.clone());
                    acc(&mut g[a.0], gi);
                }
                Op::AddRow(x, b) => {
                    acc(&mut g[b.0], gi.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut g[x.0], gi);
                }
                Op::Scale(x, s) => acc(&mut g[x.0], gi * *s),
                Op::Relu(x) => {
                    let out = self.value(Var(idx));
                    let d = ndarray::Zip::from(&gi).and(out).map_collect(|g, y| if *y > 0.0 { *g } else { 0.0 });
                    acc(&mut g[x.0], d);
                }
                Op::Mul(x, m) => acc(&mut g[x.0], gi * m),
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    acc(&mut g[beta.0], gi.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut g[gamma.0], (&gi * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let gxhat = &gi * self.value(*gamma);
                    let n = xhat.ncols() as f64;
                    let mut dx = Array2::zeros(gi.dim());
                    for r in 0..gi.nrows() {
                        let gr = gxhat.row(r);
                        let xr = xhat.row(r);
                        let s1 = gr.sum();
                        let s2 = gr.dot(&xr);
                        let is = inv_std[r];
                        for c in 0..gi.ncols() {
                            dx[[r, c]] = is / n * (n * gr[c] - s1 - xr[c] * s2);
                        }
                    }
                    acc(&mut g[x.0], dx);
                }
                Op::Embed { rows, scale } => {
                    for (r, src) in rows.iter().enumerate() {
                        if let Some((table, id)) = src {
                            grads.add_row(*table, self.store.value(*table).dim(), *id, gi.row(r), *scale);
                        }
                    }
                }
                Op::Rows { x, rows } => {
                    let mut dx = Array2::zeros(self.value(*x).dim());
                    for (r, &src) in rows.iter().enumerate() {
                        dx.row_mut(src).scaled_add(1.0, &gi.row(r));
                    }
                    acc(&mut g[x.0], dx);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    neighbors,
                    probs,
                } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let heads = *heads;
                    let (dk, dv) = (qv.ncols() / heads, vv.ncols() / heads);
                    let (qc, kc, vc) = (qv.ncols(), kv.ncols(), vv.ncols());
                    let scale = 1.0 / (dk as f64).sqrt();
                    let (qs, ks, vs) = (qv.as_slice().unwrap(), kv.as_slice().unwrap(), vv.as_slice().unwrap());
                    let gs = gi.as_slice().unwrap();
                    let mut dq = Array2::<f64>::zeros(qv.dim());
                    let mut dk_ = Array2::<f64>::zeros(kv.dim());
                    let mut dv_ = Array2::<f64>::zeros(vv.dim());
                    {
                        let (dqs, dks, dvs) = (
                            dq.as_slice_mut().unwrap(),
                            dk_.as_slice_mut().unwrap(),
                            dv_.as_slice_mut().unwrap(),
                        );
                        let mut dp = Vec::new();
                        for (i, nb) in neighbors.iter().enumerate() {
                            for h in 0..heads {
                                let p = &probs[i * heads + h];
                                if p.is_empty() {
                                    continue;
                                }
                                let go = &gs[i * vc + h * dv..i * vc + (h + 1) * dv];
                                dp.clear();
                                for (w, &j) in p.iter().zip(nb) {
                                    let vj = &vs[j * vc + h * dv..j * vc + (h + 1) * dv];
                                    dp.push(dot(go, vj));
                                    let dvj = &mut dvs[j * vc + h * dv..j * vc + (h + 1) * dv];
                                    dvj.iter_mut().zip(go).for_each(|(d, x)| *d += w * x);
                                }
                                let pd: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
                                let qi_off = i * qc + h * dk;
                                for ((w, d), &j) in p.iter().zip(&dp).zip(nb) {
                                    let ds = w * (d - pd) * scale;
                                    let kj_off = j * kc + h * dk;
                                    for c in 0..dk {
                                        dqs[qi_off + c] += ds * ks[kj_off + c];
                                        dks[kj_off + c] += ds * qs[qi_off + c];
                                    }
                                }
                            }
                        }
                    }
                    acc(&mut g[q.0], dq);
                    acc(&mut g[k.0], dk_);
                    acc(&mut g[v.0], dv_);
                }
                Op::Nll {
                    logits,
                    targets,
                    softmax,
                } => {
                    let seed = gi[[0, 0]];
                    let mut d = softmax.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        if t == PAD {
                            d.row_mut(r).fill(0.0);
                        } else {
                            d[[r, t]] -= 1.0;
                        }
                    }
                    acc(&mut g[logits.0], d * seed);
                }
            }
        }
    }
}
