//! Integer encoding of SCGs and padded batches.

use ndarray::{Array2, Array3};

use crate::scg::{Scg, ScgNodeKind, Variant};
use crate::vocab::{Vocab, BOS, EOS, PAD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NodeKind {
    Token,
    Ast,
    #[default]
    Pad,
}

/// One graph ready for the encoder.
///
/// `node_ids[i]` indexes the token namespace for token-nodes and the AST-type
/// namespace for AST nodes. `adjacency[i]` is the sorted neighbor set `N_i`
/// and always contains `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedGraph {
    pub node_ids: Vec<usize>,
    pub node_kind: Vec<NodeKind>,
    pub adjacency: Vec<Vec<usize>>,
    /// Node index of the k-th token in sequence order.
    pub token_order: Vec<usize>,
    /// Absolute position per node: the token order for token-nodes, the
    /// first contained token's order for AST nodes.
    pub positions: Vec<usize>,
    /// `[BOS, summary..., EOS]` in the target namespace.
    pub target_ids: Vec<usize>,
}

impl EncodedGraph {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    /// Breadth-first hop distances from `src`; `usize::MAX` when unreachable.
    pub fn distances_from(&self, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = std::collections::VecDeque::from([src]);
        dist[src] = 0;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        dist
    }
}

pub fn encode_graph(scg: &Scg, vocab: &Vocab) -> EncodedGraph {
    let n = scg.nodes.len();
    let mut node_ids = Vec::with_capacity(n);
    let mut node_kind = Vec::with_capacity(n);
    for node in &scg.nodes {
        match node.kind {
            ScgNodeKind::Token => {
                node_ids.push(vocab.tokens.id(&node.attr));
                node_kind.push(NodeKind::Token);
            }
            ScgNodeKind::Ast => {
                node_ids.push(vocab.ast_types.id(&node.attr));
                node_kind.push(NodeKind::Ast);
            }
        }
    }

    let mut adjacency: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for e in &scg.edges {
        adjacency[e.0].push(e.1);
        adjacency[e.1].push(e.0);
    }
    let mut tokens: Vec<(usize, usize)> = scg
        .nodes
        .iter()
        .filter_map(|node| node.order.filter(|_| node.kind == ScgNodeKind::Token).map(|o| (o, node.id)))
        .collect();
    tokens.sort_unstable();
    let token_order: Vec<usize> = tokens.iter().map(|t| t.1).collect();
    if scg.variant == Variant::Variant2 {
        for &a in &token_order {
            adjacency[a].extend(token_order.iter().copied());
        }
    }
    for nbrs in &mut adjacency {
        nbrs.sort_unstable();
        nbrs.dedup();
    }

    let positions = scg
        .nodes
        .iter()
        .map(|node| match node.kind {
            ScgNodeKind::Token => node.order.unwrap_or(0),
            ScgNodeKind::Ast => {
                let inside = tokens
                    .iter()
                    .find(|(_, t)| node.span.contains(&scg.nodes[*t].span))
                    .or_else(|| tokens.iter().find(|(_, t)| scg.nodes[*t].span.start() >= node.span.start()));
                inside.map(|(o, _)| *o).unwrap_or(0)
            }
        })
        .collect();

    let target_ids = std::iter::once(BOS)
        .chain(scg.summary.iter().map(|w| vocab.targets.id(w)))
        .chain(std::iter::once(EOS))
        .collect();

    EncodedGraph {
        node_ids,
        node_kind,
        adjacency,
        token_order,
        positions,
        target_ids,
    }
}

/// Graphs padded to the largest graph in the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    /// `[B, V_max]`, padded with `PAD`.
    pub node_ids: Array2<usize>,
    pub node_kind: Array2<NodeKind>,
    pub positions: Array2<usize>,
    /// `[B, V_max, V_max]`; `masks[b, i, j]` is true when node i may attend to j.
    pub masks: Array3<bool>,
    /// `[B, L_max]` node index of each token position (0 where padded).
    pub token_index: Array2<usize>,
    /// `[B, L_max]` true for real token positions.
    pub token_mask: Array2<bool>,
    /// `[B, T_max]` target ids, padded with `PAD`.
    pub targets: Array2<usize>,
    pub node_counts: Vec<usize>,
    pub token_counts: Vec<usize>,
    pub target_lens: Vec<usize>,
}

impl GraphBatch {
    pub fn len(&self) -> usize {
        self.node_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_counts.is_empty()
    }

    pub fn max_nodes(&self) -> usize {
        self.node_ids.ncols()
    }

    /// Neighbor lists recovered from the mask of graph `b`; padding rows are
    /// empty.
    pub fn neighbors(&self, b: usize) -> Vec<Vec<usize>> {
        let v = self.max_nodes();
        (0..v)
            .map(|i| (0..v).filter(|&j| self.masks[[b, i, j]]).collect())
            .collect()
    }

    /// Token node indices of graph `b` in sequence order.
    pub fn token_rows(&self, b: usize) -> Vec<usize> {
        (0..self.token_counts[b]).map(|l| self.token_index[[b, l]]).collect()
    }
}

/// Pads to per-batch maxima. Panics on an empty slice.
pub fn batch(graphs: &[EncodedGraph]) -> GraphBatch {
    assert!(!graphs.is_empty(), "batch needs at least one graph");
    let b = graphs.len();
    let v_max = graphs.iter().map(EncodedGraph::len).max().unwrap_or(0);
    let l_max = graphs.iter().map(|g| g.token_order.len()).max().unwrap_or(0);
    let t_max = graphs.iter().map(|g| g.target_ids.len()).max().unwrap_or(0);

    let mut out = GraphBatch {
        node_ids: Array2::from_elem((b, v_max), PAD),
        node_kind: Array2::from_elem((b, v_max), NodeKind::Pad),
        positions: Array2::zeros((b, v_max)),
        masks: Array3::from_elem((b, v_max, v_max), false),
        token_index: Array2::zeros((b, l_max)),
        token_mask: Array2::from_elem((b, l_max), false),
        targets: Array2::from_elem((b, t_max), PAD),
        node_counts: graphs.iter().map(EncodedGraph::len).collect(),
        token_counts: graphs.iter().map(|g| g.token_order.len()).collect(),
        target_lens: graphs.iter().map(|g| g.target_ids.len()).collect(),
    };
    for (k, g) in graphs.iter().enumerate() {
        for i in 0..g.len() {
            out.node_ids[[k, i]] = g.node_ids[i];
            out.node_kind[[k, i]] = g.node_kind[i];
            out.positions[[k, i]] = g.positions[i];
            for &j in &g.adjacency[i] {
                out.masks[[k, i, j]] = true;
            }
        }
        for (l, &node) in g.token_order.iter().enumerate() {
            out.token_index[[k, l]] = node;
            out.token_mask[[k, l]] = true;
        }
        for (t, &id) in g.target_ids.iter().enumerate() {
            out.targets[[k, t]] = id;
        }
    }
    out
}
