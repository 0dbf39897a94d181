//! Graphviz export, optionally annotated with attention weights.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scg::{EdgeKind, Scg, ScgNodeKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DotError {
    #[error("attention map does not match the graph: {0}")]
    Mismatch(String),
}

/// Attention of each node over its neighbors: `rows[i]` lists `(j, weight)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionWeights {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl AttentionWeights {
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.rows.get(i)?.iter().find(|(k, _)| *k == j).map(|(_, w)| *w)
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders a DOT digraph. AST-AST edges are blue, AST-token edges red; with
/// attention each edge is drawn in both directions (token-to-AST in yellow)
/// labelled with the weight the source node puts on the target.
pub fn export_dot(scg: &Scg, attention: Option<&AttentionWeights>) -> Result<String, DotError> {
    if let Some(att) = attention {
        if att.rows.len() != scg.nodes.len() {
            return Err(DotError::Mismatch(format!(
                "{} attention rows for {} nodes",
                att.rows.len(),
                scg.nodes.len()
            )));
        }
        if let Some((i, j)) = att
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |(j, _)| (i, *j)))
            .find(|(_, j)| *j >= scg.nodes.len())
        {
            return Err(DotError::Mismatch(format!("row {i} references node {j}")));
        }
    }

    let mut out = String::new();
    let name = if scg.id.is_empty() { "scg" } else { scg.id.as_str() };
    writeln!(out, "digraph \"{}\" {{", escape(name)).unwrap();
    writeln!(out, "  node [fontname=\"Helvetica\"];").unwrap();
    for n in &scg.nodes {
        let (shape, fill) = match n.kind {
            ScgNodeKind::Ast => ("box", "#f4a460"),
            ScgNodeKind::Token => ("ellipse", "#90ee90"),
        };
        let mut attrs = format!(
            "label=\"{}\", shape={shape}, style=filled, fillcolor=\"{fill}\"",
            escape(&n.attr)
        );
        if let Some(w) = attention.and_then(|a| a.weight(n.id, n.id)) {
            write!(attrs, ", xlabel=\"self {w:.4}\"").unwrap();
        }
        writeln!(out, "  n{} [{attrs}];", n.id).unwrap();
    }

    for e in &scg.edges {
        let (a, b) = (e.0, e.1);
        let forward_color = match e.2 {
            EdgeKind::AstAst => "blue",
            EdgeKind::AstToken => "red",
        };
        match attention {
            None => {
                writeln!(out, "  n{a} -> n{b} [dir=none, color={forward_color}];").unwrap();
            }
            Some(att) => {
                let backward_color = match e.2 {
                    EdgeKind::AstAst => "blue",
                    EdgeKind::AstToken => "gold",
                };
                for (src, dst, color) in [(a, b, forward_color), (b, a, backward_color)] {
                    let w = att.weight(src, dst).ok_or_else(|| {
                        DotError::Mismatch(format!("no weight for edge {src} -> {dst}"))
                    })?;
                    writeln!(
                        out,
                        "  n{src} -> n{dst} [color={color}, label=\"{w:.4}\", penwidth={:.3}];",
                        0.5 + 4.0 * w
                    )
                    .unwrap();
                }
            }
        }
    }
    out.push_str("}\n");
    Ok(out)
}
