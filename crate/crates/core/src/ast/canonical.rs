//! Canonical AST JSON: the entry point for trees produced by external
//! parsers.
//!
//! ```json
//! {"source": "a=b", "nodes": [{"id": 0, "type": "AssignExpr", "span": [1,1,1,3], "parent": null}, ...]}
//! ```
//!
//! Children are ordered by ascending id among nodes sharing a parent. The
//! optional `id`, `summary` and `tokens` fields carry a sample name, its
//! reference summary, and a pre-lexed token stream for sources the built-in
//! lexer cannot read.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{AstError, AstNode, AstTree, NodeId, RawToken, SourceSpan, TokenKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalNode {
    pub id: i64,
    #[serde(rename = "type")]
    pub node_type: String,
    pub span: SourceSpan,
    pub parent: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalToken {
    pub text: String,
    pub kind: TokenKind,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalAst {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub source: String,
    pub nodes: Vec<CanonicalNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<CanonicalToken>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<Vec<String>>,
}

impl CanonicalAst {
    pub fn parse(json: &str) -> Result<Self, AstError> {
        serde_json::from_str(json).map_err(|e| AstError::Schema(e.to_string()))
    }

    pub fn from_tree(tree: &AstTree, source: &str) -> Self {
        CanonicalAst {
            id: None,
            source: source.to_string(),
            nodes: tree
                .nodes
                .iter()
                .map(|n| CanonicalNode {
                    id: n.id.0 as i64,
                    node_type: n.node_type.clone(),
                    span: n.span,
                    parent: n.parent.map(|p| p.0 as i64),
                })
                .collect(),
            tokens: None,
            summary: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("canonical AST serializes")
    }

    /// Explicit tokens if present, otherwise the built-in lexer over `source`.
    pub fn raw_tokens(&self) -> Result<Vec<RawToken>, AstError> {
        match &self.tokens {
            Some(tokens) => tokens
                .iter()
                .map(|t| {
                    if t.text.is_empty() {
                        Err(AstError::Schema("token with empty text".into()))
                    } else {
                        Ok(RawToken {
                            text: t.text.clone(),
                            span: t.span,
                            kind: t.kind,
                        })
                    }
                })
                .collect(),
            None => super::lex(&self.source),
        }
    }

    /// Validates the node list and re-indexes it densely in pre-order.
    pub fn tree(&self) -> Result<AstTree, AstError> {
        if self.nodes.is_empty() {
            return Err(AstError::Schema("document has no nodes".into()));
        }
        let mut by_id: HashMap<i64, &CanonicalNode> = HashMap::with_capacity(self.nodes.len());
        for n in &self.nodes {
            if n.node_type.is_empty() {
                return Err(AstError::Schema(format!("node {} has an empty type", n.id)));
            }
            if by_id.insert(n.id, n).is_some() {
                return Err(AstError::Schema(format!("duplicate node id {}", n.id)));
            }
        }

        let mut roots = Vec::new();
        let mut children: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
        for n in &self.nodes {
            match n.parent {
                None => roots.push(n.id),
                Some(p) => {
                    let parent = by_id.get(&p).ok_or_else(|| {
                        AstError::Structure(format!("node {} has unknown parent {p}", n.id))
                    })?;
                    if !parent.span.contains(&n.span) {
                        return Err(AstError::Structure(format!(
                            "node {} span {} escapes parent {p} span {}",
                            n.id, n.span, parent.span
                        )));
                    }
                    children.entry(p).or_default().push(n.id);
                }
            }
        }
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(AstError::Structure("no root node (every node has a parent)".into())),
            _ => return Err(AstError::Structure(format!("multiple roots: {roots:?}"))),
        };
        for kids in children.values_mut() {
            kids.sort_unstable();
        }

        // Pre-order walk from the root; anything left over sits on a cycle.
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            order.push(id);
            if let Some(kids) = children.get(&id) {
                stack.extend(kids.iter().rev().copied());
            }
        }
        if order.len() != self.nodes.len() {
            return Err(AstError::Structure(format!(
                "{} node(s) unreachable from the root (parent cycle)",
                self.nodes.len() - order.len()
            )));
        }

        let dense: HashMap<i64, NodeId> = order
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, NodeId(i)))
            .collect();
        let nodes = order
            .iter()
            .map(|id| {
                let n = by_id[id];
                AstNode {
                    id: dense[id],
                    node_type: n.node_type.clone(),
                    span: n.span,
                    parent: n.parent.map(|p| dense[&p]),
                    children: children
                        .get(id)
                        .map(|kids| kids.iter().map(|k| dense[k]).collect())
                        .unwrap_or_default(),
                }
            })
            .collect();
        Ok(AstTree {
            nodes,
            root: NodeId(0),
        })
    }
}

/// Parses and validates a canonical AST document.
pub fn ingest_ast(json: &str) -> Result<AstTree, AstError> {
    CanonicalAst::parse(json)?.tree()
}
