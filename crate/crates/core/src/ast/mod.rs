//! Span-annotated syntax trees.
//!
//! Trees come either from the built-in mini-language parser ([`parse_mini`])
//! or from an external parser through the canonical JSON document accepted by
//! [`ingest_ast`]. Both paths produce an [`AstTree`] whose node ids are dense
//! and assigned in pre-order, so the root is always id 0.

mod canonical;
mod lexer;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use canonical::{ingest_ast, CanonicalAst, CanonicalNode, CanonicalToken};
pub use lexer::lex;
pub use parser::parse_mini;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AstError {
    #[error("lex error at line {line}, col {col}: unexpected character {found:?}")]
    Lex { line: u32, col: u32, found: char },
    #[error("parse error at line {line}, col {col}: found {found}, expected one of {expected:?}")]
    Parse {
        line: u32,
        col: u32,
        found: String,
        expected: Vec<String>,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("structure error: {0}")]
    Structure(String),
}

/// Inclusive, 1-based `(line, col)` range. `(1,5)-(1,7)` covers columns 5, 6
/// and 7 of the first line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct SourceSpan {
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl SourceSpan {
    pub fn new(start_line: u32, start_col: u32, end_line: u32, end_col: u32) -> Result<Self, AstError> {
        let span = SourceSpan {
            start_line,
            start_col,
            end_line,
            end_col,
        };
        if start_line == 0 || start_col == 0 || end_line == 0 || end_col == 0 {
            return Err(AstError::Schema(format!("span {span} has a zero index")));
        }
        if span.start() > span.end() {
            return Err(AstError::Schema(format!("span {span} ends before it starts")));
        }
        Ok(span)
    }

    /// Single-line span; panics on invalid input, intended for literals in tests.
    pub fn line(line: u32, start_col: u32, end_col: u32) -> Self {
        SourceSpan::new(line, start_col, line, end_col).expect("valid span")
    }

    pub fn start(&self) -> (u32, u32) {
        (self.start_line, self.start_col)
    }

    pub fn end(&self) -> (u32, u32) {
        (self.end_line, self.end_col)
    }

    pub fn contains(&self, other: &SourceSpan) -> bool {
        self.start() <= other.start() && other.end() <= self.end()
    }

    pub fn hull(&self, other: &SourceSpan) -> SourceSpan {
        let (sl, sc) = self.start().min(other.start());
        let (el, ec) = self.end().max(other.end());
        SourceSpan {
            start_line: sl,
            start_col: sc,
            end_line: el,
            end_col: ec,
        }
    }

    /// Size key used to break direct-parent ties: line extent first, then
    /// column extent.
    pub fn width(&self) -> (u32, i64) {
        (
            self.end_line - self.start_line,
            self.end_col as i64 - self.start_col as i64,
        )
    }
}

impl TryFrom<[u32; 4]> for SourceSpan {
    type Error = AstError;

    fn try_from(v: [u32; 4]) -> Result<Self, Self::Error> {
        SourceSpan::new(v[0], v[1], v[2], v[3])
    }
}

impl From<SourceSpan> for [u32; 4] {
    fn from(s: SourceSpan) -> Self {
        [s.start_line, s.start_col, s.end_line, s.end_col]
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{})-({},{})",
            self.start_line, self.start_col, self.end_line, self.end_col
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKind {
    Identifier,
    Keyword,
    Operator,
    NumberLiteral,
    StringLiteral,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawToken {
    pub text: String,
    pub span: SourceSpan,
    pub kind: TokenKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub id: NodeId,
    pub node_type: String,
    pub span: SourceSpan,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

/// A syntax tree with dense pre-order ids (`nodes[i].id == NodeId(i)`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstTree {
    pub nodes: Vec<AstNode>,
    pub root: NodeId,
}

impl AstTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &AstNode {
        &self.nodes[id.0]
    }

    pub fn root_node(&self) -> &AstNode {
        self.node(self.root)
    }

    /// Number of parent/child links.
    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.children.len()).sum()
    }

    /// Depth of every node, root = 0.
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.nodes.len()];
        for id in self.preorder() {
            if let Some(p) = self.node(id).parent {
                depth[id.0] = depth[p.0] + 1;
            }
        }
        depth
    }

    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.node(id).children.iter().rev().copied());
        }
        out
    }

    /// Checks every tree invariant: single root, consistent links,
    /// connectivity, dense pre-order ids and child spans nested in parents.
    pub fn validate(&self) -> Result<(), AstError> {
        if self.nodes.is_empty() {
            return Err(AstError::Structure("tree has no nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id.0 != i {
                return Err(AstError::Structure(format!("node at index {i} has id {}", n.id)));
            }
        }
        let roots: Vec<_> = self.nodes.iter().filter(|n| n.parent.is_none()).collect();
        if roots.len() != 1 || roots[0].id != self.root {
            return Err(AstError::Structure(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        for n in &self.nodes {
            for c in &n.children {
                let child = self
                    .nodes
                    .get(c.0)
                    .ok_or_else(|| AstError::Structure(format!("dangling child {c}")))?;
                if child.parent != Some(n.id) {
                    return Err(AstError::Structure(format!(
                        "child {c} does not point back to {}",
                        n.id
                    )));
                }
                if !n.span.contains(&child.span) {
                    return Err(AstError::Structure(format!(
                        "child {c} span {} escapes parent span {}",
                        child.span, n.span
                    )));
                }
            }
            if let Some(p) = n.parent {
                let parent = self
                    .nodes
                    .get(p.0)
                    .ok_or_else(|| AstError::Structure(format!("dangling parent {p}")))?;
                if !parent.children.contains(&n.id) {
                    return Err(AstError::Structure(format!("{p} does not list child {}", n.id)));
                }
            }
        }
        let order = self.preorder();
        if order.len() != self.nodes.len() || order.iter().enumerate().any(|(i, id)| id.0 != i) {
            return Err(AstError::Structure("ids are not a dense pre-order numbering".into()));
        }
        Ok(())
    }
}
