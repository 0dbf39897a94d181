//! Syntax-Code Graph construction.
//!
//! An SCG holds every AST node plus one node per normalized source
//! (sub)token. Each token-node is linked to the direct parent of the token
//! it came from: the deepest AST node whose span contains the token.
//! Node ids are dense: AST nodes first in pre-order, then token-nodes in
//! sequence order.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{AstTree, NodeId, RawToken, SourceSpan, TokenKind};

pub const STR_TOKEN: &str = "⟨STR⟩";
pub const NUM_TOKEN: &str = "⟨NUM⟩";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScgError {
    #[error("no AST node contains span {0}")]
    NoParent(SourceSpan),
    #[error("no token-node survives truncation")]
    EmptyGraph,
    #[error("length limits must be at least 1")]
    InvalidLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Tokens linked to their direct parent only.
    #[default]
    Standard,
    /// Every AST node also linked to all tokens inside its span.
    Variant1,
    /// Standard edges plus a fully connected token clique, realized when
    /// the graph is encoded.
    Variant2,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Variant1 => "variant1",
            Variant::Variant2 => "variant2",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Variant::Standard),
            "variant1" => Ok(Variant::Variant1),
            "variant2" => Ok(Variant::Variant2),
            other => Err(format!("unknown variant {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScgNodeKind {
    #[serde(rename = "tok")]
    Token,
    #[serde(rename = "ast")]
    Ast,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScgNode {
    pub id: usize,
    pub kind: ScgNodeKind,
    pub attr: String,
    pub span: SourceSpan,
    pub order: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    #[serde(rename = "aa")]
    AstAst,
    #[serde(rename = "at")]
    AstToken,
}

/// Undirected edge stored as `(smaller id, larger id, kind)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScgEdge(pub usize, pub usize, pub EdgeKind);

impl ScgEdge {
    pub fn new(a: usize, b: usize, kind: EdgeKind) -> Self {
        ScgEdge(a.min(b), a.max(b), kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scg {
    pub id: String,
    pub variant: Variant,
    pub nodes: Vec<ScgNode>,
    pub edges: Vec<ScgEdge>,
    pub summary: Vec<String>,
}

impl Scg {
    pub fn token_nodes(&self) -> impl Iterator<Item = &ScgNode> {
        self.nodes.iter().filter(|n| n.kind == ScgNodeKind::Token)
    }

    pub fn ast_nodes(&self) -> impl Iterator<Item = &ScgNode> {
        self.nodes.iter().filter(|n| n.kind == ScgNodeKind::Ast)
    }

    pub fn token_count(&self) -> usize {
        self.token_nodes().count()
    }

    pub fn ast_count(&self) -> usize {
        self.ast_nodes().count()
    }

    pub fn edge_count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.2 == kind).count()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_summary(mut self, summary: Vec<String>) -> Self {
        self.summary = summary;
        self
    }

    /// Token attributes in sequence order.
    pub fn token_attrs(&self) -> Vec<&str> {
        let mut toks: Vec<_> = self.token_nodes().collect();
        toks.sort_by_key(|n| n.order);
        toks.into_iter().map(|n| n.attr.as_str()).collect()
    }

    /// Structural checks shared by the builder and the JSONL reader.
    pub fn validate(&self) -> Result<(), String> {
        let mut orders = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(format!("node at index {i} has id {}", n.id));
            }
            if n.attr.is_empty() {
                return Err(format!("node {i} has an empty attr"));
            }
            match (n.kind, n.order) {
                (ScgNodeKind::Token, Some(o)) => orders.push(o),
                (ScgNodeKind::Token, None) => return Err(format!("token-node {i} has no order")),
                (ScgNodeKind::Ast, Some(_)) => return Err(format!("ast-node {i} has an order")),
                (ScgNodeKind::Ast, None) => {}
            }
        }
        orders.sort_unstable();
        if orders.iter().enumerate().any(|(i, o)| *o != i) {
            return Err("token orders are not 0..n".into());
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            let ScgEdge(a, b, kind) = *e;
            if a >= b || b >= self.nodes.len() {
                return Err(format!("edge ({a},{b}) is not a normalized pair of node ids"));
            }
            let kinds = (self.nodes[a].kind, self.nodes[b].kind);
            let ok = match kind {
                EdgeKind::AstAst => kinds == (ScgNodeKind::Ast, ScgNodeKind::Ast),
                EdgeKind::AstToken => {
                    matches!(kinds, (ScgNodeKind::Ast, ScgNodeKind::Token) | (ScgNodeKind::Token, ScgNodeKind::Ast))
                }
            };
            if !ok {
                return Err(format!("edge ({a},{b}) kind does not match its endpoints"));
            }
            if !seen.insert((a, b)) {
                return Err(format!("duplicate edge ({a},{b})"));
            }
        }
        Ok(())
    }
}

/// Splits an identifier at underscores and case boundaries, keeping case.
///
/// | boundary                                | example                    |
/// |-----------------------------------------|----------------------------|
/// | `_` (dropped)                           | `max_len` -> `max`, `len`  |
/// | lower/digit followed by upper           | `toString` -> `to`, `String` |
/// | upper followed by upper+lower           | `HTTPServer` -> `HTTP`, `Server` |
pub fn split_identifier(ident: &str) -> Vec<String> {
    let mut out = Vec::new();
    for part in ident.split('_').filter(|p| !p.is_empty()) {
        let chars: Vec<char> = part.chars().collect();
        let mut current = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if i > 0 && c.is_uppercase() {
                let prev = chars[i - 1];
                let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
                if prev.is_lowercase() || prev.is_ascii_digit() || (prev.is_uppercase() && next_lower) {
                    out.push(std::mem::take(&mut current));
                }
            }
            current.push(c);
        }
        out.push(current);
    }
    if out.is_empty() {
        out.push(ident.to_string());
    }
    out
}

/// Literal replacement and subtoken splitting. Every output keeps the
/// original token's span.
pub fn normalize_token(token: &RawToken) -> Vec<(String, SourceSpan)> {
    match token.kind {
        TokenKind::StringLiteral => vec![(STR_TOKEN.to_string(), token.span)],
        TokenKind::NumberLiteral => vec![(NUM_TOKEN.to_string(), token.span)],
        TokenKind::Identifier => split_identifier(&token.text)
            .into_iter()
            .map(|s| (s, token.span))
            .collect(),
        _ => vec![(token.text.clone(), token.span)],
    }
}

/// Deepest node whose span contains `span`. Ties at equal depth go to the
/// narrower span, then to the later node in pre-order.
pub fn direct_parent(ast: &AstTree, span: SourceSpan) -> Result<NodeId, ScgError> {
    direct_parent_with_depths(ast, &ast.depths(), span)
}

fn direct_parent_with_depths(ast: &AstTree, depths: &[usize], span: SourceSpan) -> Result<NodeId, ScgError> {
    ast.nodes
        .iter()
        .filter(|n| n.span.contains(&span))
        .max_by(|a, b| {
            let key = |n: &crate::ast::AstNode| {
                let (lines, cols) = n.span.width();
                (depths[n.id.0], std::cmp::Reverse((lines, cols)), n.id)
            };
            key(a).cmp(&key(b))
        })
        .map(|n| n.id)
        .ok_or(ScgError::NoParent(span))
}

/// Fuses a tree and its token stream into an SCG. The result has an empty
/// `id` and `summary`; see [`Scg::with_id`] and [`Scg::with_summary`].
pub fn build_scg(ast: &AstTree, tokens: &[RawToken], variant: Variant) -> Result<Scg, ScgError> {
    let depths = ast.depths();
    let mut nodes: Vec<ScgNode> = ast
        .nodes
        .iter()
        .map(|n| ScgNode {
            id: n.id.0,
            kind: ScgNodeKind::Ast,
            attr: n.node_type.clone(),
            span: n.span,
            order: None,
        })
        .collect();
    let mut edges: BTreeSet<ScgEdge> = ast
        .nodes
        .iter()
        .filter_map(|n| n.parent.map(|p| ScgEdge::new(p.0, n.id.0, EdgeKind::AstAst)))
        .collect();

    let mut order = 0;
    for token in tokens {
        // Subtokens copy the edge of the original token.
        let parent = direct_parent_with_depths(ast, &depths, token.span)?;
        for (attr, span) in normalize_token(token) {
            let id = nodes.len();
            nodes.push(ScgNode {
                id,
                kind: ScgNodeKind::Token,
                attr,
                span,
                order: Some(order),
            });
            order += 1;
            edges.insert(ScgEdge::new(parent.0, id, EdgeKind::AstToken));
        }
    }

    if variant == Variant::Variant1 {
        let token_ids: Vec<usize> = (ast.len()..nodes.len()).collect();
        for a in &ast.nodes {
            for &t in &token_ids {
                if a.span.contains(&nodes[t].span) {
                    edges.insert(ScgEdge::new(a.id.0, t, EdgeKind::AstToken));
                }
            }
        }
    }

    Ok(Scg {
        id: String::new(),
        variant,
        nodes,
        edges: edges.into_iter().collect(),
        summary: Vec::new(),
    })
}

/// Drops token-nodes past `max_code_len` together with every AST node whose
/// span contains a dropped token, then re-densifies ids. The surviving AST
/// nodes may form a forest.
pub fn truncate_sample(scg: &Scg, max_code_len: usize, max_summary_len: usize) -> Result<Scg, ScgError> {
    if max_code_len == 0 || max_summary_len == 0 {
        return Err(ScgError::InvalidLimit);
    }
    let removed_spans: Vec<SourceSpan> = scg
        .token_nodes()
        .filter(|n| n.order.is_some_and(|o| o >= max_code_len))
        .map(|n| n.span)
        .collect();
    let keep: Vec<bool> = scg
        .nodes
        .iter()
        .map(|n| match n.kind {
            ScgNodeKind::Token => n.order.is_some_and(|o| o < max_code_len),
            ScgNodeKind::Ast => !removed_spans.iter().any(|s| n.span.contains(s)),
        })
        .collect();
    let out = retain_nodes(scg, &keep);
    if out.token_count() == 0 {
        return Err(ScgError::EmptyGraph);
    }
    Ok(Scg {
        summary: scg.summary.iter().take(max_summary_len).cloned().collect(),
        ..out
    })
}

/// Token-only view of a graph: AST nodes removed and tokens fully connected,
/// which is what a plain sequence encoder sees.
pub fn strip_ast(scg: &Scg) -> Scg {
    let keep: Vec<bool> = scg.nodes.iter().map(|n| n.kind == ScgNodeKind::Token).collect();
    Scg {
        variant: Variant::Variant2,
        ..retain_nodes(scg, &keep)
    }
}

fn retain_nodes(scg: &Scg, keep: &[bool]) -> Scg {
    let mut remap = vec![usize::MAX; scg.nodes.len()];
    let mut nodes = Vec::new();
    for (n, _) in scg.nodes.iter().zip(keep).filter(|(_, k)| **k) {
        remap[n.id] = nodes.len();
        nodes.push(ScgNode {
            id: nodes.len(),
            ..n.clone()
        });
    }
    let edges = scg
        .edges
        .iter()
        .filter(|e| keep[e.0] && keep[e.1])
        .map(|e| ScgEdge::new(remap[e.0], remap[e.1], e.2))
        .collect();
    Scg {
        id: scg.id.clone(),
        variant: scg.variant,
        nodes,
        edges,
        summary: scg.summary.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{lex, parse_mini};

    fn build(src: &str, variant: Variant) -> Scg {
        let ast = parse_mini(src).unwrap();
        build_scg(&ast, &lex(src).unwrap(), variant).unwrap()
    }

    fn tok(text: &str, kind: TokenKind) -> RawToken {
        RawToken {
            text: text.into(),
            span: SourceSpan::line(1, 1, text.chars().count() as u32),
            kind,
        }
    }

    /// (token attr, parent attr) for each ast-token edge, in token order.
    fn parent_pairs(scg: &Scg) -> Vec<(String, String)> {
        let mut pairs: Vec<_> = scg
            .edges
            .iter()
            .filter(|e| e.2 == EdgeKind::AstToken)
            .map(|e| (scg.nodes[e.1].order.unwrap(), scg.nodes[e.1].attr.clone(), scg.nodes[e.0].attr.clone()))
            .collect();
        pairs.sort();
        pairs.into_iter().map(|(_, t, a)| (t, a)).collect()
    }

    #[test]
    fn normalizes_literals_and_identifiers() {
        let n = normalize_token(&tok("5", TokenKind::NumberLiteral));
        assert_eq!(n, vec![(NUM_TOKEN.to_string(), SourceSpan::line(1, 1, 1))]);
        assert_eq!(normalize_token(&tok("\"x y\"", TokenKind::StringLiteral))[0].0, STR_TOKEN);
        assert_eq!(normalize_token(&tok("+", TokenKind::Operator))[0].0, "+");
        let parts = normalize_token(&tok("formatListToString", TokenKind::Identifier));
        let attrs: Vec<_> = parts.iter().map(|p| p.0.as_str()).collect();
        assert_eq!(attrs, ["format", "List", "To", "String"]);
        assert!(parts.iter().all(|p| p.1 == SourceSpan::line(1, 1, 18)));
    }

    #[test]
    fn identifier_split_rule_table() {
        let cases: &[(&str, &[&str])] = &[
            ("max_len", &["max", "len"]),
            ("HTTPServer", &["HTTP", "Server"]),
            ("getX2Value", &["get", "X2", "Value"]),
            ("__init__", &["init"]),
            ("_", &["_"]),
            ("ABC", &["ABC"]),
            ("snake_Case_mix", &["snake", "Case", "mix"]),
            ("x", &["x"]),
        ];
        for (input, expected) in cases {
            assert_eq!(&split_identifier(input), expected, "{input}");
        }
    }

    #[test]
    fn direct_parent_of_worked_example() {
        let ast = parse_mini("a=b+5*c").unwrap();
        let five = direct_parent(&ast, SourceSpan::line(1, 5, 5)).unwrap();
        assert_eq!(ast.node(five).node_type, "Num");
        let c = direct_parent(&ast, SourceSpan::line(1, 7, 7)).unwrap();
        assert_eq!(ast.node(c).node_type, "NameExpr");
        assert_eq!(ast.node(c).span, SourceSpan::line(1, 7, 7));
        let eq = direct_parent(&ast, SourceSpan::line(1, 2, 2)).unwrap();
        assert_eq!(ast.node(eq).node_type, "AssignExpr");
        assert_eq!(
            direct_parent(&ast, SourceSpan::line(2, 1, 1)),
            Err(ScgError::NoParent(SourceSpan::line(2, 1, 1)))
        );
    }

    #[test]
    fn direct_parent_single_node_and_ties() {
        let ast = parse_mini("x").unwrap();
        assert_eq!(direct_parent(&ast, SourceSpan::line(1, 1, 1)).unwrap(), NodeId(0));
        // Two equal-depth siblings both containing the query: narrower wins,
        // then later pre-order.
        let doc = r#"{"source": "abc", "nodes": [
            {"id": 0, "type": "R", "span": [1,1,1,3], "parent": null},
            {"id": 1, "type": "Wide", "span": [1,1,1,3], "parent": 0},
            {"id": 2, "type": "Narrow", "span": [1,2,1,2], "parent": 0},
            {"id": 3, "type": "Same", "span": [1,2,1,2], "parent": 0}]}"#;
        let ast = crate::ast::ingest_ast(doc).unwrap();
        assert_eq!(direct_parent(&ast, SourceSpan::line(1, 2, 2)).unwrap(), NodeId(3));
        assert_eq!(direct_parent(&ast, SourceSpan::line(1, 1, 1)).unwrap(), NodeId(1));
    }

    #[test]
    fn standard_scg_matches_worked_example() {
        let scg = build("a=b+5*c", Variant::Standard);
        scg.validate().unwrap();
        assert_eq!(scg.token_count(), 7);
        assert_eq!(scg.ast_count(), 7);
        assert_eq!(scg.edge_count(EdgeKind::AstAst), 6);
        assert_eq!(scg.edge_count(EdgeKind::AstToken), 7);
        let expected = [
            ("a", "NameExpr"),
            ("=", "AssignExpr"),
            ("b", "NameExpr"),
            ("+", "AdditiveExpr"),
            (NUM_TOKEN, "Num"),
            ("*", "MultiplicativeExpr"),
            ("c", "NameExpr"),
        ];
        let pairs = parent_pairs(&scg);
        for ((t, a), (et, ea)) in pairs.iter().zip(expected) {
            assert_eq!((t.as_str(), a.as_str()), (et, ea));
        }
    }

    #[test]
    fn variant1_adds_scope_shortcuts() {
        let std = build("a=b+5*c", Variant::Standard);
        let v1 = build("a=b+5*c", Variant::Variant1);
        let std_edges: BTreeSet<_> = std.edges.iter().collect();
        assert!(std.edges.iter().all(|e| v1.edges.contains(e)));
        let linked = |ty: &str| -> Vec<String> {
            let id = v1.nodes.iter().find(|n| n.attr == ty).unwrap().id;
            let mut toks: Vec<_> = v1
                .edges
                .iter()
                .filter(|e| e.0 == id && e.2 == EdgeKind::AstToken)
                .map(|e| (v1.nodes[e.1].order, v1.nodes[e.1].attr.clone()))
                .collect();
            toks.sort();
            toks.into_iter().map(|t| t.1).collect()
        };
        assert_eq!(linked("AdditiveExpr"), ["b", "+", NUM_TOKEN, "*", "c"]);
        assert_eq!(linked("MultiplicativeExpr"), [NUM_TOKEN, "*", "c"]);
        assert_eq!(linked("AssignExpr").len(), 7);
        assert!(v1.edges.len() > std_edges.len());
    }

    #[test]
    fn single_token_program_every_variant() {
        for v in [Variant::Standard, Variant::Variant1, Variant::Variant2] {
            let scg = build("x", v);
            assert_eq!((scg.ast_count(), scg.token_count(), scg.edges.len()), (1, 1, 1));
            assert_eq!(scg.variant, v);
        }
    }

    #[test]
    fn subtokens_share_parent_edge() {
        let scg = build("maxLen = get_value(xs)", Variant::Standard);
        let pairs = parent_pairs(&scg);
        assert_eq!(&pairs[0], &("max".to_string(), "NameExpr".to_string()));
        assert_eq!(&pairs[1], &("Len".to_string(), "NameExpr".to_string()));
        let parent_of = |attr: &str| {
            let t = scg.nodes.iter().find(|n| n.attr == attr).unwrap().id;
            scg.edges.iter().find(|e| e.1 == t).unwrap().0
        };
        assert_eq!(parent_of("get"), parent_of("value"));
        assert_ne!(parent_of("max"), parent_of("get"));
        let orders: Vec<_> = scg.token_nodes().map(|n| n.order.unwrap()).collect();
        assert_eq!(orders, (0..scg.token_count()).collect::<Vec<_>>());
    }

    #[test]
    fn truncation_drops_enclosing_scopes() {
        let scg = build("a=b+5*c", Variant::Standard).with_summary(vec!["s".into(); 5]);
        assert_eq!(truncate_sample(&scg, 7, 50).unwrap(), scg);
        let cut = truncate_sample(&scg, 4, 2).unwrap();
        cut.validate().unwrap();
        assert_eq!(cut.token_attrs(), ["a", "=", "b", "+"]);
        let ast: Vec<_> = cut.ast_nodes().map(|n| (n.attr.clone(), n.span)).collect();
        assert_eq!(
            ast,
            vec![
                ("NameExpr".to_string(), SourceSpan::line(1, 1, 1)),
                ("NameExpr".to_string(), SourceSpan::line(1, 3, 3)),
            ]
        );
        assert_eq!(cut.edges.len(), 2);
        assert_eq!(cut.summary.len(), 2);
        assert_eq!(truncate_sample(&scg, 0, 1), Err(ScgError::InvalidLimit));
        let empty = Scg {
            nodes: scg.ast_nodes().cloned().collect(),
            edges: vec![],
            ..scg.clone()
        };
        assert_eq!(truncate_sample(&empty, 3, 3), Err(ScgError::EmptyGraph));
    }

    #[test]
    fn strip_ast_keeps_tokens_only() {
        let scg = build("a=b+5*c", Variant::Standard);
        let t = strip_ast(&scg);
        t.validate().unwrap();
        assert_eq!((t.ast_count(), t.token_count(), t.edges.len()), (0, 7, 0));
        assert_eq!(t.variant, Variant::Variant2);
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("variant1".parse::<Variant>().unwrap(), Variant::Variant1);
        assert!("variant3".parse::<Variant>().is_err());
        assert_eq!(Variant::Variant2.to_string(), "variant2");
    }
}
