//! Syntax-code graphs: fused AST / token graphs for code summarization.
//!
//! The pipeline is `lex` + `parse_mini` (or `ingest_ast` for external
//! parsers) -> `build_scg` -> `truncate_sample` -> `Vocab::build` ->
//! `encode_graph` -> `GraphBatch`. Metrics for scoring generated summaries
//! live in [`metrics`].

pub mod ast;
pub mod dot;
pub mod encode;
pub mod io;
pub mod metrics;
pub mod scg;
pub mod synth;
pub mod vocab;

pub use ast::{
    ingest_ast, lex, parse_mini, AstError, AstNode, AstTree, NodeId, RawToken, SourceSpan,
    TokenKind,
};
pub use dot::{export_dot, AttentionWeights, DotError};
pub use encode::{batch, encode_graph, EncodedGraph, GraphBatch, NodeKind};
pub use io::{read_scg_line, write_scg_line, IoError};
pub use scg::{
    build_scg, direct_parent, normalize_token, strip_ast, truncate_sample, EdgeKind, Scg,
    ScgEdge, ScgError, ScgNode, ScgNodeKind, Variant,
};
pub use vocab::{Namespace, Vocab, VocabError};
