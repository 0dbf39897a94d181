//! SCG JSON Lines.
//!
//! One graph per line:
//!
//! ```json
//! {"id":"s0","variant":"standard","nodes":[{"id":0,"kind":"ast","attr":"NameExpr","span":[1,1,1,1],"order":null},
//!  {"id":1,"kind":"tok","attr":"x","span":[1,1,1,1],"order":0}],"edges":[[0,1,"at"]],"summary":["x"]}
//! ```

use thiserror::Error;

use crate::scg::Scg;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IoError {
    #[error("schema error{}: {message}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    Schema { line: Option<usize>, message: String },
}

impl IoError {
    fn at_line(self, line: usize) -> Self {
        match self {
            IoError::Schema { message, .. } => IoError::Schema {
                line: Some(line),
                message,
            },
        }
    }
}

pub fn write_scg_line(scg: &Scg) -> String {
    serde_json::to_string(scg).expect("SCG serializes")
}

pub fn read_scg_line(line: &str) -> Result<Scg, IoError> {
    let scg: Scg = serde_json::from_str(line).map_err(|e| IoError::Schema {
        line: None,
        message: e.to_string(),
    })?;
    scg.validate().map_err(|message| IoError::Schema { line: None, message })?;
    Ok(scg)
}

/// Parses a whole JSONL document, skipping blank lines. Errors carry the
/// 1-based line number.
pub fn read_scg_jsonl(text: &str) -> Result<Vec<Scg>, IoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| read_scg_line(l).map_err(|e| e.at_line(i + 1)))
        .collect()
}

pub fn write_scg_jsonl(graphs: &[Scg]) -> String {
    graphs.iter().map(|g| write_scg_line(g) + "\n").collect()
}
