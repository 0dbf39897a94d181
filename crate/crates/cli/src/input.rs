//! Readers for the file formats the commands accept.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use scg_core::ast::CanonicalAst;
use scg_core::io::read_scg_jsonl;
use scg_core::{build_scg, lex, parse_mini, read_scg_line, Scg, Variant};

use crate::error::CliError;

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::Data(format!("stdout: {e}")))
        }
    }
}

pub fn read_graphs(path: &Path) -> Result<Vec<Scg>, CliError> {
    let graphs = read_scg_jsonl(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if graphs.is_empty() {
        return Err(CliError::Data(format!("{}: no graphs", path.display())));
    }
    Ok(graphs)
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SummaryField {
    Text(String),
    Words(Vec<String>),
}

impl SummaryField {
    fn into_words(self) -> Vec<String> {
        match self {
            SummaryField::Text(s) => words(&s),
            SummaryField::Words(w) => w,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodeRecord {
    id: Option<String>,
    code: String,
    summary: Option<SummaryField>,
}

#[derive(Debug)]
pub enum SampleBody {
    Code(String),
    /// Canonical AST document text.
    Ast(String),
}

/// One input sample before parsing.
#[derive(Debug)]
pub struct RawSample {
    pub id: String,
    pub body: SampleBody,
    pub summary: Vec<String>,
}

impl RawSample {
    /// Parses (or ingests) the sample and builds its graph.
    pub fn build(&self, variant: Variant) -> Result<Scg, CliError> {
        let (tree, tokens, summary) = match &self.body {
            SampleBody::Code(src) => (parse_mini(src)?, lex(src)?, None),
            SampleBody::Ast(json) => {
                let doc = CanonicalAst::parse(json)?;
                (doc.tree()?, doc.raw_tokens()?, doc.summary)
            }
        };
        let summary = if self.summary.is_empty() { summary.unwrap_or_default() } else { self.summary.clone() };
        Ok(build_scg(&tree, &tokens, variant)?.with_id(self.id.clone()).with_summary(summary))
    }
}

/// Samples from a directory (sorted by file name) or a JSONL file.
///
/// Directory: each regular file is one sample named by its stem; `.json`
/// files hold canonical AST documents, anything else is mini-language
/// source. A sibling `<stem>.summary` file supplies the summary. Hidden files
/// are ignored.
///
/// JSONL: `{"id", "code", "summary"}` records, or canonical AST documents
/// (recognized by their `nodes` key). `summary` is a string or word list.
pub fn read_samples(path: &Path) -> Result<Vec<RawSample>, CliError> {
    if path.is_dir() {
        read_dir_samples(path)
    } else {
        read_jsonl_samples(&read_text(path)?)
    }
}

fn read_dir_samples(dir: &Path) -> Result<Vec<RawSample>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            !name.starts_with('.') && !name.ends_with(".summary")
        })
        .collect();
    files.sort();
    let mut samples = Vec::with_capacity(files.len());
    for f in files {
        let id = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let text = match std::fs::read_to_string(&f) {
            Ok(t) => t,
            Err(e) => {
                // Treated as an unparseable sample.
                log::warn!("{}: {e}", f.display());
                samples.push(RawSample { id, body: SampleBody::Code(String::new()), summary: Vec::new() });
                continue;
            }
        };
        let sidecar = f.with_extension("summary");
        let summary = if sidecar.is_file() { words(&read_text(&sidecar)?) } else { Vec::new() };
        let body = if f.extension().is_some_and(|e| e == "json") { SampleBody::Ast(text) } else { SampleBody::Code(text) };
        samples.push(RawSample { id, body, summary });
    }
    Ok(samples)
}

fn read_jsonl_samples(text: &str) -> Result<Vec<RawSample>, CliError> {
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| CliError::Data(format!("line {}: {msg}", i + 1));
        let value: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let default_id = format!("line{}", i + 1);
        if value.get("nodes").is_some() {
            let id = value.get("id").and_then(Value::as_str).map(String::from).unwrap_or(default_id);
            samples.push(RawSample { id, body: SampleBody::Ast(line.to_string()), summary: Vec::new() });
        } else {
            let rec: CodeRecord = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
            samples.push(RawSample {
                id: rec.id.unwrap_or(default_id),
                body: SampleBody::Code(rec.code),
                summary: rec.summary.map(SummaryField::into_words).unwrap_or_default(),
            });
        }
    }
    Ok(samples)
}

/// One summary read for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub id: Option<String>,
    pub words: Vec<String>,
    pub code_length: Option<usize>,
}

/// Summaries, one per line. A file whose non-blank lines are all JSON
/// objects is read as JSONL: generation records (`hypothesis`), SCG lines
/// (their `summary`, with the token count as code length) or `{"summary"}`
/// records. Anything else is plain text, one whitespace-tokenized summary per
/// line.
pub fn read_summaries(path: &Path) -> Result<Vec<SummaryLine>, CliError> {
    let text = read_text(path)?;
    let jsonl = text.lines().any(|l| !l.trim().is_empty()) && text.lines().filter(|l| !l.trim().is_empty()).all(|l| l.trim_start().starts_with('{'));
    if !jsonl {
        return Ok(text.lines().map(|l| SummaryLine { id: None, words: words(l), code_length: None }).collect());
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| CliError::Data(format!("{} line {}: {msg}", path.display(), i + 1));
        let value: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let id = value.get("id").and_then(Value::as_str).map(String::from);
        if value.get("nodes").is_some() {
            let g = read_scg_line(line).map_err(|e| bad(e.to_string()))?;
            out.push(SummaryLine { id, code_length: Some(g.token_count()), words: g.summary });
            continue;
        }
        let field = value
            .get("hypothesis")
            .or_else(|| value.get("summary"))
            .cloned()
            .ok_or_else(|| bad("expected a hypothesis or summary field".into()))?;
        let words = serde_json::from_value::<SummaryField>(field).map_err(|e| bad(e.to_string()))?.into_words();
        out.push(SummaryLine { id, words, code_length: None });
    }
    Ok(out)
}
