//! Random mini-language programs and a templated summarization corpus.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NAMES: [&str; 12] = [
    "a", "b", "count", "total", "maxValue", "item_list", "getName", "x1", "buf", "parseHTTPHeader",
    "is_ready", "idx",
];
const BINARY_OPS: [&str; 13] = ["+", "-", "*", "/", "%", "==", "!=", "<", ">", "<=", ">=", "&&", "||"];
const SEPARATORS: [&str; 4] = [" ", " ", "\n", "\n    "];

struct Emitter<'r, R: Rng> {
    rng: &'r mut R,
    out: Vec<String>,
}

impl<R: Rng> Emitter<'_, R> {
    fn tok(&mut self, t: &str) {
        self.out.push(t.to_string());
    }

    fn name(&mut self) {
        let n = NAMES.choose(self.rng).unwrap();
        self.tok(n);
    }

    fn expr(&mut self, depth: usize) {
        let choice = if depth == 0 { 0 } else { self.rng.random_range(0..8) };
        match choice {
            0 | 1 => match self.rng.random_range(0..4) {
                0 => {
                    let n = self.rng.random_range(0..1000);
                    let t = if self.rng.random_bool(0.2) { format!("{n}.5") } else { n.to_string() };
                    self.tok(&t);
                }
                1 => {
                    let t = ["\"hi\"", "\"\"", "\"a \\\"q\\\" b\""].choose(self.rng).unwrap().to_string();
                    self.tok(&t);
                }
                _ => self.name(),
            },
            2 | 3 => {
                self.expr(depth - 1);
                let op = BINARY_OPS.choose(self.rng).unwrap();
                self.tok(op);
                self.expr(depth - 1);
            }
            4 => {
                let op = if self.rng.random_bool(0.5) { "-" } else { "!" };
                self.tok(op);
                self.expr(depth - 1);
            }
            5 => {
                self.name();
                self.tok("(");
                for i in 0..self.rng.random_range(0..3) {
                    if i > 0 {
                        self.tok(",");
                    }
                    self.expr(depth - 1);
                }
                self.tok(")");
            }
            6 => {
                self.tok("(");
                self.expr(depth - 1);
                self.tok(")");
            }
            _ => {
                self.name();
                self.tok("=");
                self.expr(depth - 1);
            }
        }
    }

    fn block(&mut self, depth: usize) {
        self.tok("{");
        for _ in 0..self.rng.random_range(0..3) {
            self.stmt(depth - 1);
        }
        self.tok("}");
    }

    fn stmt(&mut self, depth: usize) {
        let choice = if depth == 0 { 0 } else { self.rng.random_range(0..7) };
        match choice {
            0 | 1 => {
                self.expr(depth.min(3));
                self.tok(";");
            }
            2 => self.block(depth),
            3 => {
                self.tok("if");
                self.tok("(");
                self.expr(depth.min(2));
                self.tok(")");
                self.stmt(depth - 1);
                if self.rng.random_bool(0.5) {
                    self.tok("else");
                    self.stmt(depth - 1);
                }
            }
            4 => {
                self.tok("while");
                self.tok("(");
                self.expr(depth.min(2));
                self.tok(")");
                self.stmt(depth - 1);
            }
            5 => {
                self.tok("return");
                if self.rng.random_bool(0.8) {
                    self.expr(depth.min(3));
                }
                self.tok(";");
            }
            _ => {
                self.tok("fn");
                self.name();
                self.tok("(");
                for i in 0..self.rng.random_range(0..3) {
                    if i > 0 {
                        self.tok(",");
                    }
                    self.name();
                }
                self.tok(")");
                self.block(depth);
            }
        }
    }

    fn finish(self) -> String {
        let mut s = String::new();
        for (i, t) in self.out.iter().enumerate() {
            if i > 0 {
                s.push_str(SEPARATORS.choose(self.rng).unwrap());
            }
            s.push_str(t);
        }
        s
    }
}

/// A grammar-valid program of one to three statements. Tokens are separated
/// by spaces or newlines so spans cover several lines.
pub fn random_program<R: Rng>(rng: &mut R, max_depth: usize) -> String {
    let mut e = Emitter { rng, out: Vec::new() };
    for _ in 0..e.rng.random_range(1..=3) {
        e.stmt(max_depth);
    }
    e.finish()
}

/// A single expression without statement terminator.
pub fn random_expression<R: Rng>(rng: &mut R, max_depth: usize) -> String {
    let mut e = Emitter { rng, out: Vec::new() };
    e.expr(max_depth);
    e.finish()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSample {
    pub id: String,
    pub source: String,
    pub summary: Vec<String>,
}

const FUNCS: [&str; 6] = ["update", "merge", "score", "apply", "step", "check"];
const PARAMS: [&str; 8] = ["node", "limit", "value", "key", "offset", "weight", "rate", "size"];
const CALLEES: [&str; 5] = ["scale", "clamp", "hash", "norm", "load"];

/// Summaries name the parameters by the role they play in the body (call
/// argument, comparison bound, returned value), so a model that sees the
/// parameters only as an unordered bag cannot tell them apart.
pub fn templated_corpus(n: usize, seed: u64) -> Vec<SynthSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let f = *FUNCS.choose(&mut rng).unwrap();
            let g = *CALLEES.choose(&mut rng).unwrap();
            let picked: Vec<&str> = PARAMS.choose_multiple(&mut rng, 2).copied().collect();
            let (p, q) = (picked[0], picked[1]);
            // Parameter order is independent of the roles.
            let (first, second) = if rng.random_bool(0.5) { (p, q) } else { (q, p) };
            let (source, summary) = match rng.random_range(0..3) {
                0 => (
                    format!("fn {f}({first}, {second}) {{ t = {g}({p}); return t + {q}; }}"),
                    format!("{g} {p} and add {q}"),
                ),
                1 => (
                    format!("fn {f}({first}, {second}) {{ if ({p} > {q}) {{ return {g}({p}); }} return {q}; }}"),
                    format!("{g} {p} if above {q}"),
                ),
                _ => (
                    format!("fn {f}({first}, {second}) {{ while ({p} < {q}) {{ {p} = {g}({p}); }} return {p}; }}"),
                    format!("repeat {g} on {p} until {q}"),
                ),
            };
            SynthSample {
                id: format!("synth{i}"),
                source,
                summary: summary.split(' ').map(String::from).collect(),
            }
        })
        .collect()
}
