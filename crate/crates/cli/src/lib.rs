//! `scg-forge`: parse -> build-scg -> stats -> train -> eval -> summarize ->
//! export-dot.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use scg_core::Variant;
use scg_model::{ApeMode, Config};

mod commands;
mod error;
mod input;

pub use error::CliError;

pub const THREADS_ENV: &str = "SCG_FORGE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "scg-forge", version, about = "Code summarization over syntax-code graphs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Model flags override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Graph structure: standard, variant1 or variant2.
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    /// Absolute positional embedding: off, all or token.
    #[arg(long, global = true)]
    pub ape: Option<ApeMode>,
    /// Use 2-hop encoder blocks.
    #[arg(long, global = true)]
    pub two_hop: bool,
    /// Beam width for decoding.
    #[arg(long, global = true)]
    pub beam: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Single worker thread.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a source file and print its canonical AST JSON.
    Parse {
        file: PathBuf,
    },
    /// Build SCG JSONL from a directory of sources or a JSONL of samples.
    BuildScg {
        input: PathBuf,
        #[arg(long)]
        max_code_len: Option<usize>,
        #[arg(long)]
        max_summary_len: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Corpus statistics of an SCG JSONL file.
    Stats {
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Train a model; writes checkpoint.json and train_log.csv.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Score hypotheses against references; writes a metric report.
    Eval {
        #[arg(long)]
        hypotheses: PathBuf,
        #[arg(long)]
        references: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate summaries for an SCG JSONL file.
    Summarize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Greedy decoding instead of beam search.
        #[arg(long)]
        greedy: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Render one graph as Graphviz DOT, optionally with attention weights.
    ExportDot {
        /// SCG JSONL file.
        input: PathBuf,
        /// Line (0-based, blank lines skipped) of the graph to render.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Attention sublayer; 2-hop blocks contribute two each.
        #[arg(long, default_value_t = 0)]
        layer: usize,
        /// Head to show; all heads averaged when omitted.
        #[arg(long)]
        head: Option<usize>,
        /// Also write the full attention map as JSON.
        #[arg(long, requires = "checkpoint")]
        dump_attention: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

impl GlobalArgs {
    /// The config file (or defaults) with flag overrides applied.
    pub fn config(&self) -> Result<Config, CliError> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                Config::from_json(&text)?
            }
            None => Config::default(),
        };
        if let Some(v) = self.variant {
            c.variant = v;
        }
        if let Some(a) = self.ape {
            c.ape = a;
        }
        if self.two_hop {
            c.two_hop = true;
        }
        if let Some(b) = self.beam {
            c.beam_size = b;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }

    /// Worker count: 1 under `--deterministic`, else `SCG_FORGE_THREADS` if set.
    pub fn threads(&self, env: Option<&str>) -> Result<Option<usize>, CliError> {
        if self.deterministic {
            return Ok(Some(1));
        }
        match env {
            None => Ok(None),
            Some(s) => match s.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(Some(n)),
                _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {s:?}"))),
            },
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let env = std::env::var(THREADS_ENV).ok();
    let pool = match cli.global.threads(env.as_deref())? {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(&cli.global, &cli.command))
}
