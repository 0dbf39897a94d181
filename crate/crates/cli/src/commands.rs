use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use scg_core::ast::CanonicalAst;
use scg_core::io::write_scg_jsonl;
use scg_core::metrics::{MetricReport, Sample, DEFAULT_THRESHOLDS};
use scg_core::{batch, encode_graph, export_dot, parse_mini, truncate_sample, EdgeKind, EncodedGraph, Scg, Variant, Vocab};
use scg_model::train::{strip_markers, summarize_greedy};
use scg_model::{encoder_forward, summarize, train, Checkpoint, Config, Dims, Mode, Model};

use crate::error::CliError;
use crate::input::{read_graphs, read_samples, read_summaries, read_text, write_output};
use crate::{Command, GlobalArgs};

pub fn dispatch(global: &GlobalArgs, command: &Command) -> Result<(), CliError> {
    match command {
        Command::Parse { file } => parse(file),
        Command::BuildScg { input, max_code_len, max_summary_len, output } => {
            build(global, input, *max_code_len, *max_summary_len, output.as_deref())
        }
        Command::Stats { input, json } => stats(input, *json),
        Command::Train { train, valid, out, max_epochs, max_steps } => train_cmd(global, train, valid, out, *max_epochs, *max_steps),
        Command::Eval { hypotheses, references, output } => eval(hypotheses, references, output.as_deref()),
        Command::Summarize { checkpoint, data, greedy, output } => summarize_cmd(global, checkpoint, data, *greedy, output.as_deref()),
        Command::ExportDot { input, index, checkpoint, layer, head, dump_attention, output } => export(
            global,
            input,
            *index,
            checkpoint.as_deref(),
            *layer,
            *head,
            dump_attention.as_deref(),
            output.as_deref(),
        ),
    }
}

fn parse(file: &Path) -> Result<(), CliError> {
    let src = read_text(file)?;
    let tree = parse_mini(&src)?;
    write_output(None, &(CanonicalAst::from_tree(&tree, &src).to_json() + "\n"))
}

fn build(global: &GlobalArgs, input: &Path, max_code_len: Option<usize>, max_summary_len: Option<usize>, output: Option<&Path>) -> Result<(), CliError> {
    let config = global.config()?;
    let max_code = max_code_len.unwrap_or(config.max_code_len);
    let max_summary = max_summary_len.unwrap_or(config.max_summary_len);
    if max_code == 0 || max_summary == 0 {
        return Err(CliError::Usage("length limits must be positive".into()));
    }
    let samples = read_samples(input)?;
    let built: Vec<Result<Scg, CliError>> = samples
        .par_iter()
        .map(|s| s.build(config.variant).and_then(|g| Ok(truncate_sample(&g, max_code, max_summary)?)))
        .collect();
    let mut kept = Vec::with_capacity(built.len());
    for (s, r) in samples.iter().zip(built) {
        match r {
            Ok(g) => kept.push(g),
            Err(e) => log::warn!("discarding {}: {e}", s.id),
        }
    }
    let discarded = samples.len() - kept.len();
    eprintln!("build-scg: kept {}, discarded {discarded}", kept.len());
    if kept.is_empty() {
        return Err(CliError::Data("no samples could be built".into()));
    }
    write_output(output, &write_scg_jsonl(&kept))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub samples: usize,
    pub avg_function_length: f64,
    pub avg_ast_nodes: f64,
    pub avg_ast_edges: f64,
    pub unique_tokens: usize,
}

/// Function length counts token-nodes; AST edges are the tree edges.
pub fn corpus_stats(graphs: &[Scg]) -> CorpusStats {
    let n = graphs.len() as f64;
    let mean = |f: fn(&Scg) -> usize| graphs.iter().map(f).sum::<usize>() as f64 / n;
    let unique: BTreeSet<&str> = graphs.iter().flat_map(|g| g.token_nodes().map(|t| t.attr.as_str())).collect();
    CorpusStats {
        samples: graphs.len(),
        avg_function_length: mean(Scg::token_count),
        avg_ast_nodes: mean(Scg::ast_count),
        avg_ast_edges: mean(|g| g.edge_count(EdgeKind::AstAst)),
        unique_tokens: unique.len(),
    }
}

fn stats(input: &Path, json: bool) -> Result<(), CliError> {
    let s = corpus_stats(&read_graphs(input)?);
    let text = if json {
        serde_json::to_string_pretty(&s).expect("stats serialize") + "\n"
    } else {
        format!(
            "samples\tavg_function_length\tavg_ast_nodes\tavg_ast_edges\tunique_tokens\n{}\t{:.2}\t{:.2}\t{:.2}\t{}\n",
            s.samples, s.avg_function_length, s.avg_ast_nodes, s.avg_ast_edges, s.unique_tokens
        )
    };
    write_output(None, &text)
}

fn encode_truncated(graphs: &[Scg], vocab: &Vocab, config: &Config) -> Result<Vec<EncodedGraph>, CliError> {
    graphs
        .iter()
        .map(|g| Ok(encode_graph(&truncate_sample(g, config.max_code_len, config.max_summary_len)?, vocab)))
        .collect()
}

/// The single variant shared by every graph.
fn data_variant(graphs: &[&Scg]) -> Result<Variant, CliError> {
    let variants: BTreeSet<&str> = graphs.iter().map(|g| g.variant.as_str()).collect();
    match graphs.first() {
        Some(g) if variants.len() == 1 => Ok(g.variant),
        _ => Err(CliError::Data(format!("graphs mix variants: {}", variants.into_iter().collect::<Vec<_>>().join(", ")))),
    }
}

fn train_cmd(global: &GlobalArgs, train_path: &Path, valid_path: &Path, out: &Path, max_epochs: Option<usize>, max_steps: Option<usize>) -> Result<(), CliError> {
    let mut config = global.config()?;
    if let Some(e) = max_epochs {
        config.max_epochs = e;
        config.early_stop_epochs = config.early_stop_epochs.min(e);
    }
    if max_steps.is_some() {
        config.max_steps = max_steps;
    }
    config.validate()?;
    let train_graphs = read_graphs(train_path)?;
    let valid_graphs = read_graphs(valid_path)?;
    let all: Vec<&Scg> = train_graphs.iter().chain(&valid_graphs).collect();
    let variant = data_variant(&all)?;
    if global.variant.is_some_and(|v| v != variant) {
        return Err(CliError::Data(format!("--variant {} but the data is {variant}", config.variant)));
    }
    config.variant = variant;

    let truncated: Vec<Scg> = train_graphs
        .iter()
        .map(|g| truncate_sample(g, config.max_code_len, config.max_summary_len))
        .collect::<Result<_, _>>()?;
    let vocab = Vocab::build(&truncated, config.max_src_vocab, config.max_tgt_vocab)?;
    let train_set = encode_truncated(&train_graphs, &vocab, &config)?;
    let valid_set = encode_truncated(&valid_graphs, &vocab, &config)?;
    let (model, report) = train(&config, Dims::of(&vocab), &train_set, &valid_set)?;

    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let ckpt = out.join("checkpoint.json");
    Checkpoint::from_model(&model, Some(&vocab)).save(&ckpt)?;
    let log = out.join("train_log.csv");
    std::fs::write(&log, report.to_csv()).map_err(|e| CliError::io(&log, e))?;
    eprintln!(
        "train: {} steps, {} epochs, best epoch {:?} (validation loss {:.6}){}",
        report.steps,
        report.epochs.len(),
        report.best_epoch,
        report.best_valid_loss,
        if report.stopped_early { ", stopped early" } else { "" }
    );
    Ok(())
}

fn eval(hyp_path: &Path, ref_path: &Path, output: Option<&Path>) -> Result<(), CliError> {
    let hyps = read_summaries(hyp_path)?;
    let refs = read_summaries(ref_path)?;
    if hyps.len() != refs.len() {
        return Err(CliError::Data(format!("{} hypotheses for {} references", hyps.len(), refs.len())));
    }
    let mut ids = Vec::with_capacity(hyps.len());
    for (i, (h, r)) in hyps.iter().zip(&refs).enumerate() {
        if let (Some(a), Some(b)) = (&h.id, &r.id) {
            if a != b {
                return Err(CliError::Data(format!("entry {i}: hypothesis {a:?} paired with reference {b:?}")));
            }
        }
        ids.push(h.id.clone().or_else(|| r.id.clone()).unwrap_or_else(|| i.to_string()));
    }
    let samples: Vec<Sample<'_>> = hyps
        .iter()
        .zip(&refs)
        .zip(&ids)
        .map(|((h, r), id)| Sample {
            id,
            hypothesis: &h.words,
            reference: &r.words,
            code_length: r.code_length.or(h.code_length).unwrap_or(0),
        })
        .collect();
    let report = MetricReport::compute(&samples, &DEFAULT_THRESHOLDS)?;
    eprintln!("eval: BLEU {:.4}, METEOR {:.4}, ROUGE-L {:.4} over {}", report.bleu, report.meteor, report.rouge_l, report.count);
    write_output(output, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))
}

/// A checkpoint's model and vocabulary; architecture flags must agree with it.
fn load_checkpoint(global: &GlobalArgs, path: &Path) -> Result<(Model, Vocab), CliError> {
    let ckpt = Checkpoint::load(path)?;
    let vocab = ckpt.vocab.clone().ok_or_else(|| CliError::Data(format!("{}: checkpoint has no vocabulary", path.display())))?;
    let model = ckpt.to_model()?;
    let c = &model.config;
    if global.ape.is_some_and(|a| a != c.ape) || (global.two_hop && !c.two_hop) {
        return Err(CliError::Usage("--ape/--two-hop disagree with the checkpoint".into()));
    }
    Ok((model, vocab))
}

#[derive(Serialize)]
struct Generated<'a> {
    id: &'a str,
    hypothesis: Vec<&'a str>,
    logprob: f64,
}

fn summarize_cmd(global: &GlobalArgs, checkpoint: &Path, data: &Path, greedy: bool, output: Option<&Path>) -> Result<(), CliError> {
    if greedy && global.beam.is_some() {
        return Err(CliError::Usage("--greedy and --beam are exclusive".into()));
    }
    let (model, vocab) = load_checkpoint(global, checkpoint)?;
    let beam = global.beam.unwrap_or(model.config.beam_size);
    if beam == 0 {
        return Err(CliError::Usage("--beam must be positive".into()));
    }
    let graphs = read_graphs(data)?;
    if let Some(g) = graphs.iter().find(|g| g.variant != model.config.variant) {
        log::warn!("graph {} is {} but the model was trained on {}", g.id, g.variant, model.config.variant);
    }
    let enc = encode_truncated(&graphs, &vocab, &model.config)?;
    let hyps: Vec<_> = enc
        .par_iter()
        .map(|g| if greedy { summarize_greedy(&model, g) } else { summarize(&model, g, beam) })
        .collect::<Result<_, _>>()?;
    let mut text = String::new();
    for (g, h) in graphs.iter().zip(&hyps) {
        let line = Generated {
            id: &g.id,
            hypothesis: strip_markers(&h.tokens).into_iter().map(|t| vocab.targets.token(t)).collect(),
            logprob: h.logprob,
        };
        text += &serde_json::to_string(&line).expect("record serializes");
        text.push('\n');
    }
    write_output(output, &text)
}

#[allow(clippy::too_many_arguments)]
fn export(
    global: &GlobalArgs,
    input: &Path,
    index: usize,
    checkpoint: Option<&Path>,
    layer: usize,
    head: Option<usize>,
    dump: Option<&Path>,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let graphs = read_graphs(input)?;
    let g = graphs
        .get(index)
        .ok_or_else(|| CliError::Usage(format!("--index {index} but the file holds {} graphs", graphs.len())))?;
    let weights = match checkpoint {
        None => None,
        Some(path) => {
            let (model, vocab) = load_checkpoint(global, path)?;
            if head.is_some_and(|h| h >= model.config.attention_heads) {
                return Err(CliError::Usage(format!("the model has {} heads", model.config.attention_heads)));
            }
            let out = encoder_forward(&model, &batch(&[encode_graph(g, &vocab)]), Mode::Eval)?;
            let map = &out.maps[0];
            if let Some(p) = dump {
                let json = serde_json::to_string(map).expect("attention map serializes") + "\n";
                std::fs::write(p, json).map_err(|e| CliError::io(p, e))?;
            }
            let w = map
                .weights(layer, head, g.nodes.len())
                .ok_or_else(|| CliError::Usage(format!("--layer {layer} but the encoder has {} attention sublayers", map.layers.len())))?;
            Some(w)
        }
    };
    write_output(output, &export_dot(g, weights.as_ref())?)
}
