//! Command-line entry point: train, evaluate, analyze camouflage statistics,
//! generate synthetic graphs, and compare neighbor-selection policies.
//!
//! Runs are described by a plain-text `key=value` config file; every key can
//! be overridden by a command-line flag of the same name. Unknown keys are
//! rejected. Exit codes: 0 success, 1 config error, 2 data error, 3 numeric
//! abort.

use crate::aggregation::AggregatorVariant;
use crate::error::{Error, Result};
use crate::evaluation::{self, Head};
use crate::graph::{
    generate_synthetic, load_graph, save_graph, MultiRelationGraph, RelationSpec, SyntheticConfig,
};
use crate::trainer::{NeighborMode, TrainConfig, TrainSession};
use clap::{Args, Parser, Subcommand};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // data files
    pub nodes: Option<PathBuf>,
    pub relations: Vec<PathBuf>,
    // synthetic source
    pub synth_nodes: Option<usize>,
    pub synth_fraud_fraction: f64,
    pub synth_feature_dim: usize,
    pub synth_overlap: f64,
    pub synth_seed: u64,
    pub synth_relations: Vec<RelationSpec>,
    // split
    pub train_fraction: f64,
    pub split_seed: Option<u64>,
    // training
    pub layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub embedding_dim: usize,
    pub learning_rate: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub tau: f64,
    pub undersample_ratio: f64,
    pub variant: AggregatorVariant,
    pub seed: u64,
    pub eval_every: usize,
    pub neighbor_mode: NeighborMode,
    pub rl_termination: bool,
    // output
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        RunConfig {
            nodes: None,
            relations: Vec::new(),
            synth_nodes: None,
            synth_fraud_fraction: 0.2,
            synth_feature_dim: 32,
            synth_overlap: 0.5,
            synth_seed: 42,
            synth_relations: Vec::new(),
            train_fraction: 0.4,
            split_seed: None,
            layers: t.num_layers,
            epochs: t.epochs,
            batch_size: t.batch_size,
            embedding_dim: t.embedding_dim,
            learning_rate: t.learning_rate,
            lambda1: t.lambda1,
            lambda2: t.lambda2,
            tau: t.tau,
            undersample_ratio: t.undersample_ratio,
            variant: t.variant,
            seed: t.seed,
            eval_every: t.eval_every,
            neighbor_mode: t.neighbor_mode,
            rl_termination: t.rl_termination,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for key {key}")))
}

fn parse_variant(value: &str) -> Result<AggregatorVariant> {
    value.trim().parse()
}

fn parse_mode(value: &str) -> Result<NeighborMode> {
    value.trim().parse()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean {value:?} for key {key}"))),
    }
}

fn parse_synth_relations(value: &str) -> Result<Vec<RelationSpec>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|entry| {
            let parts: Vec<&str> = entry.trim().split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!(
                    "bad synth_relations entry {entry:?}; expected name:homophily:mean_degree"
                )));
            }
            Ok(RelationSpec {
                name: parts[0].to_string(),
                homophily: parse("synth_relations homophily", parts[1])?,
                mean_degree: parse("synth_relations mean_degree", parts[2])?,
            })
        })
        .collect()
}

impl RunConfig {
    /// Applies one `key=value` assignment. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "nodes" => self.nodes = Some(PathBuf::from(value.trim())),
            "relations" => {
                self.relations = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| PathBuf::from(s.trim()))
                    .collect()
            }
            "synth_nodes" => self.synth_nodes = Some(parse(key, value)?),
            "synth_fraud_fraction" => self.synth_fraud_fraction = parse(key, value)?,
            "synth_feature_dim" => self.synth_feature_dim = parse(key, value)?,
            "synth_overlap" => self.synth_overlap = parse(key, value)?,
            "synth_seed" => self.synth_seed = parse(key, value)?,
            "synth_relations" => self.synth_relations = parse_synth_relations(value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "split_seed" => self.split_seed = Some(parse(key, value)?),
            "layers" => self.layers = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "embedding_dim" => self.embedding_dim = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "lambda1" => self.lambda1 = parse(key, value)?,
            "lambda2" => self.lambda2 = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "undersample_ratio" => self.undersample_ratio = parse(key, value)?,
            "variant" => self.variant = parse_variant(value)?,
            "seed" => self.seed = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "neighbor_mode" => self.neighbor_mode = parse_mode(value)?,
            "rl_termination" => self.rl_termination = parse_bool(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value.trim()),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected key=value, got {line:?}",
                    path.display(),
                    idx + 1
                )));
            };
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            num_layers: self.layers,
            epochs: self.epochs,
            batch_size: self.batch_size,
            embedding_dim: self.embedding_dim,
            learning_rate: self.learning_rate,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            tau: self.tau,
            undersample_ratio: self.undersample_ratio,
            variant: self.variant,
            seed: self.seed,
            eval_every: self.eval_every,
            neighbor_mode: self.neighbor_mode,
            rl_termination: self.rl_termination,
        }
    }

    pub fn synthetic_config(&self) -> Result<SyntheticConfig> {
        let num_nodes = self.synth_nodes.ok_or_else(|| {
            Error::Config("no data source configured: set nodes=... or synth_nodes=...".into())
        })?;
        if self.synth_relations.is_empty() {
            return Err(Error::Config(
                "synth_relations must define at least one relation".into(),
            ));
        }
        Ok(SyntheticConfig {
            num_nodes,
            fraud_fraction: self.synth_fraud_fraction,
            feature_dim: self.synth_feature_dim,
            relations: self.synth_relations.clone(),
            feature_overlap: self.synth_overlap,
            seed: self.synth_seed,
        })
    }

    /// Loads TSV data when file paths are configured, otherwise generates the
    /// configured synthetic graph.
    pub fn resolve_graph(&self) -> Result<MultiRelationGraph> {
        if let Some(nodes) = &self.nodes {
            if self.relations.is_empty() {
                return Err(Error::Config(
                    "nodes file given but no relation files (set relations=...)".into(),
                ));
            }
            if !nodes.exists() {
                return Err(Error::io(
                    nodes,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "nodes file not found"),
                ));
            }
            let (graph, stats) = load_graph(nodes, &self.relations)?;
            for rel in &stats.relations {
                if rel.self_loops_dropped > 0 || rel.duplicates_dropped > 0 {
                    eprintln!(
                        "relation {}: dropped {} self-loops, {} duplicate edges",
                        rel.name, rel.self_loops_dropped, rel.duplicates_dropped
                    );
                }
            }
            Ok(graph)
        } else {
            generate_synthetic(&self.synthetic_config()?)
        }
    }

    fn split_seed(&self) -> u64 {
        self.split_seed.unwrap_or(self.seed)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "care-gnn",
    about = "Camouflage-resistant GNN fraud detection on multi-relation graphs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus per-key overrides (flags share the config keys' names).
#[derive(Debug, Args, Default)]
struct CommonArgs {
    /// Plain-text key=value run configuration.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long = "nodes")]
    nodes: Option<String>,
    #[arg(long = "relations")]
    relations: Option<String>,
    #[arg(long = "synth_nodes")]
    synth_nodes: Option<String>,
    #[arg(long = "synth_fraud_fraction")]
    synth_fraud_fraction: Option<String>,
    #[arg(long = "synth_feature_dim")]
    synth_feature_dim: Option<String>,
    #[arg(long = "synth_overlap")]
    synth_overlap: Option<String>,
    #[arg(long = "synth_seed")]
    synth_seed: Option<String>,
    #[arg(long = "synth_relations")]
    synth_relations: Option<String>,
    #[arg(long = "train_fraction")]
    train_fraction: Option<String>,
    #[arg(long = "split_seed")]
    split_seed: Option<String>,
    #[arg(long = "layers")]
    layers: Option<String>,
    #[arg(long = "epochs")]
    epochs: Option<String>,
    #[arg(long = "batch_size")]
    batch_size: Option<String>,
    #[arg(long = "embedding_dim")]
    embedding_dim: Option<String>,
    #[arg(long = "learning_rate")]
    learning_rate: Option<String>,
    #[arg(long = "lambda1")]
    lambda1: Option<String>,
    #[arg(long = "lambda2")]
    lambda2: Option<String>,
    #[arg(long = "tau")]
    tau: Option<String>,
    #[arg(long = "undersample_ratio")]
    undersample_ratio: Option<String>,
    #[arg(long = "variant")]
    variant: Option<String>,
    #[arg(long = "seed")]
    seed: Option<String>,
    #[arg(long = "eval_every")]
    eval_every: Option<String>,
    #[arg(long = "neighbor_mode", alias = "neighbor-mode")]
    neighbor_mode: Option<String>,
    #[arg(long = "rl_termination")]
    rl_termination: Option<String>,
    #[arg(long = "output_dir")]
    output_dir: Option<String>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let overrides: [(&str, &Option<String>); 25] = [
            ("nodes", &self.nodes),
            ("relations", &self.relations),
            ("synth_nodes", &self.synth_nodes),
            ("synth_fraud_fraction", &self.synth_fraud_fraction),
            ("synth_feature_dim", &self.synth_feature_dim),
            ("synth_overlap", &self.synth_overlap),
            ("synth_seed", &self.synth_seed),
            ("synth_relations", &self.synth_relations),
            ("train_fraction", &self.train_fraction),
            ("split_seed", &self.split_seed),
            ("layers", &self.layers),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("embedding_dim", &self.embedding_dim),
            ("learning_rate", &self.learning_rate),
            ("lambda1", &self.lambda1),
            ("lambda2", &self.lambda2),
            ("tau", &self.tau),
            ("undersample_ratio", &self.undersample_ratio),
            ("variant", &self.variant),
            ("seed", &self.seed),
            ("eval_every", &self.eval_every),
            ("neighbor_mode", &self.neighbor_mode),
            ("rl_termination", &self.rl_termination),
            ("output_dir", &self.output_dir),
        ];
        for (key, value) in overrides {
            if let Some(value) = value {
                cfg.set(key, value)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes a checkpoint and a JSON-lines metrics stream.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Resume from an existing checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split (both heads).
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Emit one machine-readable JSON line instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Per-relation camouflage statistics: edges, feature and label similarity.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic graph and write it as TSV files.
    Gensynth {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train adaptive, fixed-half, and fixed-all runs on shared seeds and
    /// record their test trajectories side by side.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Parses arguments and runs a command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version through this path
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Train { common, resume } => cmd_train(&common, resume.as_deref()),
        Command::Eval {
            common,
            checkpoint,
            json,
        } => cmd_eval(&common, &checkpoint, json),
        Command::Analyze { common, json } => cmd_analyze(&common, json),
        Command::Gensynth { common } => cmd_gensynth(&common),
        Command::Compare { common } => cmd_compare(&common),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn ensure_output_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn cmd_train(common: &CommonArgs, resume: Option<&Path>) -> Result<()> {
    let cfg = common.resolve()?;
    cfg.train_config().validate()?;
    let graph = cfg.resolve_graph()?;
    let split = graph.split(cfg.train_fraction, cfg.split_seed())?;
    ensure_output_dir(&cfg)?;

    let mut session = match resume {
        Some(path) => {
            let session = TrainSession::load_checkpoint(path)?;
            println!(
                "resumed from {} at epoch {}",
                path.display(),
                session.epochs_done
            );
            session
        }
        None => TrainSession::new(cfg.train_config(), &graph)?,
    };
    let reports = session.train(&graph, &split)?;

    let metrics_path = cfg.output_dir.join("metrics.jsonl");
    write_jsonl(&metrics_path, &reports)?;
    let ckpt_path = cfg.output_dir.join("model.ckpt");
    session.save_checkpoint(&ckpt_path)?;

    if let Some(last) = reports.last() {
        println!(
            "epoch {}: loss_gnn {:.4}, loss_simi {:.4}, loss_care {:.4}",
            last.epoch, last.loss_gnn, last.loss_simi, last.loss_care
        );
        if let Some(eval) = &last.eval {
            println!(
                "test: gnn auc {:.4} recall {:.4} | simi auc {:.4} recall {:.4}",
                eval.gnn.auc, eval.gnn.recall_macro, eval.simi.auc, eval.simi.recall_macro
            );
        }
        for ev in &last.controllers {
            println!(
                "threshold l{} r{}: p = {:.2}{}",
                ev.layer + 1,
                ev.relation,
                ev.p,
                if ev.terminated { " (terminated)" } else { "" }
            );
        }
    }
    println!("wrote {}", metrics_path.display());
    println!("wrote {}", ckpt_path.display());
    Ok(())
}

fn cmd_eval(common: &CommonArgs, checkpoint: &Path, json: bool) -> Result<()> {
    let cfg = common.resolve()?;
    let graph = cfg.resolve_graph()?;
    let split = graph.split(cfg.train_fraction, cfg.split_seed())?;
    let session = TrainSession::load_checkpoint(checkpoint)?;
    let gnn = evaluation::evaluate(&session.model, &graph, &split.test_ids, Head::Gnn)?;
    let simi = evaluation::evaluate(&session.model, &graph, &split.test_ids, Head::Simi)?;
    if json {
        let line = serde_json::json!({ "gnn": gnn, "simi": simi });
        println!("{line}");
    } else {
        println!("head  auc     recall  recall0 recall1 nodes");
        for m in [&gnn, &simi] {
            println!(
                "{:<5} {:.4}  {:.4}  {:.4}  {:.4}  {}",
                match m.source {
                    Head::Gnn => "gnn",
                    Head::Simi => "simi",
                },
                m.auc,
                m.recall_macro,
                m.recall_per_class[0],
                m.recall_per_class[1],
                m.count
            );
        }
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct AnalyzeRow {
    relation: String,
    edges: usize,
    feature_similarity: Option<f64>,
    label_similarity: Option<f64>,
}

fn analyze_rows(graph: &MultiRelationGraph) -> Vec<AnalyzeRow> {
    let mut rows = Vec::new();
    for r in 0..graph.num_relations() {
        let edges = graph.num_edges(r);
        rows.push(AnalyzeRow {
            relation: graph.relation_names()[r].clone(),
            edges,
            feature_similarity: graph.feature_similarity(r).ok(),
            label_similarity: graph.label_similarity(r).ok(),
        });
    }
    // merged view over the union of all relations
    let merged = graph.merged_adjacency();
    let mut edges = 0usize;
    let mut feat_sum = 0.0;
    let mut same = 0usize;
    for (v, adj) in merged.iter().enumerate() {
        for &u in adj.iter().filter(|&&u| u > v) {
            edges += 1;
            feat_sum += graph.edge_feature_similarity(v, u);
            if graph.label(v) == graph.label(u) {
                same += 1;
            }
        }
    }
    rows.push(AnalyzeRow {
        relation: "ALL".to_string(),
        edges,
        feature_similarity: (edges > 0).then(|| feat_sum / edges as f64),
        label_similarity: (edges > 0).then(|| same as f64 / edges as f64),
    });
    rows
}

fn cmd_analyze(common: &CommonArgs, json: bool) -> Result<()> {
    let cfg = common.resolve()?;
    let graph = cfg.resolve_graph()?;
    let rows = analyze_rows(&graph);
    if json {
        for row in &rows {
            println!(
                "{}",
                serde_json::to_string(&row)
                    .map_err(|e| Error::Config(format!("serialization failed: {e}")))?
            );
        }
    } else {
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.4}"),
            None => "n/a".to_string(),
        };
        println!("{:<16} {:>10} {:>12} {:>12}", "relation", "edges", "feat-sim", "label-sim");
        for row in &rows {
            println!(
                "{:<16} {:>10} {:>12} {:>12}",
                row.relation,
                row.edges,
                fmt(row.feature_similarity),
                fmt(row.label_similarity)
            );
        }
    }
    Ok(())
}

fn cmd_gensynth(common: &CommonArgs) -> Result<()> {
    let cfg = common.resolve()?;
    let synth = cfg.synthetic_config()?;
    let graph = generate_synthetic(&synth)?;
    ensure_output_dir(&cfg)?;
    let nodes_path = cfg.output_dir.join("nodes.tsv");
    let rel_paths: Vec<PathBuf> = graph
        .relation_names()
        .iter()
        .map(|name| cfg.output_dir.join(format!("{name}.tsv")))
        .collect();
    save_graph(&graph, &nodes_path, &rel_paths)?;
    println!("wrote {}", nodes_path.display());
    for (r, path) in rel_paths.iter().enumerate() {
        println!(
            "wrote {} ({} edges, label similarity {:.4})",
            path.display(),
            graph.num_edges(r),
            graph.label_similarity(r).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct CompareRow {
    mode: NeighborMode,
    epoch: usize,
    auc: f64,
    recall: f64,
}

fn cmd_compare(common: &CommonArgs) -> Result<()> {
    let cfg = common.resolve()?;
    cfg.train_config().validate()?;
    let graph = cfg.resolve_graph()?;
    let split = graph.split(cfg.train_fraction, cfg.split_seed())?;
    ensure_output_dir(&cfg)?;

    let mut rows: Vec<CompareRow> = Vec::new();
    let mut summary = String::new();
    for mode in [
        NeighborMode::Adaptive,
        NeighborMode::FixedHalf,
        NeighborMode::FixedAll,
    ] {
        let mut train_cfg = cfg.train_config();
        train_cfg.neighbor_mode = mode;
        let mut session = TrainSession::new(train_cfg, &graph)?;
        let reports = session.train(&graph, &split)?;
        let mut last = None;
        for report in &reports {
            if let Some(eval) = &report.eval {
                rows.push(CompareRow {
                    mode,
                    epoch: report.epoch,
                    auc: eval.gnn.auc,
                    recall: eval.gnn.recall_macro,
                });
                last = Some((report.epoch, eval.gnn.auc, eval.gnn.recall_macro));
            }
        }
        if let Some((epoch, auc, recall)) = last {
            writeln!(
                summary,
                "{mode}: epoch {epoch} auc {auc:.4} recall {recall:.4}"
            )
            .unwrap();
        }
    }
    let path = cfg.output_dir.join("comparison.jsonl");
    write_jsonl(&path, &rows)?;
    print!("{summary}");
    println!("wrote {}", path.display());
    std::io::stdout().flush().ok();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_round_trip_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# comment\nsynth_nodes=500\nsynth_relations=a:0.9:4,b:0.1:6\nepochs=5\nseed=3\n",
        )
        .unwrap();
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.synth_nodes, Some(500));
        assert_eq!(cfg.synth_relations.len(), 2);
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.seed, 3);

        let mut cfg = cfg;
        cfg.set("seed", "9").unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut cfg = RunConfig::default();
        let err = cfg.set("nope", "1").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn bad_values_are_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("epochs", "many").is_err());
        assert!(cfg.set("variant", "magic").is_err());
        assert!(cfg.set("neighbor_mode", "sometimes").is_err());
        assert!(cfg.set("synth_relations", "a:0.9").is_err());
    }

    #[test]
    fn missing_data_source_is_config_error() {
        let cfg = RunConfig::default();
        let err = cfg.resolve_graph().unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn missing_nodes_file_is_data_error() {
        let mut cfg = RunConfig::default();
        cfg.set("nodes", "/definitely/not/here.tsv").unwrap();
        cfg.set("relations", "/also/not/here.tsv").unwrap();
        let err = cfg.resolve_graph().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("here.tsv"));
    }
}
