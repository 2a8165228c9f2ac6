use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use vulngraph_core::checkpoint::Checkpoint;
use vulngraph_core::config::PipelineConfig;
use vulngraph_core::cpg::{build_cpg, parse_classes, simplify};
use vulngraph_core::dataset::{ingest_jsonl, to_jsonl};
use vulngraph_core::flow::build_cfg;
use vulngraph_core::explain::{ExplainOptions, LayerSelector, ScoreSource};
use vulngraph_core::frontend::{parse_source, SourceFunction};
use vulngraph_core::pipeline::{train_model, Model};
use vulngraph_core::synth::{gen_synthetic, SyntheticSpec, Template};

#[derive(Parser)]
#[command(name = "vulngraph", version, about = "Graph-attention vulnerability detection for C functions")]
struct Cli {
    /// Pipeline configuration (JSON). Missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path. `train` writes the checkpoint here; other commands
    /// write their result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Json,
    Dot,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParseEmit {
    #[value(alias = "json")]
    AstJson,
    #[value(alias = "dot")]
    AstDot,
    /// The control-flow graph with true/false branch labels.
    CfgDot,
}

#[derive(Subcommand)]
enum Command {
    /// Print the AST or control-flow graph of one function.
    Parse {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "ast-json")]
        emit: ParseEmit,
    },
    /// Print the code property graph of one function.
    Graph {
        file: PathBuf,
        /// Comma-separated edge classes (ast, cfg, ddg, cdg); defaults to the config's.
        #[arg(long)]
        classes: Option<String>,
        #[arg(long, value_enum, default_value = "json")]
        emit: Emit,
        /// Print the class-erased graph with its message-passing direction instead.
        #[arg(long)]
        simple: bool,
    },
    /// Train a model on a JSONL corpus and write the checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Score a checkpoint on a labeled JSONL corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Predict the vulnerability probability of one function.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        file: PathBuf,
    },
    /// Rank the graph edges of one function by attention.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, value_enum, default_value = "dot")]
        emit: Emit,
        /// raw (attention logits) or normalized (softmax weights).
        #[arg(long, default_value = "raw")]
        score: ScoreSource,
        /// Rank using a single attention layer instead of the maximum over all.
        #[arg(long)]
        layer: Option<usize>,
    },
    /// Generate a synthetic labeled corpus as JSONL.
    Synth {
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0.5)]
        rate: f64,
        /// Comma-separated templates: unchecked-division, overflow-prone-decl.
        #[arg(long)]
        templates: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VIGNAT_LOG", "warn")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

/// The error chain, skipping causes whose text the outer messages already include.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg = format!("{msg}: {c}");
        }
    }
    msg
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.normalize();
    cfg.validate()?;
    Ok(cfg)
}

fn read_function(path: &Path) -> Result<SourceFunction> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    SourceFunction::new(text, None).map_err(|e| anyhow::anyhow!("frontend: {e}"))
}

fn load_model(path: &Path) -> Result<Model> {
    Ok(Model::new(Checkpoint::load(path)?))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn with_hash(mut v: Value, hash: &str) -> Value {
    v["config_hash"] = Value::from(hash);
    v
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Parse { file, emit: kind } => {
            let f = read_function(file)?;
            let ast = parse_source(&f.source)?;
            let text = match kind {
                ParseEmit::AstJson => pretty(&ast.to_json()),
                ParseEmit::AstDot => ast.to_dot(),
                ParseEmit::CfgDot => build_cfg(&ast)?.to_dot(&ast),
            };
            emit(out, &text)
        }
        Command::Graph {
            file,
            classes,
            emit: kind,
            simple,
        } => {
            let cfg = load_config(&cli)?;
            let include = match classes {
                Some(list) => parse_classes(list).map_err(anyhow::Error::msg)?,
                None => cfg.classes.iter().copied().collect(),
            };
            let f = read_function(file)?;
            let ast = parse_source(&f.source)?;
            let cpg = build_cpg(&ast, &include)?;
            let text = match (kind, simple) {
                (Emit::Json, false) => pretty(&cpg.to_json()),
                (Emit::Dot, false) => cpg.to_dot(&[]),
                (Emit::Json, true) => {
                    let g = simplify(&cpg, cfg.direction);
                    let edges: Vec<Value> = g
                        .edges
                        .iter()
                        .map(|(&(src, dst), o)| json!({"src": src, "dst": dst, "synthetic": o.synthetic}))
                        .collect();
                    pretty(&json!({
                        "nodes": g.nodes,
                        "edges": edges,
                        "direction": g.direction,
                    }))
                }
                (Emit::Dot, true) => simplify(&cpg, cfg.direction).to_dot(&[]),
            };
            emit(out, &text)
        }
        Command::Train { data } => {
            let cfg = load_config(&cli)?;
            let corpus = ingest_jsonl(data)?;
            log::info!(
                "ingested {} functions, skipped {} of {} lines",
                corpus.functions.len(),
                corpus.skipped.len(),
                corpus.total
            );
            let report = train_model(&corpus.functions, &cfg)?;
            let path = out.unwrap_or(Path::new("model.json"));
            report.checkpoint.save(path)?;
            let summary = json!({
                "config_hash": report.checkpoint.config_hash,
                "seed": cfg.seed,
                "n_train": report.n_train,
                "n_test": report.n_test,
                "n_skipped": corpus.skipped.len(),
                "n_filtered": report.n_filtered,
                "final_loss": report.losses.last(),
                "train": report.train_metrics,
                "test": report.test_metrics,
            });
            eprintln!("held-out metrics:\n{}", report.test_metrics);
            emit(None, &pretty(&summary))
        }
        Command::Eval { model, data } => {
            let model = load_model(model)?;
            let corpus = ingest_jsonl(data)?;
            let metrics = model.evaluate(&corpus.functions)?;
            eprintln!("{metrics}");
            let v = with_hash(serde_json::to_value(metrics)?, &model.checkpoint.config_hash);
            emit(out, &pretty(&v))
        }
        Command::Predict { model, file } => {
            let model = load_model(model)?;
            let p = model.predict(&read_function(file)?)?;
            let v = with_hash(serde_json::to_value(p)?, &model.checkpoint.config_hash);
            emit(out, &pretty(&v))
        }
        Command::Explain {
            model,
            file,
            k,
            emit: kind,
            score,
            layer,
        } => {
            let model = load_model(model)?;
            let options = ExplainOptions {
                k: *k,
                source: *score,
                layer: layer.map_or(LayerSelector::All, LayerSelector::Layer),
            };
            let (expl, dot) = model.explain(&read_function(file)?, &options)?;
            let hash = &model.checkpoint.config_hash;
            let text = match kind {
                Emit::Json => pretty(&with_hash(serde_json::to_value(&expl)?, hash)),
                Emit::Dot => format!("// config_hash {hash}\n{dot}"),
            };
            emit(out, &text)
        }
        Command::Synth { count, rate, templates } => {
            let seed = match (&cli.config, cli.seed) {
                (_, Some(s)) => s,
                (Some(_), None) => load_config(&cli)?.seed,
                (None, None) => 0,
            };
            let mut spec = SyntheticSpec::new(*count, *rate, seed);
            if let Some(list) = templates {
                spec.templates = list
                    .split(',')
                    .map(|t| t.trim().parse::<Template>())
                    .collect::<Result<_, _>>()
                    .map_err(anyhow::Error::msg)?;
            }
            let records = gen_synthetic(&spec)?;
            if records.is_empty() {
                bail!("synth: nothing generated");
            }
            emit(out, &to_jsonl(&records))
        }
    }
}
