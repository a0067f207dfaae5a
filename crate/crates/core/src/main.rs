use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use augqa::corpus::{generate_corpus, load_corpus, save_corpus};
use augqa::finetune::{train_stage1, write_run_log, SurrogateHead, TrainSelection, WeightSource};
use augqa::pipeline::{evaluate, run_pipeline, PipelineConfig, Report};
use augqa::qa::{export_weights, load_weight_file, train_stage0, QaConfig, QaParams};
use augqa::snapshot::Snapshot;
use augqa::{Error, Result};

#[derive(Parser)]
#[command(name = "augqa", version, about = "Quality-weighted training on augmented multimodal features")]
struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline config (JSON). Only the sections relevant to the command are used.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<PipelineConfig> {
        match &self.config {
            Some(p) => PipelineConfig::load(p),
            None => Ok(PipelineConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feature corpus.
    GenCorpus {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Override the number of originals.
        #[arg(long)]
        n_originals: Option<usize>,
        /// Disable every corruption kind.
        #[arg(long)]
        clean: bool,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Train the quality scorer on forged negatives.
    Stage0 {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        corpus: PathBuf,
        /// Where to write the scorer snapshot.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Score a corpus with a trained scorer and export the weight file.
    Score {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        qa: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Fine-tune the surrogate head, optionally with a weight file.
    Stage1 {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Where to write the head snapshot.
        #[arg(long)]
        out: PathBuf,
        /// Per-step loss log (JSONL).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Train on originals only.
        #[arg(long, conflicts_with = "augmented_only")]
        original_only: bool,
        /// Train on augments only.
        #[arg(long)]
        augmented_only: bool,
        /// Fraction of originals to keep.
        #[arg(long, default_value_t = 1.0)]
        original_fraction: f64,
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Evaluate a head snapshot on a corpus.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        head: PathBuf,
        /// Include augmented records, not only originals.
        #[arg(long)]
        all: bool,
    },
    /// Render a saved report.
    Report {
        #[arg(long)]
        report: PathBuf,
        /// Also write per-seed metrics as CSV.
        #[arg(long)]
        dump_csv: Option<PathBuf>,
    },
    /// Run every stage for every seed and arm.
    Pipeline {
        /// Seeds to run; replaces the config's list. Required unless the config file sets `seeds`.
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        /// Artifact directory; replaces the config's `out_dir`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        dump_csv: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArg,
    },
}

fn emit(json_mode: bool, value: serde_json::Value, text: String) {
    if json_mode {
        println!("{value}");
    } else {
        println!("{text}");
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn config_sets_seeds(path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    Ok(value.get("seeds").is_some())
}

fn run(cli: Cli) -> Result<()> {
    let json_mode = cli.json;
    match cli.command {
        Command::GenCorpus {
            seed,
            out,
            n_originals,
            clean,
            config,
        } => {
            let mut gen = config.load()?.generator;
            if let Some(n) = n_originals {
                gen.n_originals = n;
            }
            if clean {
                gen.profile = augqa::corpus::CorruptionProfile::clean();
            }
            let corpus = generate_corpus(&gen, seed)?;
            save_corpus(&corpus, &out)?;
            emit(
                json_mode,
                json!({
                    "records": corpus.len(),
                    "originals": corpus.originals().count(),
                    "content_checksum": corpus.content_checksum(),
                    "feature_checksum": corpus.feature_checksum(),
                }),
                format!("wrote {} records to {}", corpus.len(), out.display()),
            );
        }
        Command::Stage0 {
            seed,
            corpus,
            out,
            steps,
            config,
        } => {
            let corpus = load_corpus(&corpus)?;
            let mut qa_cfg = QaConfig {
                seed,
                ..config.load()?.qa
            };
            if let Some(s) = steps {
                qa_cfg.steps = s;
            }
            let (params, log) = train_stage0(&corpus, &qa_cfg)?;
            params.to_snapshot(corpus.header()).save(&out)?;
            let final_loss = log.loss.iter().rev().find_map(|l| *l);
            emit(
                json_mode,
                json!({ "qa_checksum": params.checksum(), "final_loss": final_loss }),
                format!("scorer written to {} (checksum {})", out.display(), params.checksum()),
            );
        }
        Command::Score {
            corpus,
            qa,
            out,
            config,
        } => {
            let corpus = load_corpus(&corpus)?;
            let params = QaParams::from_snapshot(&Snapshot::load(&qa)?)?;
            let file = export_weights(&corpus, &params, &config.load()?.weight_map, &out)?;
            emit(
                json_mode,
                json!({ "entries": file.entries.len(), "corpus_checksum": file.metadata.corpus_checksum }),
                format!("wrote {} weights to {}", file.entries.len(), out.display()),
            );
        }
        Command::Stage1 {
            seed,
            corpus,
            weights,
            out,
            log,
            original_only,
            augmented_only,
            original_fraction,
            steps,
            config,
        } => {
            let corpus = load_corpus(&corpus)?;
            let source = match &weights {
                Some(p) => WeightSource::File(load_weight_file(p)?),
                None => WeightSource::Uniform,
            };
            let mut head_cfg = config.load()?.head;
            if let Some(s) = steps {
                head_cfg.steps = s;
            }
            let selection = TrainSelection {
                originals: !augmented_only,
                augmented: !original_only,
                original_fraction,
            };
            let run = train_stage1(&corpus, &source, &head_cfg, &selection, seed)?;
            run.head.to_snapshot(corpus.header()).save(&out)?;
            if let Some(p) = &log {
                write_run_log(&run, p)?;
            }
            emit(
                json_mode,
                json!({
                    "n_train": run.n_train,
                    "final_loss": run.loss.last(),
                    "head_checksum": run.head.checksum(),
                }),
                format!("head written to {} ({} training samples)", out.display(), run.n_train),
            );
        }
        Command::Eval { corpus, head, all } => {
            let corpus = load_corpus(&corpus)?;
            let head = SurrogateHead::from_snapshot(&Snapshot::load(&head)?)?;
            let m = evaluate(&head, &corpus, !all)?;
            let text = format!(
                "n={} acc2={:.4} acc5={:.4} acc7={:.4} f1={:.4} mae={:.4} corr={}",
                m.n,
                m.acc2,
                m.acc5,
                m.acc7,
                m.f1_weighted,
                m.mae,
                m.corr.map_or("n/a".to_string(), |c| format!("{c:.4}")),
            );
            emit(json_mode, serde_json::to_value(m)?, text);
        }
        Command::Report { report, dump_csv } => {
            let report = Report::load(&report)?;
            if let Some(p) = &dump_csv {
                write_text(p, &report.to_csv())?;
            }
            if json_mode {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.render_table());
            }
        }
        Command::Pipeline {
            seed,
            out_dir,
            dump_csv,
            config,
        } => {
            let mut cfg = config.load()?;
            if !seed.is_empty() {
                cfg.seeds = seed;
            } else {
                let explicit = match &config.config {
                    Some(p) => config_sets_seeds(p)?,
                    None => false,
                };
                if !explicit {
                    return Err(Error::invalid(
                        "pipeline needs --seed or a config file with `seeds`",
                    ));
                }
            }
            if out_dir.is_some() {
                cfg.out_dir = out_dir;
            }
            let report = run_pipeline(&cfg)?;
            if let Some(p) = &dump_csv {
                write_text(p, &report.to_csv())?;
            }
            if json_mode {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.render_table());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
