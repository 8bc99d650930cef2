//! `dicr`: data preparation, staged training, evaluation, path-count sweeps,
//! plotting and an interactive chat.
//!
//! Every command works under one artifact root (`--out`, defaulting to
//! `$DICR_DATA_DIR`, then `./dicr-data`): normalised data lives in
//! `<root>/data`, training output in `<root>/run`.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dicr_core::corpus::{generate_toy_world, ToyConfig};
use dicr_core::eval::{emit_plots, MetricsReport};
use dicr_core::trainer::{
    checkpoint_path, evaluate, sweep, ChatSession, DataSet, Models, Stage, TrainConfig, Trainer,
    FALLBACK, PRESET_FILE,
};

#[derive(Parser)]
#[command(
    name = "dicr",
    version,
    about = "Knowledge-graph conversational recommender"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Artifact root.
    #[arg(long, env = "DICR_DATA_DIR", default_value = "dicr-data")]
    out: PathBuf,
    /// Flat key=value configuration; explicit flags win over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Normalise a graph and a dialog corpus into `<root>/data`.
    Prepare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Generate the synthetic world into `<root>/data`.
    Toygen {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        entities: usize,
        #[arg(long, default_value_t = 5)]
        relations: usize,
        #[arg(long, default_value_t = 500)]
        dialogs: usize,
    },
    /// Train the graph embeddings only.
    TrainEmbeddings {
        #[command(flatten)]
        common: Common,
    },
    /// Run one training stage, or `all` of them in order.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        stage: Option<Stage>,
    },
    /// Score a checkpoint on a split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Candidate paths for generation (defaults to the checkpoint's setting).
        #[arg(long)]
        np: Option<usize>,
    },
    /// Evaluate a checkpoint over several path counts and plot the trend.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        np: Vec<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Talk to a trained checkpoint; an empty line or end of input quits.
    Chat {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Render saved reports as a sweep table and chart in `<root>/plots`.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        report: Vec<PathBuf>,
    },
}

fn data_dir(root: &Path) -> PathBuf {
    root.join("data")
}

fn run_dir(root: &Path) -> PathBuf {
    root.join("run")
}

/// Preset from the data directory, then the config file, then flags.
fn resolve_config(common: &Common, stage: Option<Stage>) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    let preset = data_dir(&common.out).join(PRESET_FILE);
    if preset.is_file() {
        cfg.apply_text(
            &std::fs::read_to_string(&preset).with_context(|| preset.display().to_string())?,
        )?;
    }
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_text(&text)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(stage) = stage {
        cfg.stage = stage;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(root: &Path) -> Result<DataSet> {
    let dir = data_dir(root);
    DataSet::load(&dir).with_context(|| {
        format!(
            "loading data from {} (run `toygen` or `prepare` first)",
            dir.display()
        )
    })
}

fn load_models(path: &Path) -> Result<Models> {
    Models::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn trainer(common: &Common, stage: Option<Stage>) -> Result<Trainer> {
    let cfg = resolve_config(common, stage)?;
    let mut t = Trainer::new(cfg, load_data(&common.out)?, &run_dir(&common.out))?;
    let flag = Arc::new(AtomicBool::new(false));
    let handler_flag = flag.clone();
    if ctrlc::set_handler(move || handler_flag.store(true, Ordering::SeqCst)).is_ok() {
        t.interrupt = Some(flag);
    }
    Ok(t)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { common, kg, corpus } => {
            let cfg = resolve_config(&common, None)?;
            let data = DataSet::prepare(&kg, &corpus, cfg.split_ratios(), cfg.seed)?;
            for p in data.save(&data_dir(&common.out))? {
                println!("wrote {}", p.display());
            }
        }
        Command::Toygen {
            common,
            entities,
            relations,
            dialogs,
        } => {
            let mut cfg = TrainConfig::toy();
            if let Some(path) = &common.config {
                cfg.apply_text(
                    &std::fs::read_to_string(path).with_context(|| path.display().to_string())?,
                )?;
            }
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            cfg.validate()?;
            let world = generate_toy_world(&ToyConfig {
                seed: cfg.seed,
                num_entities: entities,
                num_relations: relations,
                num_dialogs: dialogs,
            })?;
            let data = DataSet::from_world(world, cfg.split_ratios(), cfg.seed)?;
            let dir = data_dir(&common.out);
            let mut written = data.save(&dir)?;
            let preset = dir.join(PRESET_FILE);
            cfg.save(&preset)?;
            written.push(preset);
            for p in written {
                println!("wrote {}", p.display());
            }
        }
        Command::TrainEmbeddings { common } => {
            let t = trainer(&common, None)?;
            let emb = t.train_embeddings()?;
            println!(
                "trained {}-dimensional embeddings for {} entities",
                emb.dim, emb.entities.rows
            );
        }
        Command::Train { common, stage } => {
            let t = trainer(&common, stage)?;
            for p in t.run(t.cfg.stage)? {
                println!("wrote {}", p.display());
            }
            let report = t.run_dir.join(dicr_core::trainer::REPORT_FILE);
            if matches!(t.cfg.stage, Stage::Joint | Stage::All) && report.is_file() {
                println!("wrote {}", report.display());
            }
        }
        Command::Eval {
            common,
            checkpoint,
            split,
            report,
            np,
        } => {
            let models = load_models(&checkpoint)?;
            let data = load_data(&common.out)?;
            let n = np.unwrap_or(models.cfg.n_paths);
            let r = evaluate(&models, &data, &split, n)?;
            let path =
                report.unwrap_or_else(|| run_dir(&common.out).join(format!("eval_{split}.txt")));
            r.save(&path)?;
            print!("{}", r.to_text()?);
            println!("wrote {}", path.display());
        }
        Command::Sweep {
            common,
            np,
            checkpoint,
            split,
        } => {
            if np.contains(&0) {
                bail!("--np values must be positive");
            }
            let ckpt =
                checkpoint.unwrap_or_else(|| checkpoint_path(&run_dir(&common.out), Stage::Joint));
            let models = load_models(&ckpt)?;
            let data = load_data(&common.out)?;
            let reports = sweep(&models, &data, &split, &np)?;
            let dir = common.out.join("sweep");
            for r in &reports {
                let p = dir.join(format!("report_np{}.txt", r.n_paths));
                r.save(&p)?;
                println!(
                    "np {}: hit {} p_inter {:.4} p_inner {:.4} -> {}",
                    r.n_paths,
                    r.hit.map_or("null".into(), |h| format!("{h:.4}")),
                    r.p_inter,
                    r.p_inner,
                    p.display()
                );
            }
            for p in emit_plots(&reports, &dir)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Chat { common, checkpoint } => {
            let models = load_models(&checkpoint)?;
            let data = load_data(&common.out)?;
            chat(&models, &data)?;
        }
        Command::Plot { common, report } => {
            let reports = report
                .iter()
                .map(|p| {
                    MetricsReport::load(p)
                        .with_context(|| format!("reading report {}", p.display()))
                })
                .collect::<Result<Vec<_>>>()?;
            for p in emit_plots(&reports, &common.out.join("plots"))? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn chat(models: &Models, data: &DataSet) -> Result<()> {
    let mut session = ChatSession::new(models, data);
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    loop {
        write!(out, "you> ")?;
        out.flush()?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 || line.trim().is_empty() {
            break;
        }
        match session.respond(&line) {
            Ok(reply) => {
                writeln!(out, "dicr> {}", reply.response.join(" "))?;
                if reply.explanation.is_empty() {
                    writeln!(out, "path> (none)")?;
                } else {
                    writeln!(out, "path> {}", reply.explanation.join(" "))?;
                }
            }
            Err(e) => {
                log::warn!("chat turn failed: {e}");
                writeln!(out, "dicr> {FALLBACK}\npath> (none)")?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
