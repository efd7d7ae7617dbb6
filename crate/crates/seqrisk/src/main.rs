use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use seqrisk::analysis_report::{analyze, load_ratings, write_chi_square_csv, write_cooccurrence_csv};
use seqrisk::corpus_io::{load_corpus, save_corpus, save_ground_truth, truth_path};
use seqrisk::explain::{explain, render_text};
use seqrisk::model_io::load_model;
use seqrisk::run::{self, load_folds, render_scores_json, scores_of, sibling_config, RunConfig};
use seqrisk_core::model::Ablations;
use seqrisk_core::synthetic::{generate_synthetic, SyntheticConfig};
use seqrisk_core::trainer::SweepParam;

/// Environment variable that takes precedence over `--seed`.
const SEED_ENV: &str = "SEQRISK_SEED";

#[derive(Parser)]
#[command(name = "seqrisk", version, about = "Subsequent suicide-risk forecasting with risk and protective factors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablate {
    Rf,
    Pf,
    Df,
}

impl Ablate {
    fn flags(self) -> Ablations {
        match self {
            Ablate::Rf => Ablations { disable_rf: true, ..Default::default() },
            Ablate::Pf => Ablations { disable_pf: true, ..Default::default() },
            Ablate::Df => Ablations { disable_df: true, ..Default::default() },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    L,
    Tau,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    folds: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    max_epochs: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus and its ground-truth sidecar.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        users: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        protective_pull: Option<f64>,
        #[arg(long)]
        risk_push: Option<f64>,
        /// Sidecar path; defaults to `<out>.truth.jsonl`.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Annotation analytics: agreement, chi-square table, co-occurrence.
    Analyze {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rater-count CSV (one item per row, one column per category).
        #[arg(long)]
        ratings: Option<PathBuf>,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
        l: u64,
    },
    /// Cross-validate, train a final model and write a run directory.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Also cross-validate with this task disabled (repeatable).
        #[arg(long, value_enum)]
        ablate: Vec<Ablate>,
    },
    /// Reprint the fold scores stored in a run directory.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
    },
    /// One cross-validation per value of `l` or `tau`.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        sweep: SweepArg,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Explain one window with a trained model.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        window_index: usize,
        /// Defaults to the `config.json` next to the model.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write explain.json and explain.txt here as well as printing.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
}

/// `SEQRISK_SEED` if set, else the flag.
fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("{SEED_ENV}={v} is not an unsigned integer"))?)),
        Err(std::env::VarError::NotPresent) => Ok(flag),
        Err(e) => bail!("{SEED_ENV}: {e}"),
    }
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn resolve_run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = load_run_config(args.config.as_deref())?;
    if let Some(seed) = resolve_seed(args.seed)? {
        cfg.model.seed = seed;
    }
    if let Some(k) = args.folds {
        cfg.folds = k as usize;
    }
    if let Some(e) = args.max_epochs {
        cfg.model.max_epochs = e as usize;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { out, users, seed, protective_pull, risk_push, truth } => {
            let mut cfg = SyntheticConfig {
                n_users: users as usize,
                seed: resolve_seed(Some(seed))?.unwrap_or(seed),
                ..Default::default()
            };
            if let Some(p) = protective_pull {
                cfg.protective_pull = p;
            }
            if let Some(p) = risk_push {
                cfg.risk_push = p;
            }
            let corpus = generate_synthetic(&cfg)?;
            save_corpus(&out, &corpus.users)?;
            let truth = truth.unwrap_or_else(|| truth_path(&out));
            save_ground_truth(&truth, &corpus.transitions)?;
            let posts: usize = corpus.users.iter().map(|u| u.posts.len()).sum();
            println!("wrote {} users, {posts} posts to {}", corpus.users.len(), out.display());
        }
        Command::Analyze { corpus, out, ratings, l } => {
            let users = load_corpus(&corpus)?;
            let ratings = ratings.as_deref().map(load_ratings).transpose()?;
            let report = analyze(&corpus.display().to_string(), &users, l as usize, ratings.as_ref())?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut json = serde_json::to_string_pretty(&report)?;
            json.push('\n');
            write_file(&out.join("analysis.json"), json.as_bytes())?;
            let mut buf = Vec::new();
            write_cooccurrence_csv(&mut buf, &report)?;
            write_file(&out.join("cooccurrence.csv"), &buf)?;
            let mut buf = Vec::new();
            write_chi_square_csv(&mut buf, &report)?;
            write_file(&out.join("chi_square.csv"), &buf)?;
            let significant: Vec<&str> = report
                .chi_square
                .iter()
                .filter(|r| r.significant == Some(true))
                .map(|r| r.code.as_str())
                .collect();
            println!("{} windows; significant factors: {}", report.windows, significant.join(" "));
        }
        Command::Train { run: args, ablate } => {
            let cfg = resolve_run_config(&args)?;
            let users = load_corpus(&args.corpus)?;
            let provider = cfg.embedder.provider(&users)?;
            let extra: Vec<Ablations> = ablate.iter().map(|a| a.flags()).collect();
            let result = run::train_run(&users, provider.as_ref(), &cfg, &extra, &args.out)?;
            for v in &result.variants {
                let r = v.row();
                println!("{:<8} GP {:.4}  GR {:.4}  FS {:.4}  (majority FS {:.4})", r.variant, r.gp, r.gr, r.fs, r.baseline_fs);
            }
        }
        Command::Evaluate { run } => {
            let folds = load_folds(&run)?;
            let rendered = render_scores_json(&scores_of(&folds))?;
            std::io::stdout().write_all(rendered.as_bytes())?;
        }
        Command::Sweep { run: args, sweep, values } => {
            let cfg = resolve_run_config(&args)?;
            let users = load_corpus(&args.corpus)?;
            let provider = cfg.embedder.provider(&users)?;
            let param = match sweep {
                SweepArg::L => SweepParam::L,
                SweepArg::Tau => SweepParam::Tau,
            };
            let file = run::sweep_run(&users, provider.as_ref(), &cfg, param, &values, &args.out)?;
            for r in &file.rows {
                println!("{} = {}: {} windows, FS {:.4}", file.param, r.value, r.windows, r.scores.fs);
            }
        }
        Command::Explain { model, corpus, user, window_index, config, out, json } => {
            let config_path = config.or_else(|| sibling_config(&model));
            let cfg = load_run_config(config_path.as_deref())?;
            let params = load_model(&model)?;
            let users = load_corpus(&corpus)?;
            let provider = cfg.embedder.provider(&users)?;
            let report = explain(&params, &users, provider.as_ref(), &cfg, &user, window_index)?;
            let mut report_json = serde_json::to_string_pretty(&report)?;
            report_json.push('\n');
            let text = render_text(&report);
            if let Some(dir) = out {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                write_file(&dir.join("explain.json"), report_json.as_bytes())?;
                write_file(&dir.join("explain.txt"), text.as_bytes())?;
            }
            let shown = if json { report_json } else { text };
            std::io::stdout().write_all(shown.as_bytes())?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
