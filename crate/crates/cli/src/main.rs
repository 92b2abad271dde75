//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime failure.
//! Relative data paths are resolved against `METACGNN_DATA_ROOT` when set.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use metacgnn::baselines::{score_baseline, BaselineConfig};
use metacgnn::metrics;
use metacgnn::report::BenchmarkReport;
use metacgnn::trainer::{self, ensemble_score, TrainedEnsemble};
use metacgnn::{datagen, io, BenchConfig, CeDatabase, Error, Family, Method, Variant};

#[derive(Parser)]
#[command(name = "metacgnn", version, about = "Meta-learned cause-effect inference")]
struct Cli {
    /// Root for relative data paths.
    #[arg(long, env = "METACGNN_DATA_ROOT", global = true)]
    data_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labelled cause-effect database.
    Gen {
        #[arg(long, default_value = "multi")]
        family: Family,
        #[arg(long, default_value_t = 60)]
        n_pairs: usize,
        #[arg(long, default_value_t = 100)]
        n_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a meta-model ensemble (or an ablation) on a database.
    Train {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// full, no_film or naive_joint.
        #[arg(long, default_value = "full")]
        variant: String,
        #[command(flatten)]
        opts: ConfigOpts,
    },
    /// Score one two-column data file with a trained ensemble.
    Score {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Standardize the file's columns before scoring.
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        standardize: bool,
    },
    /// Run the full benchmark protocol from a config file.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        opts: ConfigOpts,
        /// Verify and print an existing report instead of running.
        #[arg(long)]
        check: Option<PathBuf>,
    },
    /// Run a per-dataset baseline over a database.
    Baseline {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        db: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        opts: ConfigOpts,
    },
}

/// Any config key can be overridden with `--set key=value`.
#[derive(Args, Default)]
struct ConfigOpts {
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long)]
    decoder_hidden: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl ConfigOpts {
    fn apply(&self, c: &mut BenchConfig) -> metacgnn::Result<()> {
        if let Some(e) = self.epochs {
            c.set("epochs", &e.to_string())?;
        }
        if let Some(k) = self.ensemble_size {
            c.set("ensemble_size", &k.to_string())?;
        }
        if let Some(h) = &self.decoder_hidden {
            c.set("decoder_hidden", h)?;
        }
        if let Some(o) = &self.output_dir {
            c.output_dir = o.clone();
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            c.set(k, v)?;
        }
        c.validate()
    }
}

fn resolve(root: &Option<PathBuf>, p: &Path) -> PathBuf {
    match root {
        Some(r) if p.is_relative() => r.join(p),
        _ => p.to_path_buf(),
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(c.downcast_ref::<Error>(), Some(Error::Config(_) | Error::Parse { .. }))
            || c.downcast_ref::<clap::Error>().is_some()
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let root = &cli.data_root;
    match cli.command {
        Command::Gen { family, n_pairs, n_points, seed, out } => {
            let db = datagen::generate(family, n_pairs, n_points, seed)?;
            db.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} {} pairs to {}", db.len(), family.as_str(), out.display());
        }
        Command::Train { db, out, variant, opts } => {
            let mut c = BenchConfig::default();
            opts.apply(&mut c)?;
            let variant = match variant.as_str() {
                "full" => Variant::Full,
                "no_film" | "meta_nofilm" => Variant::NoFilm,
                "naive_joint" => Variant::NaiveJoint,
                v => return Err(Error::Config(format!("unknown variant {v:?}")).into()),
            };
            let db = CeDatabase::load(resolve(root, &db))?;
            let tc = metacgnn::TrainConfig { variant, progress_log: Some(out.join("progress.jsonl")), ..c.train };
            std::fs::create_dir_all(&out)?;
            let ens = trainer::train_ensemble(&db, &tc)?;
            ens.save(&out)?;
            for (k, h) in ens.histories.iter().enumerate() {
                let last = h.last().map_or(ens.initial_losses[k], |r| r.mean_loss);
                println!("member {k}: loss {:.5} -> {last:.5}", ens.initial_losses[k]);
            }
            println!("decoder width {}; models in {}", ens.decoder_hidden, out.display());
        }
        Command::Score { models, file, seed, standardize } => {
            let ens = TrainedEnsemble::load(&models)?;
            let mut d = io::read_pair_file(resolve(root, &file))?;
            if standardize {
                d = metacgnn::standardize(&d)?;
            }
            let s = ensemble_score(&ens.models, &d, seed, &metacgnn::BandwidthSet::default())?;
            let out = serde_json::json!({
                "name": d.name,
                "direction": s.predicted,
                "s": s.s,
                "confidence": s.s.abs(),
                "m_xy": s.m_xy,
                "m_yx": s.m_yx,
            });
            println!("{out}");
        }
        Command::Bench { config, opts, check } => {
            if let Some(path) = check {
                let r = BenchmarkReport::load(&path)?;
                print!("{}", r.to_text());
                return Ok(());
            }
            let mut c = match config {
                Some(p) => BenchConfig::from_file(resolve(root, &p))?,
                None => BenchConfig::default(),
            };
            opts.apply(&mut c)?;
            if let Some(r) = root {
                c.resolve_data_root(r);
            }
            let report = metacgnn::run_benchmark(&c)?;
            print!("{}", report.to_text());
            if !report.failures.is_empty() {
                anyhow::bail!("{} stage(s) failed; see {}", report.failures.len(), c.output_dir.display());
            }
        }
        Command::Baseline { method, db, seed, opts } => {
            let mut c = BenchConfig::default();
            opts.apply(&mut c)?;
            let bc = BaselineConfig { method, seed, ..c.baseline };
            let db = CeDatabase::load(resolve(root, &db))?;
            let mut correct = Vec::new();
            for (i, d) in db.presented().iter().enumerate() {
                let s = score_baseline(d, &bc, metacgnn::rng::derive(seed, &[i as u64]))?;
                println!("{}\t{}\t{}\t{:.6}", d.name, d.label.as_str(), s.predicted.as_str(), s.s);
                correct.push(s.predicted.is_correct(d.label));
            }
            println!("accuracy {:.4}", metrics::accuracy(&correct)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 3 })
        }
    }
}
