//! Command-line front end. Exit codes: 0 success, 1 check failure, 2 input
//! or config error, 3 numerical abort.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::suite::run_verification;
use crate::train::{run_method_comparison, train_seeded, write_comparison, write_history};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "hscl", version, about = "Hard-negative contrastive learning: exact checks and small-scale training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment config (flat `section.key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides `train.seed` and `verify.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for parallel evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Randomized exact checks; writes verify_report.json.
    Verify,
    /// Train one embedder; writes history.csv and weights.{shape,bin}.
    Train,
    /// Final probe accuracy per method and seed; writes comparison.csv.
    Compare,
    /// Writes the configured population as population.csv.
    MakeData,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn init_threads(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("--threads must be >= 1".into()));
    }
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    init_threads(cli.threads)?;
    let cfg = load_config(cli)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let out = &cfg.output_dir;
    match cli.command {
        Command::Verify => {
            let pop = cfg.population.as_ref().map(|p| crate::population::Population::load_csv(p)).transpose()?;
            let report = run_verification(&cfg.verify, pop.as_ref())?;
            let path = out.join("verify_report.json");
            let mut w = create(&path)?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            w.flush()?;
            match &report.first_failure {
                None => {
                    println!("verify: all checks passed ({})", path.display());
                    Ok(EXIT_OK)
                }
                Some(f) => {
                    eprintln!("verify: FAILED: {f}");
                    Ok(EXIT_CHECK_FAILED)
                }
            }
        }
        Command::Train => {
            let pop = cfg.population()?;
            let outcome = train_seeded(&pop, &cfg.train)?;
            let mut w = create(&out.join("history.csv"))?;
            write_history(&mut w, &outcome.history)?;
            w.flush()?;
            outcome.embedder.save(&out.join("weights"))?;
            let violations: Vec<usize> = outcome
                .history
                .iter()
                .filter(|r| r.loss_bound_violated())
                .map(|r| r.epoch)
                .collect();
            if let Some(acc) = outcome.final_probe_accuracy() {
                println!("train: {} epochs, final probe accuracy {acc}", outcome.history.len());
            }
            if violations.is_empty() {
                Ok(EXIT_OK)
            } else {
                eprintln!("train: H-SCL loss above H-UCL at fully-satisfying epochs {violations:?}");
                Ok(EXIT_CHECK_FAILED)
            }
        }
        Command::Compare => {
            let pop = cfg.population()?;
            let rows = run_method_comparison(&pop, &cfg.train, &cfg.compare_methods, &cfg.compare_seeds)?;
            let mut w = create(&out.join("comparison.csv"))?;
            write_comparison(&mut w, &rows)?;
            w.flush()?;
            for r in &rows {
                println!("{:<24} {:.4} +- {:.4}  {:?}", r.setting, r.mean_acc, r.std_acc, r.accuracies);
            }
            Ok(EXIT_OK)
        }
        Command::MakeData => {
            let pop = cfg.population()?;
            pop.save_csv(&out.join("population.csv"))?;
            println!("make-data: {} points, {} classes", pop.len(), pop.n_classes());
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args`, runs, and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
