//! Command-line front end for the experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scmc_harness::config::{ExperimentConfig, Mode};
use scmc_harness::error::{HarnessError, Result};
use scmc_harness::experiment::run_experiment;
use scmc_harness::movielens::{load_movielens, write_weight_grid};
use scmc_harness::output::write_rows;

#[derive(Parser)]
#[command(name = "scmc", about = "Joint confidence regions for missing matrix entries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalOpts {
    /// Master seed for all random streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel trials (0 = automatic).
    #[arg(long)]
    threads: Option<usize>,
    /// Miscoverage level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Group size.
    #[arg(long)]
    k: Option<usize>,
    /// Prediction rule: cube, rect or sphere.
    #[arg(long)]
    rule: Option<String>,
    /// Comma-separated methods: scmc, unadj, bonf.
    #[arg(long)]
    methods: Option<String>,
}

impl GlobalOpts {
    fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        let mut set = |key: &str, value: String| {
            config.set(key, &value).map_err(HarnessError::Config)
        };
        if let Some(seed) = self.seed {
            set("seed", seed.to_string())?;
        }
        if let Some(threads) = self.threads {
            set("threads", threads.to_string())?;
        }
        if let Some(alpha) = self.alpha {
            set("alpha", alpha.to_string())?;
        }
        if let Some(k) = self.k {
            set("k", k.to_string())?;
        }
        if let Some(rule) = &self.rule {
            set("rule", rule.clone())?;
        }
        if let Some(methods) = &self.methods {
            set("methods", methods.clone())?;
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic coverage/width suites.
    Synthetic {
        /// Flat `key = value` configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output path (.json for JSON, anything else for CSV).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        global: GlobalOpts,
    },
    /// Hold-out evaluation on a ratings file in the `u.data` layout.
    Movielens {
        /// Path to the ratings file.
        #[arg(long)]
        data: PathBuf,
        /// Fraction of observed ratings held out for evaluation.
        #[arg(long, default_value_t = 0.2)]
        holdout_frac: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        global: GlobalOpts,
    },
    /// Fit the low-rank logistic missingness model and write the weight grid.
    EstimateWeights {
        /// Path to the ratings file.
        #[arg(long)]
        data: PathBuf,
        /// Rank bound of the logit matrix.
        #[arg(long, default_value_t = 3)]
        rank: usize,
        /// Infinity-norm bound of the logit matrix.
        #[arg(long, default_value_t = 4.0)]
        nu: f64,
        /// Maximum optimizer iterations.
        #[arg(long, default_value_t = 150)]
        iters: usize,
        /// Output grid path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Expected maximum conformalization weight versus calibration size.
    UpperBound {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        global: GlobalOpts,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<(ExperimentConfig, String)> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok((ExperimentConfig::from_config_str(&text)?, text))
        }
        None => Ok((ExperimentConfig::default(), String::new())),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synthetic { config, out, global } => {
            let (mut cfg, echo) = load_config(&config)?;
            cfg.mode = Mode::Synthetic;
            global.apply(&mut cfg)?;
            let rows = run_experiment(&cfg)?;
            write_rows(&out, &echo, &rows)?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Movielens { data, holdout_frac, config, out, global } => {
            let (mut cfg, echo) = load_config(&config)?;
            cfg.mode = Mode::MovieLens;
            cfg.data_path = Some(data);
            cfg.holdout_frac = holdout_frac;
            global.apply(&mut cfg)?;
            let rows = run_experiment(&cfg)?;
            write_rows(&out, &echo, &rows)?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::EstimateWeights { data, rank, nu, iters, out } => {
            let ratings = load_movielens(&data)?;
            let mask = nalgebra::DMatrix::from_fn(ratings.n_rows(), ratings.n_cols(), |r, c| {
                ratings.contains(scmc_core::MatrixIndex::new(r, c))
            });
            let model = scmc_core::missingness::estimate_weights(&mask, rank, nu, iters, 2.0)?;
            write_weight_grid(&out, &model.w_hat)?;
            eprintln!(
                "estimated {}x{} weight grid (log-likelihood {:.2}) -> {}",
                ratings.n_rows(),
                ratings.n_cols(),
                model.log_likelihood,
                out.display()
            );
        }
        Command::UpperBound { config, out, global } => {
            let (mut cfg, echo) = load_config(&config)?;
            cfg.mode = Mode::UpperBound;
            global.apply(&mut cfg)?;
            let rows = run_experiment(&cfg)?;
            write_rows(&out, &echo, &rows)?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
