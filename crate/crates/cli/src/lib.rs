//! Pipeline commands behind the `hedonic` binary.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use hedonic::Result;

use commands::{ParseOptions, TrainOptions};
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "hedonic", version, about = "Housing price pipeline: parse, clean, model, explain, report")]
pub struct Cli {
    /// Seed for splits, folds, sampling and forests.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract listing records from saved HTML pages.
    Parse {
        #[arg(long)]
        html_dir: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Listings CSV to write (default: <out>/listings.csv).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Report pages that are not listings instead of failing.
        #[arg(long)]
        skip_invalid: bool,
    },
    /// Validate, bucket, filter and encode a listings CSV.
    Clean {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Per-year averages table and correlation matrix.
    Stats {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fit one model family per year bucket.
    Train {
        #[arg(long)]
        model: String,
        /// Hyperparameters as a JSON object.
        #[arg(long)]
        params: Option<String>,
        /// Grid-search the tuning grid before fitting.
        #[arg(long)]
        tune: bool,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        grids: Option<PathBuf>,
    },
    /// Tune, fit and score every model family per year bucket.
    Evaluate {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        grids: Option<PathBuf>,
        /// Comma-separated model families.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
    },
    /// Exact Shapley values for a saved model on each test split.
    Explain {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        /// Maximum rows explained per bucket.
        #[arg(long)]
        budget: Option<usize>,
        /// Background rows per bucket.
        #[arg(long)]
        background: Option<usize>,
    },
    /// Render the heatmap, Shapley plots and text summary.
    Report {
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long)]
        correlation: Option<PathBuf>,
        #[arg(long)]
        shap: Option<PathBuf>,
    },
    /// Write seeded surrogate listings to the listings CSV.
    Synthetic {
        #[arg(long, default_value_t = hedonic::synthetic::DEFAULT_LISTINGS)]
        rows: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Builds the run configuration and executes the subcommand. Returns every
/// file written.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out_dir = o;
    }
    match cli.command {
        Command::Parse { html_dir, rules, output, skip_invalid } => commands::cmd_parse(
            &cfg,
            &ParseOptions {
                html_dir,
                rules,
                output,
                skip_invalid,
            },
        ),
        Command::Clean { input } => {
            cfg.inputs.listings = input.or(cfg.inputs.listings);
            commands::cmd_clean(&cfg)
        }
        Command::Stats { input } => {
            cfg.inputs.cleaned = input.or(cfg.inputs.cleaned);
            commands::cmd_stats(&cfg)
        }
        Command::Train { model, params, tune, input, grids } => {
            cfg.inputs.cleaned = input.or(cfg.inputs.cleaned);
            cfg.grids = grids.or(cfg.grids);
            commands::cmd_train(&cfg, &TrainOptions { model, params, tune })
        }
        Command::Evaluate { input, grids, models } => {
            cfg.inputs.cleaned = input.or(cfg.inputs.cleaned);
            cfg.grids = grids.or(cfg.grids);
            if let Some(m) = models {
                cfg.families = m.iter().map(|f| f.parse()).collect::<Result<_>>()?;
            }
            commands::cmd_evaluate(&cfg)
        }
        Command::Explain { input, model, budget, background } => {
            cfg.inputs.cleaned = input.or(cfg.inputs.cleaned);
            if let Some(m) = model {
                cfg.explain_model = m.parse()?;
            }
            if let Some(b) = budget {
                cfg.explain_budget = b;
            }
            if let Some(b) = background {
                cfg.background_size = b;
            }
            cfg.check()?;
            commands::cmd_explain(&cfg)
        }
        Command::Report { results, correlation, shap } => {
            cfg.inputs.results = results.or(cfg.inputs.results);
            cfg.inputs.correlation = correlation.or(cfg.inputs.correlation);
            cfg.inputs.shap = shap.or(cfg.inputs.shap);
            commands::cmd_report(&cfg)
        }
        Command::Synthetic { rows, output } => {
            cfg.inputs.listings = output.or(cfg.inputs.listings);
            commands::cmd_synthetic(&cfg, rows)
        }
    }
}
