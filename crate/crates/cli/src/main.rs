mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tanbn_core::train::SearchSetting;

use crate::config::ConfigError;

/// Train and inspect TAN classifiers over discrete data.
#[derive(Parser)]
#[command(name = "tanbn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config end to end.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random search over the hybrid-loss hyperparameters.
    Search {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_setting, default_value = "II")]
        setting: SearchSetting,
        #[arg(long, default_value_t = 25)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error rate of a saved model on a CSV file.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Graphviz rendering of a saved model.
    ExportDot {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a synthetic dataset from a random model.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        features: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 3)]
        max_arity: usize,
        /// Naive Bayes instead of a random TAN.
        #[arg(long)]
        naive: bool,
        #[arg(long, default_value_t = 2.0)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also save the generating model.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Quantile-bin a real-valued CSV.
    Discretize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        bins: usize,
        /// Defaults to the last column.
        #[arg(long)]
        label_column: Option<usize>,
        #[arg(long)]
        edges_out: Option<PathBuf>,
    },
    /// Pairwise conditional mutual information and the Chow-Liu tree.
    Cmi {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        tree_dot: Option<PathBuf>,
    },
}

fn parse_setting(s: &str) -> Result<SearchSetting, String> {
    s.parse().map_err(|e: tanbn_core::Error| e.to_string())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => commands::cmd_train(&config, seed, out.as_deref()),
        Command::Search {
            config,
            setting,
            draws,
            jobs,
            seed,
            out,
        } => commands::cmd_search(&config, setting, draws, jobs, seed, out.as_deref()),
        Command::Evaluate { model, data, schema } => commands::cmd_evaluate(&model, &data, schema.as_deref()),
        Command::ExportDot { model, out } => commands::cmd_export_dot(&model, out.as_deref()),
        Command::Generate {
            out,
            features,
            samples,
            classes,
            max_arity,
            naive,
            spread,
            seed,
            model_out,
        } => commands::cmd_generate(commands::GenerateArgs {
            out: &out,
            features,
            samples,
            classes,
            max_arity,
            naive,
            spread,
            seed,
            model_out: model_out.as_deref(),
        }),
        Command::Discretize {
            input,
            out,
            bins,
            label_column,
            edges_out,
        } => commands::cmd_discretize(&input, &out, bins, label_column, edges_out.as_deref()),
        Command::Cmi {
            data,
            out,
            schema,
            tree_dot,
        } => commands::cmd_cmi(&data, &out, schema.as_deref(), tree_dot.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<ConfigError>() => {
            eprintln!("invalid configuration: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
