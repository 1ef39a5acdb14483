//! Command-line front end: `run`, `compare` and `synth`.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use tsvm_rfe::synth::SynthSpec;

use crate::commands::{cmd_compare, cmd_run, cmd_synth, Failure};

#[derive(Debug, Parser)]
#[command(name = "tsvm-rfe", version, about = "Gene selection with SVM-RFE, TSVM-RFE and GLAD")]
pub struct Cli {
    /// Worker threads for fold and fitness evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one selection method from a TOML config.
    Run {
        /// Config file; a previous run's manifest.toml also works.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Paired t-tests between finished runs that share fold assignments.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Write a synthetic dataset with known informative features.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        informative: usize,
        #[arg(long, default_value_t = 98)]
        noise: usize,
        #[arg(long, default_value_t = 8)]
        labelled: usize,
        #[arg(long, default_value_t = 100)]
        unlabelled: usize,
        #[arg(long, default_value_t = 3.0)]
        separation: f64,
        #[arg(long, default_value_t = 0.5)]
        positive_fraction: f64,
        /// Required unless the output directory variable is set.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Other(e.to_string()))?;
    }
    match cli.command {
        Command::Run { config, output_dir } => {
            let outcome = cmd_run(&config, output_dir.as_deref())?;
            let s = &outcome.summary;
            println!(
                "{} on {}: best {} genes, cv error {:.2}%",
                s.method,
                s.dataset,
                s.best_genes,
                100.0 * s.best_cv_error
            );
            println!("wrote {} files to {}", outcome.files.len(), outcome.output_dir.display());
        }
        Command::Compare { runs, output_dir } => {
            let outcome = cmd_compare(&runs, output_dir.as_deref())?;
            for c in &outcome.comparisons {
                println!(
                    "{} ({} genes) vs {} ({} genes): t = {:.4}, df = {}, {}",
                    c.method_a,
                    c.genes_a,
                    c.method_b,
                    c.genes_b,
                    c.t_statistic,
                    c.degrees_of_freedom,
                    if c.significant_at_95 { "significant at 95%" } else { "not significant" }
                );
            }
            print!("{}", outcome.table.to_text());
            println!("wrote results to {}", outcome.output_dir.display());
        }
        Command::Synth {
            seed,
            informative,
            noise,
            labelled,
            unlabelled,
            separation,
            positive_fraction,
            output_dir,
        } => {
            let env = std::env::var_os(config::OUTPUT_DIR_ENV).map(PathBuf::from);
            let dir = output_dir.or(env).ok_or_else(|| {
                Failure::Config(format!("synth needs --output-dir or {}", config::OUTPUT_DIR_ENV))
            })?;
            let spec = SynthSpec {
                n_informative: informative,
                n_noise: noise,
                n_labelled: labelled,
                n_unlabelled: unlabelled,
                separation,
                positive_fraction,
                seed,
            };
            let files = cmd_synth(spec, &dir)?;
            println!("wrote {} files to {}", files.len(), dir.display());
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{f}");
            f.exit_code()
        }
    }
}
