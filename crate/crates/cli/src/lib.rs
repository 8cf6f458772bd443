//! Command-line front end for the treeshift engine.
//!
//! Each subcommand reads one [`config::RunConfig`], applies flag overrides and
//! writes CSV files under the output directory. Every file carries the SHA-256
//! of the effective configuration so results can be traced back to inputs.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "treeshift", version, about = "Tree-coordinated collective learning and structural adaptation")]
pub struct Cli {
    /// TOML configuration file; flags below override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores). Output does not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Directory of `agent_<id>.plans` files.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Children per node; a comma-separated list sweeps `rank-metrics`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub children: Option<Vec<usize>>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the configured population as plan files into the output directory.
    Generate,
    /// One learning run: trace.csv, selections.csv, topology.csv.
    Run,
    /// Random-bijection benchmark: sample.csv, density.csv.
    Benchmark,
    /// Metric placements against a benchmark: scores.csv and a heatmap.
    RankMetrics,
    /// Self-adaptation strategies against percentile baselines.
    Strategy,
    /// Print the effective configuration and its hash.
    Config,
}

impl Cli {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            workers: self.workers,
            out_dir: self.out_dir.clone(),
            dataset: self.dataset.clone(),
            children: self.children.clone(),
        })?;
        Ok(cfg)
    }
}

/// Execute a parsed command line, returning a short report for stdout.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let cfg = cli.resolve()?;
    if let Command::Config = cli.command {
        return Ok(format!("# config_hash={}\n{}", cfg.hash(), cfg.to_toml()));
    }
    let files = commands::with_workers(cfg.workers, || -> Result<Vec<PathBuf>, CliError> {
        Ok(match cli.command {
            Command::Generate => commands::cmd_generate(&cfg)?,
            Command::Run => {
                let out = commands::cmd_run(&cfg)?;
                eprintln!(
                    "final cost {} after {} iterations ({})",
                    out.trace.final_cost(),
                    out.trace.len(),
                    if out.trace.converged_at.is_some() { "converged" } else { "iteration limit" }
                );
                out.files
            }
            Command::Benchmark => commands::cmd_benchmark(&cfg)?.files,
            Command::RankMetrics => commands::cmd_rank_metrics(&cfg)?,
            Command::Strategy => commands::cmd_strategy(&cfg)?.files,
            Command::Config => unreachable!(),
        })
    })??;
    Ok(files.iter().map(|p| format!("{}\n", p.display())).collect())
}
