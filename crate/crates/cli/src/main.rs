//! `hgm-ehr`: synthesize cohorts, train, and evaluate the mortality arms.

mod config;
mod output;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use log::info;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "hgm-ehr", version, about = "Graph-embedding mortality prediction experiments")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed, overriding `experiment.seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for fold-level parallelism.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic cohort as input CSVs under `<out>/data`.
    Synth,
    /// Train every (arm, window, fold) and write checkpoints.
    Train,
    /// Score held-out folds from saved checkpoints and write reports.
    Eval,
    /// Train, checkpoint and evaluate in one pass.
    Run,
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.experiment.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output.dir = o;
    }
    if cli.jobs == 0 {
        anyhow::bail!("--jobs must be at least 1");
    }
    cfg.validate()?;
    let out = cfg.output.dir.clone();

    let data = pipeline::load_data(&cfg)?;
    match cli.command {
        Command::Synth => {
            let dir = out.join("data");
            pipeline::write_dataset(&data, &dir)?;
            println!("wrote {} patients to {}", data.records.len(), dir.display());
        }
        Command::Train => {
            let models = pipeline::train(&cfg, &data, cli.jobs)?;
            pipeline::save_checkpoints(&out, &cfg, data.records.len(), &models)?;
            println!("wrote {} fold checkpoints to {}", models.len(), out.join("checkpoints").display());
        }
        Command::Eval => {
            let models = pipeline::load_checkpoints(&out, &cfg, data.records.len())?;
            finish(&cfg, &data, &models, cli.jobs)?;
        }
        Command::Run => {
            let models = pipeline::train(&cfg, &data, cli.jobs)?;
            pipeline::save_checkpoints(&out, &cfg, data.records.len(), &models)?;
            finish(&cfg, &data, &models, cli.jobs)?;
        }
    }
    Ok(())
}

fn finish(cfg: &RunConfig, data: &pipeline::Dataset, models: &[hgm_ehr::eval::FoldModels], jobs: usize) -> Result<()> {
    let outcomes = pipeline::evaluate(cfg, data, models, jobs)?;
    pipeline::write_reports(&cfg.output.dir, &outcomes)?;
    for o in &outcomes {
        let r = &o.report;
        println!(
            "{:<8} {:>3}h  AUROC {:.3} ± {:.3}  AUPRC {:.3} ± {:.3}",
            r.arm.name(),
            r.window,
            r.mean_auroc,
            r.std_auroc,
            r.mean_auprc,
            r.std_auprc
        );
    }
    info!("reports written to {}", cfg.output.dir.join("reports").display());
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HGM_EHR_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("hgm-ehr: {}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hgm-ehr: error: {}", one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
