use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ssr::pipeline;
use ssr::{ExperimentConfig, Workers};

#[derive(Parser)]
#[command(name = "ssr", version, about = "Split-select-retrain model selection for tabular offline RL")]
struct Cli {
    /// Experiment config (TOML). Defaults describe the 6-step chain.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's pipeline seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 means one per core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured dataset.
    GenData,
    /// Score every AH pair, select, retrain and report.
    #[command(alias = "run")]
    RunSelection,
    /// Analytic failure probabilities and the Monte-Carlo replication.
    TheoremCheck {
        /// Overrides `theorem.n_trials`.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// True value of a stored policy in the configured environment.
    EvalPolicy {
        #[arg(long)]
        policy: PathBuf,
    },
    /// Kendall tau between a score table and true values.
    RankReport {
        #[arg(long)]
        scores: PathBuf,
        /// CSV with columns `ah_label,true_value`.
        #[arg(long)]
        true_values: PathBuf,
    },
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    Ok(config)
}

fn out_dir(config: &ExperimentConfig) -> Result<PathBuf> {
    match &config.out {
        Some(p) => Ok(p.clone()),
        None => bail!("no output directory: pass --out or set `out` in the config"),
    }
}

fn real_main(cli: Cli) -> Result<ExitCode> {
    let mut config = load(&cli)?;
    let workers = Workers::new(cli.workers).context("starting worker pool")?;
    match cli.command {
        Command::GenData => {
            let dir = out_dir(&config)?;
            let ds = pipeline::gen_data(&config, &dir, cli.force)?;
            println!("wrote {} trajectories ({} steps) to {}", ds.len(), ds.n_steps(), dir.display());
        }
        Command::RunSelection => {
            let dir = out_dir(&config)?;
            let outcome = pipeline::run(&config, &dir, cli.force, &workers)?;
            let s = &outcome.summary;
            println!("strategy   {}", s.strategy);
            println!("estimator  {}", s.estimator);
            println!("chosen     {} (aggregate {:.6})", s.chosen_label, s.aggregate);
            match (s.true_value, s.true_value_se) {
                (Some(v), Some(se)) => println!("true value {v:.6} (se {se:.6})"),
                (Some(v), None) => println!("true value {v:.6}"),
                _ => {}
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
        }
        Command::TheoremCheck { trials } => {
            if let Some(n) = trials {
                config.theorem.n_trials = n;
            }
            let report = pipeline::theorem_check(&config, config.out.as_deref(), cli.force, &workers)?;
            for line in report.lines(&config.theorem.k_values) {
                println!("{line}");
            }
            if !report.analytic_ok() {
                eprintln!("analytic check failed");
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::EvalPolicy { policy } => {
            let (v, se) = pipeline::eval_policy(&config, &policy)?;
            match se {
                Some(se) => println!("{v:.10} (se {se:.6})"),
                None => println!("{v:.10}"),
            }
        }
        Command::RankReport { scores, true_values } => {
            let (tau, n) = pipeline::rank_report(&scores, &true_values)?;
            println!("kendall_tau {tau:.6} over {n} AH pairs");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
