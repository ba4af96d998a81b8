use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use feddpms::config::ExperimentConfig;
use feddpms::costs::{cost_table, CostInputs};
use feddpms::experiment::{run_experiment, run_stem, sweep_beta};
use feddpms::privacy::{budget_report, calibrate_sigma, BudgetQuery};
use feddpms::protocol::Scheme;
use feddpms::{Error, Result};

#[derive(Parser)]
#[command(name = "feddpms", version, about = "Federated learning with private latent-mean sharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme for the configured number of seeds.
    Run(RunArgs),
    /// Run schemes over a list of Dirichlet concentrations.
    SweepBeta {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated concentrations.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5")]
        betas: Vec<f64>,
        /// Comma-separated schemes.
        #[arg(long, value_delimiter = ',', default_value = "fedavg,fedprox,feddpms")]
        schemes: Vec<Scheme>,
    },
    /// Print the closed-form overhead table for a configuration.
    CostReport {
        #[command(flatten)]
        run: RunArgs,
        /// Model size Θ; defaults to the configured architecture.
        #[arg(long)]
        theta: Option<f64>,
        /// Raw sample size for the FedMix row; defaults to `dim`.
        #[arg(long)]
        sample_size: Option<f64>,
    },
    /// Privacy implied by the configured noise for given class sizes.
    DpBudget {
        #[command(flatten)]
        run: RunArgs,
        /// Contributing samples per shared class (repeatable).
        #[arg(long = "m", required = true, num_args = 1..)]
        m: Vec<usize>,
    },
}

/// Flags mirror the config keys.
#[derive(Args, Serialize, Default)]
struct RunArgs {
    /// TOML config file.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    classes: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    per_class: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    test_per_class: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    spread: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    idx_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    idx_subset: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    clients: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    per_round: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    scheme: Option<Scheme>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rounds: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    prelim_rounds: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    local_epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    negotiate_n: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_std: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_attempts: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mu_prox: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    latent_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    encoder_hidden: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    classifier_hidden: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr_decay_period: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr_gamma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_local_steps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    parallel_trials: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    min_m: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let overrides = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = ExperimentConfig::load(self.config.as_deref(), overrides)?;
        cfg.apply_env();
        Ok(cfg)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let m = run_experiment(&cfg)?;
            for t in &m.trials {
                println!(
                    "seed {}: final accuracy {:.4} (best {:.4}), partition {}",
                    t.seed,
                    t.final_accuracy(),
                    t.outcome.best_accuracy(),
                    &t.partition_hash[..12]
                );
            }
            println!(
                "{}: mean final accuracy {:.4} over {} trial(s); outputs in {}",
                run_stem(&cfg),
                m.mean_final_accuracy,
                m.trials.len(),
                cfg.output_dir.display()
            );
        }
        Command::SweepBeta { run, betas, schemes } => {
            let cfg = run.load()?;
            let points = sweep_beta(&cfg, &betas, &schemes, true)?;
            println!("beta\tscheme\tmean_final_accuracy");
            for p in &points {
                println!("{}\t{}\t{:.4}", p.beta, p.scheme, p.mean_final_accuracy);
            }
        }
        Command::CostReport {
            run,
            theta,
            sample_size,
        } => {
            let cfg = run.load()?;
            let arch = cfg.arch(cfg.dim, cfg.classes)?;
            let inputs = CostInputs {
                theta: theta.unwrap_or(arch.model_scalars() as f64),
                latent_dim: cfg.latent_dim,
                n: cfg.n,
                alpha: cfg.alpha,
                k: cfg.per_round,
                clients: cfg.clients,
                rounds: cfg.rounds,
                prelim_rounds: cfg.resolved_prelim_rounds(),
                sample_size: sample_size.unwrap_or(cfg.dim as f64),
            };
            #[derive(Serialize)]
            struct Report {
                inputs: CostInputs,
                rows: Vec<feddpms::costs::CostRow>,
            }
            print_json(&Report {
                inputs,
                rows: cost_table(&inputs)?,
            })?;
        }
        Command::DpBudget { run, m } => {
            let cfg = run.load()?;
            let query = BudgetQuery {
                noise_std: cfg.noise_std,
                epsilon: cfg.epsilon,
                target_delta: cfg.delta,
                min_m: cfg.min_m,
            };
            let classes: Vec<(usize, usize)> = m.iter().copied().enumerate().collect();
            let records = budget_report(&query, &classes)?;
            let cal = calibrate_sigma(cfg.epsilon, cfg.delta)?;
            #[derive(Serialize)]
            struct Budget {
                required_sigma_mech: f64,
                records: Vec<feddpms::privacy::BudgetRecord>,
            }
            print_json(&Budget {
                required_sigma_mech: cal.sigma,
                records,
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
