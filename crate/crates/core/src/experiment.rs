//! Experiment driver: data preparation, partitioning, multi-seed runs,
//! β sweeps and output files.
//!
//! Per-round CSV columns:
//!
//! | column | meaning |
//! |---|---|
//! | `round` | 0-based global round |
//! | `scheme` | `feddpms`, `fedavg` or `fedprox` |
//! | `test_accuracy` | accuracy of the aggregated model on the test split |
//! | `train_loss_per_client` | `id:loss` pairs joined by `;` |
//! | `shared_clients` | size of the shared set after the round |
//! | `benefited_clients` | size of the benefited set after the round |
//! | `bytes_uploaded` | 8 × scalars sent to the server this round |
//! | `bytes_downloaded` | 8 × scalars sent to clients this round |

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetKind, ExperimentConfig};
use crate::costs::{reconcile, CostInputs, CostReport};
use crate::data::{
    dirichlet_partition, load_idx, make_synthetic_split, negotiate_n, Dataset, Partition,
    PartitionSpec, SyntheticSpec,
};
use crate::privacy::{budget_report, BudgetQuery, BudgetRecord};
use crate::protocol::{RoundRecord, RunOutcome, Scheme, Simulation};
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "round",
    "scheme",
    "test_accuracy",
    "train_loss_per_client",
    "shared_clients",
    "benefited_clients",
    "bytes_uploaded",
    "bytes_downloaded",
];

const BYTES_PER_SCALAR: u64 = 8;

/// Train and test splits for a config. Synthetic data depends on `seed`.
pub fn prepare_data(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    match cfg.dataset {
        DatasetKind::Synthetic => make_synthetic_split(
            &SyntheticSpec {
                classes: cfg.classes,
                per_class: cfg.per_class,
                dim: cfg.dim,
                spread: cfg.spread,
                seed,
            },
            cfg.test_per_class,
        ),
        DatasetKind::Idx => {
            let dir = cfg
                .idx_dir
                .as_deref()
                .ok_or_else(|| Error::Config("idx_dir is not set".into()))?;
            let train = load_idx(
                dir.join("train-images-idx3-ubyte"),
                dir.join("train-labels-idx1-ubyte"),
            )?;
            let test = load_idx(
                dir.join("t10k-images-idx3-ubyte"),
                dir.join("t10k-labels-idx1-ubyte"),
            )?;
            Ok((
                take_fraction(&train, cfg.idx_subset, seed, 0),
                take_fraction(&test, cfg.idx_subset, seed, 1),
            ))
        }
    }
}

fn take_fraction(d: &Dataset, fraction: f64, seed: u64, key: u64) -> Dataset {
    if fraction >= 1.0 {
        return d.clone();
    }
    let keep = ((d.len() as f64 * fraction).round() as usize).max(1);
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.shuffle(&mut stream(seed, Purpose::DataSource, &[100 + key]));
    idx.truncate(keep);
    idx.sort_unstable();
    d.subset(&idx)
}

pub fn partition(cfg: &ExperimentConfig, train: &Dataset, seed: u64) -> Result<Partition> {
    dirichlet_partition(
        train,
        &PartitionSpec {
            clients: cfg.clients,
            beta: cfg.beta,
            seed,
        },
    )
}

/// Everything produced by one seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub partition_hash: String,
    pub n: usize,
    pub outcome: RunOutcome,
    pub cost: Option<CostReport>,
    pub privacy: Vec<BudgetRecord>,
}

impl TrialResult {
    pub fn final_accuracy(&self) -> f64 {
        self.outcome.final_accuracy()
    }
}

pub fn run_trial(cfg: &ExperimentConfig, seed: u64) -> Result<TrialResult> {
    let (train, test) = prepare_data(cfg, seed)?;
    let part = partition(cfg, &train, seed)?;
    let counts: Vec<Vec<usize>> = part.clients.iter().map(|c| c.class_counts()).collect();
    let n = if cfg.negotiate_n { negotiate_n(&counts) } else { cfg.n };
    let arch = cfg.arch(train.dim(), train.classes())?;
    let pcfg = cfg.protocol(arch, seed, n);
    let hash = part.hash();
    let mut sim = Simulation::new(pcfg, part.clients, test)?;
    let mut outcome = sim.run()?;

    let (cost, privacy) = if cfg.scheme == Scheme::FedDpms {
        let inputs = CostInputs {
            theta: arch.model_scalars() as f64,
            latent_dim: arch.latent_dim,
            n,
            alpha: cfg.alpha,
            k: cfg.per_round,
            clients: cfg.clients,
            rounds: cfg.rounds,
            prelim_rounds: cfg.resolved_prelim_rounds(),
            sample_size: arch.input_dim as f64,
        };
        let cost = reconcile(Some(&outcome.traffic), &inputs)?;
        let query = BudgetQuery {
            noise_std: cfg.noise_std,
            epsilon: cfg.epsilon,
            target_delta: cfg.delta,
            min_m: cfg.min_m,
        };
        let mut records = Vec::new();
        for ev in &outcome.dpms_events {
            for &(class, m) in &ev.classes {
                match budget_report(&query, &[(class, m)]) {
                    Ok(mut r) => records.append(&mut r),
                    Err(e) => outcome
                        .warnings
                        .push(format!("client {}: no privacy claim: {e}", ev.client)),
                }
            }
        }
        (Some(cost), records)
    } else {
        (None, Vec::new())
    };
    Ok(TrialResult {
        seed,
        partition_hash: hash,
        n,
        outcome,
        cost,
        privacy,
    })
}

/// Result of a (possibly multi-seed) experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scheme: Scheme,
    pub beta: f64,
    pub trials: Vec<TrialResult>,
    pub mean_final_accuracy: f64,
    pub mean_best_accuracy: f64,
}

impl RunMetrics {
    fn from_trials(cfg: &ExperimentConfig, trials: Vec<TrialResult>) -> Self {
        let n = trials.len() as f64;
        Self {
            scheme: cfg.scheme,
            beta: cfg.beta,
            mean_final_accuracy: trials.iter().map(|t| t.final_accuracy()).sum::<f64>() / n,
            mean_best_accuracy: trials.iter().map(|t| t.outcome.best_accuracy()).sum::<f64>() / n,
            trials,
        }
    }
}

/// Run `cfg.trials` seeds without writing anything.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<RunMetrics> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.trials as u64).map(|i| cfg.seed + i).collect();
    let trials = if cfg.parallel_trials && seeds.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = seeds
                .iter()
                .map(|&seed| s.spawn(move || run_trial(cfg, seed)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("trial thread panicked"))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        seeds.iter().map(|&s| run_trial(cfg, s)).collect::<Result<Vec<_>>>()?
    };
    Ok(RunMetrics::from_trials(cfg, trials))
}

pub fn run_stem(cfg: &ExperimentConfig) -> String {
    format!("{}_beta{}", cfg.scheme, cfg.beta)
}

/// Run all trials and write one CSV per seed plus a JSON summary into
/// `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunMetrics> {
    let metrics = run_trials(cfg)?;
    write_outputs(cfg, &metrics)?;
    Ok(metrics)
}

pub fn write_outputs(cfg: &ExperimentConfig, metrics: &RunMetrics) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = run_stem(cfg);
    let mut written = Vec::new();
    for t in &metrics.trials {
        let path = dir.join(format!("{stem}_seed{}.csv", t.seed));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_rounds_csv(file, &t.outcome.rounds)?;
        written.push(path);
    }
    let path = dir.join(format!("{stem}_summary.json"));
    let summary = summary_json(cfg, metrics)?;
    std::fs::write(&path, summary).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

pub fn write_rounds_csv<W: Write>(out: W, rounds: &[RoundRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rounds {
        let losses = r
            .client_losses
            .iter()
            .map(|(id, l)| format!("{id}:{l:.6}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.round.to_string(),
            r.scheme.to_string(),
            format!("{:.6}", r.test_accuracy),
            losses,
            r.shared_clients.to_string(),
            r.benefited_clients.to_string(),
            (r.uploaded * BYTES_PER_SCALAR).to_string(),
            (r.downloaded * BYTES_PER_SCALAR).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Serialize)]
struct TrialSummary<'a> {
    seed: u64,
    partition_hash: &'a str,
    n: usize,
    final_accuracy: f64,
    best_accuracy: f64,
    dpms_events: &'a [crate::protocol::DpmsEvent],
    cost: &'a Option<CostReport>,
    privacy: &'a [BudgetRecord],
    audit: &'a crate::protocol::Audit,
    warnings: &'a [String],
    decoder_hash: &'a Option<String>,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    mean_final_accuracy: f64,
    mean_best_accuracy: f64,
    trials: Vec<TrialSummary<'a>>,
}

pub fn summary_json(cfg: &ExperimentConfig, m: &RunMetrics) -> Result<String> {
    let s = Summary {
        config: cfg,
        mean_final_accuracy: m.mean_final_accuracy,
        mean_best_accuracy: m.mean_best_accuracy,
        trials: m
            .trials
            .iter()
            .map(|t| TrialSummary {
                seed: t.seed,
                partition_hash: &t.partition_hash,
                n: t.n,
                final_accuracy: t.final_accuracy(),
                best_accuracy: t.outcome.best_accuracy(),
                dpms_events: &t.outcome.dpms_events,
                cost: &t.cost,
                privacy: &t.privacy,
                audit: &t.outcome.audit,
                warnings: &t.outcome.warnings,
                decoder_hash: &t.outcome.decoder_hash,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&s)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub beta: f64,
    pub scheme: Scheme,
    pub mean_final_accuracy: f64,
    pub final_accuracies: Vec<f64>,
    pub partition_hashes: Vec<String>,
}

/// Every scheme at every β, over `cfg.trials` seeds each. Writes per-run
/// outputs plus `sweep.csv` when `write` is set.
pub fn sweep_beta(
    cfg: &ExperimentConfig,
    betas: &[f64],
    schemes: &[Scheme],
    write: bool,
) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::new();
    for &beta in betas {
        for &scheme in schemes {
            let c = ExperimentConfig {
                beta,
                scheme,
                ..cfg.clone()
            };
            let m = if write { run_experiment(&c)? } else { run_trials(&c)? };
            points.push(SweepPoint {
                beta,
                scheme,
                mean_final_accuracy: m.mean_final_accuracy,
                final_accuracies: m.trials.iter().map(|t| t.final_accuracy()).collect(),
                partition_hashes: m.trials.iter().map(|t| t.partition_hash.clone()).collect(),
            });
        }
    }
    if write {
        write_sweep_csv(&cfg.output_dir.join("sweep.csv"), &points)?;
    }
    Ok(points)
}

pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["beta", "scheme", "mean_final_accuracy", "final_accuracies"])?;
    for p in points {
        let accs = p
            .final_accuracies
            .iter()
            .map(|a| format!("{a:.6}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            p.beta.to_string(),
            p.scheme.to_string(),
            format!("{:.6}", p.mean_final_accuracy),
            accs,
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
