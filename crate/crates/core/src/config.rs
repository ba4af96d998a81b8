//! Experiment configuration: a flat TOML table whose keys match the CLI
//! flags one to one. Missing keys take the defaults below; unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::nn::AdamConfig;
use crate::protocol::{DpmsParams, ProtocolConfig, Scheme};
use crate::vae::VaeArch;
use crate::{Error, Result};

/// Overrides `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "FEDDPMS_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Synthetic,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    pub spread: f64,
    /// Directory holding the four standard IDX files.
    pub idx_dir: Option<PathBuf>,
    /// Fraction of the IDX train and test sets to keep.
    pub idx_subset: f64,

    pub clients: usize,
    pub per_round: usize,
    pub beta: f64,
    pub scheme: Scheme,
    pub rounds: usize,
    /// Defaults to `0.4 · rounds`.
    pub prelim_rounds: Option<usize>,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub n: usize,
    /// Let clients agree on `n` from their class counts instead.
    pub negotiate_n: bool,
    pub alpha: usize,
    pub noise_std: f64,
    pub max_attempts: usize,
    pub mu_prox: f64,
    pub latent_dim: usize,
    pub encoder_hidden: usize,
    pub classifier_hidden: usize,
    pub lr: f64,
    pub lr_decay_period: u64,
    pub lr_gamma: f64,
    pub max_local_steps: Option<usize>,

    pub seed: u64,
    /// Seeds `seed, seed + 1, …`.
    pub trials: usize,
    pub parallel_trials: bool,
    pub output_dir: PathBuf,

    /// Privacy accounting of released means.
    pub epsilon: f64,
    pub delta: f64,
    pub min_m: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Synthetic,
            classes: 10,
            per_class: 1000,
            test_per_class: 200,
            dim: 16,
            spread: 1.5,
            idx_dir: None,
            idx_subset: 1.0,
            clients: 10,
            per_round: 10,
            beta: 0.5,
            scheme: Scheme::FedDpms,
            rounds: 50,
            prelim_rounds: None,
            local_epochs: 5,
            batch_size: 64,
            lambda: 0.05,
            n: 3,
            negotiate_n: false,
            alpha: 50,
            noise_std: 0.06,
            max_attempts: 50,
            mu_prox: 0.001,
            latent_dim: 32,
            encoder_hidden: 256,
            classifier_hidden: 128,
            lr: 0.001,
            lr_decay_period: 10,
            lr_gamma: 0.5,
            max_local_steps: None,
            seed: 0,
            trials: 1,
            parallel_trials: false,
            output_dir: PathBuf::from("out"),
            epsilon: 0.5,
            delta: 0.01,
            min_m: 10,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_table(toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file (if any) and apply `overrides` on top.
    pub fn load(path: Option<&Path>, overrides: toml::Table) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        table.extend(overrides);
        Self::from_table(table)
    }

    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            self.output_dir = PathBuf::from(dir);
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolved_prelim_rounds(&self) -> usize {
        self.prelim_rounds
            .unwrap_or_else(|| (0.4 * self.rounds as f64).round() as usize)
    }

    pub fn arch(&self, input_dim: usize, classes: usize) -> Result<VaeArch> {
        VaeArch {
            input_dim,
            encoder_hidden: self.encoder_hidden,
            latent_dim: self.latent_dim,
            classifier_hidden: self.classifier_hidden,
            classes,
        }
        .validated()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return fail(format!("beta must be a positive number, got {}", self.beta));
        }
        if self.clients == 0 {
            return fail("clients must be at least 1".into());
        }
        if self.per_round == 0 || self.per_round > self.clients {
            return fail(format!(
                "per_round must lie in [1, clients = {}], got {}",
                self.clients, self.per_round
            ));
        }
        if self.rounds == 0 {
            return fail("rounds must be at least 1".into());
        }
        if self.scheme == Scheme::FedDpms {
            let tp = self.resolved_prelim_rounds();
            if tp >= self.rounds {
                return fail(format!(
                    "prelim_rounds ({tp}) must be smaller than rounds ({}) for feddpms",
                    self.rounds
                ));
            }
            if tp == 0 {
                return fail("prelim_rounds must be at least 1 for feddpms".into());
            }
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return fail("local_epochs and batch_size must be at least 1".into());
        }
        if !(self.lambda >= 0.0) || !(self.mu_prox >= 0.0) {
            return fail("lambda and mu_prox must be nonnegative".into());
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return fail(format!("noise_std must be nonnegative, got {}", self.noise_std));
        }
        if self.alpha == 0 || self.max_attempts == 0 {
            return fail("alpha and max_attempts must be at least 1".into());
        }
        if !(self.lr > 0.0) || !(self.lr_gamma > 0.0) {
            return fail("lr and lr_gamma must be positive".into());
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if !(self.epsilon > 0.0) || !(self.delta > 0.0 && self.delta < 1.0) {
            return fail("need epsilon > 0 and 0 < delta < 1".into());
        }
        match self.dataset {
            DatasetKind::Synthetic => {
                if self.classes < 2 || self.per_class == 0 || self.test_per_class == 0 || self.dim == 0 {
                    return fail("synthetic data needs classes >= 2 and positive sizes".into());
                }
                if !(self.spread >= 0.0) {
                    return fail(format!("spread must be nonnegative, got {}", self.spread));
                }
                if !self.negotiate_n && (self.n == 0 || 2 * self.n > self.classes) {
                    return fail(format!("n must lie in [1, classes / 2], got {}", self.n));
                }
            }
            DatasetKind::Idx => {
                if self.idx_dir.is_none() {
                    return fail("dataset = \"idx\" requires idx_dir".into());
                }
                if !(self.idx_subset > 0.0 && self.idx_subset <= 1.0) {
                    return fail(format!("idx_subset must lie in (0, 1], got {}", self.idx_subset));
                }
            }
        }
        Ok(())
    }

    /// Round-loop settings for one seed. `n` is resolved by the caller.
    pub fn protocol(&self, arch: VaeArch, seed: u64, n: usize) -> ProtocolConfig {
        ProtocolConfig {
            scheme: self.scheme,
            arch,
            per_round: self.per_round,
            rounds: self.rounds,
            prelim_rounds: self.resolved_prelim_rounds(),
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            lambda: self.lambda,
            n,
            dpms: DpmsParams {
                alpha: self.alpha,
                noise_std: self.noise_std,
                max_attempts: self.max_attempts,
            },
            mu_prox: self.mu_prox,
            adam: AdamConfig {
                lr: self.lr,
                decay_period: self.lr_decay_period,
                gamma: self.lr_gamma,
                ..AdamConfig::default()
            },
            seed,
            max_local_steps: self.max_local_steps,
        }
    }
}
