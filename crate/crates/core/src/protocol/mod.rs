//! The federated round state machine.
//!
//! A run is `T` global rounds. FedDPMS spends the first `T_p` rounds on
//! preliminary training of the full VAE (building a global decoder), then
//! switches to secondary rounds in which clients share noisy latent means of
//! their abundant classes once, and scarce-class clients augment their data
//! once from a matched assisting client's means. FedAvg and FedProx reuse the
//! same models, data, seeds and aggregation path.

mod dpms;
mod matching;
mod simulation;
mod state;
mod traffic;

pub use dpms::{class_mean, dpms, synthesize, ClassMean, DpmsOutput, DpmsParams, LatentMeanRecord};
pub use matching::{match_clients, Matching};
pub use simulation::{aggregate, evaluate, DpmsEvent, RoundRecord, RunOutcome, Simulation};
pub use state::{Audit, ClientState, ServerState};
pub use traffic::Traffic;

use serde::{Deserialize, Serialize};

use crate::nn::AdamConfig;
use crate::vae::VaeArch;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    FedDpms,
    FedAvg,
    FedProx,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::FedDpms => "feddpms",
            Scheme::FedAvg => "fedavg",
            Scheme::FedProx => "fedprox",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "feddpms" => Ok(Scheme::FedDpms),
            "fedavg" => Ok(Scheme::FedAvg),
            "fedprox" => Ok(Scheme::FedProx),
            other => Err(Error::Config(format!(
                "unknown scheme '{other}' (expected feddpms, fedavg or fedprox)"
            ))),
        }
    }
}

/// Everything the round loop needs, already validated and resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub scheme: Scheme,
    pub arch: VaeArch,
    /// Clients selected per round (`k`).
    pub per_round: usize,
    pub rounds: usize,
    pub prelim_rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub n: usize,
    pub dpms: DpmsParams,
    pub mu_prox: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Cap on optimizer steps per local session (protocol-only runs).
    pub max_local_steps: Option<usize>,
}

impl ProtocolConfig {
    pub fn validate(&self, clients: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if clients == 0 {
            return fail("need at least one client".into());
        }
        if self.per_round == 0 || self.per_round > clients {
            return fail(format!(
                "clients per round must lie in [1, {clients}], got {}",
                self.per_round
            ));
        }
        if self.rounds == 0 {
            return fail("rounds must be positive".into());
        }
        if self.scheme == Scheme::FedDpms {
            if self.prelim_rounds == 0 || self.prelim_rounds > self.rounds {
                return fail(format!(
                    "preliminary rounds must lie in [1, {}], got {}",
                    self.rounds, self.prelim_rounds
                ));
            }
            if self.n == 0 || 2 * self.n > self.arch.classes {
                return fail(format!(
                    "n must lie in [1, classes/2 = {}], got {}",
                    self.arch.classes / 2,
                    self.n
                ));
            }
            if !(self.dpms.noise_std >= 0.0) {
                return fail(format!("noise_std must be >= 0, got {}", self.dpms.noise_std));
            }
        }
        if self.batch_size == 0 {
            return fail("batch size must be positive".into());
        }
        if !(self.lambda >= 0.0) || !(self.mu_prox >= 0.0) {
            return fail("lambda and mu_prox must be >= 0".into());
        }
        if !(self.adam.lr > 0.0) {
            return fail(format!("learning rate must be > 0, got {}", self.adam.lr));
        }
        Ok(())
    }
}
