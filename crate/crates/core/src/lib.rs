//! Deterministic single-process simulator for federated learning with
//! differentially private latent-mean sharing (FedDPMS), its FedAvg and
//! FedProx baselines, and closed-form protocol cost accounting.
//!
//! Module map:
//!
//! * [`nn`] dense layers, losses, exact gradients and Adam
//! * [`vae`] encoder / decoder / classifier model and its two training losses
//! * [`data`] datasets, Dirichlet partitioning, class profiles, IDX ingestion
//! * [`privacy`] Gaussian mechanism calibration and latent-mean perturbation
//! * [`protocol`] the round state machine, matching, DPMS and baselines
//! * [`costs`] communication / computation / memory overhead formulas
//! * [`config`] and [`experiment`] the experiment driver used by the CLI

pub mod config;
pub mod costs;
pub mod data;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod privacy;
pub mod protocol;
pub mod rng;
pub mod vae;

pub use error::{Error, Result};
