//! Overhead of latent-mean sharing relative to FedAvg, in closed form and as
//! measured by the simulator's traffic counters.
//!
//! Communication is counted in scalars, so every ratio is dimensionless.
//! The baseline is `2kΘT`: `k` clients download and upload a `Θ`-scalar
//! model in each of `T` rounds.

use serde::{Deserialize, Serialize};

use crate::protocol::Traffic;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostInputs {
    /// Θ: encoder plus classifier scalars.
    pub theta: f64,
    pub latent_dim: usize,
    pub n: usize,
    pub alpha: usize,
    /// Clients per round.
    pub k: usize,
    /// Total clients.
    pub clients: usize,
    pub rounds: usize,
    pub prelim_rounds: usize,
    /// Raw sample size, used only for the FedMix row.
    pub sample_size: f64,
}

impl CostInputs {
    pub fn nu(&self) -> f64 {
        self.k as f64 / self.clients as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) {
            return Err(Error::InvalidArgument("model size must be positive".into()));
        }
        if self.clients == 0 || self.k == 0 || self.k > self.clients {
            return Err(Error::InvalidArgument(format!(
                "need 0 < k <= K, got k = {}, K = {}",
                self.k, self.clients
            )));
        }
        if self.rounds == 0 || self.prelim_rounds > self.rounds {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= T_p <= T with T > 0, got T = {}, T_p = {}",
                self.rounds, self.prelim_rounds
            )));
        }
        Ok(())
    }
}

/// `r1 = αnl/Θ`
pub fn comm_r1(alpha: usize, n: usize, latent_dim: usize, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::InvalidArgument("model size must be positive".into()));
    }
    Ok((alpha * n * latent_dim) as f64 / theta)
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("participation rate must lie in (0, 1], got {nu}")))
    }
}

/// `1 − (1 − ν)^(T − T_p)`, computed without cancellation for tiny `ν`.
fn ever_selected(nu: f64, rounds: usize, prelim_rounds: usize) -> f64 {
    let s = rounds.saturating_sub(prelim_rounds) as f64;
    if nu == 1.0 {
        return if s > 0.0 { 1.0 } else { 0.0 };
    }
    -(s * (-nu).ln_1p()).exp_m1()
}

/// `E = k/ν · (1 − (1 − ν)^(T − T_p))`: expected number of clients that
/// download the global decoder.
pub fn expected_downloads(nu: f64, k: usize, rounds: usize, prelim_rounds: usize) -> Result<f64> {
    check_nu(nu)?;
    Ok(k as f64 / nu * ever_selected(nu, rounds, prelim_rounds))
}

/// `r2 = (1 − (1 − ν)^(T − T_p)) / (2νT)`
pub fn comm_r2(nu: f64, rounds: usize, prelim_rounds: usize) -> Result<f64> {
    check_nu(nu)?;
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be positive".into()));
    }
    Ok(ever_selected(nu, rounds, prelim_rounds) / (2.0 * nu * rounds as f64))
}

/// A cell of the overhead table: a number or a symbolic ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ratio {
    Value(f64),
    Symbolic(String),
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ratio::Value(v) => write!(f, "{v:.4}"),
            Ratio::Symbolic(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub scheme: String,
    pub communication: Ratio,
    pub computation: Ratio,
    pub memory: Ratio,
}

/// Overheads relative to FedAvg for each scheme.
pub fn cost_table(inputs: &CostInputs) -> Result<Vec<CostRow>> {
    inputs.validate()?;
    let r1 = comm_r1(inputs.alpha, inputs.n, inputs.latent_dim, inputs.theta)?;
    let r2 = comm_r2(inputs.nu(), inputs.rounds, inputs.prelim_rounds)?;
    let phase = 1.0 + inputs.prelim_rounds as f64 / inputs.rounds as f64;
    let row = |s: &str, c: Ratio, p: Ratio, m: Ratio| CostRow {
        scheme: s.into(),
        communication: c,
        computation: p,
        memory: m,
    };
    use Ratio::{Symbolic as S, Value as V};
    Ok(vec![
        row("fedavg", V(1.0), V(1.0), V(1.0)),
        row("fedprox", V(1.0), S("1 + t_prox/t_avg".into()), V(2.0)),
        row("fedmix", V(1.0 + inputs.sample_size / inputs.theta), V(1.0), V(1.0)),
        row("moon", V(1.0), S("1 + t_moon/t_avg".into()), V(3.0)),
        row("feddpms", V(1.0 + r1 + r2), V(phase), V(phase)),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub inputs: CostInputs,
    pub r1: f64,
    pub expected_downloads: f64,
    pub r2: f64,
    pub upper_bound: f64,
    pub computation: f64,
    pub memory: f64,
    pub measured: Traffic,
    pub baseline: f64,
    /// Latent traffic over `2ΘK`, comparable with `r1` when every client
    /// both assists and benefits.
    pub measured_r1: f64,
    pub measured_downloads: f64,
    /// Decoder downloads over `2kT`, comparable with `r2`.
    pub measured_r2: f64,
    pub r1_rel_error: f64,
    pub downloads_rel_error: f64,
}

fn rel_error(measured: f64, analytic: f64) -> f64 {
    if analytic == 0.0 {
        if measured == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        (measured - analytic).abs() / analytic.abs()
    }
}

/// Compare a finished run's counters with the closed forms.
pub fn reconcile(measured: Option<&Traffic>, inputs: &CostInputs) -> Result<CostReport> {
    let measured = *measured.ok_or(Error::MissingCounter("traffic"))?;
    inputs.validate()?;
    let r1 = comm_r1(inputs.alpha, inputs.n, inputs.latent_dim, inputs.theta)?;
    let nu = inputs.nu();
    let e = expected_downloads(nu, inputs.k, inputs.rounds, inputs.prelim_rounds)?;
    let r2 = comm_r2(nu, inputs.rounds, inputs.prelim_rounds)?;
    let phase = 1.0 + inputs.prelim_rounds as f64 / inputs.rounds as f64;
    let baseline = 2.0 * inputs.k as f64 * inputs.theta * inputs.rounds as f64;
    let measured_r1 = measured.latent() as f64 / (2.0 * inputs.theta * inputs.clients as f64);
    let downloads = measured.decoder_download_events as f64;
    Ok(CostReport {
        inputs: *inputs,
        r1,
        expected_downloads: e,
        r2,
        upper_bound: r1 + r2,
        computation: phase,
        memory: phase,
        measured,
        baseline,
        measured_r1,
        measured_downloads: downloads,
        measured_r2: downloads / (2.0 * inputs.k as f64 * inputs.rounds as f64),
        r1_rel_error: rel_error(measured_r1, r1),
        downloads_rel_error: rel_error(downloads, e),
    })
}
