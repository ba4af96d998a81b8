//! Gaussian mechanism for releasing bounded latent means.
//!
//! A mean over `m` values in `[0, 1]` has sensitivity `1/m`. The mechanism
//! with multiplier `σ` adds `N(0, (σ/m)²)` and is `(ε, δ)`-private whenever
//! `δ ≥ (4/5)·exp(−(σε)²/2)` (natural logarithm throughout).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nn::Tensor;
use crate::{Error, Result};

const DELTA_CEILING: f64 = 0.8;

pub fn sensitivity(m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("sensitivity needs m >= 1".into()));
    }
    Ok(1.0 / m as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub sigma: f64,
    /// `δ ≥ 4/5`: the bound holds for any σ and σ = 0 is returned.
    pub degenerate: bool,
}

/// Smallest σ with `δ ≥ (4/5)·exp(−(σε)²/2)`, i.e. `√(2 ln(4/(5δ))) / ε`.
pub fn calibrate_sigma(epsilon: f64, delta: f64) -> Result<Calibration> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if delta >= DELTA_CEILING {
        return Ok(Calibration {
            sigma: 0.0,
            degenerate: true,
        });
    }
    Ok(Calibration {
        sigma: (2.0 * (DELTA_CEILING / delta).ln()).sqrt() / epsilon,
        degenerate: false,
    })
}

pub fn delta_for(sigma: f64, epsilon: f64) -> f64 {
    let s = sigma * epsilon;
    DELTA_CEILING * (-0.5 * s * s).exp()
}

/// Smallest ε reaching `delta` with multiplier `sigma`.
pub fn min_epsilon(sigma: f64, delta: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be > 0, got {sigma}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if delta >= DELTA_CEILING {
        return Ok(0.0);
    }
    Ok((2.0 * (DELTA_CEILING / delta).ln()).sqrt() / sigma)
}

/// `zbar + N(0, noise_std²)` per coordinate, unclamped.
pub fn perturb_mean<R: Rng + ?Sized>(zbar: &Tensor, noise_std: f64, rng: &mut R) -> Result<Tensor> {
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::InvalidArgument(format!("noise std must be >= 0, got {noise_std}")));
    }
    let mut out = zbar.clone();
    for v in out.data_mut() {
        *v += noise_std * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpParams {
    pub epsilon: f64,
    pub delta: f64,
    pub m: usize,
    pub sigma_mech: f64,
    pub noise_std: f64,
}

impl DpParams {
    /// Parameters implied by adding `noise_std` to a mean over `m` samples,
    /// evaluated at privacy budget `epsilon`.
    pub fn from_noise(noise_std: f64, m: usize, epsilon: f64) -> Result<Self> {
        let s = sensitivity(m)?;
        if !(noise_std >= 0.0) || !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need noise_std >= 0 and epsilon > 0, got {noise_std}, {epsilon}"
            )));
        }
        let sigma_mech = noise_std / s;
        Ok(Self {
            epsilon,
            delta: delta_for(sigma_mech, epsilon),
            m,
            sigma_mech,
            noise_std,
        })
    }

    pub fn sensitivity(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// `δ ≥ (4/5)·exp(−(σε)²/2)` holds for the stored δ.
    pub fn is_valid_claim(&self) -> bool {
        self.delta >= delta_for(self.sigma_mech, self.epsilon) * (1.0 - 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetQuery {
    pub noise_std: f64,
    pub epsilon: f64,
    pub target_delta: f64,
    /// Classes with fewer contributing samples get no privacy claim.
    pub min_m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRecord {
    pub class: usize,
    pub m: usize,
    pub noise_std: f64,
    pub sigma_mech: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Smallest ε reaching `target_delta` at this σ.
    pub epsilon_at_target_delta: f64,
    pub meets_target: bool,
}

/// One record per shared class, given `(class, m)` pairs.
pub fn budget_report(query: &BudgetQuery, classes: &[(usize, usize)]) -> Result<Vec<BudgetRecord>> {
    classes
        .iter()
        .map(|&(class, m)| {
            if m < query.min_m.max(1) {
                return Err(Error::InvalidArgument(format!(
                    "class {class} has m = {m} contributing samples, below the floor of {}",
                    query.min_m.max(1)
                )));
            }
            let p = DpParams::from_noise(query.noise_std, m, query.epsilon)?;
            let epsilon_at_target_delta = if p.sigma_mech > 0.0 {
                min_epsilon(p.sigma_mech, query.target_delta)?
            } else {
                f64::INFINITY
            };
            Ok(BudgetRecord {
                class,
                m,
                noise_std: query.noise_std,
                sigma_mech: p.sigma_mech,
                epsilon: query.epsilon,
                delta: p.delta,
                epsilon_at_target_delta,
                meets_target: p.delta <= query.target_delta,
            })
        })
        .collect()
}
