//! Noisy latent-mean generation with classifier filtering, and synthesis of
//! labelled samples from shared means.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::nn::{ModelParams, Tensor};
use crate::privacy::perturb_mean;
use crate::vae::{decode, encode_mean, predict};
use crate::{Error, Result};

/// One accepted noisy mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMeanRecord {
    pub origin: usize,
    pub class: usize,
    pub z: Vec<f64>,
    /// 1-based index of the attempt (within its class) that produced it.
    pub attempt: usize,
}

/// Mean of the encoder's `mu` over the real samples of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMean {
    pub class: usize,
    pub m: usize,
    pub zbar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpmsOutput {
    pub origin: usize,
    /// `C_i`: the classes the client was asked to share.
    pub abundant: Vec<usize>,
    pub means: Vec<ClassMean>,
    pub records: Vec<LatentMeanRecord>,
    pub attempts: usize,
}

impl DpmsOutput {
    pub fn accepted_for(&self, class: usize) -> usize {
        self.records.iter().filter(|r| r.class == class).count()
    }

    /// Pooled `z̃ − z̄` components of all accepted records.
    pub fn deviations(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for r in &self.records {
            if let Some(mean) = self.means.iter().find(|m| m.class == r.class) {
                out.extend(r.z.iter().zip(&mean.zbar).map(|(z, b)| z - b));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpmsParams {
    pub alpha: usize,
    pub noise_std: f64,
    /// Attempts allowed per required record.
    pub max_attempts: usize,
}

pub fn class_mean(enc: &ModelParams, data: &Dataset, class: usize) -> Result<Option<ClassMean>> {
    let idx = data.real_indices_of_class(class);
    if idx.is_empty() {
        return Ok(None);
    }
    let (x, _) = data.batch(&idx)?;
    let mu = encode_mean(enc, &x)?;
    let l = mu.cols();
    let mut zbar = vec![0.0; l];
    for r in 0..mu.rows() {
        for (acc, v) in zbar.iter_mut().zip(mu.row(r)) {
            *acc += v;
        }
    }
    let m = idx.len();
    zbar.iter_mut().for_each(|v| *v /= m as f64);
    Ok(Some(ClassMean { class, m, zbar }))
}

/// Generate `alpha` accepted noisy means for each class in `abundant`.
///
/// Candidates are `z̃ = z̄ + N(0, noise_std²)`; a candidate is kept when the
/// local encoder and classifier assign `decoder(z̃)` to the intended class.
/// Classes without real samples are skipped. If some class exhausts
/// `max_attempts · alpha` candidates, `Error::PartialQuota` carries the
/// records gathered so far.
#[allow(clippy::too_many_arguments)]
pub fn dpms<R: Rng + ?Sized>(
    origin: usize,
    data: &Dataset,
    enc: &ModelParams,
    clf: &ModelParams,
    decoder: &ModelParams,
    abundant: &[usize],
    params: &DpmsParams,
    rng: &mut R,
) -> Result<DpmsOutput> {
    let cap = params.max_attempts.max(1) * params.alpha;
    let mut out = DpmsOutput {
        origin,
        abundant: abundant.to_vec(),
        means: Vec::new(),
        records: Vec::new(),
        attempts: 0,
    };
    let mut shortfall: Option<(usize, usize, usize)> = None;
    for &class in abundant {
        let Some(mean) = class_mean(enc, data, class)? else {
            log::warn!("client {origin}: class {class} has no real samples, nothing shared");
            continue;
        };
        let zbar = Tensor::matrix(1, mean.zbar.len(), mean.zbar.clone())?;
        let mut accepted = 0;
        let mut attempts = 0;
        while accepted < params.alpha && attempts < cap {
            // Decode in chunks but accept in candidate order, so the result
            // is the same as a one-at-a-time loop.
            let chunk = (params.alpha - accepted).min(cap - attempts);
            let l = zbar.cols();
            let mut cand = Vec::with_capacity(chunk * l);
            for _ in 0..chunk {
                cand.extend_from_slice(perturb_mean(&zbar, params.noise_std, rng)?.data());
            }
            let cand = Tensor::matrix(chunk, l, cand)?;
            let xhat = decode(decoder, &cand)?;
            let pred = predict(enc, clf, &xhat)?;
            for (r, &p) in pred.iter().enumerate() {
                attempts += 1;
                if p == class {
                    accepted += 1;
                    out.records.push(LatentMeanRecord {
                        origin,
                        class,
                        z: cand.row(r).to_vec(),
                        attempt: attempts,
                    });
                }
            }
        }
        out.attempts += attempts;
        out.means.push(mean);
        if accepted < params.alpha && shortfall.is_none() {
            shortfall = Some((class, accepted, attempts));
        }
    }
    match shortfall {
        None => Ok(out),
        Some((class, accepted, attempts)) => Err(Error::PartialQuota {
            class,
            accepted,
            required: params.alpha,
            attempts,
            partial: Box::new(out),
        }),
    }
}

/// Decode every record into one labelled synthetic sample.
pub fn synthesize(decoder: &ModelParams, records: &[LatentMeanRecord], classes: usize) -> Result<Dataset> {
    let first = records
        .first()
        .ok_or(Error::EmptyDataset("no latent records to synthesize from"))?;
    let l = first.z.len();
    let mut z = Vec::with_capacity(records.len() * l);
    let mut labels = Vec::with_capacity(records.len());
    for r in records {
        if r.z.len() != l {
            return Err(Error::shape(&[l], &[r.z.len()]));
        }
        z.extend_from_slice(&r.z);
        labels.push(r.class);
    }
    let expected_l = decoder.layers().first().map_or(0, |layer| layer.fan_in());
    if expected_l != l {
        return Err(Error::shape(&[expected_l], &[l]));
    }
    let x = decode(decoder, &Tensor::matrix(records.len(), l, z)?)?;
    let dim = x.cols();
    Ok(Dataset::new(dim, classes, x.into_data(), labels)?.into_synthetic())
}
