#![allow(dead_code)]

use feddpms::data::{dirichlet_partition, make_synthetic_split, Dataset, PartitionSpec, SyntheticSpec};
use feddpms::nn::{AdamConfig, ModelParams};
use feddpms::protocol::{DpmsParams, ProtocolConfig, Scheme};
use feddpms::vae::VaeArch;

/// Central-difference gradient of `f` at `p`.
pub fn numeric_grad(p: &ModelParams, f: &dyn Fn(&ModelParams) -> f64, h: f64) -> ModelParams {
    let mut out = p.zeros_like();
    let count = p.scalar_count();
    let mut probe = p.clone();
    for i in 0..count {
        let orig = *probe.values().nth(i).unwrap();
        *probe.values_mut().nth(i).unwrap() = orig + h;
        let up = f(&probe);
        *probe.values_mut().nth(i).unwrap() = orig - h;
        let down = f(&probe);
        *probe.values_mut().nth(i).unwrap() = orig;
        *out.values_mut().nth(i).unwrap() = (up - down) / (2.0 * h);
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute gap when both are ~0.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub fn tiny_arch(input_dim: usize, classes: usize) -> VaeArch {
    VaeArch {
        input_dim,
        encoder_hidden: 24,
        latent_dim: 4,
        classifier_hidden: 16,
        classes,
    }
}

pub fn tiny_protocol(scheme: Scheme, arch: VaeArch, per_round: usize, rounds: usize, prelim: usize) -> ProtocolConfig {
    ProtocolConfig {
        scheme,
        arch,
        per_round,
        rounds,
        prelim_rounds: prelim,
        local_epochs: 1,
        batch_size: 16,
        lambda: 0.05,
        n: 1,
        dpms: DpmsParams {
            alpha: 5,
            noise_std: 0.05,
            max_attempts: 20,
        },
        mu_prox: 0.001,
        adam: AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        },
        seed: 11,
        max_local_steps: None,
    }
}

/// Small synthetic clients plus a test split.
pub fn tiny_federation(clients: usize, beta: f64, seed: u64) -> (Vec<Dataset>, Dataset) {
    let spec = SyntheticSpec {
        classes: 4,
        per_class: 60,
        dim: 6,
        spread: 0.3,
        seed,
    };
    let (train, test) = make_synthetic_split(&spec, 20).unwrap();
    let part = dirichlet_partition(
        &train,
        &PartitionSpec {
            clients,
            beta,
            seed,
        },
    )
    .unwrap();
    (part.clients, test)
}
