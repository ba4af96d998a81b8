use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Dataset;
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub clients: usize,
    pub beta: f64,
    pub seed: u64,
}

/// Client datasets plus the source indices each one received.
#[derive(Debug, Clone)]
pub struct Partition {
    pub clients: Vec<Dataset>,
    pub assignment: Vec<Vec<usize>>,
}

impl Partition {
    /// Hex SHA-256 over the per-client index lists; equal hashes mean
    /// identical data splits.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (i, idx) in self.assignment.iter().enumerate() {
            h.update((i as u64).to_le_bytes());
            h.update((idx.len() as u64).to_le_bytes());
            for &j in idx {
                h.update((j as u64).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// One draw from Dir(β·1_K).
///
/// Gamma variates are combined in log space, using
/// `Gamma(β) = Gamma(β + 1) · U^(1/β)`, so that small β (heavy skew) never
/// collapses every component to zero.
fn dirichlet_symmetric<R: Rng + ?Sized>(beta: f64, k: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(beta + 1.0, 1.0).expect("shape > 1");
    let logs: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            g.ln() + u.ln() / beta
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Split every class across clients by proportions drawn from Dir(β·1_K).
pub fn dirichlet_partition(src: &Dataset, spec: &PartitionSpec) -> Result<Partition> {
    if src.is_empty() {
        return Err(Error::EmptyDataset("partition source"));
    }
    if !(spec.beta > 0.0) || !spec.beta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "concentration must be positive and finite, got {}",
            spec.beta
        )));
    }
    if spec.clients == 0 {
        return Err(Error::InvalidArgument("need at least one client".into()));
    }
    let k = spec.clients;
    let mut rng = stream(spec.seed, Purpose::Partition, &[spec.beta.to_bits()]);
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); k];

    for class in 0..src.classes() {
        let mut members: Vec<usize> = (0..src.len()).filter(|&i| src.label(i) == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let proportions = if k == 1 {
            vec![1.0]
        } else {
            dirichlet_symmetric(spec.beta, k, &mut rng)
        };
        let n = members.len();
        let mut cum = 0.0;
        let mut start = 0;
        for (client, p) in proportions.iter().enumerate() {
            cum += p;
            let end = if client + 1 == k {
                n
            } else {
                ((cum * n as f64).floor() as usize).clamp(start, n)
            };
            assignment[client].extend_from_slice(&members[start..end]);
            start = end;
        }
    }

    for idx in &mut assignment {
        idx.sort_unstable();
    }
    let clients = assignment.iter().map(|idx| src.subset(idx)).collect();
    Ok(Partition {
        clients,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn source(per_class: usize, classes: usize) -> Dataset {
        let n = per_class * classes;
        let labels = (0..n).map(|i| i % classes).collect();
        Dataset::new(1, classes, (0..n).map(|i| i as f64).collect(), labels).unwrap()
    }

    #[test]
    fn single_client_gets_everything() {
        let src = source(30, 3);
        let p = dirichlet_partition(&src, &PartitionSpec { clients: 1, beta: 0.5, seed: 4 }).unwrap();
        assert_eq!(p.clients[0], src);
    }

    #[test]
    fn rejects_bad_inputs() {
        let src = source(3, 2);
        let spec = |beta| PartitionSpec { clients: 2, beta, seed: 0 };
        assert!(dirichlet_partition(&src, &spec(0.0)).is_err());
        assert!(dirichlet_partition(&src, &spec(-1.0)).is_err());
        assert!(dirichlet_partition(&Dataset::empty(1, 2), &spec(1.0)).is_err());
    }

    #[test]
    fn huge_concentration_is_near_uniform() {
        let src = source(1000, 10);
        let p = dirichlet_partition(&src, &PartitionSpec { clients: 10, beta: 1e6, seed: 9 }).unwrap();
        for client in &p.clients {
            for &c in &client.class_counts() {
                let share = c as f64 / 1000.0;
                assert!((share - 0.1).abs() / 0.1 < 0.1, "share {share}");
            }
        }
    }

    #[test]
    fn small_concentration_is_severely_imbalanced() {
        let src = source(600, 10);
        let p = dirichlet_partition(&src, &PartitionSpec { clients: 10, beta: 0.5, seed: 1 }).unwrap();
        let near_empty = p
            .clients
            .iter()
            .flat_map(|c| c.class_counts())
            .filter(|&c| c <= 6)
            .count();
        assert!(near_empty >= 10, "only {near_empty} near-empty client/class cells");
    }

    #[test]
    fn tiny_concentration_stays_finite() {
        let mut rng = stream(3, Purpose::Partition, &[]);
        for _ in 0..200 {
            let p = dirichlet_symmetric(0.01, 10, &mut rng);
            assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_hash() {
        let src = source(50, 4);
        let spec = PartitionSpec { clients: 5, beta: 0.3, seed: 21 };
        let a = dirichlet_partition(&src, &spec).unwrap();
        let b = dirichlet_partition(&src, &spec).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = dirichlet_partition(&src, &PartitionSpec { beta: 0.4, ..spec }).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn partition_conserves_per_class_counts(
            seed in any::<u64>(),
            clients in 1usize..12,
            beta in 0.05f64..50.0,
            per_class in 1usize..40,
        ) {
            let src = source(per_class, 5);
            let p = dirichlet_partition(&src, &PartitionSpec { clients, beta, seed }).unwrap();
            let mut totals = vec![0; 5];
            for c in &p.clients {
                for (t, n) in totals.iter_mut().zip(c.class_counts()) {
                    *t += n;
                }
            }
            prop_assert_eq!(totals, src.class_counts());
            let mut all: Vec<usize> = p.assignment.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..src.len()).collect::<Vec<_>>());
        }
    }
}
