//! Labelled Gaussian clusters inside the unit cube.
//!
//! Class centroids are drawn uniformly from `[0.2, 0.8]^dim`. Each sample is
//! its centroid plus isotropic Gaussian noise whose RMS radius equals
//! `spread × d_min`, where `d_min` is the smallest centroid distance, then
//! clipped to `[0, 1]`. `spread` is therefore dimensionless: below 0.25
//! (centroid distance at least four cluster radii) held-out error of a
//! centrally trained MLP is under 5%.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub spread: f64,
    pub seed: u64,
}

struct Clusters {
    centroids: Vec<Vec<f64>>,
    coord_std: f64,
}

fn clusters(spec: &SyntheticSpec) -> Result<Clusters> {
    if spec.classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    if spec.per_class == 0 || spec.dim == 0 {
        return Err(Error::InvalidArgument(
            "per-class count and dimension must be positive".into(),
        ));
    }
    if !(spec.spread >= 0.0) || !spec.spread.is_finite() {
        return Err(Error::InvalidArgument(format!("bad spread {}", spec.spread)));
    }
    let mut rng = stream(spec.seed, Purpose::DataSource, &[0]);
    let centroids: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..spec.dim).map(|_| rng.random_range(0.2..0.8)).collect())
        .collect();
    let mut d_min = f64::INFINITY;
    for a in 0..spec.classes {
        for b in a + 1..spec.classes {
            let d: f64 = centroids[a]
                .iter()
                .zip(&centroids[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            d_min = d_min.min(d);
        }
    }
    Ok(Clusters {
        centroids,
        coord_std: spec.spread * d_min / (spec.dim as f64).sqrt(),
    })
}

fn draw(clusters: &Clusters, spec: &SyntheticSpec, per_class: usize, key: u64) -> Result<Dataset> {
    let mut rng = stream(spec.seed, Purpose::DataSource, &[key]);
    let mut features = Vec::with_capacity(spec.classes * per_class * spec.dim);
    let mut labels = Vec::with_capacity(spec.classes * per_class);
    for (class, centroid) in clusters.centroids.iter().enumerate() {
        for _ in 0..per_class {
            for &c in centroid {
                let noise: f64 = rng.sample(StandardNormal);
                features.push((c + clusters.coord_std * noise).clamp(0.0, 1.0));
            }
            labels.push(class);
        }
    }
    Dataset::new(spec.dim, spec.classes, features, labels)
}

/// Balanced dataset with `per_class` samples of every class.
pub fn make_synthetic_source(spec: &SyntheticSpec) -> Result<Dataset> {
    let c = clusters(spec)?;
    draw(&c, spec, spec.per_class, 1)
}

/// Training set as [`make_synthetic_source`] plus an independent test set
/// from the same clusters.
pub fn make_synthetic_split(spec: &SyntheticSpec, test_per_class: usize) -> Result<(Dataset, Dataset)> {
    let c = clusters(spec)?;
    if test_per_class == 0 {
        return Err(Error::InvalidArgument("test split must be nonempty".into()));
    }
    Ok((draw(&c, spec, spec.per_class, 1)?, draw(&c, spec, test_per_class, 2)?))
}
