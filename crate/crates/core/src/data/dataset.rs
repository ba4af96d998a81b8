use rand::seq::SliceRandom;
use rand::Rng;

use crate::nn::Tensor;
use crate::{Error, Result};

/// Labelled feature vectors with a per-sample provenance flag.
///
/// Synthetic samples are excluded from every statistic documented as
/// real-only (class profiles, latent means).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    synthetic: Vec<bool>,
}

impl Dataset {
    pub fn new(dim: usize, classes: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let n = labels.len();
        Self::with_provenance(dim, classes, features, labels, vec![false; n])
    }

    pub fn with_provenance(
        dim: usize,
        classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        synthetic: Vec<bool>,
    ) -> Result<Self> {
        if dim == 0 || classes == 0 {
            return Err(Error::InvalidArgument(
                "dataset dimension and class count must be positive".into(),
            ));
        }
        if features.len() != labels.len() * dim || synthetic.len() != labels.len() {
            return Err(Error::shape(&[labels.len() * dim], &[features.len()]));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidLabel { label, classes });
        }
        Ok(Self {
            dim,
            classes,
            features,
            labels,
            synthetic,
        })
    }

    pub fn empty(dim: usize, classes: usize) -> Self {
        Self {
            dim,
            classes,
            features: Vec::new(),
            labels: Vec::new(),
            synthetic: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn is_synthetic(&self, i: usize) -> bool {
        self.synthetic[i]
    }

    pub fn synthetic_count(&self) -> usize {
        self.synthetic.iter().filter(|&&s| s).count()
    }

    pub fn real_count(&self) -> usize {
        self.len() - self.synthetic_count()
    }

    /// Per-class counts over all samples.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Per-class counts over real samples only.
    pub fn real_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for (&l, &s) in self.labels.iter().zip(&self.synthetic) {
            if !s {
                counts[l] += 1;
            }
        }
        counts
    }

    pub fn real_indices_of_class(&self, class: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i] == class && !self.synthetic[i])
            .collect()
    }

    /// Gather rows into a `[B, dim]` batch plus labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset("batch"));
        }
        let mut x = Vec::with_capacity(indices.len() * self.dim);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.features(i));
            y.push(self.labels[i]);
        }
        Ok((Tensor::matrix(indices.len(), self.dim, x)?, y))
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        let mut synthetic = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
            synthetic.push(self.synthetic[i]);
        }
        Dataset {
            dim: self.dim,
            classes: self.classes,
            features,
            labels,
            synthetic,
        }
    }

    pub fn into_synthetic(mut self) -> Dataset {
        self.synthetic.iter_mut().for_each(|s| *s = true);
        self
    }

    pub fn all_features(&self) -> Result<Tensor> {
        Tensor::matrix(self.len(), self.dim, self.features.clone())
    }
}

/// Concatenate a local dataset with synthetic samples, which keep their
/// synthetic provenance.
pub fn merge_synthetic(local: &Dataset, synth: &Dataset) -> Result<Dataset> {
    if local.dim != synth.dim {
        return Err(Error::shape(&[local.dim], &[synth.dim]));
    }
    if local.classes != synth.classes {
        return Err(Error::InvalidArgument(format!(
            "class count mismatch: {} vs {}",
            local.classes, synth.classes
        )));
    }
    let mut merged = local.clone();
    merged.features.extend_from_slice(&synth.features);
    merged.labels.extend_from_slice(&synth.labels);
    merged.synthetic.extend(std::iter::repeat_n(true, synth.len()));
    Ok(merged)
}

/// Uniform sample of `target` indices without replacement, in random order.
pub fn sample_round_subset<R: Rng + ?Sized>(
    merged: &Dataset,
    target: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if target > merged.len() {
        return Err(Error::InvalidArgument(format!(
            "subset size {target} exceeds dataset size {}",
            merged.len()
        )));
    }
    let mut idx: Vec<usize> = (0..merged.len()).collect();
    let (chosen, _) = idx.partial_shuffle(rng, target);
    Ok(chosen.to_vec())
}
