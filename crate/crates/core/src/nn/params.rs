use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

/// One dense layer: weight `[fan_in, fan_out]` and bias `[fan_out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub id: String,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub fn zeros(id: impl Into<String>, fan_in: usize, fan_out: usize) -> Self {
        Self {
            id: id.into(),
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` for weights and bias, the usual default for
    /// linear layers.
    pub fn uniform<R: Rng + ?Sized>(
        id: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let w = draw(fan_in * fan_out);
        let b = draw(fan_out);
        Self {
            id: id.into(),
            weight: Tensor::new(vec![fan_in, fan_out], w).expect("sized above"),
            bias: Tensor::new(vec![fan_out], b).expect("sized above"),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }

    fn compatible(&self, other: &Layer) -> bool {
        self.id == other.id
            && self.weight.shape() == other.weight.shape()
            && self.bias.shape() == other.bias.shape()
    }
}

/// Ordered list of named layers; the unit of upload, download and
/// aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    layers: Vec<Layer>,
}

impl ModelParams {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer(&self, id: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.id == id)
    }

    /// Total scalar count (Θ for encoder + classifier).
    pub fn scalar_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Same layer ids, shapes and order.
    pub fn is_compatible(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.compatible(b))
    }

    pub fn ensure_compatible(&self, other: &ModelParams) -> Result<()> {
        if self.is_compatible(other) {
            return Ok(());
        }
        let describe = |p: &ModelParams| {
            p.layers
                .iter()
                .map(|l| format!("{}{:?}", l.id, l.weight.shape()))
                .collect::<Vec<_>>()
                .join(",")
        };
        Err(Error::Incompatible(format!(
            "[{}] vs [{}]",
            describe(self),
            describe(other)
        )))
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    id: l.id.clone(),
                    weight: Tensor::zeros(l.weight.shape()),
                    bias: Tensor::zeros(l.bias.shape()),
                })
                .collect(),
        }
    }

    /// All scalars in layer order, weight before bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.data().iter().chain(l.bias.data()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| {
            let Layer { weight, bias, .. } = l;
            weight.data_mut().iter_mut().chain(bias.data_mut().iter_mut())
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &ModelParams) -> Result<()> {
        self.ensure_compatible(other)?;
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn squared_distance(&self, other: &ModelParams) -> Result<f64> {
        self.ensure_compatible(other)?;
        Ok(self
            .values()
            .zip(other.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn ensure_finite(&self, context: &'static str) -> Result<()> {
        if self.values().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context))
        }
    }

    /// `Σ wᵢ · paramsᵢ` with weights normalised to sum to one.
    pub fn weighted_average(items: &[(&ModelParams, f64)]) -> Result<ModelParams> {
        let (first, _) = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to aggregate".into()))?;
        let total: f64 = items.iter().map(|(_, w)| *w).sum();
        if !(total > 0.0) || items.iter().any(|(_, w)| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "aggregation weights must be nonnegative with positive sum, got total {total}"
            )));
        }
        let mut out = first.zeros_like();
        for (params, w) in items {
            out.add_scaled(w / total, params)?;
        }
        Ok(out)
    }
}
