use serde::{Deserialize, Serialize};

use super::linalg::{gemm, Mat};
use super::{Layer, ModelParams, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => sigmoid(v),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `act(x · W + b)` for a batch `x: [B, fan_in]`.
pub fn dense_forward(layer: &Layer, x: &Tensor, act: Activation) -> Result<Tensor> {
    let (fan_in, fan_out) = (layer.fan_in(), layer.fan_out());
    if x.cols() != fan_in {
        return Err(Error::shape(&[x.rows(), fan_in], x.shape()));
    }
    let rows = x.rows();
    let mut out = Vec::with_capacity(rows * fan_out);
    for _ in 0..rows {
        out.extend_from_slice(layer.bias.data());
    }
    gemm(
        Mat::new(x.data(), rows, fan_in),
        Mat::new(layer.weight.data(), fan_in, fan_out),
        1.0,
        &mut out,
    );
    if act != Activation::Identity {
        for v in &mut out {
            *v = act.apply(*v);
        }
    }
    Tensor::matrix(rows, fan_out, out)
}

/// Gradients of one dense layer given its input `x`, output `y` and the
/// upstream gradient `dy`. The input gradient is only computed on request.
pub fn dense_backward(
    layer: &Layer,
    x: &Tensor,
    y: &Tensor,
    act: Activation,
    dy: &Tensor,
    want_input_grad: bool,
) -> Result<(Layer, Option<Tensor>)> {
    let (fan_in, fan_out) = (layer.fan_in(), layer.fan_out());
    let rows = x.rows();
    y.ensure_shape(&[rows, fan_out])?;
    dy.ensure_shape(&[rows, fan_out])?;
    if x.cols() != fan_in {
        return Err(Error::shape(&[rows, fan_in], x.shape()));
    }

    let dpre: Vec<f64> = if act == Activation::Identity {
        dy.data().to_vec()
    } else {
        dy.data()
            .iter()
            .zip(y.data())
            .map(|(&g, &out)| g * act.derivative_from_output(out))
            .collect()
    };

    let mut dw = vec![0.0; fan_in * fan_out];
    gemm(
        Mat::new(x.data(), rows, fan_in).t(),
        Mat::new(&dpre, rows, fan_out),
        0.0,
        &mut dw,
    );
    let mut db = vec![0.0; fan_out];
    for r in 0..rows {
        for (acc, g) in db.iter_mut().zip(&dpre[r * fan_out..(r + 1) * fan_out]) {
            *acc += g;
        }
    }

    let dx = if want_input_grad {
        let mut dx = vec![0.0; rows * fan_in];
        gemm(
            Mat::new(&dpre, rows, fan_out),
            Mat::new(layer.weight.data(), fan_in, fan_out).t(),
            0.0,
            &mut dx,
        );
        Some(Tensor::matrix(rows, fan_in, dx)?)
    } else {
        None
    };

    let grad = Layer {
        id: layer.id.clone(),
        weight: Tensor::matrix(fan_in, fan_out, dw)?,
        bias: Tensor::vector(db),
    };
    Ok((grad, dx))
}

/// Intermediate activations of a sequential forward pass: the input followed
/// by every layer's output.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    activations: Vec<Tensor>,
}

impl ForwardCache {
    pub fn output(&self) -> Option<&Tensor> {
        self.activations.last()
    }
}

/// Sequential forward pass; `acts[i]` is applied after layer `i`.
pub fn forward(
    params: &ModelParams,
    acts: &[Activation],
    input: &Tensor,
) -> Result<(Tensor, ForwardCache)> {
    if acts.len() != params.layers().len() {
        return Err(Error::InvalidArgument(format!(
            "{} activations for {} layers",
            acts.len(),
            params.layers().len()
        )));
    }
    let mut activations = Vec::with_capacity(acts.len() + 1);
    let mut current = input.as_batch();
    for (layer, &act) in params.layers().iter().zip(acts) {
        let next = dense_forward(layer, &current, act)?;
        activations.push(current);
        current = next;
    }
    activations.push(current.clone());
    Ok((current, ForwardCache { activations }))
}

/// Backward pass for [`forward`]. Returns parameter gradients and, when
/// requested, the gradient with respect to the input.
pub fn backward(
    params: &ModelParams,
    acts: &[Activation],
    cache: &ForwardCache,
    grad_output: &Tensor,
    want_input_grad: bool,
) -> Result<(ModelParams, Option<Tensor>)> {
    let layers = params.layers();
    if cache.activations.len() != layers.len() + 1 || acts.len() != layers.len() {
        return Err(Error::MissingForwardCache);
    }
    let out = &cache.activations[layers.len()];
    let mut upstream = grad_output.as_batch();
    upstream.ensure_shape(out.shape())?;

    let mut grads: Vec<Layer> = Vec::with_capacity(layers.len());
    for i in (0..layers.len()).rev() {
        let need_dx = i > 0 || want_input_grad;
        let (g, dx) = dense_backward(
            &layers[i],
            &cache.activations[i],
            &cache.activations[i + 1],
            acts[i],
            &upstream,
            need_dx,
        )?;
        grads.push(g);
        if let Some(dx) = dx {
            upstream = dx;
        }
    }
    grads.reverse();
    let input_grad = if want_input_grad { Some(upstream) } else { None };
    Ok((ModelParams::new(grads), input_grad))
}
