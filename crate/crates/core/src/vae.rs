//! Encoder / decoder / classifier model.
//!
//! Encoder: `input → hidden (ReLU) → {mu (sigmoid), logvar (linear)}`.
//! Decoder: `latent → hidden (ReLU) → input (sigmoid)`.
//! Classifier: `latent → hidden (ReLU) → logits`.
//!
//! The sigmoid on the mean head keeps every latent mean inside `[0, 1]`,
//! which the privacy sensitivity bound depends on. Training samples
//! `z = mu + exp(logvar / 2) ⊙ eps`; inference classifies `mu` directly.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nn::{
    backward, dense_backward, dense_forward, forward, kld_with_grad, mse_with_grad,
    softmax, softmax_cross_entropy, Activation, Layer, ModelParams, Tensor,
};
use crate::{Error, Result};

const DECODER_ACTS: [Activation; 2] = [Activation::Relu, Activation::Sigmoid];
const CLASSIFIER_ACTS: [Activation; 2] = [Activation::Relu, Activation::Identity];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaeArch {
    pub input_dim: usize,
    pub encoder_hidden: usize,
    pub latent_dim: usize,
    pub classifier_hidden: usize,
    pub classes: usize,
}

impl VaeArch {
    /// Desk-scale widths: 256-wide encoder/decoder trunk, 128-wide
    /// classifier.
    pub fn new(input_dim: usize, latent_dim: usize, classes: usize) -> Result<Self> {
        Self {
            input_dim,
            encoder_hidden: 256,
            latent_dim,
            classifier_hidden: 128,
            classes,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.latent_dim == 0
            || self.input_dim == 0
            || self.encoder_hidden == 0
            || self.classifier_hidden == 0
        {
            return Err(Error::InvalidArgument(format!(
                "architecture dimensions must be positive: {self:?}"
            )));
        }
        if self.classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        Ok(self)
    }

    pub fn init_encoder<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelParams {
        ModelParams::new(vec![
            Layer::uniform("enc.hidden", self.input_dim, self.encoder_hidden, rng),
            Layer::uniform("enc.mu", self.encoder_hidden, self.latent_dim, rng),
            Layer::uniform("enc.logvar", self.encoder_hidden, self.latent_dim, rng),
        ])
    }

    pub fn init_decoder<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelParams {
        // Symmetric to the encoder trunk.
        ModelParams::new(vec![
            Layer::uniform("dec.hidden", self.latent_dim, self.encoder_hidden, rng),
            Layer::uniform("dec.out", self.encoder_hidden, self.input_dim, rng),
        ])
    }

    pub fn init_classifier<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelParams {
        ModelParams::new(vec![
            Layer::uniform("clf.hidden", self.latent_dim, self.classifier_hidden, rng),
            Layer::uniform("clf.out", self.classifier_hidden, self.classes, rng),
        ])
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> VaeModel {
        VaeModel {
            encoder: self.init_encoder(rng),
            classifier: self.init_classifier(rng),
            decoder: self.init_decoder(rng),
        }
    }

    /// Θ: scalar count of encoder plus classifier.
    pub fn model_scalars(&self) -> usize {
        let dense = |i: usize, o: usize| i * o + o;
        dense(self.input_dim, self.encoder_hidden)
            + 2 * dense(self.encoder_hidden, self.latent_dim)
            + dense(self.latent_dim, self.classifier_hidden)
            + dense(self.classifier_hidden, self.classes)
    }

    pub fn decoder_scalars(&self) -> usize {
        self.latent_dim * self.encoder_hidden
            + self.encoder_hidden
            + self.encoder_hidden * self.input_dim
            + self.input_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder: ModelParams,
    pub classifier: ModelParams,
    pub decoder: ModelParams,
}

/// Batched latent code; every tensor is `[B, l]`.
#[derive(Debug, Clone)]
pub struct LatentCode {
    pub mu: Tensor,
    pub logvar: Tensor,
    pub z: Tensor,
    pub eps: Tensor,
}

/// `[rows, cols]` of independent standard normals.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::matrix(rows, cols, data).expect("sized above")
}

struct EncoderTrace {
    x: Tensor,
    hidden: Tensor,
    code: LatentCode,
}

fn encoder_layers(enc: &ModelParams) -> Result<(&Layer, &Layer, &Layer)> {
    match enc.layers() {
        [h, m, v] => Ok((h, m, v)),
        other => Err(Error::InvalidArgument(format!(
            "encoder needs 3 layers, got {}",
            other.len()
        ))),
    }
}

fn encoder_forward(enc: &ModelParams, x: &Tensor, eps: Option<&Tensor>) -> Result<EncoderTrace> {
    let (hidden_l, mu_l, lv_l) = encoder_layers(enc)?;
    let x = x.as_batch();
    let hidden = dense_forward(hidden_l, &x, Activation::Relu)?;
    let mu = dense_forward(mu_l, &hidden, Activation::Sigmoid)?;
    let logvar = dense_forward(lv_l, &hidden, Activation::Identity)?;
    let (z, eps) = match eps {
        Some(eps) => {
            eps.ensure_shape(mu.shape())?;
            let z: Vec<f64> = mu
                .data()
                .iter()
                .zip(logvar.data())
                .zip(eps.data())
                .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
                .collect();
            (Tensor::new(mu.shape().to_vec(), z)?, eps.clone())
        }
        None => (mu.clone(), Tensor::zeros(mu.shape())),
    };
    Ok(EncoderTrace {
        x,
        hidden,
        code: LatentCode {
            mu,
            logvar,
            z,
            eps,
        },
    })
}

fn encoder_backward(
    enc: &ModelParams,
    trace: &EncoderTrace,
    dmu: &Tensor,
    dlogvar: &Tensor,
) -> Result<ModelParams> {
    let (hidden_l, mu_l, lv_l) = encoder_layers(enc)?;
    let (g_mu, dh_mu) = dense_backward(
        mu_l,
        &trace.hidden,
        &trace.code.mu,
        Activation::Sigmoid,
        dmu,
        true,
    )?;
    let (g_lv, dh_lv) = dense_backward(
        lv_l,
        &trace.hidden,
        &trace.code.logvar,
        Activation::Identity,
        dlogvar,
        true,
    )?;
    let mut dh = dh_mu.expect("requested");
    for (a, b) in dh.data_mut().iter_mut().zip(dh_lv.expect("requested").data()) {
        *a += b;
    }
    let (g_hidden, _) = dense_backward(
        hidden_l,
        &trace.x,
        &trace.hidden,
        Activation::Relu,
        &dh,
        false,
    )?;
    Ok(ModelParams::new(vec![g_hidden, g_mu, g_lv]))
}

/// Encode a batch, drawing a fresh `eps` from `rng`.
pub fn encode<R: Rng + ?Sized>(enc: &ModelParams, x: &Tensor, rng: &mut R) -> Result<LatentCode> {
    let rows = x.rows();
    let (_, mu_l, _) = encoder_layers(enc)?;
    let eps = standard_normal(rng, rows, mu_l.fan_out());
    encode_with_noise(enc, x, &eps)
}

pub fn encode_with_noise(enc: &ModelParams, x: &Tensor, eps: &Tensor) -> Result<LatentCode> {
    Ok(encoder_forward(enc, x, Some(eps))?.code)
}

/// Deterministic latent means `[B, l]`.
pub fn encode_mean(enc: &ModelParams, x: &Tensor) -> Result<Tensor> {
    Ok(encoder_forward(enc, x, None)?.code.mu)
}

pub fn decode(dec: &ModelParams, z: &Tensor) -> Result<Tensor> {
    Ok(forward(dec, &DECODER_ACTS, z)?.0)
}

/// Class probabilities `[B, C]` computed from the latent mean.
pub fn classify(enc: &ModelParams, clf: &ModelParams, x: &Tensor) -> Result<Tensor> {
    let logits = logits_from_mean(enc, clf, x)?;
    let mut probs = Vec::with_capacity(logits.len());
    for r in 0..logits.rows() {
        probs.extend(softmax(logits.row(r)));
    }
    Tensor::matrix(logits.rows(), logits.cols(), probs)
}

pub fn predict(enc: &ModelParams, clf: &ModelParams, x: &Tensor) -> Result<Vec<usize>> {
    Ok(logits_from_mean(enc, clf, x)?.argmax_rows())
}

fn logits_from_mean(enc: &ModelParams, clf: &ModelParams, x: &Tensor) -> Result<Tensor> {
    let mu = encode_mean(enc, x)?;
    Ok(forward(clf, &CLASSIFIER_ACTS, &mu)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub kld: f64,
    pub mse: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct VaeGrads {
    pub encoder: ModelParams,
    pub classifier: ModelParams,
    /// `None` when the decoder is not part of the loss.
    pub decoder: Option<ModelParams>,
}

/// `ℓ1 + λ(ℓ2 + ℓ3)` averaged over the batch, for frozen `eps`.
pub fn preliminary_loss(
    model: &VaeModel,
    x: &Tensor,
    labels: &[usize],
    lambda: f64,
    eps: &Tensor,
) -> Result<LossBreakdown> {
    Ok(preliminary_loss_and_grads(model, x, labels, lambda, eps)?.0)
}

pub fn preliminary_loss_and_grads(
    model: &VaeModel,
    x: &Tensor,
    labels: &[usize],
    lambda: f64,
    eps: &Tensor,
) -> Result<(LossBreakdown, VaeGrads)> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    let trace = encoder_forward(&model.encoder, x, Some(eps))?;
    let code = &trace.code;

    let (logits, clf_cache) = forward(&model.classifier, &CLASSIFIER_ACTS, &code.z)?;
    let (ce, dlogits) = softmax_cross_entropy(&logits, labels)?;
    let (clf_grad, dz_clf) = backward(&model.classifier, &CLASSIFIER_ACTS, &clf_cache, &dlogits, true)?;

    let (xhat, dec_cache) = forward(&model.decoder, &DECODER_ACTS, &code.z)?;
    let (mse, mut dxhat) = mse_with_grad(&xhat, &trace.x)?;
    dxhat.data_mut().iter_mut().for_each(|g| *g *= lambda);
    let (dec_grad, dz_dec) = backward(&model.decoder, &DECODER_ACTS, &dec_cache, &dxhat, true)?;

    let (kld, dmu_kld, dlv_kld) = kld_with_grad(&code.mu, &code.logvar)?;

    let dz_clf = dz_clf.expect("requested");
    let dz_dec = dz_dec.expect("requested");
    let mut dmu = Vec::with_capacity(code.mu.len());
    let mut dlv = Vec::with_capacity(code.mu.len());
    for i in 0..code.mu.len() {
        let dz = dz_clf.data()[i] + dz_dec.data()[i];
        let half_std = 0.5 * (0.5 * code.logvar.data()[i]).exp();
        dmu.push(dz + lambda * dmu_kld.data()[i]);
        dlv.push(dz * code.eps.data()[i] * half_std + lambda * dlv_kld.data()[i]);
    }
    let shape = code.mu.shape().to_vec();
    let enc_grad = encoder_backward(
        &model.encoder,
        &trace,
        &Tensor::new(shape.clone(), dmu)?,
        &Tensor::new(shape, dlv)?,
    )?;

    let total = ce + lambda * (kld + mse);
    if !total.is_finite() {
        return Err(Error::NonFinite("preliminary loss"));
    }
    Ok((
        LossBreakdown {
            ce,
            kld,
            mse,
            total,
        },
        VaeGrads {
            encoder: enc_grad,
            classifier: clf_grad,
            decoder: Some(dec_grad),
        },
    ))
}

/// Cross-entropy through the sampled code; the decoder is not involved.
pub fn secondary_loss(
    enc: &ModelParams,
    clf: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    eps: &Tensor,
) -> Result<f64> {
    Ok(secondary_loss_and_grads(enc, clf, x, labels, eps)?.0)
}

pub fn secondary_loss_and_grads(
    enc: &ModelParams,
    clf: &ModelParams,
    x: &Tensor,
    labels: &[usize],
    eps: &Tensor,
) -> Result<(f64, VaeGrads)> {
    let trace = encoder_forward(enc, x, Some(eps))?;
    let code = &trace.code;
    let (logits, cache) = forward(clf, &CLASSIFIER_ACTS, &code.z)?;
    let (ce, dlogits) = softmax_cross_entropy(&logits, labels)?;
    if !ce.is_finite() {
        return Err(Error::NonFinite("secondary loss"));
    }
    let (clf_grad, dz) = backward(clf, &CLASSIFIER_ACTS, &cache, &dlogits, true)?;
    let dz = dz.expect("requested");
    let dlv: Vec<f64> = dz
        .data()
        .iter()
        .zip(code.eps.data())
        .zip(code.logvar.data())
        .map(|((&g, &e), &lv)| g * e * 0.5 * (0.5 * lv).exp())
        .collect();
    let enc_grad = encoder_backward(
        enc,
        &trace,
        &dz,
        &Tensor::new(code.mu.shape().to_vec(), dlv)?,
    )?;
    Ok((
        ce,
        VaeGrads {
            encoder: enc_grad,
            classifier: clf_grad,
            decoder: None,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_arch() -> VaeArch {
        VaeArch {
            input_dim: 5,
            encoder_hidden: 7,
            latent_dim: 3,
            classifier_hidden: 6,
            classes: 4,
        }
    }

    fn zeroed(p: &ModelParams) -> ModelParams {
        p.zeros_like()
    }

    fn batch(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Tensor {
        let data = (0..rows * dim).map(|_| rng.random_range(0.0..1.0)).collect();
        Tensor::matrix(rows, dim, data).unwrap()
    }

    #[test]
    fn zero_encoder_gives_half_means() {
        let arch = small_arch();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = zeroed(&arch.init_encoder(&mut rng));
        let mu = encode_mean(&enc, &batch(&mut rng, 2, 5)).unwrap();
        assert!(mu.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn collapsed_variance_makes_code_deterministic() {
        let arch = small_arch();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut enc = arch.init_encoder(&mut rng);
        // logvar head bias → very negative
        let lv = &mut enc.layers_mut()[2];
        lv.weight = Tensor::zeros(lv.weight.shape());
        lv.bias = Tensor::filled(lv.bias.shape(), -200.0);
        let x = batch(&mut rng, 3, 5);
        let code = encode(&enc, &x, &mut rng).unwrap();
        for (z, m) in code.z.data().iter().zip(code.mu.data()) {
            assert!((z - m).abs() < 1e-40);
        }
    }

    #[test]
    fn seeded_encodes_are_identical() {
        let arch = small_arch();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let enc = arch.init_encoder(&mut rng);
        let x = batch(&mut rng, 4, 5);
        let a = encode(&enc, &x, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = encode(&enc, &x, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.z, b.z);
    }

    #[test]
    fn zero_decoder_gives_constant_half() {
        let arch = small_arch();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dec = zeroed(&arch.init_decoder(&mut rng));
        let out = decode(&dec, &batch(&mut rng, 2, 3)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn decoder_output_is_bounded() {
        let arch = small_arch();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dec = arch.init_decoder(&mut rng);
        let z = standard_normal(&mut rng, 50, 3).map(|v| v * 30.0);
        let out = decode(&dec, &z).unwrap();
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn zero_classifier_is_uniform_and_probabilities_normalise() {
        let arch = small_arch();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc = arch.init_encoder(&mut rng);
        let clf = arch.init_classifier(&mut rng);
        let x = batch(&mut rng, 6, 5);
        let p = classify(&enc, &zeroed(&clf), &x).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let p = classify(&enc, &clf, &x).unwrap();
        for r in 0..6 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let arch = small_arch();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let enc = arch.init_encoder(&mut rng);
        assert!(matches!(
            encode_mean(&enc, &batch(&mut rng, 1, 4)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn lambda_zero_reduces_to_cross_entropy_and_secondary_loss() {
        let arch = small_arch();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = arch.init(&mut rng);
        let x = batch(&mut rng, 5, 5);
        let labels = [0, 1, 2, 3, 1];
        let eps = standard_normal(&mut rng, 5, 3);
        let pre = preliminary_loss(&model, &x, &labels, 0.0, &eps).unwrap();
        let sec = secondary_loss(&model.encoder, &model.classifier, &x, &labels, &eps).unwrap();
        assert_eq!(pre.total, pre.ce);
        assert_eq!(pre.total, sec);
        assert!(preliminary_loss(&model, &x, &labels, -1.0, &eps).is_err());
    }

    #[test]
    fn loss_is_affine_in_lambda() {
        let arch = small_arch();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = arch.init(&mut rng);
        let x = batch(&mut rng, 3, 5);
        let labels = [2, 0, 1];
        let eps = standard_normal(&mut rng, 3, 3);
        let at = |l: f64| preliminary_loss(&model, &x, &labels, l, &eps).unwrap();
        let (a, b) = (at(0.0), at(1.0));
        let slope = b.total - a.total;
        assert!(slope >= 0.0);
        assert!((slope - (a.kld + a.mse)).abs() < 1e-12);
        assert!((at(0.05).total - (a.total + 0.05 * slope)).abs() < 1e-12);
    }

    #[test]
    fn single_sample_secondary_loss_matches_ce() {
        let arch = small_arch();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = arch.init(&mut rng);
        let x = batch(&mut rng, 1, 5);
        let eps = standard_normal(&mut rng, 1, 3);
        let code = encode_with_noise(&model.encoder, &x, &eps).unwrap();
        let (logits, _) = forward(&model.classifier, &CLASSIFIER_ACTS, &code.z).unwrap();
        let ce = crate::nn::ce_loss(&Tensor::vector(logits.data().to_vec()), 2).unwrap();
        let sec = secondary_loss(&model.encoder, &model.classifier, &x, &[2], &eps).unwrap();
        assert!((ce - sec).abs() < 1e-14);
    }

    #[test]
    fn secondary_loss_leaves_decoder_out_of_the_graph() {
        let arch = small_arch();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let model = arch.init(&mut rng);
        let x = batch(&mut rng, 2, 5);
        let eps = standard_normal(&mut rng, 2, 3);
        let (_, g) =
            secondary_loss_and_grads(&model.encoder, &model.classifier, &x, &[0, 1], &eps).unwrap();
        assert!(g.decoder.is_none());
    }

    #[test]
    fn model_scalar_counts_match_initialised_params() {
        let arch = VaeArch::new(16, 8, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = arch.init(&mut rng);
        assert_eq!(
            arch.model_scalars(),
            m.encoder.scalar_count() + m.classifier.scalar_count()
        );
        assert_eq!(arch.decoder_scalars(), m.decoder.scalar_count());
    }
}
