mod common;

use common::{numeric_grad, rel_error, tiny_arch};
use feddpms::nn::{kld_with_grad, mse_with_grad, softmax_cross_entropy, ModelParams, Tensor};
use feddpms::vae::{preliminary_loss, preliminary_loss_and_grads, secondary_loss, secondary_loss_and_grads, standard_normal, VaeModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn batch(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Tensor {
    Tensor::matrix(rows, dim, (0..rows * dim).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn setup(seed: u64) -> (VaeModel, Tensor, Vec<usize>, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = tiny_arch(5, 3);
    let model = arch.init(&mut rng);
    let x = batch(&mut rng, 4, 5);
    let y = (0..4).map(|_| rng.random_range(0..3)).collect();
    let eps = standard_normal(&mut rng, 4, arch.latent_dim);
    (model, x, y, eps)
}

#[test]
fn preliminary_gradients_match_finite_differences() {
    for seed in 0..3 {
        let (m, x, y, eps) = setup(seed);
        let (_, g) = preliminary_loss_and_grads(&m, &x, &y, 0.7, &eps).unwrap();
        let f_enc = |p: &ModelParams| {
            let mm = VaeModel { encoder: p.clone(), ..m.clone() };
            preliminary_loss(&mm, &x, &y, 0.7, &eps).unwrap().total
        };
        let f_clf = |p: &ModelParams| {
            let mm = VaeModel { classifier: p.clone(), ..m.clone() };
            preliminary_loss(&mm, &x, &y, 0.7, &eps).unwrap().total
        };
        let f_dec = |p: &ModelParams| {
            let mm = VaeModel { decoder: p.clone(), ..m.clone() };
            preliminary_loss(&mm, &x, &y, 0.7, &eps).unwrap().total
        };
        let e = rel_error(&g.encoder.to_flat(), &numeric_grad(&m.encoder, &f_enc, H).to_flat());
        let c = rel_error(&g.classifier.to_flat(), &numeric_grad(&m.classifier, &f_clf, H).to_flat());
        let d = rel_error(&g.decoder.unwrap().to_flat(), &numeric_grad(&m.decoder, &f_dec, H).to_flat());
        assert!(e < TOL && c < TOL && d < TOL, "seed {seed}: {e} {c} {d}");
    }
}

#[test]
fn secondary_gradients_match_finite_differences() {
    for seed in 10..13 {
        let (m, x, y, eps) = setup(seed);
        let (_, g) = secondary_loss_and_grads(&m.encoder, &m.classifier, &x, &y, &eps).unwrap();
        let f_enc = |p: &ModelParams| secondary_loss(p, &m.classifier, &x, &y, &eps).unwrap();
        let f_clf = |p: &ModelParams| secondary_loss(&m.encoder, p, &x, &y, &eps).unwrap();
        let e = rel_error(&g.encoder.to_flat(), &numeric_grad(&m.encoder, &f_enc, H).to_flat());
        let c = rel_error(&g.classifier.to_flat(), &numeric_grad(&m.classifier, &f_clf, H).to_flat());
        assert!(e < TOL && c < TOL, "seed {seed}: {e} {c}");
        assert!(g.decoder.is_none());
    }
}

fn fd_tensor(t: &Tensor, f: &dyn Fn(&Tensor) -> f64) -> Vec<f64> {
    (0..t.len())
        .map(|i| {
            let mut up = t.clone();
            up.data_mut()[i] += H;
            let mut down = t.clone();
            down.data_mut()[i] -= H;
            (f(&up) - f(&down)) / (2.0 * H)
        })
        .collect()
}

#[test]
fn loss_term_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mu = batch(&mut rng, 3, 4);
    let lv = Tensor::matrix(3, 4, (0..12).map(|_| rng.random_range(-2.0..1.0)).collect()).unwrap();
    let (_, dmu, dlv) = kld_with_grad(&mu, &lv).unwrap();
    assert!(rel_error(dmu.data(), &fd_tensor(&mu, &|t| kld_with_grad(t, &lv).unwrap().0)) < TOL);
    assert!(rel_error(dlv.data(), &fd_tensor(&lv, &|t| kld_with_grad(&mu, t).unwrap().0)) < TOL);

    let xhat = batch(&mut rng, 3, 5);
    let x = batch(&mut rng, 3, 5);
    let (_, dx) = mse_with_grad(&xhat, &x).unwrap();
    assert!(rel_error(dx.data(), &fd_tensor(&xhat, &|t| mse_with_grad(t, &x).unwrap().0)) < TOL);

    let logits = Tensor::matrix(3, 4, (0..12).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
    let labels = [0, 3, 1];
    let (_, dl) = softmax_cross_entropy(&logits, &labels).unwrap();
    assert!(rel_error(dl.data(), &fd_tensor(&logits, &|t| softmax_cross_entropy(t, &labels).unwrap().0)) < TOL);
}
