mod common;

use common::{tiny_arch, tiny_federation, tiny_protocol};
use feddpms::data::Dataset;
use feddpms::nn::{mse_loss, Layer, ModelParams, Tensor};
use feddpms::protocol::{aggregate, class_mean, evaluate, Scheme, Simulation};
use feddpms::rng::{stream, Purpose};
use feddpms::vae::{decode, encode_mean, predict, VaeArch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParams::new(vec![Layer::uniform("a", 3, 2, &mut rng), Layer::uniform("b", 2, 2, &mut rng)])
}

#[test]
fn single_upload_is_the_global_model() {
    let p = params(1);
    assert_eq!(aggregate(&[(0, &p, 37.0)]).unwrap().unwrap(), p);
}

#[test]
fn equal_weights_give_elementwise_mean() {
    let (a, b) = (params(1), params(2));
    let g = aggregate(&[(1, &b, 5.0), (0, &a, 5.0)]).unwrap().unwrap();
    for ((x, y), z) in a.values().zip(b.values()).zip(g.values()) {
        assert!((z - 0.5 * (x + y)).abs() < 1e-15);
    }
}

#[test]
fn size_weights_quarter_and_three_quarters() {
    let (a, b) = (params(3), params(4));
    let g = aggregate(&[(0, &a, 1000.0), (1, &b, 3000.0)]).unwrap().unwrap();
    for ((x, y), z) in a.values().zip(b.values()).zip(g.values()) {
        assert!((z - (0.25 * x + 0.75 * y)).abs() < 1e-12);
    }
    assert!(aggregate(&[(0, &a, 0.0)]).unwrap().is_none());
}

#[test]
fn incompatible_uploads_are_rejected() {
    let a = params(1);
    let b = ModelParams::new(vec![Layer::zeros("a", 3, 2)]);
    assert!(aggregate(&[(0, &a, 1.0), (1, &b, 1.0)]).is_err());
}

#[test]
fn preliminary_phase_builds_a_useful_decoder() {
    let (clients, test) = tiny_federation(3, 1.0, 5);
    let arch = tiny_arch(6, 4);
    let mut cfg = tiny_protocol(Scheme::FedDpms, arch, 3, 8, 6);
    cfg.local_epochs = 3;
    cfg.lambda = 1.0;
    let mut sim = Simulation::new(cfg, clients, test.clone()).unwrap();
    for _ in 0..6 {
        sim.step().unwrap();
    }
    let wd = sim.server().decoder.clone().expect("decoder after preliminary phase");
    let untrained = arch.init_decoder(&mut stream(11, Purpose::DecoderInit, &[]));
    let x = test.all_features().unwrap();
    let mu = encode_mean(&sim.server().encoder, &x).unwrap();
    let trained_mse = mse_loss(&decode(&wd, &mu).unwrap(), &x).unwrap();
    let base_mse = mse_loss(&decode(&untrained, &mu).unwrap(), &x).unwrap();
    assert!(trained_mse < base_mse, "{trained_mse} vs {base_mse}");
    assert!(sim.clients().iter().all(|c| c.decoder.is_none()));
}

#[test]
fn first_secondary_round_shares_without_matching() {
    let (clients, test) = tiny_federation(4, 0.5, 6);
    let cfg = tiny_protocol(Scheme::FedDpms, tiny_arch(6, 4), 4, 4, 2);
    let mut sim = Simulation::new(cfg, clients, test).unwrap();
    sim.step().unwrap();
    sim.step().unwrap();
    let rec = sim.step().unwrap();
    assert_eq!(sim.server().benefited.len(), 0);
    assert_eq!(rec.shared_clients, 4);
    assert_eq!(sim.server().bank.len(), 4);
    // from the next round on, everyone is matched
    let rec = sim.step().unwrap();
    assert_eq!(rec.benefited_clients, 4);
}

#[test]
fn sharing_and_augmentation_happen_once_per_client() {
    let (clients, test) = tiny_federation(6, 0.3, 7);
    let cfg = tiny_protocol(Scheme::FedDpms, tiny_arch(6, 4), 2, 14, 2);
    let mut sim = Simulation::new(cfg, clients, test).unwrap();
    let mut benefited_before = 0;
    let mut decoder_hash = None;
    while !sim.is_finished() {
        sim.step().unwrap();
        let s = sim.server();
        assert!(s.benefited.len() >= benefited_before);
        benefited_before = s.benefited.len();
        assert!(s.abundance.keys().eq(s.bank.keys()));
        if let Some(h) = s.decoder_hash() {
            assert_eq!(*decoder_hash.get_or_insert(h.to_owned()), h);
        }
    }
    let audit = sim.audit();
    assert!(audit.is_clean(), "{audit:?}");
    assert!(audit.dpms_runs.iter().all(|&c| c <= 1));
    assert!(audit.synth_runs.iter().all(|&c| c <= 1));
    // each client downloads the global decoder at most once
    assert!(sim.traffic().decoder_download_events <= 6);
    for c in sim.clients() {
        assert_eq!(c.augmented.real_count(), c.data.len());
    }
}

#[test]
fn shared_means_ignore_synthetic_samples() {
    let (clients, test) = tiny_federation(4, 0.5, 8);
    let cfg = tiny_protocol(Scheme::FedDpms, tiny_arch(6, 4), 4, 5, 2);
    let mut sim = Simulation::new(cfg, clients, test).unwrap();
    sim.run().unwrap();
    let enc = &sim.server().encoder;
    let augmented: Vec<_> = sim.clients().iter().filter(|c| c.augmented.synthetic_count() > 0).collect();
    assert!(!augmented.is_empty());
    for c in augmented {
        for class in 0..4 {
            assert_eq!(
                class_mean(enc, &c.data, class).unwrap(),
                class_mean(enc, &c.augmented, class).unwrap()
            );
        }
    }
}

#[test]
fn all_preliminary_rounds_means_no_sharing() {
    let (clients, test) = tiny_federation(3, 0.5, 9);
    let cfg = tiny_protocol(Scheme::FedDpms, tiny_arch(6, 4), 3, 4, 4);
    let mut sim = Simulation::new(cfg, clients, test).unwrap();
    let out = sim.run().unwrap();
    assert!(out.rounds.iter().all(|r| r.shared_clients == 0 && r.benefited_clients == 0));
    assert!(out.dpms_events.is_empty());
    assert_eq!(out.traffic.latent(), 0);
}

#[test]
fn fedprox_without_proximal_weight_is_fedavg() {
    let (clients, test) = tiny_federation(3, 0.5, 10);
    let arch = tiny_arch(6, 4);
    let avg = Simulation::new(tiny_protocol(Scheme::FedAvg, arch, 2, 3, 0), clients.clone(), test.clone())
        .unwrap()
        .run()
        .unwrap();
    let mut prox_cfg = tiny_protocol(Scheme::FedProx, arch, 2, 3, 0);
    prox_cfg.mu_prox = 0.0;
    let mut prox_sim = Simulation::new(prox_cfg, clients.clone(), test.clone()).unwrap();
    let prox = prox_sim.run().unwrap();
    let mut avg_sim = Simulation::new(tiny_protocol(Scheme::FedAvg, arch, 2, 3, 0), clients.clone(), test.clone()).unwrap();
    avg_sim.run().unwrap();
    assert_eq!(prox_sim.server().encoder, avg_sim.server().encoder);
    assert_eq!(prox_sim.server().classifier, avg_sim.server().classifier);
    for (a, p) in avg.rounds.iter().zip(&prox.rounds) {
        assert_eq!(a.test_accuracy, p.test_accuracy);
        assert_eq!(a.client_losses, p.client_losses);
    }
    // a positive proximal weight changes the trajectory
    let mut sim = Simulation::new(tiny_protocol(Scheme::FedProx, arch, 2, 3, 0), clients, test).unwrap();
    sim.run().unwrap();
    assert_ne!(sim.server().encoder, avg_sim.server().encoder);
}

#[test]
fn runs_are_deterministic() {
    let (clients, test) = tiny_federation(4, 0.5, 12);
    let cfg = tiny_protocol(Scheme::FedDpms, tiny_arch(6, 4), 3, 5, 2);
    let a = Simulation::new(cfg.clone(), clients.clone(), test.clone()).unwrap().run().unwrap();
    let b = Simulation::new(cfg, clients, test).unwrap().run().unwrap();
    assert_eq!(a, b);
}

#[test]
fn missed_quota_is_a_warning_not_an_abort() {
    let (clients, test) = tiny_federation(3, 0.5, 13);
    let mut cfg = tiny_protocol(Scheme::FedDpms, tiny_arch(6, 4), 3, 4, 2);
    cfg.dpms.noise_std = 50.0;
    cfg.dpms.max_attempts = 1;
    cfg.dpms.alpha = 40;
    let out = Simulation::new(cfg, clients, test).unwrap().run().unwrap();
    assert_eq!(out.rounds.len(), 4);
    assert!(out.audit.partial_quota_events > 0);
    assert!(!out.warnings.is_empty());
    assert!(out.audit.is_clean());
}

#[test]
fn full_participation_downloads_decoder_once_per_client() {
    let (clients, test) = tiny_federation(5, 0.5, 14);
    let cfg = tiny_protocol(Scheme::FedDpms, tiny_arch(6, 4), 5, 6, 2);
    let out = Simulation::new(cfg, clients, test).unwrap().run().unwrap();
    assert_eq!(out.traffic.decoder_download_events, 5);
}

#[test]
fn phases_reject_out_of_order_rounds() {
    let (clients, test) = tiny_federation(2, 0.5, 15);
    let mut sim = Simulation::new(tiny_protocol(Scheme::FedDpms, tiny_arch(6, 4), 2, 4, 2), clients, test).unwrap();
    assert!(sim.sectrain_round(0).is_err());
    assert!(sim.pretrain_round(3).is_err());
}

#[test]
fn rejects_invalid_protocol_settings() {
    let (clients, test) = tiny_federation(2, 0.5, 16);
    let arch = tiny_arch(6, 4);
    let bad = [
        tiny_protocol(Scheme::FedDpms, arch, 3, 4, 2),
        tiny_protocol(Scheme::FedDpms, arch, 2, 4, 5),
        tiny_protocol(Scheme::FedDpms, arch, 2, 4, 0),
        tiny_protocol(Scheme::FedAvg, VaeArch { input_dim: 7, ..arch }, 2, 4, 0),
    ];
    for cfg in bad {
        assert!(Simulation::new(cfg, clients.clone(), test.clone()).is_err());
    }
    assert!(Simulation::new(tiny_protocol(Scheme::FedAvg, arch, 2, 4, 0), clients, Dataset::empty(6, 4)).is_err());
}

#[test]
fn chance_level_for_a_random_classifier() {
    let arch = VaeArch::new(8, 4, 10).unwrap();
    let mut rng = stream(3, Purpose::ModelInit, &[]);
    let enc = arch.init_encoder(&mut rng);
    let clf = arch.init_classifier(&mut rng);
    let mut data_rng = ChaCha8Rng::seed_from_u64(4);
    let features: Vec<f64> = (0..5000 * 8).map(|_| data_rng.random_range(0.0..1.0)).collect();
    let labels: Vec<usize> = (0..5000).map(|_| data_rng.random_range(0..10)).collect();
    let test = Dataset::new(8, 10, features.clone(), labels).unwrap();
    let acc = evaluate(&enc, &clf, &test).unwrap();
    assert!((acc - 0.1).abs() < 0.02, "{acc}");
    assert_eq!(acc, evaluate(&enc, &clf, &test).unwrap());
    // labels equal to the model's own predictions are recovered perfectly
    let x = Tensor::matrix(5000, 8, features.clone()).unwrap();
    let own = predict(&enc, &clf, &x).unwrap();
    let memorised = Dataset::new(8, 10, features, own).unwrap();
    assert_eq!(evaluate(&enc, &clf, &memorised).unwrap(), 1.0);
    assert!(evaluate(&enc, &clf, &Dataset::empty(8, 10)).is_err());
}
