use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::state::params_hash;
use super::{
    dpms, match_clients, synthesize, Audit, ClientState, DpmsOutput, ProtocolConfig, Scheme,
    ServerState, Traffic,
};
use crate::data::{class_profile, merge_synthetic, sample_round_subset, Dataset};
use crate::nn::{ModelParams, OptimState, Tensor};
use crate::rng::{stream, Purpose};
use crate::vae::{
    predict, preliminary_loss_and_grads, secondary_loss_and_grads, standard_normal, VaeModel,
};
use crate::{Error, Result};

/// One row of the per-round metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub scheme: Scheme,
    pub test_accuracy: f64,
    /// Mean training loss of each client that trained, ascending by id.
    pub client_losses: Vec<(usize, f64)>,
    pub shared_clients: usize,
    pub benefited_clients: usize,
    /// Scalars sent to the server this round.
    pub uploaded: u64,
    /// Scalars sent to clients this round.
    pub downloaded: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpmsEvent {
    pub round: usize,
    pub client: usize,
    /// `(class, m)` for every class whose mean was released.
    pub classes: Vec<(usize, usize)>,
    pub accepted: usize,
    pub attempts: usize,
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub scheme: Scheme,
    pub rounds: Vec<RoundRecord>,
    pub traffic: Traffic,
    pub audit: Audit,
    pub dpms_events: Vec<DpmsEvent>,
    pub warnings: Vec<String>,
    pub decoder_hash: Option<String>,
}

impl RunOutcome {
    pub fn final_accuracy(&self) -> f64 {
        self.rounds.last().map_or(f64::NAN, |r| r.test_accuracy)
    }

    pub fn best_accuracy(&self) -> f64 {
        self.rounds
            .iter()
            .map(|r| r.test_accuracy)
            .fold(f64::NAN, f64::max)
    }
}

/// Size-weighted average of uploads, applied in ascending client order.
/// `Ok(None)` when every weight is zero.
pub fn aggregate(uploads: &[(usize, &ModelParams, f64)]) -> Result<Option<ModelParams>> {
    let mut sorted: Vec<_> = uploads.iter().filter(|u| u.2 > 0.0).collect();
    if sorted.is_empty() {
        return Ok(None);
    }
    sorted.sort_by_key(|u| u.0);
    let items: Vec<(&ModelParams, f64)> = sorted.iter().map(|u| (u.1, u.2)).collect();
    ModelParams::weighted_average(&items).map(Some)
}

/// Fraction of test samples whose argmax prediction matches the label.
pub fn evaluate(enc: &ModelParams, clf: &ModelParams, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyDataset("test set"));
    }
    let mut correct = 0usize;
    let all: Vec<usize> = (0..test.len()).collect();
    for chunk in all.chunks(1024) {
        let (x, y) = test.batch(chunk)?;
        let pred = predict(enc, clf, &x)?;
        correct += pred.iter().zip(&y).filter(|(p, t)| p == t).count();
    }
    Ok(correct as f64 / test.len() as f64)
}

enum Objective<'a> {
    Preliminary { decoder: &'a mut ModelParams },
    /// Cross-entropy only. `sample` draws the latent code; otherwise the
    /// classifier sees the encoder mean, as at inference.
    Secondary {
        sample: bool,
        anchor: Option<(&'a ModelParams, &'a ModelParams)>,
    },
}

struct Session<'a> {
    cfg: &'a ProtocolConfig,
    client: usize,
    round: usize,
}

impl Session<'_> {
    /// Local epochs over `indices` of `data`; returns the mean batch loss.
    fn train(
        &self,
        data: &Dataset,
        mut indices: Vec<usize>,
        enc: &mut ModelParams,
        clf: &mut ModelParams,
        mut objective: Objective<'_>,
    ) -> Result<Option<f64>> {
        if indices.is_empty() {
            return Ok(None);
        }
        let cfg = self.cfg;
        let mut rng = stream(cfg.seed, Purpose::LocalTraining, &[self.client as u64, self.round as u64]);
        let sched = self.round as u64;
        let mut opt_e = OptimState::new(cfg.adam, enc).with_schedule_step(sched);
        let mut opt_c = OptimState::new(cfg.adam, clf).with_schedule_step(sched);
        let mut opt_d = match &objective {
            Objective::Preliminary { decoder } => {
                Some(OptimState::new(cfg.adam, decoder).with_schedule_step(sched))
            }
            Objective::Secondary { .. } => None,
        };
        let l = cfg.arch.latent_dim;
        let max_steps = cfg.max_local_steps.unwrap_or(usize::MAX);
        let (mut steps, mut loss_sum) = (0usize, 0.0);
        'epochs: for _ in 0..cfg.local_epochs {
            indices.shuffle(&mut rng);
            for chunk in indices.chunks(cfg.batch_size) {
                if steps >= max_steps {
                    break 'epochs;
                }
                let (x, y) = data.batch(chunk)?;
                let eps = match objective {
                    Objective::Secondary { sample: false, .. } => Tensor::zeros(&[chunk.len(), l]),
                    _ => standard_normal(&mut rng, chunk.len(), l),
                };
                match &mut objective {
                    Objective::Preliminary { decoder } => {
                        let model = VaeModel {
                            encoder: std::mem::replace(enc, ModelParams::new(vec![])),
                            classifier: std::mem::replace(clf, ModelParams::new(vec![])),
                            decoder: std::mem::replace(*decoder, ModelParams::new(vec![])),
                        };
                        let res = preliminary_loss_and_grads(&model, &x, &y, cfg.lambda, &eps);
                        *enc = model.encoder;
                        *clf = model.classifier;
                        **decoder = model.decoder;
                        let (loss, grads) = res?;
                        opt_e.step(enc, &grads.encoder)?;
                        opt_c.step(clf, &grads.classifier)?;
                        let dg = grads.decoder.expect("preliminary loss has a decoder term");
                        opt_d.as_mut().expect("decoder optimizer").step(decoder, &dg)?;
                        loss_sum += loss.total;
                    }
                    Objective::Secondary { anchor, .. } => {
                        let (loss, mut grads) = secondary_loss_and_grads(enc, clf, &x, &y, &eps)?;
                        if let Some((ge, gc)) = anchor {
                            // ∇ (μ/2)‖w − w_g‖² = μ (w − w_g)
                            let mu = cfg.mu_prox;
                            grads.encoder.add_scaled(mu, enc)?;
                            grads.encoder.add_scaled(-mu, ge)?;
                            grads.classifier.add_scaled(mu, clf)?;
                            grads.classifier.add_scaled(-mu, gc)?;
                        }
                        opt_e.step(enc, &grads.encoder)?;
                        opt_c.step(clf, &grads.classifier)?;
                        loss_sum += loss;
                    }
                }
                steps += 1;
            }
        }
        if steps == 0 {
            return Ok(None);
        }
        Ok(Some(loss_sum / steps as f64))
    }
}

/// Owns server and client state for one run.
#[derive(Debug)]
pub struct Simulation {
    cfg: ProtocolConfig,
    server: ServerState,
    clients: Vec<ClientState>,
    test: Dataset,
    traffic: Traffic,
    audit: Audit,
    records: Vec<RoundRecord>,
    dpms_events: Vec<DpmsEvent>,
    warnings: Vec<String>,
    round: usize,
}

impl Simulation {
    pub fn new(cfg: ProtocolConfig, client_data: Vec<Dataset>, test: Dataset) -> Result<Self> {
        cfg.validate(client_data.len())?;
        let arch = cfg.arch.validated()?;
        for d in client_data.iter().chain(std::iter::once(&test)) {
            if d.dim() != arch.input_dim || d.classes() != arch.classes {
                return Err(Error::Config(format!(
                    "dataset shape (dim {}, classes {}) does not match the model (dim {}, classes {})",
                    d.dim(),
                    d.classes(),
                    arch.input_dim,
                    arch.classes
                )));
            }
        }
        if test.is_empty() {
            return Err(Error::EmptyDataset("test set"));
        }
        let mut init = stream(cfg.seed, Purpose::ModelInit, &[]);
        let encoder = arch.init_encoder(&mut init);
        let classifier = arch.init_classifier(&mut init);
        let common_decoder = arch.init_decoder(&mut stream(cfg.seed, Purpose::DecoderInit, &[]));
        let clients = client_data
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                let mut c = ClientState::new(i, d);
                if cfg.scheme == Scheme::FedDpms {
                    c.decoder = Some(common_decoder.clone());
                }
                c
            })
            .collect::<Vec<_>>();
        let audit = Audit::new(clients.len());
        Ok(Self {
            server: ServerState::new(encoder, classifier),
            clients,
            test,
            traffic: Traffic::default(),
            audit,
            records: Vec::new(),
            dpms_events: Vec::new(),
            warnings: Vec::new(),
            round: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn traffic(&self) -> &Traffic {
        &self.traffic
    }

    pub fn audit(&self) -> &Audit {
        &self.audit
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn is_finished(&self) -> bool {
        self.round >= self.cfg.rounds
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    /// `S_t`: `k` distinct clients, ascending.
    pub fn select(&self, t: usize) -> Vec<usize> {
        let mut rng = stream(self.cfg.seed, Purpose::Selection, &[t as u64]);
        let mut s = index::sample(&mut rng, self.clients.len(), self.cfg.per_round).into_vec();
        s.sort_unstable();
        s
    }

    fn theta(&self) -> u64 {
        (self.server.encoder.scalar_count() + self.server.classifier.scalar_count()) as u64
    }

    /// Run the next round, whichever phase it belongs to.
    pub fn step(&mut self) -> Result<RoundRecord> {
        if self.is_finished() {
            return Err(Error::InvalidArgument("run already finished".into()));
        }
        let t = self.round;
        let before = self.traffic;
        let losses = match self.cfg.scheme {
            Scheme::FedDpms if t < self.cfg.prelim_rounds => self.pretrain_round(t)?,
            Scheme::FedDpms => self.sectrain_round(t)?,
            Scheme::FedAvg | Scheme::FedProx => self.baseline_round(t)?,
        };
        self.server.round = t + 1;
        let max_records = self.cfg.n * self.cfg.dpms.alpha;
        let violations = self.server.check_invariants(self.clients.len(), max_records);
        self.audit.violations.extend(violations);
        if !self.audit.one_shot_holds() {
            self.audit
                .violations
                .push(format!("round {t}: a client shared or augmented twice"));
        }
        let delta = self.traffic.since(&before);
        let record = RoundRecord {
            round: t,
            scheme: self.cfg.scheme,
            test_accuracy: evaluate(&self.server.encoder, &self.server.classifier, &self.test)?,
            client_losses: losses,
            shared_clients: self.server.shared.len(),
            benefited_clients: self.server.benefited.len(),
            uploaded: delta.uploaded(),
            downloaded: delta.downloaded(),
        };
        log::info!(
            "round {t} [{}] acc {:.4} |A| {} |B| {}",
            self.cfg.scheme,
            record.test_accuracy,
            record.shared_clients,
            record.benefited_clients
        );
        self.records.push(record.clone());
        self.round += 1;
        Ok(record)
    }

    /// Run all remaining rounds.
    pub fn run(&mut self) -> Result<RunOutcome> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(self.outcome())
    }

    pub fn outcome(&self) -> RunOutcome {
        RunOutcome {
            scheme: self.cfg.scheme,
            rounds: self.records.clone(),
            traffic: self.traffic,
            audit: self.audit.clone(),
            dpms_events: self.dpms_events.clone(),
            warnings: self.warnings.clone(),
            decoder_hash: self.server.decoder_hash().map(str::to_owned),
        }
    }

    fn install_global(&mut self, enc: Option<ModelParams>, clf: Option<ModelParams>) {
        if let (Some(e), Some(c)) = (enc, clf) {
            self.server.encoder = e;
            self.server.classifier = c;
        }
    }

    /// Preliminary round: full VAE objective, decoders stay local until the
    /// last preliminary round, when they are uploaded and averaged into the
    /// global decoder.
    pub fn pretrain_round(&mut self, t: usize) -> Result<Vec<(usize, f64)>> {
        if t >= self.cfg.prelim_rounds || self.cfg.scheme != Scheme::FedDpms {
            return Err(Error::InvalidArgument(format!("round {t} is not a preliminary round")));
        }
        let selected = self.select(t);
        let last = t + 1 == self.cfg.prelim_rounds;
        let theta = self.theta();
        let dec_scalars = self.cfg.arch.decoder_scalars() as u64;
        let mut uploads = Vec::new();
        let mut losses = Vec::new();
        for &i in &selected {
            self.traffic.model_download += theta;
            let client = &mut self.clients[i];
            let mut enc = self.server.encoder.clone();
            let mut clf = self.server.classifier.clone();
            let mut dec = client
                .decoder
                .take()
                .ok_or_else(|| Error::InvalidArgument(format!("client {i} has no local decoder")))?;
            let session = Session {
                cfg: &self.cfg,
                client: i,
                round: t,
            };
            let all: Vec<usize> = (0..client.data.len()).collect();
            let loss = session.train(
                &client.data,
                all,
                &mut enc,
                &mut clf,
                Objective::Preliminary { decoder: &mut dec },
            )?;
            let weight = client.data.len() as f64;
            client.decoder = Some(dec);
            if let Some(loss) = loss {
                losses.push((i, loss));
                self.traffic.model_upload += theta;
                if last {
                    self.traffic.decoder_upload += dec_scalars;
                }
                uploads.push((i, enc, clf, weight));
            }
        }
        let enc = aggregate(&uploads.iter().map(|u| (u.0, &u.1, u.3)).collect::<Vec<_>>())?;
        let clf = aggregate(&uploads.iter().map(|u| (u.0, &u.2, u.3)).collect::<Vec<_>>())?;
        self.install_global(enc, clf);
        if last {
            let decs: Vec<(usize, &ModelParams, f64)> = uploads
                .iter()
                .map(|u| {
                    let d = self.clients[u.0].decoder.as_ref().expect("kept above");
                    (u.0, d, u.3)
                })
                .collect();
            let wd = match aggregate(&decs)? {
                Some(d) => d,
                None => {
                    let msg = format!("round {t}: no decoder uploads, global decoder left at its initial value");
                    let d = self.clients[selected[0]].decoder.clone().expect("local decoder");
                    self.warn(msg);
                    d
                }
            };
            self.server.install_decoder(wd);
            for c in &mut self.clients {
                c.decoder = None;
            }
        }
        Ok(losses)
    }

    fn ensure_global_decoder(&mut self, i: usize) {
        let c = &mut self.clients[i];
        if c.holds_global_decoder {
            return;
        }
        if c.downloaded_decoder {
            // Dropped after it was no longer needed; never fetched again.
            log::debug!("client {i} asked for the global decoder after dropping it");
        }
        c.holds_global_decoder = true;
        if !c.downloaded_decoder {
            c.downloaded_decoder = true;
            self.traffic.decoder_download += self.cfg.arch.decoder_scalars() as u64;
            self.traffic.decoder_download_events += 1;
        }
    }

    /// Secondary round: match, augment, train, share, aggregate.
    pub fn sectrain_round(&mut self, t: usize) -> Result<Vec<(usize, f64)>> {
        let cfg = self.cfg.clone();
        if cfg.scheme != Scheme::FedDpms || t < cfg.prelim_rounds {
            return Err(Error::InvalidArgument(format!("round {t} is not a secondary round")));
        }
        let wd = self
            .server
            .decoder
            .clone()
            .ok_or_else(|| Error::InvalidArgument("secondary round before the global decoder exists".into()))?;
        let selected = self.select(t);
        let l = cfg.arch.latent_dim as u64;
        let classes = cfg.arch.classes;

        // (1) matching for selected clients that have not benefited yet
        let mut requests = BTreeMap::new();
        for &i in &selected {
            if !self.server.benefited.contains(&i) {
                let counts = self.clients[i].data.real_class_counts();
                requests.insert(i, class_profile(&counts, cfg.n)?.scarce);
            }
        }
        let matching = match_clients(&requests, &self.server.abundance);
        self.audit.zero_overlap_matches += matching.zero_overlap.len();

        // (2) augmentation
        for (&i, &j) in &matching.pairs {
            self.ensure_global_decoder(i);
            let records = self.server.bank.get(&j).cloned().unwrap_or_default();
            self.traffic.latent_download += records.len() as u64 * l;
            self.server.benefited.insert(i);
            if records.is_empty() {
                self.warn(format!("round {t}: client {i} matched to {j}, which shared nothing"));
                continue;
            }
            let synth = synthesize(&wd, &records, classes)?;
            let client = &mut self.clients[i];
            client.augmented = merge_synthetic(&client.augmented, &synth)?;
            self.audit.synth_runs[i] += 1;
        }

        // (3) local training on a |D_i|-sized subsample of D̄_i
        let theta = self.theta();
        let mut uploads = Vec::new();
        let mut losses = Vec::new();
        for &i in &selected {
            self.traffic.model_download += theta;
            let client = &mut self.clients[i];
            let mut enc = self.server.encoder.clone();
            let mut clf = self.server.classifier.clone();
            let mut sub_rng = stream(cfg.seed, Purpose::Subsample, &[i as u64, t as u64]);
            let idx = sample_round_subset(&client.augmented, client.data.len(), &mut sub_rng)?;
            let session = Session {
                cfg: &cfg,
                client: i,
                round: t,
            };
            let loss = session.train(
                &client.augmented,
                idx,
                &mut enc,
                &mut clf,
                Objective::Secondary {
                    sample: true,
                    anchor: None,
                },
            )?;
            if let Some(loss) = loss {
                losses.push((i, loss));
                self.traffic.model_upload += theta;
                uploads.push((i, enc.clone(), clf.clone(), client.augmented.len() as f64));
                client.encoder = Some(enc);
                client.classifier = Some(clf);
            }
        }

        // (4) one-time sharing by clients not yet in A
        for &i in &selected {
            if self.server.has_shared(i) {
                continue;
            }
            if self.clients[i].data.is_empty() {
                continue;
            }
            self.ensure_global_decoder(i);
            let client = &self.clients[i];
            let (Some(enc), Some(clf)) = (&client.encoder, &client.classifier) else {
                continue;
            };
            let abundant = class_profile(&client.data.real_class_counts(), cfg.n)?.abundant;
            let mut rng = stream(cfg.seed, Purpose::Dpms, &[i as u64]);
            let (out, partial): (DpmsOutput, bool) =
                match dpms(i, &client.data, enc, clf, &wd, &abundant, &cfg.dpms, &mut rng) {
                    Ok(out) => (out, false),
                    Err(Error::PartialQuota {
                        class,
                        accepted,
                        required,
                        attempts,
                        partial,
                    }) => {
                        self.audit.partial_quota_events += 1;
                        self.warn(format!(
                            "round {t}: client {i} class {class}: {accepted}/{required} noisy means accepted after {attempts} attempts"
                        ));
                        (*partial, true)
                    }
                    Err(e) => return Err(e),
                };
            self.audit.dpms_runs[i] += 1;
            self.traffic.latent_upload += out.records.len() as u64 * l;
            self.dpms_events.push(DpmsEvent {
                round: t,
                client: i,
                classes: out.means.iter().map(|m| (m.class, m.m)).collect(),
                accepted: out.records.len(),
                attempts: out.attempts,
                partial,
            });
            self.server.record_share(i, out.abundant, out.records);
        }

        // (5) aggregation weighted by |D̄_i|
        let enc = aggregate(&uploads.iter().map(|u| (u.0, &u.1, u.3)).collect::<Vec<_>>())?;
        let clf = aggregate(&uploads.iter().map(|u| (u.0, &u.2, u.3)).collect::<Vec<_>>())?;
        self.install_global(enc, clf);

        // Memory rule: the decoder is dropped once a client can no longer
        // need it.
        for &i in &selected {
            if self.server.has_shared(i) && self.server.benefited.contains(&i) {
                self.clients[i].holds_global_decoder = false;
            }
            self.clients[i].encoder = None;
            self.clients[i].classifier = None;
        }
        debug_assert_eq!(
            self.server.decoder.as_ref().map(params_hash).as_deref(),
            self.server.decoder_hash()
        );
        Ok(losses)
    }

    /// FedAvg / FedProx round on real data.
    pub fn baseline_round(&mut self, t: usize) -> Result<Vec<(usize, f64)>> {
        let selected = self.select(t);
        let theta = self.theta();
        let prox = self.cfg.scheme == Scheme::FedProx && self.cfg.mu_prox > 0.0;
        let global_e = self.server.encoder.clone();
        let global_c = self.server.classifier.clone();
        let mut uploads = Vec::new();
        let mut losses = Vec::new();
        for &i in &selected {
            self.traffic.model_download += theta;
            let client = &self.clients[i];
            let mut enc = global_e.clone();
            let mut clf = global_c.clone();
            let session = Session {
                cfg: &self.cfg,
                client: i,
                round: t,
            };
            let anchor = prox.then_some((&global_e, &global_c));
            let all: Vec<usize> = (0..client.data.len()).collect();
            let loss = session.train(&client.data, all, &mut enc, &mut clf, Objective::Secondary { sample: false, anchor })?;
            if let Some(loss) = loss {
                losses.push((i, loss));
                self.traffic.model_upload += theta;
                uploads.push((i, enc, clf, client.data.len() as f64));
            }
        }
        let enc = aggregate(&uploads.iter().map(|u| (u.0, &u.1, u.3)).collect::<Vec<_>>())?;
        let clf = aggregate(&uploads.iter().map(|u| (u.0, &u.2, u.3)).collect::<Vec<_>>())?;
        self.install_global(enc, clf);
        Ok(losses)
    }
}
