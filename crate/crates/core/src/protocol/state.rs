use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LatentMeanRecord;
use crate::data::Dataset;
use crate::nn::ModelParams;

pub(crate) fn params_hash(p: &ModelParams) -> String {
    let mut h = Sha256::new();
    for v in p.values() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub encoder: ModelParams,
    pub classifier: ModelParams,
    /// `w_d`, fixed once created.
    pub decoder: Option<ModelParams>,
    decoder_hash: Option<String>,
    /// `A` in the order clients joined it.
    pub shared: Vec<usize>,
    /// `B`
    pub benefited: BTreeSet<usize>,
    /// `C`
    pub abundance: BTreeMap<usize, Vec<usize>>,
    /// `Z`
    pub bank: BTreeMap<usize, Vec<LatentMeanRecord>>,
    pub round: usize,
}

impl ServerState {
    pub fn new(encoder: ModelParams, classifier: ModelParams) -> Self {
        Self {
            encoder,
            classifier,
            decoder: None,
            decoder_hash: None,
            shared: Vec::new(),
            benefited: BTreeSet::new(),
            abundance: BTreeMap::new(),
            bank: BTreeMap::new(),
            round: 0,
        }
    }

    pub(crate) fn install_decoder(&mut self, decoder: ModelParams) {
        assert!(self.decoder.is_none(), "global decoder is created once");
        self.decoder_hash = Some(params_hash(&decoder));
        self.decoder = Some(decoder);
    }

    pub fn decoder_hash(&self) -> Option<&str> {
        self.decoder_hash.as_deref()
    }

    pub fn has_shared(&self, client: usize) -> bool {
        self.abundance.contains_key(&client)
    }

    pub(crate) fn record_share(&mut self, client: usize, abundant: Vec<usize>, records: Vec<LatentMeanRecord>) {
        self.shared.push(client);
        self.abundance.insert(client, abundant);
        self.bank.insert(client, records);
    }

    /// Set discipline and decoder immutability; returns violations.
    pub fn check_invariants(&self, clients: usize, max_records: usize) -> Vec<String> {
        let mut v = Vec::new();
        let a: BTreeSet<usize> = self.shared.iter().copied().collect();
        if a.len() != self.shared.len() {
            v.push(format!("round {}: duplicate entries in A {:?}", self.round, self.shared));
        }
        let c: BTreeSet<usize> = self.abundance.keys().copied().collect();
        let z: BTreeSet<usize> = self.bank.keys().copied().collect();
        if a != c || a != z {
            v.push(format!("round {}: keys(C) {c:?}, keys(Z) {z:?}, A {a:?} differ", self.round));
        }
        if let Some(&b) = self.benefited.iter().find(|&&b| b >= clients) {
            v.push(format!("round {}: unknown client {b} in B", self.round));
        }
        for (i, recs) in &self.bank {
            if recs.len() > max_records {
                v.push(format!("round {}: client {i} shared {} records", self.round, recs.len()));
            }
            if recs.iter().any(|r| r.origin != *i) {
                v.push(format!("round {}: bank of client {i} holds foreign records", self.round));
            }
        }
        match (&self.decoder, &self.decoder_hash) {
            (Some(d), Some(h)) if params_hash(d) != *h => {
                v.push(format!("round {}: global decoder changed", self.round))
            }
            (Some(_), None) | (None, Some(_)) => {
                v.push(format!("round {}: decoder hash out of sync", self.round))
            }
            _ => {}
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    /// `D_i`, real data only.
    pub data: Dataset,
    /// `D̄_i`: `D_i` plus any synthetic samples.
    pub augmented: Dataset,
    pub encoder: Option<ModelParams>,
    pub classifier: Option<ModelParams>,
    /// Local decoder during preliminary training.
    pub decoder: Option<ModelParams>,
    /// Holds a copy of the global decoder right now.
    pub holds_global_decoder: bool,
    /// Has ever downloaded the global decoder.
    pub downloaded_decoder: bool,
}

impl ClientState {
    pub fn new(id: usize, data: Dataset) -> Self {
        Self {
            id,
            augmented: data.clone(),
            data,
            encoder: None,
            classifier: None,
            decoder: None,
            holds_global_decoder: false,
            downloaded_decoder: false,
        }
    }
}

/// Per-run bookkeeping for the one-shot sharing guarantees.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub dpms_runs: Vec<usize>,
    pub synth_runs: Vec<usize>,
    pub violations: Vec<String>,
    pub zero_overlap_matches: usize,
    pub partial_quota_events: usize,
}

impl Audit {
    pub fn new(clients: usize) -> Self {
        Self {
            dpms_runs: vec![0; clients],
            synth_runs: vec![0; clients],
            ..Self::default()
        }
    }

    pub fn one_shot_holds(&self) -> bool {
        self.dpms_runs.iter().all(|&c| c <= 1) && self.synth_runs.iter().all(|&c| c <= 1)
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.one_shot_holds()
    }
}
