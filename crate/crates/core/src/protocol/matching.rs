//! Pairing benefiting clients with assisting clients.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// `R`: benefiting client → assisting client.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: BTreeMap<usize, usize>,
    /// Clients whose best candidate shares none of their scarce classes.
    pub zero_overlap: Vec<usize>,
}

impl Matching {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, client: usize) -> Option<usize> {
        self.pairs.get(&client).copied()
    }
}

fn overlap(scarce: &[usize], abundant: &[usize]) -> usize {
    scarce.iter().filter(|c| abundant.contains(c)).count()
}

/// For every requesting client `i` with scarce set `H_i`, pick
/// `argmax_{j ∈ A, j ≠ i} |H_i ∩ C_j|`, ties to the lowest `j`. The abundance
/// map's keys are `A`. A client with no candidate other than itself is left
/// unmatched.
pub fn match_clients(
    requests: &BTreeMap<usize, Vec<usize>>,
    abundance: &BTreeMap<usize, Vec<usize>>,
) -> Matching {
    let mut out = Matching::default();
    if abundance.is_empty() {
        return out;
    }
    for (&i, scarce) in requests {
        let mut best: Option<(usize, usize)> = None;
        for (&j, abundant) in abundance {
            if j == i {
                continue;
            }
            let o = overlap(scarce, abundant);
            // strict comparison keeps the lowest id among equals
            if best.is_none_or(|(_, b)| o > b) {
                best = Some((j, o));
            }
        }
        if let Some((j, o)) = best {
            if o == 0 {
                log::debug!("client {i} matched to {j} with zero class overlap");
                out.zero_overlap.push(i);
            }
            out.pairs.insert(i, j);
        }
    }
    out
}
