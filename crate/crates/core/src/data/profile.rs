use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A client's `n` scarcest classes (ascending by count) and `n` most
/// abundant classes (descending by count). Ties go to the lower class index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub scarce: Vec<usize>,
    pub abundant: Vec<usize>,
    /// Fewer than `2n` classes are represented, so the two lists can overlap
    /// or include empty classes.
    pub degenerate: bool,
}

pub fn class_profile(counts: &[usize], n: usize) -> Result<ClassProfile> {
    if n > counts.len() {
        return Err(Error::InvalidArgument(format!(
            "n = {n} exceeds class count {}",
            counts.len()
        )));
    }
    let mut ascending: Vec<usize> = (0..counts.len()).collect();
    ascending.sort_by_key(|&c| (counts[c], c));
    let mut descending: Vec<usize> = (0..counts.len()).collect();
    descending.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let represented = counts.iter().filter(|&&c| c > 0).count();
    Ok(ClassProfile {
        scarce: ascending[..n].to_vec(),
        abundant: descending[..n].to_vec(),
        degenerate: represented < 2 * n,
    })
}

/// Each client reports how many of its classes are decidedly less abundant
/// than the rest (fewer than half the client's mean per-class count); the
/// agreed `n` is the minimum report, clamped to `[1, classes / 2]`.
pub fn negotiate_n(client_counts: &[Vec<usize>]) -> usize {
    let classes = client_counts.first().map_or(2, |c| c.len());
    let upper = (classes / 2).max(1);
    client_counts
        .iter()
        .filter(|c| c.iter().sum::<usize>() > 0)
        .map(|counts| {
            let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
            counts.iter().filter(|&&c| (c as f64) < 0.5 * mean).count()
        })
        .min()
        .unwrap_or(upper)
        .clamp(1, upper)
}
