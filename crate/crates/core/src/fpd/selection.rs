//! Reliable client selection.
//!
//! Each client gets a Beta posterior over "uploads a benign update" built
//! from whichever of its overall or recent record looks worse. A selection
//! probability is drawn from that posterior, then an independent coin with
//! that probability decides participation.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::record::ClientRecord;
use crate::rng;
use crate::vecmath::ClientId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    pub alpha: f64,
    pub beta: f64,
    /// Every client participates while `t <= bootstrap_rounds`.
    pub bootstrap_rounds: usize,
    /// Lower bound on the selected set size.
    pub min_selected: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            alpha: 1.0,
            beta: 1.0,
            bootstrap_rounds: 10,
            min_selected: 4,
        }
    }
}

/// Parameters `(a, b)` of the Beta posterior used for `record`.
///
/// The overall branch is used when the smoothed overall benign ratio is
/// strictly below the recent one, the recent branch otherwise.
pub fn active_beta(record: &ClientRecord, alpha: f64, beta: f64) -> (f64, f64) {
    let (bo, mo) = (
        f64::from(record.overall_benign),
        f64::from(record.overall_malicious),
    );
    let (br, mr) = (
        f64::from(record.recent_benign()),
        f64::from(record.recent_malicious()),
    );
    let overall_ratio = (bo + alpha) / (bo + mo + alpha + beta);
    let recent_ratio = (br + alpha) / (br + mr + alpha + beta);
    if overall_ratio < recent_ratio {
        (alpha + bo, beta + mo)
    } else {
        (alpha + br, beta + mr)
    }
}

pub fn beta_mean(record: &ClientRecord, alpha: f64, beta: f64) -> f64 {
    let (a, b) = active_beta(record, alpha, beta);
    a / (a + b)
}

/// Selects the clients participating in round `t` (1-based).
pub fn select_clients(
    records: &BTreeMap<ClientId, ClientRecord>,
    t: usize,
    params: &SelectionParams,
    seed: u64,
) -> BTreeSet<ClientId> {
    if t <= params.bootstrap_rounds {
        return records.keys().copied().collect();
    }
    let mut rng = rng::stream(seed, &[0x5E1E, t as u64]);
    let mut selected = BTreeSet::new();
    for (id, record) in records {
        let (a, b) = active_beta(record, params.alpha, params.beta);
        let p: f64 = Beta::new(a, b)
            .expect("alpha and beta are positive")
            .sample(&mut rng);
        if rng.random::<f64>() < p {
            selected.insert(*id);
        }
    }
    if selected.len() < params.min_selected {
        let mut rest: Vec<(f64, ClientId)> = records
            .iter()
            .filter(|(id, _)| !selected.contains(id))
            .map(|(id, r)| (beta_mean(r, params.alpha, params.beta), *id))
            .collect();
        rest.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let missing = params.min_selected - selected.len();
        selected.extend(rest.into_iter().take(missing).map(|(_, id)| id));
    }
    selected
}
