//! Colluding-attack filter: rejects every update that is nearly parallel to
//! some other update of the round.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::Result;
use crate::vecmath::{cosine, ClientId, ParamVector};

pub const DEFAULT_GAMMA: f64 = 0.8;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColludingOutcome {
    /// Number of *other* clients whose update has cosine above the threshold.
    pub scores: BTreeMap<ClientId, usize>,
    /// Clients with a positive score, plus zero-norm uploads.
    pub removed: BTreeSet<ClientId>,
    /// Zero-norm uploads; these get no score.
    pub degenerate: BTreeSet<ClientId>,
}

/// Colluding score of each client. Self-similarity is not counted.
pub fn colluding_scores(updates: &BTreeMap<ClientId, ParamVector>, gamma: f64) -> Result<ColludingOutcome> {
    let mut out = ColludingOutcome::default();
    let mut live: Vec<(ClientId, &ParamVector)> = Vec::with_capacity(updates.len());
    for (id, g) in updates {
        if g.norm() == 0.0 {
            out.degenerate.insert(*id);
            out.removed.insert(*id);
        } else {
            live.push((*id, g));
        }
    }
    let mut scores = vec![0usize; live.len()];
    for i in 0..live.len() {
        for j in i + 1..live.len() {
            if cosine(live[i].1, live[j].1)? > gamma {
                scores[i] += 1;
                scores[j] += 1;
            }
        }
    }
    for ((id, _), score) in live.iter().zip(scores) {
        out.scores.insert(*id, score);
        if score > 0 {
            out.removed.insert(*id);
        }
    }
    Ok(out)
}
