//! Momentum smoothing and the spectral detector for non-colluding attacks.

use std::collections::{BTreeMap, BTreeSet};

use log::debug;

use super::record::ClientRecord;
use crate::error::{FpdError, Result};
use crate::vecmath::{
    cosine, mean, outlier_scores, top_right_singular_vector, two_means_1d, CenteredMatrix, ClientId,
    ParamVector, TwoMeans,
};

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DELTA_MNIST_LIKE: f64 = -0.1;
pub const DELTA_CIFAR_LIKE: f64 = 0.0;

/// `g + λ^(t - t_k) · m_prev`, or `g` on a client's first accepted round.
pub fn update_momentum(record: &ClientRecord, g: &ParamVector, t: usize, lambda: f64) -> Result<ParamVector> {
    match (&record.momentum, record.last_selected) {
        (Some(prev), Some(tk)) => {
            if t <= tk {
                return Err(FpdError::config("round", format!("round {t} is not after last selection {tk}")));
            }
            let gap = i32::try_from(t - tk).unwrap_or(i32::MAX);
            g.add(&prev.scale(lambda.powi(gap)))
        }
        _ => Ok(g.clone()),
    }
}

#[derive(Debug, Clone, Default)]
pub struct SpectralOutcome {
    pub removed: BTreeSet<ClientId>,
    pub scores: Option<BTreeMap<ClientId, f64>>,
    pub clusters: Option<TwoMeans>,
    /// Cosine of the two cluster means, when both are nonzero.
    pub cluster_cosine: Option<f64>,
}

/// Flags the high-score cluster when its mean direction disagrees with the
/// low-score cluster by at least `delta` in cosine.
///
/// A zero cluster mean has no direction; its cosine is taken as 0.
pub fn spectral_filter(normed: &BTreeMap<ClientId, ParamVector>, delta: f64, seed: u64) -> Result<SpectralOutcome> {
    let mut out = SpectralOutcome::default();
    if normed.len() < 2 {
        debug!("spectral stage skipped: {} survivor(s)", normed.len());
        return Ok(out);
    }
    let entries: Vec<(ClientId, &ParamVector)> = normed.iter().map(|(id, v)| (*id, v)).collect();
    let (g, _) = CenteredMatrix::center(&entries)?;
    let v = match top_right_singular_vector(&g, seed) {
        Ok(sv) => sv.vector,
        Err(FpdError::DegenerateMatrix) => {
            debug!("spectral stage skipped: degenerate update matrix");
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let scores = outlier_scores(&g, &v)?;
    let pairs: Vec<(ClientId, f64)> = scores.iter().map(|(id, s)| (*id, *s)).collect();
    let clusters = two_means_1d(&pairs)?;
    out.scores = Some(scores);
    if clusters.larger.is_empty() || clusters.smaller.is_empty() {
        out.clusters = Some(clusters);
        return Ok(out);
    }
    let cluster_mean = |ids: &BTreeSet<ClientId>| {
        let vs: Vec<&ParamVector> = ids.iter().map(|id| &normed[id]).collect();
        mean(&vs)
    };
    let (ml, ms) = (cluster_mean(&clusters.larger)?, cluster_mean(&clusters.smaller)?);
    let cos = if ml.is_zero() || ms.is_zero() {
        0.0
    } else {
        let c = cosine(&ml, &ms)?;
        out.cluster_cosine = Some(c);
        c
    };
    if cos <= delta {
        out.removed = clusters.larger.clone();
    }
    out.clusters = Some(clusters);
    Ok(out)
}
