//! Reference aggregation rules: FedAvg, Krum, FABA and coordinate-wise median.
//!
//! Krum and FABA are handed the true number of attackers `f`.

use crate::error::{FpdError, Result};
use crate::fl::LocalUpdate;
use crate::vecmath::{self, check_dims, ParamVector};

/// `Σ (n_k / n) g_k` with the sizes the clients reported.
pub fn fedavg(updates: &[LocalUpdate]) -> Result<ParamVector> {
    let first = updates.first().ok_or(FpdError::EmptyAggregation)?;
    let total: usize = updates.iter().map(|u| u.claimed_size).sum();
    if total == 0 {
        return Err(FpdError::EmptyAggregation);
    }
    let dim = first.delta.dim();
    let mut acc = vec![0.0; dim];
    for u in updates {
        check_dims(dim, u.delta.dim())?;
        let w = u.claimed_size as f64 / total as f64;
        for (a, g) in acc.iter_mut().zip(u.delta.as_slice()) {
            *a += w * g;
        }
    }
    ParamVector::new(acc)
}

fn pairwise_sq_distances(updates: &[ParamVector]) -> Result<Vec<Vec<f64>>> {
    let n = updates.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = updates[i].squared_distance(&updates[j])?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

/// Index chosen by Krum: the update with the smallest sum of squared
/// distances to its `n - f - 2` nearest neighbours.
pub fn krum_index(updates: &[ParamVector], f: usize) -> Result<usize> {
    let n = updates.len();
    if n < f + 3 {
        return Err(FpdError::config("f", format!("krum needs n >= f + 3 (n={n}, f={f})")));
    }
    let d = pairwise_sq_distances(updates)?;
    let neighbours = n - f - 2;
    let mut best = (f64::INFINITY, 0);
    for (i, row) in d.iter().enumerate() {
        let mut others: Vec<f64> = row
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| *v)
            .collect();
        others.sort_by(f64::total_cmp);
        let score: f64 = others[..neighbours].iter().sum();
        if score < best.0 {
            best = (score, i);
        }
    }
    Ok(best.1)
}

pub fn krum(updates: &[ParamVector], f: usize) -> Result<ParamVector> {
    Ok(updates[krum_index(updates, f)?].clone())
}

/// Removes, `f` times, the update farthest from the mean of those
/// remaining, then averages the survivors.
pub fn faba(updates: &[ParamVector], f: usize) -> Result<ParamVector> {
    let n = updates.len();
    if n <= f {
        return Err(FpdError::config("f", format!("faba needs n > f (n={n}, f={f})")));
    }
    let mut remaining: Vec<&ParamVector> = updates.iter().collect();
    for _ in 0..f {
        let mu = vecmath::mean(&remaining)?;
        let mut worst = (f64::NEG_INFINITY, 0);
        for (i, u) in remaining.iter().enumerate() {
            let dist = u.squared_distance(&mu)?;
            if dist > worst.0 {
                worst = (dist, i);
            }
        }
        remaining.remove(worst.1);
    }
    vecmath::mean(&remaining)
}

pub fn median(updates: &[ParamVector]) -> Result<ParamVector> {
    vecmath::coordinate_median(updates)
}
