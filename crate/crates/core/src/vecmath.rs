//! Flat-vector numerical kernel.
//!
//! Every defense in the crate works on [`ParamVector`]s: flattened model
//! parameters or model updates. This module provides the geometry they
//! need (cosine, normalization), the spectral pieces of the outlier
//! detector (centering, top right singular vector, projection scores), an
//! exact 2-means for scalars and the coordinate-wise median.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{FpdError, Result};
use crate::rng;

/// Client identifier. Ids are dense indices `0..K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClientId(pub usize);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A non-empty vector of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Validates that `values` is non-empty and finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(FpdError::EmptyVector);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(FpdError::NonFinite { index, value });
        }
        Ok(ParamVector(values))
    }

    /// # Panics
    /// Panics if `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "ParamVector dimension must be positive");
        ParamVector(vec![0.0; dim])
    }

    /// Wraps values produced by arithmetic on already-validated vectors.
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        ParamVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot_slices(&self.0, &self.0).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(dot_slices(&self.0, &other.0))
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        check_dims(self.dim(), other.dim())?;
        Ok(ParamVector::from_vec_unchecked(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        check_dims(self.dim(), other.dim())?;
        Ok(ParamVector::from_vec_unchecked(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn scale(&self, factor: f64) -> ParamVector {
        ParamVector::from_vec_unchecked(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn neg(&self) -> ParamVector {
        ParamVector::from_vec_unchecked(self.0.iter().map(|v| -v).collect())
    }

    /// Euclidean distance.
    pub fn distance(&self, other: &ParamVector) -> Result<f64> {
        Ok(self.squared_distance(other)?.sqrt())
    }

    pub fn squared_distance(&self, other: &ParamVector) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(FpdError::DimensionMismatch { expected, found })
    }
}

pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(FpdError::DegenerateVector);
    }
    Ok((dot_slices(&a.0, &b.0) / (na * nb)).clamp(-1.0, 1.0))
}

/// Scales `a` to unit L2 norm.
pub fn normalize(a: &ParamVector) -> Result<ParamVector> {
    let n = a.norm();
    if n == 0.0 {
        return Err(FpdError::DegenerateVector);
    }
    Ok(a.scale(1.0 / n))
}

/// Arithmetic mean of equally sized vectors.
pub fn mean(vectors: &[&ParamVector]) -> Result<ParamVector> {
    let first = vectors.first().ok_or(FpdError::EmptyAggregation)?;
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for v in vectors {
        check_dims(dim, v.dim())?;
        for (a, x) in acc.iter_mut().zip(v.as_slice()) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    Ok(ParamVector::from_vec_unchecked(
        acc.into_iter().map(|a| a / n).collect(),
    ))
}

/// Row matrix whose rows are aligned with client ids. Rows built through
/// [`CenteredMatrix::center`] sum to zero up to rounding.
#[derive(Debug, Clone)]
pub struct CenteredMatrix {
    rows: Vec<ParamVector>,
    row_ids: Vec<ClientId>,
}

impl CenteredMatrix {
    /// Subtracts the mean of `entries` from every entry. Returns the matrix
    /// and the mean that was removed.
    pub fn center(entries: &[(ClientId, &ParamVector)]) -> Result<(Self, ParamVector)> {
        let vectors: Vec<&ParamVector> = entries.iter().map(|(_, v)| *v).collect();
        let mu = mean(&vectors)?;
        let rows = vectors
            .iter()
            .map(|v| v.sub(&mu))
            .collect::<Result<Vec<_>>>()?;
        let row_ids = entries.iter().map(|(id, _)| *id).collect();
        Ok((CenteredMatrix { rows, row_ids }, mu))
    }

    /// Uses `rows` as given, without centering.
    pub fn from_rows(row_ids: Vec<ClientId>, rows: Vec<ParamVector>) -> Result<Self> {
        if rows.is_empty() {
            return Err(FpdError::DegenerateMatrix);
        }
        check_dims(rows.len(), row_ids.len())?;
        let dim = rows[0].dim();
        for r in &rows {
            check_dims(dim, r.dim())?;
        }
        Ok(CenteredMatrix { rows, row_ids })
    }

    pub fn rows(&self) -> &[ParamVector] {
        &self.rows
    }

    pub fn row_ids(&self) -> &[ClientId] {
        &self.row_ids
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, ParamVector::dim)
    }

    /// `x ↦ Gᵀ(G x)`.
    fn gram_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for row in &self.rows {
            let proj = dot_slices(row.as_slice(), x);
            for (o, r) in out.iter_mut().zip(row.as_slice()) {
                *o += proj * r;
            }
        }
        out
    }
}

pub const POWER_ITERATION_TOLERANCE: f64 = 1e-10;
pub const POWER_ITERATION_MAX_ITERS: usize = 500;
const POWER_ITERATION_RESTARTS: u64 = 8;

/// Result of power iteration. `converged == false` means the iteration cap
/// was hit and `vector` is the last iterate.
#[derive(Debug, Clone)]
pub struct SingularVector {
    pub vector: ParamVector,
    pub converged: bool,
    pub iterations: usize,
}

/// Top right singular vector of `g` by power iteration on `x ↦ Gᵀ(Gx)`,
/// started from a seeded Gaussian vector. The sign is fixed so that the
/// largest-magnitude entry is positive.
pub fn top_right_singular_vector(g: &CenteredMatrix, seed: u64) -> Result<SingularVector> {
    if g.is_empty() || g.rows.iter().all(ParamVector::is_zero) {
        return Err(FpdError::DegenerateMatrix);
    }
    let dim = g.dim();
    for restart in 0..POWER_ITERATION_RESTARTS {
        let mut rng = rng::stream(seed, &[restart]);
        let mut x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n0 = dot_slices(&x, &x).sqrt();
        if n0 == 0.0 {
            continue;
        }
        x.iter_mut().for_each(|v| *v /= n0);

        let mut converged = false;
        let mut iterations = 0;
        let mut collapsed = false;
        while iterations < POWER_ITERATION_MAX_ITERS {
            iterations += 1;
            let mut y = g.gram_apply(&x);
            let ny = dot_slices(&y, &y).sqrt();
            if ny == 0.0 || !ny.is_finite() {
                collapsed = true;
                break;
            }
            y.iter_mut().for_each(|v| *v /= ny);
            let agreement = dot_slices(&x, &y).abs().min(1.0);
            x = y;
            if 1.0 - agreement < POWER_ITERATION_TOLERANCE {
                converged = true;
                break;
            }
        }
        if collapsed {
            continue;
        }
        canonicalize_sign(&mut x);
        return Ok(SingularVector {
            vector: ParamVector::from_vec_unchecked(x),
            converged,
            iterations,
        });
    }
    Err(FpdError::DegenerateMatrix)
}

fn canonicalize_sign(x: &mut [f64]) {
    let mut pivot = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[pivot].abs() {
            pivot = i;
        }
    }
    if x[pivot] < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Squared projection of every row onto `v`.
pub fn outlier_scores(g: &CenteredMatrix, v: &ParamVector) -> Result<BTreeMap<ClientId, f64>> {
    g.rows
        .iter()
        .zip(&g.row_ids)
        .map(|(row, id)| {
            let p = row.dot(v)?;
            Ok((*id, p * p))
        })
        .collect()
}

/// Two clusters of ids: `larger` holds the cluster with the larger mean.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoMeans {
    pub larger: BTreeSet<ClientId>,
    pub smaller: BTreeSet<ClientId>,
}

fn sum_sq_dev(values: &[f64]) -> f64 {
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - m) * (v - m)).sum()
}

/// Scores whose spread is within this fraction of their magnitude count as
/// all equal; rounding alone must not create a split.
pub const EQUAL_SCORE_TOLERANCE: f64 = 1e-12;

/// Exact 2-means on scalars.
///
/// The optimal 2-clustering of points on a line is a contiguous split of the
/// sorted values, so every split point is scanned. Equal-cost splits resolve
/// toward the one with fewer points in the larger-mean cluster. If every
/// score is equal (up to [`EQUAL_SCORE_TOLERANCE`]) no split is meaningful
/// and all ids go to `smaller`.
pub fn two_means_1d(scores: &[(ClientId, f64)]) -> Result<TwoMeans> {
    if scores.len() < 2 {
        return Err(FpdError::Cluster(format!(
            "need at least 2 points, got {}",
            scores.len()
        )));
    }
    if let Some((_, bad)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(FpdError::Cluster(format!("non-finite score {bad}")));
    }
    let mut sorted: Vec<(ClientId, f64)> = scores.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let (lo, hi) = (sorted[0].1, sorted[sorted.len() - 1].1);
    if hi - lo <= EQUAL_SCORE_TOLERANCE * hi.abs().max(lo.abs()) {
        return Ok(TwoMeans {
            larger: BTreeSet::new(),
            smaller: sorted.iter().map(|(id, _)| *id).collect(),
        });
    }

    let values: Vec<f64> = sorted.iter().map(|(_, s)| *s).collect();
    let mut best_split = 1;
    let mut best_cost = f64::INFINITY;
    for split in 1..values.len() {
        let cost = sum_sq_dev(&values[..split]) + sum_sq_dev(&values[split..]);
        if cost <= best_cost {
            best_cost = cost;
            best_split = split;
        }
    }
    Ok(TwoMeans {
        smaller: sorted[..best_split].iter().map(|(id, _)| *id).collect(),
        larger: sorted[best_split..].iter().map(|(id, _)| *id).collect(),
    })
}

/// Coordinate-wise median; even counts take the midpoint of the two middle
/// values.
pub fn coordinate_median(updates: &[ParamVector]) -> Result<ParamVector> {
    let first = updates.first().ok_or(FpdError::EmptyAggregation)?;
    let dim = first.dim();
    for u in updates {
        check_dims(dim, u.dim())?;
    }
    let n = updates.len();
    let mut column = vec![0.0; n];
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim {
        for (c, u) in column.iter_mut().zip(updates) {
            *c = u.as_slice()[j];
        }
        column.sort_by(f64::total_cmp);
        let mid = n / 2;
        out.push(if n % 2 == 1 {
            column[mid]
        } else {
            0.5 * (column[mid - 1] + column[mid])
        });
    }
    Ok(ParamVector::from_vec_unchecked(out))
}
