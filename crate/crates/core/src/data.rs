//! Datasets and label-skewed partitioning across clients.
//!
//! Clients are split round-robin into one group per label (`client % L`).
//! A sample with label `l` goes to group `l` with probability `q` and to
//! each other group with probability `(1 - q) / (L - 1)`, then to a uniform
//! client inside the chosen group. `q = 1/L` is the IID case.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FpdError, Result};
use crate::rng;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Feature vectors with integer labels in `[0, num_labels)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_labels: usize,
    feature_dim: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_labels: usize,
        feature_dim: usize,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(FpdError::Format(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_labels) {
            return Err(FpdError::Format(format!(
                "label {bad} outside [0, {num_labels})"
            )));
        }
        if let Some(row) = features.iter().find(|r| r.len() != feature_dim) {
            return Err(FpdError::DimensionMismatch {
                expected: feature_dim,
                found: row.len(),
            });
        }
        Ok(LabeledDataset {
            features,
            labels,
            num_labels,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_labels];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Copies the samples at `indices` (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_labels: self.num_labels,
            feature_dim: self.feature_dim,
        }
    }

    /// Returns a copy with every label replaced by `f(label)`.
    pub fn map_labels(&self, f: impl Fn(usize) -> usize) -> Result<LabeledDataset> {
        LabeledDataset::new(
            self.features.clone(),
            self.labels.iter().map(|&l| f(l)).collect(),
            self.num_labels,
            self.feature_dim,
        )
    }

    /// Splits off the first `n` samples.
    pub fn split_at(&self, n: usize) -> (LabeledDataset, LabeledDataset) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }
}

/// Distance between neighbouring class centers, in units of the (unit)
/// per-coordinate standard deviation.
pub const SYNTHETIC_CENTER_SPACING: f64 = 6.0;

fn synthetic_centers(num_labels: usize, dim: usize) -> Vec<Vec<f64>> {
    if num_labels <= dim {
        // scaled standard simplex: ‖c·e_i − c·e_j‖ = c·√2
        let c = SYNTHETIC_CENTER_SPACING / std::f64::consts::SQRT_2;
        (0..num_labels)
            .map(|l| {
                let mut v = vec![0.0; dim];
                v[l] = c;
                v
            })
            .collect()
    } else {
        // not enough axes: regular polygon in the first two coordinates
        let r = SYNTHETIC_CENTER_SPACING / 2.0 / (std::f64::consts::PI / num_labels as f64).sin();
        (0..num_labels)
            .map(|l| {
                let theta = 2.0 * std::f64::consts::PI * l as f64 / num_labels as f64;
                let mut v = vec![0.0; dim];
                v[0] = r * theta.cos();
                v[1] = r * theta.sin();
                v
            })
            .collect()
    }
}

/// `n` points from `num_labels` unit-covariance Gaussian clusters. Labels are
/// assigned round-robin, so class counts differ by at most one.
pub fn generate_synthetic(n: usize, num_labels: usize, dim: usize, seed: u64) -> Result<LabeledDataset> {
    if num_labels == 0 || n < num_labels {
        return Err(FpdError::config("n", format!("need n >= L >= 1 (n={n}, L={num_labels})")));
    }
    if dim < 2 {
        return Err(FpdError::config("dim", "synthetic data needs dim >= 2"));
    }
    let centers = synthetic_centers(num_labels, dim);
    let mut rng = rng::stream(seed, &[0x5EED]);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % num_labels;
        let x: Vec<f64> = centers[label]
            .iter()
            .map(|c| {
                let z: f64 = StandardNormal.sample(&mut rng);
                c + z
            })
            .collect();
        features.push(x);
        labels.push(label);
    }
    LabeledDataset::new(features, labels, num_labels, dim)
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| FpdError::Format(format!("truncated {what} header")))
}

/// Parses an IDX image file (`0x00000803`). Returns `(count, rows*cols, pixels)`
/// with pixels scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<f64>>)> {
    let magic = read_u32(bytes, 0, "image")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(FpdError::Format(format!("bad image magic {magic:#010x}")));
    }
    let count = read_u32(bytes, 4, "image")? as usize;
    let rows = read_u32(bytes, 8, "image")? as usize;
    let cols = read_u32(bytes, 12, "image")? as usize;
    let pixels = rows * cols;
    let body = &bytes[16..];
    if body.len() < count * pixels {
        return Err(FpdError::Format(format!(
            "image file truncated: expected {} bytes of pixels, found {}",
            count * pixels,
            body.len()
        )));
    }
    let images = body
        .chunks_exact(pixels.max(1))
        .take(count)
        .map(|chunk| chunk.iter().map(|&p| f64::from(p) / 255.0).collect())
        .collect();
    Ok((count, pixels, images))
}

/// Parses an IDX label file (`0x00000801`).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0, "label")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(FpdError::Format(format!("bad label magic {magic:#010x}")));
    }
    let count = read_u32(bytes, 4, "label")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(FpdError::Format(format!(
            "label file truncated: expected {count} labels, found {}",
            body.len()
        )));
    }
    Ok(body[..count].iter().map(|&b| usize::from(b)).collect())
}

/// Loads an IDX image/label file pair. The label count is `max(label) + 1`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let (count, pixels, images) = parse_idx_images(&fs::read(images_path)?)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?)?;
    if labels.len() != count {
        return Err(FpdError::Format(format!(
            "{count} images but {} labels",
            labels.len()
        )));
    }
    let num_labels = labels.iter().max().map_or(0, |m| m + 1);
    LabeledDataset::new(images, labels, num_labels, pixels)
}

/// How to split a dataset across `num_clients` clients.
#[derive(Debug, Clone)]
pub struct PartitionSpec {
    pub num_clients: usize,
    /// Non-IID degree, usable range `[1/L, 1]`.
    pub q: f64,
    /// Target sample count per client; `None` keeps whatever was assigned.
    pub sizes: Option<Vec<usize>>,
    pub seed: u64,
}

/// Uniform integer sizes in `[min, max]`, one per client.
pub fn sample_sizes(num_clients: usize, min: usize, max: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, &[0x5122]);
    (0..num_clients).map(|_| rng.random_range(min..=max)).collect()
}

pub fn validate_q(q: f64, num_labels: usize) -> Result<()> {
    let lo = 1.0 / num_labels as f64;
    if !q.is_finite() || q < lo - 1e-12 || q > 1.0 + 1e-12 {
        return Err(FpdError::config("q", format!("{q} outside [1/L, 1] = [{lo}, 1]")));
    }
    Ok(())
}

/// Assigns samples to clients by the group rule in the module docs, then
/// trims or resamples (with replacement, from the client's own samples) to
/// the target sizes. A client that received nothing draws from the whole
/// dataset instead.
pub fn partition_noniid(ds: &LabeledDataset, spec: &PartitionSpec) -> Result<Vec<LabeledDataset>> {
    let num_labels = ds.num_labels();
    let k = spec.num_clients;
    if num_labels == 0 {
        return Err(FpdError::config("dataset", "dataset has no labels"));
    }
    validate_q(spec.q, num_labels)?;
    if k < num_labels {
        return Err(FpdError::config(
            "num_clients",
            format!("{k} clients cannot cover {num_labels} label groups"),
        ));
    }
    if let Some(sizes) = &spec.sizes {
        if sizes.len() != k {
            return Err(FpdError::config(
                "sizes",
                format!("{} sizes for {k} clients", sizes.len()),
            ));
        }
    }

    let groups: Vec<Vec<usize>> = (0..num_labels)
        .map(|g| (g..k).step_by(num_labels).collect())
        .collect();
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut rng = rng::stream(spec.seed, &[0xA551]);
    for (i, &label) in ds.labels().iter().enumerate() {
        let group = if num_labels == 1 || rng.random::<f64>() < spec.q {
            label
        } else {
            let other = rng.random_range(0..num_labels - 1);
            if other >= label {
                other + 1
            } else {
                other
            }
        };
        let members = &groups[group];
        let client = members[rng.random_range(0..members.len())];
        assigned[client].push(i);
    }

    let mut out = Vec::with_capacity(k);
    for (client, mut indices) in assigned.into_iter().enumerate() {
        let mut crng = rng::stream(spec.seed, &[0xC11E, client as u64]);
        indices.shuffle(&mut crng);
        if let Some(sizes) = &spec.sizes {
            let target = sizes[client];
            if indices.len() >= target {
                indices.truncate(target);
            } else if !indices.is_empty() {
                let own = indices.len();
                while indices.len() < target {
                    let pick = indices[crng.random_range(0..own)];
                    indices.push(pick);
                }
            } else if !ds.is_empty() {
                indices = (0..target).map(|_| crng.random_range(0..ds.len())).collect();
            }
        }
        out.push(ds.subset(&indices));
    }
    Ok(out)
}
