//! Autoencoder denoising of the last-two-layers slice.
//!
//! Clients whose slice reconstructs poorly have that slice replaced by its
//! reconstruction; clients that reconstruct well feed the training buffer.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::ops::Range;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::error::{FpdError, Result};
use crate::rng;
use crate::vecmath::{normalize, two_means_1d, ClientId, ParamVector};

pub const BUFFER_CAPACITY: usize = 500;
pub const WARMUP_THRESHOLD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for AeSchedule {
    fn default() -> Self {
        AeSchedule { epochs: 5, batch_size: 32, lr: 0.01 }
    }
}

/// Anything that maps a slice to its reconstruction and can be fit to a
/// set of reliable slices.
pub trait Reconstruct {
    fn reconstruct(&self, x: &[f64]) -> Vec<f64>;
    fn train(&mut self, samples: &[Vec<f64>], schedule: &AeSchedule, seed: u64);
}

/// Squared reconstruction error `‖x − ae(x)‖²`.
pub fn reconstruction_error<R: Reconstruct + ?Sized>(ae: &R, x: &[f64]) -> f64 {
    ae.reconstruct(x).iter().zip(x).map(|(y, v)| (y - v) * (y - v)).sum()
}

/// `input → tanh(hidden) → linear(input)`.
///
/// Flat parameter layout: encoder weights (hidden × input, row-major),
/// encoder bias, decoder weights (input × hidden), decoder bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    input: usize,
    hidden: usize,
    params: Vec<f64>,
}

pub fn default_hidden(input: usize) -> usize {
    8usize.max(input.div_ceil(4))
}

impl Autoencoder {
    pub fn new(input: usize, seed: u64) -> Self {
        let hidden = default_hidden(input);
        let mut r = rng::stream(seed, &[0xAE]);
        let enc = Normal::new(0.0, (1.0 / input as f64).sqrt()).expect("positive std");
        let dec = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("positive std");
        let mut params = Vec::with_capacity(Self::param_count(input, hidden));
        params.extend((0..hidden * input).map(|_| enc.sample(&mut r)));
        params.extend(std::iter::repeat_n(0.0, hidden));
        params.extend((0..input * hidden).map(|_| dec.sample(&mut r)));
        params.extend(std::iter::repeat_n(0.0, input));
        Autoencoder { input, hidden, params }
    }

    pub fn from_params(input: usize, hidden: usize, params: Vec<f64>) -> Result<Self> {
        let expected = Self::param_count(input, hidden);
        if params.len() != expected {
            return Err(FpdError::DimensionMismatch { expected, found: params.len() });
        }
        Ok(Autoencoder { input, hidden, params })
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        2 * input * hidden + input + hidden
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let eb = self.hidden * self.input;
        let dw = eb + self.hidden;
        let db = dw + self.input * self.hidden;
        (eb, dw, db)
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        let (eb, _, _) = self.offsets();
        (0..self.hidden)
            .map(|j| {
                let row = &self.params[j * self.input..(j + 1) * self.input];
                let a: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.params[eb + j];
                a.tanh()
            })
            .collect()
    }

    fn decode(&self, h: &[f64]) -> Vec<f64> {
        let (_, dw, db) = self.offsets();
        (0..self.input)
            .map(|i| {
                let row = &self.params[dw + i * self.hidden..dw + (i + 1) * self.hidden];
                row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + self.params[db + i]
            })
            .collect()
    }

    /// Mean over the batch of `‖ae(x) − x‖²`, and its gradient.
    pub fn loss_and_gradient(&self, batch: &[&[f64]]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        if batch.is_empty() {
            return (0.0, grad);
        }
        let (eb, dw, db) = self.offsets();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for x in batch {
            let h = self.hidden_activations(x);
            let y = self.decode(&h);
            let dy: Vec<f64> = y.iter().zip(x.iter()).map(|(y, v)| 2.0 * (y - v) * scale).collect();
            loss += y.iter().zip(x.iter()).map(|(y, v)| (y - v) * (y - v)).sum::<f64>() * scale;
            let mut dh = vec![0.0; self.hidden];
            for i in 0..self.input {
                grad[db + i] += dy[i];
                let base = dw + i * self.hidden;
                for j in 0..self.hidden {
                    grad[base + j] += dy[i] * h[j];
                    dh[j] += self.params[base + j] * dy[i];
                }
            }
            for j in 0..self.hidden {
                let da = dh[j] * (1.0 - h[j] * h[j]);
                grad[eb + j] += da;
                let base = j * self.input;
                for (g, v) in grad[base..base + self.input].iter_mut().zip(x.iter()) {
                    *g += da * v;
                }
            }
        }
        (loss, grad)
    }
}

impl Reconstruct for Autoencoder {
    fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        self.decode(&self.hidden_activations(x))
    }

    fn train(&mut self, samples: &[Vec<f64>], schedule: &AeSchedule, seed: u64) {
        if samples.is_empty() {
            return;
        }
        let mut r = rng::stream(seed, &[0x7A1]);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        for _ in 0..schedule.epochs {
            order.shuffle(&mut r);
            for chunk in order.chunks(schedule.batch_size.max(1)) {
                let batch: Vec<&[f64]> = chunk.iter().map(|&i| samples[i].as_slice()).collect();
                let (_, g) = self.loss_and_gradient(&batch);
                for (p, d) in self.params.iter_mut().zip(&g) {
                    *p -= schedule.lr * d;
                }
            }
        }
    }
}

/// Autoencoder plus its bounded buffer of reliable slices.
#[derive(Debug, Clone)]
pub struct DenoiserState<R = Autoencoder> {
    pub model: R,
    buffer: VecDeque<Vec<f64>>,
    pub capacity: usize,
    pub warmup: usize,
    pub schedule: AeSchedule,
}

impl<R: Reconstruct> DenoiserState<R> {
    pub fn new(model: R) -> Self {
        DenoiserState {
            model,
            buffer: VecDeque::new(),
            capacity: BUFFER_CAPACITY,
            warmup: WARMUP_THRESHOLD,
            schedule: AeSchedule::default(),
        }
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_warm(&self) -> bool {
        self.buffer.len() >= self.warmup
    }

    pub fn push(&mut self, slice: Vec<f64>) {
        if self.capacity == 0 {
            return;
        }
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(slice);
    }

    pub fn train(&mut self, seed: u64) {
        let samples: Vec<Vec<f64>> = self.buffer.iter().cloned().collect();
        self.model.train(&samples, &self.schedule, seed);
    }
}

#[derive(Debug, Clone, Default)]
pub struct DenoiseOutcome {
    pub vectors: BTreeMap<ClientId, ParamVector>,
    pub denoised: BTreeSet<ClientId>,
    pub errors: Option<BTreeMap<ClientId, f64>>,
}

/// Denoises the survivors' slices in place of the high-error cluster.
///
/// Until the buffer holds `warmup` slices, vectors pass through unchanged
/// and every survivor's slice is buffered, so the model has data to learn
/// from at all.
pub fn denoise<R: Reconstruct>(
    normed: &BTreeMap<ClientId, ParamVector>,
    state: &mut DenoiserState<R>,
    slice: Range<usize>,
    seed: u64,
) -> Result<DenoiseOutcome> {
    let mut out = DenoiseOutcome { vectors: normed.clone(), ..Default::default() };
    if normed.is_empty() {
        return Ok(out);
    }
    for v in normed.values() {
        if slice.end > v.dim() || slice.start >= slice.end {
            return Err(FpdError::config("slice", format!("{slice:?} invalid for dimension {}", v.dim())));
        }
    }
    let take = |v: &ParamVector| v.as_slice()[slice.clone()].to_vec();

    if !state.is_warm() {
        for v in normed.values() {
            state.push(take(v));
        }
        state.train(seed);
        return Ok(out);
    }

    let errors: BTreeMap<ClientId, f64> = normed
        .iter()
        .map(|(id, v)| (*id, reconstruction_error(&state.model, &v.as_slice()[slice.clone()])))
        .collect();
    let reliable: BTreeSet<ClientId> = if errors.len() >= 2 {
        let pairs: Vec<(ClientId, f64)> = errors.iter().map(|(id, e)| (*id, *e)).collect();
        let clusters = two_means_1d(&pairs)?;
        for id in &clusters.larger {
            let mut values = normed[id].as_slice().to_vec();
            let rebuilt = state.model.reconstruct(&values[slice.clone()]);
            values[slice.clone()].copy_from_slice(&rebuilt);
            let candidate = ParamVector::new(values)?;
            if candidate.is_zero() {
                continue;
            }
            out.vectors.insert(*id, normalize(&candidate)?);
            out.denoised.insert(*id);
        }
        clusters.smaller
    } else {
        errors.keys().copied().collect()
    };
    for id in &reliable {
        state.push(take(&normed[id]));
    }
    state.train(seed);
    out.errors = Some(errors);
    Ok(out)
}
