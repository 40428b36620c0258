//! One-hidden-layer MLP over a flat parameter vector.
//!
//! Layout of the flat vector: layer-1 weights (row-major, `hidden x input`),
//! layer-1 biases, layer-2 weights (row-major, `labels x hidden`), layer-2
//! biases. ReLU hidden units, softmax output, cross-entropy loss.

use std::ops::Range;

use rand_distr::{Distribution, Normal};

use crate::error::{FpdError, Result};
use crate::rng;
use crate::vecmath::{check_dims, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: usize,
    pub labels: usize,
}

impl MlpShape {
    pub fn new(input: usize, hidden: usize, labels: usize) -> Self {
        MlpShape { input, hidden, labels }
    }

    pub fn num_params(&self) -> usize {
        self.hidden * self.input + self.hidden + self.labels * self.hidden + self.labels
    }

    pub fn w1(&self) -> Range<usize> {
        0..self.hidden * self.input
    }

    pub fn b1(&self) -> Range<usize> {
        let s = self.w1().end;
        s..s + self.hidden
    }

    pub fn w2(&self) -> Range<usize> {
        let s = self.b1().end;
        s..s + self.labels * self.hidden
    }

    pub fn b2(&self) -> Range<usize> {
        let s = self.w2().end;
        s..s + self.labels
    }

    /// Weights and biases between the hidden and output layers.
    pub fn last_two_layers(&self) -> Range<usize> {
        self.w2().start..self.b2().end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    shape: MlpShape,
    params: ParamVector,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

struct Forward {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl Model {
    pub fn new(shape: MlpShape, params: ParamVector) -> Result<Self> {
        check_dims(shape.num_params(), params.dim())?;
        Ok(Model { shape, params })
    }

    /// He-normal layer-1 and Glorot-normal layer-2 weights, zero biases.
    pub fn init(shape: MlpShape, seed: u64) -> Self {
        let mut rng = rng::stream(seed, &[0x1417]);
        let mut p = vec![0.0; shape.num_params()];
        let he = Normal::new(0.0, (2.0 / shape.input as f64).sqrt()).expect("valid std");
        for v in &mut p[shape.w1()] {
            *v = he.sample(&mut rng);
        }
        let glorot =
            Normal::new(0.0, (2.0 / (shape.hidden + shape.labels) as f64).sqrt()).expect("valid std");
        for v in &mut p[shape.w2()] {
            *v = glorot.sample(&mut rng);
        }
        Model {
            shape,
            params: ParamVector::from_vec_unchecked(p),
        }
    }

    pub fn shape(&self) -> MlpShape {
        self.shape
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn into_params(self) -> ParamVector {
        self.params
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let s = self.shape;
        let p = self.params.as_slice();
        let w1 = &p[s.w1()];
        let b1 = &p[s.b1()];
        let w2 = &p[s.w2()];
        let b2 = &p[s.b2()];
        let hidden_pre: Vec<f64> = (0..s.hidden)
            .map(|j| {
                let row = &w1[j * s.input..(j + 1) * s.input];
                b1[j] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()
            })
            .collect();
        let hidden: Vec<f64> = hidden_pre.iter().map(|&h| h.max(0.0)).collect();
        let logits = (0..s.labels)
            .map(|c| {
                let row = &w2[c * s.hidden..(c + 1) * s.hidden];
                b2[c] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        Forward {
            hidden_pre,
            hidden,
            logits,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).logits
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Hidden pre-activations; used to keep gradient checks away from ReLU kinks.
    pub fn hidden_pre_activations(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).hidden_pre
    }

    /// Cross-entropy of one sample.
    pub fn sample_loss(&self, x: &[f64], label: usize) -> f64 {
        let logits = self.logits(x);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        lse - logits[label]
    }

    /// Mean cross-entropy over `samples` and its gradient with respect to the
    /// flat parameter vector.
    pub fn loss_and_gradient<'a, I>(&self, samples: I) -> (f64, Vec<f64>)
    where
        I: IntoIterator<Item = (&'a [f64], usize)>,
    {
        let s = self.shape;
        let p = self.params.as_slice();
        let w2 = &p[s.w2()];
        let mut grad = vec![0.0; s.num_params()];
        let mut loss = 0.0;
        let mut count = 0usize;
        let (w1r, b1r, w2r, b2r) = (s.w1(), s.b1(), s.w2(), s.b2());
        for (x, label) in samples {
            count += 1;
            let fw = self.forward(x);
            let probs = softmax(&fw.logits);
            loss += -probs[label].max(f64::MIN_POSITIVE).ln();

            let mut dz = probs;
            dz[label] -= 1.0;
            let mut dh = vec![0.0; s.hidden];
            for c in 0..s.labels {
                grad[b2r.start + c] += dz[c];
                let base = w2r.start + c * s.hidden;
                for j in 0..s.hidden {
                    grad[base + j] += dz[c] * fw.hidden[j];
                    dh[j] += w2[c * s.hidden + j] * dz[c];
                }
            }
            for j in 0..s.hidden {
                if fw.hidden_pre[j] <= 0.0 {
                    continue;
                }
                grad[b1r.start + j] += dh[j];
                let base = w1r.start + j * s.input;
                for (i, xi) in x.iter().enumerate() {
                    grad[base + i] += dh[j] * xi;
                }
            }
        }
        if count > 0 {
            let inv = 1.0 / count as f64;
            loss *= inv;
            grad.iter_mut().for_each(|g| *g *= inv);
        }
        (loss, grad)
    }

    /// In-place `params -= lr * grad`.
    pub(crate) fn sgd_step(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        check_dims(self.params.dim(), grad.len())?;
        for (w, g) in self.params.as_mut_slice().iter_mut().zip(grad) {
            *w -= lr * g;
        }
        if let Some((index, &value)) = self
            .params
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite())
        {
            return Err(FpdError::NonFinite { index, value });
        }
        Ok(())
    }
}
