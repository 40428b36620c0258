//! Federated round primitives: local training, global update, evaluation.

use rand::seq::SliceRandom;

use crate::data::LabeledDataset;
use crate::error::{FpdError, Result};
use crate::model::Model;
use crate::rng;
use crate::vecmath::{check_dims, ClientId, ParamVector};

pub const DEFAULT_LR: f64 = 0.05;
pub const DEFAULT_BATCH: usize = 32;

/// A client's upload for one round. `claimed_size` is whatever the client
/// reports and is not trusted by the FPD pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub client: ClientId,
    pub delta: ParamVector,
    pub claimed_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 3,
            lr: DEFAULT_LR,
            batch_size: DEFAULT_BATCH,
        }
    }
}

/// Server-side state advanced once per round by the coordinator.
#[derive(Debug, Clone)]
pub struct GlobalState {
    pub model: Model,
    /// Rounds completed so far; the next round is `round + 1`.
    pub round: usize,
}

impl GlobalState {
    pub fn new(model: Model) -> Self {
        GlobalState { model, round: 0 }
    }

    /// Applies `agg` and advances the round counter.
    pub fn advance(&mut self, agg: &ParamVector) -> Result<()> {
        self.model = apply_global(&self.model, agg)?;
        self.round += 1;
        Ok(())
    }
}

/// Runs `epochs` of shuffled mini-batch SGD from the global model and
/// returns `w_local - w_global`.
pub fn local_train(
    client: ClientId,
    global: &Model,
    ds: &LabeledDataset,
    params: &TrainParams,
    seed: u64,
) -> Result<LocalUpdate> {
    if ds.is_empty() {
        return Err(FpdError::Train(format!("client {client} has no data")));
    }
    if params.batch_size == 0 {
        return Err(FpdError::Train("batch size must be positive".into()));
    }
    check_dims(global.shape().input, ds.feature_dim())?;
    let mut local = global.clone();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut rng = rng::stream(seed, &[0x7EA1]);
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let samples = batch
                .iter()
                .map(|&i| (ds.features()[i].as_slice(), ds.labels()[i]));
            let (_, grad) = local.loss_and_gradient(samples);
            local.sgd_step(&grad, params.lr)?;
        }
    }
    let delta = local.params().sub(global.params())?;
    Ok(LocalUpdate {
        client,
        delta,
        claimed_size: ds.len(),
    })
}

/// `w + agg`.
pub fn apply_global(w: &Model, agg: &ParamVector) -> Result<Model> {
    Model::new(w.shape(), w.params().add(agg)?)
}

/// Fraction of argmax-correct predictions.
pub fn evaluate(w: &Model, test: &LabeledDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(FpdError::Eval("empty test set".into()));
    }
    check_dims(w.shape().input, test.feature_dim())?;
    let correct = test
        .features()
        .iter()
        .zip(test.labels())
        .filter(|(x, &y)| w.predict(x) == y)
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// Mean cross-entropy of `w` on `ds`.
pub fn dataset_loss(w: &Model, ds: &LabeledDataset) -> f64 {
    let total: f64 = ds
        .features()
        .iter()
        .zip(ds.labels())
        .map(|(x, &y)| w.sample_loss(x, y))
        .sum();
    total / ds.len().max(1) as f64
}
