//! Seeded experiment loop.

use std::collections::BTreeSet;

use rand::seq::index;
use rayon::prelude::*;

use super::config::{DatasetSource, DefenseKind, ExperimentConfig, Seeds};
use crate::attacks::{apply_adversary, label_flip, AttackKind, AttackSpec, AttackerRole};
use crate::baselines;
use crate::data::{self, LabeledDataset, PartitionSpec};
use crate::error::Result;
use crate::fl::{evaluate, local_train, GlobalState, LocalUpdate, TrainParams};
use crate::fpd::{FpdDefense, StageVerdicts};
use crate::model::{MlpShape, Model};
use crate::rng;
use crate::vecmath::{ClientId, ParamVector};

/// What happened in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: usize,
    pub verdicts: StageVerdicts,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub seed: u64,
    pub compromised: BTreeSet<ClientId>,
    pub outcomes: Vec<RoundOutcome>,
}

impl ExperimentRun {
    pub fn final_accuracy(&self) -> f64 {
        self.outcomes.last().map_or(0.0, |o| o.accuracy)
    }
}

/// Precision and recall of the removals against the ground truth.
///
/// Precision is 1 when nothing was removed and no attacker was selected,
/// `None` when nothing was removed but attackers were selected. Recall is
/// `None` when no attacker was selected.
pub fn detection_metrics(verdicts: &StageVerdicts, compromised: &BTreeSet<ClientId>) -> (Option<f64>, Option<f64>) {
    let removed = verdicts.removed();
    let present: BTreeSet<ClientId> = compromised.intersection(&verdicts.selected).copied().collect();
    let hits = removed.intersection(compromised).count() as f64;
    let precision = if removed.is_empty() {
        present.is_empty().then_some(1.0)
    } else {
        Some(hits / removed.len() as f64)
    };
    let recall = (!present.is_empty()).then(|| hits / present.len() as f64);
    (precision, recall)
}

fn load_data(cfg: &ExperimentConfig, seeds: &Seeds) -> Result<(LabeledDataset, LabeledDataset)> {
    match &cfg.dataset {
        DatasetSource::Synthetic => Ok((
            data::generate_synthetic(cfg.train_samples, cfg.num_labels, cfg.feature_dim, rng::derive_seed(seeds.data, &[0]))?,
            data::generate_synthetic(cfg.test_samples, cfg.num_labels, cfg.feature_dim, rng::derive_seed(seeds.data, &[1]))?,
        )),
        DatasetSource::Idx { train_images, train_labels, test_images, test_labels } => Ok((
            data::load_idx(train_images, train_labels)?,
            data::load_idx(test_images, test_labels)?,
        )),
    }
}

enum Aggregator {
    Fpd(Box<FpdDefense>),
    Baseline(DefenseKind),
}

/// Runs one repetition with base seed `seed`.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentRun> {
    cfg.validate()?;
    let seeds = Seeds::from_base(seed);
    let (train, test) = load_data(cfg, &seeds)?;
    let k = cfg.num_clients;
    data::validate_q(cfg.q, train.num_labels())?;
    let sizes = data::sample_sizes(k, cfg.min_size, cfg.max_size, rng::derive_seed(seeds.data, &[2]));
    let mut clients = data::partition_noniid(
        &train,
        &PartitionSpec { num_clients: k, q: cfg.q, sizes: Some(sizes), seed: rng::derive_seed(seeds.data, &[3]) },
    )?;

    let mut attack_rng = rng::stream(seeds.attack, &[0]);
    let compromised: BTreeSet<ClientId> = index::sample(&mut attack_rng, k, cfg.attackers).into_iter().map(ClientId).collect();
    let spec = if cfg.attack == AttackKind::None {
        AttackSpec::none()
    } else {
        AttackSpec::new(cfg.attack, compromised.clone(), cfg.attack_params, k)?
    };
    for id in &compromised {
        if spec.role(*id) == Some(AttackerRole::LabelFlip) {
            clients[id.0] = label_flip(&clients[id.0]);
        }
    }

    let shape = MlpShape::new(train.feature_dim(), cfg.hidden, train.num_labels());
    let mut state = GlobalState::new(Model::init(shape, seeds.model));
    let mut aggregator = match cfg.defense {
        DefenseKind::Fpd(_) => Aggregator::Fpd(Box::new(FpdDefense::new(
            cfg.fpd_config(),
            k,
            shape.num_params(),
            shape.last_two_layers(),
            seeds.selection,
        )?)),
        other => Aggregator::Baseline(other),
    };
    let train_params = TrainParams { epochs: cfg.local_epochs, lr: cfg.lr, batch_size: cfg.batch_size };

    let mut outcomes = Vec::with_capacity(cfg.rounds);
    for t in 1..=cfg.rounds {
        let selected: Vec<ClientId> = match &aggregator {
            Aggregator::Fpd(d) => d.select(t).into_iter().collect(),
            Aggregator::Baseline(_) => (0..k).map(ClientId).collect(),
        };
        let global = &state.model;
        let mut updates: Vec<LocalUpdate> = selected
            .par_iter()
            .map(|id| local_train(*id, global, &clients[id.0], &train_params, rng::derive_seed(seeds.training, &[t as u64, id.0 as u64])))
            .collect::<Result<_>>()?;
        apply_adversary(&spec, k, &mut updates)?;

        let (verdicts, aggregate) = match &mut aggregator {
            Aggregator::Fpd(d) => {
                let out = d.process_round(t, &updates)?;
                (out.verdicts, out.aggregate)
            }
            Aggregator::Baseline(kind) => {
                let ids: BTreeSet<ClientId> = selected.iter().copied().collect();
                let f = compromised.intersection(&ids).count();
                let deltas: Vec<ParamVector> = updates.iter().map(|u| u.delta.clone()).collect();
                let agg = match kind {
                    DefenseKind::FedAvg => baselines::fedavg(&updates)?,
                    DefenseKind::Krum => baselines::krum(&deltas, f)?,
                    DefenseKind::Faba => baselines::faba(&deltas, f)?,
                    _ => baselines::median(&deltas)?,
                };
                let verdicts = StageVerdicts { selected: ids.clone(), survivors: ids, ..Default::default() };
                (verdicts, agg)
            }
        };
        state.advance(&aggregate)?;
        let accuracy = evaluate(&state.model, &test)?;
        let (precision, recall) = detection_metrics(&verdicts, &compromised);
        log::debug!("round {t}: accuracy {accuracy:.4}");
        outcomes.push(RoundOutcome { round: t, verdicts, accuracy, precision, recall });
    }
    Ok(ExperimentRun { seed, compromised, outcomes })
}
