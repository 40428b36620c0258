//! The four-stage defense: reputation-based selection, colluding filter,
//! spectral filter and autoencoder denoising, followed by aggregation.

pub mod colluding;
pub mod denoise;
pub mod record;
pub mod selection;
pub mod spectral;

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use log::{debug, warn};

pub use colluding::{colluding_scores, ColludingOutcome, DEFAULT_GAMMA};
pub use denoise::{denoise, AeSchedule, Autoencoder, DenoiseOutcome, DenoiserState, Reconstruct};
pub use record::{record_verdicts, ClientRecord, StageVerdicts, Verdict};
pub use selection::{select_clients, SelectionParams};
pub use spectral::{spectral_filter, update_momentum, SpectralOutcome};

use crate::error::{FpdError, Result};
use crate::fl::LocalUpdate;
use crate::rng;
use crate::vecmath::{self, normalize, ClientId, ParamVector};

/// Which stages run; disabling one is how the ablations are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageToggles {
    pub selection: bool,
    pub colluding: bool,
    pub spectral: bool,
    pub denoise: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles { selection: true, colluding: true, spectral: true, denoise: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpdConfig {
    pub selection: SelectionParams,
    /// Cosine threshold per round; the last entry repeats.
    pub gamma: Vec<f64>,
    pub lambda: f64,
    pub delta: f64,
    pub ae_schedule: AeSchedule,
    pub buffer_capacity: usize,
    pub warmup: usize,
    pub stages: StageToggles,
}

impl Default for FpdConfig {
    fn default() -> Self {
        FpdConfig {
            selection: SelectionParams::default(),
            gamma: vec![DEFAULT_GAMMA],
            lambda: spectral::DEFAULT_LAMBDA,
            delta: spectral::DELTA_MNIST_LIKE,
            ae_schedule: AeSchedule::default(),
            buffer_capacity: denoise::BUFFER_CAPACITY,
            warmup: denoise::WARMUP_THRESHOLD,
            stages: StageToggles::default(),
        }
    }
}

impl FpdConfig {
    pub fn gamma_at(&self, round: usize) -> f64 {
        let i = round.saturating_sub(1).min(self.gamma.len().saturating_sub(1));
        self.gamma.get(i).copied().unwrap_or(DEFAULT_GAMMA)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.selection.alpha > 0.0 && self.selection.alpha.is_finite()) {
            return Err(FpdError::config("alpha", "must be positive"));
        }
        if !(self.selection.beta > 0.0 && self.selection.beta.is_finite()) {
            return Err(FpdError::config("beta", "must be positive"));
        }
        if self.gamma.is_empty() || self.gamma.iter().any(|g| !(-1.0..=1.0).contains(g)) {
            return Err(FpdError::config("gamma", "must be non-empty with values in [-1, 1]"));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(FpdError::config("lambda", "must lie in (0, 1)"));
        }
        if !(-1.0..=1.0).contains(&self.delta) {
            return Err(FpdError::config("delta", "must lie in [-1, 1]"));
        }
        if self.ae_schedule.batch_size == 0 || self.ae_schedule.lr.is_nan() || self.ae_schedule.lr <= 0.0 {
            return Err(FpdError::config("ae_lr", "batch size and learning rate must be positive"));
        }
        if self.warmup > self.buffer_capacity {
            return Err(FpdError::config("warmup", "cannot exceed buffer capacity"));
        }
        Ok(())
    }
}

/// `median(‖raw momentum‖) · mean(final unit vectors)` over the survivors.
pub fn aggregate_fpd(
    final_vectors: &BTreeMap<ClientId, ParamVector>,
    raw_momenta: &BTreeMap<ClientId, ParamVector>,
) -> Result<ParamVector> {
    if final_vectors.is_empty() {
        return Err(FpdError::EmptyAggregation);
    }
    let mut norms: Vec<f64> = final_vectors
        .keys()
        .map(|id| raw_momenta.get(id).map(ParamVector::norm).ok_or(FpdError::EmptyAggregation))
        .collect::<Result<_>>()?;
    norms.sort_by(f64::total_cmp);
    let n = norms.len();
    let scale = if n % 2 == 1 { norms[n / 2] } else { 0.5 * (norms[n / 2 - 1] + norms[n / 2]) };
    let vs: Vec<&ParamVector> = final_vectors.values().collect();
    Ok(vecmath::mean(&vs)?.scale(scale))
}

/// Result of one defended round.
#[derive(Debug, Clone)]
pub struct FpdRound {
    pub verdicts: StageVerdicts,
    pub aggregate: ParamVector,
}

/// Defense state carried across rounds.
#[derive(Debug, Clone)]
pub struct FpdDefense {
    config: FpdConfig,
    records: BTreeMap<ClientId, ClientRecord>,
    denoiser: DenoiserState<Autoencoder>,
    slice: Range<usize>,
    dim: usize,
    seed: u64,
}

impl FpdDefense {
    /// `slice` is the last-two-layers range inside a `dim`-long update.
    pub fn new(config: FpdConfig, num_clients: usize, dim: usize, slice: Range<usize>, seed: u64) -> Result<Self> {
        config.validate()?;
        if slice.start >= slice.end || slice.end > dim {
            return Err(FpdError::config("slice", format!("{slice:?} invalid for dimension {dim}")));
        }
        let mut denoiser = DenoiserState::new(Autoencoder::new(slice.len(), rng::derive_seed(seed, &[0xAE])));
        denoiser.capacity = config.buffer_capacity;
        denoiser.warmup = config.warmup;
        denoiser.schedule = config.ae_schedule;
        let records = (0..num_clients).map(|i| (ClientId(i), ClientRecord::new())).collect();
        Ok(FpdDefense { config, records, denoiser, slice, dim, seed })
    }

    pub fn config(&self) -> &FpdConfig {
        &self.config
    }

    pub fn records(&self) -> &BTreeMap<ClientId, ClientRecord> {
        &self.records
    }

    pub fn denoiser(&self) -> &DenoiserState<Autoencoder> {
        &self.denoiser
    }

    /// Clients asked to train in round `t` (1-based).
    pub fn select(&self, t: usize) -> BTreeSet<ClientId> {
        if !self.config.stages.selection {
            return self.records.keys().copied().collect();
        }
        select_clients(&self.records, t, &self.config.selection, rng::derive_seed(self.seed, &[1]))
    }

    /// Filters, denoises and aggregates the uploads of round `t`, then
    /// records every selected client's verdict.
    pub fn process_round(&mut self, t: usize, updates: &[LocalUpdate]) -> Result<FpdRound> {
        let raw: BTreeMap<ClientId, ParamVector> = updates.iter().map(|u| (u.client, u.delta.clone())).collect();
        for g in raw.values() {
            vecmath::check_dims(self.dim, g.dim())?;
        }
        let mut verdicts = StageVerdicts { selected: raw.keys().copied().collect(), ..Default::default() };

        if self.config.stages.colluding {
            let out = colluding_scores(&raw, self.config.gamma_at(t))?;
            verdicts.removed_colluding = out.removed;
        } else {
            verdicts.removed_colluding = raw.iter().filter(|(_, g)| g.is_zero()).map(|(id, _)| *id).collect();
        }

        let mut momenta = BTreeMap::new();
        let mut normed = BTreeMap::new();
        let mut zero_momentum = BTreeSet::new();
        for (id, g) in &raw {
            if verdicts.removed_colluding.contains(id) {
                continue;
            }
            let record = self.records.entry(*id).or_default();
            let m = update_momentum(record, g, t, self.config.lambda)?;
            if m.is_zero() {
                zero_momentum.insert(*id);
                continue;
            }
            normed.insert(*id, normalize(&m)?);
            momenta.insert(*id, m);
        }

        let mut removed_spectral = zero_momentum;
        if self.config.stages.spectral {
            let out = spectral_filter(&normed, self.config.delta, rng::derive_seed(self.seed, &[2, t as u64]))?;
            removed_spectral.extend(out.removed);
        }
        for id in &removed_spectral {
            normed.remove(id);
        }
        verdicts.removed_spectral = removed_spectral;

        let finals = if self.config.stages.denoise {
            let out = denoise(&normed, &mut self.denoiser, self.slice.clone(), rng::derive_seed(self.seed, &[3, t as u64]))?;
            verdicts.denoised = out.denoised;
            out.vectors
        } else {
            normed
        };
        verdicts.survivors = verdicts.selected.difference(&verdicts.removed()).copied().collect();

        let aggregate = match aggregate_fpd(&finals, &momenta) {
            Ok(a) => a,
            Err(FpdError::EmptyAggregation) => {
                warn!("round {t}: no survivors, applying a zero update");
                ParamVector::zeros(self.dim)
            }
            Err(e) => return Err(e),
        };
        debug!(
            "round {t}: selected {} colluding {} spectral {} denoised {}",
            verdicts.selected.len(),
            verdicts.removed_colluding.len(),
            verdicts.removed_spectral.len(),
            verdicts.denoised.len()
        );
        record_verdicts(&mut self.records, &verdicts, &momenta, t)?;
        Ok(FpdRound { verdicts, aggregate })
    }
}
