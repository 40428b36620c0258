//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Every key is also a valid `--sweep` target.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::attacks::{AttackKind, AttackParams, DEFAULT_IPM_EPSILON};
use crate::error::{FpdError, Result};
use crate::fpd::{AeSchedule, FpdConfig, SelectionParams, StageToggles};
use crate::fpd::spectral::{DELTA_CIFAR_LIKE, DELTA_MNIST_LIKE};
use crate::rng;

/// Environment variable that replaces the configured base seed.
pub const SEED_ENV: &str = "FPD_SEED";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSource {
    Synthetic,
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

/// Controls the default spectral threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskProfile {
    MnistLike,
    CifarLike,
}

impl TaskProfile {
    pub fn default_delta(self) -> f64 {
        match self {
            TaskProfile::MnistLike => DELTA_MNIST_LIKE,
            TaskProfile::CifarLike => DELTA_CIFAR_LIKE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefenseKind {
    Fpd(StageToggles),
    FedAvg,
    Krum,
    Faba,
    Median,
}

impl DefenseKind {
    pub fn name(self) -> String {
        match self {
            DefenseKind::Fpd(s) => {
                let mut name = String::from("fpd");
                for (on, tag) in [
                    (s.selection, "selection"),
                    (s.colluding, "colluding"),
                    (s.spectral, "spectral"),
                    (s.denoise, "denoise"),
                ] {
                    if !on {
                        name.push_str("-no-");
                        name.push_str(tag);
                    }
                }
                name
            }
            DefenseKind::FedAvg => "fedavg".into(),
            DefenseKind::Krum => "krum".into(),
            DefenseKind::Faba => "faba".into(),
            DefenseKind::Median => "median".into(),
        }
    }
}

impl fmt::Display for DefenseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for DefenseKind {
    type Err = FpdError;

    /// `fpd` optionally followed by `-no-<stage>` suffixes, or a baseline name.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "fedavg" => return Ok(DefenseKind::FedAvg),
            "krum" => return Ok(DefenseKind::Krum),
            "faba" => return Ok(DefenseKind::Faba),
            "median" => return Ok(DefenseKind::Median),
            _ => {}
        }
        let rest = s
            .strip_prefix("fpd")
            .ok_or_else(|| FpdError::config("defense", format!("unknown defense '{s}'")))?;
        let mut stages = StageToggles::default();
        for part in rest.split("-no-").skip(1) {
            match part {
                "selection" => stages.selection = false,
                "colluding" => stages.colluding = false,
                "spectral" => stages.spectral = false,
                "denoise" => stages.denoise = false,
                other => return Err(FpdError::config("defense", format!("unknown stage '{other}'"))),
            }
        }
        if !rest.is_empty() && !rest.starts_with("-no-") {
            return Err(FpdError::config("defense", format!("unknown defense '{s}'")));
        }
        Ok(DefenseKind::Fpd(stages))
    }
}

/// Per-purpose seeds of one repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub data: u64,
    pub training: u64,
    pub selection: u64,
    pub attack: u64,
    pub model: u64,
}

impl Seeds {
    pub fn from_base(base: u64) -> Self {
        Seeds {
            data: rng::derive_seed(base, &[1]),
            training: rng::derive_seed(base, &[2]),
            selection: rng::derive_seed(base, &[3]),
            attack: rng::derive_seed(base, &[4]),
            model: rng::derive_seed(base, &[5]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub num_clients: usize,
    pub attackers: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub q: f64,
    pub dataset: DatasetSource,
    pub num_labels: usize,
    pub feature_dim: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub hidden: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub attack: AttackKind,
    pub attack_params: AttackParams,
    pub defense: DefenseKind,
    pub profile: TaskProfile,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: Vec<f64>,
    pub lambda: f64,
    /// `None` uses the profile default.
    pub delta: Option<f64>,
    pub bootstrap_rounds: usize,
    pub min_selected: usize,
    pub ae_epochs: usize,
    pub ae_batch: usize,
    pub ae_lr: f64,
    pub buffer_capacity: usize,
    pub warmup: usize,
    pub seed: u64,
    pub repetitions: usize,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let fpd = FpdConfig::default();
        ExperimentConfig {
            num_clients: 50,
            attackers: 15,
            rounds: 100,
            local_epochs: 3,
            batch_size: crate::fl::DEFAULT_BATCH,
            lr: crate::fl::DEFAULT_LR,
            q: 0.5,
            dataset: DatasetSource::Synthetic,
            num_labels: 10,
            feature_dim: 20,
            train_samples: 10_000,
            test_samples: 2_000,
            hidden: 16,
            min_size: 10,
            max_size: 500,
            attack: AttackKind::None,
            attack_params: AttackParams { z_max: None, epsilon: DEFAULT_IPM_EPSILON },
            defense: DefenseKind::Fpd(StageToggles::default()),
            profile: TaskProfile::MnistLike,
            alpha: fpd.selection.alpha,
            beta: fpd.selection.beta,
            gamma: fpd.gamma,
            lambda: fpd.lambda,
            delta: None,
            bootstrap_rounds: fpd.selection.bootstrap_rounds,
            min_selected: fpd.selection.min_selected,
            ae_epochs: fpd.ae_schedule.epochs,
            ae_batch: fpd.ae_schedule.batch_size,
            ae_lr: fpd.ae_schedule.lr,
            buffer_capacity: fpd.buffer_capacity,
            warmup: fpd.warmup,
            seed: 1,
            repetitions: 3,
            output: PathBuf::from("results"),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| FpdError::config(key, format!("cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(FpdError::config(key, format!("expected a boolean, got '{value}'"))),
    }
}

impl ExperimentConfig {
    /// Parses a config file body on top of the defaults and validates it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut idx: BTreeMap<&'static str, PathBuf> = BTreeMap::new();
        let mut dataset_kind = String::from("synthetic");
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                FpdError::config(format!("line {}", lineno + 1), "expected 'key = value'")
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "dataset" => dataset_kind = value.to_ascii_lowercase(),
                "train_images" => {
                    idx.insert("train_images", value.into());
                }
                "train_labels" => {
                    idx.insert("train_labels", value.into());
                }
                "test_images" => {
                    idx.insert("test_images", value.into());
                }
                "test_labels" => {
                    idx.insert("test_labels", value.into());
                }
                _ => cfg.set(key, value)?,
            }
        }
        cfg.dataset = match dataset_kind.as_str() {
            "synthetic" => DatasetSource::Synthetic,
            "idx" => {
                let mut take = |k: &'static str| {
                    idx.remove(k).ok_or_else(|| FpdError::config(k, "required when dataset = idx"))
                };
                DatasetSource::Idx {
                    train_images: take("train_images")?,
                    train_labels: take("train_labels")?,
                    test_images: take("test_images")?,
                    test_labels: take("test_labels")?,
                }
            }
            other => return Err(FpdError::config("dataset", format!("unknown dataset '{other}'"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key. Also used to apply sweep values.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "num_clients" | "K" => self.num_clients = parse_num(key, value)?,
            "attackers" | "f" => self.attackers = parse_num(key, value)?,
            "attacker_fraction" => {
                let frac: f64 = parse_num(key, value)?;
                if !(0.0..1.0).contains(&frac) {
                    return Err(FpdError::config(key, "must lie in [0, 1)"));
                }
                self.attackers = (frac * self.num_clients as f64).round() as usize;
            }
            "rounds" | "T" => self.rounds = parse_num(key, value)?,
            "local_epochs" | "E" => self.local_epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "q" => self.q = parse_num(key, value)?,
            "num_labels" => self.num_labels = parse_num(key, value)?,
            "feature_dim" => self.feature_dim = parse_num(key, value)?,
            "train_samples" => self.train_samples = parse_num(key, value)?,
            "test_samples" => self.test_samples = parse_num(key, value)?,
            "hidden" => self.hidden = parse_num(key, value)?,
            "min_size" => self.min_size = parse_num(key, value)?,
            "max_size" => self.max_size = parse_num(key, value)?,
            "attack" => {
                self.attack = value
                    .parse()
                    .map_err(|_| FpdError::config(key, format!("unknown attack '{value}'")))?
            }
            "epsilon" => self.attack_params.epsilon = parse_num(key, value)?,
            "z_max" => {
                self.attack_params.z_max = if value.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "defense" => self.defense = value.parse()?,
            "profile" => {
                self.profile = match value.to_ascii_lowercase().as_str() {
                    "mnist" | "mnist-like" => TaskProfile::MnistLike,
                    "cifar" | "cifar-like" => TaskProfile::CifarLike,
                    _ => return Err(FpdError::config(key, format!("unknown profile '{value}'"))),
                }
            }
            "alpha" => self.alpha = parse_num(key, value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "gamma" => {
                self.gamma = value
                    .split(';')
                    .map(|v| parse_num(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "lambda" => self.lambda = parse_num(key, value)?,
            "delta" => {
                self.delta = if value.eq_ignore_ascii_case("auto") {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "bootstrap_rounds" => self.bootstrap_rounds = parse_num(key, value)?,
            "min_selected" => self.min_selected = parse_num(key, value)?,
            "ae_epochs" => self.ae_epochs = parse_num(key, value)?,
            "ae_batch" => self.ae_batch = parse_num(key, value)?,
            "ae_lr" => self.ae_lr = parse_num(key, value)?,
            "buffer_capacity" => self.buffer_capacity = parse_num(key, value)?,
            "warmup" => self.warmup = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "repetitions" => self.repetitions = parse_num(key, value)?,
            "output" => self.output = PathBuf::from(value),
            "stage_selection" | "stage_colluding" | "stage_spectral" | "stage_denoise" => {
                let on = parse_bool(key, value)?;
                let mut stages = match self.defense {
                    DefenseKind::Fpd(s) => s,
                    _ => return Err(FpdError::config(key, "stage toggles need defense = fpd")),
                };
                match key {
                    "stage_selection" => stages.selection = on,
                    "stage_colluding" => stages.colluding = on,
                    "stage_spectral" => stages.spectral = on,
                    _ => stages.denoise = on,
                }
                self.defense = DefenseKind::Fpd(stages);
            }
            _ => return Err(FpdError::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(FpdError::config(field, why));
        if self.num_clients == 0 {
            return bad("num_clients", "must be positive".into());
        }
        if self.attackers >= self.num_clients {
            return bad("attackers", format!("need 0 <= f < K, got f={} K={}", self.attackers, self.num_clients));
        }
        if self.rounds == 0 {
            return bad("rounds", "must be at least 1".into());
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return bad("local_epochs", "epochs and batch size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive".into());
        }
        if self.dataset == DatasetSource::Synthetic {
            if self.num_labels < 2 || self.feature_dim == 0 {
                return bad("num_labels", "synthetic data needs >= 2 labels and a positive dimension".into());
            }
            if self.train_samples == 0 || self.test_samples == 0 {
                return bad("train_samples", "sample counts must be positive".into());
            }
            crate::data::validate_q(self.q, self.num_labels)?;
            if self.num_clients < self.num_labels {
                return bad("num_clients", format!("need K >= L = {}", self.num_labels));
            }
        }
        if self.hidden == 0 {
            return bad("hidden", "must be positive".into());
        }
        if self.min_size == 0 || self.min_size > self.max_size {
            return bad("min_size", format!("need 1 <= min_size <= max_size, got {}..{}", self.min_size, self.max_size));
        }
        if self.attack == AttackKind::None && self.attackers > 0 {
            log::info!("{} attackers configured with attack = none; they behave honestly", self.attackers);
        }
        if self.attack == AttackKind::Ipm && (self.attack_params.epsilon.is_nan() || self.attack_params.epsilon <= 0.0) {
            return bad("epsilon", "IPM epsilon must be positive".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions", "must be at least 1".into());
        }
        match self.defense {
            DefenseKind::Krum if self.num_clients < self.attackers + 3 => {
                return bad("defense", "krum needs K >= f + 3".into());
            }
            DefenseKind::Fpd(_) => self.fpd_config().validate()?,
            _ => {}
        }
        Ok(())
    }

    pub fn fpd_config(&self) -> FpdConfig {
        let stages = match self.defense {
            DefenseKind::Fpd(s) => s,
            _ => StageToggles::default(),
        };
        FpdConfig {
            selection: SelectionParams {
                alpha: self.alpha,
                beta: self.beta,
                bootstrap_rounds: self.bootstrap_rounds,
                min_selected: self.min_selected,
            },
            gamma: self.gamma.clone(),
            lambda: self.lambda,
            delta: self.delta.unwrap_or_else(|| self.profile.default_delta()),
            ae_schedule: AeSchedule { epochs: self.ae_epochs, batch_size: self.ae_batch, lr: self.ae_lr },
            buffer_capacity: self.buffer_capacity,
            warmup: self.warmup,
            stages,
        }
    }

    /// Seeds of the repetitions: `seed`, `seed + 1`, ...
    pub fn repetition_seeds(&self) -> Vec<u64> {
        (0..self.repetitions as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    /// Applies the seed override from the environment, if set.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = parse_num(SEED_ENV, v.trim())?;
        }
        Ok(())
    }

    pub fn attacker_fraction(&self) -> f64 {
        self.attackers as f64 / self.num_clients as f64
    }
}

/// One `--sweep key=v1,v2,...` axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl FromStr for SweepAxis {
    type Err = FpdError;

    fn from_str(s: &str) -> Result<Self> {
        let (key, values) = s
            .split_once('=')
            .ok_or_else(|| FpdError::config("sweep", format!("expected key=v1,v2,... got '{s}'")))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(FpdError::config("sweep", format!("no values for '{key}'")));
        }
        Ok(SweepAxis { key: key.trim().to_string(), values })
    }
}

/// Cartesian product of the axes applied on top of `base`, in order (the
/// last axis varies fastest). Each cell is validated.
pub fn expand_sweep(base: &ExperimentConfig, axes: &[SweepAxis]) -> Result<Vec<ExperimentConfig>> {
    let mut cells = vec![base.clone()];
    for axis in axes {
        let mut next = Vec::with_capacity(cells.len() * axis.values.len());
        for cell in &cells {
            for v in &axis.values {
                let mut c = cell.clone();
                c.set(&axis.key, v)?;
                next.push(c);
            }
        }
        cells = next;
    }
    for c in &cells {
        c.validate()?;
    }
    Ok(cells)
}
