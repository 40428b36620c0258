//! Adversary controller.
//!
//! The adversary sees every benign update of the round before crafting its
//! own. Colluding attacks (LIE, IPM) make all compromised clients upload one
//! shared vector; non-colluding attacks (label flipping, sign flipping) act
//! per client on the client's own data or update.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use statrs::function::erf::erf;

use crate::data::LabeledDataset;
use crate::error::{FpdError, Result};
use crate::fl::LocalUpdate;
use crate::vecmath::{check_dims, ClientId, ParamVector};

/// Noise multiplier used when the order-statistic rule gives `z <= 0`.
pub const LIE_FALLBACK_Z: f64 = 0.3;
pub const DEFAULT_IPM_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    None,
    Lie,
    Ipm,
    LabelFlip,
    SignFlip,
    /// First half (by sorted id) runs LIE, second half label flipping.
    Mixed,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Lie => "lie",
            AttackKind::Ipm => "ipm",
            AttackKind::LabelFlip => "lf",
            AttackKind::SignFlip => "sf",
            AttackKind::Mixed => "mixed",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = FpdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(AttackKind::None),
            "lie" => Ok(AttackKind::Lie),
            "ipm" => Ok(AttackKind::Ipm),
            "lf" | "label_flip" => Ok(AttackKind::LabelFlip),
            "sf" | "sign_flip" => Ok(AttackKind::SignFlip),
            "mixed" | "ma" => Ok(AttackKind::Mixed),
            other => Err(FpdError::config("attack", format!("unknown attack `{other}`"))),
        }
    }
}

/// What a single compromised client does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackerRole {
    Lie,
    Ipm,
    LabelFlip,
    SignFlip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackParams {
    /// LIE noise multiplier; `None` derives it from `(K, f)`.
    pub z_max: Option<f64>,
    pub epsilon: f64,
}

impl Default for AttackParams {
    fn default() -> Self {
        AttackParams {
            z_max: None,
            epsilon: DEFAULT_IPM_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub compromised: BTreeSet<ClientId>,
    pub params: AttackParams,
}

impl AttackSpec {
    pub fn new(
        kind: AttackKind,
        compromised: BTreeSet<ClientId>,
        params: AttackParams,
        num_clients: usize,
    ) -> Result<Self> {
        if compromised.len() >= num_clients && num_clients > 0 {
            return Err(FpdError::config(
                "f",
                format!("{} attackers out of {num_clients} clients", compromised.len()),
            ));
        }
        if let Some(bad) = compromised.iter().find(|c| c.0 >= num_clients) {
            return Err(FpdError::config("compromised", format!("unknown client {bad}")));
        }
        if kind == AttackKind::Ipm && params.epsilon <= 0.0 {
            return Err(FpdError::config("epsilon", "IPM epsilon must be positive"));
        }
        Ok(AttackSpec {
            kind,
            compromised,
            params,
        })
    }

    pub fn none() -> Self {
        AttackSpec {
            kind: AttackKind::None,
            compromised: BTreeSet::new(),
            params: AttackParams::default(),
        }
    }

    pub fn role(&self, client: ClientId) -> Option<AttackerRole> {
        if !self.compromised.contains(&client) {
            return None;
        }
        match self.kind {
            AttackKind::None => None,
            AttackKind::Lie => Some(AttackerRole::Lie),
            AttackKind::Ipm => Some(AttackerRole::Ipm),
            AttackKind::LabelFlip => Some(AttackerRole::LabelFlip),
            AttackKind::SignFlip => Some(AttackerRole::SignFlip),
            AttackKind::Mixed => {
                let lie_half = self.compromised.len().div_ceil(2);
                let rank = self.compromised.range(..client).count();
                Some(if rank < lie_half {
                    AttackerRole::Lie
                } else {
                    AttackerRole::LabelFlip
                })
            }
        }
    }

    /// LIE multiplier for `num_clients` total clients.
    pub fn lie_z(&self, num_clients: usize) -> f64 {
        self.params
            .z_max
            .unwrap_or_else(|| lie_default_z(num_clients, self.compromised.len()))
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Inverse of [`normal_cdf`] by bisection, to `tol` in `z`.
pub fn normal_quantile(p: f64, tol: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Order-statistic LIE multiplier: `Φ(z) = (K - f - s) / (K - f)` with
/// `s = ⌊K/2⌋ + 1 - f`. Falls back to [`LIE_FALLBACK_Z`] whenever that
/// target is not a probability in `(0.5, 1)`.
pub fn lie_default_z(num_clients: usize, f: usize) -> f64 {
    if f == 0 || f >= num_clients {
        return LIE_FALLBACK_Z;
    }
    let k = num_clients as f64;
    let f = f as f64;
    let s = (num_clients / 2) as f64 + 1.0 - f;
    let target = (k - f - s) / (k - f);
    if !(target > 0.5 && target < 1.0) {
        return LIE_FALLBACK_Z;
    }
    let z = normal_quantile(target, 1e-12);
    if z <= 0.0 {
        LIE_FALLBACK_Z
    } else {
        z
    }
}

fn per_coordinate_mean_std(benign: &[ParamVector]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = benign
        .first()
        .ok_or_else(|| FpdError::Attack("no benign updates to craft from".into()))?;
    let dim = first.dim();
    let n = benign.len() as f64;
    let mut mean = vec![0.0; dim];
    for b in benign {
        check_dims(dim, b.dim())?;
        for (m, v) in mean.iter_mut().zip(b.as_slice()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for b in benign {
        for ((s, v), m) in var.iter_mut().zip(b.as_slice()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
    Ok((mean, std))
}

/// `μ - z·σ` over the benign updates (population standard deviation).
pub fn lie_attack(benign: &[ParamVector], z_max: f64) -> Result<ParamVector> {
    let (mean, std) = per_coordinate_mean_std(benign)?;
    ParamVector::new(
        mean.iter()
            .zip(&std)
            .map(|(m, s)| m - z_max * s)
            .collect(),
    )
}

/// `-ε · mean(benign)`.
pub fn ipm_attack(benign: &[ParamVector], epsilon: f64) -> Result<ParamVector> {
    if epsilon <= 0.0 {
        return Err(FpdError::Attack(format!("epsilon must be positive, got {epsilon}")));
    }
    let (mean, _) = per_coordinate_mean_std(benign)?;
    ParamVector::new(mean.into_iter().map(|m| -epsilon * m).collect())
}

/// Maps every label `l` to `L - 1 - l`.
pub fn label_flip(ds: &LabeledDataset) -> LabeledDataset {
    let last = ds.num_labels().saturating_sub(1);
    ds.map_labels(|l| last - l)
        .expect("flipped labels stay in range")
}

pub fn sign_flip(update: &ParamVector) -> ParamVector {
    update.neg()
}

/// Replaces the uploads of compromised clients in place.
///
/// `updates` holds honestly trained uploads of every selected client
/// (label-flipping attackers already trained on flipped data). Colluding
/// attackers craft from the benign uploads of the round, or from all
/// uploads when no benign client was selected.
pub fn apply_adversary(spec: &AttackSpec, num_clients: usize, updates: &mut [LocalUpdate]) -> Result<()> {
    if spec.kind == AttackKind::None || spec.compromised.is_empty() {
        return Ok(());
    }
    let roles: Vec<Option<AttackerRole>> = updates.iter().map(|u| spec.role(u.client)).collect();
    let needs_lie = roles.contains(&Some(AttackerRole::Lie));
    let needs_ipm = roles.contains(&Some(AttackerRole::Ipm));
    let mut crafted_lie = None;
    let mut crafted_ipm = None;
    if needs_lie || needs_ipm {
        let mut benign: Vec<ParamVector> = updates
            .iter()
            .filter(|u| !spec.compromised.contains(&u.client))
            .map(|u| u.delta.clone())
            .collect();
        if benign.is_empty() {
            benign = updates.iter().map(|u| u.delta.clone()).collect();
        }
        if needs_lie {
            crafted_lie = Some(lie_attack(&benign, spec.lie_z(num_clients))?);
        }
        if needs_ipm {
            crafted_ipm = Some(ipm_attack(&benign, spec.params.epsilon)?);
        }
    }
    for (u, role) in updates.iter_mut().zip(roles) {
        match role {
            Some(AttackerRole::Lie) => u.delta = crafted_lie.clone().expect("crafted above"),
            Some(AttackerRole::Ipm) => u.delta = crafted_ipm.clone().expect("crafted above"),
            Some(AttackerRole::SignFlip) => u.delta = sign_flip(&u.delta),
            Some(AttackerRole::LabelFlip) | None => {}
        }
    }
    Ok(())
}
