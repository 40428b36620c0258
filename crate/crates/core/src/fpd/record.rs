//! Per-client reputation and per-round verdict bookkeeping.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{FpdError, Result};
use crate::vecmath::{ClientId, ParamVector};

/// Length of the "recent" verdict window.
pub const RECENT_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Benign,
    Malicious,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClientRecord {
    pub overall_benign: u32,
    pub overall_malicious: u32,
    recent: VecDeque<Verdict>,
    /// Momentum of the last accepted update; `None` is the zero vector.
    pub momentum: Option<ParamVector>,
    /// Round in which `momentum` was last refreshed.
    pub last_selected: Option<usize>,
}

impl ClientRecord {
    pub fn new() -> Self {
        ClientRecord::default()
    }

    /// Record with explicit counts; `recent` is truncated to the window,
    /// keeping the newest (last) entries.
    pub fn with_counts(overall_benign: u32, overall_malicious: u32, recent: &[Verdict]) -> Self {
        let skip = recent.len().saturating_sub(RECENT_WINDOW);
        ClientRecord {
            overall_benign,
            overall_malicious,
            recent: recent[skip..].iter().copied().collect(),
            momentum: None,
            last_selected: None,
        }
    }

    pub fn recent(&self) -> impl Iterator<Item = Verdict> + '_ {
        self.recent.iter().copied()
    }

    pub fn recent_len(&self) -> usize {
        self.recent.len()
    }

    pub fn recent_benign(&self) -> u32 {
        self.recent.iter().filter(|v| **v == Verdict::Benign).count() as u32
    }

    pub fn recent_malicious(&self) -> u32 {
        self.recent.iter().filter(|v| **v == Verdict::Malicious).count() as u32
    }

    /// Counts the verdict overall and pushes it into the bounded window.
    pub fn push_verdict(&mut self, verdict: Verdict) {
        match verdict {
            Verdict::Benign => self.overall_benign += 1,
            Verdict::Malicious => self.overall_malicious += 1,
        }
        if self.recent.len() == RECENT_WINDOW {
            self.recent.pop_front();
        }
        self.recent.push_back(verdict);
    }
}

/// What every stage decided in one round.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StageVerdicts {
    pub selected: BTreeSet<ClientId>,
    pub removed_colluding: BTreeSet<ClientId>,
    pub removed_spectral: BTreeSet<ClientId>,
    pub denoised: BTreeSet<ClientId>,
    pub survivors: BTreeSet<ClientId>,
}

impl StageVerdicts {
    pub fn removed(&self) -> BTreeSet<ClientId> {
        self.removed_colluding
            .union(&self.removed_spectral)
            .copied()
            .collect()
    }

    /// Removed sets are disjoint subsets of `selected`, `survivors` is the
    /// rest, and `denoised ⊆ survivors`.
    pub fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(FpdError::config("verdicts", why.to_string()));
        if !self.removed_colluding.is_disjoint(&self.removed_spectral) {
            return bad("removed sets overlap");
        }
        if !self.removed_colluding.is_subset(&self.selected)
            || !self.removed_spectral.is_subset(&self.selected)
        {
            return bad("removed client was not selected");
        }
        let expected: BTreeSet<ClientId> = self.selected.difference(&self.removed()).copied().collect();
        if expected != self.survivors {
            return bad("survivors != selected - removed");
        }
        if !self.denoised.is_subset(&self.survivors) {
            return bad("denoised client is not a survivor");
        }
        Ok(())
    }
}

/// Applies one round of verdicts: removed clients are judged malicious and
/// keep their old momentum; survivors (denoised ones included) are judged
/// benign and take the momentum computed this round.
pub fn record_verdicts(
    records: &mut BTreeMap<ClientId, ClientRecord>,
    verdicts: &StageVerdicts,
    momenta: &BTreeMap<ClientId, ParamVector>,
    round: usize,
) -> Result<()> {
    verdicts.validate()?;
    for id in verdicts.removed() {
        records.entry(id).or_default().push_verdict(Verdict::Malicious);
    }
    for id in &verdicts.survivors {
        let record = records.entry(*id).or_default();
        record.push_verdict(Verdict::Benign);
        if let Some(m) = momenta.get(id) {
            record.momentum = Some(m.clone());
            record.last_selected = Some(round);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> BTreeSet<ClientId> {
        v.iter().map(|&i| ClientId(i)).collect()
    }

    fn verdicts(selected: &[usize], coll: &[usize], spec: &[usize], den: &[usize]) -> StageVerdicts {
        let mut v = StageVerdicts {
            selected: set(selected),
            removed_colluding: set(coll),
            removed_spectral: set(spec),
            denoised: set(den),
            survivors: BTreeSet::new(),
        };
        v.survivors = v.selected.difference(&v.removed()).copied().collect();
        v
    }

    #[test]
    fn test_colluding_removal_keeps_momentum() {
        let mut records = BTreeMap::new();
        let old = ParamVector::new(vec![1.0, 2.0]).unwrap();
        let mut r = ClientRecord::new();
        r.momentum = Some(old.clone());
        r.last_selected = Some(3);
        records.insert(ClientId(0), r);
        let momenta: BTreeMap<_, _> = [(ClientId(0), ParamVector::new(vec![9.0, 9.0]).unwrap())].into();
        record_verdicts(&mut records, &verdicts(&[0, 1], &[0], &[], &[]), &momenta, 5).unwrap();
        let r = &records[&ClientId(0)];
        assert_eq!(r.overall_malicious, 1);
        assert_eq!(r.momentum, Some(old));
        assert_eq!(r.last_selected, Some(3));
        assert_eq!(records[&ClientId(1)].overall_benign, 1);
    }

    #[test]
    fn test_denoised_client_is_benign() {
        let mut records = BTreeMap::new();
        let m = ParamVector::new(vec![0.5]).unwrap();
        let momenta: BTreeMap<_, _> = [(ClientId(2), m.clone())].into();
        record_verdicts(&mut records, &verdicts(&[2, 3], &[], &[3], &[2]), &momenta, 7).unwrap();
        assert_eq!(records[&ClientId(2)].overall_benign, 1);
        assert_eq!(records[&ClientId(2)].momentum, Some(m));
        assert_eq!(records[&ClientId(2)].last_selected, Some(7));
        assert_eq!(records[&ClientId(3)].overall_malicious, 1);
    }

    #[test]
    fn test_recent_window_evicts_oldest() {
        let mut r = ClientRecord::new();
        r.push_verdict(Verdict::Malicious);
        for _ in 0..9 {
            r.push_verdict(Verdict::Benign);
        }
        assert_eq!(r.recent_len(), 10);
        assert_eq!(r.recent_malicious(), 1);
        r.push_verdict(Verdict::Benign);
        assert_eq!(r.recent_len(), 10);
        assert_eq!(r.recent_malicious(), 0);
        assert_eq!(r.recent_benign(), 10);
        assert_eq!(r.overall_benign + r.overall_malicious, 11);
    }

    #[test]
    fn test_counts_conserved_per_round() {
        let mut records = BTreeMap::new();
        let v = verdicts(&[0, 1, 2, 3, 4], &[1], &[3, 4], &[0]);
        record_verdicts(&mut records, &v, &BTreeMap::new(), 1).unwrap();
        record_verdicts(&mut records, &v, &BTreeMap::new(), 2).unwrap();
        for id in 0..5 {
            let r = &records[&ClientId(id)];
            assert_eq!(r.overall_benign + r.overall_malicious, 2);
        }
    }

    #[test]
    fn test_inconsistent_verdicts_rejected() {
        let mut v = verdicts(&[0, 1], &[0], &[], &[]);
        v.removed_spectral.insert(ClientId(0));
        assert!(v.validate().is_err());
        let mut v = verdicts(&[0, 1], &[], &[], &[]);
        v.survivors.remove(&ClientId(1));
        assert!(record_verdicts(&mut BTreeMap::new(), &v, &BTreeMap::new(), 1).is_err());
    }

    #[test]
    fn test_with_counts_truncates_window() {
        let recent = vec![Verdict::Benign; 12];
        let r = ClientRecord::with_counts(12, 0, &recent);
        assert_eq!(r.recent_len(), RECENT_WINDOW);
    }
}
