//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use fpd_core::baselines::{faba, krum_index, median};
use fpd_core::fpd::denoise::Autoencoder;
use fpd_core::fpd::record::{ClientRecord, Verdict};
use fpd_core::fpd::selection::{beta_mean, select_clients, SelectionParams};
use fpd_core::fpd::{colluding_scores, spectral_filter};
use fpd_core::harness::{run_cells, run_experiment, ExperimentConfig, ExperimentRun};
use fpd_core::model::{MlpShape, Model};
use fpd_core::rng;
use fpd_core::vecmath::normalize;
use fpd_core::{ClientId, ParamVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn pv(v: Vec<f64>) -> ParamVector {
    ParamVector::new(v).unwrap()
}

fn gaussian(r: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(r)).collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn central_difference(params: &[f64], h: f64, loss: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = loss(&p);
            p[i] = orig - h;
            let down = loss(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

// 1 ------------------------------------------------------------------------

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let h = 1e-5;
    let mut r = rng::stream(101, &[]);
    let shape = MlpShape::new(6, 7, 4);
    let (mut mlp_points, mut mlp_worst) = (0, 0.0f64);
    while mlp_points < 100 {
        let model = Model::init(shape, r.random());
        let x = gaussian(&mut r, 6);
        if model.hidden_pre_activations(&x).iter().any(|a| a.abs() < 1e-3) {
            continue;
        }
        let label = r.random_range(0..4);
        let (_, g) = model.loss_and_gradient([(x.as_slice(), label)]);
        let numeric = central_difference(model.params().as_slice(), h, |p| {
            Model::new(shape, pv(p.to_vec())).unwrap().loss_and_gradient([(x.as_slice(), label)]).0
        });
        mlp_worst = mlp_worst.max(rel_err(&g, &numeric));
        mlp_points += 1;
    }
    let mut ae_worst = 0.0f64;
    for _ in 0..100 {
        let ae = Autoencoder::new(10, r.random());
        let hidden = ae.hidden_dim();
        let mut params = ae.params().to_vec();
        params.iter_mut().for_each(|p| *p += 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut r));
        let ae = Autoencoder::from_params(10, hidden, params).unwrap();
        let xs: Vec<Vec<f64>> = (0..3).map(|_| gaussian(&mut r, 10)).collect();
        let batch: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let (_, g) = ae.loss_and_gradient(&batch);
        let numeric = central_difference(ae.params(), h, |p| {
            Autoencoder::from_params(10, hidden, p.to_vec()).unwrap().loss_and_gradient(&batch).0
        });
        ae_worst = ae_worst.max(rel_err(&g, &numeric));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mlp_worst < 1e-4 && ae_worst < 1e-4 && secs < 10.0,
        format!("worst relative error mlp {mlp_worst:.2e}, autoencoder {ae_worst:.2e} over 100 points each; {secs:.2}s"),
    )
}

// 2 ------------------------------------------------------------------------

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns
/// eigenvalues and eigenvectors (as columns).
#[allow(clippy::needless_range_loop)]
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Independent re-derivation of the spectral detector.
fn spectral_oracle(ids: &[ClientId], vs: &[Vec<f64>], delta: f64) -> BTreeSet<ClientId> {
    let (n, d) = (vs.len(), vs[0].len());
    let mu: Vec<f64> = (0..d).map(|j| vs.iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
    let g: Vec<Vec<f64>> = vs.iter().map(|v| v.iter().zip(&mu).map(|(a, b)| a - b).collect()).collect();
    let gram: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|k| g[i].iter().zip(&g[k]).map(|(a, b)| a * b).sum()).collect()).collect();
    if gram.iter().flatten().all(|x| *x == 0.0) {
        return BTreeSet::new();
    }
    let (vals, vecs) = jacobi_eigen(gram);
    let top = (0..n).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    let u: Vec<f64> = vecs.iter().map(|row| row[top]).collect();
    let mut v: Vec<f64> = (0..d).map(|j| (0..n).map(|i| u[i] * g[i][j]).sum()).collect();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    let tau: Vec<f64> = g.iter().map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().powi(2)).collect();

    let (lo, hi) = tau.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), t| (l.min(*t), h.max(*t)));
    if hi - lo <= 1e-12 * hi {
        return BTreeSet::new();
    }
    let mut best = (f64::INFINITY, 0u32);
    for mask in 1..(1u32 << n) - 1 {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, t) in tau.iter().enumerate() {
            if mask >> i & 1 == 1 { a.push(*t) } else { b.push(*t) }
        }
        let sse = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        let cost = sse(&a) + sse(&b);
        if cost < best.0 {
            best = (cost, mask);
        }
    }
    let in_a: Vec<bool> = (0..n).map(|i| best.1 >> i & 1 == 1).collect();
    let mean_of = |sel: bool| {
        let idx: Vec<usize> = (0..n).filter(|&i| in_a[i] == sel).collect();
        let t = idx.iter().map(|&i| tau[i]).sum::<f64>() / idx.len() as f64;
        let m: Vec<f64> = (0..d).map(|j| idx.iter().map(|&i| vs[i][j]).sum::<f64>() / idx.len() as f64).collect();
        (t, idx, m)
    };
    let (ta, ia, ma) = mean_of(true);
    let (tb, ib, mb) = mean_of(false);
    let ((_, il, ml), (_, _, ms)) = if ta > tb { ((ta, ia, ma), (tb, ib, mb)) } else { ((tb, ib, mb), (ta, ia, ma)) };
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let cos = if norm(&ml) == 0.0 || norm(&ms) == 0.0 {
        0.0
    } else {
        ml.iter().zip(&ms).map(|(a, b)| a * b).sum::<f64>() / (norm(&ml) * norm(&ms))
    };
    if cos > delta {
        BTreeSet::new()
    } else {
        il.into_iter().map(|i| ids[i]).collect()
    }
}

fn criterion_spectral_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(202, &[]);
    let (mut agree, mut nonempty) = (0, 0);
    let mut first_mismatch = None;
    for case in 0..200 {
        let n = r.random_range(2..=12);
        let d = r.random_range(2..=20);
        let base = gaussian(&mut r, d);
        let outliers = r.random_range(0..=n / 2);
        let spread = r.random_range(0.2..2.0);
        let vs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let sign = if i < outliers { -1.0 } else { 1.0 };
                let v: Vec<f64> = base.iter().map(|b| sign * b + spread * Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
                normalize(&pv(v)).unwrap().into_inner()
            })
            .collect();
        let delta = if case % 2 == 0 { -0.1 } else { 0.0 };
        let ids: Vec<ClientId> = (0..n).map(ClientId).collect();
        let map: BTreeMap<ClientId, ParamVector> = ids.iter().zip(&vs).map(|(id, v)| (*id, pv(v.clone()))).collect();
        let got = spectral_filter(&map, delta, case as u64).unwrap().removed;
        let want = spectral_oracle(&ids, &vs, delta);
        if !want.is_empty() {
            nonempty += 1;
        }
        if got == want {
            agree += 1;
        } else if first_mismatch.is_none() {
            first_mismatch = Some(case);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        agree == 200 && secs < 30.0,
        format!("{agree}/200 instances identical ({nonempty} with removals), first mismatch {first_mismatch:?}; {secs:.2}s"),
    )
}

// 3 ------------------------------------------------------------------------

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
}

fn criterion_colluding() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(303, &[]);
    let mut exact = 0;
    for _ in 0..500 {
        let d = 30;
        let benign_n = r.random_range(3..=15);
        let f = r.random_range(2..=8);
        let mut pool: Vec<Vec<f64>> = Vec::new();
        while pool.len() < benign_n + 1 {
            let cand = gaussian(&mut r, d);
            if pool.iter().all(|p| cos(p, &cand) <= 0.7) {
                pool.push(cand);
            }
        }
        let attack = pool.pop().unwrap();
        let mut updates = BTreeMap::new();
        let mut attackers = BTreeSet::new();
        let total = benign_n + f;
        let mut order: Vec<usize> = (0..total).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut r);
        for (slot, &id) in order.iter().enumerate() {
            let v = if slot < f {
                attackers.insert(ClientId(id));
                attack.clone()
            } else {
                pool[slot - f].clone()
            };
            updates.insert(ClientId(id), pv(v));
        }
        let removed = colluding_scores(&updates, 0.8).unwrap().removed;
        if removed == attackers {
            exact += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(exact == 500 && secs < 10.0, format!("precision = recall = 1 on {exact}/500 instances; {secs:.2}s"))
}

// 4 ------------------------------------------------------------------------

fn krum_oracle(vs: &[Vec<f64>], f: usize) -> usize {
    let n = vs.len();
    let mut scores = Vec::new();
    for i in 0..n {
        let mut ds: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| vs[i].iter().zip(&vs[j]).map(|(a, b)| (a - b).powi(2)).sum()).collect();
        ds.sort_by(f64::total_cmp);
        scores.push(ds[..n - f - 2].iter().sum::<f64>());
    }
    let mut best = 0;
    for i in 1..n {
        if scores[i] < scores[best] {
            best = i;
        }
    }
    best
}

fn mean_rows(rows: &[&Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect()
}

fn faba_oracle(vs: &[Vec<f64>], f: usize) -> Vec<f64> {
    let mut rest: Vec<&Vec<f64>> = vs.iter().collect();
    for _ in 0..f {
        let mu = mean_rows(&rest);
        let dist: Vec<f64> = rest.iter().map(|v| v.iter().zip(&mu).map(|(a, b)| (a - b).powi(2)).sum()).collect();
        let mut worst = 0;
        for i in 1..dist.len() {
            if dist[i] > dist[worst] {
                worst = i;
            }
        }
        rest.remove(worst);
    }
    mean_rows(&rest)
}

fn median_oracle(vs: &[Vec<f64>]) -> Vec<f64> {
    (0..vs[0].len())
        .map(|j| {
            let mut col: Vec<f64> = vs.iter().map(|v| v[j]).collect();
            col.sort_by(f64::total_cmp);
            let n = col.len();
            if n % 2 == 1 { col[n / 2] } else { (col[n / 2 - 1] + col[n / 2]) / 2.0 }
        })
        .collect()
}

fn criterion_baselines() -> Outcome {
    let mut r = rng::stream(404, &[]);
    let (mut k_ok, mut f_ok, mut m_ok) = (0, 0, 0);
    for _ in 0..200 {
        let n = r.random_range(3..=10);
        let d = r.random_range(1..=8);
        let vs: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut r, d)).collect();
        let pvs: Vec<ParamVector> = vs.iter().map(|v| pv(v.clone())).collect();
        let f = r.random_range(0..=n - 3);
        if krum_index(&pvs, f).unwrap() == krum_oracle(&vs, f) {
            k_ok += 1;
        }
        let f = r.random_range(0..n);
        if faba(&pvs, f).unwrap().as_slice() == faba_oracle(&vs, f).as_slice() {
            f_ok += 1;
        }
        if median(&pvs).unwrap().as_slice() == median_oracle(&vs).as_slice() {
            m_ok += 1;
        }
    }
    outcome(k_ok == 200 && f_ok == 200 && m_ok == 200, format!("exact agreement krum {k_ok}/200, faba {f_ok}/200, median {m_ok}/200"))
}

// 5 ------------------------------------------------------------------------

fn criterion_selection() -> Outcome {
    let draws = 20_000u64;
    let params = SelectionParams::default();
    let mut good_turned_bad = vec![Verdict::Benign];
    good_turned_bad.extend([Verdict::Malicious; 9]);
    let cases: Vec<(&str, ClientRecord, usize, f64)> = vec![
        ("bootstrap t=5", ClientRecord::with_counts(0, 9, &[Verdict::Malicious; 9]), 5, 1.0),
        ("fresh client", ClientRecord::new(), 11, 0.5),
        ("good turned bad", ClientRecord::with_counts(9, 1, &good_turned_bad), 11, 1.0 / 6.0),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, probe, t, expected) in cases {
        if t > params.bootstrap_rounds {
            assert!((beta_mean(&probe, 1.0, 1.0) - expected).abs() < 1e-12);
        }
        let mut records: BTreeMap<ClientId, ClientRecord> = (1..=8)
            .map(|i| (ClientId(i), ClientRecord::with_counts(200, 0, &[Verdict::Benign; 10])))
            .collect();
        records.insert(ClientId(0), probe);
        let hits = (0..draws).filter(|s| select_clients(&records, t, &params, *s).contains(&ClientId(0))).count();
        let rate = hits as f64 / draws as f64;
        pass &= (rate - expected).abs() <= 0.02;
        parts.push(format!("{name}: {rate:.4} vs {expected:.4}"));
    }
    outcome(pass, parts.join(", "))
}

// 6 ------------------------------------------------------------------------

fn criterion_determinism() -> Outcome {
    let cfg = ExperimentConfig::parse(
        "K = 20\nf = 6\nT = 15\nattack = mixed\ndefense = fpd\ntrain_samples = 4000\ntest_samples = 1000\nrepetitions = 2\nwarmup = 16\n",
    )
    .unwrap();
    let baseline = ExperimentConfig { defense: "krum".parse().unwrap(), ..cfg.clone() };
    let cells = vec![cfg, baseline];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = run_cells(&cells, a.path()).unwrap();
    let pb = run_cells(&cells, b.path()).unwrap();
    let mut same = true;
    let mut files = 0;
    for name in ["runs.csv", "summary.csv", "summary.txt"].map(String::from).into_iter().chain(
        pa.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()),
    ) {
        files += 1;
        same &= std::fs::read(a.path().join(&name)).unwrap() == std::fs::read(b.path().join(&name)).unwrap();
    }
    same &= pa.len() == pb.len();
    outcome(same, format!("{files} output files byte-identical across two runs: {same}"))
}

// 7-12 ---------------------------------------------------------------------

const SCALED: &str = "K = 20\nT = 40\nE = 3\nq = 0.5\nnum_labels = 10\nfeature_dim = 20\n\
                      train_samples = 6000\ntest_samples = 2000\nrepetitions = 3\nseed = 1\n";

fn scaled(defense: &str, attack: &str, f: usize) -> ExperimentConfig {
    ExperimentConfig::parse(&format!("{SCALED}defense = {defense}\nattack = {attack}\nf = {f}\n")).unwrap()
}

struct Cell {
    runs: Vec<ExperimentRun>,
}

impl Cell {
    fn accuracy(&self) -> f64 {
        self.runs.iter().map(ExperimentRun::final_accuracy).sum::<f64>() / self.runs.len() as f64
    }

    /// Mean per-round recall of the spectral stage alone, over rounds 11-40.
    fn spectral_recall(&self) -> f64 {
        let mut values = Vec::new();
        for run in &self.runs {
            for o in run.outcomes.iter().filter(|o| o.round > 10) {
                let v = &o.verdicts;
                let reaching: BTreeSet<ClientId> = v
                    .selected
                    .iter()
                    .filter(|id| run.compromised.contains(id) && !v.removed_colluding.contains(id))
                    .copied()
                    .collect();
                if !reaching.is_empty() {
                    let caught = v.removed_spectral.intersection(&reaching).count();
                    values.push(caught as f64 / reaching.len() as f64);
                }
            }
        }
        values.iter().sum::<f64>() / values.len().max(1) as f64
    }

    /// Mean per-round fraction of selected benign clients removed by the
    /// colluding or spectral stage, over rounds 11-40.
    fn benign_removal(&self) -> f64 {
        let mut values = Vec::new();
        for run in &self.runs {
            for o in run.outcomes.iter().filter(|o| o.round > 10) {
                let v = &o.verdicts;
                let benign = v.selected.iter().filter(|id| !run.compromised.contains(id)).count();
                if benign > 0 {
                    let removed = v.removed().iter().filter(|id| !run.compromised.contains(id)).count();
                    values.push(removed as f64 / benign as f64);
                }
            }
        }
        values.iter().sum::<f64>() / values.len().max(1) as f64
    }
}

fn run_scaled(specs: &[(&'static str, &'static str, &'static str, usize)]) -> BTreeMap<&'static str, Cell> {
    let jobs: Vec<(&'static str, ExperimentConfig, u64)> = specs
        .iter()
        .flat_map(|(name, defense, attack, f)| {
            let cfg = scaled(defense, attack, *f);
            cfg.repetition_seeds().into_iter().map(move |s| (*name, cfg.clone(), s))
        })
        .collect();
    let runs: Vec<(&'static str, ExperimentRun)> =
        jobs.par_iter().map(|(name, cfg, seed)| (*name, run_experiment(cfg, *seed).unwrap())).collect();
    let mut cells: BTreeMap<&'static str, Cell> = BTreeMap::new();
    for (name, run) in runs {
        cells.entry(name).or_insert(Cell { runs: Vec::new() }).runs.push(run);
    }
    cells
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "gradient correctness", criterion_gradients()),
        (2, "spectral filter oracle equivalence", criterion_spectral_oracle()),
        (3, "colluding filter exactness", criterion_colluding()),
        (4, "krum/faba/median oracle equivalence", criterion_baselines()),
        (5, "selection statistics", criterion_selection()),
        (6, "determinism", criterion_determinism()),
    ];

    let start = Instant::now();
    let cells = run_scaled(&[
        ("fedavg-none", "fedavg", "none", 0),
        ("fpd-none", "fpd", "none", 0),
        ("fpd-lie-10", "fpd", "lie", 2),
        ("fpd-lie-45", "fpd", "lie", 9),
        ("fedavg-lie-45", "fedavg", "lie", 9),
        ("fpd-ipm-30", "fpd", "ipm", 6),
        ("fedavg-ipm-30", "fedavg", "ipm", 6),
        ("fpd-sf-30", "fpd", "sf", 6),
        ("fpd-lie-30", "fpd", "lie", 6),
        ("fpd-no-colluding-lie-30", "fpd-no-colluding", "lie", 6),
        ("fpd-no-spectral-sf-30", "fpd-no-spectral", "sf", 6),
    ]);
    let acc = |k: &str| cells[k].accuracy();
    let baseline = acc("fedavg-none");
    println!("scaled cells finished in {:.1}s", start.elapsed().as_secs_f64());
    for (name, cell) in &cells {
        let per_seed: Vec<String> = cell.runs.iter().map(|r| pct(r.final_accuracy())).collect();
        println!("  {name:<26} mean {}  seeds [{}]", pct(cell.accuracy()), per_seed.join(", "));
    }

    let gap = baseline - acc("fpd-none");
    results.push((7, "no-attack parity", outcome(gap <= 0.03, format!("fedavg {} vs fpd {} (gap {:.2} pts)", pct(baseline), pct(acc("fpd-none")), 100.0 * gap))));

    let fpd_drift = acc("fpd-lie-10") - acc("fpd-lie-45");
    let fedavg_loss = baseline - acc("fedavg-lie-45");
    results.push((
        8,
        "LIE robustness trend",
        outcome(
            fpd_drift <= 0.05 && fedavg_loss >= 0.10,
            format!(
                "fpd 10% {} -> 45% {} (drop {:.2} pts, need <= 5); fedavg loses {:.2} pts at 45% (need >= 10)",
                pct(acc("fpd-lie-10")),
                pct(acc("fpd-lie-45")),
                100.0 * fpd_drift,
                100.0 * fedavg_loss
            ),
        ),
    ));

    let margin = acc("fpd-ipm-30") - acc("fedavg-ipm-30");
    let ipm_gap = baseline - acc("fpd-ipm-30");
    results.push((
        9,
        "IPM robustness",
        outcome(
            margin >= 0.10 && ipm_gap <= 0.05,
            format!(
                "fpd {} vs fedavg {} under attack (margin {:.2} pts, need >= 10); {:.2} pts below no-attack (need <= 5)",
                pct(acc("fpd-ipm-30")),
                pct(acc("fedavg-ipm-30")),
                100.0 * margin,
                100.0 * ipm_gap
            ),
        ),
    ));

    let sf_gap = baseline - acc("fpd-sf-30");
    let recall = cells["fpd-sf-30"].spectral_recall();
    results.push((
        10,
        "non-colluding coverage",
        outcome(
            sf_gap <= 0.05 && recall >= 0.8,
            format!("fpd under SF {} ({:.2} pts below no-attack, need <= 5); spectral recall rounds 11-40 {recall:.3} (need >= 0.8)", pct(acc("fpd-sf-30")), 100.0 * sf_gap),
        ),
    ));

    let no_coll = acc("fpd-lie-30") - acc("fpd-no-colluding-lie-30");
    let no_spec = acc("fpd-sf-30") - acc("fpd-no-spectral-sf-30");
    results.push((
        11,
        "ablation echo",
        outcome(
            no_coll >= 0.02 && no_spec >= 0.02,
            format!("removing colluding filter under LIE costs {:.2} pts; removing spectral filter under SF costs {:.2} pts (need >= 2 each)", 100.0 * no_coll, 100.0 * no_spec),
        ),
    ));

    let fp = cells["fpd-none"].benign_removal();
    results.push((12, "false-positive audit", outcome(fp <= 0.05, format!("mean benign removal fraction rounds 11-40: {fp:.4} (need <= 0.05)"))));

    println!();
    let mut failed = 0;
    for (n, name, o) in &results {
        if !o.pass {
            failed += 1;
        }
        println!("criterion {n:>2} {:<4} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("\n{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
