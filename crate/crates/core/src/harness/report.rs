//! Per-round CSV logs, the run manifest and summary tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::run::{run_experiment, ExperimentRun};
use crate::error::{FpdError, Result};
use crate::vecmath::ClientId;

pub const ROUND_HEADER: &str =
    "round,defense,attack,selected,removed_colluding,removed_spectral,denoised,accuracy,precision,recall,seed";
pub const MANIFEST_FILE: &str = "runs.csv";
const MANIFEST_HEADER: &str = "file,defense,attack,attackers,num_clients,q";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

fn join_ids(ids: &BTreeSet<ClientId>) -> String {
    ids.iter().map(|id| id.0.to_string()).collect::<Vec<_>>().join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Appends one row per round of `run` to `out`.
pub fn write_rounds(out: &mut String, cfg: &ExperimentConfig, run: &ExperimentRun) {
    for o in &run.outcomes {
        let v = &o.verdicts;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            o.round,
            cfg.defense,
            cfg.attack,
            join_ids(&v.selected),
            join_ids(&v.removed_colluding),
            join_ids(&v.removed_spectral),
            join_ids(&v.denoised),
            o.accuracy,
            opt(o.precision),
            opt(o.recall),
            run.seed
        );
    }
}

/// CSV text for every repetition of one config.
pub fn rounds_csv(cfg: &ExperimentConfig, runs: &[ExperimentRun]) -> String {
    let mut out = String::from(ROUND_HEADER);
    out.push('\n');
    for run in runs {
        write_rounds(&mut out, cfg, run);
    }
    out
}

pub fn cell_file_name(index: usize, cfg: &ExperimentConfig) -> String {
    format!("cell{index:03}_{}_{}_f{}_q{}.csv", cfg.defense, cfg.attack, cfg.attackers, cfg.q)
}

/// Runs every cell and repetition, writing one CSV per cell, the manifest
/// and the summary. Returns the paths of the per-cell CSVs.
pub fn run_cells(cells: &[ExperimentConfig], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut manifest = format!("{MANIFEST_HEADER}\n");
    let mut paths = Vec::with_capacity(cells.len());
    for (i, cfg) in cells.iter().enumerate() {
        let runs = cfg
            .repetition_seeds()
            .into_iter()
            .map(|s| run_experiment(cfg, s))
            .collect::<Result<Vec<_>>>()?;
        let name = cell_file_name(i, cfg);
        let path = out_dir.join(&name);
        fs::write(&path, rounds_csv(cfg, &runs))?;
        log::info!("wrote {}", path.display());
        let _ = writeln!(manifest, "{name},{},{},{},{},{}", cfg.defense, cfg.attack, cfg.attackers, cfg.num_clients, cfg.q);
        paths.push(path);
    }
    fs::write(out_dir.join(MANIFEST_FILE), manifest)?;
    summarize(out_dir)?;
    Ok(paths)
}

/// Mean final accuracy of one table cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub defense: String,
    pub attack: String,
    pub attacker_fraction: f64,
    pub q: f64,
    pub repetitions: usize,
    pub mean_final_accuracy: f64,
}

/// Final accuracy per seed found in one rounds CSV.
pub fn final_accuracies(csv: &str) -> Result<BTreeMap<u64, f64>> {
    let mut lines = csv.lines();
    if lines.next() != Some(ROUND_HEADER) {
        return Err(FpdError::Format("rounds file has an unexpected header".into()));
    }
    let mut last: BTreeMap<u64, (usize, f64)> = BTreeMap::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(FpdError::Format(format!("expected 11 fields, got {}", fields.len())));
        }
        let parse_err = |what: &str| FpdError::Format(format!("bad {what} in '{line}'"));
        let round: usize = fields[0].parse().map_err(|_| parse_err("round"))?;
        let accuracy: f64 = fields[7].parse().map_err(|_| parse_err("accuracy"))?;
        let seed: u64 = fields[10].parse().map_err(|_| parse_err("seed"))?;
        let entry = last.entry(seed).or_insert((0, 0.0));
        if round >= entry.0 {
            *entry = (round, accuracy);
        }
    }
    Ok(last.into_iter().map(|(s, (_, a))| (s, a)).collect())
}

/// Reads the manifest in `dir` and writes the summary CSV and text table.
pub fn summarize(dir: &Path) -> Result<Vec<SummaryRow>> {
    let manifest = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let mut lines = manifest.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(FpdError::Format(format!("{MANIFEST_FILE} has an unexpected header")));
    }
    type Key = (String, String, String, String);
    let mut cells: BTreeMap<Key, (f64, f64, Vec<f64>)> = BTreeMap::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(FpdError::Format(format!("bad manifest line '{line}'")));
        }
        let bad = || FpdError::Format(format!("bad manifest line '{line}'"));
        let attackers: f64 = f[3].parse().map_err(|_| bad())?;
        let clients: f64 = f[4].parse().map_err(|_| bad())?;
        let q: f64 = f[5].parse().map_err(|_| bad())?;
        let frac = attackers / clients;
        let accs = final_accuracies(&fs::read_to_string(dir.join(f[0]))?)?;
        let key = (f[1].to_string(), f[2].to_string(), format!("{frac:.4}"), f[5].to_string());
        cells.entry(key).or_insert((frac, q, Vec::new())).2.extend(accs.into_values());
    }
    let rows: Vec<SummaryRow> = cells
        .into_iter()
        .map(|((defense, attack, _, _), (frac, q, accs))| SummaryRow {
            defense,
            attack,
            attacker_fraction: frac,
            q,
            repetitions: accs.len(),
            mean_final_accuracy: accs.iter().sum::<f64>() / accs.len().max(1) as f64,
        })
        .collect();

    let mut csv = String::from("defense,attack,attacker_fraction,q,repetitions,mean_final_accuracy\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{},{},{}", r.defense, r.attack, r.attacker_fraction, r.q, r.repetitions, r.mean_final_accuracy);
    }
    fs::write(dir.join(SUMMARY_CSV), csv)?;
    fs::write(dir.join(SUMMARY_TXT), text_table(&rows))?;
    Ok(rows)
}

/// Aligned plain-text version of the summary.
pub fn text_table(rows: &[SummaryRow]) -> String {
    let header = ["defense", "attack", "attackers", "q", "reps", "accuracy"];
    let body: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.defense.clone(),
                r.attack.clone(),
                format!("{:.0}%", 100.0 * r.attacker_fraction),
                format!("{}", r.q),
                r.repetitions.to_string(),
                format!("{:.2}%", 100.0 * r.mean_final_accuracy),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let parts: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&header.map(String::from));
    for row in &body {
        line(row);
    }
    out
}
