//! Sweeps over V, seeds and policies, with one CSV per run and one JSON
//! summary per cell.
//!
//! CSV floats are written with 17 significant digits so that re-reading a
//! file and recomputing its summary reproduces the JSON exactly.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lyapunov::{theorem_gap_bounds, TheoremBounds};
use crate::policies::PolicyKind;
use crate::sim::{lta_report, run, LtaReport, MetricsSeries, RoundRecord, SimConfig, SolverSummary};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: SimConfig,
    pub v_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicyKind>,
    pub output: PathBuf,
    pub write_csv: bool,
    pub write_json: bool,
}

impl ExperimentSpec {
    /// A one-cell experiment using V, seed and policy from `base`.
    pub fn single(base: SimConfig, output: PathBuf) -> Self {
        Self {
            v_values: vec![base.system.lyapunov_v],
            seeds: vec![base.system.rng_seed],
            policies: vec![base.policy],
            base,
            output,
            write_csv: true,
            write_json: true,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.v_values.is_empty() || self.seeds.is_empty() || self.policies.is_empty() {
            return Err(ExperimentError::Invalid("every sweep axis needs at least one value".into()));
        }
        let mut names: Vec<String> = self.cells().iter().map(|c| c.stem()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(ExperimentError::Invalid("sweep axes contain duplicate values".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &policy in &self.policies {
            for &v in &self.v_values {
                for &seed in &self.seeds {
                    cells.push(Cell { policy, v, seed });
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub policy: PolicyKind,
    pub v: f64,
    pub seed: u64,
}

impl Cell {
    pub fn stem(&self) -> String {
        format!("{}_v{}_seed{}", self.policy, self.v, self.seed)
    }

    pub fn config(&self, base: &SimConfig) -> SimConfig {
        let mut cfg = base.clone();
        cfg.policy = self.policy;
        cfg.system.lyapunov_v = self.v;
        cfg.system.rng_seed = self.seed;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub optimality_gap: f64,
    /// Allowed excess of Ē_n over E_n^sup at the final round (W).
    pub energy_excess: f64,
    /// None when the derivation's radicand is negative.
    pub energy_excess_derivation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub policy: PolicyKind,
    pub v: f64,
    pub seed: u64,
    pub clients: usize,
    pub energy_supply: Vec<f64>,
    pub initial_queues: Vec<f64>,
    pub lta: LtaReport,
    pub final_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub bounds: TheoremBounds,
    pub gap: GapSummary,
    pub solver: SolverSummary,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn summarize(series: &MetricsSeries) -> CellSummary {
    let lta = lta_report(series);
    let gap = theorem_gap_bounds(&series.bounds, series.lyapunov_v, lta.rounds.max(1) as u64, &series.initial_queues);
    let last_metric = series.records.iter().rev().find(|r| !r.loss.is_nan());
    CellSummary {
        policy: series.policy,
        v: series.lyapunov_v,
        seed: series.seed,
        clients: series.energy_supply.len(),
        energy_supply: series.energy_supply.clone(),
        initial_queues: series.initial_queues.clone(),
        lta,
        final_loss: last_metric.and_then(|r| finite(r.loss)),
        final_accuracy: last_metric.and_then(|r| finite(r.accuracy)),
        bounds: series.bounds.clone(),
        gap: GapSummary {
            optimality_gap: gap.optimality_gap,
            energy_excess: gap.energy_excess,
            energy_excess_derivation: finite(gap.energy_excess_derivation),
        },
        solver: series.solver.clone(),
    }
}

/// Recomputes the summary from CSV records plus the run metadata of an
/// existing summary.
pub fn resummarize(meta: &CellSummary, records: Vec<RoundRecord>) -> CellSummary {
    let series = MetricsSeries {
        policy: meta.policy,
        seed: meta.seed,
        lyapunov_v: meta.v,
        energy_supply: meta.energy_supply.clone(),
        initial_queues: meta.initial_queues.clone(),
        records,
        solver: meta.solver.clone(),
        bounds: meta.bounds.clone(),
    };
    summarize(&series)
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(series: &MetricsSeries, path: &Path) -> Result<(), ExperimentError> {
    let csv_err = |source| ExperimentError::Csv { path: path.display().to_string(), source };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    let n = series.energy_supply.len();
    let mut header = vec!["t".to_string(), "tau".into(), "D".into()];
    header.extend((0..n).map(|i| format!("E_{i}")));
    header.extend((0..n).map(|i| format!("Z_{i}")));
    header.extend(["delta_V".to_string(), "loss".into(), "accuracy".into()]);
    writer.write_record(&header).map_err(csv_err)?;
    for r in &series.records {
        let mut row = vec![r.t.to_string(), fmt_float(r.tau), fmt_float(r.data)];
        row.extend(r.energy.iter().map(|&e| fmt_float(e)));
        row.extend(r.queues.iter().map(|&z| fmt_float(z)));
        row.extend([fmt_float(r.delta_v), fmt_float(r.loss), fmt_float(r.accuracy)]);
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush().map_err(io_err(path))
}

/// Reads a run CSV back. The schedule size is not part of the format and
/// comes back as zero.
pub fn read_csv(path: &Path) -> Result<Vec<RoundRecord>, ExperimentError> {
    let name = path.display().to_string();
    let csv_err = |source| ExperimentError::Csv { path: name.clone(), source };
    let format = |reason: String| ExperimentError::Format { path: name.clone(), reason };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    let n = header.iter().filter(|h| h.starts_with("E_")).count();
    if header.len() != 3 + 2 * n + 3 || &header[0] != "t" {
        return Err(format(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64, ExperimentError> {
            row[i].parse().map_err(|_| format(format!("row {}: bad number {:?}", line + 2, &row[i])))
        };
        records.push(RoundRecord {
            t: row[0].parse().map_err(|_| format(format!("row {}: bad round {:?}", line + 2, &row[0])))?,
            tau: num(1)?,
            data: num(2)?,
            energy: (0..n).map(|i| num(3 + i)).collect::<Result<_, _>>()?,
            queues: (0..n).map(|i| num(3 + n + i)).collect::<Result<_, _>>()?,
            delta_v: num(3 + 2 * n)?,
            loss: num(4 + 2 * n)?,
            accuracy: num(5 + 2 * n)?,
            scheduled: 0,
        });
    }
    Ok(records)
}

pub fn write_json(summary: &CellSummary, path: &Path) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(summary)
        .map_err(|source| ExperimentError::Json { path: path.display().to_string(), source })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_json(path: &Path) -> Result<CellSummary, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json { path: path.display().to_string(), source })
}

#[derive(Debug)]
pub struct CellOutcome {
    pub cell: Cell,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    /// A failed cell carries its error message; the rest of the sweep runs.
    pub result: Result<CellSummary, String>,
}

fn run_cell(spec: &ExperimentSpec, cell: Cell) -> CellOutcome {
    let csv = spec.write_csv.then(|| spec.output.join(format!("{}.csv", cell.stem())));
    let json = spec.write_json.then(|| spec.output.join(format!("{}.json", cell.stem())));
    let result = (|| {
        let series = run(&cell.config(&spec.base)).map_err(|e| e.to_string())?;
        let summary = summarize(&series);
        if let Some(path) = &csv {
            write_csv(&series, path).map_err(|e| e.to_string())?;
        }
        if let Some(path) = &json {
            write_json(&summary, path).map_err(|e| e.to_string())?;
        }
        Ok(summary)
    })();
    CellOutcome { cell, csv, json, result }
}

/// Runs every cell on a pool of `workers` threads (0 means one per core).
/// Outcomes come back in cell order regardless of scheduling.
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> Result<Vec<CellOutcome>, ExperimentError> {
    spec.validate()?;
    fs::create_dir_all(&spec.output).map_err(io_err(&spec.output))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ExperimentError::Invalid(format!("cannot start worker pool: {e}")))?;
    let cells = spec.cells();
    Ok(pool.install(|| cells.into_par_iter().map(|cell| run_cell(spec, cell)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config;

    fn small_base() -> SimConfig {
        let mut cfg = config::desk();
        cfg.profiles.truncate(4);
        cfg.rounds = 6;
        cfg.metric_every = 3;
        cfg.learning.test_size = 100;
        cfg
    }

    #[test]
    fn csv_round_trip_reproduces_summary() {
        let dir = tempfile::tempdir().unwrap();
        let series = run(&small_base()).unwrap();
        let summary = summarize(&series);
        let csv = dir.path().join("run.csv");
        let json = dir.path().join("run.json");
        write_csv(&series, &csv).unwrap();
        write_json(&summary, &json).unwrap();

        let records = read_csv(&csv).unwrap();
        assert_eq!(records.len(), 6);
        let meta = read_json(&json).unwrap();
        assert_eq!(meta, summary);
        assert_eq!(resummarize(&meta, records), summary);

        let header = fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "t,tau,D,E_0,E_1,E_2,E_3,Z_0,Z_1,Z_2,Z_3,delta_V,loss,accuracy");
    }

    #[test]
    fn sweep_writes_one_pair_per_cell() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec {
            base: small_base(),
            v_values: vec![1e3, 1e4],
            seeds: vec![1, 2],
            policies: vec![PolicyKind::Dracs, PolicyKind::Sa],
            output: dir.path().to_path_buf(),
            write_csv: true,
            write_json: true,
        };
        let outcomes = run_experiment(&spec, 2).unwrap();
        assert_eq!(outcomes.len(), 8);
        for o in &outcomes {
            assert!(o.result.is_ok());
            assert!(o.csv.as_ref().unwrap().exists() && o.json.as_ref().unwrap().exists());
        }
        assert!(dir.path().join("dracs_v10000_seed2.csv").exists());

        let dup = ExperimentSpec { seeds: vec![1, 1], ..spec.clone() };
        assert!(matches!(run_experiment(&dup, 1), Err(ExperimentError::Invalid(_))));
        let empty = ExperimentSpec { policies: vec![], ..spec };
        assert!(matches!(empty.validate(), Err(ExperimentError::Invalid(_))));
    }

    #[test]
    fn failed_cells_do_not_abort_the_sweep() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec {
            base: small_base(),
            v_values: vec![-1.0, 1e4],
            seeds: vec![1],
            policies: vec![PolicyKind::Sa],
            output: dir.path().to_path_buf(),
            write_csv: true,
            write_json: false,
        };
        let outcomes = run_experiment(&spec, 1).unwrap();
        assert!(outcomes[0].result.as_ref().unwrap_err().contains("lyapunov_v"));
        assert!(outcomes[1].result.is_ok());
    }
}
