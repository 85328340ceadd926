//! Runs every (client mechanism, server optimizer, seed) cell of a grid and
//! assembles a table of mean best accuracy per checkpoint.

use std::path::Path;

use rayon::prelude::*;

use crate::algorithm::Algorithm;
use crate::client::ClientOpt;
use crate::error::{Error, Result};
use crate::orchestrator::{run_experiment, ExperimentConfig, RunResult, RunStatus};
use crate::persist::save_params;
use crate::report::{emit_report, metrics_table, Table, DIVERGED};
use crate::server::ServerOpt;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub base: ExperimentConfig,
    pub opt_c_set: Vec<ClientOpt>,
    pub opt_s_set: Vec<ServerOpt>,
    pub seeds: Vec<u64>,
    pub checkpoints: Vec<usize>,
    /// Explicit server learning rate for every cell; per-optimizer default
    /// when absent.
    pub server_lr: Option<f64>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.opt_c_set.is_empty() || self.opt_s_set.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidArgument("grid sets must be non-empty".into()));
        }
        let every = self.base.eval_every;
        for (i, &c) in self.checkpoints.iter().enumerate() {
            if c == 0 || c % every != 0 || c > self.base.rounds {
                return Err(Error::InvalidArgument(format!(
                    "checkpoint {c} must be a positive multiple of eval_every = {every} not beyond {} rounds",
                    self.base.rounds
                )));
            }
            if i > 0 && self.checkpoints[i - 1] >= c {
                return Err(Error::InvalidArgument("checkpoints must be strictly increasing".into()));
            }
        }
        self.base.validate()
    }

    /// Grid algorithms in canonical order, client mechanism major.
    pub fn algorithms(&self) -> Vec<Algorithm> {
        Algorithm::grid().filter(|a| self.opt_c_set.contains(&a.opt_c) && self.opt_s_set.contains(&a.opt_s)).collect()
    }

    pub fn cell_config(&self, algorithm: Algorithm, seed: u64) -> ExperimentConfig {
        let mut cfg = self.base.clone();
        cfg.client.opt_c = algorithm.opt_c;
        cfg.server.opt_s = algorithm.opt_s;
        cfg.server.server_lr = self.server_lr.unwrap_or(algorithm.opt_s.default_lr());
        cfg.seed = seed;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Acc(f64),
    Diverged,
}

impl Cell {
    pub fn value(self) -> Option<f64> {
        match self {
            Cell::Acc(a) => Some(a),
            Cell::Diverged => None,
        }
    }

    fn render(self) -> String {
        match self {
            Cell::Acc(a) => format!("{a}"),
            Cell::Diverged => DIVERGED.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub result: RunResult,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone)]
pub struct GridRow {
    pub algorithm: Algorithm,
    pub runs: Vec<SeedRun>,
    /// Mean best accuracy over seeds, one entry per checkpoint.
    pub mean: Vec<Cell>,
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub checkpoints: Vec<usize>,
    pub rows: Vec<GridRow>,
}

fn seed_cells(result: &RunResult, checkpoints: &[usize]) -> Vec<Cell> {
    checkpoints
        .iter()
        .map(|&c| match (&result.status, result.best_acc_at(c)) {
            (RunStatus::Diverged { round, .. }, _) if *round <= c => Cell::Diverged,
            (_, Some(acc)) => Cell::Acc(acc),
            (_, None) => Cell::Diverged,
        })
        .collect()
}

fn mean_cells(runs: &[SeedRun], n: usize) -> Vec<Cell> {
    (0..n)
        .map(|j| {
            let vals: Option<Vec<f64>> = runs.iter().map(|r| r.cells[j].value()).collect();
            match vals {
                Some(v) => Cell::Acc(v.iter().sum::<f64>() / v.len() as f64),
                None => Cell::Diverged,
            }
        })
        .collect()
}

/// Runs all cells. `threads > 1` runs cells concurrently; results do not
/// depend on it.
pub fn run_grid(spec: &GridSpec, threads: usize) -> Result<GridReport> {
    spec.validate()?;
    let jobs: Vec<(Algorithm, u64)> =
        spec.algorithms().into_iter().flat_map(|a| spec.seeds.iter().map(move |&s| (a, s))).collect();
    let run = |&(alg, seed): &(Algorithm, u64)| run_experiment(spec.cell_config(alg, seed));
    let results: Vec<Result<RunResult>> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(run).collect())
    } else {
        jobs.iter().map(run).collect()
    };

    let mut rows: Vec<GridRow> = Vec::new();
    for ((alg, seed), result) in jobs.into_iter().zip(results) {
        let result = result?;
        let cells = seed_cells(&result, &spec.checkpoints);
        let run = SeedRun { seed, result, cells };
        match rows.last_mut() {
            Some(row) if row.algorithm == alg => row.runs.push(run),
            _ => rows.push(GridRow { algorithm: alg, runs: vec![run], mean: Vec::new() }),
        }
    }
    for row in &mut rows {
        row.mean = mean_cells(&row.runs, spec.checkpoints.len());
    }
    Ok(GridReport { checkpoints: spec.checkpoints.clone(), rows })
}

impl GridReport {
    pub fn any_diverged(&self) -> bool {
        self.rows.iter().flat_map(|r| &r.runs).any(|r| r.result.status != RunStatus::Ok)
    }

    fn checkpoint_header(&self) -> impl Iterator<Item = String> + '_ {
        self.checkpoints.iter().map(|c| format!("r{c}"))
    }

    /// Per checkpoint, the row indices holding the column maximum.
    pub fn column_argmax(&self) -> Vec<Vec<usize>> {
        (0..self.checkpoints.len())
            .map(|j| {
                let best = self.rows.iter().filter_map(|r| r.mean[j].value()).fold(f64::NEG_INFINITY, f64::max);
                self.rows.iter().enumerate().filter(|(_, r)| r.mean[j].value() == Some(best)).map(|(i, _)| i).collect()
            })
            .collect()
    }

    /// One row per algorithm: mean best accuracy per checkpoint, then the
    /// checkpoints at which the row is the column maximum.
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(["algorithm", "opt_c", "opt_s"].map(String::from));
        t.header.extend(self.checkpoint_header());
        t.header.push("column_best".into());
        let argmax = self.column_argmax();
        for (i, row) in self.rows.iter().enumerate() {
            let mut out = vec![
                row.algorithm.name().to_string(),
                row.algorithm.opt_c.to_string(),
                row.algorithm.opt_s.to_string(),
            ];
            out.extend(row.mean.iter().map(|c| c.render()));
            let best: Vec<String> = self
                .checkpoints
                .iter()
                .zip(&argmax)
                .filter(|(_, winners)| winners.contains(&i))
                .map(|(c, _)| format!("r{c}"))
                .collect();
            out.push(best.join(";"));
            t.rows.push(out);
        }
        t
    }

    pub fn per_seed_table(&self) -> Table {
        let mut t = Table::new(["algorithm", "opt_c", "opt_s", "seed", "status"].map(String::from));
        t.header.extend(self.checkpoint_header());
        for row in &self.rows {
            for run in &row.runs {
                let mut out = vec![
                    row.algorithm.name().to_string(),
                    row.algorithm.opt_c.to_string(),
                    row.algorithm.opt_s.to_string(),
                    run.seed.to_string(),
                    run.result.status.label().to_string(),
                ];
                out.extend(run.cells.iter().map(|c| c.render()));
                t.rows.push(out);
            }
        }
        t
    }

    /// Writes `grid.csv`, `grid_per_seed.csv` and, per run, a metrics CSV and
    /// final/best model files under `runs/`.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        emit_report(&self.summary_table(), &out_dir.join("grid.csv"))?;
        emit_report(&self.per_seed_table(), &out_dir.join("grid_per_seed.csv"))?;
        let runs = out_dir.join("runs");
        std::fs::create_dir_all(&runs)?;
        for row in &self.rows {
            for run in &row.runs {
                let stem = format!("{}_seed{}", row.algorithm.name(), run.seed);
                emit_report(&metrics_table(row.algorithm, &run.result.metrics), &runs.join(format!("{stem}.csv")))?;
                let model = &run.result.spec;
                save_params(&runs.join(format!("{stem}_final.bin")), &run.result.final_w, model)?;
                save_params(&runs.join(format!("{stem}_best.bin")), &run.result.best_w, model)?;
            }
        }
        Ok(())
    }
}
