//! Grid runner producing activation × BatchNorm × learning-rate tables.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::Instant;

use log::{info, warn};
use talu_core::activations::ActivationKind;
use talu_core::datasets::Split;

use crate::config::RunConfig;
use crate::run::{load_full, select, train_on};
use crate::CliError;

pub const DIVERGED_LABEL: &str = "Exploding";

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    /// Settings shared by every cell; its activation, bn and lr are overridden.
    pub base: RunConfig,
    pub activations: Vec<ActivationKind>,
    pub batchnorm: Vec<bool>,
    pub learning_rates: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub activation: ActivationKind,
    pub bn: bool,
    pub lr: f64,
}

impl Cell {
    pub fn config(&self, base: &RunConfig) -> RunConfig {
        RunConfig {
            activation: self.activation,
            bn: self.bn,
            lr: self.lr,
            name: String::new(),
            ..base.clone()
        }
    }

    fn row_label(&self) -> String {
        format!("{}{}", self.activation.label(), if self.bn { "+BN" } else { "" })
    }
}

impl Grid {
    /// Cells grouped by BatchNorm setting, then activation, then learning rate.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.batchnorm.len() * self.activations.len() * self.learning_rates.len());
        for &bn in &self.batchnorm {
            for &activation in &self.activations {
                for &lr in &self.learning_rates {
                    out.push(Cell { activation, bn, lr });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub diverged: bool,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub outcome: Result<CellStats, String>,
}

#[derive(Debug, Clone)]
pub enum Parallelism {
    Sequential,
    /// Each cell runs as `<exe> train --config <cell config>`.
    Processes { exe: PathBuf, jobs: usize },
}

/// Runs every cell and writes `compare.md` and `compare.csv` under the base
/// output directory. A failing cell is recorded and the grid continues.
pub fn run_compare(grid: &Grid, parallelism: &Parallelism) -> Result<Vec<CellResult>, CliError> {
    grid.base.validate()?;
    let cells = grid.cells();
    let results = match parallelism {
        Parallelism::Sequential => run_sequential(grid, &cells)?,
        Parallelism::Processes { exe, jobs } => run_processes(grid, &cells, exe, (*jobs).max(1))?,
    };
    let out = &grid.base.out;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let md = out.join("compare.md");
    fs::write(&md, render_markdown(grid, &results)).map_err(|e| CliError::io(&md, e))?;
    let csv = out.join("compare.csv");
    fs::write(&csv, render_csv(&results)).map_err(|e| CliError::io(&csv, e))?;
    Ok(results)
}

fn run_sequential(grid: &Grid, cells: &[Cell]) -> Result<Vec<CellResult>, CliError> {
    let (train_full, test_full) = load_full(grid.base.dataset, &grid.base.data_dir())?;
    let (train_set, test_set) = select(&grid.base, &train_full, &test_full)?;
    drop((train_full, test_full));
    let mut results = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        let cfg = cell.config(&grid.base);
        info!("cell {}/{}: {}", i + 1, cells.len(), cfg.run_name());
        let outcome = train_on(&cfg, &train_set, &test_set)
            .map(|o| CellStats {
                train_accuracy: o.final_accuracy(Split::Train),
                test_accuracy: o.final_accuracy(Split::Test),
                diverged: o.report.diverged(),
                wall_seconds: o.wall_seconds,
            })
            .map_err(|e| {
                warn!("{}: {e}", cfg.run_name());
                e.to_string()
            });
        results.push(CellResult { cell: *cell, outcome });
    }
    Ok(results)
}

/// Final train/test accuracy and divergence flag from a metrics.csv.
pub fn read_metrics(path: &Path) -> Result<(f64, f64, bool), String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let (mut train, mut test, mut diverged) = (None, None, false);
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(format!("{}: malformed row {line:?}", path.display()));
        }
        let acc: f64 = f[3].parse().map_err(|_| format!("{}: bad accuracy {:?}", path.display(), f[3]))?;
        diverged |= f[4] == "true";
        match f[1] {
            "train" => train = Some(acc),
            "test" => test = Some(acc),
            _ => {}
        }
    }
    match (train, test) {
        (Some(tr), Some(te)) => Ok((tr, te, diverged)),
        _ => Err(format!("{}: no metrics rows", path.display())),
    }
}

fn spawn_cell(exe: &Path, cfg: &RunConfig) -> Result<Child, String> {
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let config_path = dir.join("cell.conf");
    fs::write(&config_path, cfg.to_resolved()).map_err(|e| e.to_string())?;
    Command::new(exe)
        .arg("train")
        .arg("--config")
        .arg(&config_path)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| format!("cannot start {}: {e}", exe.display()))
}

fn run_processes(grid: &Grid, cells: &[Cell], exe: &Path, jobs: usize) -> Result<Vec<CellResult>, CliError> {
    let mut results: Vec<Option<CellResult>> = vec![None; cells.len()];
    let mut queue: VecDeque<usize> = (0..cells.len()).collect();
    let mut running: Vec<(usize, Child, Instant)> = Vec::new();
    while !queue.is_empty() || !running.is_empty() {
        while running.len() < jobs {
            let Some(i) = queue.pop_front() else { break };
            let cfg = cells[i].config(&grid.base);
            match spawn_cell(exe, &cfg) {
                Ok(child) => running.push((i, child, Instant::now())),
                Err(e) => {
                    results[i] = Some(CellResult {
                        cell: cells[i],
                        outcome: Err(e),
                    })
                }
            }
        }
        if running.is_empty() {
            continue;
        }
        let (i, mut child, started) = running.remove(0);
        let status = child.wait().map_err(|e| CliError::io(exe, e))?;
        let cfg = cells[i].config(&grid.base);
        let outcome = match status.code() {
            Some(0) | Some(crate::EXIT_DIVERGED) => read_metrics(&cfg.run_dir().join("metrics.csv")).map(
                |(train_accuracy, test_accuracy, diverged)| CellStats {
                    train_accuracy,
                    test_accuracy,
                    diverged,
                    wall_seconds: started.elapsed().as_secs_f64(),
                },
            ),
            code => Err(format!("worker exited with {code:?}")),
        };
        results[i] = Some(CellResult { cell: cells[i], outcome });
    }
    Ok(results.into_iter().flatten().collect())
}

fn fmt_lr(lr: f64) -> String {
    lr.to_string()
}

/// Table with one row per (activation, BN) and a Train/Test column pair per
/// learning rate. The best value of each column within a BN group is bold.
pub fn render_markdown(grid: &Grid, results: &[CellResult]) -> String {
    let lrs = &grid.learning_rates;
    let mut s = String::new();
    let _ = write!(s, "| Activation |");
    for lr in lrs {
        let _ = write!(s, " lr={} Train | lr={} Test |", fmt_lr(*lr), fmt_lr(*lr));
    }
    s.push('\n');
    s.push_str("|---|");
    for _ in lrs {
        s.push_str("---:|---:|");
    }
    s.push('\n');

    let find = |a: ActivationKind, bn: bool, lr: f64| {
        results
            .iter()
            .find(|r| r.cell.activation == a && r.cell.bn == bn && r.cell.lr == lr)
    };
    let mut notes = Vec::new();
    for &bn in &grid.batchnorm {
        // best finite accuracy per (lr, split) column inside this BN group
        let best = |lr: f64, train: bool| {
            grid.activations
                .iter()
                .filter_map(|&a| match find(a, bn, lr).map(|r| &r.outcome) {
                    Some(Ok(st)) if !st.diverged => Some(if train { st.train_accuracy } else { st.test_accuracy }),
                    _ => None,
                })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        for &a in &grid.activations {
            let label = Cell { activation: a, bn, lr: 0.0 }.row_label();
            let _ = write!(s, "| {label} |");
            for &lr in lrs {
                match find(a, bn, lr).map(|r| &r.outcome) {
                    Some(Ok(st)) if st.diverged => {
                        let _ = write!(s, " {DIVERGED_LABEL} | {:.2} |", st.test_accuracy);
                    }
                    Some(Ok(st)) => {
                        for (v, train) in [(st.train_accuracy, true), (st.test_accuracy, false)] {
                            if v == best(lr, train) {
                                let _ = write!(s, " **{v:.2}** |");
                            } else {
                                let _ = write!(s, " {v:.2} |");
                            }
                        }
                    }
                    Some(Err(e)) => {
                        notes.push(format!("- {label} at lr={}: {e}", fmt_lr(lr)));
                        s.push_str(" error | error |");
                    }
                    None => s.push_str(" - | - |"),
                }
            }
            s.push('\n');
        }
    }
    if !notes.is_empty() {
        s.push_str("\nErrors:\n\n");
        for n in notes {
            s.push_str(&n);
            s.push('\n');
        }
    }
    s
}

pub const COMPARE_CSV_HEADER: &str = "activation,bn,lr,train_accuracy,test_accuracy,diverged,wall_seconds,error";

pub fn render_csv(results: &[CellResult]) -> String {
    let mut s = String::from(COMPARE_CSV_HEADER);
    s.push('\n');
    for r in results {
        let c = &r.cell;
        let _ = match &r.outcome {
            Ok(st) => writeln!(
                s,
                "{},{},{},{:.2},{:.2},{},{:.1},",
                c.activation.name(),
                c.bn,
                fmt_lr(c.lr),
                st.train_accuracy,
                st.test_accuracy,
                st.diverged,
                st.wall_seconds
            ),
            Err(e) => writeln!(
                s,
                "{},{},{},,,,,\"{}\"",
                c.activation.name(),
                c.bn,
                fmt_lr(c.lr),
                e.replace('"', "'")
            ),
        };
    }
    s
}
