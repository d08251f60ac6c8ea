//! One training run: load data, build the model, train, write artifacts.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use talu_core::datasets::{subset, Dataset, DatasetName, Split};
use talu_core::models::build_model;
use talu_core::training::{train, write_metrics_csv, TrainReport};
use talu_core::with_precision;

use crate::config::RunConfig;
use crate::CliError;

pub const SUMMARY_HEADER: &str = "name,dataset,arch,activation,bn,lr,epochs,batch_size,seed,\
train_loss,train_accuracy,test_loss,test_accuracy,diverged,diverged_epoch,wall_seconds";

/// Offset between the train- and test-subset sampling seeds.
const TEST_SUBSET_SEED: u64 = 0x7e57;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub report: TrainReport,
    pub wall_seconds: f64,
    pub run_dir: PathBuf,
}

impl RunOutcome {
    pub fn final_accuracy(&self, split: Split) -> f64 {
        self.report.last(split).map_or(f64::NAN, |r| r.accuracy)
    }

    pub fn summary_row(&self) -> String {
        let c = &self.config;
        let last = |s| self.report.last(s);
        let (tr, te) = (last(Split::Train), last(Split::Test));
        format!(
            "{},{},{},{},{},{},{},{},{},{:.6},{:.2},{:.6},{:.2},{},{},{:.1}",
            c.run_name(),
            c.dataset,
            c.arch.name(),
            c.activation.name(),
            c.bn,
            c.lr,
            c.epochs,
            c.batch_size,
            c.seed,
            tr.map_or(f64::NAN, |r| r.loss),
            tr.map_or(f64::NAN, |r| r.accuracy),
            te.map_or(f64::NAN, |r| r.loss),
            te.map_or(f64::NAN, |r| r.accuracy),
            self.report.diverged(),
            self.report.diverged_at.map_or(String::new(), |e| e.to_string()),
            self.wall_seconds
        )
    }
}

/// Full train and test splits as stored on disk.
pub fn load_full(dataset: DatasetName, dir: &Path) -> Result<(Dataset, Dataset), CliError> {
    info!("loading {dataset} from {}", dir.display());
    Ok(dataset.load(dir)?)
}

/// Applies the configured per-class subsets.
pub fn select(cfg: &RunConfig, train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset), CliError> {
    let pick = |d: &Dataset, n: usize, seed: u64| -> Result<Dataset, CliError> {
        Ok(if n == 0 { d.clone() } else { subset(d, n, seed)? })
    };
    Ok((
        pick(train, cfg.subset, cfg.seed)?,
        pick(test, cfg.test_subset, cfg.seed ^ TEST_SUBSET_SEED)?,
    ))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Appends one row to `<out>/summary.csv`, writing the header on first use.
pub fn append_summary(out: &Path, row: &str) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let path = out.join("summary.csv");
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| CliError::io(&path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(SUMMARY_HEADER);
        text.push('\n');
    }
    text.push_str(row);
    text.push('\n');
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(&path, e))
}

/// Trains one configuration on already-selected data and writes
/// `config.resolved`, `metrics.csv` and a `summary.csv` row.
pub fn train_on(cfg: &RunConfig, train_set: &Dataset, test_set: &Dataset) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let run_dir = cfg.run_dir();
    fs::create_dir_all(&run_dir).map_err(|e| CliError::io(&run_dir, e))?;
    write_file(&run_dir.join("config.resolved"), cfg.to_resolved().as_bytes())?;

    let start = Instant::now();
    let mut model = build_model(&cfg.model_config())?;
    info!(
        "{}: {} params, {} train / {} test images",
        cfg.run_name(),
        model.param_count().total,
        train_set.len(),
        test_set.len()
    );
    let report = with_precision(cfg.precision, || train(&mut model, train_set, test_set, &cfg.train_config()))?;
    let wall_seconds = start.elapsed().as_secs_f64();

    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, &report.records).map_err(|e| CliError::io(&run_dir, e))?;
    write_file(&run_dir.join("metrics.csv"), &csv)?;

    let outcome = RunOutcome {
        config: cfg.clone(),
        report,
        wall_seconds,
        run_dir,
    };
    append_summary(&cfg.out, &outcome.summary_row())?;
    Ok(outcome)
}

pub fn run_train(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let (train_full, test_full) = load_full(cfg.dataset, &cfg.data_dir())?;
    let (train_set, test_set) = select(cfg, &train_full, &test_full)?;
    drop((train_full, test_full));
    train_on(cfg, &train_set, &test_set)
}
