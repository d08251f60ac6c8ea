//! Mini-batch SGD with momentum, per-epoch evaluation and divergence handling.

use std::fmt;
use std::io::Write;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::datasets::{Dataset, Split, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::layers::{Mode, Param};
use crate::models::Model;
use crate::tensor::Tensor;

/// Past this epoch a run stuck at chance with a blown-up loss counts as diverged.
pub const STALL_EPOCH: usize = 5;
const STALL_ACCURACY: f64 = 10.5;
const STALL_LOSS_GROWTH: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub divergence_loss_cap: f64,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            batch_size: 512,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            divergence_loss_cap: 1e4,
            eval_batch_size: 250,
        }
    }
}

/// Classical momentum: `v ← μ·v − lr·g`, `θ ← θ + v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Sgd {
    /// Applies one update to every parameter. Returns `false` and leaves all
    /// parameters untouched if any gradient is non-finite.
    pub fn step<'a>(&self, params: impl IntoIterator<Item = &'a mut Param>) -> bool {
        let params: Vec<&mut Param> = params.into_iter().collect();
        if !params.iter().all(|p| p.grad.all_finite()) {
            return false;
        }
        for p in params {
            sgd_step(p, self.learning_rate, self.momentum);
        }
        true
    }
}

pub fn sgd_step(p: &mut Param, learning_rate: f64, momentum: f64) {
    let g = p.grad.data();
    for ((v, w), &g) in p
        .velocity
        .data_mut()
        .iter_mut()
        .zip(p.value.data_mut().iter_mut())
        .zip(g)
    {
        *v = momentum * *v - learning_rate * g;
        *w += *v;
    }
}

/// One row of `metrics.csv`. Epochs count from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
    pub diverged: bool,
}

impl RunRecord {
    pub const CSV_HEADER: &'static str = "epoch,split,loss,accuracy,diverged";
}

impl fmt::Display for RunRecord {
    /// CSV row; loss to 6 decimals, accuracy in percent to 2.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{:.6},{:.2},{}",
            self.epoch, self.split, self.loss, self.accuracy, self.diverged
        )
    }
}

pub fn write_metrics_csv<W: Write>(mut w: W, records: &[RunRecord]) -> std::io::Result<()> {
    writeln!(w, "{}", RunRecord::CSV_HEADER)?;
    for r in records {
        writeln!(w, "{r}")?;
    }
    Ok(())
}

/// Training loss and accuracy at the end of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStat {
    pub loss: f64,
    pub accuracy: f64,
}

/// True if the latest epoch shows divergence: a non-finite loss, a loss above
/// `cap`, or (after [`STALL_EPOCH`] epochs) chance accuracy with a loss that
/// grew tenfold over the first epoch.
pub fn detect_divergence(history: &[EpochStat], cap: f64) -> bool {
    let Some(last) = history.last() else {
        return false;
    };
    if !last.loss.is_finite() || last.loss > cap {
        return true;
    }
    history.len() > STALL_EPOCH
        && last.accuracy <= STALL_ACCURACY
        && last.loss >= STALL_LOSS_GROWTH * history[0].loss
}

/// Accuracy in percent of a chance-level classifier.
pub fn chance_accuracy() -> f64 {
    100.0 / NUM_CLASSES as f64
}

/// Row-wise argmax of `[N, K]` logits; ties and NaNs resolve to the lowest index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = logits.shape()[logits.rank() - 1];
    logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Percentage of `predictions` equal to `labels`.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    100.0 * hits as f64 / labels.len() as f64
}

/// Mean loss and accuracy in inference mode. Parameters and moving statistics
/// are left unchanged.
pub fn evaluate(model: &mut Model, data: &Dataset, batch_size: usize) -> Result<EpochStat> {
    if data.is_empty() {
        return Err(Error::Data(format!("{} split is empty", data.split)));
    }
    let batch_size = batch_size.max(1);
    let indices: Vec<usize> = (0..data.len()).collect();
    let (mut loss_sum, mut hits) = (0.0, 0usize);
    for chunk in indices.chunks(batch_size) {
        let (images, labels) = data.batch(chunk)?;
        let tape = Tape::no_grad();
        let x = tape.constant(images);
        let out = model.forward(&tape, x, Mode::Infer)?;
        let loss = out.output.softmax_cross_entropy(&labels)?.value().item()?;
        loss_sum += loss * chunk.len() as f64;
        let preds = argmax_rows(&out.output.value());
        hits += preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
    }
    Ok(EpochStat {
        loss: loss_sum / data.len() as f64,
        accuracy: 100.0 * hits as f64 / data.len() as f64,
    })
}

/// Splits shuffled indices into batches. A trailing batch of one sample is
/// folded into the previous batch, since batch statistics need two samples.
fn batches(indices: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = indices.chunks(batch_size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        let last = out.len() - 1;
        out[last] = &indices[start..];
    }
    out
}

/// One forward/backward/update step. Returns the batch loss, or `None` if the
/// loss or any gradient was non-finite (no update is applied then).
pub fn train_step(model: &mut Model, images: Tensor, labels: &[usize], sgd: &Sgd) -> Result<Option<f64>> {
    let tape = Tape::new();
    let x = tape.constant(images);
    let out = model.forward(&tape, x, Mode::Train)?;
    let loss = out.output.softmax_cross_entropy(labels)?;
    let value = loss.value().item()?;
    if !value.is_finite() {
        return Ok(None);
    }
    let grads = tape.backward(loss)?;
    model.load_grads(&grads, &out.bindings)?;
    Ok(sgd.step(model.params_mut()).then_some(value))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Two rows per epoch (train, then test), always `2 · epochs` long.
    pub records: Vec<RunRecord>,
    /// First epoch (1-based) flagged as diverged.
    pub diverged_at: Option<usize>,
}

impl TrainReport {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn last(&self, split: Split) -> Option<&RunRecord> {
        self.records.iter().rev().find(|r| r.split == split)
    }
}

/// Trains `model` on `train`, evaluating both splits after every epoch.
///
/// Once divergence is detected training stops; that epoch and all later ones
/// are reported as diverged with NaN loss and chance accuracy.
pub fn train(model: &mut Model, train: &Dataset, test: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Data("training and test splits must be non-empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Contract("batch size must be positive".into()));
    }
    let sgd = Sgd {
        learning_rate: cfg.learning_rate,
        momentum: cfg.momentum,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::with_capacity(2 * cfg.epochs);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut diverged_at = None;

    for epoch in 1..=cfg.epochs {
        if diverged_at.is_none() {
            order.shuffle(&mut rng);
            for batch in batches(&order, cfg.batch_size) {
                let (images, labels) = train.batch(batch)?;
                match train_step(model, images, &labels, &sgd)? {
                    Some(loss) if loss <= cfg.divergence_loss_cap => {}
                    other => {
                        warn!("epoch {epoch}: batch loss {other:?} flagged as divergence");
                        diverged_at = Some(epoch);
                        break;
                    }
                }
            }
        }
        if diverged_at.is_none() {
            let tr = evaluate(model, train, cfg.eval_batch_size)?;
            let te = evaluate(model, test, cfg.eval_batch_size)?;
            history.push(tr);
            if detect_divergence(&history, cfg.divergence_loss_cap) {
                warn!("epoch {epoch}: train loss {} accuracy {:.2} flagged as divergence", tr.loss, tr.accuracy);
                diverged_at = Some(epoch);
            } else {
                info!(
                    "epoch {epoch}/{}: train loss {:.4} acc {:.2} | test loss {:.4} acc {:.2}",
                    cfg.epochs, tr.loss, tr.accuracy, te.loss, te.accuracy
                );
                for (split, stat) in [(Split::Train, tr), (Split::Test, te)] {
                    records.push(RunRecord {
                        epoch,
                        split,
                        loss: stat.loss,
                        accuracy: stat.accuracy,
                        diverged: false,
                    });
                }
                continue;
            }
        }
        for split in [Split::Train, Split::Test] {
            records.push(RunRecord {
                epoch,
                split,
                loss: f64::NAN,
                accuracy: chance_accuracy(),
                diverged: true,
            });
        }
    }
    Ok(TrainReport { records, diverged_at })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(losses: &[f64], acc: f64) -> Vec<EpochStat> {
        losses.iter().map(|&loss| EpochStat { loss, accuracy: acc }).collect()
    }

    #[test]
    fn divergence_on_loss_cap() {
        let h = stats(&[2.3, 40.0, 9000.0, 1e6], 10.0);
        assert!(!detect_divergence(&h[..3], 1e4));
        assert!(detect_divergence(&h, 1e4));
        assert!(detect_divergence(&stats(&[2.3, f64::NAN], 50.0), 1e4));
        assert!(!detect_divergence(&[], 1e4));
    }

    #[test]
    fn divergence_on_stall_needs_six_epochs() {
        let five = stats(&[2.0, 30.0, 30.0, 30.0, 30.0], 10.0);
        assert!(!detect_divergence(&five, 1e4));
        let six = stats(&[2.0, 30.0, 30.0, 30.0, 30.0, 30.0], 10.0);
        assert!(detect_divergence(&six, 1e4));
        let learning = stats(&[2.0, 30.0, 30.0, 30.0, 30.0, 30.0], 40.0);
        assert!(!detect_divergence(&learning, 1e4));
    }

    #[test]
    fn sgd_momentum_two_steps() {
        let mut p = Param::new(Tensor::new([1], vec![1.0]).unwrap());
        p.grad = Tensor::new([1], vec![0.5]).unwrap();
        sgd_step(&mut p, 0.1, 0.9);
        assert!((p.value.data()[0] - 0.95).abs() < 1e-15);
        sgd_step(&mut p, 0.1, 0.9);
        // v = 0.9·(−0.05) − 0.05 = −0.095
        assert!((p.velocity.data()[0] + 0.095).abs() < 1e-15);
        assert!((p.value.data()[0] - 0.855).abs() < 1e-15);
    }

    #[test]
    fn sgd_skips_non_finite() {
        let mut a = Param::new(Tensor::new([1], vec![1.0]).unwrap());
        let mut b = Param::new(Tensor::new([1], vec![2.0]).unwrap());
        a.grad = Tensor::new([1], vec![1.0]).unwrap();
        b.grad = Tensor::new([1], vec![f64::INFINITY]).unwrap();
        let sgd = Sgd {
            learning_rate: 0.1,
            momentum: 0.9,
        };
        assert!(!sgd.step([&mut a, &mut b]));
        assert_eq!(a.value.data(), &[1.0]);
    }

    #[test]
    fn csv_row_format() {
        let r = RunRecord {
            epoch: 3,
            split: Split::Test,
            loss: 0.123_456_78,
            accuracy: 97.125,
            diverged: false,
        };
        assert_eq!(r.to_string(), "3,test,0.123457,97.12,false");
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[r]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("epoch,split,loss,accuracy,diverged\n"));
    }

    #[test]
    fn argmax_first_max() {
        let t = Tensor::new([2, 3], vec![1.0, 3.0, 3.0, f64::NAN, 0.0, 1.0]).unwrap();
        assert_eq!(argmax_rows(&t), vec![1, 0]);
        assert_eq!(accuracy(&[1, 0], &[1, 2]), 50.0);
    }

    #[test]
    fn batches_fold_singleton() {
        let idx: Vec<usize> = (0..9).collect();
        let b = batches(&idx, 4);
        assert_eq!(b.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![4, 5]);
        let b = batches(&idx, 3);
        assert_eq!(b.len(), 3);
        assert_eq!(batches(&idx[..1], 4).len(), 1);
    }
}
