//! Minibatch training with Adam and dev-loss early stopping, shared by every
//! neural model.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::diffnum::{AdamConfig, Array};
use crate::error::{shape_err, Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 300,
            patience: 10,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-example training objective over the epoch.
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport<S> {
    /// Snapshot taken after the epoch with the lowest dev loss.
    pub best: S,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
    pub stopped_early: bool,
}

/// A model bundled with its optimiser and data.
pub trait Trainable {
    type Snapshot;

    fn train_len(&self) -> usize;

    /// One optimiser step on `batch` (indices into the training set).
    /// Returns the summed per-example loss.
    fn train_step(&mut self, batch: &[usize], noise: &mut Rng) -> Result<f64>;

    /// Mean per-example dev loss, evaluated deterministically.
    fn dev_loss(&mut self) -> Result<f64>;

    fn snapshot(&self) -> Self::Snapshot;
}

/// Train until `max_epochs` or until the dev loss has not improved for
/// `patience` consecutive epochs.
pub fn fit<M: Trainable>(model: &mut M, cfg: &TrainConfig) -> Result<TrainReport<M::Snapshot>> {
    let n = model.train_len();
    if n < 2 {
        return Err(Error::BatchTooSmall);
    }
    if cfg.batch_size < 2 || cfg.max_epochs == 0 {
        return Err(Error::InvalidArgument(
            "batch_size must be >= 2 and max_epochs >= 1".into(),
        ));
    }
    let mut shuffle = rng::stream(cfg.seed, "shuffle");
    let mut noise = rng::stream(cfg.seed, "noise");
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut best = None;
    let mut best_dev = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        let mut seen = 0;
        // a trailing batch of one cannot be batch-normalised; it is skipped
        for (b, batch) in order
            .chunks(cfg.batch_size)
            .filter(|c| c.len() >= 2)
            .enumerate()
        {
            let loss = model.train_step(batch, &mut noise).map_err(|e| match e {
                Error::Divergence { term, .. } => Error::Divergence {
                    term,
                    epoch,
                    batch: b,
                },
                other => other,
            })?;
            total += loss;
            seen += batch.len();
        }
        let dev = model.dev_loss()?;
        if !dev.is_finite() {
            return Err(Error::Divergence {
                term: "dev loss",
                epoch,
                batch: 0,
            });
        }
        let stats = EpochStats {
            epoch,
            train_loss: total / seen as f64,
            dev_loss: dev,
        };
        log::info!(
            "epoch {epoch}: train {:.4} dev {:.4}",
            stats.train_loss,
            stats.dev_loss
        );
        history.push(stats);
        if dev < best_dev {
            best_dev = dev;
            best_epoch = epoch;
            best = Some(model.snapshot());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    Ok(TrainReport {
        best: best.expect("at least one epoch ran"),
        best_epoch,
        history,
        stopped_early,
    })
}

/// Fixed-size examples packed for fast minibatch assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames: usize,
    pub dims: usize,
    pub cond_dim: usize,
    x: Vec<f32>,
    cond: Vec<f32>,
    target: Vec<f32>,
}

impl Dataset {
    pub fn new(frames: usize, dims: usize, cond_dim: usize) -> Self {
        Self {
            frames,
            dims,
            cond_dim,
            x: Vec::new(),
            cond: Vec::new(),
            target: Vec::new(),
        }
    }

    /// Append one example; `target` is 1 for bonafide, 0 for spoof.
    pub fn push(&mut self, m: &FeatureMatrix, cond: &[f64], target: f64) -> Result<()> {
        if (m.frames(), m.dims()) != (self.frames, self.dims) {
            return Err(shape_err(
                "Dataset::push",
                (self.frames, self.dims),
                (m.frames(), m.dims()),
            ));
        }
        if cond.len() != self.cond_dim {
            return Err(shape_err(
                "Dataset::push conditioning",
                self.cond_dim,
                cond.len(),
            ));
        }
        self.x.extend(m.values().iter().map(|&v| v as f32));
        self.cond.extend(cond.iter().map(|&v| v as f32));
        self.target.push(target as f32);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn item_len(&self) -> usize {
        self.frames * self.dims
    }

    pub fn target(&self, i: usize) -> f64 {
        self.target[i] as f64
    }

    pub fn input(&self, i: usize) -> &[f32] {
        &self.x[i * self.item_len()..(i + 1) * self.item_len()]
    }

    /// `(x [B, T, D, 1], cond [B, c], targets [B, 1])`.
    pub fn batch<T: Scalar>(&self, idx: &[usize]) -> (Array<T>, Array<T>, Array<T>) {
        let l = self.item_len();
        let c = self.cond_dim;
        let mut x = Vec::with_capacity(idx.len() * l);
        let mut y = Vec::with_capacity(idx.len() * c);
        let mut t = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend(
                self.x[i * l..(i + 1) * l]
                    .iter()
                    .map(|&v| T::from_f64(v as f64)),
            );
            y.extend(
                self.cond[i * c..(i + 1) * c]
                    .iter()
                    .map(|&v| T::from_f64(v as f64)),
            );
            t.push(T::from_f64(self.target[i] as f64));
        }
        let b = idx.len();
        (
            Array::from_vec(&[b, self.frames, self.dims, 1], x).expect("packed batch"),
            Array::from_vec(&[b, c], y).expect("packed batch"),
            Array::from_vec(&[b, 1], t).expect("packed batch"),
        )
    }

    /// Indices in consecutive chunks of at most `size`.
    pub fn chunks(&self, size: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
        let n = self.len();
        (0..n)
            .step_by(size.max(1))
            .map(move |s| (s..(s + size).min(n)).collect())
    }

    /// Copy of the examples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let (l, c) = (self.item_len(), self.cond_dim);
        let mut out = Dataset::new(self.frames, self.dims, c);
        for &i in idx {
            out.x.extend_from_slice(&self.x[i * l..(i + 1) * l]);
            out.cond.extend_from_slice(&self.cond[i * c..(i + 1) * c]);
            out.target.push(self.target[i]);
        }
        out
    }

    pub fn has_both_classes(&self) -> bool {
        self.target.iter().any(|&t| t > 0.5) && self.target.iter().any(|&t| t < 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Quadratic bowl with a dev loss that can be frozen.
    #[derive(Clone)]
    struct Bowl {
        w: f64,
        frozen: Option<f64>,
        steps: usize,
    }

    impl Trainable for Bowl {
        type Snapshot = f64;

        fn train_len(&self) -> usize {
            32
        }

        fn train_step(&mut self, batch: &[usize], _: &mut Rng) -> Result<f64> {
            self.steps += 1;
            let loss = (self.w - 3.0) * (self.w - 3.0);
            self.w -= 0.05 * 2.0 * (self.w - 3.0);
            Ok(loss * batch.len() as f64)
        }

        fn dev_loss(&mut self) -> Result<f64> {
            Ok(self.frozen.unwrap_or((self.w - 3.0) * (self.w - 3.0)))
        }

        fn snapshot(&self) -> f64 {
            self.w
        }
    }

    #[test]
    fn loss_decreases_and_best_is_returned() {
        let mut m = Bowl {
            w: 0.0,
            frozen: None,
            steps: 0,
        };
        let cfg = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let r = fit(&mut m, &cfg).unwrap();
        assert!(r.history[4].train_loss < r.history[0].train_loss);
        assert_eq!(r.best_epoch, 5);
        assert_eq!(r.best, m.w);
        assert!(!r.stopped_early);
    }

    #[test]
    fn frozen_dev_loss_stops_after_patience() {
        let mut m = Bowl {
            w: 0.0,
            frozen: Some(1.0),
            steps: 0,
        };
        let r = fit(&mut m, &TrainConfig::default()).unwrap();
        assert!(r.stopped_early);
        assert_eq!(r.history.len(), 11);
        assert_eq!(r.best_epoch, 1);
    }

    #[test]
    fn trailing_singleton_batch_skipped() {
        #[derive(Clone)]
        struct Odd(usize);
        impl Trainable for Odd {
            type Snapshot = ();
            fn train_len(&self) -> usize {
                17
            }
            fn train_step(&mut self, batch: &[usize], _: &mut Rng) -> Result<f64> {
                assert!(batch.len() >= 2);
                self.0 += batch.len();
                Ok(0.0)
            }
            fn dev_loss(&mut self) -> Result<f64> {
                Ok(0.0)
            }
            fn snapshot(&self) {}
        }
        let mut m = Odd(0);
        fit(
            &mut m,
            &TrainConfig {
                max_epochs: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert_eq!(m.0, 16);
    }
}
