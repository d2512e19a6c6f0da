use alloc::vec::Vec;

use super::config::{VaeConfig, Variant};
use super::model::{standard_normal, LossTerms, VaeModel, VaeSystem};
use crate::diffnum::{AdamConfig, AdamState, Module};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::train::{fit, Dataset, TrainConfig, TrainReport, Trainable};

/// A VAE with its optimiser and data, for [`crate::train::fit`].
pub struct VaeSession<'a> {
    pub model: VaeModel<f32>,
    adam: AdamState<f32>,
    train: &'a Dataset,
    dev: &'a Dataset,
    eval_batch: usize,
}

impl<'a> VaeSession<'a> {
    pub fn new(
        model: VaeModel<f32>,
        adam: AdamConfig,
        train: &'a Dataset,
        dev: &'a Dataset,
    ) -> Result<Self> {
        let c = &model.config;
        for d in [train, dev] {
            if d.is_empty() {
                return Err(Error::InvalidArgument(
                    "empty VAE training or dev set".into(),
                ));
            }
            if (d.frames, d.dims, d.cond_dim) != (c.frames, c.dims, c.cond_dim) {
                return Err(Error::InvalidArgument(
                    "dataset layout does not match the VAE config".into(),
                ));
            }
        }
        Ok(Self {
            model,
            adam: AdamState::new(adam),
            train,
            dev,
            eval_batch: 32,
        })
    }

    /// Deterministic objective summed over a whole dataset.
    pub fn evaluate(&self, data: &Dataset) -> Result<LossTerms> {
        let mut acc = LossTerms::default();
        for idx in data.chunks(self.eval_batch) {
            let (x, y, t) = data.batch::<f32>(&idx);
            let l = self.model.eval_objective(&x, &y, &t)?;
            acc.reconstruction += l.reconstruction;
            acc.kl += l.kl;
            acc.bce += l.bce;
            acc.total += l.total;
        }
        Ok(acc)
    }
}

impl Trainable for VaeSession<'_> {
    type Snapshot = VaeModel<f32>;

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn train_step(&mut self, batch: &[usize], noise: &mut Rng) -> Result<f64> {
        let (x, y, t) = self.train.batch::<f32>(batch);
        let eps = standard_normal(&[batch.len(), self.model.config.latent_dim], noise);
        self.model.zero_grad();
        let terms = self.model.accumulate_gradients(&x, &y, &t, &eps, noise)?;
        self.adam.step(&mut self.model.params_mut())?;
        Ok(terms.total)
    }

    fn dev_loss(&mut self) -> Result<f64> {
        Ok(self.evaluate(self.dev)?.total / self.dev.len() as f64)
    }

    fn snapshot(&self) -> VaeModel<f32> {
        self.model.clone()
    }
}

/// Keep only the examples whose target equals `target`.
pub fn filter_class(data: &Dataset, target: f64) -> Dataset {
    let idx: Vec<usize> = (0..data.len())
        .filter(|&i| data.target(i) == target)
        .collect();
    data.subset(&idx)
}

/// Training histories of a [`VaeSystem`]: one entry, or bonafide then spoof
/// for the naive pair.
pub type VaeReports = Vec<TrainReport<()>>;

/// Train a detector of `config.variant`. The naive variant trains one model
/// per class, each on that class's examples only.
pub fn train_vae(
    config: VaeConfig,
    train: &Dataset,
    dev: &Dataset,
    tcfg: &TrainConfig,
) -> Result<(VaeSystem<f32>, VaeReports)> {
    if config.variant == Variant::Naive {
        let mut pair = Vec::with_capacity(2);
        let mut reports = Vec::with_capacity(2);
        for (tag, target) in [("bonafide", 1.0), ("spoof", 0.0)] {
            let (tr, dv) = (filter_class(train, target), filter_class(dev, target));
            if tr.is_empty() || dv.is_empty() {
                return Err(Error::EmptyClass(tag));
            }
            let seed = rng::derive_seed(tcfg.seed, tag);
            let (m, r) = train_one(config, &tr, &dv, &TrainConfig { seed, ..*tcfg })?;
            pair.push(m);
            reports.push(r);
        }
        let spoof = pair.pop().expect("two models");
        let bonafide = pair.pop().expect("two models");
        return Ok((VaeSystem::Naive { bonafide, spoof }, reports));
    }
    if !train.has_both_classes() {
        return Err(Error::SingleClass);
    }
    let (m, r) = train_one(config, train, dev, tcfg)?;
    Ok((VaeSystem::Conditional(m), alloc::vec![r]))
}

fn train_one(
    config: VaeConfig,
    train: &Dataset,
    dev: &Dataset,
    tcfg: &TrainConfig,
) -> Result<(VaeModel<f32>, TrainReport<()>)> {
    let model = VaeModel::new(config, rng::derive_seed(tcfg.seed, "init"))?;
    let mut session = VaeSession::new(model, tcfg.adam, train, dev)?;
    let report = fit(&mut session, tcfg)?;
    let TrainReport {
        best,
        best_epoch,
        history,
        stopped_early,
    } = report;
    Ok((
        best,
        TrainReport {
            best: (),
            best_epoch,
            history,
            stopped_early,
        },
    ))
}
