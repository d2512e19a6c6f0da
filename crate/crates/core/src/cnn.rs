//! Small convolutional bonafide/spoof classifier.
//!
//! Three blocks of 3x3 conv → batch-norm → LeakyReLU → 2x2 max-pool, global
//! average pooling, FC(64) → LeakyReLU → dropout → FC(1) → sigmoid. The
//! output is the bonafide posterior.

use alloc::format;
use alloc::vec::Vec;

use crate::diffnum::layers::{
    dropout, dropout_backward, global_avg_pool, global_avg_pool_backward, leaky_relu,
    leaky_relu_backward, max_pool2, max_pool2_backward, sigmoid_scalar,
};
use crate::diffnum::{
    AdamState, Array, BlockCache, BlockConfig, ConvBlock, Init, Linear, Mode, Module, Param,
};
use crate::error::{shape_err, Error, Result};
use crate::rng::{self, Rng};
use crate::scalar::Scalar;
use crate::train::{Dataset, Trainable};

/// Posterior clamp inside the cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnConfig {
    pub input_hw: (usize, usize),
    pub channels: [usize; 3],
    pub hidden: usize,
    pub dropout: f64,
    pub block: BlockConfig,
}

impl CnnConfig {
    pub fn new(frames: usize, dims: usize) -> Self {
        Self {
            input_hw: (frames, dims),
            channels: [16, 32, 64],
            hidden: 64,
            dropout: 0.5,
            block: BlockConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.input_hw;
        if h < 8 || w < 8 {
            return Err(Error::InvalidArgument(format!(
                "CNN input {h}x{w} is smaller than 8x8"
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) || self.hidden == 0 || self.channels.contains(&0) {
            return Err(Error::InvalidArgument(
                "invalid CNN width or dropout".into(),
            ));
        }
        Ok(())
    }
}

/// Binary cross-entropy of posterior `r` against target `y` (1 = bonafide).
pub fn bce_loss(r: f64, y: f64) -> f64 {
    let r = r.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(y * libm::log(r) + (1.0 - y) * libm::log(1.0 - r))
}

/// `d bce / d r`; zero where the clamp is active.
pub fn bce_grad(r: f64, y: f64) -> f64 {
    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&r) {
        return 0.0;
    }
    -y / r + (1.0 - y) / (1.0 - r)
}

/// Mean BCE over a batch of logits, plus its gradient wrt each logit.
pub fn bce_from_logits<T: Scalar>(logits: &Array<T>, targets: &Array<T>) -> (f64, Array<T>) {
    let n = logits.len();
    let mut loss = 0.0;
    let mut g = Vec::with_capacity(n);
    for (&l, &y) in logits.data().iter().zip(targets.data()) {
        let r = sigmoid_scalar(l.to_f64());
        let y = y.to_f64();
        loss += bce_loss(r, y);
        g.push(T::from_f64(bce_grad(r, y) * r * (1.0 - r)));
    }
    (
        loss,
        Array::from_vec(logits.shape(), g).expect("same shape"),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel<T> {
    pub config: CnnConfig,
    blocks: Vec<ConvBlock<T>>,
    fc1: Linear<T>,
    fc2: Linear<T>,
}

pub struct CnnCache<T> {
    blocks: Vec<(BlockCache<T>, Vec<usize>, Vec<usize>)>,
    last_shape: Vec<usize>,
    pooled: Array<T>,
    h1: Array<T>,
    mask: Option<Vec<T>>,
    a1: Array<T>,
}

impl<T: Scalar> CnnModel<T> {
    pub fn new(config: CnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, "cnn-init");
        let mut cin = 1;
        let blocks = config
            .channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let b = ConvBlock::conv(
                    &format!("cnn.conv{}", i + 1),
                    (3, 3),
                    (1, 1),
                    cin,
                    c,
                    &config.block,
                    &mut r,
                );
                cin = c;
                b
            })
            .collect();
        let fc1 = Linear::new("cnn.fc1", cin, config.hidden, Init::HeUniform, &mut r);
        let fc2 = Linear::new("cnn.fc2", config.hidden, 1, Init::LecunUniform, &mut r);
        Ok(Self {
            config,
            blocks,
            fc1,
            fc2,
        })
    }

    fn check(&self, x: &Array<T>) -> Result<()> {
        let (_, h, w, c) = x.dims4("cnn_forward")?;
        if (h, w, c) != (self.config.input_hw.0, self.config.input_hw.1, 1) {
            return Err(shape_err("cnn_forward", self.config.input_hw, (h, w, c)));
        }
        Ok(())
    }

    /// Logits `[N, 1]` and the cache for [`CnnModel::backward`].
    pub fn forward(
        &mut self,
        x: &Array<T>,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Array<T>, CnnCache<T>)> {
        self.check(x)?;
        let slope = T::from_f64(self.config.block.slope);
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &mut self.blocks {
            let (y, c) = b.forward(&h, mode)?;
            let shape = y.shape().to_vec();
            let (p, arg) = max_pool2(&y)?;
            caches.push((c, arg, shape));
            h = p;
        }
        let last_shape = h.shape().to_vec();
        let pooled = global_avg_pool(&h)?;
        let h1 = self.fc1.forward(&pooled)?;
        let a = leaky_relu(&h1, slope);
        let (a1, mask) = dropout(&a, self.config.dropout, mode, rng)?;
        let logits = self.fc2.forward(&a1)?;
        Ok((
            logits,
            CnnCache {
                blocks: caches,
                last_shape,
                pooled,
                h1,
                mask,
                a1,
            },
        ))
    }

    /// Eval-mode logits without mutating the model.
    pub fn logits(&self, x: &Array<T>) -> Result<Array<T>> {
        self.check(x)?;
        let mut h = x.clone();
        for b in &self.blocks {
            h = max_pool2(&b.infer(&h)?)?.0;
        }
        let a = leaky_relu(
            &self.fc1.forward(&global_avg_pool(&h)?)?,
            T::from_f64(self.config.block.slope),
        );
        self.fc2.forward(&a)
    }

    /// Bonafide posteriors in eval mode, computed in f64 from the logits.
    pub fn posterior(&self, x: &Array<T>) -> Result<Vec<f64>> {
        Ok(self
            .logits(x)?
            .data()
            .iter()
            .map(|l| sigmoid_scalar(l.to_f64()))
            .collect())
    }

    pub fn backward(
        &mut self,
        cache: &CnnCache<T>,
        dlogits: &Array<T>,
        need_dx: bool,
    ) -> Result<Option<Array<T>>> {
        let slope = T::from_f64(self.config.block.slope);
        let da1 = self
            .fc2
            .backward(&cache.a1, dlogits, true)?
            .expect("requested");
        let da = dropout_backward(cache.mask.as_deref(), &da1);
        let dh1 = leaky_relu_backward(&cache.h1, &da, slope);
        let dp = self
            .fc1
            .backward(&cache.pooled, &dh1, true)?
            .expect("requested");
        let mut d = global_avg_pool_backward(&cache.last_shape, &dp);
        for (i, b) in self.blocks.iter_mut().enumerate().rev() {
            let (bc, arg, shape) = &cache.blocks[i];
            let dy = max_pool2_backward(shape, arg, &d);
            let dx = b.backward(bc, &dy, i > 0 || need_dx)?;
            if i == 0 {
                return Ok(dx);
            }
            d = dx.expect("requested");
        }
        Ok(Some(d))
    }
}

impl<T: Scalar> Module<T> for CnnModel<T> {
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> = self
            .blocks
            .iter_mut()
            .flat_map(|b| b.params_mut())
            .collect();
        v.extend(self.fc1.params_mut());
        v.extend(self.fc2.params_mut());
        v
    }

    fn state(&self) -> Vec<(&str, &Array<T>)> {
        let mut v: Vec<_> = self.blocks.iter().flat_map(|b| b.state()).collect();
        v.extend(self.fc1.state());
        v.extend(self.fc2.state());
        v
    }

    fn state_mut(&mut self) -> Vec<(&str, &mut Array<T>)> {
        let mut v: Vec<_> = self.blocks.iter_mut().flat_map(|b| b.state_mut()).collect();
        v.extend(self.fc1.state_mut());
        v.extend(self.fc2.state_mut());
        v
    }
}

/// CNN + optimiser + data for [`crate::train::fit`].
pub struct CnnSession<'a> {
    pub model: CnnModel<f32>,
    adam: AdamState<f32>,
    train: &'a Dataset,
    dev: &'a Dataset,
    eval_batch: usize,
}

impl<'a> CnnSession<'a> {
    pub fn new(
        model: CnnModel<f32>,
        adam: crate::diffnum::AdamConfig,
        train: &'a Dataset,
        dev: &'a Dataset,
    ) -> Result<Self> {
        if !train.has_both_classes() {
            return Err(Error::SingleClass);
        }
        if dev.is_empty() {
            return Err(Error::InvalidArgument("empty dev set".into()));
        }
        Ok(Self {
            model,
            adam: AdamState::new(adam),
            train,
            dev,
            eval_batch: 64,
        })
    }
}

impl Trainable for CnnSession<'_> {
    type Snapshot = CnnModel<f32>;

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn train_step(&mut self, batch: &[usize], noise: &mut Rng) -> Result<f64> {
        let (x, _, t) = self.train.batch::<f32>(batch);
        self.model.zero_grad();
        let (logits, cache) = self.model.forward(&x, Mode::Train, noise)?;
        let (loss, mut g) = bce_from_logits(&logits, &t);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                term: "bce",
                epoch: 0,
                batch: 0,
            });
        }
        g.scale(1.0 / batch.len() as f32);
        self.model.backward(&cache, &g, false)?;
        self.adam.step(&mut self.model.params_mut())?;
        Ok(loss)
    }

    fn dev_loss(&mut self) -> Result<f64> {
        let mut total = 0.0;
        for idx in self.dev.chunks(self.eval_batch) {
            let (x, _, t) = self.dev.batch::<f32>(&idx);
            total += bce_from_logits(&self.model.logits(&x)?, &t).0;
        }
        Ok(total / self.dev.len() as f64)
    }

    fn snapshot(&self) -> CnnModel<f32> {
        self.model.clone()
    }
}

/// Bonafide posteriors for every example of `data`.
pub fn cnn_scores(model: &CnnModel<f32>, data: &Dataset) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(data.len());
    for idx in data.chunks(64) {
        out.extend(model.posterior(&data.batch::<f32>(&idx).0)?);
    }
    Ok(out)
}
