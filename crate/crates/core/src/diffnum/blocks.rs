//! Convolution + batch-norm + LeakyReLU stacks shared by the encoder,
//! decoder and CNN.

use alloc::vec::Vec;

use super::array::Array;
use super::conv::{Conv2d, ConvTranspose2d};
use super::layers::{leaky_relu, leaky_relu_backward, BatchNorm, BnCache, Mode};
use super::module::Module;
use super::param::{Init, Param};
use crate::error::Result;
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockConfig {
    pub slope: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            slope: 0.2,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Op<T> {
    Conv(Conv2d<T>),
    ConvT(ConvTranspose2d<T>),
}

/// `act(bn(conv(x)))` with either a convolution or a transposed convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<T> {
    op: Op<T>,
    pub bn: BatchNorm<T>,
    pub slope: f64,
}

pub struct BlockCache<T> {
    input: Array<T>,
    pre_act: Array<T>,
    bn: BnCache<T>,
}

impl<T: Scalar> ConvBlock<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        name: &str,
        kernel: (usize, usize),
        stride: (usize, usize),
        in_ch: usize,
        out_ch: usize,
        cfg: &BlockConfig,
        rng: &mut Rng,
    ) -> Self {
        Self {
            op: Op::Conv(
                Conv2d::new(name, kernel, stride, in_ch, out_ch, Init::HeUniform, rng)
                    .without_bias(),
            ),
            bn: BatchNorm::new(
                &alloc::format!("{name}.bn"),
                out_ch,
                cfg.bn_momentum,
                cfg.bn_eps,
            ),
            slope: cfg.slope,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv_transpose(
        name: &str,
        kernel: (usize, usize),
        stride: (usize, usize),
        in_ch: usize,
        out_ch: usize,
        cfg: &BlockConfig,
        rng: &mut Rng,
    ) -> Self {
        Self {
            op: Op::ConvT(
                ConvTranspose2d::new(name, kernel, stride, in_ch, out_ch, Init::HeUniform, rng)
                    .without_bias(),
            ),
            bn: BatchNorm::new(
                &alloc::format!("{name}.bn"),
                out_ch,
                cfg.bn_momentum,
                cfg.bn_eps,
            ),
            slope: cfg.slope,
        }
    }

    pub fn kernel(&self) -> (usize, usize) {
        let w = match &self.op {
            Op::Conv(c) => &c.weight.value,
            Op::ConvT(c) => &c.weight.value,
        };
        (w.shape()[0], w.shape()[1])
    }

    pub fn is_transposed(&self) -> bool {
        matches!(self.op, Op::ConvT(_))
    }

    pub fn forward(&mut self, x: &Array<T>, mode: Mode) -> Result<(Array<T>, BlockCache<T>)> {
        let h = match &self.op {
            Op::Conv(c) => c.forward(x)?,
            Op::ConvT(c) => c.forward(x)?,
        };
        let (pre_act, bn) = self.bn.forward(&h, mode)?;
        let y = leaky_relu(&pre_act, T::from_f64(self.slope));
        Ok((
            y,
            BlockCache {
                input: x.clone(),
                pre_act,
                bn,
            },
        ))
    }

    /// Eval-mode forward without touching any state.
    pub fn infer(&self, x: &Array<T>) -> Result<Array<T>> {
        let h = match &self.op {
            Op::Conv(c) => c.forward(x)?,
            Op::ConvT(c) => c.forward(x)?,
        };
        let (pre_act, _) = self.bn.forward_eval(&h)?;
        Ok(leaky_relu(&pre_act, T::from_f64(self.slope)))
    }

    pub fn backward(
        &mut self,
        cache: &BlockCache<T>,
        dy: &Array<T>,
        need_dx: bool,
    ) -> Result<Option<Array<T>>> {
        let d = leaky_relu_backward(&cache.pre_act, dy, T::from_f64(self.slope));
        let d = self.bn.backward(&cache.bn, &d)?;
        match &mut self.op {
            Op::Conv(c) => c.backward(&cache.input, &d, need_dx),
            Op::ConvT(c) => c.backward(&cache.input, &d, need_dx),
        }
    }
}

impl<T: Scalar> Module<T> for ConvBlock<T> {
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = match &mut self.op {
            Op::Conv(c) => c.params_mut(),
            Op::ConvT(c) => c.params_mut(),
        };
        v.extend(self.bn.params_mut());
        v
    }

    fn state(&self) -> Vec<(&str, &Array<T>)> {
        let mut v = match &self.op {
            Op::Conv(c) => c.state(),
            Op::ConvT(c) => c.state(),
        };
        v.extend(self.bn.state());
        v
    }

    fn state_mut(&mut self) -> Vec<(&str, &mut Array<T>)> {
        let mut v = match &mut self.op {
            Op::Conv(c) => c.state_mut(),
            Op::ConvT(c) => c.state_mut(),
        };
        v.extend(self.bn.state_mut());
        v
    }
}
