use alloc::format;
use alloc::vec::Vec;

use super::config::VaeConfig;
use crate::diffnum::layers::{
    clamp, clamp_backward, fit_spatial, fit_spatial_backward, leaky_relu, leaky_relu_backward,
};
use crate::diffnum::{
    concat_cols, split_cols, Array, BatchNorm, BlockCache, BnCache, Conv2d, ConvBlock, Init,
    Linear, Mode, Module, Param,
};
use crate::error::{shape_err, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// FC → reshape → four stride-2 transposed convolutions with zero-pad/crop
/// steps → Gaussian heads.
///
/// After the second transposed convolution the map is padded from
/// `4H x 4W` to `5H x 4W`; after the fourth it is padded or cropped to the
/// input size.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder<T> {
    pub fc: Linear<T>,
    pub fc_bn: BatchNorm<T>,
    pub blocks: Vec<ConvBlock<T>>,
    pub mu: Conv2d<T>,
    pub logvar: Conv2d<T>,
    latent_dim: usize,
    cond_dim: usize,
    hw: (usize, usize),
    c0: usize,
    out_hw: (usize, usize),
    slope: f64,
    lv_range: (f64, f64),
}

pub struct DecoderCache<T> {
    fc_in: Array<T>,
    fc_bn: BnCache<T>,
    fc_pre: Array<T>,
    blocks: Vec<BlockCache<T>>,
    /// Shape of each block output before any pad/crop.
    raw_shapes: Vec<Vec<usize>>,
    head_in: Array<T>,
    lv_raw: Array<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction<T> {
    pub mu: Array<T>,
    pub logvar: Array<T>,
}

impl<T: Scalar> Decoder<T> {
    pub fn new(cfg: &VaeConfig, rng: &mut Rng) -> Self {
        let ch = cfg.dec_channels;
        let blocks = (0..4)
            .map(|i| {
                ConvBlock::conv_transpose(
                    &format!("dec.convt{}", i + 1),
                    cfg.dec_kernels[i],
                    (2, 2),
                    ch[i],
                    ch[i + 1],
                    &cfg.block,
                    rng,
                )
            })
            .collect();
        let fc_width = cfg.fc_width();
        Self {
            fc: Linear::new(
                "dec.fc",
                cfg.latent_dim + cfg.cond_dim,
                fc_width,
                Init::HeUniform,
                rng,
            ),
            fc_bn: BatchNorm::new("dec.fc.bn", ch[0], cfg.block.bn_momentum, cfg.block.bn_eps),
            blocks,
            mu: Conv2d::new(
                "dec.mu",
                cfg.head_kernel,
                (1, 1),
                ch[4],
                1,
                Init::LecunUniform,
                rng,
            ),
            logvar: Conv2d::new(
                "dec.logvar",
                cfg.head_kernel,
                (1, 1),
                ch[4],
                1,
                Init::LecunUniform,
                rng,
            ),
            latent_dim: cfg.latent_dim,
            cond_dim: cfg.cond_dim,
            hw: cfg.dec_hw,
            c0: ch[0],
            out_hw: (cfg.frames, cfg.dims),
            slope: cfg.block.slope,
            lv_range: (cfg.logvar_min, cfg.logvar_max),
        }
    }

    pub fn fc_width(&self) -> usize {
        self.fc.outputs()
    }

    /// Spatial size each block's output is fitted to.
    fn fit_target(&self, i: usize, raw: &[usize]) -> Option<(usize, usize)> {
        match i {
            1 => Some((5 * self.hw.0, raw[2])),
            3 => Some(self.out_hw),
            _ => None,
        }
    }

    fn input(&self, z: &Array<T>, y: &Array<T>) -> Result<Array<T>> {
        let (n, d) = z.dims2("decode")?;
        if d != self.latent_dim {
            return Err(shape_err("decode latent", self.latent_dim, d));
        }
        let (ny, cy) = y.dims2("decode conditioning")?;
        if (ny, cy) != (n, self.cond_dim) {
            return Err(shape_err(
                "decode conditioning",
                (n, self.cond_dim),
                (ny, cy),
            ));
        }
        if self.cond_dim > 0 {
            concat_cols(z, y)
        } else {
            Ok(z.clone())
        }
    }

    fn heads(&self, h: &Array<T>) -> Result<(Array<T>, Array<T>, Array<T>)> {
        let mu = self.mu.forward(h)?;
        let lv_raw = self.logvar.forward(h)?;
        let lv = clamp(
            &lv_raw,
            T::from_f64(self.lv_range.0),
            T::from_f64(self.lv_range.1),
        );
        Ok((mu, lv_raw, lv))
    }

    pub fn forward(
        &mut self,
        z: &Array<T>,
        y: &Array<T>,
        mode: Mode,
    ) -> Result<(Reconstruction<T>, DecoderCache<T>)> {
        let fc_in = self.input(z, y)?;
        let n = fc_in.shape()[0];
        let h = self
            .fc
            .forward(&fc_in)?
            .reshape(&[n, self.hw.0, self.hw.1, self.c0])?;
        let (fc_pre, fc_bn) = self.fc_bn.forward(&h, mode)?;
        let mut h = leaky_relu(&fc_pre, T::from_f64(self.slope));
        let mut caches = Vec::with_capacity(4);
        let mut raw_shapes = Vec::with_capacity(4);
        for i in 0..self.blocks.len() {
            let (o, c) = self.blocks[i].forward(&h, mode)?;
            raw_shapes.push(o.shape().to_vec());
            caches.push(c);
            h = match self.fit_target(i, o.shape()) {
                Some((th, tw)) => fit_spatial(&o, th, tw)?,
                None => o,
            };
        }
        let (mu, lv_raw, logvar) = self.heads(&h)?;
        Ok((
            Reconstruction { mu, logvar },
            DecoderCache {
                fc_in,
                fc_bn,
                fc_pre,
                blocks: caches,
                raw_shapes,
                head_in: h,
                lv_raw,
            },
        ))
    }

    pub fn infer(&self, z: &Array<T>, y: &Array<T>) -> Result<Reconstruction<T>> {
        let fc_in = self.input(z, y)?;
        let n = fc_in.shape()[0];
        let h = self
            .fc
            .forward(&fc_in)?
            .reshape(&[n, self.hw.0, self.hw.1, self.c0])?;
        let mut h = leaky_relu(&self.fc_bn.forward_eval(&h)?.0, T::from_f64(self.slope));
        for i in 0..self.blocks.len() {
            let o = self.blocks[i].infer(&h)?;
            h = match self.fit_target(i, o.shape()) {
                Some((th, tw)) => fit_spatial(&o, th, tw)?,
                None => o,
            };
        }
        let (mu, _, logvar) = self.heads(&h)?;
        Ok(Reconstruction { mu, logvar })
    }

    /// Accumulates parameter gradients and returns the latent gradient.
    pub fn backward(
        &mut self,
        cache: &DecoderCache<T>,
        dmu: &Array<T>,
        dlogvar: &Array<T>,
    ) -> Result<Array<T>> {
        let dlv_raw = clamp_backward(
            &cache.lv_raw,
            dlogvar,
            T::from_f64(self.lv_range.0),
            T::from_f64(self.lv_range.1),
        );
        let mut d = self
            .mu
            .backward(&cache.head_in, dmu, true)?
            .expect("requested");
        d.add_assign(
            &self
                .logvar
                .backward(&cache.head_in, &dlv_raw, true)?
                .expect("requested"),
        )?;
        for i in (0..self.blocks.len()).rev() {
            let raw = &cache.raw_shapes[i];
            if self.fit_target(i, raw).is_some() {
                d = fit_spatial_backward(raw, &d)?;
            }
            d = self.blocks[i]
                .backward(&cache.blocks[i], &d, true)?
                .expect("requested");
        }
        let d = leaky_relu_backward(&cache.fc_pre, &d, T::from_f64(self.slope));
        let d = self.fc_bn.backward(&cache.fc_bn, &d)?;
        let n = d.shape()[0];
        let d = d.reshape(&[n, self.fc_width()])?;
        let dfc_in = self
            .fc
            .backward(&cache.fc_in, &d, true)?
            .expect("requested");
        if self.cond_dim > 0 {
            Ok(split_cols(&dfc_in, self.latent_dim)?.0)
        } else {
            Ok(dfc_in)
        }
    }
}

impl<T: Scalar> Module<T> for Decoder<T> {
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.fc.params_mut();
        v.extend(self.fc_bn.params_mut());
        v.extend(self.blocks.iter_mut().flat_map(|b| b.params_mut()));
        v.extend(self.mu.params_mut());
        v.extend(self.logvar.params_mut());
        v
    }

    fn state(&self) -> Vec<(&str, &Array<T>)> {
        let mut v = self.fc.state();
        v.extend(self.fc_bn.state());
        v.extend(self.blocks.iter().flat_map(|b| b.state()));
        v.extend(self.mu.state());
        v.extend(self.logvar.state());
        v
    }

    fn state_mut(&mut self) -> Vec<(&str, &mut Array<T>)> {
        let mut v = self.fc.state_mut();
        v.extend(self.fc_bn.state_mut());
        v.extend(self.blocks.iter_mut().flat_map(|b| b.state_mut()));
        v.extend(self.mu.state_mut());
        v.extend(self.logvar.state_mut());
        v
    }
}
