use alloc::format;
use alloc::vec::Vec;

use super::config::VaeConfig;
use crate::diffnum::layers::{clamp, clamp_backward};
use crate::diffnum::{
    concat_cols, split_cols, Array, BlockCache, ConvBlock, Init, Linear, Mode, Module, Param,
};
use crate::error::{shape_err, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Strided convolution stack followed by linear `mu_z` / `log var_z` heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub blocks: Vec<ConvBlock<T>>,
    pub mu: Linear<T>,
    pub logvar: Linear<T>,
    pub flat_dim: usize,
    cond_dim: usize,
    frames: usize,
    dims: usize,
    lv_range: (f64, f64),
}

pub struct EncoderCache<T> {
    blocks: Vec<BlockCache<T>>,
    pub block_shapes: Vec<Vec<usize>>,
    head_in: Array<T>,
    lv_raw: Array<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior<T> {
    pub mu: Array<T>,
    pub logvar: Array<T>,
}

impl<T: Scalar> Encoder<T> {
    pub fn new(cfg: &VaeConfig, rng: &mut Rng) -> Self {
        let (mut h, mut w, mut cin) = (cfg.frames, cfg.dims, 1);
        let mut blocks = Vec::with_capacity(cfg.enc_layers);
        for i in 0..cfg.enc_layers {
            let cout = cfg.base_channels << i;
            let b = ConvBlock::conv(
                &format!("enc.conv{}", i + 1),
                (cfg.enc_kernel_t, w),
                (2, 2),
                cin,
                cout,
                &cfg.block,
                rng,
            );
            blocks.push(b);
            h = h.div_ceil(2);
            w = w.div_ceil(2);
            cin = cout;
        }
        let flat_dim = h * w * cin;
        let head_in = flat_dim + cfg.cond_dim;
        Self {
            blocks,
            mu: Linear::new("enc.mu", head_in, cfg.latent_dim, Init::LecunUniform, rng),
            logvar: Linear::new(
                "enc.logvar",
                head_in,
                cfg.latent_dim,
                Init::LecunUniform,
                rng,
            ),
            flat_dim,
            cond_dim: cfg.cond_dim,
            frames: cfg.frames,
            dims: cfg.dims,
            lv_range: (cfg.logvar_min, cfg.logvar_max),
        }
    }

    fn check(&self, x: &Array<T>, y: &Array<T>) -> Result<usize> {
        let (n, h, w, c) = x.dims4("encode")?;
        if (h, w, c) != (self.frames, self.dims, 1) {
            return Err(shape_err(
                "encode input",
                (self.frames, self.dims, 1),
                (h, w, c),
            ));
        }
        let (ny, cy) = y.dims2("encode conditioning")?;
        if (ny, cy) != (n, self.cond_dim) {
            return Err(shape_err(
                "encode conditioning",
                (n, self.cond_dim),
                (ny, cy),
            ));
        }
        Ok(n)
    }

    fn heads(
        &self,
        h: &Array<T>,
        y: &Array<T>,
    ) -> Result<(Array<T>, Array<T>, Array<T>, Array<T>)> {
        let n = h.shape()[0];
        let flat = h.clone().reshape(&[n, self.flat_dim])?;
        let head_in = if self.cond_dim > 0 {
            concat_cols(&flat, y)?
        } else {
            flat
        };
        let mu = self.mu.forward(&head_in)?;
        let lv_raw = self.logvar.forward(&head_in)?;
        let lv = clamp(
            &lv_raw,
            T::from_f64(self.lv_range.0),
            T::from_f64(self.lv_range.1),
        );
        Ok((head_in, mu, lv_raw, lv))
    }

    pub fn forward(
        &mut self,
        x: &Array<T>,
        y: &Array<T>,
        mode: Mode,
    ) -> Result<(Posterior<T>, EncoderCache<T>)> {
        self.check(x, y)?;
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut block_shapes = Vec::with_capacity(self.blocks.len());
        for b in &mut self.blocks {
            let (o, c) = b.forward(&h, mode)?;
            block_shapes.push(o.shape().to_vec());
            caches.push(c);
            h = o;
        }
        let (head_in, mu, lv_raw, logvar) = self.heads(&h, y)?;
        Ok((
            Posterior { mu, logvar },
            EncoderCache {
                blocks: caches,
                block_shapes,
                head_in,
                lv_raw,
            },
        ))
    }

    /// Eval-mode posterior.
    pub fn infer(&self, x: &Array<T>, y: &Array<T>) -> Result<Posterior<T>> {
        self.check(x, y)?;
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.infer(&h)?;
        }
        let (_, mu, _, logvar) = self.heads(&h, y)?;
        Ok(Posterior { mu, logvar })
    }

    pub fn backward(
        &mut self,
        cache: &EncoderCache<T>,
        dmu: &Array<T>,
        dlogvar: &Array<T>,
    ) -> Result<()> {
        let dlv_raw = clamp_backward(
            &cache.lv_raw,
            dlogvar,
            T::from_f64(self.lv_range.0),
            T::from_f64(self.lv_range.1),
        );
        let mut dhead = self
            .mu
            .backward(&cache.head_in, dmu, true)?
            .expect("requested");
        dhead.add_assign(
            &self
                .logvar
                .backward(&cache.head_in, &dlv_raw, true)?
                .expect("requested"),
        )?;
        let dflat = if self.cond_dim > 0 {
            split_cols(&dhead, self.flat_dim)?.0
        } else {
            dhead
        };
        let last = cache.block_shapes.last().expect("at least one block");
        let mut d = dflat.reshape(last)?;
        for (i, b) in self.blocks.iter_mut().enumerate().rev() {
            match b.backward(&cache.blocks[i], &d, i > 0)? {
                Some(dx) => d = dx,
                None => break,
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Module<T> for Encoder<T> {
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> = self
            .blocks
            .iter_mut()
            .flat_map(|b| b.params_mut())
            .collect();
        v.extend(self.mu.params_mut());
        v.extend(self.logvar.params_mut());
        v
    }

    fn state(&self) -> Vec<(&str, &Array<T>)> {
        let mut v: Vec<_> = self.blocks.iter().flat_map(|b| b.state()).collect();
        v.extend(self.mu.state());
        v.extend(self.logvar.state());
        v
    }

    fn state_mut(&mut self) -> Vec<(&str, &mut Array<T>)> {
        let mut v: Vec<_> = self.blocks.iter_mut().flat_map(|b| b.state_mut()).collect();
        v.extend(self.mu.state_mut());
        v.extend(self.logvar.state_mut());
        v
    }
}
