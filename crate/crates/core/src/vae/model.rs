use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::aux::{Aux, AuxCache, LatentClassifier};
use super::config::{conditioning, VaeConfig, Variant};
use super::decoder::{Decoder, Reconstruction};
use super::encoder::{Encoder, Posterior};
use super::loss::{gaussian_nll, kl_divergence, reparameterize, reparameterize_backward};
use crate::cnn::{bce_from_logits, CnnConfig, CnnModel};
use crate::corpus::Label;
use crate::diffnum::{Array, Mode, Module, Param};
use crate::error::{shape_err, Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

/// Summed per-example loss terms of one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub reconstruction: f64,
    pub kl: f64,
    pub bce: f64,
    /// `alpha * (reconstruction + kl) + beta * bce`.
    pub total: f64,
}

impl LossTerms {
    fn check(&self) -> Result<()> {
        let bad = |term| {
            Err(Error::Divergence {
                term,
                epoch: 0,
                batch: 0,
            })
        };
        if !self.reconstruction.is_finite() {
            return bad("reconstruction term");
        }
        if !self.kl.is_finite() {
            return bad("KL term");
        }
        if !self.bce.is_finite() {
            return bad("auxiliary BCE");
        }
        Ok(())
    }
}

/// How the negative ELBO is estimated outside training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    /// Decode `z = mu_z`.
    #[default]
    Mean,
    /// Average over `samples` reparameterised draws.
    Sampled { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel<T> {
    pub config: VaeConfig,
    pub encoder: Encoder<T>,
    pub decoder: Decoder<T>,
    pub aux: Option<Aux<T>>,
}

impl<T: Scalar> VaeModel<T> {
    pub fn new(config: VaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, "vae-init");
        let encoder = Encoder::new(&config, &mut r);
        let decoder = Decoder::new(&config, &mut r);
        let aux = match config.variant {
            Variant::Acvae1 => Some(Aux::Latent(LatentClassifier::new(
                config.latent_dim,
                config.aux_hidden,
                config.aux_dropout,
                config.block.slope,
                &mut r,
            ))),
            Variant::Acvae2 => Some(Aux::Recon(CnnModel::new(
                CnnConfig::new(config.frames, config.dims),
                rng::derive_seed(seed, "vae-aux"),
            )?)),
            _ => None,
        };
        Ok(Self {
            config,
            encoder,
            decoder,
            aux,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn feature_kind(&self) -> FeatureKind {
        self.config.feature_kind
    }

    pub fn encode(&self, x: &Array<T>, y: &Array<T>) -> Result<Posterior<T>> {
        self.encoder.infer(x, y)
    }

    pub fn decode(&self, z: &Array<T>, y: &Array<T>) -> Result<Reconstruction<T>> {
        self.decoder.infer(z, y)
    }

    /// Per-example reconstruction and KL terms in eval mode.
    pub fn elbo_terms(
        &self,
        x: &Array<T>,
        y: &Array<T>,
        est: Estimator,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let post = self.encode(x, y)?;
        let (kl, _, _) = kl_divergence(&post.mu, &post.logvar)?;
        let rec = match est {
            Estimator::Mean => {
                let r = self.decode(&post.mu, y)?;
                gaussian_nll(x, &r.mu, &r.logvar)?.0
            }
            Estimator::Sampled { samples, seed } => {
                if samples == 0 {
                    return Err(Error::InvalidArgument(
                        "sampled estimator needs at least one draw".into(),
                    ));
                }
                let mut noise = rng::stream(seed, "score-eps");
                let mut acc = alloc::vec![0.0; kl.len()];
                for _ in 0..samples {
                    let eps = standard_normal(post.mu.shape(), &mut noise);
                    let z = reparameterize(&post.mu, &post.logvar, &eps)?;
                    let r = self.decode(&z, y)?;
                    for (a, v) in acc.iter_mut().zip(gaussian_nll(x, &r.mu, &r.logvar)?.0) {
                        *a += v / samples as f64;
                    }
                }
                acc
            }
        };
        Ok((rec, kl))
    }

    /// Per-example negative ELBO.
    pub fn neg_elbo(&self, x: &Array<T>, y: &Array<T>, est: Estimator) -> Result<Vec<f64>> {
        let (rec, kl) = self.elbo_terms(x, y, est)?;
        Ok(rec.iter().zip(&kl).map(|(r, k)| r + k).collect())
    }

    /// Deterministic training objective: `z = mu_z`, eval-mode layers.
    pub fn eval_objective(
        &self,
        x: &Array<T>,
        y: &Array<T>,
        target: &Array<T>,
    ) -> Result<LossTerms> {
        let post = self.encode(x, y)?;
        let (kl, _, _) = kl_divergence(&post.mu, &post.logvar)?;
        let r = self.decode(&post.mu, y)?;
        let (rec, _, _) = gaussian_nll(x, &r.mu, &r.logvar)?;
        let bce = match &self.aux {
            None => 0.0,
            Some(Aux::Latent(c)) => {
                let mut unused = rng::stream(0, "eval");
                bce_from_logits(&c.forward(&post.mu, Mode::Eval, &mut unused)?.0, target).0
            }
            Some(Aux::Recon(c)) => bce_from_logits(&c.logits(&r.mu)?, target).0,
        };
        Ok(self.terms(rec.iter().sum(), kl.iter().sum(), bce))
    }

    fn terms(&self, reconstruction: f64, kl: f64, bce: f64) -> LossTerms {
        LossTerms {
            reconstruction,
            kl,
            bce,
            total: self.config.alpha * (reconstruction + kl) + self.config.beta * bce,
        }
    }

    /// Forward and backward pass on one batch with the given noise `eps`.
    /// Gradients of the batch-mean objective are accumulated into the
    /// parameters (call `zero_grad` first); returns summed terms.
    pub fn accumulate_gradients(
        &mut self,
        x: &Array<T>,
        y: &Array<T>,
        target: &Array<T>,
        eps: &Array<T>,
        rng: &mut Rng,
    ) -> Result<LossTerms> {
        let n = x.shape().first().copied().unwrap_or(0);
        if target.shape() != [n, 1] {
            return Err(shape_err("VAE targets", (n, 1), target.shape()));
        }
        let (alpha, beta) = (self.config.alpha, self.config.beta);
        let inv_n = 1.0 / n as f64;

        let (post, enc_cache) = self.encoder.forward(x, y, Mode::Train)?;
        let z = reparameterize(&post.mu, &post.logvar, eps)?;
        let (recon, dec_cache) = self.decoder.forward(&z, y, Mode::Train)?;
        let (rec, mut dmu_x, mut dlv_x) = gaussian_nll(x, &recon.mu, &recon.logvar)?;
        let (kl, mut dmu_z, mut dlv_z) = kl_divergence(&post.mu, &post.logvar)?;

        let (bce, aux_cache, dlogits) = match &mut self.aux {
            None => (0.0, None, None),
            Some(Aux::Latent(c)) => {
                let (logits, cache) = c.forward(&post.mu, Mode::Train, rng)?;
                let (l, g) = bce_from_logits(&logits, target);
                (l, Some(AuxCache::Latent(cache)), Some(g))
            }
            Some(Aux::Recon(c)) => {
                let (logits, cache) = c.forward(&recon.mu, Mode::Train, rng)?;
                let (l, g) = bce_from_logits(&logits, target);
                (l, Some(AuxCache::Recon(cache)), Some(g))
            }
        };
        let terms = self.terms(rec.iter().sum(), kl.iter().sum(), bce);
        terms.check()?;

        let elbo_scale = T::from_f64(alpha * inv_n);
        dmu_x.scale(elbo_scale);
        dlv_x.scale(elbo_scale);
        dmu_z.scale(elbo_scale);
        dlv_z.scale(elbo_scale);

        if let (Some(cache), Some(mut g)) = (aux_cache, dlogits) {
            g.scale(T::from_f64(beta * inv_n));
            match (&mut self.aux, cache) {
                (Some(Aux::Latent(c)), AuxCache::Latent(cache)) => {
                    dmu_z.add_assign(&c.backward(&cache, &g)?)?
                }
                (Some(Aux::Recon(c)), AuxCache::Recon(cache)) => {
                    dmu_x.add_assign(&c.backward(&cache, &g, true)?.expect("requested"))?
                }
                _ => unreachable!("cache matches head"),
            }
        }

        let dz = self.decoder.backward(&dec_cache, &dmu_x, &dlv_x)?;
        let (dmu_r, dlv_r) = reparameterize_backward(&post.logvar, eps, &dz);
        dmu_z.add_assign(&dmu_r)?;
        dlv_z.add_assign(&dlv_r)?;
        self.encoder.backward(&enc_cache, &dmu_z, &dlv_z)?;
        Ok(terms)
    }

    /// Latent means.
    pub fn latents(&self, x: &Array<T>, y: &Array<T>) -> Result<Array<T>> {
        Ok(self.encode(x, y)?.mu)
    }

    /// `|x - mu_x|` at `z = mu_z`.
    pub fn residual(&self, x: &Array<T>, y: &Array<T>) -> Result<Array<T>> {
        let post = self.encode(x, y)?;
        let r = self.decode(&post.mu, y)?;
        let data = x
            .data()
            .iter()
            .zip(r.mu.data())
            .map(|(&a, &b)| (a - b).abs())
            .collect();
        Array::from_vec(x.shape(), data)
    }

    /// Conditioning rows for `label` and the given phrases.
    pub fn conditioning_batch(&self, label: Label, phrases: &[u16]) -> Result<Array<T>> {
        let c = self.config.cond_dim;
        let mut data = Vec::with_capacity(phrases.len() * c);
        for &p in phrases {
            data.extend(conditioning(label, p, c)?.into_iter().map(T::from_f64));
        }
        Array::from_vec(&[phrases.len(), c], data)
    }
}

impl<T: Scalar> Module<T> for VaeModel<T> {
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.encoder.params_mut();
        v.extend(self.decoder.params_mut());
        if let Some(a) = &mut self.aux {
            v.extend(a.params_mut());
        }
        v
    }

    fn state(&self) -> Vec<(&str, &Array<T>)> {
        let mut v = self.encoder.state();
        v.extend(self.decoder.state());
        if let Some(a) = &self.aux {
            v.extend(a.state());
        }
        v
    }

    fn state_mut(&mut self) -> Vec<(&str, &mut Array<T>)> {
        let mut v = self.encoder.state_mut();
        v.extend(self.decoder.state_mut());
        if let Some(a) = &mut self.aux {
            v.extend(a.state_mut());
        }
        v
    }
}

pub fn standard_normal<T: Scalar>(shape: &[usize], rng: &mut Rng) -> Array<T> {
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| T::from_f64(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Array::from_vec(shape, data).expect("sized")
}

/// A trained detector: one conditional model, or one model per class.
#[derive(Debug, Clone, PartialEq)]
pub enum VaeSystem<T> {
    Conditional(VaeModel<T>),
    Naive {
        bonafide: VaeModel<T>,
        spoof: VaeModel<T>,
    },
}

impl<T: Scalar> VaeSystem<T> {
    pub fn config(&self) -> &VaeConfig {
        match self {
            VaeSystem::Conditional(m) => &m.config,
            VaeSystem::Naive { bonafide, .. } => &bonafide.config,
        }
    }

    /// Log-likelihood ratio proxies `l(spoof) - l(bonafide)` for a batch;
    /// higher means more bonafide.
    pub fn score(&self, x: &Array<T>, phrases: &[u16], est: Estimator) -> Result<Vec<f64>> {
        let (bona, spoof) = match self {
            VaeSystem::Conditional(m) => {
                let yb = m.conditioning_batch(Label::Bonafide, phrases)?;
                let ys = m.conditioning_batch(Label::Spoof, phrases)?;
                (m.neg_elbo(x, &yb, est)?, m.neg_elbo(x, &ys, est)?)
            }
            VaeSystem::Naive { bonafide, spoof } => {
                let y = Array::zeros(&[phrases.len(), 0]);
                (bonafide.neg_elbo(x, &y, est)?, spoof.neg_elbo(x, &y, est)?)
            }
        };
        Ok(spoof.iter().zip(&bona).map(|(s, b)| s - b).collect())
    }

    /// The model and conditioning that represent the bonafide class.
    fn bonafide_view(&self, phrases: &[u16]) -> Result<(&VaeModel<T>, Array<T>)> {
        match self {
            VaeSystem::Conditional(m) => Ok((m, m.conditioning_batch(Label::Bonafide, phrases)?)),
            VaeSystem::Naive { bonafide, .. } => Ok((bonafide, Array::zeros(&[phrases.len(), 0]))),
        }
    }

    /// Reconstruction residuals under bonafide conditioning.
    pub fn residuals(&self, x: &Array<T>, phrases: &[u16]) -> Result<Array<T>> {
        let (m, y) = self.bonafide_view(phrases)?;
        m.residual(x, &y)
    }

    /// Latent means under bonafide conditioning.
    pub fn latents(&self, x: &Array<T>, phrases: &[u16]) -> Result<Array<T>> {
        let (m, y) = self.bonafide_view(phrases)?;
        m.latents(x, &y)
    }

    /// Residual feature matrix for one utterance.
    pub fn residual_features(&self, m: &FeatureMatrix, phrase: u16) -> Result<FeatureMatrix> {
        let c = self.config();
        if m.kind() != c.feature_kind || (m.frames(), m.dims()) != (c.frames, c.dims) {
            return Err(shape_err(
                "residual_features",
                (c.feature_kind, c.frames, c.dims),
                (m.kind(), m.frames(), m.dims()),
            ));
        }
        let x = FeatureMatrix::stack::<T>(&[m])?;
        let r = self.residuals(&x, &[phrase])?;
        FeatureMatrix::new(
            c.feature_kind.residual(),
            m.frames(),
            m.dims(),
            r.data().iter().map(|v| v.to_f64()).collect(),
        )
    }
}
