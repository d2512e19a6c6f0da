use alloc::vec::Vec;

use crate::cnn::{CnnCache, CnnModel};
use crate::diffnum::layers::{dropout, dropout_backward, leaky_relu, leaky_relu_backward};
use crate::diffnum::{Array, Init, Linear, Mode, Module, Param};
use crate::error::Result;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Single-hidden-layer classifier on the latent mean.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentClassifier<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    dropout: f64,
    slope: f64,
}

pub struct LatentCache<T> {
    x: Array<T>,
    h: Array<T>,
    mask: Option<Vec<T>>,
    a: Array<T>,
}

impl<T: Scalar> LatentClassifier<T> {
    pub fn new(latent: usize, hidden: usize, dropout: f64, slope: f64, rng: &mut Rng) -> Self {
        Self {
            fc1: Linear::new("aux.fc1", latent, hidden, Init::HeUniform, rng),
            fc2: Linear::new("aux.fc2", hidden, 1, Init::LecunUniform, rng),
            dropout,
            slope,
        }
    }

    pub fn hidden(&self) -> usize {
        self.fc1.outputs()
    }

    pub fn forward(
        &self,
        x: &Array<T>,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Array<T>, LatentCache<T>)> {
        let h = self.fc1.forward(x)?;
        let (a, mask) = dropout(
            &leaky_relu(&h, T::from_f64(self.slope)),
            self.dropout,
            mode,
            rng,
        )?;
        let logits = self.fc2.forward(&a)?;
        Ok((
            logits,
            LatentCache {
                x: x.clone(),
                h,
                mask,
                a,
            },
        ))
    }

    pub fn backward(&mut self, cache: &LatentCache<T>, dlogits: &Array<T>) -> Result<Array<T>> {
        let da = self
            .fc2
            .backward(&cache.a, dlogits, true)?
            .expect("requested");
        let dh = leaky_relu_backward(
            &cache.h,
            &dropout_backward(cache.mask.as_deref(), &da),
            T::from_f64(self.slope),
        );
        Ok(self.fc1.backward(&cache.x, &dh, true)?.expect("requested"))
    }
}

impl<T: Scalar> Module<T> for LatentClassifier<T> {
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.fc1.params_mut();
        v.extend(self.fc2.params_mut());
        v
    }

    fn state(&self) -> Vec<(&str, &Array<T>)> {
        let mut v = self.fc1.state();
        v.extend(self.fc2.state());
        v
    }

    fn state_mut(&mut self) -> Vec<(&str, &mut Array<T>)> {
        let mut v = self.fc1.state_mut();
        v.extend(self.fc2.state_mut());
        v
    }
}

/// Auxiliary classifier of an AC-VAE. Trained jointly, ignored when scoring.
#[derive(Debug, Clone, PartialEq)]
pub enum Aux<T> {
    /// Reads the latent mean.
    Latent(LatentClassifier<T>),
    /// Reads the reconstruction mean.
    Recon(CnnModel<T>),
}

pub enum AuxCache<T> {
    Latent(LatentCache<T>),
    Recon(CnnCache<T>),
}

impl<T: Scalar> Module<T> for Aux<T> {
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Aux::Latent(m) => m.params_mut(),
            Aux::Recon(m) => m.params_mut(),
        }
    }

    fn state(&self) -> Vec<(&str, &Array<T>)> {
        match self {
            Aux::Latent(m) => m.state(),
            Aux::Recon(m) => m.state(),
        }
    }

    fn state_mut(&mut self) -> Vec<(&str, &mut Array<T>)> {
        match self {
            Aux::Latent(m) => m.state_mut(),
            Aux::Recon(m) => m.state_mut(),
        }
    }
}
