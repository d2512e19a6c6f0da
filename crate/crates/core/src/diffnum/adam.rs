use alloc::string::String;
use alloc::vec::Vec;

use super::array::Array;
use super::param::Param;
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments<T> {
    name: String,
    m: Array<T>,
    v: Array<T>,
}

/// Adam optimiser state: one pair of moment arrays per parameter, bound to
/// the parameter order seen on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    moments: Vec<Moments<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    /// Apply one update from the gradients stored in `params`. Nothing is
    /// modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        if let Some(p) = params.iter().find(|p| !p.grad.all_finite()) {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| Moments {
                    name: p.name.clone(),
                    m: Array::zeros(p.value.shape()),
                    v: Array::zeros(p.value.shape()),
                })
                .collect();
        } else if self.moments.len() != params.len() {
            return Err(shape_err(
                "adam parameter count",
                self.moments.len(),
                params.len(),
            ));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(c.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, t as f64);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (ib1, ib2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let step_size = T::from_f64(c.lr / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);
        let eps = T::from_f64(c.eps);
        for (p, mo) in params.iter_mut().zip(self.moments.iter_mut()) {
            if p.name != mo.name || p.value.shape() != mo.m.shape() {
                return Err(shape_err("adam parameter binding", &mo.name, &p.name));
            }
            let g = p.grad.data();
            let (m, v) = (mo.m.data_mut(), mo.v.data_mut());
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                m[i] = b1 * m[i] + ib1 * g[i];
                v[i] = b2 * v[i] + ib2 * g[i] * g[i];
                *w -= step_size * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn param(vals: &[f64], grads: &[f64]) -> Param<f64> {
        let mut p = Param::new("p", Array::from_vec(&[vals.len()], vals.to_vec()).unwrap());
        p.grad = Array::from_vec(&[grads.len()], grads.to_vec()).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = param(&[1.0, -2.0], &[0.0, 0.0]);
        let mut adam = AdamState::new(AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value.data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let grads = [0.3, -4.0, 1e-2, 250.0];
        let mut p = param(&[0.0; 4], &grads);
        let cfg = AdamConfig::default();
        let mut adam = AdamState::new(cfg);
        adam.step(&mut [&mut p]).unwrap();
        for (w, g) in p.value.data().iter().zip(grads) {
            // closed form of the first bias-corrected step: lr * g / (|g| + eps)
            let expected = -cfg.lr * g / (libm::fabs(g) + cfg.eps);
            assert!(libm::fabs(w - expected) <= 0.01 * libm::fabs(expected));
        }
    }

    #[test]
    fn non_finite_gradient_names_param() {
        let mut p = param(&[1.0], &[f64::NAN]);
        p.name = "decoder.fc.weight".into();
        let mut adam = AdamState::new(AdamConfig::default());
        let err = adam.step(&mut [&mut p]).unwrap_err();
        assert_eq!(err, Error::NonFiniteGradient("decoder.fc.weight".into()));
        assert_eq!(p.value.data(), &[1.0]);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = param(&[0.5, 0.25], &[0.1, -0.2]);
            let mut adam = AdamState::new(AdamConfig::default());
            for k in 0..10 {
                p.grad = Array::from_vec(&[2], vec![0.1 * k as f64, -0.3]).unwrap();
                adam.step(&mut [&mut p]).unwrap();
            }
            p.value
        };
        assert_eq!(run(), run());
    }
}
