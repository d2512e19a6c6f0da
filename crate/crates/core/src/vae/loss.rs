//! ELBO terms with their gradients.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::diffnum::Array;
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

/// Per-example Gaussian negative log-likelihood summed over all elements,
/// with gradients wrt the mean and log-variance.
pub fn gaussian_nll<T: Scalar>(
    x: &Array<T>,
    mu: &Array<T>,
    logvar: &Array<T>,
) -> Result<(Vec<f64>, Array<T>, Array<T>)> {
    if x.shape() != mu.shape() || x.shape() != logvar.shape() {
        return Err(shape_err("gaussian_nll", x.shape(), mu.shape()));
    }
    let n = x.shape()[0];
    let per = x.len() / n.max(1);
    let ln2pi = libm::log(2.0 * PI);
    let mut losses = Vec::with_capacity(n);
    let mut dmu = Array::zeros(x.shape());
    let mut dlv = Array::zeros(x.shape());
    for s in 0..n {
        let r = s * per..(s + 1) * per;
        let mut acc = 0.0;
        for i in r {
            let (xv, m, lv) = (
                x.data()[i].to_f64(),
                mu.data()[i].to_f64(),
                logvar.data()[i].to_f64(),
            );
            let inv = libm::exp(-lv);
            let d = xv - m;
            acc += 0.5 * (ln2pi + lv + d * d * inv);
            dmu.data_mut()[i] = T::from_f64(-d * inv);
            dlv.data_mut()[i] = T::from_f64(0.5 * (1.0 - d * d * inv));
        }
        losses.push(acc);
    }
    Ok((losses, dmu, dlv))
}

/// `KL(N(mu, exp(logvar)) || N(0, I))` per example, with gradients.
pub fn kl_divergence<T: Scalar>(
    mu: &Array<T>,
    logvar: &Array<T>,
) -> Result<(Vec<f64>, Array<T>, Array<T>)> {
    if mu.shape() != logvar.shape() {
        return Err(shape_err("kl_divergence", mu.shape(), logvar.shape()));
    }
    let (n, d) = mu.dims2("kl_divergence")?;
    let mut losses = Vec::with_capacity(n);
    let mut dmu = Array::zeros(mu.shape());
    let mut dlv = Array::zeros(mu.shape());
    for s in 0..n {
        let mut acc = 0.0;
        for i in s * d..(s + 1) * d {
            let (m, lv) = (mu.data()[i].to_f64(), logvar.data()[i].to_f64());
            let e = libm::exp(lv);
            acc += -0.5 * (1.0 + lv - m * m - e);
            dmu.data_mut()[i] = T::from_f64(m);
            dlv.data_mut()[i] = T::from_f64(0.5 * (e - 1.0));
        }
        losses.push(acc);
    }
    Ok((losses, dmu, dlv))
}

/// Closed-form KL for a single diagonal Gaussian given as slices.
pub fn kl_closed_form(mu: &[f64], var: &[f64]) -> f64 {
    mu.iter()
        .zip(var)
        .map(|(m, v)| -0.5 * (1.0 + libm::log(*v) - m * m - v))
        .sum()
}

/// `z = mu + exp(logvar / 2) * eps`.
pub fn reparameterize<T: Scalar>(
    mu: &Array<T>,
    logvar: &Array<T>,
    eps: &Array<T>,
) -> Result<Array<T>> {
    if mu.shape() != logvar.shape() || mu.shape() != eps.shape() {
        return Err(shape_err("reparameterize", mu.shape(), eps.shape()));
    }
    let half = T::from_f64(0.5);
    let data = mu
        .data()
        .iter()
        .zip(logvar.data())
        .zip(eps.data())
        .map(|((&m, &lv), &e)| m + (half * lv).exp() * e)
        .collect();
    Array::from_vec(mu.shape(), data)
}

/// Gradients of [`reparameterize`] wrt `(mu, logvar)`.
pub fn reparameterize_backward<T: Scalar>(
    logvar: &Array<T>,
    eps: &Array<T>,
    dz: &Array<T>,
) -> (Array<T>, Array<T>) {
    let half = T::from_f64(0.5);
    let dlv = logvar
        .data()
        .iter()
        .zip(eps.data())
        .zip(dz.data())
        .map(|((&lv, &e), &d)| d * e * half * (half * lv).exp())
        .collect();
    (
        dz.clone(),
        Array::from_vec(logvar.shape(), dlv).expect("same shape"),
    )
}
