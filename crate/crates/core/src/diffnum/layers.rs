//! Dense, normalisation, activation and reshaping layers with explicit
//! backward passes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::array::Array;
use super::param::{Init, Param};
use crate::error::{shape_err, Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Affine map `y = x W + b` on `[N, in]` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(name: &str, inputs: usize, outputs: usize, init: Init, rng: &mut Rng) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                init.sample(&[inputs, outputs], inputs, rng),
            ),
            bias: Param::new(format!("{name}.bias"), Array::zeros(&[outputs])),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&self, x: &Array<T>) -> Result<Array<T>> {
        let (n, f) = x.dims2("linear")?;
        if f != self.inputs() {
            return Err(shape_err("linear input width", self.inputs(), f));
        }
        let out = self.outputs();
        let mut y = Array::zeros(&[n, out]);
        for row in y.data_mut().chunks_exact_mut(out) {
            row.copy_from_slice(self.bias.value.data());
        }
        T::gemm(
            n,
            f,
            out,
            T::ONE,
            x.data(),
            false,
            self.weight.value.data(),
            false,
            T::ONE,
            y.data_mut(),
        );
        Ok(y)
    }

    pub fn backward(
        &mut self,
        x: &Array<T>,
        dy: &Array<T>,
        need_dx: bool,
    ) -> Result<Option<Array<T>>> {
        let (n, f) = x.dims2("linear_backward")?;
        let out = self.outputs();
        dy.expect_shape(&[n, out], "linear_backward dy")?;
        T::gemm(
            f,
            n,
            out,
            T::ONE,
            x.data(),
            true,
            dy.data(),
            false,
            T::ONE,
            self.weight.grad.data_mut(),
        );
        for row in dy.data().chunks_exact(out) {
            for (g, &v) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *g += v;
            }
        }
        if !need_dx {
            return Ok(None);
        }
        let mut dx = Array::zeros(&[n, f]);
        T::gemm(
            n,
            out,
            f,
            T::ONE,
            dy.data(),
            false,
            self.weight.value.data(),
            true,
            T::ZERO,
            dx.data_mut(),
        );
        Ok(Some(dx))
    }
}

/// Batch normalisation over the trailing (channel) axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Array<T>,
    pub running_var: Array<T>,
    pub momentum: f64,
    pub eps: f64,
    pub(crate) mean_name: String,
    pub(crate) var_name: String,
}

#[derive(Debug, Clone)]
pub struct BnCache<T> {
    xhat: Array<T>,
    inv_std: Vec<T>,
    batch_stats: bool,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(name: &str, channels: usize, momentum: f64, eps: f64) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Array::full(&[channels], T::ONE)),
            beta: Param::new(format!("{name}.beta"), Array::zeros(&[channels])),
            running_mean: Array::zeros(&[channels]),
            running_var: Array::full(&[channels], T::ONE),
            momentum,
            eps,
            mean_name: format!("{name}.running_mean"),
            var_name: format!("{name}.running_var"),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    fn check(&self, x: &Array<T>) -> Result<usize> {
        let c = *x.shape().last().unwrap_or(&0);
        if c != self.channels() {
            return Err(shape_err("batchnorm channels", self.channels(), c));
        }
        Ok(c)
    }

    fn normalise(
        &self,
        x: &Array<T>,
        mean: &[T],
        inv_std: &[T],
        batch_stats: bool,
    ) -> (Array<T>, BnCache<T>) {
        let c = mean.len();
        let mut xhat = Array::zeros(x.shape());
        let mut y = Array::zeros(x.shape());
        for ((xr, hr), yr) in x
            .data()
            .chunks_exact(c)
            .zip(xhat.data_mut().chunks_exact_mut(c))
            .zip(y.data_mut().chunks_exact_mut(c))
        {
            for j in 0..c {
                let h = (xr[j] - mean[j]) * inv_std[j];
                hr[j] = h;
                yr[j] = self.gamma.value.data()[j] * h + self.beta.value.data()[j];
            }
        }
        let cache = BnCache {
            xhat,
            inv_std: inv_std.to_vec(),
            batch_stats,
        };
        (y, cache)
    }

    /// Normalise with batch statistics and update the running estimates.
    pub fn forward_train(&mut self, x: &Array<T>) -> Result<(Array<T>, BnCache<T>)> {
        let c = self.check(x)?;
        if x.shape()[0] < 2 {
            return Err(Error::BatchTooSmall);
        }
        let rows = x.len() / c;
        let mut mean = vec![T::ZERO; c];
        for r in x.data().chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        let inv_rows = T::ONE / T::from_usize(rows);
        mean.iter_mut().for_each(|m| *m *= inv_rows);
        let mut var = vec![T::ZERO; c];
        for r in x.data().chunks_exact(c) {
            for j in 0..c {
                let d = r[j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v *= inv_rows);
        let eps = T::from_f64(self.eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();

        let m = T::from_f64(self.momentum);
        let unbias = T::from_usize(rows) / T::from_usize(rows - 1);
        for j in 0..c {
            let rm = &mut self.running_mean.data_mut()[j];
            *rm = m * *rm + (T::ONE - m) * mean[j];
            let rv = &mut self.running_var.data_mut()[j];
            *rv = m * *rv + (T::ONE - m) * var[j] * unbias;
        }
        Ok(self.normalise(x, &mean, &inv_std, true))
    }

    /// Normalise with running statistics; no state changes.
    pub fn forward_eval(&self, x: &Array<T>) -> Result<(Array<T>, BnCache<T>)> {
        self.check(x)?;
        let eps = T::from_f64(self.eps);
        let inv_std: Vec<T> = self
            .running_var
            .data()
            .iter()
            .map(|&v| T::ONE / (v + eps).sqrt())
            .collect();
        Ok(self.normalise(x, self.running_mean.data(), &inv_std, false))
    }

    pub fn forward(&mut self, x: &Array<T>, mode: Mode) -> Result<(Array<T>, BnCache<T>)> {
        match mode {
            Mode::Train => self.forward_train(x),
            Mode::Eval => self.forward_eval(x),
        }
    }

    pub fn backward(&mut self, cache: &BnCache<T>, dy: &Array<T>) -> Result<Array<T>> {
        dy.expect_shape(cache.xhat.shape(), "batchnorm_backward")?;
        let c = self.channels();
        let rows = dy.len() / c;
        let mut sum_dy = vec![T::ZERO; c];
        let mut sum_dy_xhat = vec![T::ZERO; c];
        for (d, h) in dy
            .data()
            .chunks_exact(c)
            .zip(cache.xhat.data().chunks_exact(c))
        {
            for j in 0..c {
                sum_dy[j] += d[j];
                sum_dy_xhat[j] += d[j] * h[j];
            }
        }
        for j in 0..c {
            self.beta.grad.data_mut()[j] += sum_dy[j];
            self.gamma.grad.data_mut()[j] += sum_dy_xhat[j];
        }
        let mut dx = Array::zeros(dy.shape());
        let gamma = self.gamma.value.data();
        if cache.batch_stats {
            let n = T::from_usize(rows);
            for ((o, d), h) in dx
                .data_mut()
                .chunks_exact_mut(c)
                .zip(dy.data().chunks_exact(c))
                .zip(cache.xhat.data().chunks_exact(c))
            {
                for j in 0..c {
                    let k = gamma[j] * cache.inv_std[j] / n;
                    o[j] = k * (n * d[j] - sum_dy[j] - h[j] * sum_dy_xhat[j]);
                }
            }
        } else {
            for (o, d) in dx
                .data_mut()
                .chunks_exact_mut(c)
                .zip(dy.data().chunks_exact(c))
            {
                for j in 0..c {
                    o[j] = gamma[j] * cache.inv_std[j] * d[j];
                }
            }
        }
        Ok(dx)
    }
}

pub fn leaky_relu<T: Scalar>(x: &Array<T>, slope: T) -> Array<T> {
    x.map(|v| if v >= T::ZERO { v } else { slope * v })
}

/// Gradient of [`leaky_relu`] given the pre-activation input.
pub fn leaky_relu_backward<T: Scalar>(x: &Array<T>, dy: &Array<T>, slope: T) -> Array<T> {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &d)| if v >= T::ZERO { d } else { slope * d })
        .collect();
    Array::from_vec(x.shape(), data).expect("same shape")
}

pub fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    if v >= T::ZERO {
        T::ONE / (T::ONE + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::ONE + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &Array<T>) -> Array<T> {
    x.map(sigmoid_scalar)
}

/// Gradient of [`sigmoid`] given its output.
pub fn sigmoid_backward<T: Scalar>(y: &Array<T>, dy: &Array<T>) -> Array<T> {
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&s, &d)| d * s * (T::ONE - s))
        .collect();
    Array::from_vec(y.shape(), data).expect("same shape")
}

/// Inverted dropout. Returns the output and the per-element scale mask
/// (absent in eval mode, where this is the identity).
pub fn dropout<T: Scalar>(
    x: &Array<T>,
    rate: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Array<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::ZERO
            } else {
                keep
            }
        })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Array::from_vec(x.shape(), data)?, Some(mask)))
}

pub fn dropout_backward<T: Scalar>(mask: Option<&[T]>, dy: &Array<T>) -> Array<T> {
    match mask {
        None => dy.clone(),
        Some(m) => {
            let data = dy.data().iter().zip(m).map(|(&d, &k)| d * k).collect();
            Array::from_vec(dy.shape(), data).expect("same shape")
        }
    }
}

/// Clamp to `[lo, hi]`; the gradient is zero where the bound is active.
pub fn clamp<T: Scalar>(x: &Array<T>, lo: T, hi: T) -> Array<T> {
    x.map(|v| v.max(lo).min(hi))
}

pub fn clamp_backward<T: Scalar>(x: &Array<T>, dy: &Array<T>, lo: T, hi: T) -> Array<T> {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &d)| if v < lo || v > hi { T::ZERO } else { d })
        .collect();
    Array::from_vec(x.shape(), data).expect("same shape")
}

/// 2x2 max pooling with stride 2 (floor). Returns the output and argmax
/// indices into the input.
pub fn max_pool2<T: Scalar>(x: &Array<T>) -> Result<(Array<T>, Vec<usize>)> {
    let (n, h, w, c) = x.dims4("max_pool2")?;
    let (ho, wo) = (h / 2, w / 2);
    if ho == 0 || wo == 0 {
        return Err(shape_err("max_pool2", "H, W >= 2", x.shape()));
    }
    let mut out = Array::zeros(&[n, ho, wo, c]);
    let mut arg = vec![0usize; n * ho * wo * c];
    let xd = x.data();
    let mut o = 0;
    for s in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                for ch in 0..c {
                    let mut best = usize::MAX;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let idx = ((s * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                        if best == usize::MAX || xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    out.data_mut()[o] = xd[best];
                    arg[o] = best;
                    o += 1;
                }
            }
        }
    }
    Ok((out, arg))
}

pub fn max_pool2_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    dy: &Array<T>,
) -> Array<T> {
    let mut dx = Array::zeros(input_shape);
    for (&i, &d) in argmax.iter().zip(dy.data()) {
        dx.data_mut()[i] += d;
    }
    dx
}

/// Mean over the spatial axes: `[N, H, W, C]` → `[N, C]`.
pub fn global_avg_pool<T: Scalar>(x: &Array<T>) -> Result<Array<T>> {
    let (n, h, w, c) = x.dims4("global_avg_pool")?;
    let mut out = Array::zeros(&[n, c]);
    let inv = T::ONE / T::from_usize(h * w);
    for s in 0..n {
        let o = &mut out.data_mut()[s * c..(s + 1) * c];
        for px in x.data()[s * h * w * c..(s + 1) * h * w * c].chunks_exact(c) {
            for (a, &v) in o.iter_mut().zip(px) {
                *a += v;
            }
        }
        o.iter_mut().for_each(|a| *a *= inv);
    }
    Ok(out)
}

pub fn global_avg_pool_backward<T: Scalar>(input_shape: &[usize], dy: &Array<T>) -> Array<T> {
    let (n, h, w, c) = (
        input_shape[0],
        input_shape[1],
        input_shape[2],
        input_shape[3],
    );
    let inv = T::ONE / T::from_usize(h * w);
    let mut dx = Array::zeros(input_shape);
    for s in 0..n {
        let g = &dy.data()[s * c..(s + 1) * c];
        for px in dx.data_mut()[s * h * w * c..(s + 1) * h * w * c].chunks_exact_mut(c) {
            for (a, &v) in px.iter_mut().zip(g) {
                *a = v * inv;
            }
        }
    }
    dx
}

/// Zero-pad or crop the spatial axes of `[N, H, W, C]` to `[N, h, w, C]`,
/// anchored at the top-left corner.
pub fn fit_spatial<T: Scalar>(x: &Array<T>, h: usize, w: usize) -> Result<Array<T>> {
    let (n, hi, wi, c) = x.dims4("fit_spatial")?;
    let mut out = Array::zeros(&[n, h, w, c]);
    let (hc, wc) = (hi.min(h), wi.min(w));
    for s in 0..n {
        for y in 0..hc {
            let src = ((s * hi + y) * wi) * c;
            let dst = ((s * h + y) * w) * c;
            out.data_mut()[dst..dst + wc * c].copy_from_slice(&x.data()[src..src + wc * c]);
        }
    }
    Ok(out)
}

/// Adjoint of [`fit_spatial`].
pub fn fit_spatial_backward<T: Scalar>(input_shape: &[usize], dy: &Array<T>) -> Result<Array<T>> {
    fit_spatial(dy, input_shape[1], input_shape[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn activation_values() {
        let x = Array::<f64>::from_vec(&[2], vec![-1.0, 2.0]).unwrap();
        assert_eq!(leaky_relu(&x, 0.2).data(), &[-0.2, 2.0]);
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        assert!(sigmoid_scalar(-800.0f64) >= 0.0);
        assert!(sigmoid_scalar(800.0f64) <= 1.0);
    }

    #[test]
    fn dropout_eval_is_identity_and_train_scales() {
        let mut rng = stream(3, "d");
        let x = Array::<f64>::full(&[1000], 1.0);
        let (y, m) = dropout(&x, 0.5, Mode::Eval, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(m.is_none());
        let (y, _) = dropout(&x, 0.5, Mode::Train, &mut rng).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count();
        assert!((400..600).contains(&zeros));
        assert!(dropout(&x, 1.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn batchnorm_train_normalises() {
        let mut rng = stream(4, "bn");
        let x: Array<f64> = Init::HeUniform
            .sample(&[8, 3, 3, 4], 1, &mut rng)
            .map(|v| 3.0 * v + 1.0);
        let mut bn = BatchNorm::new("bn", 4, 0.9, 1e-5);
        let (y, _) = bn.forward_train(&x).unwrap();
        for ch in 0..4 {
            let vals: Vec<f64> = y.data().iter().skip(ch).step_by(4).copied().collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-6);
            // eps = 1e-5 against a variance of about 6 keeps this within 1e-6.
            assert!((var - 1.0).abs() < 1e-5, "{var}");
        }
        let one = Array::<f64>::zeros(&[1, 2, 2, 4]);
        assert_eq!(bn.forward_train(&one).unwrap_err(), Error::BatchTooSmall);
    }

    #[test]
    fn batchnorm_eval_is_pure() {
        let mut rng = stream(5, "bn");
        let x: Array<f64> = Init::HeUniform.sample(&[4, 2, 2, 3], 1, &mut rng);
        let mut bn = BatchNorm::new("bn", 3, 0.9, 1e-5);
        bn.forward_train(&x).unwrap();
        let before = bn.clone();
        let a = bn.forward_eval(&x).unwrap().0;
        let b = bn.forward_eval(&x).unwrap().0;
        assert_eq!(a, b);
        assert_eq!(bn, before);
    }

    #[test]
    fn fit_spatial_pads_and_crops() {
        let x = Array::<f64>::from_vec(&[1, 2, 3, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = fit_spatial(&x, 3, 2).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 4.0, 5.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_identity() {
        let mut rng = stream(0, "l");
        let mut lin = Linear::<f64>::new("l", 3, 3, Init::HeUniform, &mut rng);
        lin.weight.value =
            Array::from_vec(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let x = Array::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.25, 0.0]).unwrap();
        assert_eq!(lin.forward(&x).unwrap(), x);
        let wide = Linear::<f32>::new("w", 128, 12288, Init::HeUniform, &mut rng);
        assert_eq!(
            wide.forward(&Array::zeros(&[1, 128])).unwrap().shape(),
            &[1, 12288]
        );
        assert!(wide.forward(&Array::zeros(&[1, 127])).is_err());
    }
}
