//! Diagonal-covariance Gaussian mixtures trained by EM.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::index;

use crate::error::{shape_err, Error, Result};
use crate::features::FeatureMatrix;
use crate::rng;

/// Variance floor relative to the global per-dimension variance.
pub const VARIANCE_FLOOR_RATIO: f64 = 1e-3;
/// Components with fewer soft counts than this are re-seeded.
pub const STARVED_COUNT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    dims: usize,
    weights: Vec<f64>,
    /// `C x D`, row-major.
    means: Vec<f64>,
    vars: Vec<f64>,
    /// Cached per component: `ln w - 0.5 * sum ln(2 pi var)`.
    log_norm: Vec<f64>,
    inv_vars: Vec<f64>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, vars: Vec<f64>) -> Result<Self> {
        let c = weights.len();
        if c == 0 || means.len() % c != 0 || means.is_empty() {
            return Err(Error::InvalidArgument(
                "GMM needs C >= 1 components of D >= 1 dims".into(),
            ));
        }
        let dims = means.len() / c;
        if vars.len() != means.len() {
            return Err(shape_err("GmmModel::new", means.len(), vars.len()));
        }
        if weights
            .iter()
            .chain(&means)
            .chain(&vars)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument(
                "GMM parameters must be finite".into(),
            ));
        }
        if weights.iter().any(|w| *w < 0.0) || libm::fabs(weights.iter().sum::<f64>() - 1.0) > 1e-9
        {
            return Err(Error::InvalidArgument(
                "GMM weights must form a simplex".into(),
            ));
        }
        if vars.iter().any(|v| *v <= 0.0) {
            return Err(Error::InvalidArgument("GMM variances must be > 0".into()));
        }
        let mut m = Self {
            dims,
            weights,
            means,
            vars,
            log_norm: Vec::new(),
            inv_vars: Vec::new(),
        };
        m.refresh();
        Ok(m)
    }

    fn refresh(&mut self) {
        let d = self.dims;
        self.inv_vars = self.vars.iter().map(|v| 1.0 / v).collect();
        self.log_norm = (0..self.components())
            .map(|k| {
                let s: f64 = self.vars[k * d..(k + 1) * d]
                    .iter()
                    .map(|v| libm::log(2.0 * PI * v))
                    .sum();
                libm::log(self.weights[k]) - 0.5 * s
            })
            .collect();
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn vars(&self) -> &[f64] {
        &self.vars
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dims..(k + 1) * self.dims]
    }

    /// Per-component joint log densities `ln w_k + ln N(x | mu_k, var_k)`.
    fn component_logs(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dims;
        for (k, o) in out.iter_mut().enumerate() {
            let mu = &self.means[k * d..(k + 1) * d];
            let iv = &self.inv_vars[k * d..(k + 1) * d];
            let mut q = 0.0;
            for j in 0..d {
                let c = x[j] - mu[j];
                q += c * c * iv[j];
            }
            *o = self.log_norm[k] - 0.5 * q;
        }
    }

    pub fn loglik(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dims {
            return Err(shape_err("gmm_loglik", self.dims, x.len()));
        }
        let mut buf = vec![0.0; self.components()];
        self.component_logs(x, &mut buf);
        Ok(log_sum_exp(&buf))
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, libm::fmax);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + libm::log(v.iter().map(|x| libm::exp(x - m)).sum::<f64>())
}

pub fn gmm_loglik(model: &GmmModel, frame: &[f64]) -> Result<f64> {
    model.loglik(frame)
}

/// Mean frame log-likelihood ratio; positive favours `bona`.
pub fn gmm_score_utterance(bona: &GmmModel, spoof: &GmmModel, m: &FeatureMatrix) -> Result<f64> {
    if m.frames() == 0 {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let mut acc = 0.0;
    for row in m.rows() {
        acc += bona.loglik(row)? - spoof.loglik(row)?;
    }
    Ok(acc / m.frames() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub components: usize,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub model: GmmModel,
    /// Total log-likelihood of the initial model and after every iteration.
    pub trace: Vec<f64>,
    pub var_floor: Vec<f64>,
    pub reseeded: usize,
}

struct Stats {
    counts: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    total_ll: f64,
    worst_frame: usize,
}

fn e_step(model: &GmmModel, frames: &[f64]) -> Stats {
    let (c, d) = (model.components(), model.dims());
    let mut st = Stats {
        counts: vec![0.0; c],
        sum: vec![0.0; c * d],
        sum_sq: vec![0.0; c * d],
        total_ll: 0.0,
        worst_frame: 0,
    };
    let mut logs = vec![0.0; c];
    let mut worst = f64::INFINITY;
    for (n, x) in frames.chunks_exact(d).enumerate() {
        model.component_logs(x, &mut logs);
        let ll = log_sum_exp(&logs);
        st.total_ll += ll;
        if ll < worst {
            worst = ll;
            st.worst_frame = n;
        }
        for k in 0..c {
            let r = libm::exp(logs[k] - ll);
            if r == 0.0 {
                continue;
            }
            st.counts[k] += r;
            let (s, s2) = (
                &mut st.sum[k * d..(k + 1) * d],
                &mut st.sum_sq[k * d..(k + 1) * d],
            );
            for j in 0..d {
                s[j] += r * x[j];
                s2[j] += r * x[j] * x[j];
            }
        }
    }
    st
}

fn total_loglik(model: &GmmModel, frames: &[f64]) -> f64 {
    let mut logs = vec![0.0; model.components()];
    frames
        .chunks_exact(model.dims())
        .map(|x| {
            model.component_logs(x, &mut logs);
            log_sum_exp(&logs)
        })
        .sum()
}

/// Fit a `C`-component diagonal GMM to `frames` (`N x dims`, row-major).
///
/// Means start at randomly chosen frames, variances at the global variance,
/// weights uniform.
pub fn em_fit(frames: &[f64], dims: usize, cfg: &EmConfig) -> Result<EmFit> {
    if dims == 0 || frames.len() % dims != 0 {
        return Err(shape_err("em_fit", "N x dims", frames.len()));
    }
    let n = frames.len() / dims;
    let c = cfg.components;
    if c == 0 || n < c {
        return Err(Error::InvalidArgument(format!(
            "need at least {c} frames for {c} components, got {n}"
        )));
    }
    if frames.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite frame values".into()));
    }
    let mut mean = vec![0.0; dims];
    for x in frames.chunks_exact(dims) {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dims];
    for x in frames.chunks_exact(dims) {
        for j in 0..dims {
            var[j] += (x[j] - mean[j]) * (x[j] - mean[j]);
        }
    }
    var.iter_mut()
        .for_each(|v| *v = libm::fmax(*v / n as f64, 1e-12));
    let var_floor: Vec<f64> = var.iter().map(|v| v * VARIANCE_FLOOR_RATIO).collect();

    let mut r = rng::stream(cfg.seed, "gmm-init");
    let picks = index::sample(&mut r, n, c);
    let means: Vec<f64> = picks
        .iter()
        .flat_map(|i| frames[i * dims..(i + 1) * dims].iter().copied())
        .collect();
    let vars: Vec<f64> = (0..c).flat_map(|_| var.iter().copied()).collect();
    let mut model = GmmModel::new(vec![1.0 / c as f64; c], means, vars)?;

    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut reseeded = 0;
    let mut stats = e_step(&model, frames);
    trace.push(stats.total_ll);
    for _ in 0..cfg.iterations {
        let mut next = model.clone();
        let mut starved = Vec::new();
        for k in 0..c {
            let nk = stats.counts[k];
            next.weights[k] = nk / n as f64;
            if nk < STARVED_COUNT {
                starved.push(k);
                continue;
            }
            for j in 0..dims {
                let mu = stats.sum[k * dims + j] / nk;
                let v = stats.sum_sq[k * dims + j] / nk - mu * mu;
                next.means[k * dims + j] = mu;
                next.vars[k * dims + j] = libm::fmax(v, var_floor[j]);
            }
        }
        renormalise(&mut next.weights);
        next.refresh();
        if !starved.is_empty() {
            // Re-seeding can lower the likelihood; keep it only if it does not.
            let mut alt = next.clone();
            let worst = &frames[stats.worst_frame * dims..(stats.worst_frame + 1) * dims];
            for &k in &starved {
                alt.means[k * dims..(k + 1) * dims].copy_from_slice(worst);
                alt.vars[k * dims..(k + 1) * dims].copy_from_slice(&var);
                alt.weights[k] = 1.0 / n as f64;
            }
            renormalise(&mut alt.weights);
            alt.refresh();
            if total_loglik(&alt, frames) >= total_loglik(&next, frames) {
                next = alt;
                reseeded += starved.len();
            }
        }
        model = next;
        stats = e_step(&model, frames);
        trace.push(stats.total_ll);
    }
    Ok(EmFit {
        model,
        trace,
        var_floor,
        reseeded,
    })
}

fn renormalise(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
}

/// Stack the frames of several matrices into one `N x D` buffer.
pub fn pool_frames<'a>(items: impl IntoIterator<Item = &'a FeatureMatrix>) -> (Vec<f64>, usize) {
    let mut out = Vec::new();
    let mut dims = 0;
    for m in items {
        dims = m.dims();
        out.extend_from_slice(m.values());
    }
    (out, dims)
}
