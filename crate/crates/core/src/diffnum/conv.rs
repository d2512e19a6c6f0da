//! Strided 2-d convolution with "same" padding and its adjoint, the
//! transposed convolution. Activations are `[N, H, W, C]`; kernels are
//! `[kh, kw, C_in, C_out]` for convolution and `[kh, kw, C_out, C_in]` for
//! the transposed form, so one kernel array serves both directions.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::array::Array;
use super::param::{Init, Param};
use crate::error::{shape_err, Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Geometry of a same-padded strided convolution from `h x w` to `ho x wo`.
///
/// Odd padding puts the extra row/column at the bottom/right.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ho: usize,
    pub wo: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    pub fn same(
        h: usize,
        w: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
    ) -> Result<Self> {
        let (kh, kw) = kernel;
        let (sh, sw) = stride;
        if kh == 0 || kw == 0 || sh == 0 || sw == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!(
                "conv geometry needs positive sizes: input {h}x{w}, kernel {kh}x{kw}, stride {sh}x{sw}"
            )));
        }
        let ho = h.div_ceil(sh);
        let wo = w.div_ceil(sw);
        let pad_h = ((ho - 1) * sh + kh).saturating_sub(h);
        let pad_w = ((wo - 1) * sw + kw).saturating_sub(w);
        Ok(Self {
            h,
            w,
            kh,
            kw,
            sh,
            sw,
            ho,
            wo,
            pad_top: pad_h / 2,
            pad_left: pad_w / 2,
        })
    }

    fn positions(&self) -> usize {
        self.ho * self.wo
    }

    /// Valid kernel column range for output column `ox`.
    fn kx_range(&self, ox: usize) -> (usize, usize) {
        let origin = ox * self.sw;
        let lo = self.pad_left.saturating_sub(origin);
        let hi = (self.w + self.pad_left).saturating_sub(origin).min(self.kw);
        (lo, hi.max(lo))
    }
}

/// Unfold one `[H, W, C]` sample into `[ho*wo, kh*kw*C]`.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, c: usize, cols: &mut [T]) {
    let k = g.kh * g.kw * c;
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let row = &mut cols[(oy * g.wo + ox) * k..(oy * g.wo + ox + 1) * k];
            let (kx_lo, kx_hi) = g.kx_range(ox);
            for ky in 0..g.kh {
                let seg = &mut row[ky * g.kw * c..(ky + 1) * g.kw * c];
                let iy = (oy * g.sh + ky) as isize - g.pad_top as isize;
                if iy < 0 || iy >= g.h as isize || kx_lo >= kx_hi {
                    seg.fill(T::ZERO);
                    continue;
                }
                seg[..kx_lo * c].fill(T::ZERO);
                seg[kx_hi * c..].fill(T::ZERO);
                let ix_lo = ox * g.sw + kx_lo - g.pad_left;
                let start = (iy as usize * g.w + ix_lo) * c;
                let run = (kx_hi - kx_lo) * c;
                seg[kx_lo * c..kx_hi * c].copy_from_slice(&x[start..start + run]);
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into `[H, W, C]`.
fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, c: usize, x: &mut [T]) {
    let k = g.kh * g.kw * c;
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let row = &cols[(oy * g.wo + ox) * k..(oy * g.wo + ox + 1) * k];
            let (kx_lo, kx_hi) = g.kx_range(ox);
            if kx_lo >= kx_hi {
                continue;
            }
            for ky in 0..g.kh {
                let iy = (oy * g.sh + ky) as isize - g.pad_top as isize;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                let seg = &row[ky * g.kw * c + kx_lo * c..ky * g.kw * c + kx_hi * c];
                let ix_lo = ox * g.sw + kx_lo - g.pad_left;
                let start = (iy as usize * g.w + ix_lo) * c;
                for (dst, &src) in x[start..start + seg.len()].iter_mut().zip(seg) {
                    *dst += src;
                }
            }
        }
    }
}

fn check_kernel<T: Scalar>(w: &Array<T>, op: &'static str) -> Result<(usize, usize, usize, usize)> {
    match w.shape()[..] {
        [kh, kw, a, b] => Ok((kh, kw, a, b)),
        _ => Err(shape_err(op, "[kh, kw, C_a, C_b]", w.shape())),
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: Option<&Array<T>>, c: usize) {
    if let Some(b) = bias {
        for px in out.chunks_exact_mut(c) {
            for (v, &bv) in px.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
    }
}

fn bias_grad<T: Scalar>(dy: &[T], c: usize) -> Vec<T> {
    let mut db = vec![T::ZERO; c];
    for px in dy.chunks_exact(c) {
        for (d, &v) in db.iter_mut().zip(px) {
            *d += v;
        }
    }
    db
}

/// Same-padded strided convolution. `x: [N, H, W, C_in]`,
/// `weight: [kh, kw, C_in, C_out]` → `[N, ceil(H/sh), ceil(W/sw), C_out]`.
pub fn conv2d<T: Scalar>(
    x: &Array<T>,
    weight: &Array<T>,
    bias: Option<&Array<T>>,
    stride: (usize, usize),
) -> Result<Array<T>> {
    let (n, h, w, cin) = x.dims4("conv2d")?;
    let (kh, kw, wcin, cout) = check_kernel(weight, "conv2d")?;
    if wcin != cin {
        return Err(shape_err("conv2d input channels", wcin, cin));
    }
    let g = ConvGeom::same(h, w, (kh, kw), stride)?;
    let k = kh * kw * cin;
    let p = g.positions();
    let mut cols = vec![T::ZERO; p * k];
    let mut out = Array::zeros(&[n, g.ho, g.wo, cout]);
    let in_len = h * w * cin;
    for s in 0..n {
        im2col(&x.data()[s * in_len..(s + 1) * in_len], &g, cin, &mut cols);
        let o = &mut out.data_mut()[s * p * cout..(s + 1) * p * cout];
        T::gemm(
            p,
            k,
            cout,
            T::ONE,
            &cols,
            false,
            weight.data(),
            false,
            T::ZERO,
            o,
        );
        add_bias(o, bias, cout);
    }
    Ok(out)
}

/// Gradients of [`conv2d`]: `(dx, dweight, dbias)`. `dx` is skipped when
/// `need_dx` is false.
pub fn conv2d_backward<T: Scalar>(
    x: &Array<T>,
    weight: &Array<T>,
    dy: &Array<T>,
    stride: (usize, usize),
    need_dx: bool,
) -> Result<(Option<Array<T>>, Array<T>, Array<T>)> {
    let (n, h, w, cin) = x.dims4("conv2d_backward")?;
    let (kh, kw, _, cout) = check_kernel(weight, "conv2d_backward")?;
    let g = ConvGeom::same(h, w, (kh, kw), stride)?;
    dy.expect_shape(&[n, g.ho, g.wo, cout], "conv2d_backward dy")?;
    let k = kh * kw * cin;
    let p = g.positions();
    let mut cols = vec![T::ZERO; p * k];
    let mut dcols = vec![T::ZERO; if need_dx { p * k } else { 0 }];
    let mut dw = Array::zeros(weight.shape());
    let mut dx = need_dx.then(|| Array::zeros(x.shape()));
    let in_len = h * w * cin;
    for s in 0..n {
        im2col(&x.data()[s * in_len..(s + 1) * in_len], &g, cin, &mut cols);
        let dys = &dy.data()[s * p * cout..(s + 1) * p * cout];
        T::gemm(
            k,
            p,
            cout,
            T::ONE,
            &cols,
            true,
            dys,
            false,
            T::ONE,
            dw.data_mut(),
        );
        if let Some(dx) = dx.as_mut() {
            T::gemm(
                p,
                cout,
                k,
                T::ONE,
                dys,
                false,
                weight.data(),
                true,
                T::ZERO,
                &mut dcols,
            );
            col2im(
                &dcols,
                &g,
                cin,
                &mut dx.data_mut()[s * in_len..(s + 1) * in_len],
            );
        }
    }
    let db = Array::from_vec(&[cout], bias_grad(dy.data(), cout))?;
    Ok((dx, dw, db))
}

/// Transposed convolution, the adjoint of [`conv2d`] with the same kernel and
/// stride. `z: [N, Hi, Wi, C_z]`, `weight: [kh, kw, C_out, C_z]` →
/// `[N, Hi*sh, Wi*sw, C_out]`.
pub fn conv2d_transpose<T: Scalar>(
    z: &Array<T>,
    weight: &Array<T>,
    bias: Option<&Array<T>>,
    stride: (usize, usize),
) -> Result<Array<T>> {
    let (n, hi, wi, cz) = z.dims4("conv2d_transpose")?;
    let (kh, kw, cout, wcz) = check_kernel(weight, "conv2d_transpose")?;
    if wcz != cz {
        return Err(shape_err("conv2d_transpose input channels", wcz, cz));
    }
    let (h, w) = (hi * stride.0, wi * stride.1);
    let g = ConvGeom::same(h, w, (kh, kw), stride)?;
    debug_assert_eq!((g.ho, g.wo), (hi, wi));
    let k = kh * kw * cout;
    let p = g.positions();
    let mut cols = vec![T::ZERO; p * k];
    let out_len = h * w * cout;
    let mut out = Array::zeros(&[n, h, w, cout]);
    for s in 0..n {
        let zs = &z.data()[s * p * cz..(s + 1) * p * cz];
        T::gemm(
            p,
            cz,
            k,
            T::ONE,
            zs,
            false,
            weight.data(),
            true,
            T::ZERO,
            &mut cols,
        );
        let o = &mut out.data_mut()[s * out_len..(s + 1) * out_len];
        col2im(&cols, &g, cout, o);
        add_bias(o, bias, cout);
    }
    Ok(out)
}

/// Gradients of [`conv2d_transpose`]: `(dz, dweight, dbias)`.
pub fn conv2d_transpose_backward<T: Scalar>(
    z: &Array<T>,
    weight: &Array<T>,
    dy: &Array<T>,
    stride: (usize, usize),
    need_dz: bool,
) -> Result<(Option<Array<T>>, Array<T>, Array<T>)> {
    let (n, hi, wi, cz) = z.dims4("conv2d_transpose_backward")?;
    let (kh, kw, cout, _) = check_kernel(weight, "conv2d_transpose_backward")?;
    let (h, w) = (hi * stride.0, wi * stride.1);
    dy.expect_shape(&[n, h, w, cout], "conv2d_transpose_backward dy")?;
    let g = ConvGeom::same(h, w, (kh, kw), stride)?;
    let k = kh * kw * cout;
    let p = g.positions();
    let mut dcols = vec![T::ZERO; p * k];
    let mut dw = Array::zeros(weight.shape());
    let mut dz = need_dz.then(|| Array::zeros(z.shape()));
    let out_len = h * w * cout;
    for s in 0..n {
        im2col(
            &dy.data()[s * out_len..(s + 1) * out_len],
            &g,
            cout,
            &mut dcols,
        );
        let zs = &z.data()[s * p * cz..(s + 1) * p * cz];
        T::gemm(
            k,
            p,
            cz,
            T::ONE,
            &dcols,
            true,
            zs,
            false,
            T::ONE,
            dw.data_mut(),
        );
        if let Some(dz) = dz.as_mut() {
            let d = &mut dz.data_mut()[s * p * cz..(s + 1) * p * cz];
            T::gemm(
                p,
                k,
                cz,
                T::ONE,
                &dcols,
                false,
                weight.data(),
                false,
                T::ZERO,
                d,
            );
        }
    }
    let db = Array::from_vec(&[cout], bias_grad(dy.data(), cout))?;
    Ok((dz, dw, db))
}

/// Convolution layer with learnable kernel and optional bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub stride: (usize, usize),
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        name: &str,
        kernel: (usize, usize),
        stride: (usize, usize),
        in_ch: usize,
        out_ch: usize,
        init: Init,
        rng: &mut Rng,
    ) -> Self {
        let shape = [kernel.0, kernel.1, in_ch, out_ch];
        let weight = init.sample(&shape, kernel.0 * kernel.1 * in_ch, rng);
        Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Some(Param::new(format!("{name}.bias"), Array::zeros(&[out_ch]))),
            stride,
        }
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.value.shape()[0], self.weight.value.shape()[1])
    }

    /// Drop the bias, e.g. when a batch-norm shift follows.
    pub fn without_bias(mut self) -> Self {
        self.bias = None;
        self
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[3]
    }

    pub fn forward(&self, x: &Array<T>) -> Result<Array<T>> {
        conv2d(
            x,
            &self.weight.value,
            self.bias.as_ref().map(|b| &b.value),
            self.stride,
        )
    }

    /// Accumulates parameter gradients and returns the input gradient if asked.
    pub fn backward(
        &mut self,
        x: &Array<T>,
        dy: &Array<T>,
        need_dx: bool,
    ) -> Result<Option<Array<T>>> {
        let (dx, dw, db) = conv2d_backward(x, &self.weight.value, dy, self.stride, need_dx)?;
        self.weight.grad.add_assign(&dw)?;
        if let Some(b) = &mut self.bias {
            b.grad.add_assign(&db)?;
        }
        Ok(dx)
    }
}

/// Transposed-convolution layer; doubles (for stride 2) the spatial size.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub stride: (usize, usize),
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new(
        name: &str,
        kernel: (usize, usize),
        stride: (usize, usize),
        in_ch: usize,
        out_ch: usize,
        init: Init,
        rng: &mut Rng,
    ) -> Self {
        let shape = [kernel.0, kernel.1, out_ch, in_ch];
        let fan_in = (kernel.0 * kernel.1 * in_ch / (stride.0 * stride.1)).max(1);
        let weight = init.sample(&shape, fan_in, rng);
        Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Some(Param::new(format!("{name}.bias"), Array::zeros(&[out_ch]))),
            stride,
        }
    }

    /// Drop the bias, e.g. when a batch-norm shift follows.
    pub fn without_bias(mut self) -> Self {
        self.bias = None;
        self
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[2]
    }

    pub fn forward(&self, z: &Array<T>) -> Result<Array<T>> {
        conv2d_transpose(
            z,
            &self.weight.value,
            self.bias.as_ref().map(|b| &b.value),
            self.stride,
        )
    }

    pub fn backward(
        &mut self,
        z: &Array<T>,
        dy: &Array<T>,
        need_dz: bool,
    ) -> Result<Option<Array<T>>> {
        let (dz, dw, db) =
            conv2d_transpose_backward(z, &self.weight.value, dy, self.stride, need_dz)?;
        self.weight.grad.add_assign(&dw)?;
        if let Some(b) = &mut self.bias {
            b.grad.add_assign(&db)?;
        }
        Ok(dz)
    }
}
