use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Array<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Array<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::ZERO; len],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(shape_err("Array::from_vec", len, data.len()));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(shape_err("Array::reshape", len, self.data.len()));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_shape(other.shape(), "Array::add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn dot(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn expect_shape(&self, shape: &[usize], op: &'static str) -> Result<()> {
        if self.shape != shape {
            return Err(shape_err(op, shape, &self.shape));
        }
        Ok(())
    }

    /// Dimensions of a 4-d `[N, H, W, C]` array.
    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, h, w, c] => Ok((n, h, w, c)),
            _ => Err(shape_err(op, "[N, H, W, C]", &self.shape)),
        }
    }

    /// Dimensions of a 2-d `[N, F]` array.
    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [n, f] => Ok((n, f)),
            _ => Err(shape_err(op, "[N, F]", &self.shape)),
        }
    }

    /// Rows `[start, start+count)` along the leading axis.
    pub fn slice_outer(&self, start: usize, count: usize) -> Self {
        let inner: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = count;
        Self {
            shape,
            data: self.data[start * inner..(start + count) * inner].to_vec(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Array<U> {
        Array {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// Concatenate two `[N, a]`, `[N, b]` arrays along the feature axis.
pub fn concat_cols<T: Scalar>(a: &Array<T>, b: &Array<T>) -> Result<Array<T>> {
    let (n, fa) = a.dims2("concat_cols")?;
    let (nb, fb) = b.dims2("concat_cols")?;
    if n != nb {
        return Err(shape_err("concat_cols", n, nb));
    }
    let mut out = Vec::with_capacity(n * (fa + fb));
    for i in 0..n {
        out.extend_from_slice(&a.data()[i * fa..(i + 1) * fa]);
        out.extend_from_slice(&b.data()[i * fb..(i + 1) * fb]);
    }
    Array::from_vec(&[n, fa + fb], out)
}

/// Inverse of [`concat_cols`]: the first `fa` columns and the rest.
pub fn split_cols<T: Scalar>(x: &Array<T>, fa: usize) -> Result<(Array<T>, Array<T>)> {
    let (n, f) = x.dims2("split_cols")?;
    if fa > f {
        return Err(Error::InvalidArgument(alloc::format!(
            "split at {fa} of {f} columns"
        )));
    }
    let fb = f - fa;
    let mut a = Vec::with_capacity(n * fa);
    let mut b = Vec::with_capacity(n * fb);
    for i in 0..n {
        a.extend_from_slice(&x.data()[i * f..i * f + fa]);
        b.extend_from_slice(&x.data()[i * f + fa..(i + 1) * f]);
    }
    Ok((Array::from_vec(&[n, fa], a)?, Array::from_vec(&[n, fb], b)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Array::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        let a = Array::<f32>::from_vec(&[2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(a.len(), 6);
        assert!(a.reshape(&[4, 2]).is_err());
    }

    #[test]
    fn concat_then_split() {
        let a = Array::<f64>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Array::<f64>::from_vec(&[2, 1], vec![9.0, 8.0]).unwrap();
        let c = concat_cols(&a, &b).unwrap();
        assert_eq!(c.data(), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
        let (a2, b2) = split_cols(&c, 2).unwrap();
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }
}
