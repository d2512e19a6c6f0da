use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use super::array::Array;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Array<T>,
    pub grad: Array<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Array<T>) -> Self {
        let grad = Array::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::ZERO);
    }
}

/// Weight initialisation schemes. Draws are made in f64 and cast, so f32 and
/// f64 instances built from one seed hold the same values up to rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`.
    HeUniform,
    /// Uniform in `±sqrt(3 / fan_in)`; used for linear output heads.
    LecunUniform,
}

impl Init {
    pub fn sample<T: Scalar>(self, shape: &[usize], fan_in: usize, rng: &mut Rng) -> Array<T> {
        let fan_in = fan_in.max(1) as f64;
        let bound = match self {
            Init::HeUniform => libm::sqrt(6.0 / fan_in),
            Init::LecunUniform => libm::sqrt(3.0 / fan_in),
        };
        let len: usize = shape.iter().product();
        let data: Vec<T> = (0..len)
            .map(|_| T::from_f64(rng.random_range(-bound..bound)))
            .collect();
        Array::from_vec(shape, data).expect("length matches shape")
    }
}
