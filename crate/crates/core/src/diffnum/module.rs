use alloc::vec::Vec;

use super::array::Array;
use super::conv::{Conv2d, ConvTranspose2d};
use super::layers::{BatchNorm, Linear};
use super::param::Param;
use crate::scalar::Scalar;

/// Uniform access to a layer's trainable parameters and persistent state.
pub trait Module<T: Scalar> {
    /// Trainable parameters, in a fixed order.
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    /// Every persisted array (parameters plus buffers such as running
    /// statistics) with a stable name.
    fn state(&self) -> Vec<(&str, &Array<T>)>;

    fn state_mut(&mut self) -> Vec<(&str, &mut Array<T>)>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.value.len()).sum()
    }
}

macro_rules! weight_bias_module {
    ($ty:ident, optional) => {
        impl<T: Scalar> Module<T> for $ty<T> {
            fn params_mut(&mut self) -> Vec<&mut Param<T>> {
                let mut v = alloc::vec![&mut self.weight];
                v.extend(self.bias.as_mut());
                v
            }

            fn state(&self) -> Vec<(&str, &Array<T>)> {
                let mut v = alloc::vec![(self.weight.name.as_str(), &self.weight.value)];
                v.extend(self.bias.as_ref().map(|b| (b.name.as_str(), &b.value)));
                v
            }

            fn state_mut(&mut self) -> Vec<(&str, &mut Array<T>)> {
                let mut v = alloc::vec![(self.weight.name.as_str(), &mut self.weight.value)];
                v.extend(self.bias.as_mut().map(|b| (b.name.as_str(), &mut b.value)));
                v
            }
        }
    };
    ($ty:ident) => {
        impl<T: Scalar> Module<T> for $ty<T> {
            fn params_mut(&mut self) -> Vec<&mut Param<T>> {
                alloc::vec![&mut self.weight, &mut self.bias]
            }

            fn state(&self) -> Vec<(&str, &Array<T>)> {
                alloc::vec![
                    (self.weight.name.as_str(), &self.weight.value),
                    (self.bias.name.as_str(), &self.bias.value),
                ]
            }

            fn state_mut(&mut self) -> Vec<(&str, &mut Array<T>)> {
                alloc::vec![
                    (self.weight.name.as_str(), &mut self.weight.value),
                    (self.bias.name.as_str(), &mut self.bias.value),
                ]
            }
        }
    };
}

weight_bias_module!(Linear);
weight_bias_module!(Conv2d, optional);
weight_bias_module!(ConvTranspose2d, optional);
impl<T: Scalar> Module<T> for BatchNorm<T> {
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        alloc::vec![&mut self.gamma, &mut self.beta]
    }

    fn state(&self) -> Vec<(&str, &Array<T>)> {
        alloc::vec![
            (self.gamma.name.as_str(), &self.gamma.value),
            (self.beta.name.as_str(), &self.beta.value),
            (self.mean_name.as_str(), &self.running_mean),
            (self.var_name.as_str(), &self.running_var),
        ]
    }

    fn state_mut(&mut self) -> Vec<(&str, &mut Array<T>)> {
        alloc::vec![
            (self.gamma.name.as_str(), &mut self.gamma.value),
            (self.beta.name.as_str(), &mut self.beta.value),
            (self.mean_name.as_str(), &mut self.running_mean),
            (self.var_name.as_str(), &mut self.running_var),
        ]
    }
}
