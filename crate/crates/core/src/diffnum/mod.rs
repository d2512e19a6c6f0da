//! Differentiable numerics: arrays, layers with hand-written backward
//! passes, and the Adam optimiser.

pub mod adam;
pub mod array;
pub mod blocks;
pub mod conv;
pub mod gradcheck;
pub mod layers;
pub mod module;
pub mod param;

pub use adam::{AdamConfig, AdamState};
pub use array::{concat_cols, split_cols, Array};
pub use blocks::{BlockCache, BlockConfig, ConvBlock};
pub use conv::{
    conv2d, conv2d_backward, conv2d_transpose, conv2d_transpose_backward, Conv2d, ConvGeom,
    ConvTranspose2d,
};
pub use layers::{BatchNorm, BnCache, Linear, Mode};
pub use module::Module;
pub use param::{Init, Param};
