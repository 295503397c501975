//! Volumetric MR super-resolution toolkit.
//!
//! The pipeline runs end to end on synthetic phantoms: an acquisition forward
//! model produces low-resolution stacks, a residual 3D CNN with learnable
//! transposed-convolution upsampling restores in-plane resolution, classical
//! interpolators serve as baselines, quality metrics score the results, and
//! a compact slice-to-volume reconstruction loop consumes the upsampled
//! stacks.

pub mod acquisition;
pub mod baselines;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod num;
pub mod srnet;
pub mod svr;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{Axis, Volume};
