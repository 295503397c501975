//! MR acquisition forward model `x = D B S M y + noise`: rigid motion `M`,
//! slice selection `S`, point-spread blur `B`, decimation `D` and Rician
//! noise, plus generation of low/high resolution training pairs.

mod blur;
mod degrade;
mod kernel;
mod motion;
mod noise;
mod sampling;
mod stack;

pub use blur::{blur_separable, blur_separable_with, Boundary};
pub use degrade::{
    degrade, gen_training_pairs, pair_file_names, read_pair_archive, write_pair_archive,
    DegradeConfig, DegradeMode, PairManifest, TrainingPair, PAIR_MANIFEST,
};
pub use kernel::{cws_kernel, linear_kernel, make_cws_kernel, PsfKernel};
pub use motion::{grid_center_mm, resample_rigid, sample_trilinear, PlaneSpec, RigidMotion};
pub use noise::add_rician_noise;
pub use sampling::{decimate, slice_select, stack_select};
pub use stack::{SliceStack, StackGeometry};
