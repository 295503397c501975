//! Slice-to-volume reconstruction from motion-corrupted orthogonal stacks.
//!
//! Each observed slice is modeled as the current volume estimate carried
//! through the slice's rigid pose, weighted by a through-plane profile,
//! blurred and decimated in-plane. Reconstruction alternates slice
//! registration, an EM fit of an inlier/outlier residual mixture, and
//! normalized back-projection updates of the estimate.

mod archive;
mod em;
mod operator;
mod recon;
mod register;
mod simulate;

pub use archive::{
    read_stack_archive, slice_file_name, write_stack_archive, StackManifest, STACK_MANIFEST,
};
pub use em::{em_update, mixture_log_likelihood, EmState, MIN_SIGMA};
pub use operator::{simulate_slice, simulate_stack_images, slice_adjoint, ReconGrid, SlicePsf};
pub use recon::{
    reconstruct, slice_residuals, splat_average, sr_update, upsample_stacks, ReconConfig,
    ReconReport, Reconstruction, RoundRecord, Upsampler,
};
pub use register::{
    register_slice, register_slice_to, RegisterConfig, Registration, RegistrationTarget,
};
pub use simulate::{
    simulate_stacks, stack_training_pairs, AcquisitionConfig, SimulatedAcquisition, STACK_AXES,
};
