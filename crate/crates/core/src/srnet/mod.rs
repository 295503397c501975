//! Residual 3D CNN with learnable axis-wise transposed-convolution
//! upsampling, trained with l2 loss and Adam.
//!
//! Wiring of the nine layers (`x` single-channel, in-plane factor `U`):
//!
//! ```text
//! a1 = relu(conv1(x))
//! a3 = relu(conv3(relu(conv2(a1))) + a1)
//! a5 = relu(conv5(relu(conv4(a3))) + a3)
//! a6 = relu(conv6(a5))
//! a7 = relu(tconv7_x(a6))        x length * U
//! a8 = relu(tconv8_y(a7))        y length * U
//! y  = conv9(a8) + trilinear(x)  single channel
//! ```

mod adam;
mod checkpoint;
mod gradcheck;
mod infer;
mod layers;
mod loss;
mod network;
mod tensor;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
    CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MAGIC,
};
pub use gradcheck::{gradcheck, relative_error, GradcheckConfig, GradcheckReport};
pub use infer::{infer_volume, TilePlan, HALO_Z};
pub use layers::{
    conv3d_backward, conv3d_forward, tconv3d_backward, tconv3d_forward, zero_stuff, zero_unstuff,
    ConvSpec, LayerKind, TConvSpec,
};
pub use loss::l2_loss;
pub use network::{
    backward, backward_from_output, forward, forward_cached, global_residual, ForwardCache,
    NetworkParams, DEFAULT_WIDTH, LAYER_NAMES,
};
pub use tensor::{relu, residual_add, Tensor4};
pub use train::{batch_gradient, train, train_with, EpochRecord, TrainConfig, TrainOutcome};
