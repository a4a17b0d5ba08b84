//! Dense 4-axis tensors, the layers of the segmentation network with explicit
//! backward passes, the soft Dice loss, momentum SGD and the training loop.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod layers;
pub mod loss;
pub mod model;
pub mod norm;
pub mod optim;
mod tensor;
pub mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta};
pub use loss::{dice_loss, dice_loss_batch, dice_loss_grad, DICE_EPSILON};
pub use model::{stack_frames, Model, ModelConfig};
pub use optim::{Sgd, SgdConfig};
pub use tensor::Tensor4;
pub use train::{train, Sample, TrainOptions};

/// Whether layers use batch statistics and dropout, or running statistics only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}
