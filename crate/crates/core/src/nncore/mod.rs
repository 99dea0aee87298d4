//! Dense tensors, a recorded layer tape with manual backward, momentum SGD
//! and the checkpoint container.

mod checkpoint;
pub(crate) mod kernels;
mod layers;
mod optim;
mod param;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointHeader, ParamEntry, CHECKPOINT_MAGIC};
pub use layers::{conv2d_forward, fc_forward, highway_add, Conv2d, LayerSpec, Linear};
pub use optim::{sgd_step, StepSchedule};
pub use param::{Param, ParamId, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
