//! Dense fp64 tensors, a reverse-mode tape, recurrent and dense layers,
//! Adam and the checkpoint container.

mod checkpoint;
mod gradcheck;
mod graph;
mod layers;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use gradcheck::{check_gradients, rel_error, GradCheckReport, REL_FLOOR};
pub use graph::{Graph, Var};
pub use layers::{normalization_layer, Activation, Dense, DenseLayerConfig, Gru, LEAK};
pub use optim::{clip_grad_norm, Adam, OptimizerConfig, StepStats};
pub use params::{Param, ParamId, ParamStore};
pub use tensor::Tensor;
