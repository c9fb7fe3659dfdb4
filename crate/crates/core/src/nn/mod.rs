//! Feed-forward engine for the single-hidden-layer spreading networks.

mod activation;
mod backprop;
mod loss;
mod model;
mod oss;

pub use activation::{ess, ess_derivative, ess_scalar, softmax, softmax_in_place, Activation};
pub use backprop::{backprop, corpus_loss, corpus_loss_grad, Corpus};
pub use loss::{cross_entropy_loss, mae_loss, softmax_cross_entropy, LossKind, CE_EPSILON};
pub use model::{ArchKind, ForwardTrace, LayerSpec, NetworkModel, TrainingMeta};
pub use oss::{oss_step, search_direction, Direction, LineSearch, OssState, StepOutcome, MIN_CURVATURE};

pub(crate) use model::mean_var;
