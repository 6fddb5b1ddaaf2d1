//! Minimal fully-connected classifier: forward with post-activation capture,
//! MSE backprop, momentum SGD and the one-cycle schedule.

mod model;
mod optim;
mod snapshot;

pub use model::{
    argmax_rows, error_rate, init_model, mse_loss, train_error, Activation, ArchitectureSpec,
    ForwardTrace, Gradients, Linear, MlpModel, DEFAULT_LEAKY_SLOPE,
};
pub use optim::{sgd_step, OneCycleSchedule, SgdState, DEFAULT_MOMENTUM, DEFAULT_WEIGHT_DECAY};
pub use snapshot::{decode_model, encode_model, load_model, save_model};
