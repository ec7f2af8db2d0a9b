//! Maximum-likelihood training with hand-derived backpropagation through
//! time, gradient checking, plain SGD and the hybrid warm start.

mod backward;
mod gradcheck;
mod hybrid;
mod reference;
mod sgd;
mod train;

pub use backward::{backward, backward_threaded, batch_loss, row_nll, Gradients};
pub use gradcheck::{
    compare_gradients, grad_check, grad_check_dims, random_batch, relative_error, GradCheckReport, TensorCheck,
};
pub use reference::ReferenceModel;
pub use hybrid::{init_hybrid_from_pretrained, Provenance};
pub use sgd::{init_params, sgd_step};
pub use train::{train, EpochLog, TrainConfig};
