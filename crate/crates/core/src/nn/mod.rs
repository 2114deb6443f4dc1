//! Minimal dense numeric core: matrices, compute graphs with reverse-mode
//! gradients, the classification loss, AdamW, and the cosine schedule.

mod gradcheck;
mod graph;
mod loss;
mod mat;
mod optim;
mod params;

pub use gradcheck::{grad_check, GradCheckReport, LossKind};
pub use graph::{backward, forward, row_softmax, Dim, Graph, NodeId, ParamInit, SymShape, TapeValues};
pub use loss::{cross_entropy, cross_entropy_full, cross_entropy_grad, CeOutcome, SCORE_CLAMP};
pub use mat::{matmul_t, Mat, Matrix, Real};
pub use optim::{adamw_step, cosine_lr, AdamWConfig, AdamWState, LrSchedule};
pub use params::{init_params, total_param_count, values_as, write_grads, ParamTensor};
