//! Small dense neural-network toolkit: matrices, layers, a GRU cell,
//! temperature softmax, optimizers and gradient checking. Everything runs in
//! `f64` so finite-difference checks stay meaningful.

pub mod dense;
pub mod gradcheck;
pub mod gru;
pub mod init;
pub mod matrix;
pub mod optim;
pub mod params;
pub mod probe;
pub mod rank;
pub mod softmax;

pub use dense::{sigmoid, Activation, DenseCache, DenseLayer, Mlp};
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport, Stencil};
pub use gru::{gru_step_with_gates, GruCell, GruTrace};
pub use matrix::Matrix;
pub use optim::{adam_step, apply_update, optimizer_by_name, AdamState, Optimizer};
pub use params::Params;
pub use probe::EvalCounters;
pub use rank::{argmax, argsort_desc};
pub use softmax::{entropy, log_softmax_tau, softmax_tau};
