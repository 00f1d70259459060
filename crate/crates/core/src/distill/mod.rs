//! Distilling per-task teachers into one multi-branch student: softened
//! targets, the weighted KL objective and its gradient, dataset generation
//! and the student training loop.

pub mod data;
pub mod loss;
pub mod net;
pub mod train;

pub use data::{gen_distill_dataset, read_dataset, teacher_soft_targets, validate_target, write_dataset, DistillGenConfig};
pub use loss::{
    dataset_loss, kl_divergence, output_grad, output_grad_jacobian, per_task_losses, student_loss,
    student_loss_and_grad, CombinedLoss, DistillSample, GradRoute, PROB_FLOOR,
};
pub use net::{student_policy, StudentDims, StudentModel, StudentNet, StudentTrace};
pub use train::{
    smoothed_non_increasing, student_curve_csv, student_grad_step, train_student, StudentConfig, StudentEpoch,
    TrainedStudent, STUDENT_CURVE_HEADER,
};
