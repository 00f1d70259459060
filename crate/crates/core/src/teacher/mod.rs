//! Per-task double-DQN teachers.

pub mod dqn;
pub mod net;
pub mod replay;
pub mod train;

pub use dqn::{
    ddqn_target, ddqn_targets, loss_and_grad_with_targets, loss_with_targets, select_action, teacher_loss_and_grad,
    Experience,
};
pub use net::{QTrace, TeacherDims, TeacherNet};
pub use replay::ReplayBuffer;
pub use train::{collect_states, curve_csv, train_teacher, EpochStats, TeacherConfig, TeacherTrainer, TrainedTeacher};
