//! Framework-free dense network: forward pass, losses, analytic gradients,
//! Adam, the warmup/cosine schedule and a finite-difference checker.

pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
mod kernels;
pub mod model;
pub mod optim;
pub mod schedule;

pub use checkpoint::{load_model, save_model};
pub use gradcheck::{grad_check, grad_check_against, kink_margin};
pub use loss::{argmax, cross_entropy, softmax, weighted_cross_entropy, ProbVector};
pub use model::{backward, loss_and_gradients, loss_and_gradients_into, FeatureVector, ForwardOutput, Gradients, MlpModel};
pub use optim::{adam_step, train_step, AdamConfig, AdamState};
pub use schedule::LrSchedule;
