//! Dense `f64` matrices, a reverse-mode tape, and Adam.

mod matrix;
mod optim;
mod tape;

pub use matrix::{argmax, dot, norm, normalized, DenseMatrix};
pub use optim::{adam_step, Adam, AdamConfig, Parameter};
pub use tape::{Gradients, Tape, Var};

/// The ε used wherever a formula needs a small positive guard.
pub const EPS: f64 = 1e-8;
