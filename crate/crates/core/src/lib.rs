//! Adversarial metric learning: learn an SPD Mahalanobis matrix from labeled
//! pairs, augmented with closed-form worst-case pairs, by projected gradient
//! descent on the SPD cone.

pub mod adversarial;
pub mod check;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod loss;
pub mod metric;
pub mod solver;

pub use error::{Error, ErrorKind, Result};
