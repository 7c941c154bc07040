//! Gradient-push, Push-DIGing and the fixed-point analysis of gradient-push
//! over directed graphs.
//!
//! * [`mixing`]: random strongly connected digraphs, column-stochastic
//!   weights, Perron vector and mixing rate `ρ`.
//! * [`linalg`]: stacked vectors, π-weighted norms, spectral norms.
//! * [`costs`]: quadratic local costs and the two random ensembles.
//! * [`pushfix`]: the operator `T_α`, its fixed point, stepsize ceiling,
//!   contraction rate and error bounds.
//! * [`algorithms`]: gradient-push, Push-DIGing and the hybrid schedule.
//! * [`harness`]: experiment configs, scenarios and CSV/JSON output.

pub mod algorithms;
pub mod costs;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mixing;
pub mod pushfix;
pub mod seeding;

pub use error::{Error, Result};
