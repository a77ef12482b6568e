//! Deterministic numerical substrate: seeded random streams, dense matrices,
//! stable softmax / log-sum-exp, and the finite-difference gradient oracle.

mod gradcheck;
mod matrix;
mod rng;

pub use gradcheck::{finite_diff_gradient, relative_error};
pub use matrix::{
    anchored_mean, dot, log_sum_exp, logistic, logit, ordered_sum, softmax_inplace,
    softmax_rows, softplus, softplus_inverse, DenseMatrix,
};
pub use rng::{sample_standard_normal, streams, RngStream};
