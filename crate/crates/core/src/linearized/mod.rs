//! The exterior problem for `w(s, theta)` with `S = A l^sigma h + w(ln l, theta)`:
//! the linear operator `cal_L`, the remainders `E1`, `E2`, the mode-wise
//! inverse and the fixed-point constructions built on it.

pub mod field;
pub mod nonlinear;
pub mod operator;
pub mod picard;
pub mod solve;

pub use field::{log_linear_rate, ExteriorField, ExteriorGrid};
pub use nonlinear::{e1, e1_cross_terms, e2, forcing, translator_residual, translator_residual_field, Forcing};
pub use operator::apply_cal_l;
pub use picard::{
    boundary_match, equation_residual, jacobi_perturb, picard_zero_seed, zero_seed_gamma, BoundaryOutcome,
    JacobiOutcome, PicardConfig, PicardOutcome,
};
pub use solve::{linear_solve_h, project_field, split_index};
