//! Numerical laboratory for translating solitons of the `alpha`-Gauss
//! curvature flow: shrinker profiles, the linearized operator and its Jacobi
//! exponents, exterior solutions by fixed-point iteration, radial profiles and
//! barriers, and a marching solver for the translator equation.
//!
//! Everything numerical is generic over [`scalar::Real`]; the `*64` aliases
//! below fix the scalar to `f64`.

pub mod circlefield;
pub mod constants;
pub mod eigen;
pub mod error;
pub mod linearized;
pub mod march;
pub mod ode;
pub mod radial;
pub mod scalar;
pub mod shrinker;
pub mod spectrum;

pub use circlefield::{CircleField, WeightedInner};
pub use constants::{
    alpha_threshold, beta_exponents, derive_constants, jacobi_count_closed_form, jacobi_count_enumerated,
    jacobi_count_round, sphere_eigenvalue, threshold_degree, DerivedConstants, ExponentPair, FlowParams,
};
pub use error::{LabError, Result};
pub use linearized::{
    boundary_match, jacobi_perturb, linear_solve_h, picard_zero_seed, zero_seed_gamma, ExteriorField, ExteriorGrid,
    PicardConfig,
};
pub use march::{
    convergence_diagnostics, march, paired_report, seed_blow_down, seed_from_exterior, slice_residuals,
    ConvergenceReport, MarchBasis, MarchOptions, MarchOutcome, MarchState,
};
pub use radial::{barrier_check, fit_asymptotics, solve_radial, AsymptoticFit, Barrier, BarrierReport, RadialProfile};
pub use scalar::Real;
pub use shrinker::{shrinker_residual, solve_shrinker_curve, ShrinkerProfile};
pub use spectrum::{eig_l, eig_l_full, translation_norms, SpectralData};

pub type CircleField64 = CircleField<f64>;
pub type DerivedConstants64 = DerivedConstants<f64>;
pub type ShrinkerProfile64 = ShrinkerProfile<f64>;
pub type SpectralData64 = SpectralData<f64>;
pub type ExteriorField64 = ExteriorField<f64>;
pub type RadialProfile64 = RadialProfile<f64>;
pub type MarchState64 = MarchState<f64>;
pub type MarchBasis64 = MarchBasis<f64>;
