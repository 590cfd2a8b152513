//! Fixed-point constructions of exterior solutions of `cal_L w = E(w)`.
//!
//! All three constructions run the same loop: given a base solution `w`, a
//! Jacobi seed `u0` (`cal_L u0 = 0`) and a reference forcing `E_ref`,
//! iterate `V_(k+1) = H(E(w + u0 + V_k) - E_ref)` from `V_0 = 0`. The
//! increments `V_(k+1) - V_k` are the terms of the telescoping series.

use serde::{Deserialize, Serialize};

use crate::circlefield::CircleField;
use crate::error::{LabError, Result};
use crate::linearized::field::{log_linear_rate, ExteriorField, ExteriorGrid};
use crate::linearized::nonlinear::{forcing, Forcing};
use crate::linearized::operator::apply_cal_l;
use crate::linearized::solve::{linear_solve_h, split_index};
use crate::scalar::Real;
use crate::spectrum::SpectralData;

pub const STOP_TOL: f64 = 1e-10;
pub const STALL_RATIO: f64 = 0.9;
pub const STALL_STEPS: usize = 3;
pub const MAX_ITER: usize = 80;
/// Once the increments have fallen this far below the first one, a stall is
/// read as the rounding floor of `E(w + V) - E_ref` rather than divergence.
pub const FLOOR_DROP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig<T> {
    pub tol: T,
    pub max_iter: usize,
    pub forcing: Forcing,
}

impl<T: Real> Default for PicardConfig<T> {
    fn default() -> Self {
        Self { tol: T::lit(STOP_TOL), max_iter: MAX_ITER, forcing: Forcing::Full }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PicardOutcome<T> {
    /// The solution `w + u0 + V`.
    pub w: ExteriorField<T>,
    pub gamma: T,
    /// Weighted sup norms of the successive increments.
    pub increments: Vec<T>,
    /// `|u_(k+1)| / |u_k|`.
    pub ratios: Vec<T>,
    /// Weighted sup norm of `cal_L w - E(w)`.
    pub residual: T,
    /// The loop stopped on the rounding floor above `tol`.
    pub floor_limited: bool,
}

/// `cal_L w - E(w)`; for the full forcing this is `cal_L w + E1 + E2`.
pub fn equation_residual<T: Real>(
    w: &ExteriorField<T>,
    h: &CircleField<T>,
    spec: &SpectralData<T>,
    mode: Forcing,
) -> Result<ExteriorField<T>> {
    apply_cal_l(w, spec)?.sub(&forcing(w, h, &spec.consts, mode)?)
}

fn iterate<T: Real>(
    base: &ExteriorField<T>,
    u0: &ExteriorField<T>,
    e_ref: &ExteriorField<T>,
    gamma: T,
    h: &CircleField<T>,
    spec: &SpectralData<T>,
    cfg: &PicardConfig<T>,
) -> Result<PicardOutcome<T>> {
    base.check_grid(u0)?;
    base.check_grid(e_ref)?;
    let start = base.add(u0)?;
    let mut v = ExteriorField::zeros(base.grid, gamma)?;
    let mut increments: Vec<T> = Vec::new();
    let mut ratios: Vec<T> = Vec::new();
    let mut stalled = 0;
    let mut floor_limited = false;
    loop {
        let current = start.add(&v)?;
        let rhs = forcing(&current, h, &spec.consts, cfg.forcing)?.sub(e_ref)?;
        let next = linear_solve_h(&rhs, gamma, spec)?;
        let step = next.sub(&v)?;
        let size = step.weighted_sup(gamma);
        let fail = |r: &[T]| LabError::NoContraction { ratios: r.iter().map(|x| x.as_f64()).collect() };
        if !size.is_finite() {
            return Err(fail(&ratios));
        }
        let ratio = increments.last().map(|&prev| if prev > T::zero() { size / prev } else { T::zero() });
        let first = increments.first().copied().unwrap_or(size);
        if let Some(r) = ratio {
            ratios.push(r);
        }
        increments.push(size);
        if size < cfg.tol {
            v = next;
            break;
        }
        if let Some(r) = ratio {
            if r > T::lit(STALL_RATIO) {
                if size <= T::lit(FLOOR_DROP) * first {
                    // keep the iterate from before the stall
                    floor_limited = true;
                    break;
                }
                stalled += 1;
                if stalled >= STALL_STEPS {
                    return Err(fail(&ratios));
                }
            } else {
                stalled = 0;
            }
        }
        v = next;
        if increments.len() >= cfg.max_iter {
            return Err(fail(&ratios));
        }
    }
    let w = start.add(&v)?.with_gamma(gamma);
    let residual = equation_residual(&w, h, spec, cfg.forcing)?.weighted_sup(gamma);
    Ok(PicardOutcome { w, gamma, increments, ratios, residual, floor_limited })
}

/// Midpoint of the widest gap between consecutive `beta+` inside
/// `(3 sigma - 2, sigma)`: the decay window of the forcing `E(0)`.
pub fn zero_seed_gamma<T: Real>(spec: &SpectralData<T>) -> T {
    let c = &spec.consts;
    let lo = T::lit(3.0) * c.sigma - T::lit(2.0);
    let hi = c.sigma;
    let mut pts: Vec<T> = spec.betas.iter().map(|b| b.beta_plus).filter(|&b| b > lo && b < hi).collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
    let mut best = (T::zero(), lo);
    for w in pts.windows(2) {
        let gap = w[1] - w[0];
        if gap > best.0 {
            best = (gap, (w[0] + w[1]) * T::lit(0.5));
        }
    }
    best.1
}

/// Exterior solution seeded by `w = 0`, which is not itself a solution
/// because `E2(0) != 0`.
pub fn picard_zero_seed<T: Real>(
    h: &CircleField<T>,
    spec: &SpectralData<T>,
    grid: ExteriorGrid<T>,
    gamma: T,
    cfg: &PicardConfig<T>,
) -> Result<PicardOutcome<T>> {
    let c = &spec.consts;
    let lo = T::lit(3.0) * c.sigma - T::lit(2.0);
    if !(gamma > lo && gamma < c.sigma) {
        return Err(LabError::Precondition(format!("gamma = {gamma} must lie in ({lo}, {})", c.sigma)));
    }
    let zero = ExteriorField::zeros(grid, gamma)?;
    iterate(&zero, &zero, &zero, gamma, h, spec, cfg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JacobiOutcome<T> {
    pub picard: PicardOutcome<T>,
    pub mode: usize,
    pub amplitude: T,
    pub rate: T,
    /// `gamma_2 - gamma`.
    pub epsilon: T,
    /// Log-linear fit of the slice sup norms of `w_new - w_base`.
    pub fitted_rate: Option<T>,
}

/// Adds the Jacobi field `b e^(beta+_j s) phi_j` to the exterior solution
/// `base` (decaying at rate `gamma_1`) and corrects it back to a solution.
pub fn jacobi_perturb<T: Real>(
    base: &ExteriorField<T>,
    gamma_1: T,
    j: usize,
    b: T,
    h: &CircleField<T>,
    spec: &SpectralData<T>,
    cfg: &PicardConfig<T>,
) -> Result<JacobiOutcome<T>> {
    let c = &spec.consts;
    let beta = *spec.betas.get(j).ok_or_else(|| LabError::InvalidParams(format!("mode {j} not available")))?;
    let gamma_2 = beta.beta_plus;
    if !(gamma_2 < c.sigma) {
        return Err(LabError::Precondition(format!(
            "beta+_{j} = {gamma_2} is not below sigma = {}",
            c.sigma
        )));
    }
    let tie = T::lit(1e-12);
    let m = spec.betas.iter().filter(|x| x.beta_plus < gamma_2 - tie).count();
    let below = if m == 0 {
        spec.betas[0].beta_minus
    } else {
        spec.betas.iter().map(|x| x.beta_plus).filter(|&x| x < gamma_2 - tie).fold(T::neg_infinity(), T::max)
    };
    let g1 = gamma_1.max(gamma_2);
    let two = T::lit(2.0);
    let epsilon = T::lit(0.5) * (c.sigma - g1).min(two * (T::one() - c.sigma)).min(gamma_2 - below);
    let gamma = gamma_2 - epsilon;
    split_index(gamma, spec)?;
    let u0 = ExteriorField::separated(base.grid, gamma, |s| b * (gamma_2 * s).exp(), &spec.phis[j])?;
    let e_ref = forcing(base, h, c, cfg.forcing)?;
    let picard = iterate(base, &u0, &e_ref, gamma, h, spec, cfg)?;
    let diff = picard.w.sub(base)?;
    let fitted_rate = log_linear_rate(&base.grid.s_values(), &diff.slice_sups());
    Ok(JacobiOutcome { picard, mode: j, amplitude: b, rate: gamma_2, epsilon, fitted_rate })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryOutcome<T> {
    pub picard: PicardOutcome<T>,
    pub gamma_2: T,
    pub sign: i8,
    /// `sup |(w+u)/h + sign e^(gamma_2 R)|` at `s = R`.
    pub value_error: T,
    /// `sup |d_s((w+u)/h) + sign beta-_0 e^(gamma_2 R)| / e^(gamma_2 R)` at `s = R`.
    pub slope_defect: T,
}

/// Perturbs the exterior solution `w` so that its slice at `s = R` is the
/// scaled shrinker `-sign e^(gamma_2 R) h`.
pub fn boundary_match<T: Real>(
    w: &ExteriorField<T>,
    gamma_1: T,
    gamma_2: T,
    sign: i8,
    h: &CircleField<T>,
    spec: &SpectralData<T>,
    cfg: &PicardConfig<T>,
) -> Result<BoundaryOutcome<T>> {
    let c = &spec.consts;
    if !(gamma_1 < gamma_2 && gamma_2 < c.sigma) {
        return Err(LabError::Precondition(format!("need gamma_1 < gamma_2 < sigma, got {gamma_1}, {gamma_2}")));
    }
    if sign != 1 && sign != -1 {
        return Err(LabError::InvalidParams("sign must be +1 or -1".into()));
    }
    let sg = T::from_i8(sign).expect("small integer");
    let gamma_0 = -c.c1 * T::lit(0.5);
    let grid = w.grid;
    let r = grid.r;
    let coeffs = spec.project(&w.slices[0]);
    let lift = (gamma_2 * r).exp();
    let beta0_minus = spec.betas[0].beta_minus;
    let slices = (0..grid.len)
        .map(|i| {
            let t = grid.s(i) - r;
            let mut out = h.scale(-sg * lift * (beta0_minus * t).exp());
            for (cj, (phi, b)) in coeffs.iter().zip(spec.phis.iter().zip(&spec.betas)) {
                out.axpy(-*cj * (b.beta_minus * t).exp(), phi);
            }
            out
        })
        .collect();
    let u0 = ExteriorField { grid, slices, gamma: gamma_0 };
    let e_ref = forcing(w, h, c, cfg.forcing)?;
    let picard = iterate(w, &u0, &e_ref, gamma_0, h, spec, cfg)?;
    let total = &picard.w;
    let at_r = total.slices[0].zip_with(h, |a, b| a / b);
    let value_error = at_r.map(|x| (x + sg * lift).abs()).max();
    let slope = total.d_s().slices[0].zip_with(h, |a, b| a / b);
    let slope_defect = slope.map(|x| (x + sg * beta0_minus * lift).abs()).max() / lift;
    Ok(BoundaryOutcome { picard, gamma_2, sign, value_error, slope_defect })
}
