//! Support functions of shrinking solitons: the round solution in any
//! dimension and k-fold symmetric curves in the plane, found by shooting on
//! `h'' + h = h^(1 - 1/alpha)`.

use serde::{Deserialize, Serialize};

use crate::circlefield::{CircleField, DEFAULT_N};
use crate::error::{LabError, Result};
use crate::ode::rk4_step;
use crate::scalar::Real;

/// RK4 steps across the shooting interval `[0, pi/k]`.
pub const SHOOT_STEPS: usize = 2048;
pub const BISECT_TOL: f64 = 1e-13;
pub const RESIDUAL_TOL: f64 = 1e-8;
const MAX_N: usize = 1024;
const SCAN_POINTS: usize = 400;
const DELTA_MIN: f64 = 1e-6;
const DELTA_MAX: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkerProfile<T> {
    pub n: usize,
    pub alpha: T,
    pub h: CircleField<T>,
    /// Fold count; 0 for the round solution.
    pub symmetry_k: usize,
    /// Sup norm of the shrinker equation residual.
    pub residual: T,
    /// Every `h(0)` at which the shooting map vanished, the selected one first.
    pub shooting_candidates: Vec<T>,
}

impl<T: Real> ShrinkerProfile<T> {
    /// `h = 1` on an `samples`-point grid; valid for every `n`.
    pub fn round(n: usize, alpha: T, samples: usize) -> Result<Self> {
        let h = CircleField::constant(samples, T::one())?;
        Ok(Self { n, alpha, h, symmetry_k: 0, residual: T::zero(), shooting_candidates: vec![] })
    }

    /// `det r[h]`: `h'' + h` in the plane, 1 for the round solution.
    pub fn det_r(&self) -> CircleField<T> {
        if self.n == 2 {
            self.h.det_r()
        } else {
            self.h.map(|c| c.powi(self.n as i32 - 1))
        }
    }

    pub fn gauss_curvature(&self) -> Result<CircleField<T>> {
        if self.n == 2 {
            gauss_curvature(&self.h)
        } else {
            self.det_r().powf(-T::one(), "det r[h]")
        }
    }

    /// Re-evaluates the profile on a different grid size.
    pub fn resampled(&self, samples: usize) -> Result<Self> {
        let mut out = self.clone();
        out.h = self.h.resample(samples)?;
        Ok(out)
    }
}

/// `h'' + h - h^(1 - 1/alpha)` for a plane curve.
pub fn shrinker_residual<T: Real>(h: &CircleField<T>, alpha: T) -> Result<CircleField<T>> {
    let rhs = h.powf(T::one() - alpha.recip(), "support function")?;
    Ok(h.r_operator().sub(&rhs))
}

/// Curvature `1/(h'' + h)` of the convex curve with support function `h`.
pub fn gauss_curvature<T: Real>(h: &CircleField<T>) -> Result<CircleField<T>> {
    h.r_operator().powf(-T::one(), "h'' + h")
}

struct Shot<T> {
    end_slope: T,
    interior_turns: usize,
}

/// Integrates from `h(0) = p`, `h'(0) = 0` over `[0, pi/k]`.
fn shoot<T: Real>(alpha: T, k: usize, p: T, mut record: Option<&mut Vec<T>>) -> Result<Shot<T>> {
    let expo = T::one() - alpha.recip();
    let mut rhs = |_t: T, y: &[T], d: &mut [T]| {
        d[0] = y[1];
        d[1] = y[0].powf(expo) - y[0];
    };
    let step = T::PI() / T::of(k * SHOOT_STEPS);
    let mut y = vec![p, T::zero()];
    if let Some(r) = record.as_deref_mut() {
        r.push(p);
    }
    let mut slopes = Vec::with_capacity(SHOOT_STEPS);
    for i in 0..SHOOT_STEPS {
        y = rk4_step(&mut rhs, step * T::of(i), &y, step);
        if !(y[0] > T::zero()) || !y[0].is_finite() {
            return Err(LabError::NonConvex { p: p.as_f64() });
        }
        if let Some(r) = record.as_deref_mut() {
            r.push(y[0]);
        }
        slopes.push(y[1]);
    }
    let end_slope = y[1];
    slopes.pop();
    let scale = slopes.iter().fold(T::zero(), |m, &s| m.max(s.abs()));
    let floor = scale * T::lit(1e-9);
    let mut turns = 0;
    let mut last = T::zero();
    for &s in &slopes {
        if s.abs() <= floor {
            continue;
        }
        if last != T::zero() && s.signum() != last.signum() {
            turns += 1;
        }
        last = s;
    }
    Ok(Shot { end_slope, interior_turns: turns })
}

fn bisect<T: Real>(alpha: T, k: usize, mut lo: T, mut hi: T, mut f_lo: T) -> Result<T> {
    let tol = T::lit(BISECT_TOL);
    while (hi - lo).abs() > tol {
        let mid = (lo + hi) * T::lit(0.5);
        if mid == lo || mid == hi {
            break;
        }
        let f_mid = shoot(alpha, k, mid, None)?.end_slope;
        if f_mid == T::zero() {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * T::lit(0.5))
}

/// Spreads the shooting samples on `[0, pi/k]` over the full circle by
/// reflection and rotation. `samples` must divide `2 k SHOOT_STEPS`.
fn lift<T: Real>(half: &[T], k: usize, samples: usize) -> Result<CircleField<T>> {
    let period = 2 * SHOOT_STEPS;
    let total = period * k;
    if !total.is_multiple_of(samples) {
        return Err(LabError::GridMismatch(format!(
            "{samples} samples do not land on the shooting nodes of a {k}-fold profile"
        )));
    }
    let stride = total / samples;
    let values = (0..samples)
        .map(|j| {
            let r = (j * stride) % period;
            half[if r > SHOOT_STEPS { period - r } else { r }]
        })
        .collect();
    CircleField::from_samples(values)
}

/// k-fold symmetric shrinking curve. `k = 0` returns the circle; otherwise
/// `k >= 3`. The grid starts at `samples` points and doubles until the top
/// of the spectrum is negligible and the residual is below
/// [`RESIDUAL_TOL`].
pub fn solve_shrinker_curve<T: Real>(alpha: T, k: usize, samples: usize) -> Result<ShrinkerProfile<T>> {
    if !(alpha > T::zero() && alpha < T::lit(0.5)) {
        return Err(LabError::InvalidParams(format!("alpha = {alpha} must lie in (0, 1/2)")));
    }
    if k == 0 {
        return ShrinkerProfile::round(2, alpha, samples);
    }
    if k < 3 {
        return Err(LabError::InvalidParams(format!("fold count {k} must be 0 or at least 3")));
    }
    // scan p = 1 - delta, delta log-spaced, from the round value outward
    let (lmin, lmax) = (DELTA_MIN.ln(), DELTA_MAX.ln());
    let mut prev: Option<(T, T)> = None;
    let mut roots: Vec<(T, usize)> = Vec::new();
    for i in 0..SCAN_POINTS {
        let delta = (lmin + (lmax - lmin) * i as f64 / (SCAN_POINTS - 1) as f64).exp();
        let p = T::one() - T::lit(delta);
        let f = match shoot(alpha, k, p, None) {
            Ok(s) => s.end_slope,
            Err(_) => {
                prev = None;
                continue;
            }
        };
        if let Some((p0, f0)) = prev {
            if f0 == T::zero() || f0.signum() != f.signum() {
                let root = if f0 == T::zero() { p0 } else { bisect(alpha, k, p0, p, f0)? };
                let turns = shoot(alpha, k, root, None)?.interior_turns;
                roots.push((root, turns));
            }
        }
        prev = Some((p, f));
    }
    let chosen = roots
        .iter()
        .position(|&(_, turns)| turns == 0)
        .ok_or(LabError::NoNontrivialSolution { alpha: alpha.as_f64(), k })?;
    let p = roots[chosen].0;
    let mut candidates = vec![p];
    candidates.extend(roots.iter().enumerate().filter(|&(i, _)| i != chosen).map(|(_, r)| r.0));

    let mut half = Vec::with_capacity(SHOOT_STEPS + 1);
    shoot(alpha, k, p, Some(&mut half))?;
    let mut n_grid = samples.max(32);
    // spectral decay alone can stop short when h is sharply peaked
    let (h, residual) = loop {
        let h = lift(&half, k, n_grid)?;
        let residual = if h.r_operator().min() > T::zero() {
            shrinker_residual(&h, alpha)?.sup_norm()
        } else {
            T::infinity()
        };
        if (h.is_resolved() && residual < T::lit(RESIDUAL_TOL)) || n_grid >= MAX_N {
            break (h, residual);
        }
        n_grid *= 2;
    };
    if !residual.is_finite() {
        return Err(LabError::NonConvex { p: p.as_f64() });
    }
    Ok(ShrinkerProfile { n: 2, alpha, h, symmetry_k: k, residual, shooting_candidates: candidates })
}

/// Same as [`solve_shrinker_curve`] on the default grid.
pub fn solve_shrinker_curve_default<T: Real>(alpha: T, k: usize) -> Result<ShrinkerProfile<T>> {
    solve_shrinker_curve(alpha, k, DEFAULT_N)
}
