//! Mode-wise inverse of `cal_L` on `[R, inf)` with zero boundary data.
//!
//! Each weighted mode `g_j` is solved through the factorization
//! `(d/ds - beta+)(d/ds - beta-) w_j = g_j` as two first-order equations,
//! each integrated in its stable direction:
//!
//! * modes with `beta+_j > gamma` (decaying formula):
//!   `J' = beta+ J - g` backward from the tail, then `w' = beta- w - J`, `w(R) = 0`;
//! * modes with `beta+_j < gamma`:
//!   `P' = beta+ P + g`, `P(R) = 0`, then `w' = beta- w + P`, `w(R) = 0`.
//!
//! Beyond `S_max` each `g_j` is continued as `g_j(S_max) e^(mu (s - S_max))`,
//! `mu` being its measured decay rate (or `gamma` when the measurement is
//! unreliable), which gives `J(S_max) = g_j(S_max)/(beta+ - mu)`.

use crate::circlefield::CircleField;
use crate::error::{LabError, Result};
use crate::linearized::field::ExteriorField;
use crate::scalar::Real;
use crate::spectrum::SpectralData;

pub const RESONANCE_TOL: f64 = 1e-8;
const RATE_CONSISTENCY: f64 = 0.05;
/// Mode coefficients below this fraction of the largest one at `S_max` are
/// rounding noise; their tail rate is not measured.
pub const TAIL_NOISE: f64 = 1e-9;
/// A tail growing faster than `beta+_j` is an error only when its weighted
/// size at `S_max` exceeds this fraction of the weighted norm of `g`.
pub const TAIL_SIGNIFICANT: f64 = 1e-3;

/// `m_k(z) = int_0^1 e^(z (1-u)) u^k du` for `k = 0..4`.
fn moments<T: Real>(z: T) -> [T; 4] {
    let mut m = [T::zero(); 4];
    if z.abs() < T::lit(4.0) {
        for (k, mk) in m.iter_mut().enumerate() {
            let mut term = T::one() / T::of(k + 1);
            let mut sum = term;
            for q in 0..80 {
                term = term * z / T::of(q + k + 2);
                sum = sum + term;
                if term.abs() <= sum.abs() * T::epsilon() {
                    break;
                }
            }
            *mk = sum;
        }
    } else {
        m[0] = z.exp_m1() / z;
        for k in 1..4 {
            m[k] = (T::of(k) * m[k - 1] - T::one()) / z;
        }
    }
    m
}

/// Monomial coefficients of the Lagrange basis on four nodes.
fn lagrange_coeffs<T: Real>(nodes: [T; 4]) -> [[T; 4]; 4] {
    let mut out = [[T::zero(); 4]; 4];
    for i in 0..4 {
        let mut poly = [T::one(), T::zero(), T::zero(), T::zero()];
        let mut deg = 0;
        let mut denom = T::one();
        for (m, &um) in nodes.iter().enumerate() {
            if m == i {
                continue;
            }
            // poly *= (u - um)
            for d in (0..=deg + 1).rev() {
                let shifted = if d > 0 { poly[d - 1] } else { T::zero() };
                poly[d] = shifted - um * poly[d];
            }
            deg += 1;
            denom = denom * (nodes[i] - um);
        }
        for d in 0..4 {
            out[i][d] = poly[d] / denom;
        }
    }
    out
}

/// Exponential integrator for `y' = beta y + f` on a uniform grid with `f`
/// interpolated by local cubics.
struct ExpStepper<T> {
    growth: T,
    h: T,
    first: [T; 4],
    interior: [T; 4],
    last: [T; 4],
}

impl<T: Real> ExpStepper<T> {
    fn new(beta: T, h: T) -> Self {
        let z = beta * h;
        let m = moments(z);
        let weights = |nodes: [f64; 4]| {
            let c = lagrange_coeffs(nodes.map(T::lit));
            let mut w = [T::zero(); 4];
            for i in 0..4 {
                w[i] = (0..4).fold(T::zero(), |a, d| a + c[i][d] * m[d]);
            }
            w
        };
        Self {
            growth: z.exp(),
            h,
            first: weights([0.0, 1.0, 2.0, 3.0]),
            interior: weights([-1.0, 0.0, 1.0, 2.0]),
            last: weights([-2.0, -1.0, 0.0, 1.0]),
        }
    }

    fn integrate(&self, y0: T, f: &[T]) -> Vec<T> {
        let n = f.len();
        let mut y = Vec::with_capacity(n);
        y.push(y0);
        for k in 0..n - 1 {
            let (w, start) = if k == 0 {
                (&self.first, 0)
            } else if k == n - 2 {
                (&self.last, n - 4)
            } else {
                (&self.interior, k - 1)
            };
            let inc = (0..4).fold(T::zero(), |a, i| a + w[i] * f[start + i]);
            let next = self.growth * y[k] + self.h * inc;
            y.push(next);
        }
        y
    }

    /// Integrates from the last grid point toward the first.
    fn integrate_backward(beta: T, h: T, y_end: T, f: &[T]) -> Vec<T> {
        let rev: Vec<T> = f.iter().rev().copied().collect();
        let mut out = ExpStepper::new(-beta, h).integrate(y_end, &rev.iter().map(|&x| -x).collect::<Vec<_>>());
        out.reverse();
        out
    }
}

/// Decay rate of a mode coefficient over its last two unit intervals, if
/// both estimates agree.
fn tail_rate<T: Real>(g: &[T], ds: T) -> Option<T> {
    let stride = (T::one() / ds).round().to_usize()?;
    let n = g.len();
    if n < 2 * stride + 1 {
        return None;
    }
    let (a, b, c) = (g[n - 1 - 2 * stride], g[n - 1 - stride], g[n - 1]);
    if a == T::zero() || b == T::zero() || c == T::zero() || a.signum() != b.signum() || b.signum() != c.signum() {
        return None;
    }
    let span = ds * T::of(stride);
    let mu1 = (c / b).ln() / span;
    let mu2 = (b / a).ln() / span;
    ((mu1 - mu2).abs() < T::lit(RATE_CONSISTENCY)).then_some(mu1)
}

/// Number of modes whose `beta+` lies below `gamma`, after rejecting
/// resonant `gamma`.
pub fn split_index<T: Real>(gamma: T, spec: &SpectralData<T>) -> Result<usize> {
    for (j, b) in spec.betas.iter().enumerate() {
        if (gamma - b.beta_plus).abs() < T::lit(RESONANCE_TOL) {
            return Err(LabError::GammaOnResonance { gamma: gamma.as_f64(), j, beta: b.beta_plus.as_f64() });
        }
    }
    Ok(spec.betas.iter().filter(|b| b.beta_plus < gamma).count())
}

/// Weighted mode coefficients of every slice: `coeffs[j][i] = <g(s_i), phi_j>_h`.
pub fn project_field<T: Real>(g: &ExteriorField<T>, spec: &SpectralData<T>) -> Vec<Vec<T>> {
    let n = g.grid.n;
    let dtheta = T::lit(2.0) * T::PI() / T::of(n);
    let weight = spec.weight().samples();
    let rows: Vec<Vec<T>> = spec
        .phis
        .iter()
        .map(|p| p.samples().iter().zip(weight).map(|(&a, &w)| a * w * dtheta).collect())
        .collect();
    rows.iter()
        .map(|row| {
            g.slices
                .iter()
                .map(|sl| row.iter().zip(sl.samples()).fold(T::zero(), |acc, (&r, &x)| acc + r * x))
                .collect()
        })
        .collect()
}

/// `H_{R,gamma}(g)` with `R` the first grid point.
pub fn linear_solve_h<T: Real>(g: &ExteriorField<T>, gamma: T, spec: &SpectralData<T>) -> Result<ExteriorField<T>> {
    let n = g.grid.n;
    if spec.weight().n() != n || spec.len() != n {
        return Err(LabError::GridMismatch("the inverse needs the full eigenbasis on the field's grid".into()));
    }
    if g.grid.len < 4 {
        return Err(LabError::GridMismatch("too few s-slices".into()));
    }
    let m = split_index(gamma, spec)?;
    let coeffs = project_field(g, spec);
    let ds = g.grid.ds;
    let floor = coeffs.iter().fold(T::zero(), |a, c| a.max(c[c.len() - 1].abs())) * T::lit(TAIL_NOISE);
    let end_weight = (-gamma * g.grid.s_max()).exp();
    let scale = g.weighted_sup(gamma);
    let mut modes: Vec<Vec<T>> = Vec::with_capacity(n);
    for (j, gj) in coeffs.iter().enumerate() {
        let b = spec.betas[j];
        let wj = if j >= m {
            let last = gj[gj.len() - 1];
            let measured = if last.abs() > floor { tail_rate(gj, ds) } else { None };
            let mu = match measured {
                // g has finite gamma-norm, so its tail is taken to decay at
                // least as fast as e^(gamma s)
                Some(mu) if mu < b.beta_plus => {let _ = mu; gamma},
                Some(mu) if last.abs() * end_weight > T::lit(TAIL_SIGNIFICANT) * scale => {
                    return Err(LabError::TailDivergence { rate: mu.as_f64(), j, beta: b.beta_plus.as_f64() });
                }
                // a fast-growing but negligible tail is rounding noise
                _ => gamma,
            };
            let j_end = last / (b.beta_plus - mu);
            let big_j = ExpStepper::integrate_backward(b.beta_plus, ds, j_end, &gj.iter().map(|&x| -x).collect::<Vec<_>>());
            let f: Vec<T> = big_j.iter().map(|&x| -x).collect();
            ExpStepper::new(b.beta_minus, ds).integrate(T::zero(), &f)
        } else {
            let p = ExpStepper::new(b.beta_plus, ds).integrate(T::zero(), gj);
            ExpStepper::new(b.beta_minus, ds).integrate(T::zero(), &p)
        };
        modes.push(wj);
    }
    let slices = (0..g.grid.len)
        .map(|i| {
            let mut out = CircleField::zeros(n)?;
            for (wj, phi) in modes.iter().zip(&spec.phis) {
                out.axpy(wj[i], phi);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(ExteriorField { grid: g.grid, slices, gamma })
}
