//! Nonlinear remainders of the translator equation written around the
//! blow-down solution `A e^(sigma s) h`:
//!
//! `l^2 (S_ll + (1 + S_l^2)^kappa S_l^(1/alpha) det r[S]) = cal_L w + E1(w) + E2(w)`
//!
//! with `S = A l^sigma h + w(ln l, .)`. `E1` collects everything the blow-down
//! equation leaves after linearization; `E2` is the gradient correction.

use serde::{Deserialize, Serialize};

use crate::circlefield::{dealiased, CircleField};
use crate::constants::DerivedConstants;
use crate::error::{LabError, Result};
use crate::linearized::field::ExteriorField;
use crate::scalar::Real;

/// Which remainders enter the right-hand side `E = -E1 - E2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Forcing {
    /// Full translator equation.
    Full,
    /// Blow-down equation: `E2` dropped.
    BlowDown,
    /// Linear problem: `E = 0`.
    Linear,
}

/// `(1 + x)^p - 1 - p x` without cancellation for small `x`.
pub fn taylor_rest<T: Real>(x: T, p: T) -> T {
    if x.abs() < T::lit(1e-2) {
        // sum_{k >= 2} C(p, k) x^k
        let mut term = p * (p - T::one()) / T::lit(2.0) * x * x;
        let mut sum = term;
        for k in 3..40 {
            term = term * (p - T::of(k - 1)) / T::of(k) * x;
            sum = sum + term;
            if term.abs() <= sum.abs() * T::epsilon() {
                break;
            }
        }
        sum
    } else {
        (T::one() + x).powf(p) - T::one() - p * x
    }
}

/// `(1 + y)^kappa - 1` for `y >= 0`.
fn power_excess<T: Real>(y: T, kappa: T) -> T {
    (kappa * y.ln_1p()).exp_m1()
}

#[derive(Debug, Clone)]
struct SliceParts<T> {
    cross: CircleField<T>,
    det_bracket: CircleField<T>,
    speed: CircleField<T>,
    e2: CircleField<T>,
}

fn slice_parts<T: Real>(
    s: T,
    w: &CircleField<T>,
    w_s: &CircleField<T>,
    h: &CircleField<T>,
    c: &DerivedConstants<T>,
    with_e2: bool,
) -> Result<SliceParts<T>> {
    let one = T::one();
    let p = c.alpha.recip();
    let amp = c.big_a * (c.sigma * s).exp();
    let det_h = h.det_r();
    let r_v = w.r_operator().scale(amp.recip());
    let det_hv = det_h.add(&r_v);
    if !(det_hv.min() > T::zero()) {
        return Err(LabError::ConvexityLost { s: s.as_f64() });
    }
    let speed_arg = h.add(&w_s.scale((c.sigma * amp).recip()));
    if !(speed_arg.min() > T::zero()) {
        return Err(LabError::NonPositive { what: "speed factor h + w_s/(sigma A e^(sigma s))", min: speed_arg.min().as_f64() });
    }
    let lead = c.c2 * amp;
    let k1 = (one - c.sigma) / c.alpha;
    let cross = dealiased(&[h, w_s, &r_v], |a| k1 * a[1] * a[0].powf(p - one) * a[2])?;
    // n = 2: det is linear and its cofactor is 1, so this bracket is zero
    // up to rounding
    let det_bracket = dealiased(&[h, &det_h, &det_hv, &r_v], |a| lead * a[0].powf(p) * (a[2] - a[1] - a[3]))?;
    let sigma_amp = c.sigma * amp;
    let speed = dealiased(&[h, w_s, &det_hv], |a| {
        let x = a[1] / (sigma_amp * a[0]);
        lead * a[0].powf(p) * taylor_rest(x, p) * a[2]
    })?;
    let e2 = if with_e2 {
        let grad = c.sigma * c.big_a * ((c.sigma - one) * s).exp();
        let decay = (-s).exp();
        dealiased(&[h, w_s, &det_hv], |a| {
            let sl = grad * a[0] + a[1] * decay;
            let q = a[1] / sigma_amp;
            lead * power_excess(sl * sl, c.kappa) * (a[0] + q).powf(p) * a[2]
        })?
    } else {
        CircleField::zeros(h.n())?
    };
    Ok(SliceParts { cross, det_bracket, speed, e2 })
}

fn map_slices<T: Real>(
    w: &ExteriorField<T>,
    h: &CircleField<T>,
    c: &DerivedConstants<T>,
    with_e2: bool,
    pick: impl Fn(SliceParts<T>) -> CircleField<T>,
) -> Result<ExteriorField<T>> {
    if h.n() != w.grid.n {
        return Err(LabError::GridMismatch("shrinker and field use different angular grids".into()));
    }
    let w_s = w.d_s();
    let slices = (0..w.grid.len)
        .map(|j| slice_parts(w.grid.s(j), &w.slices[j], &w_s.slices[j], h, c, with_e2).map(&pick))
        .collect::<Result<_>>()?;
    Ok(ExteriorField { grid: w.grid, slices, gamma: w.gamma })
}

/// The two bracketed remainders from linearizing `S_l^(1/alpha) det r[S]`
/// in `det r`, without the pure speed nonlinearity. For curves `det r` is
/// linear and the second bracket is zero, so only the cross term is kept.
pub fn e1_cross_terms<T: Real>(w: &ExteriorField<T>, h: &CircleField<T>, c: &DerivedConstants<T>) -> Result<ExteriorField<T>> {
    map_slices(w, h, c, false, |p| p.cross)
}

/// The determinant bracket as evaluated in floating point. It vanishes
/// identically for curves; what remains is rounding of size
/// `c2 A e^(sigma s) eps`, which is why the forcing leaves it out.
pub fn e1_det_bracket<T: Real>(w: &ExteriorField<T>, h: &CircleField<T>, c: &DerivedConstants<T>) -> Result<ExteriorField<T>> {
    map_slices(w, h, c, false, |p| p.det_bracket)
}

/// Complete blow-down remainder: the cross term plus
/// `c2 A e^(sigma s) [(h+q)^(1/alpha) - h^(1/alpha) - h^(1/alpha-1) q/alpha] det r[h+v]`
/// with `q = w_s/(sigma A e^(sigma s))`, `v = w/(A e^(sigma s))`.
pub fn e1<T: Real>(w: &ExteriorField<T>, h: &CircleField<T>, c: &DerivedConstants<T>) -> Result<ExteriorField<T>> {
    map_slices(w, h, c, false, |p| p.cross.add(&p.speed))
}

pub fn e2<T: Real>(w: &ExteriorField<T>, h: &CircleField<T>, c: &DerivedConstants<T>) -> Result<ExteriorField<T>> {
    map_slices(w, h, c, true, |p| p.e2)
}

/// `E = -E1 - E2` (or the reduced variants).
pub fn forcing<T: Real>(
    w: &ExteriorField<T>,
    h: &CircleField<T>,
    c: &DerivedConstants<T>,
    mode: Forcing,
) -> Result<ExteriorField<T>> {
    match mode {
        Forcing::Linear => ExteriorField::zeros(w.grid, w.gamma),
        Forcing::BlowDown => map_slices(w, h, c, false, |p| p.cross.add(&p.speed).scale(-T::one())),
        Forcing::Full => map_slices(w, h, c, true, |p| p.cross.add(&p.speed).add(&p.e2).scale(-T::one())),
    }
}

/// Pointwise residual `S_ll + (1 + M S_l^2)^kappa S_l^(1/alpha) (S'' + S)` of
/// the curve translator equation (`M = 1` is the true equation).
pub fn translator_residual<T: Real>(
    s: &CircleField<T>,
    s_l: &CircleField<T>,
    s_ll: &CircleField<T>,
    m: T,
    c: &DerivedConstants<T>,
) -> Result<CircleField<T>> {
    if !(s_l.min() > T::zero()) {
        return Err(LabError::NonPositive { what: "S_l", min: s_l.min().as_f64() });
    }
    let det = s.det_r();
    let p = c.alpha.recip();
    Ok(s_ll.zip_with(&s_l.zip_with(&det, |g, d| (T::one() + m * g * g).powf(c.kappa) * g.powf(p) * d), |a, b| a + b))
}

/// `l^2` times [`translator_residual`] for `S = A l^sigma h + w(ln l, .)`,
/// evaluated on every slice.
pub fn translator_residual_field<T: Real>(
    w: &ExteriorField<T>,
    h: &CircleField<T>,
    c: &DerivedConstants<T>,
) -> Result<ExteriorField<T>> {
    let w_s = w.d_s();
    let w_ss = w.d_ss();
    let slices = (0..w.grid.len)
        .map(|j| {
            let s = w.grid.s(j);
            let l = s.exp();
            let amp = c.big_a * (c.sigma * s).exp();
            let big_s = h.scale(amp).add(&w.slices[j]);
            let s_l = h.scale(c.sigma * amp).add(&w_s.slices[j]).scale(l.recip());
            let s_ll = h
                .scale(c.sigma * (c.sigma - T::one()) * amp)
                .add(&w_ss.slices[j])
                .sub(&w_s.slices[j])
                .scale((l * l).recip());
            translator_residual(&big_s, &s_l, &s_ll, T::one(), c).map(|r| r.scale(l * l))
        })
        .collect::<Result<_>>()?;
    Ok(ExteriorField { grid: w.grid, slices, gamma: w.gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{derive_constants, FlowParams};
    use crate::linearized::field::ExteriorGrid;
    use crate::linearized::operator::apply_cal_l;
    use crate::shrinker::{solve_shrinker_curve, ShrinkerProfile};
    use crate::spectrum::eig_l_full;

    fn consts(a: f64) -> DerivedConstants<f64> {
        derive_constants(FlowParams::new(2, a).unwrap()).unwrap()
    }

    #[test]
    fn taylor_rest_matches_direct() {
        // integer power: the rest is a finite binomial sum with no cancellation
        let binom = |k: i32| (1..=k).fold(1.0, |a, i| a * (10 - i + 1) as f64 / i as f64);
        for &x in &[1e-3f64, -5e-3, 0.02, -0.3] {
            let exact: f64 = (2..=10).map(|k| binom(k) * x.powi(k)).sum();
            assert!((taylor_rest(x, 10.0) - exact).abs() < 1e-13 * exact.abs(), "{x}");
        }
        assert_eq!(taylor_rest(0.0, 7.5), 0.0);
    }

    #[test]
    fn vanish_at_zero() {
        let c = consts(0.1);
        let h = CircleField::constant(32, 1.0).unwrap();
        let g = ExteriorGrid::new(4.0, 14.0, 0.05, 32).unwrap();
        let z = ExteriorField::zeros(g, 0.5).unwrap();
        assert_eq!(e1(&z, &h, &c).unwrap().norm(), 0.0);
        assert_eq!(forcing(&z, &h, &c, Forcing::BlowDown).unwrap().norm(), 0.0);
        assert!(e2(&z, &h, &c).unwrap().norm() > 0.0);
    }

    #[test]
    fn scaling_mode_closed_forms() {
        let c = consts(0.1);
        // the power h^(1/alpha) needs a fine angular grid to be resolved
        let p = solve_shrinker_curve(0.1f64, 3, 256).unwrap();
        let h = &p.h;
        let g = ExteriorGrid::new(4.0, 14.0, 0.02, h.n()).unwrap();
        let amp = 0.05;
        let w = ExteriorField::separated(g, c.sigma, |s| amp * (c.sigma * s).exp(), h).unwrap();
        let t = amp / c.big_a;
        let cross = e1_cross_terms(&w, h, &c).unwrap();
        let full = e1(&w, h, &c).unwrap();
        for j in (0..g.len).step_by(50) {
            let es = (c.sigma * g.s(j)).exp();
            let oracle_cross = h.scale(c.c2 * amp * amp / (c.alpha * c.big_a) * es);
            let e = cross.slices[j].sub(&oracle_cross).sup_norm() / oracle_cross.sup_norm();
            assert!(e < 1e-7, "cross {e}");
            let p = 1.0 / c.alpha;
            let bracket = (1.0 + t).powf(p + 1.0) - 1.0 - (p + 1.0) * t;
            let oracle = h.scale(c.c2 * c.big_a * es * bracket);
            let e = full.slices[j].sub(&oracle).sup_norm() / oracle.sup_norm();
            assert!(e < 1e-7, "full {e}");
        }
        assert!(e1_det_bracket(&w, h, &c).unwrap().weighted_sup(c.sigma) < 1e-9);
    }

    #[test]
    fn quadratic_vanishing() {
        let c = consts(0.1);
        let p = ShrinkerProfile::round(2, 0.1f64, 32).unwrap();
        let spec = eig_l_full(&p).unwrap();
        let g = ExteriorGrid::new(4.0, 14.0, 0.05, 32).unwrap();
        for j in 0..6 {
            let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&eps| {
                    let w = ExteriorField::separated(g, c.sigma, |s| eps * (c.sigma * s).exp(), &spec.phis[j]).unwrap();
                    e1(&w, &p.h, &c).unwrap().weighted_sup(c.sigma) / (eps * eps)
                })
                .collect();
            let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
            assert!(hi <= 2.0 * lo && lo > 0.0, "mode {j}: {ratios:?}");
        }
    }

    #[test]
    fn e2_decay_rate_and_leading_term() {
        let c = consts(0.1);
        let h = CircleField::constant(32, 1.0).unwrap();
        let p3 = solve_shrinker_curve(0.1f64, 3, 64).unwrap();
        let g = ExteriorGrid::new(8.0, 18.0, 0.05, 32).unwrap();
        let z = ExteriorField::zeros(g, 0.0).unwrap();
        let e = e2(&z, &h, &c).unwrap();
        let s = g.s_values();
        let scaled: Vec<f64> = e.slice_sups().iter().zip(&s).filter(|(_, &x)| x <= 16.0).map(|(v, x)| v * (-c.sigma * x).exp()).collect();
        let xs: Vec<f64> = s.iter().copied().filter(|&x| x <= 16.0).collect();
        let rate = crate::linearized::field::log_linear_rate(&xs, &scaled).unwrap();
        let target = 2.0 * (c.sigma - 1.0);
        assert!(((rate - target) / target).abs() < 0.05, "{rate}");
        // leading coefficient on a non-round profile
        let h3 = &p3.h;
        let g3 = ExteriorGrid::new(8.0, 18.0, 0.05, h3.n()).unwrap();
        let e3 = e2(&ExteriorField::zeros(g3, 0.0).unwrap(), h3, &c).unwrap();
        let j = g3.len - 1;
        let sj = g3.s(j);
        let det = h3.det_r();
        let lead = c.big_a * c.c2 * c.kappa * c.sigma.powi(2) * c.big_a.powi(2)
            * ((2.0 * (c.sigma - 1.0) + c.sigma) * sj).exp();
        let oracle = h3.zip_with(&det, |x, d| lead * x * x * x.powf(1.0 / c.alpha) * d);
        let rel = e3.slices[j].sub(&oracle).sup_norm() / oracle.sup_norm();
        assert!(rel < 0.01, "{rel}");
    }

    #[test]
    fn expansion_reproduces_translator_equation() {
        let c = consts(0.1);
        // pointwise residual against dealiased products: agreement needs h^(1/alpha) resolved
        let p = solve_shrinker_curve(0.1f64, 3, 256).unwrap();
        let spec = eig_l_full(&p).unwrap();
        let g = ExteriorGrid::new(4.0, 14.0, 0.02, p.h.n()).unwrap();
        // an arbitrary smooth perturbation, small against A e^(sigma s)
        let w = ExteriorField::from_fn(g, c.sigma, |s: f64, t: f64| {
            (0.3 * s).exp() * (0.4 + 0.2 * (3.0 * t).cos() + 0.1 * (2.0 * t).sin())
        })
        .unwrap();
        let lhs = translator_residual_field(&w, &p.h, &c).unwrap();
        let rhs = apply_cal_l(&w, &spec).unwrap().add(&e1(&w, &p.h, &c).unwrap()).unwrap().add(&e2(&w, &p.h, &c).unwrap()).unwrap();
        let d = lhs.sub(&rhs).unwrap();
        assert!(d.weighted_sup(c.sigma) < 1e-7 * lhs.weighted_sup(c.sigma).max(1.0), "{}", d.weighted_sup(c.sigma));
        // the cross terms alone miss the speed term
        let partial = apply_cal_l(&w, &spec).unwrap().add(&e1_cross_terms(&w, &p.h, &c).unwrap()).unwrap().add(&e2(&w, &p.h, &c).unwrap()).unwrap();
        assert!(lhs.sub(&partial).unwrap().weighted_sup(c.sigma) > 1e3 * d.weighted_sup(c.sigma));
    }
}
