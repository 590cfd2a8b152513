//! Radial translator profiles `f_M`, solving
//! `f'' + (1 + M f'^2)^kappa f'^(1/alpha) f^(n-1) = 0`, `f(0) = 0`, `f'(0) = inf`,
//! their large-`l` asymptotics and the barrier inequality for `f_M h`.

use serde::{Deserialize, Serialize};

use crate::constants::DerivedConstants;
use crate::error::{LabError, Result};
use crate::ode::{Dopri5, Tolerances};
use crate::scalar::Real;
use crate::shrinker::ShrinkerProfile;

pub const TIP_RADIUS: f64 = 1e-6;
/// Hand over from the graph picture once `f_l` drops below this.
pub const HANDOVER_SLOPE: f64 = 1e3;
pub const RADIAL_TOL: f64 = 1e-12;
pub const SAMPLES_PER_DECADE: usize = 20;
/// Decades at the top of the profile used by [`fit_asymptotics`].
pub const FIT_DECADES: f64 = 2.0;
pub const FIT_MIN_LMAX: f64 = 1e4;
pub const FIT_REJECT: f64 = 0.1;
/// Relative slack below zero still counted as the barrier sign.
pub const SIGN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialOptions<T> {
    pub samples_per_decade: usize,
    pub rtol: T,
    pub atol: T,
    pub r0: T,
    pub handover_slope: T,
}

impl<T: Real> Default for RadialOptions<T> {
    fn default() -> Self {
        Self {
            samples_per_decade: SAMPLES_PER_DECADE,
            rtol: T::lit(RADIAL_TOL),
            atol: T::lit(RADIAL_TOL),
            r0: T::lit(TIP_RADIUS),
            handover_slope: T::lit(HANDOVER_SLOPE),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile<T> {
    pub m: T,
    pub consts: DerivedConstants<T>,
    pub l: Vec<T>,
    pub f: Vec<T>,
    pub f_l: Vec<T>,
    /// `u''(0) = M^(kappa/n)` for the inverse function `u` of `f`.
    pub tip_coefficient: T,
    /// Height at which the graph picture handed over to `f(l)`.
    pub handover_l: T,
    pub handover_slope: T,
    /// Samples before this index come from the graph picture (geometric in
    /// `r = f`); the rest sit on a geometric grid in `l`.
    pub graph_samples: usize,
}

/// `(1 + m x^2)^kappa x^(1/alpha)` evaluated in logs.
pub fn radial_speed<T: Real>(x: T, m: T, c: &DerivedConstants<T>) -> T {
    (c.kappa * (m * x * x).ln_1p() + x.ln() / c.alpha).exp()
}

impl<T: Real> RadialProfile<T> {
    /// `f_ll` from the equation at every sample.
    pub fn f_ll(&self) -> Vec<T> {
        let e = T::of(self.consts.n - 1);
        self.f
            .iter()
            .zip(&self.f_l)
            .map(|(&f, &g)| -radial_speed(g, self.m, &self.consts) * f.powf(e))
            .collect()
    }

    pub fn l_max(&self) -> T {
        *self.l.last().expect("nonempty profile")
    }

    /// `(f, f_l)` at a sample height, matched to relative `1e-12`.
    pub fn sample_at(&self, l: T) -> Option<(T, T)> {
        let tol = T::lit(1e-12) * l.abs();
        self.l.iter().position(|&x| (x - l).abs() <= tol).map(|i| (self.f[i], self.f_l[i]))
    }

    /// `f` from the tip series `u = M^(kappa/n) r^2 / 2` inverted.
    pub fn tip_series(&self, l: T) -> T {
        (T::lit(2.0) * l / self.tip_coefficient).sqrt()
    }
}

fn geometric_points<T: Real>(from: T, to: T, per_decade: usize) -> Vec<T> {
    let ten = T::lit(10.0);
    let k0 = (from.log10() * T::of(per_decade)).floor().to_i64().expect("finite") + 1;
    let mut out = Vec::new();
    let mut k = k0;
    loop {
        let x = ten.powf(T::from_i64(k).expect("small") / T::of(per_decade));
        if x >= to * (T::one() - T::lit(1e-12)) {
            break;
        }
        out.push(x);
        k += 1;
    }
    out.push(to);
    out
}

pub fn solve_radial<T: Real>(m: T, consts: &DerivedConstants<T>, l_max: T) -> Result<RadialProfile<T>> {
    solve_radial_with(m, consts, l_max, &RadialOptions::default())
}

pub fn solve_radial_with<T: Real>(
    m: T,
    consts: &DerivedConstants<T>,
    l_max: T,
    opts: &RadialOptions<T>,
) -> Result<RadialProfile<T>> {
    if !(m > T::zero() && m.is_finite()) {
        return Err(LabError::InvalidParams(format!("M = {m} must be positive")));
    }
    if opts.samples_per_decade == 0 || !(opts.r0 > T::zero()) || !(opts.handover_slope > T::one()) {
        return Err(LabError::InvalidParams("radial options out of range".into()));
    }
    let c = *consts;
    let n = T::of(c.n);
    let e = T::of(c.n - 1);
    let a = (c.kappa / n * m.ln()).exp();
    let tol = Tolerances { rtol: opts.rtol, atol: opts.atol };
    let (mut l, mut f, mut f_l) = (Vec::new(), Vec::new(), Vec::new());

    // graph picture: u(r), p = u', p' = (M + p^2)^kappa (r/p)^(n-1)
    let r0 = opts.r0;
    let u0 = T::lit(0.5) * a * r0 * r0;
    if !(l_max > u0) {
        return Err(LabError::InvalidParams(format!("l_max = {l_max} lies below the tip start {u0}")));
    }
    let p_switch = opts.handover_slope.recip();
    let mut graph_rhs = |r: T, y: &[T], dy: &mut [T]| -> Result<()> {
        let p = y[1];
        if !(p > T::zero()) {
            return Err(LabError::NonPositive { what: "u'", min: p.as_f64() });
        }
        dy[0] = p;
        dy[1] = (c.kappa * (m + p * p).ln() + e * (r / p).ln()).exp();
        Ok(())
    };
    // atol would swamp u ~ r^2 near the tip; control relative error only
    let graph_tol = Tolerances { rtol: opts.rtol, atol: T::min_positive_value() };
    let mut ode = Dopri5::new(r0, vec![u0, a * r0], r0 * T::lit(1e-3), graph_tol);
    l.push(u0);
    f.push(r0);
    f_l.push((a * r0).recip());
    let r_marks = geometric_points(r0, T::max_value().sqrt(), 2 * opts.samples_per_decade);
    let mut next = 0;
    while ode.y[1] < p_switch && ode.y[0] < l_max {
        let target = r_marks[next];
        ode.step(&mut graph_rhs, target)?;
        if ode.t >= target {
            next += 1;
            if ode.y[1] < p_switch && ode.y[0] < l_max {
                l.push(ode.y[0]);
                f.push(ode.t);
                f_l.push(ode.y[1].recip());
            }
        }
    }
    let handover_l = ode.y[0];
    let graph_samples = l.len();
    if handover_l >= l_max {
        return Err(LabError::InvalidParams(format!("l_max = {l_max} lies inside the tip region")));
    }

    // f(l): f'' = -(1 + M f'^2)^kappa f'^(1/alpha) f^(n-1)
    let mut rhs = |_t: T, y: &[T], dy: &mut [T]| -> Result<()> {
        if !(y[1] > T::zero()) {
            return Err(LabError::NonPositive { what: "f_l", min: y[1].as_f64() });
        }
        dy[0] = y[1];
        dy[1] = -radial_speed(y[1], m, &c) * y[0].powf(e);
        Ok(())
    };
    let mut ode = Dopri5::new(handover_l, vec![ode.t, ode.y[1].recip()], handover_l * T::lit(1e-3), tol);
    for target in geometric_points(handover_l, l_max, opts.samples_per_decade) {
        while ode.t < target {
            ode.step(&mut rhs, target)?;
            if !(ode.y[0].is_finite() && ode.y[1].is_finite()) {
                return Err(LabError::NonPositive { what: "finite f", min: f64::NAN });
            }
        }
        if !(ode.y[1] > T::zero()) {
            return Err(LabError::NonPositive { what: "f_l", min: ode.y[1].as_f64() });
        }
        l.push(target);
        f.push(ode.y[0]);
        f_l.push(ode.y[1]);
    }
    Ok(RadialProfile {
        m,
        consts: c,
        l,
        f,
        f_l,
        tip_coefficient: a,
        handover_l,
        handover_slope: opts.handover_slope,
        graph_samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit<T> {
    pub a_fit: T,
    pub a_exact: T,
    pub correction_exponent: T,
    /// `sigma + 2 (sigma - 1)`.
    pub expected_exponent: T,
    pub c_fit: T,
    pub c_sign: i8,
    pub l_lo: T,
    pub l_hi: T,
    /// Largest `|f - A_fit l^sigma - c l^q| / |c l^q|` over the window.
    pub model_residual: T,
}

/// Fits `f(l) = A_fit l^sigma + c l^q` over the top two decades.
pub fn fit_asymptotics<T: Real>(p: &RadialProfile<T>) -> Result<AsymptoticFit<T>> {
    let c = &p.consts;
    let l_hi = p.l_max();
    if l_hi < T::lit(FIT_MIN_LMAX) * (T::one() - T::lit(1e-12)) {
        return Err(LabError::Precondition(format!("l_max = {l_hi} is below {FIT_MIN_LMAX}")));
    }
    let l_lo = l_hi / T::lit(10.0).powf(T::lit(FIT_DECADES));
    let idx: Vec<usize> = (p.graph_samples..p.l.len()).filter(|&i| p.l[i] >= l_lo * (T::one() - T::lit(1e-12))).collect();
    if idx.len() < 4 {
        return Err(LabError::FitRejected("too few samples in the fit window".into()));
    }
    let rest: Vec<T> = idx.iter().map(|&i| p.f[i] - c.big_a * p.l[i].powf(c.sigma)).collect();
    let sign = rest[0].signum();
    if rest.iter().any(|&r| r == T::zero() || r.signum() != sign) {
        return Err(LabError::FitRejected("f - A l^sigma changes sign or vanishes in the window".into()));
    }
    let xs: Vec<T> = idx.iter().map(|&i| p.l[i].ln()).collect();
    let ys: Vec<T> = rest.iter().map(|r| r.abs().ln()).collect();
    let q = slope(&xs, &ys);
    // two-column least squares for (A_fit, c), columns scaled to unit size
    let col_a: Vec<T> = idx.iter().map(|&i| p.l[i].powf(c.sigma)).collect();
    let col_c: Vec<T> = idx.iter().map(|&i| p.l[i].powf(q)).collect();
    let sa = col_a.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let sc = col_c.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let (mut g11, mut g12, mut g22, mut b1, mut b2) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for (k, &i) in idx.iter().enumerate() {
        let (x1, x2) = (col_a[k] / sa, col_c[k] / sc);
        g11 = g11 + x1 * x1;
        g12 = g12 + x1 * x2;
        g22 = g22 + x2 * x2;
        b1 = b1 + x1 * p.f[i];
        b2 = b2 + x2 * p.f[i];
    }
    let det = g11 * g22 - g12 * g12;
    if !(det.abs() > T::epsilon() * g11 * g22) {
        return Err(LabError::FitRejected("leading and correction columns are collinear".into()));
    }
    let a_fit = (g22 * b1 - g12 * b2) / det / sa;
    let c_fit = (g11 * b2 - g12 * b1) / det / sc;
    let model_residual = idx
        .iter()
        .enumerate()
        .map(|(k, &i)| ((p.f[i] - a_fit * col_a[k] - c_fit * col_c[k]) / (c_fit * col_c[k])).abs())
        .fold(T::zero(), T::max);
    if !(model_residual <= T::lit(FIT_REJECT)) {
        return Err(LabError::FitRejected(format!("model residual {model_residual} exceeds {FIT_REJECT} of the correction")));
    }
    Ok(AsymptoticFit {
        a_fit,
        a_exact: c.big_a,
        correction_exponent: q,
        expected_exponent: T::lit(3.0) * c.sigma - T::lit(2.0),
        c_fit,
        c_sign: if c_fit > T::zero() { 1 } else { -1 },
        l_lo,
        l_hi,
        model_residual,
    })
}

fn slope<T: Real>(x: &[T], y: &[T]) -> T {
    let k = T::of(x.len());
    let mx = x.iter().fold(T::zero(), |a, &v| a + v) / k;
    let my = y.iter().fold(T::zero(), |a, &v| a + v) / k;
    let sxy = x.iter().zip(y).fold(T::zero(), |a, (&u, &v)| a + (u - mx) * (v - my));
    let sxx = x.iter().fold(T::zero(), |a, &u| a + (u - mx) * (u - mx));
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Barrier {
    /// Residual `>= 0`.
    Sub,
    /// Residual `<= 0`.
    Super,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport<T> {
    pub which: Barrier,
    pub m: T,
    pub sup_h2: T,
    pub inf_h2: T,
    /// `M >= sup h^2` for subsolutions (`M <= inf h^2` for supersolutions)
    /// below the affine-critical power, reversed above it.
    pub sufficient_condition: bool,
    pub min_residual: T,
    pub max_residual: T,
    /// Residual divided by the speed term, extremes over the grid.
    pub min_relative: T,
    pub max_relative: T,
    pub points: usize,
    pub violations: usize,
    pub sign_holds: bool,
    /// Relative tolerance on the sign.
    pub slack: T,
}

/// Plugs `U = f_M(l) h(theta)` into the translator equation (`M = 1`) at
/// every profile sample and angle:
/// `U_ll + (1 + U_l^2)^kappa U_l^(1/alpha) det r[U]`.
pub fn barrier_check<T: Real>(radial: &RadialProfile<T>, h: &ShrinkerProfile<T>, which: Barrier) -> Result<BarrierReport<T>> {
    let c = &radial.consts;
    if h.n != c.n {
        return Err(LabError::InvalidParams(format!("shrinker dimension {} differs from profile dimension {}", h.n, c.n)));
    }
    let hs = h.h.samples();
    let det = h.det_r();
    let e = T::of(c.n - 1);
    let sup_h2 = hs.iter().fold(T::zero(), |m, &x| m.max(x * x));
    let inf_h2 = hs.iter().fold(T::infinity(), |m, &x| m.min(x * x));
    let want_sub = which == Barrier::Sub;
    // where h^2 = M the residual vanishes identically, up to the shrinker
    // equation's own residual relative to det r[h]
    let slack = T::lit(SIGN_SLACK) + h.residual / det.min();
    let sufficient_condition = if c.kappa < T::zero() {
        if want_sub { radial.m >= sup_h2 } else { radial.m <= inf_h2 }
    } else if c.kappa > T::zero() {
        if want_sub { radial.m <= inf_h2 } else { radial.m >= sup_h2 }
    } else {
        true
    };
    let mut out = BarrierReport {
        which,
        m: radial.m,
        sup_h2,
        inf_h2,
        sufficient_condition,
        min_residual: T::infinity(),
        max_residual: T::neg_infinity(),
        min_relative: T::infinity(),
        max_relative: T::neg_infinity(),
        points: 0,
        violations: 0,
        sign_holds: true,
        slack,
    };
    for i in 0..radial.l.len() {
        let (f, g) = (radial.f[i], radial.f_l[i]);
        let fe = f.powf(e);
        let f_ll = -radial_speed(g, radial.m, c) * fe;
        for (&hk, &dk) in hs.iter().zip(det.samples()) {
            let speed = radial_speed(g * hk, T::one(), c) * fe * dk;
            let res = f_ll * hk + speed;
            let rel = res / speed;
            out.min_residual = out.min_residual.min(res);
            out.max_residual = out.max_residual.max(res);
            out.min_relative = out.min_relative.min(rel);
            out.max_relative = out.max_relative.max(rel);
            out.points += 1;
            let ok = if want_sub { rel >= -slack } else { rel <= slack };
            if !ok {
                out.violations += 1;
            }
        }
    }
    out.sign_holds = out.violations == 0;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{derive_constants, FlowParams};
    use crate::shrinker::solve_shrinker_curve;

    fn consts(n: usize, a: f64) -> DerivedConstants<f64> {
        derive_constants(FlowParams::new(n, a).unwrap()).unwrap()
    }

    #[test]
    fn affine_critical_is_exact() {
        let c = consts(2, 0.25);
        for m in [1.0, 0.3, 7.0] {
            let p = solve_radial(m, &c, 1e6).unwrap();
            let worst = p
                .l
                .iter()
                .zip(&p.f)
                .filter(|(&l, _)| l >= 1.0)
                .map(|(&l, &f)| ((f - (2.0 * l).sqrt()) / (2.0 * l).sqrt()).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-9, "M = {m}: {worst}");
        }
    }

    #[test]
    fn tip_and_shape() {
        let c = consts(2, 0.1);
        let p = solve_radial(2.0, &c, 1e4).unwrap();
        assert!((p.tip_coefficient - 2f64.powf(c.kappa / 2.0)).abs() < 1e-15);
        assert!((p.f[0] - p.tip_series(p.l[0])).abs() < 1e-10 * p.f[0]);
        assert!(p.l.windows(2).all(|w| w[1] > w[0]));
        assert!(p.f.windows(2).all(|w| w[1] > w[0]));
        assert!(p.f_l.iter().all(|&g| g > 0.0));
        let fll = p.f_ll();
        assert!(p.l.iter().zip(&fll).filter(|(&l, _)| l > 1.0).all(|(_, &x)| x < 0.0));
        assert!(p.handover_l > 0.0 && p.f_l[p.graph_samples] < HANDOVER_SLOPE);
        assert!(p.sample_at(100.0).is_some());
    }

    #[test]
    fn tolerance_halving_is_stable() {
        let c = consts(2, 0.1);
        let a = solve_radial(1.0, &c, 1e6).unwrap();
        let opts = RadialOptions { rtol: 5e-13, atol: 5e-13, ..Default::default() };
        let b = solve_radial_with(1.0, &c, 1e6, &opts).unwrap();
        let (fa, fb) = (a.f.last().unwrap(), b.f.last().unwrap());
        assert!(((fa - fb) / fa).abs() < 1e-8);
    }

    #[test]
    fn asymptotic_fit() {
        let c = consts(2, 0.1);
        let p = solve_radial(1.0, &c, 1e6).unwrap();
        let fit = fit_asymptotics(&p).unwrap();
        assert!(((fit.a_fit - c.big_a) / c.big_a).abs() < 0.01, "{fit:?}");
        let target = 3.0 * c.sigma - 2.0;
        assert!(((fit.correction_exponent - target) / target).abs() < 0.05, "{fit:?}");
        assert_eq!(fit.c_sign, 1);
        let c3 = consts(3, 0.15);
        let p3 = solve_radial(1.0, &c3, 1e6).unwrap();
        assert_eq!(fit_asymptotics(&p3).unwrap().c_sign, 1);
        // no correction at the affine-critical power
        let pc = solve_radial(1.0, &consts(2, 0.25), 1e6).unwrap();
        assert!(fit_asymptotics(&pc).is_err());
    }

    #[test]
    fn fit_improves_with_height() {
        let c = consts(2, 0.1);
        let errs: Vec<f64> = [1e4, 1e5, 1e6]
            .iter()
            .map(|&lm| {
                let p = solve_radial(1.0, &c, lm).unwrap();
                (fit_asymptotics(&p).unwrap().a_fit - c.big_a).abs()
            })
            .collect();
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
    }

    #[test]
    fn barriers() {
        let c = consts(2, 0.1);
        let round = ShrinkerProfile::round(2, 0.1, 32).unwrap();
        let p1 = solve_radial(1.0, &c, 1e4).unwrap();
        let r = barrier_check(&p1, &round, Barrier::Sub).unwrap();
        assert_eq!(r.min_residual, 0.0);
        assert_eq!(r.max_residual, 0.0);
        let h = solve_shrinker_curve(0.1, 3, 128).unwrap();
        let sup = h.h.samples().iter().fold(0.0f64, |m, &x| m.max(x * x));
        let inf = h.h.samples().iter().fold(f64::MAX, |m, &x| m.min(x * x));
        let sub = barrier_check(&solve_radial(1.1 * sup, &c, 1e4).unwrap(), &h, Barrier::Sub).unwrap();
        assert!(sub.sufficient_condition && sub.sign_holds, "{sub:?}");
        let low = barrier_check(&solve_radial(0.5 * inf, &c, 1e4).unwrap(), &h, Barrier::Sub).unwrap();
        assert!(!low.sufficient_condition && !low.sign_holds);
        let sup_b = barrier_check(&solve_radial(0.5 * inf, &c, 1e4).unwrap(), &h, Barrier::Super).unwrap();
        assert!(sup_b.sufficient_condition && sup_b.sign_holds);
    }

    #[test]
    fn invalid_inputs() {
        let c = consts(2, 0.1);
        assert!(solve_radial(0.0, &c, 1e4).is_err());
        assert!(solve_radial(-1.0, &c, 1e4).is_err());
        let p = solve_radial(1.0, &c, 100.0).unwrap();
        assert!(matches!(fit_asymptotics(&p), Err(LabError::Precondition(_))));
    }
}
