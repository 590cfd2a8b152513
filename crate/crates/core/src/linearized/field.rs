//! Fields `w(s, theta)` on the exterior cylinder `[R, S_max] x S^1`, stored
//! as one circle slice per grid value of `s`.

use serde::{Deserialize, Serialize};

use crate::circlefield::CircleField;
use crate::error::{LabError, Result};
use crate::scalar::Real;

pub const MAX_DS: f64 = 0.05;
pub const MIN_SPAN: f64 = 10.0;
pub const DEFAULT_DS: f64 = 0.02;
pub const DEFAULT_SPAN: f64 = 16.0;

/// Uniform grid `s_j = R + j ds`, `j = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExteriorGrid<T> {
    pub r: T,
    pub ds: T,
    pub len: usize,
    /// Angular samples per slice.
    pub n: usize,
}

impl<T: Real> ExteriorGrid<T> {
    pub fn new(r: T, s_max: T, ds: T, n: usize) -> Result<Self> {
        if !(ds > T::zero() && ds <= T::lit(MAX_DS) * (T::one() + T::lit(1e-12))) {
            return Err(LabError::InvalidParams(format!("s-step {ds} must lie in (0, {MAX_DS}]")));
        }
        if !(s_max - r >= T::lit(MIN_SPAN) * (T::one() - T::lit(1e-12))) {
            return Err(LabError::InvalidParams(format!(
                "exterior span {} is shorter than {MIN_SPAN}",
                s_max - r
            )));
        }
        let steps = ((s_max - r) / ds).round().to_usize().expect("finite span");
        CircleField::<T>::zeros(n)?;
        Ok(Self { r, ds, len: steps + 1, n })
    }

    /// `R`, `R + 16`, step 0.02.
    pub fn standard(r: T, n: usize) -> Result<Self> {
        Self::new(r, r + T::lit(DEFAULT_SPAN), T::lit(DEFAULT_DS), n)
    }

    pub fn s(&self, j: usize) -> T {
        self.r + self.ds * T::of(j)
    }

    pub fn s_max(&self) -> T {
        self.s(self.len - 1)
    }

    pub fn s_values(&self) -> Vec<T> {
        (0..self.len).map(|j| self.s(j)).collect()
    }

    fn same_as(&self, other: &Self) -> bool {
        self.len == other.len && self.n == other.n && self.r == other.r && self.ds == other.ds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorField<T> {
    pub grid: ExteriorGrid<T>,
    pub slices: Vec<CircleField<T>>,
    /// Decay rate used by [`ExteriorField::norm`].
    pub gamma: T,
}

/// First derivative, fourth order; one-sided near the ends.
pub fn diff1<T: Real>(v: &[T], h: T) -> Vec<T> {
    let n = v.len();
    assert!(n >= 6, "at least six points needed");
    let c = |x: f64| T::lit(x);
    let inv = (T::lit(12.0) * h).recip();
    let mut out = vec![T::zero(); n];
    let edge0 = |v: &dyn Fn(usize) -> T| {
        (c(-25.0) * v(0) + c(48.0) * v(1) - c(36.0) * v(2) + c(16.0) * v(3) - c(3.0) * v(4)) * inv
    };
    let edge1 = |v: &dyn Fn(usize) -> T| {
        (c(-3.0) * v(0) - c(10.0) * v(1) + c(18.0) * v(2) - c(6.0) * v(3) + v(4)) * inv
    };
    out[0] = edge0(&|i| v[i]);
    out[1] = edge1(&|i| v[i]);
    out[n - 1] = -edge0(&|i| v[n - 1 - i]);
    out[n - 2] = -edge1(&|i| v[n - 1 - i]);
    for j in 2..n - 2 {
        out[j] = (v[j - 2] - c(8.0) * v[j - 1] + c(8.0) * v[j + 1] - v[j + 2]) * inv;
    }
    out
}

/// Second derivative, fourth order; one-sided near the ends.
pub fn diff2<T: Real>(v: &[T], h: T) -> Vec<T> {
    let n = v.len();
    assert!(n >= 6, "at least six points needed");
    let c = |x: f64| T::lit(x);
    let inv = (T::lit(12.0) * h * h).recip();
    let mut out = vec![T::zero(); n];
    let edge0 = |v: &dyn Fn(usize) -> T| {
        (c(45.0) * v(0) - c(154.0) * v(1) + c(214.0) * v(2) - c(156.0) * v(3) + c(61.0) * v(4)
            - c(10.0) * v(5))
            * inv
    };
    let edge1 = |v: &dyn Fn(usize) -> T| {
        (c(10.0) * v(0) - c(15.0) * v(1) - c(4.0) * v(2) + c(14.0) * v(3) - c(6.0) * v(4) + v(5))
            * inv
    };
    out[0] = edge0(&|i| v[i]);
    out[1] = edge1(&|i| v[i]);
    out[n - 1] = edge0(&|i| v[n - 1 - i]);
    out[n - 2] = edge1(&|i| v[n - 1 - i]);
    for j in 2..n - 2 {
        out[j] = (-v[j - 2] + c(16.0) * v[j - 1] - c(30.0) * v[j] + c(16.0) * v[j + 1] - v[j + 2])
            * inv;
    }
    out
}

impl<T: Real> ExteriorField<T> {
    pub fn zeros(grid: ExteriorGrid<T>, gamma: T) -> Result<Self> {
        let z = CircleField::zeros(grid.n)?;
        Ok(Self { grid, slices: vec![z; grid.len], gamma })
    }

    /// Samples `f(s, theta)` on the grid.
    pub fn from_fn(grid: ExteriorGrid<T>, gamma: T, f: impl Fn(T, T) -> T) -> Result<Self> {
        let slices = (0..grid.len)
            .map(|j| {
                let s = grid.s(j);
                CircleField::from_fn(grid.n, |t| f(s, t))
            })
            .collect::<Result<_>>()?;
        Ok(Self { grid, slices, gamma })
    }

    /// `a(s) phi(theta)`.
    pub fn separated(grid: ExteriorGrid<T>, gamma: T, a: impl Fn(T) -> T, phi: &CircleField<T>) -> Result<Self> {
        if phi.n() != grid.n {
            return Err(LabError::GridMismatch("angular profile size differs from grid".into()));
        }
        let slices = (0..grid.len).map(|j| phi.scale(a(grid.s(j)))).collect();
        Ok(Self { grid, slices, gamma })
    }

    pub fn with_gamma(mut self, gamma: T) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn check_grid(&self, other: &Self) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(LabError::GridMismatch("exterior fields live on different grids".into()))
        }
    }

    fn combine(&self, other: &Self, f: impl Fn(&CircleField<T>, &CircleField<T>) -> CircleField<T>) -> Result<Self> {
        self.check_grid(other)?;
        let slices = self.slices.iter().zip(&other.slices).map(|(a, b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, slices, gamma: self.gamma })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a.sub(b))
    }

    pub fn scale(&self, c: T) -> Self {
        Self { grid: self.grid, slices: self.slices.iter().map(|x| x.scale(c)).collect(), gamma: self.gamma }
    }

    /// Values at a fixed angle index as a function of `s`.
    fn column(&self, k: usize) -> Vec<T> {
        self.slices.iter().map(|sl| sl.samples()[k]).collect()
    }

    fn from_columns(&self, cols: &[Vec<T>]) -> Self {
        let slices = (0..self.grid.len)
            .map(|j| CircleField::from_samples(cols.iter().map(|c| c[j]).collect()).expect("grid size"))
            .collect();
        Self { grid: self.grid, slices, gamma: self.gamma }
    }

    pub fn d_s(&self) -> Self {
        let cols: Vec<Vec<T>> = (0..self.grid.n).map(|k| diff1(&self.column(k), self.grid.ds)).collect();
        self.from_columns(&cols)
    }

    pub fn d_ss(&self) -> Self {
        let cols: Vec<Vec<T>> = (0..self.grid.n).map(|k| diff2(&self.column(k), self.grid.ds)).collect();
        self.from_columns(&cols)
    }

    /// Per-slice sup norms.
    pub fn slice_sups(&self) -> Vec<T> {
        self.slices.iter().map(|s| s.sup_norm()).collect()
    }

    /// `max_j e^(-gamma s_j) sup_theta |w(s_j, .)|`.
    pub fn weighted_sup(&self, gamma: T) -> T {
        self.slices
            .iter()
            .enumerate()
            .fold(T::zero(), |m, (j, sl)| m.max((-gamma * self.grid.s(j)).exp() * sl.sup_norm()))
    }

    pub fn norm(&self) -> T {
        self.weighted_sup(self.gamma)
    }

    /// Weighted sup of the value and its first and second `s` and `theta`
    /// derivatives, a discrete stand-in for a weighted `C^2` norm.
    pub fn c2_norm(&self, gamma: T) -> T {
        let ws = self.d_s();
        let wss = self.d_ss();
        let mut out = T::zero();
        for j in 0..self.grid.len {
            let sl = &self.slices[j];
            let total = sl.sup_norm()
                + ws.slices[j].sup_norm()
                + wss.slices[j].sup_norm()
                + sl.first_derivative().sup_norm()
                + sl.second_derivative().sup_norm();
            out = out.max((-gamma * self.grid.s(j)).exp() * total);
        }
        out
    }

    /// Slice at `s` by 6-point Lagrange interpolation in `s`, together with
    /// its interpolated `s`-derivative.
    pub fn interpolate(&self, s: T) -> Result<(CircleField<T>, CircleField<T>)> {
        let g = &self.grid;
        let tol = g.ds * T::lit(1e-9);
        if s < g.r - tol || s > g.s_max() + tol {
            return Err(LabError::GridMismatch(format!("s = {s} lies outside [{}, {}]", g.r, g.s_max())));
        }
        let x = ((s - g.r) / g.ds).max(T::zero());
        let base = x.floor().to_usize().expect("finite").min(g.len - 1);
        let start = base.saturating_sub(2).min(g.len - 6);
        let nodes: Vec<T> = (0..6).map(|i| T::of(start + i)).collect();
        let mut wv = [T::zero(); 6];
        let mut wd = [T::zero(); 6];
        for i in 0..6 {
            let mut denom = T::one();
            for m in 0..6 {
                if m != i {
                    denom = denom * (nodes[i] - nodes[m]);
                }
            }
            let mut prod = T::one();
            for m in 0..6 {
                if m != i {
                    prod = prod * (x - nodes[m]);
                }
            }
            wv[i] = prod / denom;
            let mut dsum = T::zero();
            for skip in 0..6 {
                if skip == i {
                    continue;
                }
                let mut p = T::one();
                for m in 0..6 {
                    if m != i && m != skip {
                        p = p * (x - nodes[m]);
                    }
                }
                dsum = dsum + p;
            }
            wd[i] = dsum / denom / g.ds;
        }
        let mut val = CircleField::zeros(g.n)?;
        let mut der = CircleField::zeros(g.n)?;
        for i in 0..6 {
            val.axpy(wv[i], &self.slices[start + i]);
            der.axpy(wd[i], &self.slices[start + i]);
        }
        Ok((val, der))
    }
}

/// Least-squares slope of `ln y` against `x` over positive entries.
pub fn log_linear_rate<T: Real>(x: &[T], y: &[T]) -> Option<T> {
    let pts: Vec<(T, T)> = x.iter().zip(y).filter(|(_, &v)| v > T::zero()).map(|(&a, &b)| (a, b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = T::of(pts.len());
    let mx = pts.iter().fold(T::zero(), |a, p| a + p.0) / k;
    let my = pts.iter().fold(T::zero(), |a, p| a + p.1) / k;
    let sxy = pts.iter().fold(T::zero(), |a, p| a + (p.0 - mx) * (p.1 - my));
    let sxx = pts.iter().fold(T::zero(), |a, p| a + (p.0 - mx) * (p.0 - mx));
    if sxx == T::zero() {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(ExteriorGrid::new(4.0, 14.0, 0.05, 64).is_ok());
        assert!(ExteriorGrid::new(4.0, 13.0, 0.02, 64).is_err());
        assert!(ExteriorGrid::new(4.0, 20.0, 0.1, 64).is_err());
        let g = ExteriorGrid::<f64>::standard(8.0, 64).unwrap();
        assert_eq!(g.len, 801);
        assert!((g.s_max() - 24.0).abs() < 1e-12);
    }

    #[test]
    fn difference_stencils_are_fourth_order() {
        for &h in &[0.02, 0.01] {
            let x: Vec<f64> = (0..50).map(|i| i as f64 * h).collect();
            let v: Vec<f64> = x.iter().map(|t| (1.3 * t).sin()).collect();
            let d1 = diff1(&v, h);
            let d2 = diff2(&v, h);
            let e1 = x.iter().zip(&d1).map(|(t, d)| (d - 1.3 * (1.3 * t).cos()).abs()).fold(0.0, f64::max);
            let e2 = x.iter().zip(&d2).map(|(t, d)| (d + 1.69 * (1.3 * t).sin()).abs()).fold(0.0, f64::max);
            assert!(e1 < 2e-6 * (h / 0.02f64).powi(4), "{e1}");
            assert!(e2 < 2e-5 * (h / 0.02f64).powi(3), "{e2}");
        }
        // exact on quartics
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = x.iter().map(|t| t.powi(4) - 2.0 * t * t).collect();
        let d1 = diff1(&v, 0.1);
        for (t, d) in x.iter().zip(&d1) {
            assert!((d - (4.0 * t.powi(3) - 4.0 * t)).abs() < 1e-10);
        }
    }

    #[test]
    fn interpolation_recovers_smooth_slices() {
        let g = ExteriorGrid::new(2.0, 12.0, 0.05, 32).unwrap();
        let f = ExteriorField::from_fn(g, 0.0, |s: f64, t: f64| (0.3 * s).exp() * t.cos()).unwrap();
        let (v, d) = f.interpolate(7.013).unwrap();
        let exact = CircleField::from_fn(32, |t: f64| (0.3f64 * 7.013).exp() * t.cos()).unwrap();
        assert!(v.sub(&exact).sup_norm() < 1e-10);
        assert!(d.sub(&exact.scale(0.3)).sup_norm() < 1e-8);
        assert!(f.interpolate(12.0).is_ok());
        assert!(f.interpolate(12.5).is_err());
    }

    #[test]
    fn weighted_norms() {
        let g = ExteriorGrid::new(0.0, 10.0, 0.05, 32).unwrap();
        let f = ExteriorField::from_fn(g, 0.5, |s: f64, _| (0.5 * s).exp()).unwrap();
        assert!((f.norm() - 1.0).abs() < 1e-12);
        // value 1, first s-derivative 0.5, second 0.25
        assert!((f.c2_norm(0.5) - 1.75).abs() < 1e-6);
        let rate = log_linear_rate(&g.s_values(), &f.slice_sups()).unwrap();
        assert!((rate - 0.5).abs() < 1e-12);
    }
}
