//! Real functions on the unit circle, stored as samples at `N` uniform angles
//! `theta_k = 2 pi k / N` and manipulated through the discrete Fourier
//! transform (trigonometric interpolation).
//!
//! The Nyquist mode is treated as `cos(N theta / 2)`: it is dropped by odd
//! derivatives and scaled by `-(N/2)^2` by the second derivative, so every
//! differentiation matrix built from these routines is symmetric.

use std::any::{Any, TypeId};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::scalar::{sup_abs, Real};

/// Default number of samples.
pub const DEFAULT_N: usize = 128;
/// Relative energy allowed in the top quarter of the spectrum before refining.
pub const TOP_QUARTER_TOL: f64 = 1e-10;

type PlanPair<T> = (Arc<dyn Fft<T>>, Arc<dyn Fft<T>>);

fn plans<T: Real>(n: usize) -> PlanPair<T> {
    static CACHE: OnceLock<Mutex<HashMap<(TypeId, usize), Box<dyn Any + Send + Sync>>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("plan cache poisoned");
    let entry = map.entry((TypeId::of::<T>(), n)).or_insert_with(|| {
        let mut planner = FftPlanner::<T>::new();
        let pair: PlanPair<T> = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
        Box::new(pair)
    });
    entry.downcast_ref::<PlanPair<T>>().expect("plan type").clone()
}

fn forward<T: Real>(samples: &[T]) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = samples.iter().map(|&x| Complex::new(x, T::zero())).collect();
    plans::<T>(samples.len()).0.process(&mut buf);
    buf
}

fn inverse_real<T: Real>(mut spectrum: Vec<Complex<T>>) -> Vec<T> {
    let n = spectrum.len();
    plans::<T>(n).1.process(&mut spectrum);
    let scale = T::one() / T::of(n);
    spectrum.into_iter().map(|c| c.re * scale).collect()
}

/// Signed wavenumber of FFT bin `j`; the Nyquist bin reports `+N/2`.
fn wavenumber(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Resamples a spectrum of length `n` onto `m` bins (zero padding or truncation).
/// The Nyquist bin of the shorter grid is split or folded symmetrically.
fn resize_spectrum<T: Real>(spec: &[Complex<T>], m: usize) -> Vec<Complex<T>> {
    let n = spec.len();
    let mut out = vec![Complex::new(T::zero(), T::zero()); m];
    let scale = T::of(m) / T::of(n);
    let keep = n.min(m) / 2;
    for k in 0..keep {
        out[k] = spec[k] * scale;
        if k > 0 {
            out[m - k] = spec[n - k] * scale;
        }
    }
    let half = T::lit(0.5);
    if m > n {
        // cos(n theta / 2) on the coarse grid becomes half +k, half -k.
        let ny = spec[n / 2] * scale * half;
        out[n / 2] = ny;
        out[m - n / 2] = ny;
    } else if m < n {
        let ny = (spec[m / 2] + spec[n - m / 2]) * scale;
        out[m / 2] = Complex::new(ny.re, T::zero());
    } else {
        out[m / 2] = spec[n / 2];
    }
    out
}

/// Real trigonometric coefficients: `f = a0 + sum_k a_k cos k theta + b_k sin k theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigModes<T> {
    pub cos: Vec<T>,
    pub sin: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleField<T> {
    samples: Vec<T>,
}

impl<T: Real> CircleField<T> {
    pub fn from_samples(samples: Vec<T>) -> Result<Self> {
        let n = samples.len();
        if n < 32 || !n.is_power_of_two() {
            return Err(LabError::InvalidParams(format!(
                "circle grid size {n} must be a power of two >= 32"
            )));
        }
        Ok(Self { samples })
    }

    pub fn from_fn(n: usize, f: impl Fn(T) -> T) -> Result<Self> {
        let step = T::lit(2.0) * T::PI() / T::of(n);
        Self::from_samples((0..n).map(|k| f(step * T::of(k))).collect())
    }

    pub fn constant(n: usize, c: T) -> Result<Self> {
        Self::from_samples(vec![c; n])
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::constant(n, T::zero())
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn angle(&self, k: usize) -> T {
        T::lit(2.0) * T::PI() * T::of(k) / T::of(self.n())
    }

    pub fn angles(&self) -> Vec<T> {
        (0..self.n()).map(|k| self.angle(k)).collect()
    }

    pub fn spectrum(&self) -> Vec<Complex<T>> {
        forward(&self.samples)
    }

    pub fn from_spectrum(spec: Vec<Complex<T>>) -> Result<Self> {
        Self::from_samples(inverse_real(spec))
    }

    /// Trigonometric coefficients up to degree `N/2`.
    pub fn modes(&self) -> TrigModes<T> {
        let n = self.n();
        let spec = self.spectrum();
        let inv_n = T::one() / T::of(n);
        let two = T::lit(2.0);
        let mut cos = vec![T::zero(); n / 2 + 1];
        let mut sin = vec![T::zero(); n / 2 + 1];
        cos[0] = spec[0].re * inv_n;
        for k in 1..n / 2 {
            cos[k] = two * spec[k].re * inv_n;
            sin[k] = -two * spec[k].im * inv_n;
        }
        cos[n / 2] = spec[n / 2].re * inv_n;
        TrigModes { cos, sin }
    }

    pub fn from_modes(n: usize, modes: &TrigModes<T>) -> Result<Self> {
        let half = T::lit(0.5);
        let nf = T::of(n);
        let mut spec = vec![Complex::new(T::zero(), T::zero()); n];
        for (k, (&a, &b)) in modes.cos.iter().zip(&modes.sin).enumerate().take(n / 2 + 1) {
            if k == 0 {
                spec[0] = Complex::new(a * nf, T::zero());
            } else if k == n / 2 {
                spec[k] = Complex::new(a * nf, T::zero());
            } else {
                spec[k] = Complex::new(a * nf * half, -b * nf * half);
                spec[n - k] = spec[k].conj();
            }
        }
        Self::from_spectrum(spec)
    }

    fn derivative(&self, order: u32) -> Self {
        let n = self.n();
        let mut spec = self.spectrum();
        for (j, c) in spec.iter_mut().enumerate() {
            let k = wavenumber(j, n);
            let kf = T::from_i64(k).expect("wavenumber");
            if 2 * k.unsigned_abs() as usize == n && order % 2 == 1 {
                *c = Complex::new(T::zero(), T::zero());
                continue;
            }
            // (i k)^order
            let factor = match order % 4 {
                0 => Complex::new(kf.powi(order as i32), T::zero()),
                1 => Complex::new(T::zero(), kf.powi(order as i32)),
                2 => Complex::new(-kf.powi(order as i32), T::zero()),
                _ => Complex::new(T::zero(), -kf.powi(order as i32)),
            };
            *c = *c * factor;
        }
        Self { samples: inverse_real(spec) }
    }

    pub fn first_derivative(&self) -> Self {
        self.derivative(1)
    }

    /// Exact second derivative of the trigonometric interpolant.
    pub fn second_derivative(&self) -> Self {
        self.derivative(2)
    }

    /// `f'' + f`: the one-dimensional tensor `r[f]` for n = 2.
    pub fn r_operator(&self) -> Self {
        self.second_derivative().add(self)
    }

    /// `det r[f]` for n = 2 (a 1x1 determinant).
    pub fn det_r(&self) -> Self {
        self.r_operator()
    }

    /// Trigonometric interpolant evaluated on `m` points (refinement or truncation).
    pub fn resample(&self, m: usize) -> Result<Self> {
        if m == self.n() {
            return Ok(self.clone());
        }
        Self::from_spectrum(resize_spectrum(&self.spectrum(), m))
    }

    /// Zeroes every mode above `cutoff`, and every mode not divisible by `fold`.
    pub fn filtered(&self, cutoff: usize, fold: usize) -> Self {
        let n = self.n();
        let fold = fold.max(1);
        let mut spec = self.spectrum();
        for (j, c) in spec.iter_mut().enumerate() {
            let k = wavenumber(j, n).unsigned_abs() as usize;
            if k > cutoff || !k.is_multiple_of(fold) {
                *c = Complex::new(T::zero(), T::zero());
            }
        }
        Self { samples: inverse_real(spec) }
    }

    /// Relative energy in modes above `3N/8`, i.e. the top quarter of `0..=N/2`.
    pub fn top_quarter_energy(&self) -> T {
        let n = self.n();
        let spec = self.spectrum();
        let lo = 3 * n / 8;
        let mut total = T::zero();
        let mut top = T::zero();
        for (j, c) in spec.iter().enumerate() {
            let e = c.norm_sqr();
            total = total + e;
            if wavenumber(j, n).unsigned_abs() as usize > lo {
                top = top + e;
            }
        }
        if total == T::zero() {
            T::zero()
        } else {
            top / total
        }
    }

    pub fn is_resolved(&self) -> bool {
        self.top_quarter_energy() <= T::lit(TOP_QUARTER_TOL)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { samples: self.samples.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.n(), other.n(), "circle grids differ");
        Self { samples: self.samples.iter().zip(&other.samples).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    pub fn axpy(&mut self, a: T, x: &Self) {
        for (y, &xv) in self.samples.iter_mut().zip(&x.samples) {
            *y = *y + a * xv;
        }
    }

    pub fn min(&self) -> T {
        self.samples.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.samples.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn sup_norm(&self) -> T {
        sup_abs(&self.samples)
    }

    /// Non-integer power computed pointwise after asserting positivity.
    pub fn powf(&self, p: T, what: &'static str) -> Result<Self> {
        let m = self.min();
        if !(m > T::zero()) {
            return Err(LabError::NonPositive { what, min: m.as_f64() });
        }
        Ok(self.map(|x| x.powf(p)))
    }

    /// Plain trapezoidal integral over the circle.
    pub fn integral(&self) -> T {
        let step = T::lit(2.0) * T::PI() / T::of(self.n());
        self.samples.iter().fold(T::zero(), |acc, &x| acc + x) * step
    }
}

/// Evaluates `op` pointwise on the given fields after refining them to `2N`
/// points, then truncates the result back to `N` modes.
pub fn dealiased<T: Real>(
    fields: &[&CircleField<T>],
    op: impl Fn(&[T]) -> T,
) -> Result<CircleField<T>> {
    let n = fields.first().map(|f| f.n()).ok_or_else(|| {
        LabError::InvalidParams("dealiased product needs at least one operand".into())
    })?;
    let fine: Vec<CircleField<T>> =
        fields.iter().map(|f| f.resample(2 * n)).collect::<Result<_>>()?;
    let mut args = vec![T::zero(); fields.len()];
    let samples = (0..2 * n)
        .map(|k| {
            for (a, f) in args.iter_mut().zip(&fine) {
                *a = f.samples[k];
            }
            op(&args)
        })
        .collect();
    CircleField { samples }.resample(n)
}

/// Strictly positive weight defining a weighted L^2 inner product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedInner<T> {
    weight: CircleField<T>,
}

impl<T: Real> WeightedInner<T> {
    pub fn new(weight: CircleField<T>) -> Result<Self> {
        let m = weight.min();
        if !(m > T::zero()) {
            return Err(LabError::NonPositive { what: "weight", min: m.as_f64() });
        }
        Ok(Self { weight })
    }

    pub fn weight(&self) -> &CircleField<T> {
        &self.weight
    }

    /// Trapezoidal value of `int f g w dtheta`.
    pub fn inner(&self, f: &CircleField<T>, g: &CircleField<T>) -> T {
        let step = T::lit(2.0) * T::PI() / T::of(self.weight.n());
        f.samples
            .iter()
            .zip(&g.samples)
            .zip(&self.weight.samples)
            .fold(T::zero(), |acc, ((&a, &b), &w)| acc + a * b * w)
            * step
    }

    pub fn norm(&self, f: &CircleField<T>) -> T {
        self.inner(f, f).sqrt()
    }
}
