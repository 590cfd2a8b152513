//! Closed-form constants of the blow-down ansatz `A l^sigma h`, the Jacobi
//! exponents of the linearized translator operator, and the round-sphere
//! spectrum with its `alpha_l` thresholds.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::scalar::Real;

/// Dimension and flow exponent; the translator lives in `R^{n+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams<T> {
    pub n: usize,
    pub alpha: T,
}

impl<T: Real> FlowParams<T> {
    pub fn new(n: usize, alpha: T) -> Result<Self> {
        if n < 2 {
            return Err(LabError::InvalidParams(format!("n = {n} must be at least 2")));
        }
        if !(alpha > T::zero() && alpha < T::lit(0.5)) {
            return Err(LabError::InvalidParams(format!("alpha = {alpha} must lie in (0, 1/2)")));
        }
        Ok(Self { n, alpha })
    }

    /// `alpha < 1/(n+2)`.
    pub fn sub_affine_critical(&self) -> bool {
        self.alpha * T::of(self.n + 2) < T::one()
    }

    fn nf(&self) -> T {
        T::of(self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants<T> {
    pub n: usize,
    pub alpha: T,
    pub sigma: T,
    /// Amplitude `A` of the blow-down translator.
    pub big_a: T,
    /// Gradient-power exponent `(n+2)/2 - 1/(2 alpha)`.
    pub kappa: T,
    /// Drift coefficient of the linearized operator.
    pub c1: T,
    /// Zeroth-order coefficient, equal to `sigma (1 - sigma)`.
    pub c2: T,
}

impl<T: Real> DerivedConstants<T> {
    pub fn params(&self) -> FlowParams<T> {
        FlowParams { n: self.n, alpha: self.alpha }
    }
}

pub fn derive_constants<T: Real>(params: FlowParams<T>) -> Result<DerivedConstants<T>> {
    let p = FlowParams::new(params.n, params.alpha)?;
    let (a, n) = (p.alpha, p.nf());
    let one = T::one();
    let two = T::lit(2.0);
    let d = one + a * (n - two);
    let sigma = (one - two * a) / d;
    // 1 - sigma in the cancellation-free form n alpha / d
    let one_minus_sigma = n * a / d;
    let big_a = ((a - one) / d * sigma.ln() + a / d * one_minus_sigma.ln()).exp();
    let kappa = (n + two) / two - one / (two * a);
    let c1 = ((n - one) - a * (n - two)) / d;
    let c2 = n * a * (one - two * a) / (d * d);
    Ok(DerivedConstants { n: p.n, alpha: a, sigma, big_a, kappa, c1, c2 })
}

/// Recomputes `A` through the literal power form and returns the relative
/// deviation from the log-exp route used by [`derive_constants`].
pub fn amplitude_self_check<T: Real>(c: &DerivedConstants<T>) -> T {
    let one = T::one();
    let d = one + c.alpha * (T::of(c.n) - T::lit(2.0));
    let direct = c.sigma.powf((c.alpha - one) / d) * (one - c.sigma).powf(c.alpha / d);
    ((direct - c.big_a) / c.big_a).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair<T> {
    pub beta_minus: T,
    pub beta_plus: T,
    pub lambda: T,
}

pub const DISC_SLACK: f64 = 1e-12;

/// Roots of `x^2 + c1 x + sigma (1 - sigma) lambda = 0`, ordered.
pub fn beta_exponents<T: Real>(lambda: T, c: &DerivedConstants<T>) -> Result<ExponentPair<T>> {
    let four = T::lit(4.0);
    let mut disc = c.c1 * c.c1 - four * c.c2 * lambda;
    // a double root perturbed by eigenvalue rounding
    let slack = T::lit(DISC_SLACK) * (c.c1 * c.c1 + (four * c.c2 * lambda).abs());
    if disc < T::zero() && disc >= -slack {
        disc = T::zero();
    }
    if disc < T::zero() {
        return Err(LabError::ComplexRoots { lambda: lambda.as_f64(), discriminant: disc.as_f64() });
    }
    let root = disc.sqrt();
    let half = T::lit(0.5);
    // Stable pairing: the larger-magnitude root first, the other from the product.
    let big = -half * (c.c1 + root);
    let prod = c.c2 * lambda;
    let small = if big != T::zero() { prod / big } else { T::zero() };
    let (beta_minus, beta_plus) = if big <= small { (big, small) } else { (small, big) };
    Ok(ExponentPair { beta_minus, beta_plus, lambda })
}

/// `-l(l+n-2) + (n-1)` with multiplicity `C(n+l-1, n-1) - C(n+l-3, n-1)`.
pub fn sphere_eigenvalue(n: usize, ell: usize) -> (i64, u64) {
    let (ni, li) = (n as i64, ell as i64);
    let lambda = -li * (li + ni - 2) + (ni - 1);
    let mult = binom_signed(ni + li - 1, ni - 1) - binom_signed(ni + li - 3, ni - 1);
    (lambda, mult as u64)
}

fn binom_signed(a: i64, b: i64) -> i64 {
    if a < b || a < 0 || b < 0 {
        return 0;
    }
    let b = b.min(a - b);
    let mut acc: i64 = 1;
    for i in 0..b {
        acc = acc * (a - i) / (i + 1);
    }
    acc
}

/// Exact threshold `alpha_l`: 1/2 for l = 1, `1/(l^2 + (n-2) l - (n-2))` for l >= 2.
pub fn alpha_threshold(n: usize, ell: usize) -> Result<Ratio<u64>> {
    match ell {
        0 => Err(LabError::InvalidParams("alpha threshold undefined for l = 0".into())),
        1 => Ok(Ratio::new(1, 2)),
        l => {
            let (l, n) = (l as u64, n as u64);
            Ok(Ratio::new(1, l * l + (n - 2) * l - (n - 2)))
        }
    }
}

/// Relative width of the tie band around a threshold. Floating-point inputs
/// such as `1/6` land a rounding error away from the exact rational.
pub const THRESHOLD_TIE: f64 = 1e-12;

/// Degree `l` with `alpha in [alpha_{l+1}, alpha_l)`. A value within the tie
/// band of `alpha_{l+1}` counts as equal to it.
pub fn threshold_degree<T: Real>(params: FlowParams<T>) -> Result<usize> {
    let p = FlowParams::new(params.n, params.alpha)?;
    let a = p.alpha.as_f64();
    let mut ell = 1;
    loop {
        let t = alpha_threshold(p.n, ell + 1)?;
        let t = *t.numer() as f64 / *t.denom() as f64;
        if a >= t * (1.0 - THRESHOLD_TIE) {
            return Ok(ell);
        }
        ell += 1;
    }
}

/// Closed-form `K = (n+2l-1)/(n+l-1) C(n+l-1, n-1)`.
pub fn jacobi_count_closed_form(n: usize, ell: usize) -> usize {
    let (ni, li) = (n as i64, ell as i64);
    let num = (ni + 2 * li - 1) * binom_signed(ni + li - 1, ni - 1);
    let den = ni + li - 1;
    debug_assert_eq!(num % den, 0);
    (num / den) as usize
}

/// Counts round-sphere modes with `beta+ < sigma`, multiplicity included.
/// A mode sitting on the threshold to within 1e-12 is not counted.
pub fn jacobi_count_enumerated<T: Real>(c: &DerivedConstants<T>) -> Result<usize> {
    let tie = T::lit(1e-12);
    let mut count = 0usize;
    for ell in 0.. {
        let (lambda, mult) = sphere_eigenvalue(c.n, ell);
        let beta = beta_exponents(T::from_i64(lambda).expect("small integer"), c)?;
        if beta.beta_plus < c.sigma - tie {
            count += mult as usize;
        } else {
            break;
        }
    }
    Ok(count)
}

/// Jacobi-field count for the round shrinker; the threshold table and the
/// direct enumeration must agree.
pub fn jacobi_count_round<T: Real>(params: FlowParams<T>) -> Result<usize> {
    let c = derive_constants(params)?;
    let table = jacobi_count_closed_form(params.n, threshold_degree(params)?);
    let enumerated = jacobi_count_enumerated(&c)?;
    if table != enumerated {
        return Err(LabError::CountDisagreement { table, enumerated });
    }
    Ok(table)
}
