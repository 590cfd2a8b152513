//! Spectrum of the linearization `L f = (f'' + f) / W` of the curvature power
//! at a plane shrinker, self-adjoint for the weight `W = (h'' + h)^(1/(1-alpha))`.
//!
//! The problem `f'' + f = lambda W f` is symmetrized with `g = W^(1/2) f` and
//! solved densely.

use serde::{Deserialize, Serialize};

use crate::circlefield::{CircleField, WeightedInner};
use crate::constants::{beta_exponents, derive_constants, DerivedConstants, ExponentPair, FlowParams};
use crate::eigen::{jacobi_eigen, SymMatrix, JACOBI_TOL};
use crate::error::{LabError, Result};
use crate::scalar::Real;
use crate::shrinker::ShrinkerProfile;

/// Relative width within which neighbouring eigenvalues form one cluster.
pub const CLUSTER_TOL: f64 = 1e-8;
/// Band below `sigma` inside which a rate is not counted as a Jacobi field.
pub const COUNT_TIE: f64 = 1e-12;

/// Symmetrized matrix of `L` and the weight it was built from.
#[derive(Debug, Clone)]
pub struct OperatorMatrix<T> {
    pub matrix: SymMatrix<T>,
    pub weight: CircleField<T>,
}

/// `(h'' + h)^(1/(1-alpha))` in the plane; the determinant form is used for
/// any `h`, not only shrinkers.
pub fn weight_of<T: Real>(h: &CircleField<T>, alpha: T) -> Result<CircleField<T>> {
    h.det_r().powf((T::one() - alpha).recip(), "det r[h]")
}

/// `L f = (f'' + f) / W`.
pub fn apply_l<T: Real>(f: &CircleField<T>, weight: &CircleField<T>) -> CircleField<T> {
    f.r_operator().zip_with(weight, |a, w| a / w)
}

pub fn assemble_l<T: Real>(profile: &ShrinkerProfile<T>) -> Result<OperatorMatrix<T>> {
    if profile.n != 2 {
        return Err(LabError::InvalidParams(format!(
            "the angular operator is discretized for curves only (n = {})",
            profile.n
        )));
    }
    let weight = weight_of(&profile.h, profile.alpha)?;
    let n = weight.n();
    let s: Vec<T> = weight.samples().iter().map(|&w| w.sqrt().recip()).collect();
    let mut matrix = SymMatrix::zeros(n);
    let mut unit = vec![T::zero(); n];
    for j in 0..n {
        unit.iter_mut().for_each(|x| *x = T::zero());
        unit[j] = T::one();
        let col = CircleField::from_samples(unit.clone())?.r_operator();
        for (i, &v) in col.samples().iter().enumerate() {
            matrix.set(i, j, s[i] * v * s[j]);
        }
    }
    Ok(OperatorMatrix { matrix, weight })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralData<T> {
    pub consts: DerivedConstants<T>,
    /// Non-increasing eigenvalues.
    pub lambdas: Vec<T>,
    /// Eigenfunctions, orthonormal in the weighted inner product.
    pub phis: Vec<CircleField<T>>,
    pub betas: Vec<ExponentPair<T>>,
    /// Number of modes with `beta+ < sigma`.
    pub k_count: usize,
    pub inner: WeightedInner<T>,
}

impl<T: Real> SpectralData<T> {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn weight(&self) -> &CircleField<T> {
        self.inner.weight()
    }

    /// Keeps the leading `num` pairs (the Jacobi count is unchanged).
    pub fn truncated(&self, num: usize) -> Self {
        let num = num.min(self.len());
        Self {
            consts: self.consts,
            lambdas: self.lambdas[..num].to_vec(),
            phis: self.phis[..num].to_vec(),
            betas: self.betas[..num].to_vec(),
            k_count: self.k_count,
            inner: self.inner.clone(),
        }
    }

    /// Weighted coefficients `<f, phi_j>_h` for every stored mode.
    pub fn project(&self, f: &CircleField<T>) -> Vec<T> {
        self.phis.iter().map(|p| self.inner.inner(f, p)).collect()
    }

    /// `sum_j c_j phi_j`.
    pub fn synthesize(&self, coeffs: &[T]) -> Result<CircleField<T>> {
        let n = self.weight().n();
        let mut out = CircleField::zeros(n)?;
        for (c, p) in coeffs.iter().zip(&self.phis) {
            out.axpy(*c, p);
        }
        Ok(out)
    }
}

/// Reference harmonics `1, cos t, sin t, cos 2t, ...` in tie-break order.
fn harmonics<T: Real>(n: usize) -> Result<Vec<CircleField<T>>> {
    let mut out = vec![CircleField::constant(n, T::one())?];
    for l in 1..=n / 2 {
        let lf = T::of(l);
        out.push(CircleField::from_fn(n, |t| (lf * t).cos())?);
        if l < n / 2 {
            out.push(CircleField::from_fn(n, |t| (lf * t).sin())?);
        }
    }
    Ok(out)
}

fn normalized<T: Real>(f: &CircleField<T>, inner: &WeightedInner<T>) -> CircleField<T> {
    f.scale(inner.norm(f).recip())
}

/// Re-expresses an orthonormal cluster basis by greedily projecting the
/// reference harmonics onto it, best-captured harmonic first.
fn rotate_cluster<T: Real>(
    basis: &[CircleField<T>],
    refs: &[CircleField<T>],
    ref_norms: &[T],
    inner: &WeightedInner<T>,
) -> Vec<CircleField<T>> {
    let mut span: Vec<CircleField<T>> = basis.to_vec();
    let mut out = Vec::with_capacity(basis.len());
    let margin = T::one() + T::lit(1e-9);
    while span.len() > 1 {
        let mut best: Option<(T, Vec<T>)> = None;
        for (r, &rn) in refs.iter().zip(ref_norms) {
            let coeffs: Vec<T> = span.iter().map(|v| inner.inner(v, r) / rn).collect();
            let score = coeffs.iter().fold(T::zero(), |a, &c| a + c * c);
            if best.as_ref().is_none_or(|(b, _)| score > *b * margin) {
                best = Some((score, coeffs));
            }
        }
        let (_, coeffs) = best.expect("reference set is nonempty");
        let mut u = CircleField::zeros(span[0].n()).expect("valid size");
        for (c, v) in coeffs.iter().zip(&span) {
            u.axpy(*c, v);
        }
        let u = normalized(&u, inner);
        // orthonormal complement of u inside the span
        let mut rest: Vec<(T, CircleField<T>)> = span
            .iter()
            .map(|v| {
                let mut r = v.clone();
                r.axpy(-inner.inner(v, &u), &u);
                (inner.norm(&r), r)
            })
            .collect();
        rest.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite norms"));
        rest.pop();
        let mut next: Vec<CircleField<T>> = Vec::with_capacity(rest.len());
        for (_, mut r) in rest {
            for q in &next {
                let c = inner.inner(&r, q);
                r.axpy(-c, q);
            }
            next.push(normalized(&r, inner));
        }
        out.push(u);
        span = next;
    }
    let last = span.pop().expect("one vector left");
    out.push(fix_sign(last, refs, ref_norms, inner));
    out
}

/// Flips `f` so that its largest harmonic projection is positive.
fn fix_sign<T: Real>(
    f: CircleField<T>,
    refs: &[CircleField<T>],
    ref_norms: &[T],
    inner: &WeightedInner<T>,
) -> CircleField<T> {
    let mut best = T::zero();
    for (r, &rn) in refs.iter().zip(ref_norms) {
        let c = inner.inner(&f, r) / rn;
        if c.abs() > best.abs() * (T::one() + T::lit(1e-9)) {
            best = c;
        }
    }
    if best < T::zero() {
        f.scale(-T::one())
    } else {
        f
    }
}

/// All `N` eigenpairs of `L`, ordered and tagged.
pub fn eig_l_full<T: Real>(profile: &ShrinkerProfile<T>) -> Result<SpectralData<T>> {
    let consts = derive_constants(FlowParams::new(profile.n, profile.alpha)?)?;
    let op = assemble_l(profile)?;
    let n = op.weight.n();
    let dec = jacobi_eigen(&op.matrix, T::lit(JACOBI_TOL))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dec.values[b].partial_cmp(&dec.values[a]).expect("finite eigenvalues"));
    let inner = WeightedInner::new(op.weight.clone())?;
    let dtheta = T::lit(2.0) * T::PI() / T::of(n);
    let scale = dtheta.sqrt().recip();
    let inv_sqrt_w: Vec<T> = op.weight.samples().iter().map(|&w| w.sqrt().recip()).collect();
    let raw: Vec<CircleField<T>> = order
        .iter()
        .map(|&k| {
            let v = &dec.vectors[k];
            CircleField::from_samples((0..n).map(|i| v[i] * inv_sqrt_w[i] * scale).collect())
        })
        .collect::<Result<_>>()?;
    let lambdas: Vec<T> = order.iter().map(|&k| dec.values[k]).collect();

    let refs = harmonics::<T>(n)?;
    let ref_norms: Vec<T> = refs.iter().map(|r| inner.norm(r)).collect();
    let mut phis = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let tol = T::lit(CLUSTER_TOL) * lambdas[i].abs().max(T::one());
        let mut j = i + 1;
        while j < n && (lambdas[j] - lambdas[i]).abs() <= tol {
            j += 1;
        }
        if j - i == 1 {
            phis.push(fix_sign(raw[i].clone(), &refs, &ref_norms, &inner));
        } else {
            phis.extend(rotate_cluster(&raw[i..j], &refs, &ref_norms, &inner));
        }
        i = j;
    }
    let betas: Vec<ExponentPair<T>> =
        lambdas.iter().map(|&l| beta_exponents(l, &consts)).collect::<Result<_>>()?;
    let cut = consts.sigma - T::lit(COUNT_TIE);
    let k_count = betas.iter().filter(|b| b.beta_plus < cut).count();
    Ok(SpectralData { consts, lambdas, phis, betas, k_count, inner })
}

/// The leading `num` eigenpairs; `num` may not exceed `N/2`.
pub fn eig_l<T: Real>(profile: &ShrinkerProfile<T>, num: usize) -> Result<SpectralData<T>> {
    let half = profile.h.n() / 2;
    if num > half {
        return Err(LabError::InvalidParams(format!("{num} eigenpairs requested, at most {half} resolved")));
    }
    Ok(eig_l_full(profile)?.truncated(num))
}

/// `(c0, c1, ..., cn)` with `c0 = -|h|_h/(A sigma)` and `ci = |x_i|_h` for the
/// coordinate functions `cos t`, `sin t`.
pub fn translation_norms<T: Real>(profile: &ShrinkerProfile<T>, consts: &DerivedConstants<T>) -> Result<Vec<T>> {
    let inner = WeightedInner::new(weight_of(&profile.h, profile.alpha)?)?;
    let n = profile.h.n();
    let c0 = -inner.norm(&profile.h) / (consts.big_a * consts.sigma);
    let x1 = CircleField::from_fn(n, |t: T| t.cos())?;
    let x2 = CircleField::from_fn(n, |t: T| t.sin())?;
    Ok(vec![c0, inner.norm(&x1), inner.norm(&x2)])
}
