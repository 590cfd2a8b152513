//! Cyclic Jacobi eigensolver for dense real symmetric matrices.

use crate::error::{LabError, Result};
use crate::scalar::Real;

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.n {
            for j in 0..i {
                m = m.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        m
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().fold(T::zero(), |a, &x| a + x * x).sqrt()
    }

    fn off_diagonal(&self) -> T {
        let mut s = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    let x = self.get(i, j);
                    s = s + x * x;
                }
            }
        }
        s.sqrt()
    }
}

/// Eigenvalues and column eigenvectors (`vectors[k]` is the k-th eigenvector),
/// unsorted.
#[derive(Debug, Clone)]
pub struct EigenDecomposition<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
    pub sweeps: usize,
}

pub const JACOBI_TOL: f64 = 1e-13;
const MAX_SWEEPS: usize = 60;

/// Diagonalizes a symmetric matrix by cyclic Jacobi rotations until the
/// off-diagonal norm falls below `tol` times the Frobenius norm.
pub fn jacobi_eigen<T: Real>(matrix: &SymMatrix<T>, tol: T) -> Result<EigenDecomposition<T>> {
    let n = matrix.n;
    let mut a = matrix.clone();
    // symmetrize exactly
    for i in 0..n {
        for j in 0..i {
            let m = (a.get(i, j) + a.get(j, i)) * T::lit(0.5);
            a.set(i, j, m);
            a.set(j, i, m);
        }
    }
    // v stored row-major with v[k*n + i] = component i of eigenvector k
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let scale = a.frobenius().max(T::min_positive_value());
    let target = tol * scale;
    let mut sweeps = 0;
    let mut off = a.off_diagonal();
    while off > target {
        if sweeps >= MAX_SWEEPS {
            return Err(LabError::EigenNoConvergence { sweeps, off: off.as_f64() });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                rotate(&mut a, p, q, c, s);
                let (vp, vq) = (p * n, q * n);
                for i in 0..n {
                    let x = v[vp + i];
                    let y = v[vq + i];
                    v[vp + i] = c * x - s * y;
                    v[vq + i] = s * x + c * y;
                }
            }
        }
        off = a.off_diagonal();
    }
    let values = (0..n).map(|i| a.get(i, i)).collect();
    let vectors = (0..n).map(|k| v[k * n..(k + 1) * n].to_vec()).collect();
    Ok(EigenDecomposition { values, vectors, sweeps })
}

/// Applies the rotation `J^T A J` in the (p, q) plane.
fn rotate<T: Real>(a: &mut SymMatrix<T>, p: usize, q: usize, c: T, s: T) {
    let n = a.n;
    for k in 0..n {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.set(k, p, c * akp - s * akq);
        a.set(k, q, s * akp + c * akq);
    }
    for k in 0..n {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.set(p, k, c * apk - s * aqk);
        a.set(q, k, s * apk + c * aqk);
    }
}
