//! Explicit Runge-Kutta integrators: a fixed-step classic RK4 and an adaptive
//! Dormand-Prince 5(4) stepper with standard step control.

use crate::error::{LabError, Result};
use crate::scalar::Real;

/// One classic fourth-order Runge-Kutta step of size `h`.
pub fn rk4_step<T: Real>(
    rhs: &mut impl FnMut(T, &[T], &mut [T]),
    t: T,
    y: &[T],
    h: T,
) -> Vec<T> {
    let n = y.len();
    let half = T::lit(0.5);
    let mut k1 = vec![T::zero(); n];
    let mut k2 = vec![T::zero(); n];
    let mut k3 = vec![T::zero(); n];
    let mut k4 = vec![T::zero(); n];
    let mut tmp = vec![T::zero(); n];
    rhs(t, y, &mut k1);
    for i in 0..n {
        tmp[i] = y[i] + half * h * k1[i];
    }
    rhs(t + half * h, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = y[i] + half * h * k2[i];
    }
    rhs(t + half * h, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    rhs(t + h, &tmp, &mut k4);
    let sixth = T::one() / T::lit(6.0);
    (0..n)
        .map(|i| y[i] + h * sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]))
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances<T> {
    pub rtol: T,
    pub atol: T,
}

/// Adaptive Dormand-Prince 5(4) stepper. The independent variable may run
/// in either direction; `h` carries the sign.
#[derive(Debug, Clone)]
pub struct Dopri5<T> {
    pub t: T,
    pub y: Vec<T>,
    pub h: T,
    pub tol: Tolerances<T>,
    pub h_min: T,
    pub accepted: usize,
    pub rejected: usize,
    k1: Option<Vec<T>>,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th order weights are the last row of A; error = b5 - b4.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

impl<T: Real> Dopri5<T> {
    pub fn new(t: T, y: Vec<T>, h: T, tol: Tolerances<T>) -> Self {
        Self { t, y, h, tol, h_min: T::lit(1e-14), accepted: 0, rejected: 0, k1: None }
    }

    /// Takes one accepted step, never stepping beyond `t_limit`. The
    /// right-hand side may fail; a failure on a trial stage halves the step.
    pub fn step(
        &mut self,
        rhs: &mut impl FnMut(T, &[T], &mut [T]) -> Result<()>,
        t_limit: T,
    ) -> Result<()> {
        let n = self.y.len();
        let dir = if t_limit >= self.t { T::one() } else { -T::one() };
        let mut h = self.h.abs() * dir;
        let span = t_limit - self.t;
        if (h - span) * dir > T::zero() {
            h = span;
        }
        let k1 = match self.k1.take() {
            Some(k) => k,
            None => {
                let mut k = vec![T::zero(); n];
                rhs(self.t, &self.y, &mut k)?;
                k
            }
        };
        let mut stages: Vec<Vec<T>> = vec![k1; 7];
        let mut tmp = vec![T::zero(); n];
        loop {
            if h.abs() < self.h_min * self.t.abs().max(T::one()) {
                return Err(LabError::StepUnderflow { t: self.t.as_f64() });
            }
            let mut failed = false;
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = self.y[i];
                    for (j, stage) in stages.iter().enumerate().take(s) {
                        let a = A[s][j];
                        if a != 0.0 {
                            acc = acc + h * T::lit(a) * stage[i];
                        }
                    }
                    tmp[i] = acc;
                }
                let mut k = std::mem::take(&mut stages[s]);
                k.resize(n, T::zero());
                if rhs(self.t + T::lit(C[s]) * h, &tmp, &mut k).is_err() {
                    failed = true;
                    stages[s] = k;
                    break;
                }
                stages[s] = k;
            }
            if failed {
                h = h * T::lit(0.5);
                self.rejected += 1;
                continue;
            }
            // tmp now holds the 5th-order solution (FSAL stage 7 input)
            let mut err = T::zero();
            for i in 0..n {
                let mut e = T::zero();
                for (j, stage) in stages.iter().enumerate() {
                    if E[j] != 0.0 {
                        e = e + T::lit(E[j]) * stage[i];
                    }
                }
                let sc = self.tol.atol + self.tol.rtol * self.y[i].abs().max(tmp[i].abs());
                let r = h * e / sc;
                err = err + r * r;
            }
            err = (err / T::of(n.max(1))).sqrt();
            if err.is_nan() {
                h = h * T::lit(0.5);
                self.rejected += 1;
                continue;
            }
            let factor = if err == T::zero() {
                T::lit(5.0)
            } else {
                (T::lit(0.9) * err.powf(T::lit(-0.2))).min(T::lit(5.0)).max(T::lit(0.2))
            };
            if err <= T::one() {
                self.t = self.t + h;
                self.y.copy_from_slice(&tmp);
                self.k1 = Some(stages.swap_remove(6));
                self.accepted += 1;
                // keep the natural step even if this one was clipped at t_limit
                if (h - span).abs() > T::zero() || factor < T::one() {
                    self.h = h.abs() * factor;
                } else {
                    self.h = self.h.abs().max(h.abs() * factor);
                }
                return Ok(());
            }
            h = h * factor.min(T::one());
            self.rejected += 1;
        }
    }

    /// Caps the magnitude of the next step.
    pub fn cap_step(&mut self, h_max: T) {
        if self.h.abs() > h_max {
            self.h = h_max;
        }
    }

    /// Invalidates the cached first stage (after the state was edited).
    pub fn reset_stage(&mut self) {
        self.k1 = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_exponential() {
        let mut f = |_t: f64, y: &[f64], d: &mut [f64]| d[0] = y[0];
        let mut y = vec![1.0];
        let h = 1e-3;
        for i in 0..1000 {
            y = rk4_step(&mut f, i as f64 * h, &y, h);
        }
        assert!((y[0] - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn dopri_harmonic_oscillator_both_directions() {
        let mut f = |_t: f64, y: &[f64], d: &mut [f64]| -> Result<()> {
            d[0] = y[1];
            d[1] = -y[0];
            Ok(())
        };
        let tol = Tolerances { rtol: 1e-12, atol: 1e-12 };
        let mut st = Dopri5::new(0.0, vec![1.0, 0.0], 0.01, tol);
        while st.t < 10.0 {
            st.step(&mut f, 10.0).unwrap();
        }
        assert_eq!(st.t, 10.0);
        assert!((st.y[0] - 10f64.cos()).abs() < 1e-10);
        let mut back = Dopri5::new(10.0, st.y.clone(), 0.01, tol);
        while back.t > 0.0 {
            back.step(&mut f, 0.0).unwrap();
        }
        assert!((back.y[0] - 1.0).abs() < 1e-9 && back.y[1].abs() < 1e-9);
    }

    #[test]
    fn failing_rhs_shrinks_step() {
        // the rhs refuses its second and third evaluations
        let mut calls = 0;
        let mut f = |_t: f64, _y: &[f64], d: &mut [f64]| -> Result<()> {
            calls += 1;
            if calls == 2 || calls == 3 {
                return Err(LabError::Precondition("refused".into()));
            }
            d[0] = 1.0;
            Ok(())
        };
        let tol = Tolerances { rtol: 1e-10, atol: 1e-10 };
        let mut st = Dopri5::new(0.0, vec![0.0], 4.0, tol);
        while st.t < 1.5 {
            st.step(&mut f, 1.5).unwrap();
        }
        assert_eq!(st.rejected, 2);
        assert!((st.y[0] - 1.5).abs() < 1e-14);
    }
}
