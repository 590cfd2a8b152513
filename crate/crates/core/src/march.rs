//! Marching translator curves `S(l, theta)` in the height variable `l`:
//! `S_ll = -(1 + S_l^2)^kappa S_l^(1/alpha) (S_thth + S)`.
//!
//! The problem is elliptic, so marching in either direction amplifies mode
//! `j` like `l^beta+_j`. The perturbation `w = S - A l^sigma h` is therefore
//! kept in the span of the eigenfunctions of `L` with `beta+_j <= beta_cap`
//! (a Galerkin march); `h` itself keeps its full resolution.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::circlefield::{dealiased, CircleField};
use crate::constants::{derive_constants, DerivedConstants, FlowParams};
use crate::error::{LabError, Result};
use crate::linearized::field::{log_linear_rate, ExteriorField};
use crate::linearized::nonlinear::translator_residual_field;
use crate::ode::{Dopri5, Tolerances};
use crate::radial::radial_speed;
use crate::scalar::Real;
use crate::shrinker::ShrinkerProfile;
use crate::spectrum::{eig_l_full, SpectralData};

pub const MARCH_TOL: f64 = 1e-12;
/// Steps are capped at `l / STEP_DIVISOR`.
pub const STEP_DIVISOR: f64 = 200.0;
pub const CHECKPOINTS_PER_DECADE: usize = 10;
pub const BETA_CAP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarchOptions<T> {
    pub rtol: T,
    /// Absolute tolerance relative to `A l_0^sigma`.
    pub atol: T,
    pub step_divisor: T,
    pub checkpoints_per_decade: usize,
}

impl<T: Real> Default for MarchOptions<T> {
    fn default() -> Self {
        Self {
            rtol: T::lit(MARCH_TOL),
            atol: T::lit(MARCH_TOL),
            step_divisor: T::lit(STEP_DIVISOR),
            checkpoints_per_decade: CHECKPOINTS_PER_DECADE,
        }
    }
}

/// Shrinker profile plus the retained eigenfunctions of `L`.
#[derive(Debug, Clone)]
pub struct MarchBasis<T> {
    pub h: CircleField<T>,
    pub consts: DerivedConstants<T>,
    pub beta_cap: T,
    pub modes: SpectralData<T>,
}

impl<T: Real> MarchBasis<T> {
    pub fn new(profile: &ShrinkerProfile<T>, beta_cap: T) -> Result<Self> {
        if profile.n != 2 {
            return Err(LabError::InvalidParams(format!(
                "marching is implemented for curves (n = 2), got n = {}",
                profile.n
            )));
        }
        let consts = derive_constants(FlowParams::new(profile.n, profile.alpha)?)?;
        let full = eig_l_full(profile)?;
        let keep = full.betas.iter().take_while(|b| b.beta_plus <= beta_cap).count();
        if keep == 0 {
            return Err(LabError::InvalidParams(format!("beta_cap = {beta_cap} keeps no modes")));
        }
        Ok(Self { h: profile.h.clone(), consts, beta_cap, modes: full.truncated(keep) })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn n(&self) -> usize {
        self.h.n()
    }

    /// `A l^sigma h` and its first two `l`-derivatives.
    fn blow_down(&self, l: T) -> (CircleField<T>, CircleField<T>, CircleField<T>) {
        let c = &self.consts;
        let main = c.big_a * l.powf(c.sigma);
        let d1 = c.sigma * main / l;
        let d2 = (c.sigma - T::one()) * d1 / l;
        (self.h.scale(main), self.h.scale(d1), self.h.scale(d2))
    }

    /// Galerkin projection of `S` onto the blow-down plus retained modes.
    pub fn project_state(&self, l: T, s: &CircleField<T>, s_l: &CircleField<T>) -> Result<(CircleField<T>, CircleField<T>)> {
        let (b0, b1, _) = self.blow_down(l);
        let a = self.modes.project(&s.sub(&b0));
        let da = self.modes.project(&s_l.sub(&b1));
        Ok((b0.add(&self.modes.synthesize(&a)?), b1.add(&self.modes.synthesize(&da)?)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub l: T,
    pub s: CircleField<T>,
    pub s_l: CircleField<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarchState<T> {
    pub l: T,
    pub s: CircleField<T>,
    pub s_l: CircleField<T>,
    pub history: Vec<Checkpoint<T>>,
}

impl<T: Real> MarchState<T> {
    pub fn new(l: T, s: CircleField<T>, s_l: CircleField<T>) -> Result<Self> {
        if !(l > T::zero()) || !l.is_finite() {
            return Err(LabError::InvalidParams(format!("march needs l > 0, got {l}")));
        }
        if s.n() != s_l.n() {
            return Err(LabError::GridMismatch(format!("S has {} samples, S_l has {}", s.n(), s_l.n())));
        }
        Ok(Self { l, s, s_l, history: Vec::new() })
    }

    /// Fails with the first violated invariant (graphicality, then convexity).
    pub fn check_invariants(&self) -> Result<()> {
        check_slices(self.l, &self.s, &self.s_l)
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint { l: self.l, s: self.s.clone(), s_l: self.s_l.clone() }
    }

    /// Rigid translation in the plane, `S + a cos + b sin`.
    pub fn translated(&self, a: T, b: T) -> Result<Self> {
        let shift = CircleField::from_fn(self.s.n(), |t: T| a * t.cos() + b * t.sin())?;
        let mut out = self.clone();
        out.s = out.s.add(&shift);
        for c in &mut out.history {
            c.s = c.s.add(&shift);
        }
        Ok(out)
    }
}

fn check_slices<T: Real>(l: T, s: &CircleField<T>, s_l: &CircleField<T>) -> Result<()> {
    if !(s_l.min() > T::zero()) {
        return Err(LabError::GraphicalityLost { l: l.as_f64() });
    }
    if !(s.r_operator().min() > T::zero()) {
        // the exterior picture reports s = ln l
        return Err(LabError::ConvexityLost { s: l.ln().as_f64() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarchOutcome<T> {
    pub state: MarchState<T>,
    pub direction: Direction,
    /// Set when the march stopped short of the target; `state` is the last
    /// accepted state.
    pub breakdown: Option<LabError>,
    pub accepted: usize,
    pub rejected: usize,
}

impl<T> MarchOutcome<T> {
    pub fn completed(&self) -> bool {
        self.breakdown.is_none()
    }
}

fn checkpoint_levels<T: Real>(from: T, to: T, per_decade: usize) -> Vec<T> {
    let decades = (to / from).log10();
    let per = T::of(per_decade.max(1));
    let count = (decades.abs() * per * (T::one() - T::lit(1e-12))).floor().to_usize().unwrap_or(0);
    let sign = if to >= from { T::one() } else { -T::one() };
    let mut out: Vec<T> =
        (1..=count).map(|k| from * T::lit(10.0).powf(sign * T::of(k) / per)).collect();
    if out.last().is_none_or(|&x| (x - to).abs() > T::lit(1e-12) * to) {
        out.push(to);
    }
    out
}

/// `S_ll` from the equation.
pub fn translator_s_ll<T: Real>(s: &CircleField<T>, s_l: &CircleField<T>, consts: &DerivedConstants<T>) -> Result<CircleField<T>> {
    let rs = s.r_operator();
    dealiased(&[s_l, &rs], |v| -radial_speed(v[0], T::one(), consts) * v[1])
}

fn unpack<T: Real>(basis: &MarchBasis<T>, l: T, y: &[T]) -> Result<(CircleField<T>, CircleField<T>)> {
    let k = basis.len();
    let (b0, b1, _) = basis.blow_down(l);
    Ok((b0.add(&basis.modes.synthesize(&y[..k])?), b1.add(&basis.modes.synthesize(&y[k..])?)))
}

/// Marches `init` to `l_target`, recording checkpoints at
/// `l_0 10^(+-k/per_decade)`. Loss of graphicality or convexity, or step
/// underflow, ends the march early with the reason in `breakdown`. The
/// initial state is first projected onto the basis.
pub fn march<T: Real>(
    init: &MarchState<T>,
    l_target: T,
    basis: &MarchBasis<T>,
    opts: &MarchOptions<T>,
) -> Result<MarchOutcome<T>> {
    if !(l_target > T::zero()) || !l_target.is_finite() {
        return Err(LabError::InvalidParams(format!("l_target must be positive, got {l_target}")));
    }
    if init.s.n() != basis.n() {
        return Err(LabError::GridMismatch(format!("state has {} samples, basis {}", init.s.n(), basis.n())));
    }
    let consts = &basis.consts;
    let k = basis.len();
    let mut state = init.clone();
    let (s0, sl0) = basis.project_state(state.l, &state.s, &state.s_l)?;
    state.s = s0;
    state.s_l = sl0;
    state.check_invariants()?;
    state.history.push(state.checkpoint());

    let direction = if l_target >= state.l { Direction::Up } else { Direction::Down };
    let (b0, b1, _) = basis.blow_down(state.l);
    let mut y0 = basis.modes.project(&state.s.sub(&b0));
    y0.extend(basis.modes.project(&state.s_l.sub(&b1)));
    let scale = consts.big_a * state.l.powf(consts.sigma);
    let tol = Tolerances { rtol: opts.rtol, atol: opts.atol * scale.max(T::one()) };
    let mut ode = Dopri5::new(state.l, y0, state.l / (opts.step_divisor * T::lit(10.0)), tol);
    let last_err: RefCell<Option<LabError>> = RefCell::new(None);
    let mut f = |l: T, y: &[T], dy: &mut [T]| -> Result<()> {
        let r: Result<()> = (|| {
            let (s, s_l) = unpack(basis, l, y)?;
            check_slices(l, &s, &s_l)?;
            let (_, _, b2) = basis.blow_down(l);
            let w_ll = translator_s_ll(&s, &s_l, consts)?.sub(&b2);
            dy[..k].copy_from_slice(&y[k..]);
            dy[k..].copy_from_slice(&basis.modes.project(&w_ll));
            Ok(())
        })();
        if let Err(e) = &r {
            *last_err.borrow_mut() = Some(e.clone());
        }
        r
    };

    let mut breakdown = None;
    'levels: for target in checkpoint_levels(state.l, l_target, opts.checkpoints_per_decade) {
        while (ode.t - target).abs() > T::zero() {
            ode.cap_step(ode.t / opts.step_divisor);
            if let Err(e) = ode.step(&mut f, target) {
                breakdown = Some(match e {
                    LabError::StepUnderflow { .. } => last_err.borrow_mut().take().unwrap_or(e),
                    other => other,
                });
                break 'levels;
            }
            last_err.borrow_mut().take();
            state.l = ode.t;
            let (s, s_l) = unpack(basis, ode.t, &ode.y)?;
            state.s = s;
            state.s_l = s_l;
            if let Err(e) = state.check_invariants() {
                breakdown = Some(e);
                break 'levels;
            }
        }
        state.history.push(state.checkpoint());
    }
    Ok(MarchOutcome { state, direction, breakdown, accepted: ode.accepted, rejected: ode.rejected })
}

/// Initial data at `l_start` from an exterior solution `w(s, theta)`:
/// `S = A l^sigma h + w(ln l)`, `S_l = sigma A l^(sigma-1) h + w_s / l`.
pub fn seed_from_exterior<T: Real>(
    w: &ExteriorField<T>,
    h: &CircleField<T>,
    consts: &DerivedConstants<T>,
    l_start: T,
) -> Result<MarchState<T>> {
    if !(l_start > T::zero()) {
        return Err(LabError::InvalidParams(format!("l_start must be positive, got {l_start}")));
    }
    let h = if h.n() == w.grid.n { h.clone() } else { h.resample(w.grid.n)? };
    let (v, v_s) = w.interpolate(l_start.ln())?;
    let main = consts.big_a * l_start.powf(consts.sigma);
    let s = h.scale(main).add(&v);
    let s_l = h.scale(consts.sigma * main / l_start).add(&v_s.scale(T::one() / l_start));
    MarchState::new(l_start, s, s_l)
}

/// Blow-down initial data `S = A l^sigma h`, `S_l = sigma A l^(sigma-1) h`.
pub fn seed_blow_down<T: Real>(h: &CircleField<T>, consts: &DerivedConstants<T>, l_start: T) -> Result<MarchState<T>> {
    let main = consts.big_a * l_start.powf(consts.sigma);
    MarchState::new(l_start, h.scale(main), h.scale(consts.sigma * main / l_start))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport<T> {
    pub l: Vec<T>,
    /// `sup |S / (A l^sigma) - h|` at each checkpoint.
    pub d: Vec<T>,
    /// Least-squares slope of `ln d` against `ln l`.
    pub rate: Option<T>,
    /// Checkpoints at whole decades from the first one.
    pub decade_l: Vec<T>,
    pub decade_d: Vec<T>,
    pub decreasing_each_decade: bool,
}

/// Level-set convergence of the rescaled curves towards `h`.
pub fn convergence_diagnostics<T: Real>(
    state: &MarchState<T>,
    h: &CircleField<T>,
    consts: &DerivedConstants<T>,
) -> Result<ConvergenceReport<T>> {
    let hist = &state.history;
    if hist.is_empty() {
        return Err(LabError::Precondition("march history is empty".into()));
    }
    let h = if h.n() == hist[0].s.n() { h.clone() } else { h.resample(hist[0].s.n())? };
    let l: Vec<T> = hist.iter().map(|c| c.l).collect();
    let d: Vec<T> = hist
        .iter()
        .map(|c| c.s.scale(T::one() / (consts.big_a * c.l.powf(consts.sigma))).sub(&h).sup_norm())
        .collect();
    let ln_l: Vec<T> = l.iter().map(|x| x.ln()).collect();
    let rate = log_linear_rate(&ln_l, &d);
    let l0 = l[0];
    let mut decade_l = Vec::new();
    let mut decade_d = Vec::new();
    for (&li, &di) in l.iter().zip(&d) {
        let k = (li / l0).log10();
        if (k - k.round()).abs() < T::lit(1e-9) {
            decade_l.push(li);
            decade_d.push(di);
        }
    }
    let decreasing_each_decade = decade_d.len() >= 2 && decade_d.windows(2).all(|w| w[1] < w[0]);
    Ok(ConvergenceReport { l, d, rate, decade_l, decade_d, decreasing_each_decade })
}

/// Sup-norm differences `sup |S_a - S_b|` at the checkpoints both runs share.
pub fn paired_differences<T: Real>(a: &MarchState<T>, b: &MarchState<T>) -> Vec<(T, T)> {
    let mut out = Vec::new();
    for ca in &a.history {
        if let Some(cb) = b.history.iter().find(|c| (c.l - ca.l).abs() <= T::lit(1e-12) * ca.l) {
            out.push((ca.l, ca.s.sub(&cb.s).sup_norm()));
        }
    }
    out
}

/// Growth exponent of `sup |S_a - S_b|` against `l` over `[l_lo, l_hi]`.
pub fn difference_exponent<T: Real>(a: &MarchState<T>, b: &MarchState<T>, l_lo: T, l_hi: T) -> Result<T> {
    let tol = T::lit(1e-9);
    let pts: Vec<(T, T)> = paired_differences(a, b)
        .into_iter()
        .filter(|&(l, _)| l >= l_lo * (T::one() - tol) && l <= l_hi * (T::one() + tol))
        .collect();
    let x: Vec<T> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<T> = pts.iter().map(|p| p.1).collect();
    log_linear_rate(&x, &y)
        .ok_or_else(|| LabError::Precondition(format!("only {} usable paired checkpoints in range", pts.len())))
}

/// Fit of a paired run against a Jacobi exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedReport<T> {
    pub exponent: T,
    pub beta_plus: T,
    pub relative_error: T,
    /// `D(l_hi) / l_hi^beta+`.
    pub amplitude: T,
    /// `beta+` minus the log-slope of `|D - amplitude l^beta+|`, when that
    /// remainder is above rounding.
    pub subleading_gap: Option<T>,
}

pub fn paired_report<T: Real>(a: &MarchState<T>, b: &MarchState<T>, beta_plus: T, l_lo: T, l_hi: T) -> Result<PairedReport<T>> {
    let exponent = difference_exponent(a, b, l_lo, l_hi)?;
    let tol = T::lit(1e-9);
    let pts: Vec<(T, T)> = paired_differences(a, b)
        .into_iter()
        .filter(|&(l, _)| l >= l_lo * (T::one() - tol) && l <= l_hi * (T::one() + tol))
        .collect();
    let &(l_top, d_top) = pts.last().expect("difference_exponent needs two points");
    let amplitude = d_top / l_top.powf(beta_plus);
    let floor = T::lit(1e-9) * d_top;
    let (x, y): (Vec<T>, Vec<T>) = pts
        .iter()
        .map(|&(l, d)| (l.ln(), (d - amplitude * l.powf(beta_plus)).abs()))
        .filter(|&(_, r)| r > floor)
        .unzip();
    let subleading_gap = log_linear_rate(&x, &y).map(|slope| beta_plus - slope);
    Ok(PairedReport {
        exponent,
        beta_plus,
        relative_error: ((exponent - beta_plus) / beta_plus).abs(),
        amplitude,
        subleading_gap,
    })
}

/// Relative translator residual on each exterior slice for
/// `S = A l^sigma h + w(ln l)`: `sup |l^2 R| / (c2 A l^sigma sup h)`. The two
/// slices at each end carry one-sided difference error and are skipped.
pub fn slice_residuals<T: Real>(w: &ExteriorField<T>, h: &CircleField<T>, consts: &DerivedConstants<T>) -> Result<Vec<(T, T)>> {
    let h = if h.n() == w.grid.n { h.clone() } else { h.resample(w.grid.n)? };
    let r = translator_residual_field(w, &h, consts)?;
    let len = w.grid.len;
    Ok((2..len.saturating_sub(2))
        .map(|j| {
            let s = w.grid.s(j);
            let scale = consts.c2 * consts.big_a * (consts.sigma * s).exp() * h.sup_norm();
            (s.exp(), r.slices[j].sup_norm() / scale)
        })
        .collect())
}
