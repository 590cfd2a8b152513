//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use gcf_lab::constants::amplitude_self_check;
use gcf_lab::linearized::{apply_cal_l, ExteriorField, ExteriorGrid};
use gcf_lab::march::{convergence_diagnostics, march, paired_report, seed_from_exterior, MarchBasis, MarchOptions};
use gcf_lab::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn consts(n: usize, alpha: f64) -> Result<DerivedConstants64> {
    derive_constants(FlowParams::new(n, alpha)?)
}

fn constants_identities() -> Result<Outcome> {
    let mut rng = StdRng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..300 {
        let n = 2 + i % 6;
        let alpha: f64 = rng.gen_range(1e-3..0.499);
        let c = consts(n, alpha)?;
        let d = 1.0 + alpha * (n as f64 - 2.0);
        worst = worst.max((c.c2 - c.sigma * (1.0 - c.sigma)).abs());
        worst = worst.max((c.c1 - ((1.0 - c.sigma) / alpha - 1.0)).abs());
        worst = worst.max((c.sigma - (1.0 - 2.0 * alpha) / d).abs());
        worst = worst.max(amplitude_self_check(&c));
        for ell in 0..4 {
            let (lam, _) = sphere_eigenvalue(n, ell);
            let b = beta_exponents(lam as f64, &c)?;
            worst = worst.max((b.beta_plus + b.beta_minus + c.c1).abs() / c.c1.abs().max(1.0));
            worst = worst.max((b.beta_plus * b.beta_minus - c.c2 * lam as f64).abs() / (c.c2 * (lam as f64).abs()).max(1.0));
        }
    }
    let mut half = 0.0f64;
    for n in 2..40 {
        let c = consts(n, 1.0 / (n as f64 + 2.0))?;
        half = half.max((c.sigma - 0.5).abs());
    }
    outcome(worst < 1e-12 && half < 1e-15, format!("max identity defect {worst:.2e}, |sigma - 1/2| at critical alpha {half:.2e}"))
}

fn round_spectrum() -> Result<Outcome> {
    let spec = eig_l_full(&ShrinkerProfile::round(2, 0.1, 32)?)?;
    let mut expect = vec![1.0];
    for ell in 1..6 {
        let lam = 1.0 - (ell * ell) as f64;
        expect.extend([lam, lam]);
    }
    let eig_err = expect.iter().zip(&spec.lambdas).map(|(e, l)| (e - l).abs()).fold(0.0, f64::max);
    let mut mismatches = Vec::new();
    for k in 0..=20 {
        let alpha = 0.05 + 0.01 * k as f64;
        let p = FlowParams::new(2, alpha)?;
        let ell = threshold_degree(p)?;
        let table = 2 * ell + 1;
        let s = eig_l_full(&ShrinkerProfile::round(2, alpha, 32)?)?;
        if s.k_count != table || jacobi_count_round(p)? != table {
            mismatches.push(format!("alpha {alpha:.2}: eig {} table {table}", s.k_count));
        }
    }
    outcome(
        eig_err < 1e-8 && mismatches.is_empty(),
        format!("eigenvalue error {eig_err:.2e}, K staircase mismatches {mismatches:?}"),
    )
}

fn shrinker() -> Result<Outcome> {
    let p = solve_shrinker_curve(0.1, 3, 128)?;
    let res = shrinker_residual(&p.h, 0.1)?.sup_norm();
    let above = solve_shrinker_curve(0.2, 3, 128);
    let rejects = matches!(above, Err(LabError::NoNontrivialSolution { .. }));
    outcome(res < 1e-8 && rejects, format!("3-fold residual {res:.2e}, alpha = 0.2 gives {:?}", above.err()))
}

fn nontrivial_spectrum() -> Result<Outcome> {
    let p: ShrinkerProfile64 = solve_shrinker_curve(0.1, 3, 128)?;
    let s = eig_l_full(&p)?;
    let s2 = eig_l_full(&solve_shrinker_curve(0.1, 3, 256)?)?;
    let top = (s.lambdas[0] - 1.0).abs().max(s.lambdas[1].abs()).max(s.lambdas[2].abs());
    let rest = s.lambdas[3];
    // cos and sin lie in the span of phi_1, phi_2
    let mut coord = 0.0f64;
    for f in [
        CircleField::from_fn(128, |t: f64| t.cos())?,
        CircleField::from_fn(128, |t: f64| t.sin())?,
    ] {
        let mut r = f.clone();
        for phi in &s.phis[1..3] {
            r.axpy(-s.inner.inner(&f, phi), phi);
        }
        coord = coord.max(s.inner.norm(&r) / s.inner.norm(&f));
    }
    let stable = (0..12).map(|j| (s.lambdas[j] - s2.lambdas[j]).abs() / s.lambdas[j].abs().max(1.0)).fold(0.0, f64::max);
    outcome(
        top < 1e-6 && rest < -1e-6 && coord < 1e-6 && stable < 1e-9,
        format!("top-three defect {top:.2e}, lambda_3 = {rest:.4}, coordinate defect {coord:.2e}, N-doubling change {stable:.2e}"),
    )
}

fn radial_exactness() -> Result<Outcome> {
    let c = consts(2, 0.25)?;
    let p = solve_radial(1.0, &c, 1e6)?;
    let exact = p
        .l
        .iter()
        .zip(&p.f)
        .filter(|(&l, _)| l >= 1.0)
        .map(|(&l, &f)| (f / (2.0 * l).sqrt() - 1.0).abs())
        .fold(0.0, f64::max);
    let c1 = consts(2, 0.1)?;
    let fit = fit_asymptotics(&solve_radial(1.0, &c1, 1e6)?)?;
    let a_err = ((fit.a_fit - c1.big_a) / c1.big_a).abs();
    let target = c1.sigma + 2.0 * (c1.sigma - 1.0);
    let e_err = ((fit.correction_exponent - target) / target).abs();
    outcome(
        exact < 1e-9 && a_err < 0.01 && e_err < 0.05 && fit.c_sign > 0,
        format!("sqrt(2l) error {exact:.2e}, A_fit error {a_err:.2e}, exponent error {e_err:.2e}, C sign {}", fit.c_sign),
    )
}

fn linear_inverse() -> Result<Outcome> {
    let spec = eig_l_full(&ShrinkerProfile::round(2, 0.1, 32)?)?;
    // the residual is measured with fourth-order differences in s
    let grid = ExteriorGrid::new(4.0, 20.0, 0.005, 32)?;
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst = 0.0f64;
    // windows between beta+ = -0.2, 0, 0.354, 0.737
    for gamma in [-0.1, 0.2, 0.55] {
        for _ in 0..20 {
            let terms: Vec<(f64, usize, f64, f64)> = (0..4)
                .map(|_| (gamma - rng.gen_range(0.05..0.6), rng.gen_range(0..6), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let g = ExteriorField::from_fn(grid, gamma, |s: f64, t: f64| {
                terms.iter().map(|&(a, k, c, d)| (a * s).exp() * (c * (k as f64 * t).cos() + d * (k as f64 * t).sin())).sum()
            })?;
            let w = linear_solve_h(&g, gamma, &spec)?;
            let res = apply_cal_l(&w, &spec)?.sub(&g)?;
            worst = worst.max(res.weighted_sup(gamma) / g.weighted_sup(gamma));
        }
    }
    // single mode: g = e^(gamma s) phi_j
    let (gamma, j) = (0.2, 3);
    let b = spec.betas[j];
    let g = ExteriorField::separated(grid, gamma, |s| (gamma * s).exp(), &spec.phis[j])?;
    let w = linear_solve_h(&g, gamma, &spec)?;
    let denom = (gamma - b.beta_plus) * (gamma - b.beta_minus);
    let r = grid.r;
    let oracle = ExteriorField::separated(
        grid,
        gamma,
        |s| ((gamma * s).exp() - ((gamma - b.beta_minus) * r + b.beta_minus * s).exp()) / denom,
        &spec.phis[j],
    )?;
    let closed = w.sub(&oracle)?.weighted_sup(gamma);
    outcome(worst < 1e-6 && closed < 1e-8, format!("worst resolvent residual {worst:.2e}, closed form error {closed:.2e}"))
}

fn picard() -> Result<Outcome> {
    let mut lines = Vec::new();
    let mut pass = true;
    let cases = [
        ("round", ShrinkerProfile::round(2, 0.1, 32)?),
        ("3-fold", solve_shrinker_curve(0.1, 3, 128)?),
    ];
    for (name, p) in cases {
        let spec = eig_l_full(&p)?;
        let gamma = zero_seed_gamma(&spec);
        let grid = ExteriorGrid::new(8.0, 20.0, 0.005, p.h.n())?;
        let out = picard_zero_seed(&p.h, &spec, grid, gamma, &PicardConfig::default())?;
        let ratio = out.ratios.iter().copied().fold(0.0, f64::max);
        pass &= ratio < 0.5 && out.residual < 1e-7;
        lines.push(format!("{name}: max ratio {ratio:.3}, residual {:.2e}", out.residual));
    }
    outcome(pass, lines.join("; "))
}

fn jacobi_dominance() -> Result<Outcome> {
    let p = ShrinkerProfile::round(2, 0.1, 32)?;
    let spec = eig_l_full(&p)?;
    let sigma = spec.consts.sigma;
    let j = spec.betas.iter().position(|b| b.beta_plus > 1e-8 && b.beta_plus < sigma).expect("mode in (0, sigma)");
    let gamma = zero_seed_gamma(&spec);
    let grid = ExteriorGrid::new(8.0, 24.0, 0.02, 32)?;
    let base = picard_zero_seed(&p.h, &spec, grid, gamma, &PicardConfig::default())?;
    let jac = jacobi_perturb(&base.w, gamma, j, 1.0, &p.h, &spec, &PicardConfig::default())?;
    let basis = MarchBasis::new(&p, march::BETA_CAP)?;
    let l0 = 16f64.exp();
    let opts = MarchOptions::default();
    let a = march(&seed_from_exterior(&base.w, &p.h, &basis.consts, l0)?, 100.0 * l0, &basis, &opts)?;
    let b = march(&seed_from_exterior(&jac.picard.w, &p.h, &basis.consts, l0)?, 100.0 * l0, &basis, &opts)?;
    let rep = paired_report(&a.state, &b.state, jac.rate, l0, 100.0 * l0)?;
    outcome(
        a.completed() && b.completed() && rep.relative_error < 0.02,
        format!(
            "mode {j}: exponent {:.5} vs beta+ {:.5} (relative error {:.2e}), subleading gap {:?}",
            rep.exponent, rep.beta_plus, rep.relative_error, rep.subleading_gap
        ),
    )
}

fn level_set_convergence() -> Result<Outcome> {
    let p = solve_shrinker_curve(0.1, 3, 128)?;
    let spec = eig_l_full(&p)?;
    let gamma = zero_seed_gamma(&spec);
    let r = 8.0;
    let grid = ExteriorGrid::new(r, 20.0, 0.02, 128)?;
    let base = picard_zero_seed(&p.h, &spec, grid, gamma, &PicardConfig::default())?;
    let basis = MarchBasis::new(&p, march::BETA_CAP)?;
    // w vanishes on s = R, so d(l) is measured from one decade further out
    let l0 = 10.0 * r.exp();
    let out = march(&seed_from_exterior(&base.w, &p.h, &basis.consts, l0)?, 1e3 * l0, &basis, &MarchOptions::default())?;
    let rep = convergence_diagnostics(&out.state, &p.h, &basis.consts)?;
    outcome(
        out.completed() && rep.decade_d.len() == 4 && rep.decreasing_each_decade,
        format!("d at decades {:?}, fitted rate {:?}", rep.decade_d.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>(), rep.rate),
    )
}

fn barriers() -> Result<Outcome> {
    let c = consts(2, 0.1)?;
    let h = solve_shrinker_curve(0.1, 3, 128)?;
    let sup = h.h.samples().iter().fold(0.0f64, |m, &x| m.max(x * x));
    let mut lines = Vec::new();
    let mut pass = true;
    for factor in [1.0, 1.25, 2.0] {
        let rep = barrier_check(&solve_radial(factor * sup, &c, 1e4)?, &h, Barrier::Sub)?;
        pass &= rep.sufficient_condition && rep.sign_holds;
        lines.push(format!("M = {factor} sup h^2: {} violations of {} points", rep.violations, rep.points));
    }
    outcome(pass, lines.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>, Duration); 10] = [
        ("constants", constants_identities, Duration::from_secs(1)),
        ("round spectrum", round_spectrum, Duration::from_secs(10)),
        ("shrinker", shrinker, Duration::from_secs(30)),
        ("nontrivial spectrum", nontrivial_spectrum, Duration::from_secs(30)),
        ("radial exactness", radial_exactness, Duration::from_secs(60)),
        ("linear inverse", linear_inverse, Duration::from_secs(60)),
        ("picard", picard, Duration::from_secs(300)),
        ("jacobi dominance", jacobi_dominance, Duration::from_secs(600)),
        ("level-set convergence", level_set_convergence, Duration::from_secs(300)),
        ("barriers", barriers, Duration::from_secs(30)),
    ];
    let mut failures = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = run();
        let elapsed = t.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed <= *budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {:<22} {}  [{:.2?} of {:?}]  {detail}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            elapsed,
            budget
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
