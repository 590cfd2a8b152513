use gcf_lab::linearized::picard_zero_seed;
use gcf_lab::march::{seed_blow_down, BETA_CAP};
use gcf_lab::*;

#[test]
fn downward_march_keeps_round_profiles_convex() {
    for alpha in [0.05, 0.1, 0.2] {
        let p = ShrinkerProfile::round(2, alpha, 32).unwrap();
        let basis = MarchBasis::new(&p, BETA_CAP).unwrap();
        let init = seed_blow_down(&p.h, &basis.consts, 1e6).unwrap();
        let out = march(&init, 1e5, &basis, &MarchOptions::default()).unwrap();
        assert!(out.completed(), "alpha {alpha}: {:?}", out.breakdown);
        out.state.check_invariants().unwrap();
        assert_eq!(out.state.history.len(), 11);
    }
}

#[test]
fn zero_seed_slices_solve_the_translator_equation() {
    let p = solve_shrinker_curve(0.1, 3, 128).unwrap();
    let spec = eig_l_full(&p).unwrap();
    let grid = ExteriorGrid::new(8.0, 18.0, 0.01, 128).unwrap();
    let out = picard_zero_seed(&p.h, &spec, grid, zero_seed_gamma(&spec), &PicardConfig::default()).unwrap();
    let res = slice_residuals(&out.w, &p.h, &spec.consts).unwrap();
    let worst = res.iter().map(|r| r.1).fold(0.0, f64::max);
    println!("worst slice residual {worst:e}");
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn jacobi_perturbation_leads_with_its_mode() {
    let p = ShrinkerProfile::round(2, 0.1, 32).unwrap();
    let spec = eig_l_full(&p).unwrap();
    let sigma = spec.consts.sigma;
    let j = spec.betas.iter().position(|b| b.beta_plus > 1e-8 && b.beta_plus < sigma).unwrap();
    let gamma = zero_seed_gamma(&spec);
    let grid: ExteriorGrid<f64> = ExteriorGrid::new(8.0, 20.0, 0.02, 32).unwrap();
    let base = picard_zero_seed(&p.h, &spec, grid, gamma, &PicardConfig::default()).unwrap();
    let b = 0.5f64;
    let jac = jacobi_perturb(&base.w, gamma, j, b, &p.h, &spec, &PicardConfig::default()).unwrap();
    let diff = jac.picard.w.sub(&base.w).unwrap();
    let beta = spec.betas[j].beta_plus;
    for s in [12.0f64, 16.0, 20.0] {
        let k = ((s - grid.r) / grid.ds).round() as usize;
        let slice = &diff.slices[k];
        let expect = spec.phis[j].scale(b * (beta * s).exp());
        let rel = slice.sub(&expect).sup_norm() / expect.sup_norm();
        println!("s = {s}: relative deviation {rel:e}");
        assert!(rel < 1e-2, "s = {s}: {rel:e}");
    }
}
