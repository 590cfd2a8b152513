use gcf_lab::circlefield::WeightedInner;
use gcf_lab::linearized::{e1, ExteriorField, ExteriorGrid};
use gcf_lab::shrinker::gauss_curvature;
use gcf_lab::spectrum::assemble_l;
use gcf_lab::*;
use proptest::prelude::*;

fn consts(n: usize, alpha: f64) -> DerivedConstants64 {
    derive_constants(FlowParams::new(n, alpha).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exponent_sum_and_c2(n in 2usize..8, alpha in 1e-3f64..0.499, t in 0.0f64..1.0) {
        let c = consts(n, alpha);
        let lam_max = c.c1 * c.c1 / (4.0 * c.c2);
        let lam = -50.0 + t * (lam_max + 50.0);
        let b = beta_exponents(lam, &c).unwrap();
        prop_assert!((b.beta_plus + b.beta_minus + c.c1).abs() <= 1e-12 * c.c1.abs().max(1.0));
        prop_assert!((c.sigma * (1.0 - c.sigma) - c.c2).abs() <= 1e-12 * c.c2);
        prop_assert_eq!(beta_exponents(0.0, &c).unwrap().beta_plus, 0.0);
    }

    #[test]
    fn beta_plus_grows_as_lambda_falls(n in 2usize..8, alpha in 1e-3f64..0.499, a in -40.0f64..0.9, gap in 0.01f64..5.0) {
        let c = consts(n, alpha);
        let hi = a.min(c.c1 * c.c1 / (4.0 * c.c2) - 1e-3);
        let lo = hi - gap;
        prop_assert!(beta_exponents(lo, &c).unwrap().beta_plus > beta_exponents(hi, &c).unwrap().beta_plus);
    }

    #[test]
    fn samples_modes_roundtrip(xs in prop::collection::vec(-10.0f64..10.0, 64)) {
        let f = CircleField::from_samples(xs.clone()).unwrap();
        let back = CircleField::from_spectrum(f.spectrum()).unwrap();
        for (a, b) in back.samples().iter().zip(&xs) {
            prop_assert!((a - b).abs() < 1e-12 * 10.0);
        }
    }

    #[test]
    fn r_annihilates_linear_functions(a in -100.0f64..100.0, b in -100.0f64..100.0) {
        let f = CircleField::from_fn(32, |t: f64| a * t.cos() + b * t.sin()).unwrap();
        let r = f.r_operator();
        prop_assert!(r.sup_norm() <= 1e-12 * (a.abs() + b.abs()).max(1.0));
    }

    #[test]
    fn weighted_inner_matches_refined_quadrature(
        cf in prop::collection::vec(-1.0f64..1.0, 8),
        cg in prop::collection::vec(-1.0f64..1.0, 8),
        cw in prop::collection::vec(-0.1f64..0.1, 4),
    ) {
        // band-limited to degree N/4 with N = 32: f, g of degree 4, weight of degree 4
        let trig = |c: &[f64], t: f64| c.chunks(2).enumerate().map(|(k, p)| p[0] * ((k + 1) as f64 * t).cos() + p[1] * ((k + 1) as f64 * t).sin()).sum::<f64>();
        let make = |n: usize| {
            let f = CircleField::from_fn(n, |t| 1.0 + trig(&cf, t)).unwrap();
            let g = CircleField::from_fn(n, |t| trig(&cg, t)).unwrap();
            let w = CircleField::from_fn(n, |t| 1.0 + 0.5 * trig(&cw, t)).unwrap();
            WeightedInner::new(w).unwrap().inner(&f, &g)
        };
        let (coarse, fine) = (make(32), make(128));
        prop_assert!((coarse - fine).abs() < 1e-10 * fine.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn affine_critical_exact_for_any_m(m in 0.05f64..20.0) {
        let c = consts(2, 0.25);
        let p = solve_radial(m, &c, 1e6).unwrap();
        for (&l, &f) in p.l.iter().zip(&p.f) {
            if l >= 1.0 {
                prop_assert!((f / (2.0 * l).sqrt() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn march_commutes_with_translation(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let p = solve_shrinker_curve(0.1, 3, 64).unwrap();
        let basis = MarchBasis::new(&p, march::BETA_CAP).unwrap();
        let init = march::seed_blow_down(&p.h, &basis.consts, 1e4).unwrap();
        let opts = MarchOptions::default();
        let base = march(&init, 3e4, &basis, &opts).unwrap().state;
        let moved = march(&init.translated(a, b).unwrap(), 3e4, &basis, &opts).unwrap().state;
        let expect = base.translated(a, b).unwrap();
        prop_assert!(moved.s.sub(&expect.s).sup_norm() < 1e-9 * base.s.sup_norm());
    }
}

#[test]
fn jacobi_count_enumeration_matches_table() {
    for n in 2..=4 {
        for k in 0..100 {
            let alpha = 0.004 + 0.0049 * k as f64;
            let p = FlowParams::new(n, alpha).unwrap();
            let c = derive_constants(p).unwrap();
            let table = jacobi_count_closed_form(n, threshold_degree(p).unwrap());
            assert_eq!(jacobi_count_enumerated(&c).unwrap(), table, "n = {n}, alpha = {alpha}");
        }
    }
}

#[test]
fn accepted_shrinkers_satisfy_curvature_relation() {
    for (alpha, k) in [(0.1, 3), (0.05, 3), (0.05, 4), (0.03, 5)] {
        let p = solve_shrinker_curve(alpha, k, 128).unwrap();
        let kk = gauss_curvature(&p.h).unwrap();
        let lhs = kk.powf(alpha / (1.0 - alpha), "K").unwrap();
        let dev = lhs.sub(&p.h).sup_norm();
        assert!(dev < 1e-8, "alpha {alpha}, k {k}: {dev:e}");
    }
}

#[test]
fn symmetrized_operator_is_symmetric() {
    for p in [ShrinkerProfile::round(2, 0.1, 32).unwrap(), solve_shrinker_curve(0.1, 3, 64).unwrap()] {
        let op = assemble_l(&p).unwrap();
        assert!(op.matrix.asymmetry() < 1e-12 * op.matrix.frobenius(), "{}", op.matrix.asymmetry());
    }
}

#[test]
fn only_top_modes_are_nonnegative() {
    for p in [ShrinkerProfile::round(2, 0.1, 32).unwrap(), solve_shrinker_curve(0.1, 3, 64).unwrap()] {
        let s: SpectralData64 = eig_l_full(&p).unwrap();
        assert!((s.lambdas[0] - 1.0).abs() < 1e-8);
        assert!(s.lambdas[1].abs() < 1e-8 && s.lambdas[2].abs() < 1e-8);
        assert!(s.lambdas[3..].iter().all(|&l| l < -1e-6));
    }
}

#[test]
fn e1_is_locally_lipschitz() {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let p = ShrinkerProfile::round(2, 0.1, 32).unwrap();
    let c = consts(2, 0.1);
    let grid = ExteriorGrid::new(6.0, 16.0, 0.05, 32).unwrap();
    let sigma = c.sigma;
    let mut rng = StdRng::seed_from_u64(3);
    let field = |rng: &mut StdRng| {
        let (a, k, ph) = (rng.gen_range(-1.0..1.0), rng.gen_range(0..5), rng.gen_range(0.0..6.3));
        let rate = rng.gen_range(0.0..sigma);
        let raw = ExteriorField::from_fn(grid, sigma, |s: f64, t: f64| a * (rate * s).exp() * (k as f64 * t + ph).cos()).unwrap();
        let size = raw.weighted_sup(sigma);
        raw.scale(rng.gen_range(1e-4..0.01) / size.max(1e-300))
    };
    let mut consts_fit = Vec::new();
    for _ in 0..50 {
        let w = field(&mut rng);
        let v = field(&mut rng);
        let num = e1(&w, &p.h, &c).unwrap().sub(&e1(&v, &p.h, &c).unwrap()).unwrap().weighted_sup(2.0 * sigma - 1.0);
        let den = (w.weighted_sup(sigma) + v.weighted_sup(sigma)) * w.sub(&v).unwrap().weighted_sup(sigma);
        consts_fit.push(num / den);
    }
    let max = consts_fit.iter().copied().fold(0.0, f64::max);
    assert!(max.is_finite() && max > 0.0);
    // a single C covers every pair; the spread stays within an order of magnitude of the median
    let mut sorted = consts_fit.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!(max < 50.0 * sorted[25], "{max} vs median {}", sorted[25]);
}
