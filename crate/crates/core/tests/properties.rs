use oddchern::clifford::key_identity_rhs;
use oddchern::flatband::{contour_flatband, spectral_flatband, ContourOptions, DEFAULT_GAP_TOL};
use oddchern::invariants::{kspace_odd_chern, realspace_odd_chern, RealSpaceOptions};
use oddchern::linalg::{adjoint, max_abs, real_determinant, unitarity_residual};
use oddchern::models::{model1, model2, realize, realize_with, DisorderConfig};
use oddchern::{CliffordRep, DiracPhase, SampleSeed, Torus, C64};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn dirac_phase_is_a_hermitian_involution(
        d in prop::sample::select(vec![1usize, 3]),
        size in 4usize..9,
        x0 in prop::collection::vec(0.0..=1.0f64, 3),
    ) {
        let torus = Torus::new(d, size);
        let x0 = &x0[..d];
        let phase = DiracPhase::centered(&torus, x0).unwrap();
        let n = phase.rep_dim();
        let one = ndarray::Array2::<C64>::eye(n);
        for site in 0..torus.n_sites() {
            let f = phase.block(site);
            prop_assert!(max_abs(&(f - &adjoint(&f.view())).view()) < 1e-12);
            prop_assert!(max_abs(&(f.dot(f) - &one).view()) < 1e-12);
        }
    }

    #[test]
    fn trace_of_dotted_generators_is_a_determinant(
        d in prop::sample::select(vec![1usize, 3, 5]),
        flat in prop::collection::vec(-3.0..3.0f64, 25),
    ) {
        let rep = CliffordRep::new(d).unwrap();
        let vs: Vec<Vec<f64>> = (0..d).map(|i| flat[i * d..(i + 1) * d].to_vec()).collect();
        let full = rep.trace_product(&(0..d).collect::<Vec<_>>()).unwrap();
        let det = real_determinant(&vs);
        let got = rep.trace_sigma_dot(&vs).unwrap();
        prop_assert!((got - full * det).norm() < 1e-9 * (1.0 + det.abs()));
    }

    #[test]
    fn key_identity_rhs_is_alternating_and_homogeneous(
        flat in prop::collection::vec(-3.0..3.0f64, 9),
        t in 0.1..5.0f64,
        i in 0usize..3,
        j in 0usize..3,
    ) {
        let pts: Vec<Vec<f64>> = (0..3).map(|k| flat[3 * k..3 * k + 3].to_vec()).collect();
        let base = key_identity_rhs(&pts).unwrap();
        let mut swapped = pts.clone();
        swapped.swap(i, j);
        let s = key_identity_rhs(&swapped).unwrap();
        let want = if i == j { base } else { -base };
        prop_assert!((s - want).norm() < 1e-10 * (1.0 + base.norm()));
        let scaled: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|v| v * t).collect()).collect();
        let sc = key_identity_rhs(&scaled).unwrap();
        prop_assert!((sc - base * t.powi(3)).norm() < 1e-9 * (1.0 + sc.norm()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn kspace_plateaus(m in -3.0..3.0f64) {
        prop_assume!((m.abs() - 1.0).abs() > 0.05);
        let est = kspace_odd_chern(&model1(m), 256).unwrap();
        let want = if m.abs() < 1.0 { 1 } else { 0 };
        prop_assert_eq!(est.nearest_int, want);
        prop_assert!(est.residual < 1e-6);
    }

    #[test]
    fn realspace_matches_kspace_when_clean(m in -2.5..2.5f64) {
        prop_assume!((m.abs() - 1.0).abs() > 0.25);
        let k = kspace_odd_chern(&model1(m), 256).unwrap();
        let real = realize(&model1(m), 64, None).unwrap();
        let fb = spectral_flatband(&real, DEFAULT_GAP_TOL).unwrap();
        let r = realspace_odd_chern(&fb, &RealSpaceOptions::default()).unwrap();
        prop_assert!((r.value - k.value).abs() < 1e-3, "realspace {} vs kspace {}", r.value, k.value);
    }

    #[test]
    fn disordered_realizations_are_chiral_with_symmetric_spectrum(seed in any::<u64>(), lambda in 0.0..2.0f64) {
        let real = realize(&model2(0.5, lambda, lambda), 24, Some(SampleSeed::new(seed, 0))).unwrap();
        prop_assert!(real.hermiticity_residual() < 1e-14);
        prop_assert!(real.chirality_residual() < 1e-14);
        let e = real.spectrum().unwrap();
        let n = e.len();
        for i in 0..n {
            prop_assert!((e[i] + e[n - 1 - i]).abs() < 1e-10);
        }
    }

    #[test]
    fn flat_band_routes_agree(seed in any::<u64>()) {
        let real = realize(&model2(0.5, 1.0, 1.0), 24, Some(SampleSeed::new(seed, 1))).unwrap();
        let a = spectral_flatband(&real, DEFAULT_GAP_TOL).unwrap();
        let b = contour_flatband(&real, &ContourOptions::default()).unwrap();
        prop_assert!(unitarity_residual(&a.u().view()) < 1e-10);
        prop_assert!(max_abs(&(a.q_matrix() - b.q_matrix()).view()) < 1e-8);
    }

    #[test]
    fn sample_seeding_is_reproducible(seed in any::<u64>(), index in 0u64..1000) {
        let model = model2(0.5, 1.0, 1.0);
        let torus = Torus::new(1, 16);
        let s = SampleSeed::new(seed, index);
        let a = DisorderConfig::sample(&model, &torus, s);
        let b = DisorderConfig::sample(&model, &torus, s);
        prop_assert_eq!(&a, &b);
        let ra = realize_with(&model, &torus, &a, Some(s)).unwrap();
        let rb = realize(&model, 16, Some(s)).unwrap();
        prop_assert_eq!(ra.hamiltonian(), rb.hamiltonian());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 3, ..ProptestConfig::default() })]

    #[test]
    fn rounded_invariant_is_constant_along_a_homotopy(seed in any::<u64>()) {
        let opts = RealSpaceOptions::default();
        for step in 0..=16 {
            let m = 0.05 * step as f64;
            let real = realize(&model2(m, 1.0, 1.0), 128, Some(SampleSeed::new(seed, 0))).unwrap();
            let fb = spectral_flatband(&real, DEFAULT_GAP_TOL).unwrap();
            let est = realspace_odd_chern(&fb, &opts).unwrap();
            prop_assert_eq!(est.nearest_int, 1, "m = {}, value {}", m, est.value);
        }
    }
}
