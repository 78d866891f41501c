//! End-to-end acceptance checks. Each test writes one `PASS`/`FAIL` line
//! straight to stdout, so the verdicts show up even when output capture is on.

use std::io::Write;

use ndarray::Array2;
use oddchern::clifford::{is_near_degenerate, key_identity_lhs, key_identity_rhs, verify_clifford_identities, KeyIdentityParams};
use oddchern::ensemble::{run_ensemble, EnsembleSpec, ModelSpec};
use oddchern::flatband::{spectral_flatband, DEFAULT_GAP_TOL};
use oddchern::invariants::{
    fedosov_index, kspace_odd_chern, kspace_odd_chern_with, realspace_odd_chern, schatten_growth,
    summability_diagnostic, FedosovOptions, KspaceOptions, RealSpaceOptions,
};
use oddchern::models::{model1, model2, model3d_reference, realize, ModelParams};
use oddchern::{CliffordRep, DiracPhase, FlatBand, Method, SampleSeed, Torus, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const MASTER: u64 = 20_240_917;

fn report(id: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {id:>2} {verdict}  {title}: {detail}").unwrap();
    out.flush().unwrap();
}

fn localized_sample(index: u64) -> FlatBand {
    let real = realize(&model2(0.5, 1.0, 1.0), 256, Some(SampleSeed::new(MASTER, index))).unwrap();
    spectral_flatband(&real, DEFAULT_GAP_TOL).unwrap()
}

#[test]
fn criterion_01_clean_quantization() {
    let mut pass = true;
    let mut detail = Vec::new();
    for (m, want) in [(-0.9, 1), (-0.5, 1), (0.0, 1), (0.5, 1), (0.9, 1), (1.5, 0), (2.0, 0), (-2.0, 0)] {
        let est = kspace_odd_chern(&model1(m), 256).unwrap();
        let ok = est.nearest_int == want && est.residual < 1e-6;
        pass &= ok;
        detail.push(format!("m={m}: {:.9} (res {:.1e})", est.value, est.residual));
    }
    report(1, "clean d=1 quantization", pass, &detail.join(", "));
    assert!(pass);
}

#[test]
fn criterion_02_gap_closing() {
    // min_k |A(k)| = ||m| - 1| exactly, and k = ±π/2 lies on the grid, so the
    // gap at m = 1 ± 1e-3 equals the threshold; allow rounding of the last bits
    let threshold = 1e-3 * (1.0 + 1e-9);
    let mut pass = true;
    let mut detail = Vec::new();
    for m in [1.0 - 1e-3, 1.0 + 1e-3, -1.0 - 1e-3, -1.0 + 1e-3] {
        let model = model1(m);
        let gap = (0..4096)
            .map(|j| {
                let k = 2.0 * std::f64::consts::PI * j as f64 / 4096.0;
                let a = model.bloch_chiral_block(&[k]).unwrap();
                a[[0, 0]].norm()
            })
            .fold(f64::INFINITY, f64::min);
        pass &= gap < threshold;
        detail.push(format!("m={m}: {gap:.6e}"));
    }
    let far = kspace_odd_chern(&model1(0.5), 4096).unwrap().gap.unwrap();
    detail.push(format!("control m=0.5: {far:.3}"));
    report(2, "gap closes at |m| = 1", pass, &detail.join(", "));
    assert!(pass);
}

#[test]
fn criterion_03_realspace_matches_kspace() {
    let mut pass = true;
    let mut detail = Vec::new();
    for m in [0.5, 1.5] {
        let k = kspace_odd_chern(&model1(m), 256).unwrap();
        let fb = spectral_flatband(&realize(&model1(m), 128, None).unwrap(), DEFAULT_GAP_TOL).unwrap();
        let r = realspace_odd_chern(&fb, &RealSpaceOptions::default()).unwrap();
        let diff = (r.value - k.value).abs();
        pass &= diff < 1e-3;
        detail.push(format!("m={m}: real {:.9} vs k {:.9}", r.value, k.value));
    }
    report(3, "real space = k-space, clean L=128", pass, &detail.join(", "));
    assert!(pass);
}

#[test]
fn criterion_04_index_theorem() {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for i in 0..10 {
        let fb = localized_sample(i);
        let r = realspace_odd_chern(&fb, &RealSpaceOptions::default()).unwrap();
        let phase = DiracPhase::centered(fb.torus(), &[0.5]).unwrap();
        let f = fedosov_index(&fb, &phase, &FedosovOptions::new(64)).unwrap();
        let diff = (f.value - r.value).abs();
        worst = worst.max(diff);
        pass &= diff < 0.05 && f.nearest_int == 1 && r.nearest_int == 1;
        detail.push(format!("{:.4}/{:.4}", f.value, r.value));
    }
    report(
        4,
        "Fedosov index = real-space invariant, 10 samples",
        pass,
        &format!("max diff {worst:.2e}; index/real-space: {}", detail.join(" ")),
    );
    assert!(pass);
}

#[test]
fn criterion_05_disorder_plateau() {
    let mut pass = true;
    let mut detail = Vec::new();
    for lambda in [0.0, 0.5, 1.0, 1.5] {
        let model = ModelSpec::builtin("model2", ModelParams { m: 0.5, lambda, lambda_prime: None });
        let mut spec = EnsembleSpec::new(model, 256, 50, MASTER);
        spec.methods = vec![Method::Realspace, Method::Fedosov];
        spec.trunc_radius = 64;
        let out = run_ensemble(&spec).unwrap();
        for s in out.summaries(&spec.acceptance) {
            if lambda <= 1.0 {
                pass &= s.mode == 1 && s.mode_fraction == 1.0 && s.std < 0.05 && out.rejected == 0;
            }
            detail.push(format!(
                "λ={lambda} {}: n={} mode {} ({:.0}%) mean {:.4} std {:.1e}",
                s.method,
                s.count,
                s.mode,
                100.0 * s.mode_fraction,
                s.mean,
                s.std
            ));
        }
        detail.push(format!("λ={lambda}: {} rejected, min gap {:.2e}", out.rejected, out.min_gap()));
    }
    report(5, "disorder plateau for λ ≤ 1", pass, &detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_06_offset_invariance() {
    let fb = localized_sample(0);
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER);
    let values: Vec<f64> = (0..5)
        .map(|_| {
            let x0 = [rng.random::<f64>()];
            let phase = DiracPhase::centered(fb.torus(), &x0).unwrap();
            fedosov_index(&fb, &phase, &FedosovOptions::new(64)).unwrap().value
        })
        .collect();
    let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - values.iter().cloned().fold(f64::INFINITY, f64::min);
    let pass = spread < 0.05;
    report(6, "index independent of x0", pass, &format!("spread {spread:.2e} over {values:.6?}"));
    assert!(pass);
}

#[test]
fn criterion_07_key_geometric_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER);
    let mut pass = true;
    let mut worst_sigma: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    for d in [1usize, 3] {
        let rep = CliffordRep::new(d).unwrap();
        let mut done = 0;
        while done < 10 {
            let points: Vec<Vec<f64>> =
                (0..d).map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
            if is_near_degenerate(&points, 0.2) {
                continue;
            }
            let params = KeyIdentityParams { seed: rng.random(), ..KeyIdentityParams::default() };
            let lhs = key_identity_lhs(&rep, &points, &params).unwrap();
            let rhs = key_identity_rhs(&points).unwrap();
            let err = (lhs.value - rhs).norm();
            let sigmas = err / lhs.std_error;
            let rel = err / rhs.norm();
            worst_sigma = worst_sigma.max(sigmas);
            worst_rel = worst_rel.max(rel);
            pass &= sigmas <= 3.0 && rel < 0.02;
            done += 1;
        }
    }
    report(
        7,
        "key geometric identity, d ∈ {1, 3}",
        pass,
        &format!("worst deviation {worst_sigma:.2}σ, worst relative error {worst_rel:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_clifford_identities() {
    let d3 = verify_clifford_identities(3, 3, 100, MASTER, 1e-10).unwrap();
    let d5 = verify_clifford_identities(5, 2, 200, MASTER, 1e-10).unwrap();
    let pass = d3.passed() && d5.passed();
    report(
        8,
        "Clifford identity suite",
        pass,
        &format!(
            "d=3: {} checks, max error {:.1e}; d=5: {} checks, max error {:.1e}",
            d3.checks, d3.max_error, d5.checks, d5.max_error
        ),
    );
    assert!(pass, "{:?} {:?}", d3.failures, d5.failures);
}

/// `⟨x|u|y⟩ = δ_{x, y + e_1}` on a `d`-torus.
fn shift(torus: &Torus) -> FlatBand {
    let n = torus.n_sites();
    let mut u = Array2::<C64>::zeros((n, n));
    for y in 0..n {
        let mut c = torus.coords(y);
        c[0] += 1;
        u[[torus.index(&c), y]] = C64::new(1.0, 0.0);
    }
    FlatBand::from_unitary(torus.clone(), 1, u).unwrap()
}

#[test]
fn criterion_09_summability_ordering() {
    let fb = localized_sample(0);
    let phase = DiracPhase::centered(fb.torus(), &[0.5]).unwrap();
    let rows = summability_diagnostic(&fb, &phase, &[16, 48, 64], &[1, 2]).unwrap();
    let g1 = schatten_growth(&rows, 1, 48, 64).unwrap();
    let g2 = schatten_growth(&rows, 2, 48, 64).unwrap();
    let pass = g2.abs() < 0.02 && g1 > 0.10;
    let sums: Vec<String> = rows.iter().map(|r| format!("S{}(R={})={:.6}", r.p, r.radius, r.sum)).collect();
    report(
        9,
        "summability ordering, d=1",
        pass,
        &format!("p=2 change {g2:+.2e}, p=1 change {g1:+.2e}; {}", sums.join(" ")),
    );
    // In d = 1 the commutator [F, U] is exponentially localized at the origin,
    // so every Schatten sum converges and the p = 1 growth cannot occur. The
    // verdict above reports that; only the p = 2 plateau is enforced.
    assert!(g2.abs() < 0.02);

    // The ordering itself shows in d = 3, where |F(x) - F(x - e_1)| ~ 1/|x| on
    // ~|x|² sites per shell: p = 2 grows linearly, p = 3 logarithmically and
    // p = 4 converges. Independent oracle for the shift: the singular values
    // of [F, u] are |n(x) - n(x - e_1)| (twice) for n(x) = (x + x0)/|x + x0|.
    let torus = Torus::new(3, 12);
    let fb3 = shift(&torus);
    let x0 = [0.5, 0.5, 0.5];
    let phase3 = DiracPhase::centered(&torus, &x0).unwrap();
    let rows3 = summability_diagnostic(&fb3, &phase3, &[4, 5], &[2, 3, 4]).unwrap();
    for row in &rows3 {
        let r = row.radius as i64;
        let mut want = 0.0;
        for a in -r + 1..=r {
            for b in -r..=r {
                for c in -r..=r {
                    let unit = |x: f64| {
                        let v = [x + x0[0], b as f64 + x0[1], c as f64 + x0[2]];
                        let n = v.iter().map(|t| t * t).sum::<f64>().sqrt();
                        v.map(|t| t / n)
                    };
                    let (p, q) = (unit(a as f64), unit(a as f64 - 1.0));
                    let dist = p.iter().zip(&q).map(|(s, t)| (s - t) * (s - t)).sum::<f64>().sqrt();
                    want += 2.0 * dist.powi(row.p as i32);
                }
            }
        }
        assert!((row.sum - want).abs() < 1e-9 * want, "p={} R={}: {} vs {want}", row.p, row.radius, row.sum);
    }
    let growth: Vec<f64> = (2..=4).map(|p| schatten_growth(&rows3, p, 4, 5).unwrap()).collect();
    let ordered = growth[0] > 0.10 && growth[1] > 0.05 && growth[2] < 0.03;
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "             supplementary d=3 shift, R 4 → 5: p=2 {:+.3}, p=3 {:+.3}, p=4 {:+.3} ({})",
        growth[0],
        growth[1],
        growth[2],
        if ordered { "ordering visible" } else { "ordering not visible" }
    )
    .unwrap();
    assert!(ordered);
}

#[test]
fn criterion_10_three_dimensional_pipeline() {
    let mut pass = true;
    let mut detail = Vec::new();
    for m in [2.0, 0.0] {
        let model = model3d_reference(m);
        let k = kspace_odd_chern_with(&model, &KspaceOptions::new(32)).unwrap();
        let fb = spectral_flatband(&realize(&model, 10, None).unwrap(), DEFAULT_GAP_TOL).unwrap();
        let r = realspace_odd_chern(&fb, &RealSpaceOptions::default()).unwrap();
        pass &= r.nearest_int == k.nearest_int && r.residual < 0.1;
        detail.push(format!("m={m}: real {:.5} (res {:.1e}) vs k {:.6}", r.value, r.residual, k.value));
    }
    report(10, "d=3 real space matches the k-space oracle, L=10", pass, &detail.join(", "));
    assert!(pass);
}
