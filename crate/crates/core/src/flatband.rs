//! The flat-band operator `Q = 1 - 2P` of a gapped chiral Hamiltonian and its
//! unitary off-diagonal block `U`.
//!
//! For `H = [[0, A], [A†, 0]]` with `A = W Σ V†` one has
//! `sign(H) = [[0, W V†], [V W†, 0]]`, so `U` is the polar factor of the chiral
//! block and the gap is its smallest singular value. This is what
//! [`spectral_flatband`] computes; [`eigh_flatband`] and [`contour_flatband`]
//! go through the full matrix and serve as cross-checks.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use ndarray::{s, Array2, ArrayView2};
use ndarray_linalg::{Inverse, JobSvd, SVDDC};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Torus;
use crate::linalg::{adjoint, hermitian_eigh, max_abs, operator_norm, polar_decomposition, CMatrix, C64, I};
use crate::models::LatticeRealization;
use crate::profile::{accumulate_pairs, default_window, fit_decay, DecayFit, DistanceAccumulator, ProfileBin};

pub const DEFAULT_GAP_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatBandMethod {
    Polar,
    Eigh,
    Contour,
    Explicit,
}

#[derive(Clone, Debug)]
pub struct FlatBand {
    torus: Torus,
    half_orbitals: usize,
    u: CMatrix,
    gap: f64,
    unitarity_residual: f64,
    /// `max |Q² - 1|` of the matrix the flat band was read from.
    sign_residual: f64,
    /// Largest entry of the diagonal chiral blocks of that matrix.
    chirality_leak: f64,
    method: FlatBandMethod,
}

fn two_sided_unitarity(u: &ArrayView2<C64>) -> f64 {
    let ud = adjoint(u);
    let eye = Array2::<C64>::eye(u.nrows());
    let a = max_abs(&(ud.dot(u) - &eye).view());
    let b = max_abs(&(u.dot(&ud) - &eye).view());
    a.max(b)
}

fn check_gap(gap: f64, gap_tol: f64) -> Result<()> {
    if gap.is_nan() || gap <= gap_tol {
        Err(Error::GaplessSample { min_abs_energy: gap, tolerance: gap_tol })
    } else {
        Ok(())
    }
}

/// Smallest `|E|` of a chiral Hamiltonian, from the singular values of its chiral block.
pub fn chiral_gap(real: &LatticeRealization) -> Result<f64> {
    let a = real.chiral_block();
    if a.nrows() == 1 {
        return Ok(a[[0, 0]].norm());
    }
    let (_, s, _) = a.to_owned().svddc(JobSvd::None)?;
    Ok(s.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Flat band from the polar decomposition of the chiral block.
pub fn spectral_flatband(real: &LatticeRealization, gap_tol: f64) -> Result<FlatBand> {
    let (u, s) = polar_decomposition(&real.chiral_block())?;
    let gap = s.iter().cloned().fold(f64::INFINITY, f64::min);
    check_gap(gap, gap_tol)?;
    let res = two_sided_unitarity(&u.view());
    Ok(FlatBand {
        torus: real.torus().clone(),
        half_orbitals: real.half_orbitals(),
        u,
        gap,
        unitarity_residual: res,
        sign_residual: res,
        chirality_leak: 0.0,
        method: FlatBandMethod::Polar,
    })
}

/// Flat band `Q = V sign(Λ) V†` from a full Hermitian diagonalization of `H`.
pub fn eigh_flatband(real: &LatticeRealization, gap_tol: f64) -> Result<FlatBand> {
    let (vals, vecs) = hermitian_eigh(&real.hamiltonian().view())?;
    let gap = vals.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    check_gap(gap, gap_tol)?;
    let mut scaled = vecs.clone();
    for (mut col, &e) in scaled.columns_mut().into_iter().zip(vals.iter()) {
        col *= C64::new(e.signum(), 0.0);
    }
    let q = scaled.dot(&adjoint(&vecs.view()));
    from_sign_matrix(real, q, gap, FlatBandMethod::Eigh)
}

fn from_sign_matrix(real: &LatticeRealization, q: CMatrix, gap: f64, method: FlatBandMethod) -> Result<FlatBand> {
    let m = real.half_dim();
    let eye = Array2::<C64>::eye(2 * m);
    let sign_residual = max_abs(&(q.dot(&q) - eye).view());
    let chirality_leak = max_abs(&q.slice(s![..m, ..m])).max(max_abs(&q.slice(s![m.., m..])));
    let u = q.slice(s![..m, m..]).to_owned();
    let unitarity_residual = two_sided_unitarity(&u.view());
    Ok(FlatBand {
        torus: real.torus().clone(),
        half_orbitals: real.half_orbitals(),
        u,
        gap,
        unitarity_residual,
        sign_residual,
        chirality_leak,
        method,
    })
}

/// Options for [`contour_flatband`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourOptions {
    /// Gauss–Legendre nodes per panel.
    pub nodes: usize,
    pub gap_tol: f64,
    /// Accepted `max |Q² - 1|`.
    pub residual_tol: f64,
}

impl Default for ContourOptions {
    fn default() -> Self {
        Self { nodes: 16, gap_tol: DEFAULT_GAP_TOL, residual_tol: 1e-8 }
    }
}

/// Panels `[0, g], [g, 2g], [2g, 4g], …` up to `top`.
fn graded_panels(g: f64, top: f64) -> Vec<(f64, f64)> {
    let mut panels = Vec::new();
    let mut a = 0.0;
    let mut b = g.min(top);
    while a < top {
        panels.push((a, b));
        a = b;
        b = (2.0 * b).min(top);
    }
    panels
}

/// `Q = 1 - ∮ dz/(iπ) (z - H)^{-1}` on a rectangle around the negative spectrum,
/// crossing the real axis at `0` and below the spectrum.
///
/// Only the upper half is integrated: the lower half contributes `-I_up†`.
pub fn contour_sign(h: &CMatrix, gap: f64, nodes: usize) -> Result<CMatrix> {
    let n = h.nrows();
    let bound = h
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let e_lo = -(bound + 1.0);
    let top = bound.max(1.0);
    let rule = GaussLegendre::new(NonZeroUsize::new(nodes.max(1)).expect("nonzero"));
    let eye = Array2::<C64>::eye(n);

    let mut segments: Vec<(C64, C64)> = Vec::new();
    // up the imaginary axis, graded towards the crossing at 0
    for (a, b) in graded_panels(gap.max(1e-3), top) {
        segments.push((I * a, I * b));
    }
    // along the top edge
    let pieces = 4;
    for p in 0..pieces {
        let a = e_lo * p as f64 / pieces as f64;
        let b = e_lo * (p + 1) as f64 / pieces as f64;
        segments.push((C64::new(a, top), C64::new(b, top)));
    }
    // down to the lower crossing, which is at least 1 below the spectrum
    for (a, b) in graded_panels(1.0, top).into_iter().rev() {
        segments.push((C64::new(e_lo, b), C64::new(e_lo, a)));
    }

    let mut integral = Array2::<C64>::zeros((n, n));
    for (za, zb) in segments {
        let half = (zb - za) * 0.5;
        let mid = (za + zb) * 0.5;
        for &(t, w) in rule.as_node_weight_pairs() {
            let z = mid + half * t;
            let r = (&eye * z - h).inv()?;
            integral.scaled_add(half * w, &r);
        }
    }
    let total = &integral - &adjoint(&integral.view());
    Ok(eye - total * (C64::new(1.0, 0.0) / (I * std::f64::consts::PI)))
}

/// Flat band by resolvent quadrature. Fails with the achieved residual when
/// `max |Q² - 1|` exceeds the tolerance.
pub fn contour_flatband(real: &LatticeRealization, opts: &ContourOptions) -> Result<FlatBand> {
    let gap = chiral_gap(real)?;
    check_gap(gap, opts.gap_tol)?;
    let q = contour_sign(real.hamiltonian(), gap, opts.nodes)?;
    let fb = from_sign_matrix(real, q, gap, FlatBandMethod::Contour)?;
    if fb.sign_residual > opts.residual_tol {
        return Err(Error::QuadratureNotConverged { residual: fb.sign_residual });
    }
    Ok(fb)
}

impl FlatBand {
    /// Wraps a given unitary as the flat band of `[[0, U], [U†, 0]]`.
    pub fn from_unitary(torus: Torus, half_orbitals: usize, u: CMatrix) -> Result<Self> {
        let m = half_orbitals * torus.n_sites();
        if u.dim() != (m, m) {
            return Err(Error::Malformed(format!("unitary must be {m}x{m}")));
        }
        let res = two_sided_unitarity(&u.view());
        Ok(Self {
            torus,
            half_orbitals,
            u,
            gap: 1.0,
            unitarity_residual: res,
            sign_residual: res,
            chirality_leak: 0.0,
            method: FlatBandMethod::Explicit,
        })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn half_orbitals(&self) -> usize {
        self.half_orbitals
    }

    pub fn u(&self) -> &CMatrix {
        &self.u
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn method(&self) -> FlatBandMethod {
        self.method
    }

    /// `max(|U†U - 1|, |UU† - 1|)`.
    pub fn unitarity_residual(&self) -> f64 {
        self.unitarity_residual
    }

    pub fn sign_residual(&self) -> f64 {
        self.sign_residual
    }

    pub fn chirality_leak(&self) -> f64 {
        self.chirality_leak
    }

    /// `Q = [[0, U], [U†, 0]]` in the sector-major ordering.
    pub fn q_matrix(&self) -> CMatrix {
        let m = self.u.nrows();
        let mut q = Array2::<C64>::zeros((2 * m, 2 * m));
        q.slice_mut(s![..m, m..]).assign(&self.u);
        q.slice_mut(s![m.., ..m]).assign(&adjoint(&self.u.view()));
        q
    }

    /// `⟨x|U|y⟩` as an `N × N` block.
    pub fn block(&self, x: usize, y: usize) -> ArrayView2<'_, C64> {
        let n = self.half_orbitals;
        self.u.slice(s![x * n..(x + 1) * n, y * n..(y + 1) * n])
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayProfile {
    pub bins: Vec<ProfileBin>,
    pub decay: DecayFit,
}

impl DecayProfile {
    pub fn rate(&self) -> f64 {
        self.decay.rate
    }
}

/// Operator norms `‖⟨x|U|y⟩‖` averaged over positions and over the given
/// flat bands (which must share one torus), binned by distance and fitted on
/// `[2, L/2 - 2]`.
pub fn decay_profile(bands: &[FlatBand]) -> Result<DecayProfile> {
    let first = bands
        .first()
        .ok_or(Error::InsufficientEnsemble { got: 0, need: 1 })?;
    let torus = first.torus().clone();
    let mut acc = DistanceAccumulator::new();
    for fb in bands {
        if fb.torus() != &torus || fb.half_orbitals() != first.half_orbitals() {
            return Err(Error::Malformed("flat bands live on different lattices".into()));
        }
        accumulate_pairs(&torus, &mut acc, |x, y| operator_norm(&fb.block(x, y)));
    }
    let bins = acc.bins();
    let (lo, hi) = default_window(&torus);
    let decay = fit_decay(&bins, lo, hi)?;
    Ok(DecayProfile { bins, decay })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{model1, model2, realize, SampleSeed};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_chiral(n: usize, gap: f64, seed: u64) -> LatticeRealization {
        // A = W diag(s) V† with s ∈ [gap, gap + 2]
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rand_unitary = |rng: &mut ChaCha8Rng| {
            let g = Array2::from_shape_fn((n, n), |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            polar_decomposition(&g.view()).unwrap().0
        };
        let w = rand_unitary(&mut rng);
        let v = rand_unitary(&mut rng);
        let sv = Array2::from_diag(&ndarray::Array1::from_shape_fn(n, |i| {
            C64::new(gap + 2.0 * i as f64 / n as f64, 0.0)
        }));
        let a = w.dot(&sv).dot(&adjoint(&v.view()));
        LatticeRealization::from_chiral_block(Torus::new(1, n), 1, &a).unwrap()
    }

    #[test]
    fn trivial_two_site_frame() {
        let real = LatticeRealization::from_chiral_block(Torus::new(1, 1), 1, &ndarray::array![[C64::new(1.0, 0.0)]]).unwrap();
        let fb = spectral_flatband(&real, DEFAULT_GAP_TOL).unwrap();
        assert_eq!(fb.u()[[0, 0]], C64::new(1.0, 0.0));
        let q = contour_sign(real.hamiltonian(), 1.0, 24).unwrap();
        let expected = ndarray::array![[C64::new(0.0, 0.0), C64::new(1.0, 0.0)], [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]];
        assert!(max_abs(&(q - expected).view()) < 1e-12);
    }

    #[test]
    fn gap_matches_bloch_oracle() {
        let m = 0.5;
        let l = 64;
        let real = realize(&model1(m), l, None).unwrap();
        let fb = spectral_flatband(&real, DEFAULT_GAP_TOL).unwrap();
        // |A(k)|² = 1 + m² + 2m sin k
        let oracle = (0..l)
            .map(|j| {
                let k = 2.0 * std::f64::consts::PI * j as f64 / l as f64;
                (1.0 + m * m + 2.0 * m * k.sin()).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((fb.gap() - oracle).abs() < 1e-12);
        assert!(fb.unitarity_residual() < 1e-12);
        let q = fb.q_matrix();
        assert!(max_abs(&(q.dot(&q) - Array2::<C64>::eye(2 * l)).view()) < 1e-12);
    }

    #[test]
    fn disordered_sample_invariants() {
        let real = realize(&model2(0.5, 1.0, 1.0), 64, Some(SampleSeed::new(1, 0))).unwrap();
        let fb = spectral_flatband(&real, DEFAULT_GAP_TOL).unwrap();
        assert!(fb.unitarity_residual() < 1e-10);
        let e = eigh_flatband(&real, DEFAULT_GAP_TOL).unwrap();
        let d = max_abs(&(e.u() - fb.u()).view());
        assert!(d < 1e-10, "diff {d:e} gap {} leak {:e}", fb.gap(), e.chirality_leak());
        assert!(e.chirality_leak() < 1e-12);
        assert!(e.sign_residual() < 1e-10);
    }

    #[test]
    fn contour_agrees_with_spectral() {
        let real = random_chiral(25, 0.5, 9);
        let fb = spectral_flatband(&real, DEFAULT_GAP_TOL).unwrap();
        let c = contour_flatband(&real, &ContourOptions::default()).unwrap();
        let diff = max_abs(&(c.q_matrix() - fb.q_matrix()).view()).max(c.chirality_leak());
        assert!(diff < 1e-8, "{diff:e}");
    }

    #[test]
    fn contour_residual_improves_with_nodes() {
        let real = random_chiral(20, 0.3, 4);
        let gap = chiral_gap(&real).unwrap();
        let eye = Array2::<C64>::eye(40);
        let residuals: Vec<f64> = [2, 4, 8]
            .iter()
            .map(|&n| {
                let q = contour_sign(real.hamiltonian(), gap, n).unwrap();
                max_abs(&(q.dot(&q) - &eye).view())
            })
            .collect();
        assert!(residuals[0] > residuals[1] && residuals[1] > residuals[2], "{residuals:?}");
        let coarse = contour_flatband(&real, &ContourOptions { nodes: 2, ..Default::default() });
        assert!(matches!(coarse, Err(Error::QuadratureNotConverged { .. })));
    }

    #[test]
    fn gapless_sample_rejected() {
        let real = realize(&model1(1.0), 40, None).unwrap();
        assert!(matches!(
            spectral_flatband(&real, DEFAULT_GAP_TOL),
            Err(Error::GaplessSample { .. })
        ));
    }

    #[test]
    fn identity_profile_is_delta() {
        let fb = FlatBand::from_unitary(Torus::new(1, 32), 1, Array2::eye(32)).unwrap();
        let p = decay_profile(&[fb]).unwrap();
        assert!(p.rate().is_infinite());
        assert_eq!(p.bins[0].mean_norm, 1.0);
    }

    #[test]
    fn clean_profile_decays() {
        let real = realize(&model1(0.5), 128, None).unwrap();
        let fb = spectral_flatband(&real, DEFAULT_GAP_TOL).unwrap();
        let p = decay_profile(&[fb]).unwrap();
        assert!(p.rate() > 0.3, "rate {}", p.rate());
        assert!(p.decay.fit.unwrap().r_squared > 0.9);
    }
}
