//! Fractional-moment localization diagnostics: averaged `‖G(x,y)‖^s` of the
//! regularized resolvent, binned by distance, and scans that put them next to
//! the invariants.

use ndarray::{s, Array2};
use ndarray_linalg::Inverse;
use serde::{Deserialize, Serialize};

use crate::ensemble::{run_ensemble, EnsembleSpec, MethodSummary, ScanAxis};
use crate::error::{Error, Result};
use crate::linalg::{operator_norm, CMatrix, C64};
use crate::models::LatticeRealization;
use crate::profile::{accumulate_pairs, default_window, fit_decay, DecayFit, DistanceAccumulator, ProfileBin};

/// `G = (H - E - iη)^{-1}`.
pub fn green_function(real: &LatticeRealization, energy: f64, eta: f64) -> Result<CMatrix> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("η must be positive, got {eta}")));
    }
    let h = real.hamiltonian();
    let n = h.nrows();
    let mut m = h.clone();
    let shift = C64::new(energy, eta);
    for i in 0..n {
        m[[i, i]] -= shift;
    }
    if n == 1 {
        return Ok(Array2::from_elem((1, 1), C64::new(1.0, 0.0) / m[[0, 0]]));
    }
    Ok(m.inv()?)
}

/// `2N × 2N` block `⟨x|G|y⟩` gathered from the sector-major layout.
fn site_block(g: &CMatrix, real: &LatticeRealization, x: usize, y: usize) -> CMatrix {
    let n = real.half_orbitals();
    let two_n = 2 * n;
    let mut b = Array2::<C64>::zeros((two_n, two_n));
    for si in 0..2 {
        for sj in 0..2 {
            let r0 = real.row(si, x, 0);
            let c0 = real.row(sj, y, 0);
            b.slice_mut(s![si * n..(si + 1) * n, sj * n..(sj + 1) * n])
                .assign(&g.slice(s![r0..r0 + n, c0..c0 + n]));
        }
    }
    b
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracMomentOptions {
    pub s: f64,
    pub energy: f64,
    pub eta: f64,
    pub min_ensemble: usize,
}

impl Default for FracMomentOptions {
    fn default() -> Self {
        Self { s: 0.5, energy: 0.0, eta: 1e-3, min_ensemble: 20 }
    }
}

impl FracMomentOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidParameter(format!("s must lie in (0, 1), got {}", self.s)));
        }
        if !(self.eta > 0.0) {
            return Err(Error::InvalidParameter(format!("η must be positive, got {}", self.eta)));
        }
        Ok(())
    }
}

/// Adds `‖⟨x|G|y⟩‖^s` for every site pair of one realization.
pub fn accumulate_fractional_moments(
    real: &LatticeRealization,
    opts: &FracMomentOptions,
    acc: &mut DistanceAccumulator,
) -> Result<()> {
    opts.validate()?;
    let g = green_function(real, opts.energy, opts.eta)?;
    accumulate_pairs(real.torus(), acc, |x, y| operator_norm(&site_block(&g, real, x, y).view()).powf(opts.s));
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracMomentReport {
    pub s: f64,
    pub energy: f64,
    pub eta: f64,
    pub samples: usize,
    pub bins: Vec<ProfileBin>,
    /// Fitted rate `β_s`; `+∞` when nothing above the noise floor remains.
    pub beta: f64,
    /// Prefactor `C_s`.
    pub prefactor: f64,
    pub fit_residual: f64,
    pub decay: DecayFit,
}

impl FracMomentReport {
    /// `β_s ≤ 0`: no exponential decay detected.
    pub fn no_decay(&self) -> bool {
        self.beta <= 0.0
    }

    pub fn from_bins(bins: Vec<ProfileBin>, samples: usize, opts: &FracMomentOptions, window: (f64, f64)) -> Result<Self> {
        let decay = fit_decay(&bins, window.0, window.1)?;
        let (prefactor, fit_residual) = decay.fit.map(|f| (f.prefactor(), f.residual)).unwrap_or((0.0, 0.0));
        Ok(Self {
            s: opts.s,
            energy: opts.energy,
            eta: opts.eta,
            samples,
            bins,
            beta: decay.rate,
            prefactor,
            fit_residual,
            decay,
        })
    }
}

/// Ensemble- and position-averaged fractional moments, fitted on `[2, L/2 - 2]`.
pub fn fractional_moment_fit(reals: &[LatticeRealization], opts: &FracMomentOptions) -> Result<FracMomentReport> {
    opts.validate()?;
    if reals.len() < opts.min_ensemble.max(1) {
        return Err(Error::InsufficientEnsemble { got: reals.len(), need: opts.min_ensemble.max(1) });
    }
    let torus = reals[0].torus().clone();
    if reals.iter().any(|r| r.torus() != &torus) {
        return Err(Error::Malformed("realizations live on different lattices".into()));
    }
    let mut acc = DistanceAccumulator::new();
    for r in reals {
        accumulate_fractional_moments(r, opts, &mut acc)?;
    }
    FracMomentReport::from_bins(acc.bins(), reals.len(), opts, default_window(&torus))
}

/// One row of a transition scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanPoint {
    pub axis: ScanAxis,
    pub value: f64,
    pub summaries: Vec<MethodSummary>,
    /// Decay rate of `‖⟨x|U|y⟩‖`.
    pub decay_rate: f64,
    pub decay_r_squared: Option<f64>,
    pub beta_s: Option<f64>,
    pub min_gap: f64,
    pub rejected: usize,
}

/// Runs the ensemble at every grid value of `axis` and reports invariant
/// statistics next to the flat-band decay rate and (optionally) `β_s`.
pub fn transition_scan(base: &EnsembleSpec, axis: ScanAxis, values: &[f64]) -> Result<Vec<ScanPoint>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("scan grid is empty".into()));
    }
    values
        .iter()
        .map(|&v| {
            let mut spec = base.clone();
            spec.model = spec.model.with_axis(axis, v);
            spec.decay = true;
            let out = run_ensemble(&spec)?;
            let decay = out.decay.as_ref().map(|d| &d.decay);
            Ok(ScanPoint {
                axis,
                value: v,
                summaries: out.summaries(&spec.acceptance),
                decay_rate: decay.map(|d| d.rate).unwrap_or(f64::NAN),
                decay_r_squared: decay.and_then(|d| d.fit.map(|f| f.r_squared)),
                beta_s: out.fracmom.as_ref().map(|f| f.beta),
                min_gap: out.min_gap(),
                rejected: out.rejected,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Torus;
    use crate::linalg::max_abs;
    use crate::models::{model1, model2, realize, SampleSeed};

    #[test]
    fn single_site_zero_hamiltonian() {
        // H = [[0, 0], [0, 0]] on one site with one orbital pair
        let real = LatticeRealization::from_chiral_block(Torus::new(1, 1), 1, &Array2::zeros((1, 1))).unwrap();
        let g = green_function(&real, 0.0, 1.0).unwrap();
        assert!((g[[0, 0]] - C64::new(0.0, 1.0)).norm() < 1e-15);
        assert!(green_function(&real, 0.0, 0.0).is_err());
    }

    #[test]
    fn diagonal_resolvent() {
        let a = Array2::from_diag(&ndarray::arr1(&[C64::new(0.5, 0.0), C64::new(2.0, 0.0)]));
        let real = LatticeRealization::from_chiral_block(Torus::new(1, 2), 1, &a).unwrap();
        // H = [[0, A], [A, 0]] is diagonal in the basis (e ± f)/√2 with energies ±a;
        // check (H - z) G = 1 instead
        let z = C64::new(0.3, 0.1);
        let g = green_function(&real, 0.3, 0.1).unwrap();
        let mut m = real.hamiltonian().clone();
        for i in 0..4 {
            m[[i, i]] -= z;
        }
        assert!(max_abs(&(m.dot(&g) - Array2::<C64>::eye(4)).view()) < 1e-14);
    }

    #[test]
    fn resolvent_identity() {
        let real = realize(&model2(0.5, 1.0, 1.0), 24, Some(SampleSeed::new(3, 0))).unwrap();
        let (e, eta) = (0.2, 0.05);
        let g1 = green_function(&real, e, eta).unwrap();
        let g2 = green_function(&real, e, 2.0 * eta).unwrap();
        // G(z1) - G(z2) = (z1 - z2) G(z1) G(z2) with z = E + iη
        let lhs = &g1 - &g2;
        let rhs = g1.dot(&g2) * C64::new(0.0, -eta);
        assert!(max_abs(&(lhs - rhs).view()) < 1e-10);
    }

    #[test]
    fn gapped_clean_chain_decays() {
        let real = realize(&model1(0.5), 64, None).unwrap();
        let opts = FracMomentOptions { min_ensemble: 1, ..Default::default() };
        let r = fractional_moment_fit(&[real], &opts).unwrap();
        assert!(r.beta > 0.1, "β = {}", r.beta);
    }

    #[test]
    fn ensemble_size_enforced() {
        let real = realize(&model1(0.5), 16, None).unwrap();
        assert!(matches!(
            fractional_moment_fit(&[real], &FracMomentOptions::default()),
            Err(Error::InsufficientEnsemble { got: 1, need: 20 })
        ));
    }

    #[test]
    fn in_band_clean_chain_does_not_decay() {
        // E = 1 lies inside the band |A(k)| ∈ [0.5, 1.5]
        let real = realize(&model1(0.5), 64, None).unwrap();
        let opts = FracMomentOptions { energy: 1.0, min_ensemble: 1, ..Default::default() };
        let r = fractional_moment_fit(&[real], &opts).unwrap();
        let err = r.decay.fit.unwrap().rate_std_error;
        assert!(r.beta.abs() < 0.02 + 3.0 * err, "β = {} ± {err}", r.beta);
    }
}
