//! Estimators of the odd Chern number of a chiral flat band: momentum-space
//! winding, the real-space trace-per-volume formula, and the Fredholm index
//! of the Dirac-phase compression (Calderon–Fedosov).
//!
//! Conventions: `Ch_d = (m!/d!) (i/2π)^{m+1} ∫ Σ_ρ sgn(ρ) tr ∏_j U⁻¹∂_{ρ_j}U`
//! with `m = (d-1)/2`. A unit shift `⟨x|u|y⟩ = δ_{x,y+1}` (`u(k) = e^{ik}`) has
//! `Ch_1 = -1`, and so does its index.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use ndarray_linalg::{Determinant, JobSvd, SVDDC};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::{double_factorial, factorial, signed_permutations, CliffordRep};
use crate::error::{Error, Result};
use crate::flatband::{FlatBand, DEFAULT_GAP_TOL};
use crate::lattice::Torus;
use crate::linalg::{adjoint, partial_trace, polar_decomposition, CMatrix, C64, I};
use crate::models::HoppingModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Kspace,
    Realspace,
    Fedosov,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Kspace => "kspace",
            Method::Realspace => "realspace",
            Method::Fedosov => "fedosov",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kspace" => Ok(Method::Kspace),
            "realspace" => Ok(Method::Realspace),
            "fedosov" => Ok(Method::Fedosov),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Quantization acceptance thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub max_residual: f64,
    pub max_imag_leak: f64,
}

impl Default for Acceptance {
    fn default() -> Self {
        Self { max_residual: 0.1, max_imag_leak: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantEstimate {
    pub method: Method,
    pub raw: C64,
    pub value: f64,
    pub nearest_int: i64,
    pub residual: f64,
    pub imag_leak: f64,
    /// k-grid points per axis.
    pub grid: Option<usize>,
    pub trunc_radius: Option<usize>,
    /// Sites in the trace region.
    pub trace_sites: Option<usize>,
    pub gap: Option<f64>,
    /// `(radius, value)` at decreasing truncations, for the index.
    pub convergence: Vec<(usize, f64)>,
}

impl InvariantEstimate {
    pub fn new(method: Method, raw: C64) -> Self {
        let value = raw.re;
        let nearest = value.round();
        Self {
            method,
            raw,
            value,
            nearest_int: nearest as i64,
            residual: (value - nearest).abs(),
            imag_leak: raw.im.abs(),
            grid: None,
            trunc_radius: None,
            trace_sites: None,
            gap: None,
            convergence: Vec::new(),
        }
    }

    pub fn accepted(&self, acceptance: &Acceptance) -> bool {
        self.residual < acceptance.max_residual && self.imag_leak < acceptance.max_imag_leak
    }

    /// Largest difference among the recorded truncations.
    pub fn truncation_spread(&self) -> Option<f64> {
        if self.convergence.is_empty() {
            return None;
        }
        let lo = self.convergence.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let hi = self.convergence.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        Some(hi - lo)
    }
}

// ---------------------------------------------------------------- k-space

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KspaceScheme {
    /// Trapezoidal cubature with centred-difference derivatives.
    #[default]
    Cubature,
    /// `-(1/2π) Σ Δ arg det A(k)`, only in `d = 1`.
    PhaseIncrement,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KspaceOptions {
    pub grid: usize,
    pub scheme: KspaceScheme,
    pub gap_tol: f64,
    /// Finite-difference step for `∂U`.
    pub step: f64,
}

impl KspaceOptions {
    pub fn new(grid: usize) -> Self {
        Self { grid, scheme: KspaceScheme::Cubature, gap_tol: DEFAULT_GAP_TOL, step: 1e-5 }
    }
}

/// `m!/d! · (i/2π)^{m+1}`
fn kspace_prefactor(d: usize) -> C64 {
    let m = (d - 1) / 2;
    let ipow = I.powu((m + 1) as u32);
    ipow * (factorial(m) / factorial(d) / (2.0 * std::f64::consts::PI).powi((m + 1) as i32))
}

fn grid_point(idx: usize, d: usize, grid: usize) -> Vec<f64> {
    let mut k = vec![0.0; d];
    let mut rest = idx;
    for axis in (0..d).rev() {
        k[axis] = 2.0 * std::f64::consts::PI * (rest % grid) as f64 / grid as f64;
        rest /= grid;
    }
    k
}

/// Odd Chern number of the unitary `U(k) = polar(A(k))` for an arbitrary
/// chiral block `A(k)` on `T^d`. Returns the raw value and the smallest
/// singular value met on the grid.
pub fn kspace_winding<F>(dim: usize, opts: &KspaceOptions, block: F) -> Result<(C64, f64)>
where
    F: Fn(&[f64]) -> CMatrix + Sync,
{
    if dim == 0 || dim % 2 == 0 {
        return Err(Error::InvalidDimension(dim));
    }
    if opts.grid < 2 {
        return Err(Error::InvalidParameter("k-grid needs at least 2 points per axis".into()));
    }
    let g = opts.grid;
    match opts.scheme {
        KspaceScheme::PhaseIncrement => {
            if dim != 1 {
                return Err(Error::InvalidParameter("phase-increment winding is only defined for d = 1".into()));
            }
            let samples: Vec<(C64, f64)> = (0..g)
                .into_par_iter()
                .map(|j| {
                    let a = block(&grid_point(j, 1, g));
                    let (_, s) = polar_decomposition(&a.view())?;
                    let gap = s.iter().cloned().fold(f64::INFINITY, f64::min);
                    let det = if a.nrows() == 1 { a[[0, 0]] } else { a.det()? };
                    Ok((det, gap))
                })
                .collect::<Result<_>>()?;
            let gap = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
            if gap <= opts.gap_tol {
                return Err(Error::GaplessSample { min_abs_energy: gap, tolerance: opts.gap_tol });
            }
            let total: f64 = (0..g).map(|j| (samples[(j + 1) % g].0 / samples[j].0).arg()).sum();
            Ok((C64::new(-total / (2.0 * std::f64::consts::PI), 0.0), gap))
        }
        KspaceScheme::Cubature => {
            let perms = signed_permutations(dim);
            let h = opts.step;
            let n_points = g.pow(dim as u32);
            let values: Vec<(C64, f64)> = (0..n_points)
                .into_par_iter()
                .map(|idx| {
                    let k = grid_point(idx, dim, g);
                    let (u, s) = polar_decomposition(&block(&k).view())?;
                    let gap = s.iter().cloned().fold(f64::INFINITY, f64::min);
                    let u_inv = adjoint(&u.view());
                    let mut b = Vec::with_capacity(dim);
                    let mut kk = k.clone();
                    for j in 0..dim {
                        kk[j] = k[j] + h;
                        let up = polar_decomposition(&block(&kk).view())?.0;
                        kk[j] = k[j] - h;
                        let dn = polar_decomposition(&block(&kk).view())?.0;
                        kk[j] = k[j];
                        b.push(u_inv.dot(&((up - dn) * C64::new(0.5 / h, 0.0))));
                    }
                    let mut sum = C64::new(0.0, 0.0);
                    for (p, sign) in &perms {
                        let mut prod = b[p[0]].clone();
                        for &j in &p[1..] {
                            prod = prod.dot(&b[j]);
                        }
                        sum += prod.diag().sum() * *sign;
                    }
                    Ok((sum, gap))
                })
                .collect::<Result<_>>()?;
            let gap = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
            if gap <= opts.gap_tol {
                return Err(Error::GaplessSample { min_abs_energy: gap, tolerance: opts.gap_tol });
            }
            let total: C64 = values.iter().map(|v| v.0).sum();
            let measure = (2.0 * std::f64::consts::PI / g as f64).powi(dim as i32);
            Ok((kspace_prefactor(dim) * total * measure, gap))
        }
    }
}

/// Momentum-space odd Chern number of a clean model.
pub fn kspace_odd_chern(model: &HoppingModel, grid: usize) -> Result<InvariantEstimate> {
    kspace_odd_chern_with(model, &KspaceOptions::new(grid))
}

pub fn kspace_odd_chern_with(model: &HoppingModel, opts: &KspaceOptions) -> Result<InvariantEstimate> {
    if !model.is_periodic() {
        return Err(Error::NotPeriodic("momentum-space winding needs a clean model"));
    }
    let (raw, gap) = kspace_winding(model.dim(), opts, |k| {
        model.bloch_chiral_block(k).expect("periodic model has a Bloch Hamiltonian")
    })?;
    let mut est = InvariantEstimate::new(Method::Kspace, raw);
    est.grid = Some(opts.grid);
    est.gap = Some(gap);
    Ok(est)
}

// ---------------------------------------------------------------- real space

/// Phase of the real-space prefactor `i (±iπ)^m / d!!`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefactorConvention {
    /// `i (iπ)^m / d!!`, consistent with the momentum-space formula.
    #[default]
    Winding,
    /// `i (-iπ)^m / d!!`.
    Local,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealSpaceOptions {
    pub trace_fraction: f64,
    pub convention: PrefactorConvention,
}

impl Default for RealSpaceOptions {
    fn default() -> Self {
        Self { trace_fraction: 0.5, convention: PrefactorConvention::Winding }
    }
}

fn realspace_prefactor(d: usize, convention: PrefactorConvention) -> C64 {
    let m = (d - 1) / 2;
    let base = match convention {
        PrefactorConvention::Winding => I * std::f64::consts::PI,
        PrefactorConvention::Local => -I * std::f64::consts::PI,
    };
    // the extra i^d comes from the i in each i[X_j, U]
    I * base.powu(m as u32) * I.powu(d as u32) / double_factorial(d)
}

/// `⟨x|[X_j, U]|y⟩ = wrap(x_j - y_j) ⟨x|U|y⟩`.
fn position_commutator(u: &CMatrix, torus: &Torus, n: usize, axis: usize) -> CMatrix {
    let v = torus.n_sites();
    let coord: Vec<i64> = (0..v).map(|x| torus.coords(x)[axis]).collect();
    let mut c = u.clone();
    for ((r, col), z) in c.indexed_iter_mut() {
        let dx = torus.wrap(coord[r / n] - coord[col / n]);
        *z *= dx as f64;
    }
    c
}

/// Columns `rows` of the antisymmetrized product
/// `Σ_ρ sgn(ρ) A_{s_ρ1} ⋯ A_{s_ρk}` over the index set `mask`, expanded along
/// the first factor and memoized. `cols[j]` holds the columns `rows` of `A_j`.
fn alternating_product(mask: u32, a: &[CMatrix], cols: &[CMatrix], memo: &mut HashMap<u32, CMatrix>) -> CMatrix {
    if let Some(m) = memo.get(&mask) {
        return m.clone();
    }
    let members: Vec<usize> = (0..a.len()).filter(|&j| mask & (1 << j) != 0).collect();
    let result = if members.len() == 1 {
        cols[members[0]].clone()
    } else {
        let mut acc = Array2::<C64>::zeros(cols[0].dim());
        for (pos, &j) in members.iter().enumerate() {
            let rest = alternating_product(mask & !(1 << j), a, cols, memo);
            let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
            acc.scaled_add(C64::new(sign, 0.0), &a[j].dot(&rest));
        }
        acc
    };
    memo.insert(mask, result.clone());
    result
}

/// `Σ_p (A M)_{rows[p], p}` for `M` holding the columns `rows` of some matrix.
fn trace_against_columns(a: &CMatrix, m: &CMatrix, rows: &[usize]) -> C64 {
    rows.iter()
        .enumerate()
        .map(|(p, &i)| a.row(i).iter().zip(m.column(p).iter()).map(|(x, y)| x * y).sum::<C64>())
        .sum()
}

/// Real-space odd Chern number, with the trace per volume taken over the
/// central `trace_fraction` of the sites.
pub fn realspace_odd_chern(fb: &FlatBand, opts: &RealSpaceOptions) -> Result<InvariantEstimate> {
    let torus = fb.torus();
    let d = torus.dim();
    if d % 2 == 0 {
        return Err(Error::InvalidDimension(d));
    }
    if !(opts.trace_fraction > 0.0 && opts.trace_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("trace fraction {} not in (0, 1]", opts.trace_fraction)));
    }
    let n = fb.half_orbitals();
    let u = fb.u();
    let u_adj = adjoint(&u.view());
    let a: Vec<CMatrix> = (0..d)
        .map(|j| u_adj.dot(&position_commutator(u, torus, n, j)))
        .collect();

    let sites = torus.central_region(opts.trace_fraction);
    let rows: Vec<usize> = sites.iter().flat_map(|&x| x * n..(x + 1) * n).collect();
    let full: u32 = (1 << d) - 1;
    let trace = if d == 1 {
        partial_trace(&a[0].view(), &rows)
    } else {
        let cols: Vec<CMatrix> = a.iter().map(|aj| aj.select(Axis(1), &rows)).collect();
        let mut memo = HashMap::new();
        let mut t = C64::new(0.0, 0.0);
        for j in 0..d {
            let rest = alternating_product(full & !(1 << j), &a, &cols, &mut memo);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            t += trace_against_columns(&a[j], &rest, &rows) * sign;
        }
        t
    };
    let raw = realspace_prefactor(d, opts.convention) * trace / sites.len() as f64;
    let mut est = InvariantEstimate::new(Method::Realspace, raw);
    est.trace_sites = Some(sites.len());
    est.gap = Some(fb.gap());
    Ok(est)
}

// ---------------------------------------------------------------- Dirac phase

/// Site-diagonal phase `F(x) = ((x - c) + x₀)·σ / |(x - c) + x₀|` of the
/// shifted Dirac operator, in minimal-image coordinates around the centre `c`.
/// Where `x - c + x₀ = 0` the regularization `F = 1` is used.
#[derive(Clone, Debug)]
pub struct DiracPhase {
    torus: Torus,
    center: usize,
    x0: Vec<f64>,
    rep: CliffordRep,
    blocks: Vec<CMatrix>,
}

impl DiracPhase {
    pub fn new(torus: &Torus, x0: &[f64], center: usize) -> Result<Self> {
        let d = torus.dim();
        if x0.len() != d {
            return Err(Error::InvalidParameter(format!("offset must have {d} components")));
        }
        if x0.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidParameter("offset must lie in [0, 1]^d".into()));
        }
        if center >= torus.n_sites() {
            return Err(Error::InvalidParameter("trace centre outside the lattice".into()));
        }
        let rep = CliffordRep::new(d)?;
        let blocks = (0..torus.n_sites())
            .map(|x| {
                let r: Vec<f64> = torus
                    .displacement(x, center)
                    .iter()
                    .zip(x0)
                    .map(|(&dx, &o)| dx as f64 + o)
                    .collect();
                let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    Array2::eye(rep.rep_dim())
                } else {
                    let unit: Vec<f64> = r.iter().map(|v| v / norm).collect();
                    rep.dot(&unit)
                }
            })
            .collect();
        Ok(Self { torus: torus.clone(), center, x0: x0.to_vec(), rep, blocks })
    }

    /// Centred at the lattice's central site.
    pub fn centered(torus: &Torus, x0: &[f64]) -> Result<Self> {
        Self::new(torus, x0, torus.central_site())
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn rep(&self) -> &CliffordRep {
        &self.rep
    }

    pub fn rep_dim(&self) -> usize {
        self.rep.rep_dim()
    }

    pub fn block(&self, site: usize) -> &CMatrix {
        &self.blocks[site]
    }
}

// ---------------------------------------------------------------- index

/// Arguments of the index cochain `Tr'(a₀ [F, a₁] ⋯ [F, a_d])`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CochainArguments {
    /// `U⁻¹ - 1, U - 1, U⁻¹ - 1, …`
    #[default]
    Alternating,
    /// `U⁻¹ - 1, U - 1, U - 1, …`
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FedosovOptions {
    pub trunc_radius: usize,
    pub arguments: CochainArguments,
}

impl FedosovOptions {
    pub fn new(trunc_radius: usize) -> Self {
        Self { trunc_radius, arguments: CochainArguments::Alternating }
    }
}

/// `[F, V]` compressed to the sites `box_sites`, with `V = U` or `U†`.
/// Row/column order is `(site, orbital, spinor)`.
fn truncated_commutator(fb: &FlatBand, phase: &DiracPhase, box_sites: &[usize], dagger: bool) -> CMatrix {
    let n = fb.half_orbitals();
    let s = phase.rep_dim();
    let u = fb.u();
    let dim = box_sites.len() * n * s;
    let mut k = Array2::<C64>::zeros((dim, dim));
    for (a, &x) in box_sites.iter().enumerate() {
        for (b, &y) in box_sites.iter().enumerate() {
            let df = phase.block(x) - phase.block(y);
            if df.iter().all(|z| z.norm() == 0.0) {
                continue;
            }
            for p in 0..n {
                for q in 0..n {
                    let v = if dagger { u[[y * n + q, x * n + p]].conj() } else { u[[x * n + p, y * n + q]] };
                    if v == C64::default() {
                        continue;
                    }
                    for al in 0..s {
                        for be in 0..s {
                            k[[(a * n + p) * s + al, (b * n + q) * s + be]] = v * df[[al, be]];
                        }
                    }
                }
            }
        }
    }
    k
}

/// `Tr(F A)` with `F` the (block-diagonal) Dirac phase on the box.
fn trace_with_phase(phase: &DiracPhase, box_sites: &[usize], n: usize, a: &CMatrix) -> C64 {
    let s = phase.rep_dim();
    let mut t = C64::new(0.0, 0.0);
    for (i, &x) in box_sites.iter().enumerate() {
        let f = phase.block(x);
        for p in 0..n {
            let base = (i * n + p) * s;
            for al in 0..s {
                for be in 0..s {
                    t += f[[al, be]] * a[[base + be, base + al]];
                }
            }
        }
    }
    t
}

/// Index cochain evaluated with all operators truncated to the cube of
/// radius `radius` around the phase's centre.
pub fn fedosov_at_radius(fb: &FlatBand, phase: &DiracPhase, radius: usize, arguments: CochainArguments) -> Result<C64> {
    let torus = fb.torus();
    if phase.torus() != torus {
        return Err(Error::Malformed("Dirac phase and flat band live on different lattices".into()));
    }
    if 2 * radius >= torus.size() {
        return Err(Error::InvalidParameter(format!(
            "truncation radius {radius} must be below L/2 = {}",
            torus.size() / 2
        )));
    }
    let d = torus.dim();
    let box_sites = torus.cube_around(phase.center(), radius);
    let k_u = truncated_commutator(fb, phase, &box_sites, false);
    let k_ud = truncated_commutator(fb, phase, &box_sites, true);
    let mut prod = k_ud.clone();
    for i in 1..=d {
        let next = match arguments {
            CochainArguments::Alternating if i % 2 == 0 => &k_ud,
            _ => &k_u,
        };
        prod = prod.dot(next);
    }
    let t = trace_with_phase(phase, &box_sites, fb.half_orbitals(), &prod);
    // λ_d · ½ with λ_d = 2^{-d} i^{d+1}
    let lambda = I.powu((d + 1) as u32) * 0.5f64.powi(d as i32 + 1);
    Ok(lambda * t)
}

/// Fredholm index of the Dirac-phase compression, with a convergence record
/// at `R/2, 3R/4, R`.
pub fn fedosov_index(fb: &FlatBand, phase: &DiracPhase, opts: &FedosovOptions) -> Result<InvariantEstimate> {
    let r = opts.trunc_radius;
    if r == 0 {
        return Err(Error::InvalidParameter("truncation radius must be positive".into()));
    }
    let mut radii = vec![(r / 2).max(1), (3 * r / 4).max(1), r];
    radii.dedup();
    let mut convergence = Vec::with_capacity(radii.len());
    let mut raw = C64::new(0.0, 0.0);
    for &rad in &radii {
        raw = fedosov_at_radius(fb, phase, rad, opts.arguments)?;
        convergence.push((rad, raw.re));
    }
    let mut est = InvariantEstimate::new(Method::Fedosov, raw);
    est.trunc_radius = Some(r);
    est.gap = Some(fb.gap());
    est.convergence = convergence;
    Ok(est)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchattenRow {
    pub radius: usize,
    pub p: u32,
    pub sum: f64,
}

/// Partial Schatten sums `Σ s_i^p` of the truncated `[F, U]`.
pub fn summability_diagnostic(
    fb: &FlatBand,
    phase: &DiracPhase,
    radii: &[usize],
    powers: &[u32],
) -> Result<Vec<SchattenRow>> {
    let torus = fb.torus();
    let mut rows = Vec::new();
    for &r in radii {
        if 2 * r >= torus.size() {
            return Err(Error::InvalidParameter(format!("radius {r} must be below L/2")));
        }
        let box_sites = torus.cube_around(phase.center(), r);
        let k = truncated_commutator(fb, phase, &box_sites, false);
        let (_, s, _) = k.svddc(JobSvd::None)?;
        for &p in powers {
            rows.push(SchattenRow { radius: r, p, sum: s.iter().map(|v| v.powi(p as i32)).sum() });
        }
    }
    Ok(rows)
}

/// Relative change `(S(R₂) - S(R₁)) / S(R₁)` of the `p`-sum between two radii
/// of a summability table.
pub fn schatten_growth(rows: &[SchattenRow], p: u32, r1: usize, r2: usize) -> Option<f64> {
    let get = |r| rows.iter().find(|row| row.p == p && row.radius == r).map(|row| row.sum);
    let (a, b) = (get(r1)?, get(r2)?);
    Some((b - a) / a)
}
