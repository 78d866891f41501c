//! Irreducible representations of the odd complex Clifford algebras and the
//! trace identities behind the local index formula.
//!
//! Generators `σ_1..σ_d` are Hermitian `d' × d'` matrices with `d' = 2^((d-1)/2)`
//! satisfying `σ_i σ_j + σ_j σ_i = 2 δ_ij` and the product convention
//! `σ_1 ⋯ σ_d = (-i)^((d-1)/2)`. With that convention
//!
//! ```text
//! tr(σ_ρ1 ⋯ σ_ρd) = (-2i)^((d-1)/2) sgn(ρ)
//! tr((y_1·σ) ⋯ (y_d·σ)) = (-2i)^((d-1)/2) det[y_1 … y_d]
//! ```
//!
//! Generator indices in this module are zero-based.

use ndarray::linalg::kron;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, real_determinant, CMatrix, C64, I};

/// Largest dimension the tensor construction is offered for.
pub const MAX_CLIFFORD_DIM: usize = 7;

#[derive(Clone, Debug)]
pub struct CliffordRep {
    dim: usize,
    generators: Vec<CMatrix>,
}

fn pauli() -> [CMatrix; 3] {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    [
        array![[o, l], [l, o]],
        array![[o, -I], [I, o]],
        array![[l, o], [o, -l]],
    ]
}

/// `(-i)^k`
pub fn minus_i_pow(k: usize) -> C64 {
    match k % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, -1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, 1.0),
    }
}

pub fn double_factorial(n: usize) -> f64 {
    (1..=n).rev().step_by(2).map(|k| k as f64).product()
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn check_odd(dim: usize) -> Result<()> {
    if dim == 0 || dim % 2 == 0 {
        return Err(Error::InvalidDimension(dim));
    }
    Ok(())
}

impl CliffordRep {
    /// Builds the representation by the usual doubling `γ ↦ γ ⊗ σ_x`,
    /// `1 ⊗ σ_y`, `1 ⊗ σ_z`, then negates the last generator if the full
    /// product comes out as `-(-i)^((d-1)/2)`.
    pub fn new(dim: usize) -> Result<Self> {
        check_odd(dim)?;
        if dim > MAX_CLIFFORD_DIM {
            return Err(Error::InvalidParameter(format!(
                "Clifford dimension {dim} exceeds the supported maximum {MAX_CLIFFORD_DIM}"
            )));
        }
        let [sx, sy, sz] = pauli();
        let mut gens: Vec<CMatrix> = vec![Array2::from_elem((1, 1), C64::new(1.0, 0.0))];
        while gens.len() < dim {
            let n = gens[0].nrows();
            let one = Array2::<C64>::eye(n);
            let mut next: Vec<CMatrix> = gens.iter().map(|g| kron(g, &sx)).collect();
            next.push(kron(&one, &sy));
            next.push(kron(&one, &sz));
            gens = next;
        }
        let mut rep = Self { dim, generators: gens };
        let expected = minus_i_pow((dim - 1) / 2);
        let phase = rep.product()[[0, 0]];
        if (phase - expected).norm() > 1e-12 {
            debug_assert!((phase + expected).norm() < 1e-12);
            let last = rep.generators.last_mut().expect("at least one generator");
            last.mapv_inplace(|z| -z);
        }
        Ok(rep)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `d' = 2^((d-1)/2)`
    pub fn rep_dim(&self) -> usize {
        self.generators[0].nrows()
    }

    pub fn generators(&self) -> &[CMatrix] {
        &self.generators
    }

    /// `σ_1 σ_2 ⋯ σ_d`
    pub fn product(&self) -> CMatrix {
        let n = self.rep_dim();
        self.generators
            .iter()
            .fold(Array2::eye(n), |acc: CMatrix, g| acc.dot(g))
    }

    /// Largest entrywise violation of the anticommutation relations.
    pub fn anticommutator_residual(&self) -> f64 {
        let n = self.rep_dim();
        let mut r = 0.0f64;
        for (i, a) in self.generators.iter().enumerate() {
            for (j, b) in self.generators.iter().enumerate() {
                let mut ac = a.dot(b) + b.dot(a);
                if i == j {
                    ac -= &(Array2::<C64>::eye(n) * C64::new(2.0, 0.0));
                }
                r = r.max(max_abs(&ac.view()));
            }
        }
        r
    }

    /// `v·σ` for a real vector of length `d`.
    pub fn dot(&self, v: &[f64]) -> CMatrix {
        let n = self.rep_dim();
        let mut m = Array2::<C64>::zeros((n, n));
        for (g, &c) in self.generators.iter().zip(v) {
            m.scaled_add(C64::new(c, 0.0), g);
        }
        m
    }

    /// `tr(σ_{i_1} ⋯ σ_{i_q})` by explicit matrix products.
    pub fn trace_product(&self, indices: &[usize]) -> Result<C64> {
        let n = self.rep_dim();
        let mut acc = Array2::<C64>::eye(n);
        for &i in indices {
            let g = self
                .generators
                .get(i)
                .ok_or(Error::IndexOutOfRange { index: i, dim: self.dim })?;
            acc = acc.dot(g);
        }
        Ok(acc.diag().sum())
    }

    /// `tr((y_1·σ) ⋯ (y_d·σ))`.
    pub fn trace_sigma_dot(&self, vectors: &[Vec<f64>]) -> Result<C64> {
        if vectors.len() != self.dim || vectors.iter().any(|v| v.len() != self.dim) {
            return Err(Error::Malformed(format!(
                "expected {} vectors of length {}",
                self.dim, self.dim
            )));
        }
        if vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Malformed("non-finite vector component".into()));
        }
        let mut tracer = DotTracer::new(self);
        Ok(tracer.trace(vectors.iter().map(|v| v.as_slice())))
    }
}

/// Allocation-free evaluator of `tr(∏ (v_i·σ))` for the Monte Carlo loop.
struct DotTracer {
    n: usize,
    gens: Vec<Vec<C64>>,
    acc: Vec<C64>,
    factor: Vec<C64>,
    tmp: Vec<C64>,
}

impl DotTracer {
    fn new(rep: &CliffordRep) -> Self {
        let n = rep.rep_dim();
        Self {
            n,
            gens: rep.generators.iter().map(|g| g.iter().cloned().collect()).collect(),
            acc: vec![C64::default(); n * n],
            factor: vec![C64::default(); n * n],
            tmp: vec![C64::default(); n * n],
        }
    }

    fn trace<'a>(&mut self, vectors: impl IntoIterator<Item = &'a [f64]>) -> C64 {
        let n = self.n;
        self.acc.iter_mut().for_each(|z| *z = C64::default());
        for i in 0..n {
            self.acc[i * n + i] = C64::new(1.0, 0.0);
        }
        for v in vectors {
            self.factor.iter_mut().for_each(|z| *z = C64::default());
            for (g, &c) in self.gens.iter().zip(v) {
                for (f, x) in self.factor.iter_mut().zip(g) {
                    *f += x * c;
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let mut s = C64::default();
                    for k in 0..n {
                        s += self.acc[i * n + k] * self.factor[k * n + j];
                    }
                    self.tmp[i * n + j] = s;
                }
            }
            std::mem::swap(&mut self.acc, &mut self.tmp);
        }
        (0..n).map(|i| self.acc[i * n + i]).sum()
    }
}

/// A `d`-simplex in `R^d`.
#[derive(Clone, Debug)]
pub struct Simplex {
    vertices: Vec<Vec<f64>>,
}

impl Simplex {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let d = vertices.len().saturating_sub(1);
        if d == 0 || vertices.iter().any(|v| v.len() != d) {
            return Err(Error::Malformed("a d-simplex needs d+1 points in R^d".into()));
        }
        Ok(Self { vertices })
    }

    /// The simplex `[0, x_1, …, x_d]`, whose oriented volume is
    /// `det[x_1 … x_d] / d!`.
    pub fn with_origin(points: &[Vec<f64>]) -> Result<Self> {
        let d = points.first().map_or(0, |p| p.len());
        let mut v = vec![vec![0.0; d]];
        v.extend(points.iter().cloned());
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    /// `det[v_1 - v_0, …, v_d - v_0] / d!`, so that `[0, e_1, …, e_d]` has
    /// volume `+1/d!`.
    pub fn oriented_volume(&self) -> f64 {
        let d = self.dim();
        let v0 = &self.vertices[0];
        // rows of the transpose; the determinant is the same
        let cols: Vec<Vec<f64>> = self.vertices[1..]
            .iter()
            .map(|v| v.iter().zip(v0).map(|(a, b)| a - b).collect())
            .collect();
        real_determinant(&cols) / factorial(d)
    }
}

/// Determinant of the matrix with columns `x_1..x_d`.
fn points_determinant(points: &[Vec<f64>]) -> f64 {
    real_determinant(points)
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.len();
    check_odd(d)?;
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Malformed(format!("expected {d} points in R^{d}")));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Malformed("non-finite coordinate".into()));
    }
    Ok(d)
}

/// Closed-form side of the key geometric identity:
/// `2^d (-iπ)^((d-1)/2) / d!! · det[x_1 … x_d]`.
pub fn key_identity_rhs(points: &[Vec<f64>]) -> Result<C64> {
    let d = check_points(points)?;
    let m = (d - 1) / 2;
    let pref = minus_i_pow(m) * PI.powi(m as i32) * 2f64.powi(d as i32) / double_factorial(d);
    Ok(pref * points_determinant(points))
}

/// Whether `|det[x_1..x_d]| < tol · ∏|x_i|` (both sides of the identity vanish).
pub fn is_near_degenerate(points: &[Vec<f64>], tol: f64) -> bool {
    let scale: f64 = points
        .iter()
        .map(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt())
        .product();
    points_determinant(points).abs() < tol * scale
}

#[derive(Clone, Debug)]
pub struct KeyIdentityParams {
    /// Number of antithetic sample pairs.
    pub samples: usize,
    pub seed: u64,
    /// `R_cut = cutoff_factor · max|x_i|`; only used to split the estimate
    /// into an inner and a tail contribution.
    pub cutoff_factor: f64,
    /// Relative standard error above which the estimate is flagged.
    pub max_relative_error: f64,
}

impl Default for KeyIdentityParams {
    fn default() -> Self {
        Self {
            samples: 1 << 20,
            seed: 0x5eed,
            cutoff_factor: 50.0,
            max_relative_error: 0.01,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MonteCarloEstimate {
    pub value: C64,
    /// Standard error of the complex mean, `sqrt(var(re) + var(im)) / sqrt(n)`.
    pub std_error: f64,
    /// Contribution of samples with `|x - c| <= R_cut`.
    pub inner: C64,
    /// Contribution of samples beyond `R_cut`.
    pub tail: C64,
    pub radial_cutoff: f64,
    pub samples: usize,
    pub converged: bool,
}

fn unit_ball_volume(d: usize) -> f64 {
    // V_d = π^(d/2) / Γ(d/2 + 1), odd and even d alike via recursion V_d = 2π/d V_{d-2}
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * PI / k as f64;
        k += 2;
    }
    v
}

/// Monte Carlo estimate of
/// `∫_{R^d} dx tr_σ ∏_{i=1}^d (unit(x_i + x) - unit(x_{i+1} + x))·σ` with `x_{d+1} = 0`.
///
/// The integrand is bounded and decays like `|x|^-(d+1)`. Samples are drawn
/// around the centroid `c` of the singular points `-x_i` from a mixture of a
/// uniform ball of radius `s` and a radial Pareto law `∝ r^-2` outside it,
/// which keeps the importance weights bounded at infinity, so no truncation is
/// needed. Each draw is paired with its reflection through `c`.
pub fn key_identity_lhs(
    rep: &CliffordRep,
    points: &[Vec<f64>],
    params: &KeyIdentityParams,
) -> Result<MonteCarloEstimate> {
    let d = check_points(points)?;
    if rep.dim() != d {
        return Err(Error::Malformed(format!(
            "Clifford representation has d = {}, points have d = {d}",
            rep.dim()
        )));
    }
    if params.samples == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    let mut anchors: Vec<Vec<f64>> = points.to_vec();
    anchors.push(vec![0.0; d]);
    let center: Vec<f64> = (0..d)
        .map(|j| -anchors.iter().map(|p| p[j]).sum::<f64>() / (d + 1) as f64)
        .collect();
    let radius = anchors
        .iter()
        .map(|p| {
            p.iter()
                .zip(&center)
                .map(|(a, c)| (-a - c).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
        .max(1e-12);
    let max_norm = points
        .iter()
        .map(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let r_cut = params.cutoff_factor * max_norm;

    let ball = unit_ball_volume(d) * radius.powi(d as i32);
    let sphere = d as f64 * unit_ball_volume(d);
    let density = |r: f64| -> f64 {
        if r < radius {
            0.5 / ball
        } else {
            0.5 * radius / (r * r * sphere * r.powi(d as i32 - 1))
        }
    };

    let mut tracer = DotTracer::new(rep);
    let mut units = vec![vec![0.0; d]; d + 1];
    let mut diffs = vec![vec![0.0; d]; d];
    let mut integrand = |x: &[f64], tracer: &mut DotTracer| -> C64 {
        for (u, a) in units.iter_mut().zip(&anchors) {
            let mut n2: f64 = 0.0;
            for j in 0..d {
                u[j] = a[j] + x[j];
                n2 += u[j] * u[j];
            }
            let n = n2.sqrt();
            if n > 0.0 {
                u.iter_mut().for_each(|c| *c /= n);
            }
        }
        for i in 0..d {
            for j in 0..d {
                diffs[i][j] = units[i][j] - units[i + 1][j];
            }
        }
        tracer.trace(diffs.iter().map(|v| v.as_slice()))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut sum = C64::default();
    let mut sum_sq_re = 0.0;
    let mut sum_sq_im = 0.0;
    let mut tail = C64::default();
    let mut dir = vec![0.0; d];
    let mut x = vec![0.0; d];
    for _ in 0..params.samples {
        let mut n2: f64 = 0.0;
        while n2 == 0.0 {
            for c in dir.iter_mut() {
                *c = rng.sample(StandardNormal);
            }
            n2 = dir.iter().map(|c| c * c).sum();
        }
        let n = n2.sqrt();
        dir.iter_mut().for_each(|c| *c /= n);
        let u: f64 = 1.0 - rng.random::<f64>();
        let r = if rng.random::<bool>() {
            radius * u.powf(1.0 / d as f64)
        } else {
            radius / u
        };
        let w = 1.0 / density(r);
        let mut pair = C64::default();
        for sign in [1.0, -1.0] {
            for j in 0..d {
                x[j] = center[j] + sign * r * dir[j];
            }
            pair += integrand(&x, &mut tracer) * w;
        }
        let sample = pair * 0.5;
        sum += sample;
        sum_sq_re += sample.re * sample.re;
        sum_sq_im += sample.im * sample.im;
        if r > r_cut {
            tail += sample;
        }
    }
    let n = params.samples as f64;
    let mean = sum / n;
    let var_re = (sum_sq_re / n - mean.re * mean.re).max(0.0);
    let var_im = (sum_sq_im / n - mean.im * mean.im).max(0.0);
    let std_error = ((var_re + var_im) / n).sqrt();
    let tail = tail / n;
    let converged = std_error <= params.max_relative_error * mean.norm().max(1e-300);
    Ok(MonteCarloEstimate {
        value: mean,
        std_error,
        inner: mean - tail,
        tail,
        radial_cutoff: r_cut,
        samples: params.samples,
        converged,
    })
}

/// All permutations of `0..n` with their signs.
pub fn signed_permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, sign: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        if rest.is_empty() {
            out.push((prefix.clone(), sign));
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            // moving the i-th remaining element to the front costs i transpositions
            rec(prefix, rest, if i % 2 == 0 { sign } else { -sign }, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), 1.0, &mut out);
    out
}

/// `tr(σ_{i_1} ⋯ σ_{i_q})` from the algebra alone: the word is sorted with
/// one sign flip per exchange of distinct generators, squares are cancelled,
/// and only the empty word and the full product have non-zero trace.
pub fn symbolic_trace(dim: usize, indices: &[usize]) -> Result<C64> {
    check_odd(dim)?;
    if let Some(&i) = indices.iter().find(|&&i| i >= dim) {
        return Err(Error::IndexOutOfRange { index: i, dim });
    }
    let mut word = indices.to_vec();
    let mut sign = 1.0;
    // bubble sort
    for end in (1..word.len()).rev() {
        for j in 0..end {
            if word[j] > word[j + 1] {
                word.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    let mut reduced: Vec<usize> = Vec::new();
    for w in word {
        if reduced.last() == Some(&w) {
            reduced.pop();
        } else {
            reduced.push(w);
        }
    }
    let rep_dim = (1usize << ((dim - 1) / 2)) as f64;
    Ok(if reduced.is_empty() {
        C64::new(sign * rep_dim, 0.0)
    } else if reduced.len() == dim {
        minus_i_pow((dim - 1) / 2) * (sign * rep_dim)
    } else {
        C64::new(0.0, 0.0)
    })
}

/// Outcome of [`verify_clifford_identities`].
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct IdentityReport {
    pub dim: usize,
    pub checks: usize,
    pub max_error: f64,
    pub failures: Vec<String>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn record(&mut self, what: impl FnOnce() -> String, got: C64, want: C64, tol: f64) {
        let e = (got - want).norm();
        self.checks += 1;
        self.max_error = self.max_error.max(e);
        if e > tol {
            self.failures.push(format!("{}: got {got}, expected {want}", what()));
        }
    }
}

/// Checks the generator relations, the product convention, and the trace
/// identities against [`symbolic_trace`] and the determinant formula:
/// every index tuple of length `≤ exhaustive_len`, then `samples` random
/// permutations, random tuples and random vector tuples.
pub fn verify_clifford_identities(
    dim: usize,
    exhaustive_len: usize,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<IdentityReport> {
    let rep = CliffordRep::new(dim)?;
    let mut report = IdentityReport { dim, ..Default::default() };
    let zero = C64::new(0.0, 0.0);

    report.record(|| "anticommutation".into(), C64::new(rep.anticommutator_residual(), 0.0), zero, tol);
    for (j, g) in rep.generators().iter().enumerate() {
        let h = crate::linalg::hermiticity_residual(&g.view());
        report.record(|| format!("hermiticity of generator {j}"), C64::new(h, 0.0), zero, tol);
    }
    let n = rep.rep_dim();
    let prod = rep.product();
    let expected = Array2::<C64>::eye(n) * minus_i_pow((dim - 1) / 2);
    report.record(|| "product convention".into(), C64::new(max_abs(&(prod - expected).view()), 0.0), zero, tol);

    let mut tuple = Vec::new();
    for len in 1..=exhaustive_len {
        let total = dim.pow(len as u32);
        for code in 0..total {
            tuple.clear();
            let mut c = code;
            for _ in 0..len {
                tuple.push(c % dim);
                c /= dim;
            }
            let got = rep.trace_product(&tuple)?;
            let want = symbolic_trace(dim, &tuple)?;
            report.record(|| format!("trace {tuple:?}"), got, want, tol);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = minus_i_pow((dim - 1) / 2) * 2f64.powi(((dim - 1) / 2) as i32);
    for _ in 0..samples {
        // random permutation: identity (iv)
        let mut perm: Vec<usize> = (0..dim).collect();
        let mut sign = 1.0;
        for i in (1..dim).rev() {
            let j = rng.random_range(0..=i);
            if i != j {
                perm.swap(i, j);
                sign = -sign;
            }
        }
        report.record(|| format!("permutation {perm:?}"), rep.trace_product(&perm)?, scale * sign, tol);

        // random word: identities (ii), (iii)
        let len = rng.random_range(1..=dim + 2);
        let word: Vec<usize> = (0..len).map(|_| rng.random_range(0..dim)).collect();
        let want = symbolic_trace(dim, &word)?;
        report.record(|| format!("trace {word:?}"), rep.trace_product(&word)?, want, tol);

        // random vectors: determinant formula
        let vs: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let det = real_determinant(&(0..dim).map(|r| vs.iter().map(|v| v[r]).collect()).collect::<Vec<_>>());
        let got = rep.trace_sigma_dot(&vs)?;
        let want = scale * det;
        let rel = (got - want).norm() / want.norm().max(1.0);
        report.record(|| format!("vector tuple {vs:?}"), C64::new(rel, 0.0), zero, tol);
    }
    Ok(report)
}

/// One Monte Carlo check of the key identity on a random simplex.
#[derive(Clone, Debug, serde::Serialize)]
pub struct KeyIdentityTrial {
    pub points: Vec<Vec<f64>>,
    pub lhs: C64,
    pub rhs: C64,
    pub std_error: f64,
    /// `|lhs - rhs|` in units of the reported standard error.
    pub sigmas: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct KeyIdentityReport {
    pub dim: usize,
    pub samples: usize,
    pub max_sigmas: f64,
    pub max_relative_error: f64,
    pub trials: Vec<KeyIdentityTrial>,
}

impl KeyIdentityReport {
    /// Every trial within `sigmas` standard errors and `relative` relative error.
    pub fn passed(&self, sigmas: f64, relative: f64) -> bool {
        self.trials.iter().all(|t| t.sigmas <= sigmas && t.relative_error < relative)
    }
}

/// Compares both sides of the key identity on `trials` random simplices with
/// Gaussian vertices, skipping near-degenerate ones.
pub fn key_identity_trials(dim: usize, trials: usize, samples: usize, seed: u64) -> Result<KeyIdentityReport> {
    let rep = CliffordRep::new(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    while out.len() < trials {
        let points: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        if is_near_degenerate(&points, 0.2) {
            continue;
        }
        let params = KeyIdentityParams { samples, seed: rng.random(), ..KeyIdentityParams::default() };
        let lhs = key_identity_lhs(&rep, &points, &params)?;
        let rhs = key_identity_rhs(&points)?;
        let err = (lhs.value - rhs).norm();
        out.push(KeyIdentityTrial {
            points,
            lhs: lhs.value,
            rhs,
            std_error: lhs.std_error,
            sigmas: err / lhs.std_error.max(1e-300),
            relative_error: err / rhs.norm(),
        });
    }
    Ok(KeyIdentityReport {
        dim,
        samples,
        max_sigmas: out.iter().map(|t| t.sigmas).fold(0.0, f64::max),
        max_relative_error: out.iter().map(|t| t.relative_error).fold(0.0, f64::max),
        trials: out,
    })
}
