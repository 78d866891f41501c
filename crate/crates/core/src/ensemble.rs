//! Seeded ensembles of realizations: per-sample invariants, rejection of
//! gapless samples, summary statistics and result rows.
//!
//! Samples are evaluated in parallel but collected in index order, so every
//! output is independent of scheduling.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flatband::{spectral_flatband, DEFAULT_GAP_TOL};
use crate::invariants::{
    fedosov_index, kspace_odd_chern_with, realspace_odd_chern, Acceptance, CochainArguments, DiracPhase,
    FedosovOptions, InvariantEstimate, KspaceOptions, Method, PrefactorConvention, RealSpaceOptions,
};
use crate::linalg::operator_norm;
use crate::localization::{accumulate_fractional_moments, FracMomentOptions, FracMomentReport};
use crate::models::{builtin, realize, HoppingModel, ModelDoc, ModelParams, SampleSeed};
use crate::profile::{accumulate_pairs, default_window, fit_decay, DistanceAccumulator};
use crate::flatband::DecayProfile;

/// A built-in model with parameters, or an explicit model document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<ModelDoc>,
}

impl ModelSpec {
    pub fn builtin(name: &str, params: ModelParams) -> Self {
        Self { name: name.into(), params, document: None }
    }

    pub fn build(&self) -> Result<HoppingModel> {
        match &self.document {
            Some(doc) => doc.clone().into_model(),
            None => builtin(&self.name, &self.params),
        }
    }

    pub fn with_axis(&self, axis: ScanAxis, value: f64) -> Self {
        let mut out = self.clone();
        match axis {
            ScanAxis::M => out.params.m = value,
            ScanAxis::Lambda => out.params.lambda = value,
            ScanAxis::LambdaPrime => out.params.lambda_prime = Some(value),
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    M,
    Lambda,
    LambdaPrime,
}

impl std::str::FromStr for ScanAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(ScanAxis::M),
            "lambda" => Ok(ScanAxis::Lambda),
            "lambda_prime" => Ok(ScanAxis::LambdaPrime),
            other => Err(Error::InvalidParameter(format!("unknown sweep axis '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    pub model: ModelSpec,
    pub size: usize,
    pub samples: usize,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub kspace_grid: usize,
    pub trunc_radius: usize,
    pub trace_fraction: f64,
    /// Dirac-phase offset; `½` in every direction when absent.
    pub x0: Option<Vec<f64>>,
    pub gap_tol: f64,
    pub acceptance: Acceptance,
    pub convention: PrefactorConvention,
    pub arguments: CochainArguments,
    /// Accumulate the `‖⟨x|U|y⟩‖` profile over the ensemble.
    pub decay: bool,
    pub fracmom: Option<FracMomentOptions>,
}

impl EnsembleSpec {
    pub fn new(model: ModelSpec, size: usize, samples: usize, master_seed: u64) -> Self {
        Self {
            model,
            size,
            samples,
            master_seed,
            methods: vec![Method::Realspace],
            kspace_grid: 256,
            trunc_radius: size / 4,
            trace_fraction: 0.5,
            x0: None,
            gap_tol: DEFAULT_GAP_TOL,
            acceptance: Acceptance::default(),
            convention: PrefactorConvention::Winding,
            arguments: CochainArguments::Alternating,
            decay: false,
            fracmom: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub seed: Option<SampleSeed>,
    pub gap: f64,
    pub estimates: Vec<InvariantEstimate>,
}

#[derive(Clone, Debug)]
pub struct EnsembleOutcome {
    pub model: ModelSpec,
    pub dim: usize,
    pub size: usize,
    /// Model-level (momentum-space) estimate, if requested and defined.
    pub kspace: Option<InvariantEstimate>,
    pub samples: Vec<SampleOutcome>,
    pub rejected: usize,
    pub decay: Option<DecayProfile>,
    pub fracmom: Option<FracMomentReport>,
    pub notes: Vec<String>,
}

/// Statistics of one method over the accepted samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub count: usize,
    pub accepted: usize,
    pub mean: f64,
    pub std: f64,
    pub mode: i64,
    pub mode_fraction: f64,
    pub max_residual: f64,
    pub max_imag_leak: f64,
}

impl MethodSummary {
    pub fn from_estimates(method: Method, estimates: &[&InvariantEstimate], acceptance: &Acceptance) -> Self {
        let n = estimates.len();
        let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
        let mean = if n > 0 { values.iter().sum::<f64>() / n as f64 } else { f64::NAN };
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for e in estimates {
            *counts.entry(e.nearest_int).or_default() += 1;
        }
        // ties resolve to the smallest integer
        let (mode, mode_count) = counts
            .iter()
            .fold((0i64, 0usize), |best, (&k, &c)| if c > best.1 { (k, c) } else { best });
        Self {
            method,
            count: n,
            accepted: estimates.iter().filter(|e| e.accepted(acceptance)).count(),
            mean,
            std,
            mode,
            mode_fraction: if n > 0 { mode_count as f64 / n as f64 } else { 0.0 },
            max_residual: estimates.iter().map(|e| e.residual).fold(0.0, f64::max),
            max_imag_leak: estimates.iter().map(|e| e.imag_leak).fold(0.0, f64::max),
        }
    }
}

impl EnsembleOutcome {
    pub fn summaries(&self, acceptance: &Acceptance) -> Vec<MethodSummary> {
        let mut methods: Vec<Method> = self.samples.iter().flat_map(|s| s.estimates.iter().map(|e| e.method)).collect();
        methods.sort();
        methods.dedup();
        let mut out = Vec::new();
        if let Some(k) = &self.kspace {
            out.push(MethodSummary::from_estimates(Method::Kspace, &[k], acceptance));
        }
        for m in methods {
            let ests: Vec<&InvariantEstimate> = self
                .samples
                .iter()
                .flat_map(|s| s.estimates.iter().filter(move |e| e.method == m))
                .collect();
            out.push(MethodSummary::from_estimates(m, &ests, acceptance));
        }
        out
    }

    pub fn min_gap(&self) -> f64 {
        self.samples.iter().map(|s| s.gap).fold(f64::INFINITY, f64::min)
    }

    /// One row per estimate; see [`ResultRow`].
    pub fn rows(&self) -> Vec<ResultRow> {
        let p = &self.model.params;
        let row = |e: &InvariantEstimate, seed: String, gap: f64| ResultRow {
            method: e.method,
            d: self.dim,
            l: self.size,
            m: p.m,
            lambda: p.lambda,
            lambda_prime: p.lambda_prime.unwrap_or(p.lambda),
            seed,
            value_re: e.raw.re,
            value_im: e.raw.im,
            nearest_int: e.nearest_int,
            residual: e.residual,
            trunc_radius: e.trunc_radius,
            gap,
        };
        let mut rows = Vec::new();
        if let Some(k) = &self.kspace {
            rows.push(row(k, String::new(), k.gap.unwrap_or(f64::NAN)));
        }
        for s in &self.samples {
            let seed = s.seed.map(|s| format!("{}:{}", s.master, s.index)).unwrap_or_default();
            for e in &s.estimates {
                rows.push(row(e, seed.clone(), s.gap));
            }
        }
        rows
    }
}

/// Per-sample result line; the complex estimate is split into `value_re`, `value_im`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub d: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub m: f64,
    pub lambda: f64,
    pub lambda_prime: f64,
    /// `master:index`, empty for model-level estimates.
    pub seed: String,
    pub value_re: f64,
    pub value_im: f64,
    pub nearest_int: i64,
    pub residual: f64,
    pub trunc_radius: Option<usize>,
    pub gap: f64,
}

/// Sorts rows by `(m, lambda, lambda_prime, L, method, seed)` so that output order is canonical.
pub fn sort_rows(rows: &mut [ResultRow]) {
    fn seed_key(s: &str) -> (u64, u64) {
        let mut it = s.split(':').map(|p| p.parse::<u64>().unwrap_or(0));
        (it.next().unwrap_or(0), it.next().unwrap_or(0))
    }
    rows.sort_by(|a, b| {
        a.m.total_cmp(&b.m)
            .then(a.lambda.total_cmp(&b.lambda))
            .then(a.lambda_prime.total_cmp(&b.lambda_prime))
            .then(a.l.cmp(&b.l))
            .then(a.method.cmp(&b.method))
            .then(seed_key(&a.seed).cmp(&seed_key(&b.seed)))
    });
}

pub fn write_results_csv<W: Write>(writer: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

struct SampleWork {
    outcome: Option<SampleOutcome>,
    decay: Option<DistanceAccumulator>,
    fracmom: Option<DistanceAccumulator>,
}

fn run_sample(model: &HoppingModel, spec: &EnsembleSpec, seed: Option<SampleSeed>) -> Result<SampleWork> {
    let real = realize(model, spec.size, seed)?;
    let fb = match spectral_flatband(&real, spec.gap_tol) {
        Ok(fb) => fb,
        Err(Error::GaplessSample { .. }) => return Ok(SampleWork { outcome: None, decay: None, fracmom: None }),
        Err(e) => return Err(e),
    };
    let mut estimates = Vec::new();
    for method in &spec.methods {
        match method {
            Method::Kspace => {}
            Method::Realspace => {
                let opts = RealSpaceOptions { trace_fraction: spec.trace_fraction, convention: spec.convention };
                estimates.push(realspace_odd_chern(&fb, &opts)?);
            }
            Method::Fedosov => {
                let x0 = spec.x0.clone().unwrap_or_else(|| vec![0.5; model.dim()]);
                let phase = DiracPhase::centered(fb.torus(), &x0)?;
                let opts = FedosovOptions { trunc_radius: spec.trunc_radius, arguments: spec.arguments };
                estimates.push(fedosov_index(&fb, &phase, &opts)?);
            }
        }
    }
    let decay = spec.decay.then(|| {
        let mut acc = DistanceAccumulator::new();
        accumulate_pairs(fb.torus(), &mut acc, |x, y| operator_norm(&fb.block(x, y)));
        acc
    });
    let fracmom = match &spec.fracmom {
        Some(opts) => {
            let mut acc = DistanceAccumulator::new();
            accumulate_fractional_moments(&real, opts, &mut acc)?;
            Some(acc)
        }
        None => None,
    };
    Ok(SampleWork {
        outcome: Some(SampleOutcome { seed, gap: fb.gap(), estimates }),
        decay,
        fracmom,
    })
}

/// Evaluates the requested estimators on every realization. Clean models are
/// evaluated once; gapless samples are counted and skipped.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleOutcome> {
    let model = spec.model.build()?;
    let mut notes = Vec::new();
    let clean = model.disorder().is_clean();
    let n_samples = if clean { 1 } else { spec.samples };
    if n_samples == 0 {
        return Err(Error::InsufficientEnsemble { got: 0, need: 1 });
    }
    if clean && spec.samples > 1 {
        notes.push("model is clean: a single realization was evaluated".into());
    }

    let kspace = if spec.methods.contains(&Method::Kspace) {
        if model.is_periodic() {
            let mut opts = KspaceOptions::new(spec.kspace_grid);
            opts.gap_tol = spec.gap_tol;
            match kspace_odd_chern_with(&model, &opts) {
                Ok(e) => Some(e),
                Err(Error::GaplessSample { min_abs_energy, .. }) => {
                    notes.push(format!("k-space gap closes on the grid (min |E| = {min_abs_energy:.3e})"));
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            notes.push("k-space winding skipped: model is not periodic".into());
            None
        }
    } else {
        None
    };

    let work: Vec<SampleWork> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let seed = if clean { None } else { Some(SampleSeed::new(spec.master_seed, i)) };
            run_sample(&model, spec, seed)
        })
        .collect::<Result<_>>()?;

    let mut samples = Vec::new();
    let mut rejected = 0;
    let mut decay_acc: Option<DistanceAccumulator> = None;
    let mut frac_acc: Option<DistanceAccumulator> = None;
    for w in work {
        match w.outcome {
            Some(o) => samples.push(o),
            None => rejected += 1,
        }
        if let Some(a) = w.decay {
            decay_acc.get_or_insert_with(DistanceAccumulator::new).merge(&a);
        }
        if let Some(a) = w.fracmom {
            frac_acc.get_or_insert_with(DistanceAccumulator::new).merge(&a);
        }
    }
    let torus = crate::lattice::Torus::new(model.dim(), spec.size);
    let window = default_window(&torus);
    let decay = match decay_acc {
        Some(acc) => {
            let bins = acc.bins();
            let decay = fit_decay(&bins, window.0, window.1)?;
            Some(DecayProfile { bins, decay })
        }
        None => None,
    };
    let fracmom = match (frac_acc, &spec.fracmom) {
        (Some(acc), Some(opts)) => {
            let accepted = samples.len();
            if accepted < opts.min_ensemble && !clean {
                notes.push(format!(
                    "fractional moments from {accepted} samples, below the requested minimum {}",
                    opts.min_ensemble
                ));
            }
            Some(FracMomentReport::from_bins(acc.bins(), accepted, opts, window)?)
        }
        _ => None,
    };

    Ok(EnsembleOutcome {
        model: spec.model.clone(),
        dim: model.dim(),
        size: spec.size,
        kspace,
        samples,
        rejected,
        decay,
        fracmom,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lambda: f64, samples: usize) -> EnsembleSpec {
        let params = ModelParams { m: 0.5, lambda, lambda_prime: None };
        let mut s = EnsembleSpec::new(ModelSpec::builtin("model2", params), 64, samples, 17);
        s.methods = vec![Method::Kspace, Method::Realspace, Method::Fedosov];
        s.trunc_radius = 16;
        s
    }

    #[test]
    fn deterministic_and_order_independent() {
        let a = run_ensemble(&spec(1.0, 6)).unwrap();
        let b = run_ensemble(&spec(1.0, 6)).unwrap();
        assert_eq!(a.rows(), b.rows());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| run_ensemble(&spec(1.0, 6))).unwrap();
        assert_eq!(a.rows(), c.rows());
    }

    #[test]
    fn clean_model_runs_once_with_kspace() {
        let out = run_ensemble(&spec(0.0, 5)).unwrap();
        assert_eq!(out.samples.len(), 1);
        assert!(out.kspace.is_some());
        let sums = out.summaries(&Acceptance::default());
        assert!(sums.iter().all(|s| s.mode == 1 && s.mode_fraction == 1.0), "{sums:?}");
    }

    #[test]
    fn disordered_kspace_is_skipped() {
        let out = run_ensemble(&spec(1.0, 2)).unwrap();
        assert!(out.kspace.is_none());
        assert!(out.notes.iter().any(|n| n.contains("not periodic")));
        assert_eq!(out.rows().len(), 4);
    }

    #[test]
    fn gapless_samples_are_counted() {
        let params = ModelParams { m: 1.0, lambda: 0.0, lambda_prime: None };
        let out = run_ensemble(&EnsembleSpec::new(ModelSpec::builtin("model1", params), 40, 1, 0)).unwrap();
        assert_eq!(out.rejected, 1);
        assert!(out.samples.is_empty());
    }

    #[test]
    fn results_csv_columns() {
        let out = run_ensemble(&spec(0.0, 1)).unwrap();
        let mut rows = out.rows();
        sort_rows(&mut rows);
        let mut buf = Vec::new();
        write_results_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "method,d,L,m,lambda,lambda_prime,seed,value_re,value_im,nearest_int,residual,trunc_radius,gap\n"
        ));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn mode_statistics() {
        let mk = |v: f64| InvariantEstimate::new(Method::Realspace, crate::linalg::C64::new(v, 0.0));
        let ests = [mk(0.98), mk(1.01), mk(0.2)];
        let refs: Vec<&InvariantEstimate> = ests.iter().collect();
        let s = MethodSummary::from_estimates(Method::Realspace, &refs, &Acceptance::default());
        assert_eq!(s.mode, 1);
        assert!((s.mode_fraction - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.accepted, 2);
    }
}
