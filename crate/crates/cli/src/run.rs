//! Executes a [`RunConfig`] and writes results, summaries and provenance.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use oddchern::ensemble::{run_ensemble, sort_rows, write_results_csv, EnsembleOutcome, EnsembleSpec, MethodSummary, ScanAxis};
use oddchern::invariants::{Acceptance, InvariantEstimate};
use oddchern::profile::ProfileBin;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PointParams {
    pub m: f64,
    pub lambda: f64,
    pub lambda_prime: f64,
}

#[derive(Debug, Serialize)]
pub struct DecaySummary {
    pub rate: f64,
    pub r_squared: Option<f64>,
    pub window: (f64, f64),
}

#[derive(Debug, Serialize)]
pub struct FracMomentSummary {
    pub s: f64,
    pub energy: f64,
    pub eta: f64,
    pub samples: usize,
    pub beta: f64,
    pub prefactor: f64,
    pub r_squared: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct PointSummary {
    pub model: String,
    pub params: PointParams,
    pub d: usize,
    #[serde(rename = "L")]
    pub size: usize,
    pub evaluated: usize,
    pub rejected: usize,
    pub min_gap: f64,
    pub kspace: Option<InvariantEstimate>,
    pub methods: Vec<MethodSummary>,
    pub decay: Option<DecaySummary>,
    pub fracmom: Option<FracMomentSummary>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub config_sha256: String,
    pub points: Vec<PointSummary>,
}

#[derive(Debug, Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: &'a str,
    seed: u64,
    config: &'a RunConfig,
}

/// One line of `summary.csv`: a method's statistics at one sweep point.
#[derive(Debug, Serialize)]
struct PlateauRow<'a> {
    m: f64,
    lambda: f64,
    lambda_prime: f64,
    #[serde(rename = "L")]
    size: usize,
    method: &'a str,
    count: usize,
    accepted: usize,
    mean: f64,
    std: f64,
    mode: i64,
    mode_fraction: f64,
    max_residual: f64,
    max_imag_leak: f64,
    rejected: usize,
    min_gap: f64,
    decay_rate: Option<f64>,
    beta_s: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ProfileRow {
    m: f64,
    lambda: f64,
    lambda_prime: f64,
    distance: f64,
    mean_norm: f64,
    std_norm: f64,
    count: usize,
}

/// SHA-256 of the canonical JSON form, without the output directory.
pub fn config_hash(config: &RunConfig) -> Result<String> {
    let mut canonical = config.clone();
    canonical.output_dir = None;
    let bytes = serde_json::to_vec(&canonical)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn ensemble_spec(config: &RunConfig, point: &[(ScanAxis, f64)]) -> Result<EnsembleSpec> {
    let mut model = config.model.spec()?;
    for &(axis, v) in point {
        model = model.with_axis(axis, v);
    }
    let mut spec = EnsembleSpec::new(model, config.size, config.ensemble, config.seed);
    spec.methods = config.methods.clone();
    spec.kspace_grid = config.kspace_grid;
    if let Some(r) = config.trunc_radius {
        spec.trunc_radius = r;
    }
    spec.trace_fraction = config.trace_fraction;
    spec.x0 = config.x0.clone();
    spec.gap_tol = config.tolerances.gap_tol;
    spec.acceptance = Acceptance {
        max_residual: config.tolerances.max_residual,
        max_imag_leak: config.tolerances.max_imag_leak,
    };
    spec.convention = config.convention;
    spec.arguments = config.arguments;
    spec.decay = config.decay;
    spec.fracmom = config.fracmom.map(Into::into);
    Ok(spec)
}

fn summarize(out: &EnsembleOutcome, acceptance: &Acceptance) -> PointSummary {
    let p = &out.model.params;
    PointSummary {
        model: out.model.name.clone(),
        params: PointParams { m: p.m, lambda: p.lambda, lambda_prime: p.lambda_prime.unwrap_or(p.lambda) },
        d: out.dim,
        size: out.size,
        evaluated: out.samples.len(),
        rejected: out.rejected,
        min_gap: out.min_gap(),
        kspace: out.kspace.clone(),
        methods: out.summaries(acceptance),
        decay: out.decay.as_ref().map(|d| DecaySummary {
            rate: d.decay.rate,
            r_squared: d.decay.fit.as_ref().map(|f| f.r_squared),
            window: d.decay.window,
        }),
        fracmom: out.fracmom.as_ref().map(|f| FracMomentSummary {
            s: f.s,
            energy: f.energy,
            eta: f.eta,
            samples: f.samples,
            beta: f.beta,
            prefactor: f.prefactor,
            r_squared: f.decay.fit.as_ref().map(|x| x.r_squared),
        }),
        notes: out.notes.clone(),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_profiles(dir: &Path, name: &str, points: &[(PointParams, &[ProfileBin])]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(dir, name)?);
    for (p, bins) in points {
        for b in bins.iter() {
            w.serialize(ProfileRow {
                m: p.m,
                lambda: p.lambda,
                lambda_prime: p.lambda_prime,
                distance: b.distance,
                mean_norm: b.mean_norm,
                std_norm: b.std_norm,
                count: b.count,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Runs every sweep point and writes `results.csv`, `summary.csv`,
/// `summary.json`, `provenance.json` and any requested profiles into `dir`.
pub fn execute(config: &RunConfig, dir: &Path, command: &str) -> Result<RunSummary> {
    config.validate()?;
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let hash = config_hash(config)?;
    let specs: Vec<EnsembleSpec> =
        config.sweep_points().iter().map(|p| ensemble_spec(config, p)).collect::<Result<_>>()?;
    if let Some(f) = &config.fracmom {
        for s in &specs {
            if !s.model.build()?.disorder().is_clean() && s.samples < f.min_ensemble {
                return Err(oddchern::Error::InsufficientEnsemble { got: s.samples, need: f.min_ensemble }.into());
            }
        }
    }
    let outcomes: Vec<EnsembleOutcome> = specs
        .par_iter()
        .map(|s| run_ensemble(s).map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;

    let mut rows: Vec<_> = outcomes.iter().flat_map(|o| o.rows()).collect();
    sort_rows(&mut rows);
    write_results_csv(create(dir, "results.csv")?, &rows)?;

    let points: Vec<PointSummary> =
        outcomes.iter().zip(&specs).map(|(o, s)| summarize(o, &s.acceptance)).collect();
    let mut plateau = csv::Writer::from_writer(create(dir, "summary.csv")?);
    for pt in &points {
        for s in &pt.methods {
            plateau.serialize(PlateauRow {
                m: pt.params.m,
                lambda: pt.params.lambda,
                lambda_prime: pt.params.lambda_prime,
                size: pt.size,
                method: s.method.as_str(),
                count: s.count,
                accepted: s.accepted,
                mean: s.mean,
                std: s.std,
                mode: s.mode,
                mode_fraction: s.mode_fraction,
                max_residual: s.max_residual,
                max_imag_leak: s.max_imag_leak,
                rejected: pt.rejected,
                min_gap: pt.min_gap,
                decay_rate: pt.decay.as_ref().map(|d| d.rate),
                beta_s: pt.fracmom.as_ref().map(|f| f.beta),
            })?;
        }
    }
    plateau.flush()?;

    if config.decay {
        let profiles: Vec<_> = outcomes
            .iter()
            .zip(&points)
            .filter_map(|(o, p)| o.decay.as_ref().map(|d| (p.params, d.bins.as_slice())))
            .collect();
        write_profiles(dir, "decay_profile.csv", &profiles)?;
    }
    if config.fracmom.is_some() {
        let profiles: Vec<_> = outcomes
            .iter()
            .zip(&points)
            .filter_map(|(o, p)| o.fracmom.as_ref().map(|f| (p.params, f.bins.as_slice())))
            .collect();
        write_profiles(dir, "fracmom_profile.csv", &profiles)?;
    }

    let summary = RunSummary { command: command.into(), config_sha256: hash.clone(), points };
    serde_json::to_writer_pretty(create(dir, "summary.json")?, &summary)?;
    let provenance = Provenance {
        tool: "oddchern",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: &hash,
        seed: config.seed,
        config,
    };
    serde_json::to_writer_pretty(create(dir, "provenance.json")?, &provenance)?;
    Ok(summary)
}

/// Flag, then environment (via clap), then config file, then `./results`.
pub fn output_dir(flag: Option<PathBuf>, config: &RunConfig) -> PathBuf {
    flag.or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("results"))
}
