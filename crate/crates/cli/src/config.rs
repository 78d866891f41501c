//! The JSON run configuration and the flag grammar shared by the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use oddchern::ensemble::{ModelSpec, ScanAxis};
use oddchern::flatband::DEFAULT_GAP_TOL;
use oddchern::invariants::{Acceptance, CochainArguments, PrefactorConvention};
use oddchern::localization::FracMomentOptions;
use oddchern::models::{ModelDoc, ModelParams, BUILTIN_MODELS};
use oddchern::Method;
use serde::{Deserialize, Serialize};

/// A built-in model with its parameters, or an inline model document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSelector {
    #[serde(default = "default_model")]
    pub name: String,
    #[serde(default)]
    pub m: f64,
    #[serde(default)]
    pub lambda: f64,
    /// Defaults to `lambda`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<serde_json::Value>,
}

fn default_model() -> String {
    "model2".into()
}

impl ModelSelector {
    pub fn spec(&self) -> Result<ModelSpec> {
        let params = ModelParams { m: self.m, lambda: self.lambda, lambda_prime: self.lambda_prime };
        let mut spec = ModelSpec::builtin(&self.name, params);
        if let Some(doc) = &self.document {
            let doc: ModelDoc = serde_json::from_value(doc.clone()).context("invalid model document")?;
            spec.name = doc.name.clone();
            spec.document = Some(doc);
        }
        Ok(spec)
    }
}

/// One sweep axis: a model parameter and the values it takes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: ScanAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Samples with `min |E|` at or below this are rejected.
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
    #[serde(default = "default_max_residual")]
    pub max_residual: f64,
    #[serde(default = "default_max_imag_leak")]
    pub max_imag_leak: f64,
}

fn default_gap_tol() -> f64 {
    DEFAULT_GAP_TOL
}

fn default_max_residual() -> f64 {
    Acceptance::default().max_residual
}

fn default_max_imag_leak() -> f64 {
    Acceptance::default().max_imag_leak
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { gap_tol: default_gap_tol(), max_residual: default_max_residual(), max_imag_leak: default_max_imag_leak() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FracMomentConfig {
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default)]
    pub energy: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_min_ensemble")]
    pub min_ensemble: usize,
}

fn default_s() -> f64 {
    FracMomentOptions::default().s
}

fn default_eta() -> f64 {
    FracMomentOptions::default().eta
}

fn default_min_ensemble() -> usize {
    FracMomentOptions::default().min_ensemble
}

impl Default for FracMomentConfig {
    fn default() -> Self {
        let o = FracMomentOptions::default();
        Self { s: o.s, energy: o.energy, eta: o.eta, min_ensemble: o.min_ensemble }
    }
}

impl From<FracMomentConfig> for FracMomentOptions {
    fn from(c: FracMomentConfig) -> Self {
        Self { s: c.s, energy: c.energy, eta: c.eta, min_ensemble: c.min_ensemble }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSelector,
    #[serde(rename = "L")]
    pub size: usize,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    /// Master seed; every realization is derived from it and its index.
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Index truncation radius; `L/4` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunc_radius: Option<usize>,
    #[serde(default = "default_trace_fraction")]
    pub trace_fraction: f64,
    #[serde(default = "default_kspace_grid")]
    pub kspace_grid: usize,
    /// Dirac-phase offset in `[0, 1]^d`; `(½, …, ½)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub convention: PrefactorConvention,
    #[serde(default)]
    pub arguments: CochainArguments,
    /// Also fit the decay of `‖⟨x|U|y⟩‖`.
    #[serde(default)]
    pub decay: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fracmom: Option<FracMomentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_ensemble() -> usize {
    1
}

fn default_methods() -> Vec<Method> {
    vec![Method::Realspace]
}

fn default_trace_fraction() -> f64 {
    0.5
}

fn default_kspace_grid() -> usize {
    256
}

impl RunConfig {
    /// Parses a configuration, reporting schema violations with line and column.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| {
            anyhow::anyhow!("{}:{}:{}: {}", origin.display(), e.line(), e.column(), e)
        })?;
        config.validate().with_context(|| format!("{}: invalid configuration", origin.display()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.document.is_none() && !BUILTIN_MODELS.contains(&self.model.name.as_str()) {
            bail!("unknown model '{}' (known: {})", self.model.name, BUILTIN_MODELS.join(", "));
        }
        if self.model.document.is_some() && !self.sweep.is_empty() {
            bail!("sweep axes act on built-in model parameters and cannot be combined with a model document");
        }
        if self.size < 2 {
            bail!("L must be at least 2, got {}", self.size);
        }
        if self.ensemble == 0 {
            bail!("ensemble size must be positive");
        }
        if self.methods.is_empty() && !self.decay && self.fracmom.is_none() {
            bail!("nothing to compute: no methods, decay or fracmom requested");
        }
        if !(self.trace_fraction > 0.0 && self.trace_fraction <= 1.0) {
            bail!("trace_fraction must lie in (0, 1], got {}", self.trace_fraction);
        }
        if let Some(r) = self.trunc_radius {
            if r == 0 || 2 * r >= self.size {
                bail!("trunc_radius must lie in [1, L/2), got {r}");
            }
        }
        if let Some(x0) = &self.x0 {
            if x0.iter().any(|v| !(0.0..=1.0).contains(v)) {
                bail!("x0 components must lie in [0, 1]");
            }
        }
        if self.kspace_grid < 2 {
            bail!("kspace_grid must be at least 2");
        }
        for axis in &self.sweep {
            if axis.values.is_empty() {
                bail!("sweep axis {:?} has no values", axis.parameter);
            }
            if axis.values.iter().any(|v| !v.is_finite()) {
                bail!("sweep axis {:?} has a non-finite value", axis.parameter);
            }
        }
        let t = &self.tolerances;
        if !(t.gap_tol >= 0.0 && t.max_residual > 0.0 && t.max_imag_leak > 0.0) {
            bail!("tolerances must be positive");
        }
        if let Some(f) = &self.fracmom {
            FracMomentOptions::from(*f).validate()?;
        }
        Ok(())
    }

    /// Every combination of sweep values, in axis order; a single empty point
    /// when there are no axes.
    pub fn sweep_points(&self) -> Vec<Vec<(ScanAxis, f64)>> {
        let mut points: Vec<Vec<(ScanAxis, f64)>> = vec![Vec::new()];
        for axis in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((axis.parameter, v));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

/// Parses `a:b:step` (inclusive), `v1,v2,…`, or a single number.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            bail!("range '{text}' must have the form start:stop:step");
        }
        let num = |s: &str| s.trim().parse::<f64>().with_context(|| format!("'{s}' is not a number"));
        let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || !a.is_finite() || !b.is_finite() {
            bail!("range '{text}' needs finite bounds and a positive step");
        }
        if b < a {
            bail!("range '{text}' is empty");
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        // snap to a 1e-12 grid so that 0.1-style steps print as written
        Ok((0..=n).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect())
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().with_context(|| format!("'{s}' is not a number")))
            .collect()
    }
}

pub fn parse_methods(text: &str) -> Result<Vec<Method>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| s.trim().parse::<Method>().map_err(anyhow::Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"model": {"name": "model2", "m": 0.5, "lambda": 1.0}, "L": 32, "seed": 7}"#
    }

    #[test]
    fn ranges_are_inclusive() {
        assert_eq!(parse_values("0:2:0.25").unwrap().len(), 9);
        assert_eq!(parse_values("0:1:0.1").unwrap()[3], 0.3);
        assert_eq!(parse_values("0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_values("1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_values("1:0:0.1").is_err());
        assert!(parse_values("0:1:0").is_err());
        assert!(parse_values("0:1").is_err());
    }

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(minimal(), Path::new("c.json")).unwrap();
        assert_eq!(c.ensemble, 1);
        assert_eq!(c.methods, vec![Method::Realspace]);
        assert_eq!(c.sweep_points(), vec![vec![]]);
    }

    #[test]
    fn unknown_fields_report_their_line() {
        let text = "{\n  \"model\": {\"name\": \"model1\"},\n  \"L\": 16,\n  \"seed\": 1,\n  \"colour\": 3\n}";
        let err = RunConfig::from_json(text, Path::new("bad.json")).unwrap_err().to_string();
        assert!(err.starts_with("bad.json:5:"), "{err}");
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn seed_is_required() {
        let err = RunConfig::from_json(r#"{"model": {}, "L": 16}"#, Path::new("c.json")).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn semantic_checks() {
        let mut c = RunConfig::from_json(minimal(), Path::new("c.json")).unwrap();
        c.trunc_radius = Some(16);
        assert!(c.validate().is_err());
        c.trunc_radius = None;
        c.model.name = "model9".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn shipped_example_parses() {
        let c = RunConfig::from_json(include_str!("../../../docs/example-run.json"), Path::new("example-run.json"))
            .unwrap();
        assert_eq!(c.sweep_points().len(), 5);
    }

    #[test]
    fn sweep_points_form_a_product() {
        let mut c = RunConfig::from_json(minimal(), Path::new("c.json")).unwrap();
        c.sweep = vec![
            SweepAxis { parameter: ScanAxis::M, values: vec![0.1, 0.2] },
            SweepAxis { parameter: ScanAxis::Lambda, values: vec![0.0, 1.0, 2.0] },
        ];
        let pts = c.sweep_points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1], vec![(ScanAxis::M, 0.1), (ScanAxis::Lambda, 1.0)]);
    }
}
