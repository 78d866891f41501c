use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use oddchern::clifford::{key_identity_trials, verify_clifford_identities};
use oddchern::ensemble::ScanAxis;
use oddchern::invariants::{CochainArguments, PrefactorConvention};
use serde::Serialize;

mod config;
mod run;

use config::{parse_methods, parse_values, FracMomentConfig, ModelSelector, RunConfig, SweepAxis, Tolerances};

#[derive(Debug, Parser)]
#[command(name = "oddchern", version, about = "Odd Chern numbers and Fredholm indices of chiral lattice models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute a JSON run configuration
    Run {
        config: PathBuf,
        #[arg(long, env = "ODDCHERN_OUTPUT_DIR")]
        output: Option<PathBuf>,
    },
    /// Invariant statistics over a parameter grid
    Sweep(EnsembleArgs),
    /// Check the Clifford trace identities and the key geometric identity
    VerifyIdentities {
        #[arg(long, default_value_t = 3)]
        d: usize,
        /// Random permutations, words and simplices per check
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Monte Carlo sample pairs per simplex
        #[arg(long, default_value_t = 1 << 20)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, env = "ODDCHERN_OUTPUT_DIR")]
        output: Option<PathBuf>,
    },
    /// Decay profile of the flat-band unitary
    Decay(EnsembleArgs),
    /// Fractional moments of the regularized resolvent
    Fracmom {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[arg(long, default_value_t = 0.0)]
        energy: f64,
        #[arg(long, default_value_t = 1e-3)]
        eta: f64,
        #[arg(long, default_value_t = 20)]
        min_ensemble: usize,
    },
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    /// Built-in model: model1, model2 or model3d
    #[arg(long, default_value = "model2")]
    model: String,
    /// JSON model document, used instead of a built-in model
    #[arg(long, conflicts_with = "model")]
    model_file: Option<PathBuf>,
    /// Mass: a value, a list `a,b,c`, or a range `start:stop:step`
    #[arg(long, default_value = "0")]
    m: String,
    /// Disorder strength, same grammar as `--m`
    #[arg(long, default_value = "0")]
    lambda: String,
    /// Mass-disorder strength (defaults to lambda), same grammar as `--m`
    #[arg(long)]
    lambda_prime: Option<String>,
    #[arg(long = "L")]
    size: usize,
    #[arg(long, default_value_t = 1)]
    ensemble: usize,
    /// Master seed for the disorder ensemble
    #[arg(long)]
    seed: u64,
    /// Comma-separated subset of kspace, realspace, fedosov
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    trunc_radius: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    trace_fraction: f64,
    #[arg(long, default_value_t = 256)]
    kspace_grid: usize,
    /// Dirac-phase offset, comma-separated, in [0, 1]^d
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    gap_tol: Option<f64>,
    #[arg(long, value_enum, default_value = "winding")]
    convention: ConventionArg,
    #[arg(long, value_enum, default_value = "alternating")]
    arguments: ArgumentsArg,
    #[arg(long, env = "ODDCHERN_OUTPUT_DIR")]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum ConventionArg {
    Winding,
    Local,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum ArgumentsArg {
    Alternating,
    Uniform,
}

impl EnsembleArgs {
    fn config(&self, default_methods: &str) -> Result<RunConfig> {
        let axis = |axis: ScanAxis, text: &str| -> Result<(f64, Option<SweepAxis>)> {
            let values = parse_values(text).with_context(|| format!("--{}", flag_name(axis)))?;
            Ok(match values.as_slice() {
                [v] => (*v, None),
                _ => (values[0], Some(SweepAxis { parameter: axis, values })),
            })
        };
        let (m, sm) = axis(ScanAxis::M, &self.m)?;
        let (lambda, sl) = axis(ScanAxis::Lambda, &self.lambda)?;
        let (lambda_prime, slp) = match &self.lambda_prime {
            Some(t) => {
                let (v, s) = axis(ScanAxis::LambdaPrime, t)?;
                (Some(v), s)
            }
            None => (None, None),
        };
        let document = match &self.model_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                Some(serde_json::from_str(&text).with_context(|| format!("{}: not valid JSON", path.display()))?)
            }
            None => None,
        };
        let x0 = match &self.x0 {
            Some(t) => Some(parse_values(t).context("--x0")?),
            None => None,
        };
        let mut tolerances = Tolerances::default();
        if let Some(g) = self.gap_tol {
            tolerances.gap_tol = g;
        }
        Ok(RunConfig {
            model: ModelSelector { name: self.model.clone(), m, lambda, lambda_prime, document },
            size: self.size,
            ensemble: self.ensemble,
            seed: self.seed,
            methods: parse_methods(self.methods.as_deref().unwrap_or(default_methods))?,
            trunc_radius: self.trunc_radius,
            trace_fraction: self.trace_fraction,
            kspace_grid: self.kspace_grid,
            x0,
            sweep: [sm, sl, slp].into_iter().flatten().collect(),
            tolerances,
            convention: match self.convention {
                ConventionArg::Winding => PrefactorConvention::Winding,
                ConventionArg::Local => PrefactorConvention::Local,
            },
            arguments: match self.arguments {
                ArgumentsArg::Alternating => CochainArguments::Alternating,
                ArgumentsArg::Uniform => CochainArguments::Uniform,
            },
            decay: false,
            fracmom: None,
            output_dir: None,
        })
    }
}

fn flag_name(axis: ScanAxis) -> &'static str {
    match axis {
        ScanAxis::M => "m",
        ScanAxis::Lambda => "lambda",
        ScanAxis::LambdaPrime => "lambda-prime",
    }
}

fn report(summary: &run::RunSummary, dir: &std::path::Path) {
    for p in &summary.points {
        let head = format!("m={} λ={} λ'={} L={}", p.params.m, p.params.lambda, p.params.lambda_prime, p.size);
        if let Some(k) = &p.kspace {
            println!("{head}  kspace {:.6} (gap {:.3e})", k.value, k.gap.unwrap_or(f64::NAN));
        }
        for s in &p.methods {
            if s.method == oddchern::Method::Kspace {
                continue;
            }
            println!(
                "{head}  {} n={} mean {:.6} std {:.2e} mode {} ({:.0}%)",
                s.method,
                s.count,
                s.mean,
                s.std,
                s.mode,
                100.0 * s.mode_fraction
            );
        }
        if let Some(d) = &p.decay {
            println!("{head}  decay rate {:.4}", d.rate);
        }
        if let Some(f) = &p.fracmom {
            println!("{head}  β_s {:.4} (s = {})", f.beta, f.s);
        }
        if p.rejected > 0 {
            println!("{head}  {} gapless samples rejected", p.rejected);
        }
        for n in &p.notes {
            println!("{head}  note: {n}");
        }
    }
    println!("results written to {}", dir.display());
}

fn execute(config: RunConfig, output: Option<PathBuf>, command: &str) -> Result<ExitCode> {
    let dir = run::output_dir(output, &config);
    let summary = run::execute(&config, &dir, command)?;
    report(&summary, &dir);
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct IdentityOutput {
    clifford: oddchern::clifford::IdentityReport,
    key_identity: oddchern::clifford::KeyIdentityReport,
    passed: bool,
}

fn verify_identities(d: usize, trials: usize, samples: usize, seed: u64, tol: f64, output: Option<PathBuf>) -> Result<ExitCode> {
    if trials == 0 || samples == 0 {
        bail!("--trials and --samples must be positive");
    }
    let exhaustive = if d <= 3 { 3 } else { 2 };
    let clifford = verify_clifford_identities(d, exhaustive, trials, seed, tol)?;
    println!(
        "Clifford identities, d={d}: {} checks, max error {:.2e}, {} failures",
        clifford.checks,
        clifford.max_error,
        clifford.failures.len()
    );
    for f in clifford.failures.iter().take(10) {
        println!("  {f}");
    }
    let key = key_identity_trials(d, trials, samples, seed)?;
    let key_ok = key.passed(3.0, 0.02);
    println!(
        "key geometric identity, d={d}: {trials} simplices, worst {:.2}σ, worst relative error {:.2e}",
        key.max_sigmas, key.max_relative_error
    );
    let passed = clifford.passed() && key_ok;
    if let Some(dir) = output {
        std::fs::create_dir_all(&dir)?;
        let file = std::fs::File::create(dir.join("identities.json"))?;
        serde_json::to_writer_pretty(file, &IdentityOutput { clifford, key_identity: key, passed })?;
    }
    println!("{}", if passed { "all checks passed" } else { "CHECKS FAILED" });
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output } => RunConfig::load(&config).and_then(|c| execute(c, output, "run")),
        Command::Sweep(args) => args.config("realspace").and_then(|c| execute(c, args.output.clone(), "sweep")),
        Command::Decay(args) => args.config("").and_then(|mut c| {
            c.decay = true;
            execute(c, args.output.clone(), "decay")
        }),
        Command::Fracmom { ensemble, s, energy, eta, min_ensemble } => ensemble.config("").and_then(|mut c| {
            c.fracmom = Some(FracMomentConfig { s, energy, eta, min_ensemble });
            execute(c, ensemble.output.clone(), "fracmom")
        }),
        Command::VerifyIdentities { d, trials, samples, seed, tol, output } => {
            verify_identities(d, trials, samples, seed, tol, output)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
