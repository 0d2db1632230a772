//! Command-line front end: `synth`, `mask`, `impute`, `eval`, `spectrum`.
//!
//! Every subcommand writes a JSON run manifest next to its main output
//! (`<output>.manifest.json`) unless `--manifest` names another path.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, generate_mask, residuals, spectrum, MaskSpec, MissingPattern};
use crate::io::{
    read_mask, read_matrix, write_mask, write_matrix, write_spectrum, write_text, write_values,
    MatrixFormat, RunManifest,
};
use crate::solver::{run, SolverConfig};
use crate::synth::synth;
use crate::tensor::{tensorize, ObservationMask, TensorDims};
use crate::transform::{build_transform, TransformKind};

#[derive(Debug, Parser)]
#[command(name = "lstc", version, about = "Low-tubal-rank smoothing tensor completion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic low-tubal-rank dataset.
    Synth(SynthArgs),
    /// Hold out entries of a dataset for evaluation.
    Mask(MaskArgs),
    /// Complete a partially observed dataset.
    Impute(ImputeArgs),
    /// Score a recovered dataset on held-out entries.
    Eval(EvalArgs),
    /// Dump per-slice singular values in the transformed domain.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PatternArg {
    Rm,
    Nm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformArg {
    #[value(alias = "data-driven")]
    Unitary,
    Dct,
    Identity,
}

impl From<TransformArg> for TransformKind {
    fn from(t: TransformArg) -> Self {
        match t {
            TransformArg::Unitary => TransformKind::DataDriven,
            TransformArg::Dct => TransformKind::Dct,
            TransformArg::Identity => TransformKind::Identity,
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Dataset path (`.csv`/`.txt` delimited, anything else binary).
    #[arg(long)]
    pub input: PathBuf,
    /// Intervals per day; required for delimited input.
    #[arg(long)]
    pub intervals: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub sensors: usize,
    #[arg(long)]
    pub intervals: usize,
    #[arg(long)]
    pub days: usize,
    #[arg(long, default_value_t = 3)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub pattern: PatternArg,
    #[arg(long)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hold out exactly round(rate · units) units.
    #[arg(long)]
    pub exact_quota: bool,
    /// Writes `<prefix>.train.mask`, `<prefix>.test.mask` and `<prefix>.masked.<ext>`.
    #[arg(long)]
    pub out_prefix: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = TransformArg::Unitary)]
    pub transform: TransformArg,
    #[arg(long, default_value_t = 1e-3)]
    pub rho0: f64,
    /// Defaults to 1e5 · rho0.
    #[arg(long)]
    pub rho_max: Option<f64>,
    /// λ = lambda_coef · ρ; 0 disables smoothing.
    #[arg(long, default_value_t = 1e-3)]
    pub lambda_coef: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Refit period of the data-driven transform; 0 disables refits.
    #[arg(long, default_value_t = 10)]
    pub refresh: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SolverArgs {
    pub fn to_config(&self) -> SolverConfig {
        SolverConfig {
            rho0: self.rho0,
            rho_max: self.rho_max.unwrap_or(1e5 * self.rho0),
            rho_growth: 1.05,
            lambda_coef: self.lambda_coef,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            phi_refresh_period: self.refresh,
            transform: self.transform.into(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-iteration trace; defaults to `<out>.trace.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub recovered: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub intervals: Option<usize>,
    /// JSON report with keys mape, rmse, n_eval, n_skipped_zero.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = TransformArg::Unitary)]
    pub transform: TransformArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn manifest_path(explicit: &Option<PathBuf>, primary: &Path) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| with_suffix(primary, ".manifest.json"))
}

fn read_input(input: &InputArgs) -> Result<(crate::SpatioTemporalMatrix, ObservationMask, TensorDims)> {
    read_matrix(
        &input.input,
        MatrixFormat::from_path(&input.input),
        input.intervals,
    )
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Mask(a) => cmd_mask(a),
        Command::Impute(a) => cmd_impute(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Spectrum(a) => cmd_spectrum(a),
    }
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let dims = TensorDims::new(a.sensors, a.intervals, a.days)?;
    let y = synth(dims, a.rank, a.sigma, a.seed)?;
    let full = ObservationMask::full(dims.sensors(), dims.total_time());
    write_matrix(&a.out, &y, &full, dims, MatrixFormat::from_path(&a.out))?;

    let mut manifest = RunManifest::new("synth");
    manifest.outputs.push(a.out.clone());
    manifest.seed = Some(a.seed);
    for (k, v) in [
        ("sensors", a.sensors.into()),
        ("intervals", a.intervals.into()),
        ("days", a.days.into()),
        ("rank", a.rank.into()),
        ("sigma", a.sigma.into()),
    ] {
        manifest.extra.insert(k.to_string(), v);
    }
    manifest.write(&manifest_path(&a.manifest, &a.out))
}

fn cmd_mask(a: MaskArgs) -> Result<()> {
    let (y, base, dims) = read_input(&a.input)?;
    let spec = MaskSpec {
        pattern: match a.pattern {
            PatternArg::Rm => MissingPattern::Rm,
            PatternArg::Nm => MissingPattern::Nm,
        },
        rate: a.rate,
        seed: a.seed,
        exact_quota: a.exact_quota,
    };
    let (train, test) = generate_mask(&base, dims, &spec)?;

    let ext = a
        .input
        .input
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("lstc");
    let train_path = with_suffix(&a.out_prefix, ".train.mask");
    let test_path = with_suffix(&a.out_prefix, ".test.mask");
    let masked_path = with_suffix(&a.out_prefix, &format!(".masked.{ext}"));
    write_mask(&train_path, &train)?;
    write_mask(&test_path, &test)?;
    write_matrix(&masked_path, &y, &train, dims, MatrixFormat::from_path(&masked_path))?;

    let mut manifest = RunManifest::new("mask");
    manifest.inputs.push(a.input.input.clone());
    manifest.outputs = vec![train_path, test_path, masked_path];
    manifest.seed = Some(a.seed);
    manifest.mask = Some(spec);
    manifest.write(&manifest_path(&a.manifest, &a.out_prefix))
}

fn cmd_impute(a: ImputeArgs) -> Result<()> {
    let (y, mask, dims) = read_input(&a.input)?;
    let config = a.solver.to_config();
    let (recovered, trace) = run(&y, &mask, dims, &config)?;
    let trace_path = a.trace.clone().unwrap_or_else(|| with_suffix(&a.out, ".trace.csv"));
    let full = ObservationMask::full(dims.sensors(), dims.total_time());
    write_matrix(&a.out, &recovered, &full, dims, MatrixFormat::from_path(&a.out))?;
    write_text(&trace_path, &trace.to_delimited())?;
    eprintln!(
        "{} after {} iterations (final metric {:.3e})",
        if trace.converged { "converged" } else { "NOT converged" },
        trace.iterations(),
        trace.final_metric().unwrap_or(f64::NAN)
    );

    let mut manifest = RunManifest::new("impute");
    manifest.inputs.push(a.input.input.clone());
    manifest.outputs = vec![a.out.clone(), trace_path];
    manifest.seed = Some(config.seed);
    manifest.solver = Some(config);
    manifest
        .extra
        .insert("converged".into(), trace.converged.into());
    manifest
        .extra
        .insert("iterations".into(), trace.iterations().into());
    manifest.write(&manifest_path(&a.manifest, &a.out))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (truth, _, dims) = read_matrix(&a.truth, MatrixFormat::from_path(&a.truth), a.intervals)?;
    let (recovered, _, rdims) = read_matrix(
        &a.recovered,
        MatrixFormat::from_path(&a.recovered),
        a.intervals.or(Some(dims.intervals())),
    )?;
    if rdims != dims {
        return Err(Error::InvalidDims(format!(
            "truth has dims {dims:?} but recovered has {rdims:?}"
        )));
    }
    let test = read_mask(&a.test)?;
    let report = evaluate(&truth, &recovered, &test)?;
    write_text(&a.report, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    let mut outputs = vec![a.report.clone()];
    if let Some(path) = &a.residuals {
        write_values(path, "residual", &residuals(&truth, &recovered, &test)?)?;
        outputs.push(path.clone());
    }
    println!("MAPE {:.4}  RMSE {:.4}  n={}", report.mape, report.rmse, report.n_eval);

    let mut manifest = RunManifest::new("eval");
    manifest.inputs = vec![a.truth.clone(), a.recovered.clone(), a.test.clone()];
    manifest.outputs = outputs;
    manifest.write(&manifest_path(&a.manifest, &a.report))
}

fn cmd_spectrum(a: SpectrumArgs) -> Result<()> {
    let (y, _, dims) = read_input(&a.input)?;
    let x = tensorize(&y, dims)?;
    let phi = build_transform(a.transform.into(), &x)?;
    write_spectrum(&a.out, &spectrum(&x, &phi)?)?;

    let mut manifest = RunManifest::new("spectrum");
    manifest.inputs.push(a.input.input.clone());
    manifest.outputs.push(a.out.clone());
    manifest
        .extra
        .insert("transform".into(), TransformKind::from(a.transform).to_string().into());
    manifest.write(&manifest_path(&a.manifest, &a.out))
}

/// Parses `argv` (including the program name) and runs it. Returns the
/// process exit code: 0 on success, 2 on usage errors, 1 otherwise.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
