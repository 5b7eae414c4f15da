//! `sizer`: batch front end and server launcher.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 every tier
//! infeasible. Input errors are written to stderr as `{"errors": [...]}`.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use sizer_core::perfmodel::{fit_coefficients, read_samples_csv};
use sizer_core::report::{
    emit_infrastructure_diagram, emit_performance_curve, emit_summary_report, emit_topology_graph,
};
use sizer_core::{
    compare_tiers, size, validate_request, CoefficientsRef, DemandModel, HardwareTier, ModelCoefficients, ModelError,
    PackerConfig, RunStamp, RuntimeProfile, ServiceSpec, SizingError, SizingRequest, SizingResult, ValidationError,
};
use sizer_server::{load_coefficients, load_tiers, ConfigError, ServeError, ServerConfig};

#[derive(Debug, Parser)]
#[command(name = "sizer", version, about = "Hardware sizing for service deployments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Size a request and write result, topologies, curves, diagram and report.
    Size(SizeArgs),
    /// Fit model coefficients from load-test samples.
    Calibrate(CalibrateArgs),
    /// Predicted CPU for 1..=N identical services on one machine.
    Curve(CurveArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct SizeArgs {
    /// Sizing request JSON.
    #[arg(long)]
    request: PathBuf,
    /// Output directory, or `-` to print result.json only.
    #[arg(long)]
    out: PathBuf,
    /// Coefficient table used when the request has no inline coefficients.
    #[arg(long)]
    coeffs: Option<PathBuf>,
    /// Tiers used when the request lists none.
    #[arg(long)]
    tiers: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Samples CSV.
    #[arg(long)]
    samples: PathBuf,
    /// Output file, or `-` for stdout.
    #[arg(long)]
    out: PathBuf,
    /// Tier the fitted CPU terms are expressed against.
    #[arg(long, default_value = "perflab")]
    reference: String,
    /// Tiers the samples may name, in addition to the standard ones.
    #[arg(long)]
    tiers: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CurveArgs {
    /// Runtime profile JSON.
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    tier: String,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=100_000))]
    max: u32,
    /// Output file, or `-` for stdout.
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "impl", default_value = "java")]
    implementation_type: String,
    #[arg(long = "binding", default_value = "soap_http")]
    binding_type: String,
    #[arg(long)]
    coeffs: Option<PathBuf>,
    #[arg(long)]
    tiers: Option<PathBuf>,
    /// CPU cap W in percent.
    #[arg(long, default_value_t = PackerConfig::default().cpu_cap_pct)]
    cpu_cap: f64,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "SIZER_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, env = "SIZER_DATA", default_value = "sizer-data")]
    data_dir: PathBuf,
    #[arg(long, env = "SIZER_TIERS")]
    tiers_file: Option<PathBuf>,
    #[arg(long, env = "SIZER_COEFFS")]
    coeffs_file: Option<PathBuf>,
    #[arg(long, env = "SIZER_UI")]
    ui_dir: Option<PathBuf>,
}

enum Failure {
    Input(Vec<Value>),
    Infeasible(Vec<Value>),
    Io(String),
}

impl Failure {
    fn input(kind: &str, message: impl ToString) -> Self {
        Failure::Input(vec![json!({ kind: message.to_string() })])
    }

    fn validation(errors: &[ValidationError]) -> Self {
        Failure::Input(errors.iter().map(|e| serde_json::to_value(e).expect("errors serialize")).collect())
    }

    fn model(e: &ModelError) -> Self {
        Failure::input(e.kind(), e)
    }

    fn config(e: ConfigError) -> Self {
        Failure::input("config_error", e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Size(args) => run_size(&args),
        Command::Calibrate(args) => run_calibrate(&args),
        Command::Curve(args) => run_curve(&args),
        Command::Serve(args) => run_serve(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Io(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(Failure::Input(errors)) => {
            eprintln!("{}", json!({ "errors": errors }));
            ExitCode::from(2)
        }
        Err(Failure::Infeasible(errors)) => {
            eprintln!("{}", json!({ "errors": errors }));
            ExitCode::from(3)
        }
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::input("unreadable_input", format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_slice(&read_input(path)?)
        .map_err(|e| Failure::input("malformed_json", format!("{}: {e}", path.display())))
}

fn is_stdout(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn write_output(path: &Path, contents: &str) -> Outcome {
    if is_stdout(path) {
        return std::io::stdout()
            .lock()
            .write_all(contents.as_bytes())
            .map_err(|e| Failure::Io(format!("stdout: {e}")));
    }
    fs::write(path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

fn optional_tiers(path: Option<&Path>) -> Result<Vec<HardwareTier>, Failure> {
    path.map(load_tiers).transpose().map(Option::unwrap_or_default).map_err(Failure::config)
}

fn optional_coeffs(path: Option<&Path>) -> Result<ModelCoefficients, Failure> {
    path.map(load_coefficients).transpose().map(Option::unwrap_or_default).map_err(Failure::config)
}

/// Batch runs are reproducible: the id is derived from the validated request
/// and the timestamp comes from `SOURCE_DATE_EPOCH` (Unix epoch if unset).
fn batch_stamp(request: &SizingRequest) -> Result<RunStamp, Failure> {
    let digest = Sha256::digest(serde_json::to_vec(request).expect("requests serialize"));
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    let secs = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v.trim().parse::<i64>().map_err(|_| Failure::input("invalid_source_date_epoch", v))?,
        Err(_) => 0,
    };
    let created_at =
        DateTime::<Utc>::from_timestamp(secs, 0).ok_or_else(|| Failure::input("invalid_source_date_epoch", secs))?;
    Ok(RunStamp::new(format!("batch-{hex}"), created_at))
}

/// Tier names become file names; anything outside `[A-Za-z0-9_-]` is replaced.
fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn run_size(args: &SizeArgs) -> Outcome {
    let request: SizingRequest = read_json(&args.request)?;
    let tiers = optional_tiers(args.tiers.as_deref())?;
    let coeffs = match &request.coefficients {
        Some(CoefficientsRef::Inline(c)) => c.clone(),
        Some(CoefficientsRef::Named(name)) => {
            return Err(Failure::validation(&[ValidationError::UnknownCoefficients(name.clone())]))
        }
        None => optional_coeffs(args.coeffs.as_deref())?,
    };
    let request = validate_request(&request, &coeffs, &tiers).map_err(|e| Failure::validation(&e))?;
    let result = size(&request, &coeffs, batch_stamp(&request)?).map_err(|e| match e {
        SizingError::Invalid(errors) => Failure::validation(&errors),
        SizingError::Model(e) => Failure::model(&e),
    })?;

    if is_stdout(&args.out) {
        write_output(&args.out, &pretty(&result))?;
    } else {
        write_artifacts(&args.out, &result)?;
    }

    if result.any_feasible() {
        Ok(())
    } else {
        let errors = result.failures.iter().map(|(tier, f)| json!({ "tier": tier, "failure": f })).collect();
        Err(Failure::Infeasible(errors))
    }
}

fn write_artifacts(dir: &Path, result: &SizingResult) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    write_output(&dir.join("result.json"), &pretty(result))?;
    for (tier, topology) in &result.per_tier {
        write_output(&dir.join(format!("topology_{}.dot", file_stem(tier))), &emit_topology_graph(topology))?;
    }
    let cap = result.request_echo.packer.cpu_cap_pct;
    for (tier, curve) in &result.curves {
        write_output(&dir.join(format!("curve_{}.csv", file_stem(tier))), &emit_performance_curve(curve, cap))?;
    }
    if compare_tiers(result).is_ok() {
        let diagram = emit_infrastructure_diagram(result).expect("a feasible tier exists");
        write_output(&dir.join("infrastructure.dot"), &diagram)?;
    }
    write_output(&dir.join("report.md"), &emit_summary_report(result))
}

fn run_calibrate(args: &CalibrateArgs) -> Outcome {
    let tiers = optional_tiers(args.tiers.as_deref())?;
    let reference = sizer_core::resolve_tier(&args.reference, &tiers)
        .ok_or_else(|| Failure::model(&ModelError::UnknownTier(args.reference.clone())))?;
    let samples = read_samples_csv(read_input(&args.samples)?.as_slice()).map_err(|e| Failure::model(&e))?;
    let prior = ModelCoefficients::default();
    let coeffs = fit_coefficients(&samples, &reference, &tiers, Some(&prior)).map_err(|e| Failure::model(&e))?;
    write_output(&args.out, &pretty(&coeffs))
}

fn run_curve(args: &CurveArgs) -> Outcome {
    let profile: RuntimeProfile = read_json(&args.profile)?;
    let invalid = profile.invalid_fields();
    if !invalid.is_empty() {
        let errors: Vec<_> = invalid
            .into_iter()
            .map(|f| ValidationError::InvalidProfile(sizer_core::FieldRef::new("profile", f)))
            .collect();
        return Err(Failure::validation(&errors));
    }
    let packer = PackerConfig::default().with_cpu_cap(args.cpu_cap);
    let violations = packer.violations();
    if !violations.is_empty() {
        return Err(Failure::validation(&violations));
    }
    let tiers = optional_tiers(args.tiers.as_deref())?;
    let model = DemandModel::new(optional_coeffs(args.coeffs.as_deref())?, &tiers).map_err(|e| Failure::model(&e))?;
    let tier = model.tier(&args.tier).ok_or_else(|| Failure::model(&ModelError::UnknownTier(args.tier.clone())))?;
    let template = ServiceSpec::new("template", &args.implementation_type, &args.binding_type);
    let curve = model
        .performance_curve(&profile, &template, &tier, &packer, args.max as usize)
        .map_err(|e| Failure::model(&e))?;
    write_output(&args.out, &emit_performance_curve(&curve, args.cpu_cap))
}

fn run_serve(args: ServeArgs) -> Outcome {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let config = ServerConfig {
        listen: args.listen,
        data_dir: args.data_dir,
        tiers_file: args.tiers_file,
        coeffs_file: args.coeffs_file,
        ui_dir: args.ui_dir,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(format!("runtime: {e}")))?;
    runtime.block_on(sizer_server::serve(config)).map_err(|e| match e {
        ServeError::Config(e) => Failure::config(e),
        other => Failure::Io(other.to_string()),
    })
}
