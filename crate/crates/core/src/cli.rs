//! `ak` command-line front end.
//!
//! Exit codes: 0 success, 1 failed self-check, 2 usage or parameter error,
//! 3 I/O error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::checks::{run_kernel_checks, CheckOutcome, KernelCheckConfig};
use crate::dynamics::{
    asymptotic_map, propagate_moments, symplectic_map, HamiltonianParams, MeterDeltas, MeterMoments,
};
use crate::error::AkError;
use crate::gaussian::{
    assemble_initial_state, probe_moments, GaussianProbeParams, GaussianSystemParams, PhaseSpaceMoments, C64, X1, X2,
};
use crate::inequality::{
    gamma_bound, minimized_product, summarize, uncertainty_report, violation_scan, AxisRange, ScanGrid, ScanRow,
    ScanSummary,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const CSV_HEADER: &str = "a_r,c_i,valid,gamma,gamma_c,violates_generalized,violates_original,boundary";

#[derive(Debug, Parser)]
#[command(name = "ak", version, about = "Arthurs-Kelly joint measurement with Gaussian probes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan the (A_R, C_I) plane of the correlated probe family for Γ_C ≤ Γ.
    Scan(ScanArgs),
    /// Propagate initial moments to t = 1/κ, exactly and/or in the large-κ limit.
    Propagate(PropagateArgs),
    /// Separable bound Γ and the closed-form minimization.
    Bound(BoundArgs),
    /// Randomized checks of the kernel identities.
    KernelCheck(KernelCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Asymptotic,
    Both,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Re B, fixed across the grid.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub br: f64,
    /// Re C, fixed across the grid.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub cr: f64,
    #[arg(long, default_value_t = 1.05, allow_negative_numbers = true)]
    pub ar_min: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub ar_max: f64,
    #[arg(long, default_value_t = 200)]
    pub ar_steps: usize,
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    pub ci_min: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub ci_max: f64,
    #[arg(long, default_value_t = 200)]
    pub ci_steps: usize,
    /// Worker threads (default: available parallelism).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
    /// Write the table here and print the summary line to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

fn parse_complex(s: &str) -> Result<C64, String> {
    let trimmed: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    C64::from_str(&trimmed).map_err(|_| format!("`{s}` is not a complex number (examples: 1, -0.5, 0.3+0.4i, i)"))
}

/// Probe and system wavefunction parameters; complex values as `re+imi`.
#[derive(Debug, Clone, Args)]
pub struct StateArgs {
    #[arg(long = "a", default_value = "1", value_parser = parse_complex, allow_hyphen_values = true)]
    pub a: C64,
    #[arg(long = "b", default_value = "1", value_parser = parse_complex, allow_hyphen_values = true)]
    pub b: C64,
    #[arg(long = "c", default_value = "0", value_parser = parse_complex, allow_hyphen_values = true)]
    pub c: C64,
    #[arg(long, default_value = "0", value_parser = parse_complex, allow_hyphen_values = true)]
    pub d1: C64,
    #[arg(long, default_value = "0", value_parser = parse_complex, allow_hyphen_values = true)]
    pub d2: C64,
    #[arg(long, default_value = "1", value_parser = parse_complex, allow_hyphen_values = true)]
    pub a3: C64,
    #[arg(long, default_value = "0", value_parser = parse_complex, allow_hyphen_values = true)]
    pub d3: C64,
}

impl StateArgs {
    fn build(&self) -> Result<(GaussianProbeParams, GaussianSystemParams), AkError> {
        Ok((
            GaussianProbeParams::new(self.a, self.b, self.c, self.d1, self.d2)?,
            GaussianSystemParams::new(self.a3, self.d3)?,
        ))
    }
}

#[derive(Debug, Clone, Args)]
pub struct MassArgs {
    #[arg(long, default_value_t = 1.0)]
    pub m1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub m2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub m3: f64,
}

#[derive(Debug, Args)]
pub struct PropagateArgs {
    #[command(flatten)]
    pub state: StateArgs,
    #[command(flatten)]
    pub masses: MassArgs,
    #[arg(long, default_value_t = 1e4)]
    pub kappa: f64,
    /// Propagation time for the exact flow (default 1/κ).
    #[arg(long)]
    pub time: Option<f64>,
    #[arg(long, value_enum, default_value_t = Mode::Both)]
    pub mode: Mode,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub k2: Option<f64>,
    #[arg(long)]
    pub k3: Option<f64>,
    #[command(flatten)]
    pub state: StateArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KernelCheckArgs {
    #[command(flatten)]
    pub masses: MassArgs,
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    pub time: f64,
    /// Intermediate time t1 of the composition identity.
    #[arg(long, default_value_t = 0.3)]
    pub split: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
}

impl From<AkError> for CliError {
    fn from(e: AkError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Formats like C's `%.12g`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        format!(
            "{}e{}{:02}",
            trim_zeros(mantissa),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    } else {
        trim_zeros(&format!("{:.*}", (11 - exp) as usize, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            format_float(r.a_r),
            format_float(r.c_i),
            r.valid,
            format_float(r.gamma),
            format_float(r.gamma_c),
            r.violates_generalized,
            r.violates_original,
            r.boundary
        );
    }
    out
}

pub fn scan_json(grid: &ScanGrid, rows: &[ScanRow], summary: &ScanSummary) -> String {
    let rows: Vec<_> = rows
        .iter()
        .map(|r| {
            json!({
                "a_r": r.a_r,
                "c_i": r.c_i,
                "valid": r.valid,
                "gamma": finite_or_null(r.gamma),
                "gamma_c": finite_or_null(r.gamma_c),
                "violates_generalized": r.violates_generalized,
                "violates_original": r.violates_original,
                "boundary": r.boundary,
            })
        })
        .collect();
    let doc = json!({ "grid": grid, "summary": summary_json(summary), "rows": rows });
    serde_json::to_string_pretty(&doc).expect("scan serializes") + "\n"
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

fn summary_json(s: &ScanSummary) -> serde_json::Value {
    json!({
        "points": s.points,
        "valid": s.valid,
        "violations": s.violations,
        "boundary": s.boundary,
        "original_violations": s.original_violations,
        "min_gamma_c": finite_or_null(s.min_gamma_c),
        "negative_alpha": s.negative_alpha,
        "negative_beta": s.negative_beta,
    })
}

pub fn summary_line(s: &ScanSummary) -> String {
    format!(
        "points={} valid={} violations={} boundary={} original_violations={} min_gamma_c={} negative_alpha={} negative_beta={}",
        s.points,
        s.valid,
        s.violations,
        s.boundary,
        s.original_violations,
        format_float(s.min_gamma_c),
        s.negative_alpha,
        s.negative_beta
    )
}

fn emit(out: &Option<PathBuf>, body: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => stdout
            .write_all(body.as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn cmd_scan(args: &ScanArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let grid = ScanGrid {
        br: args.br,
        cr: args.cr,
        ar: AxisRange::new(args.ar_min, args.ar_max, args.ar_steps),
        ci: AxisRange::new(args.ci_min, args.ci_max, args.ci_steps),
    };
    grid.validate()?;
    let threads = args
        .threads
        .map(|t| t as usize)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    let rows = pool.install(|| violation_scan(&grid))?;
    let summary = summarize(&rows);
    let body = match args.format {
        Format::Csv => scan_csv(&rows),
        Format::Json => scan_json(&grid, &rows, &summary),
    };
    emit(&args.out, &body, stdout)?;
    let line = summary_line(&summary);
    if args.out.is_some() {
        writeln!(stdout, "{line}").map_err(|e| CliError::Io(format!("stdout: {e}")))?;
    } else {
        // the table already owns stdout
        eprintln!("{line}");
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct MomentsJson {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl From<&PhaseSpaceMoments> for MomentsJson {
    fn from(s: &PhaseSpaceMoments) -> Self {
        Self {
            mean: s.mean.iter().copied().collect(),
            cov: (0..6).map(|i| (0..6).map(|j| s.cov[(i, j)]).collect()).collect(),
        }
    }
}

fn cmd_propagate(args: &PropagateArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let (probe, system) = args.state.build()?;
    let h = HamiltonianParams::new(args.masses.m1, args.masses.m2, args.masses.m3, args.kappa)?;
    let needs_asymptotic = matches!(args.mode, Mode::Asymptotic | Mode::Both);
    if h.kappa <= 0.0 && (needs_asymptotic || args.time.is_none()) {
        return Err(CliError::Usage(
            "the measurement time 1/κ and the asymptotic map need κ > 0".into(),
        ));
    }
    let t = match args.time {
        Some(t) => t,
        None => 1.0 / h.kappa,
    };
    let initial = assemble_initial_state(&probe, &system)?;

    let mut doc = json!({
        "hamiltonian": h,
        "time": t,
        "mode": format!("{:?}", args.mode).to_lowercase(),
        "probe": probe,
        "system": system,
        "probe_moments": probe_moments(&probe)?,
        "initial": MomentsJson::from(&initial),
    });

    let exact = if matches!(args.mode, Mode::Exact | Mode::Both) {
        let state = propagate_moments(&initial, &symplectic_map(&h, t)?)?;
        let meters = MeterMoments {
            dx1sq: state.variance(X1),
            dx2sq: state.variance(X2),
            mean_x1: state.mean[X1],
            mean_x2: state.mean[X2],
        };
        doc["exact"] = json!({ "moments": MomentsJson::from(&state), "meters": meters });
        Some(meters)
    } else {
        None
    };
    if needs_asymptotic {
        let meters = asymptotic_map(&initial)?;
        doc["asymptotic"] = json!(meters);
        doc["report"] = json!(uncertainty_report(&initial)?);
        if let Some(ex) = exact {
            doc["deltas"] = json!(MeterDeltas::between(&ex, &meters));
        }
    }
    let body = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
    emit(&args.out, &body, stdout)?;
    Ok(EXIT_OK)
}

fn cmd_bound(args: &BoundArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let (k1, k2, k3, source) = match (args.k1, args.k2, args.k3) {
        (Some(k1), Some(k2), Some(k3)) => (k1, k2, k3, "flags"),
        (None, None, None) => {
            let (probe, system) = args.state.build()?;
            let s = assemble_initial_state(&probe, &system)?;
            (
                s.uncertainty_product(1),
                s.uncertainty_product(2),
                s.uncertainty_product(3),
                "state",
            )
        }
        _ => return Err(CliError::Usage("give all of --k1 --k2 --k3, or none".into())),
    };
    let gamma = gamma_bound(k1, k2, k3)?;
    let m = minimized_product(k1, k2, k3)?;
    let doc = json!({
        "source": source,
        "k1": k1,
        "k2": k2,
        "k3": k3,
        "gamma": gamma,
        "x_opt": m.x_opt,
        "y_opt": m.y_opt,
        "product_min": m.product_min,
    });
    emit(
        &args.out,
        &(serde_json::to_string_pretty(&doc).expect("bound serializes") + "\n"),
        stdout,
    )?;
    Ok(EXIT_OK)
}

fn kernel_check_report(cfg: &KernelCheckConfig, outcomes: &[CheckOutcome]) -> String {
    let h = &cfg.hamiltonian;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "kernel-check m=({}, {}, {}) kappa={} b={} t={} split={} seed={} trials={}",
        format_float(h.m1),
        format_float(h.m2),
        format_float(h.m3),
        format_float(h.kappa),
        format_float(h.b()),
        format_float(cfg.t),
        format_float(cfg.split),
        cfg.seed,
        cfg.trials
    );
    for o in outcomes {
        let _ = write!(
            s,
            "{} {:<22} trials={} max_err={:.3e} tol={:.0e}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.trials,
            o.max_error,
            o.tolerance
        );
        if let Some(f) = o.sign_flips {
            let _ = write!(s, " sign_flips={f}");
        }
        s.push('\n');
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
    if failed.is_empty() {
        s.push_str("result: PASS\n");
    } else {
        let _ = writeln!(s, "result: FAIL ({})", failed.join(", "));
    }
    s
}

fn cmd_kernel_check(args: &KernelCheckArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = KernelCheckConfig {
        hamiltonian: HamiltonianParams::new(args.masses.m1, args.masses.m2, args.masses.m3, args.kappa)?,
        t: args.time,
        split: args.split,
        seed: args.seed,
        trials: args.trials,
    };
    let outcomes = run_kernel_checks(&cfg)?;
    emit(&args.out, &kernel_check_report(&cfg, &outcomes), stdout)?;
    Ok(if outcomes.iter().all(|o| o.passed) {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

/// Parses `args` (program name first) and runs the subcommand. Diagnostics
/// go to stderr; reports go to `--out` or `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Scan(a) => cmd_scan(a, stdout),
        Command::Propagate(a) => cmd_propagate(a, stdout),
        Command::Bound(a) => cmd_bound(a, stdout),
        Command::KernelCheck(a) => cmd_kernel_check(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Io(msg)) => {
            eprintln!("I/O error: {msg}");
            EXIT_IO
        }
    }
}
