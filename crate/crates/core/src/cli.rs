//! The `gnc` command line.
//!
//! Exit codes: 0 success, 1 verification gate failed, 2 bad flags or
//! configuration, 3 solver failure, 4 malformed input files, 5 no closed form.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bounds::{margin_bounds, one_vs_one_lower_bound, scan_dimensions, scan_to_csv, ScanRow};
use crate::closed_forms::closed_form_optimum;
use crate::error::Error;
use crate::io::{read_classifier, read_features, write_configuration};
use crate::metrics::{gnc_report, LabeledFeatureSet};
use crate::solver::{
    default_restarts, geometric_schedule, solve_softmax_code, solve_tammes,
    verify_hardmax_convergence, HardmaxRow, SolverConfig,
};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "GNC_THREADS";

/// Largest final gap accepted by `verify hardmax`.
pub const HARDMAX_GATE: f64 = 0.02;

pub mod exit {
    pub const OK: i32 = 0;
    pub const GATE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const INPUT: i32 = 4;
    pub const NO_CLOSED_FORM: i32 = 5;
}

#[derive(Debug, Parser)]
#[command(name = "gnc", version, about = "Softmax codes, Tammes configurations and collapse metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for a softmax code or a Tammes configuration.
    Solve(SolveArgs),
    /// Evaluate metrics on exported features and classifier weights.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Analytic bounds on the best one-vs-rest distance.
    Bounds(BoundsArgs),
    /// Bounds (and optionally solver results) over a list of dimensions.
    Scan(ScanArgs),
    /// Numerical checks of limiting behavior.
    Verify {
        #[command(subcommand)]
        what: VerifyCommand,
    },
    /// Write the known optimal configuration for (d, K).
    ClosedForm(ClosedFormArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Problem {
    SoftmaxCode,
    Tammes,
}

#[derive(Debug, Args)]
pub struct SolverFlags {
    /// Number of restarts [default: 16 for d <= 4, else 8]
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub tau_start: f64,
    /// Number of temperature stages, each half the previous.
    #[arg(long, default_value_t = 8)]
    pub tau_stages: usize,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
}

impl SolverFlags {
    fn config(&self, dim: usize, count: usize) -> SolverConfig {
        SolverConfig {
            tau_schedule: geometric_schedule(self.tau_start, self.tau_stages),
            restarts: self.restarts.unwrap_or_else(|| default_restarts(dim)),
            max_iters: self.max_iters,
            seed: self.seed,
            ..SolverConfig::new(dim, count)
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(value_enum)]
    pub problem: Problem,
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub classes: usize,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Output stem: writes `<out>.csv` (configuration) and `<out>.json` (report).
    /// Without it the report goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// GNC metrics and NCC accuracy.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// CSV with header `label,f0,...`
    #[arg(long)]
    pub features: PathBuf,
    /// Headerless CSV, one classifier vector per row.
    #[arg(long)]
    pub weights: PathBuf,
    /// `auto` (closed form, else solver), `none`, or a number.
    #[arg(long, default_value = "none")]
    pub reference: String,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub classes: usize,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    #[arg(long)]
    pub with_solver: bool,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum VerifyCommand {
    /// Fixed-temperature solutions against the continuation-solved code.
    Hardmax(HardmaxArgs),
}

#[derive(Debug, Args)]
pub struct HardmaxArgs {
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, default_value_t = 7)]
    pub classes: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.2,0.1,0.05")]
    pub taus: Vec<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Always exit 0 when the table was produced.
    #[arg(long)]
    pub no_gate: bool,
    #[arg(long, value_enum, default_value_t = TableFormat::Json)]
    pub format: TableFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClosedFormArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsDocument {
    pub dim: usize,
    pub count: usize,
    pub lower: f64,
    pub upper: f64,
    pub one_vs_one_lower: f64,
    pub applicable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanDocument {
    pub count: usize,
    pub rows: Vec<ScanRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardmaxDocument {
    pub dim: usize,
    pub count: usize,
    pub restarts: usize,
    pub seed: u64,
    pub rows: Vec<HardmaxRow>,
    pub final_gap: f64,
    pub gate: f64,
    pub passed: bool,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

fn usage(e: Error) -> Failure {
    Failure::new(exit::USAGE, e.to_string())
}

fn solver_failure(e: Error) -> Failure {
    match e {
        Error::InvalidConfig(_) | Error::InvalidShape { .. } => usage(e),
        other => Failure::new(exit::SOLVER, other.to_string()),
    }
}

fn input_failure(path: &Path, e: Error) -> Failure {
    Failure::new(exit::INPUT, format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::new(exit::INPUT, format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    let io_fail = |e: std::io::Error| Failure::new(exit::USAGE, format!("cannot write output: {e}"));
    match out {
        Some(p) => std::fs::write(p, text).map_err(io_fail),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(io_fail)?;
            stdout.flush().map_err(io_fail)
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable document");
    s.push('\n');
    s
}

fn with_extension(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_config_file(path: &Path, config: &crate::geometry::SphericalConfiguration) -> Result<(), Failure> {
    let file = File::create(path)
        .map_err(|e| Failure::new(exit::USAGE, format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    write_configuration(&mut w, config).map_err(usage)?;
    w.flush().map_err(|e| Failure::new(exit::USAGE, e.to_string()))
}

fn cmd_solve(args: &SolveArgs) -> Result<(), Failure> {
    let cfg = args.solver.config(args.dim, args.classes);
    cfg.validate().map_err(usage)?;
    let report = match args.problem {
        Problem::SoftmaxCode => solve_softmax_code(&cfg),
        Problem::Tammes => solve_tammes(&cfg),
    }
    .map_err(solver_failure)?;
    if !report.achieved.is_finite() {
        return Err(Failure::new(exit::SOLVER, "solver produced a non-finite objective"));
    }
    let doc = json(&report.document());
    match &args.out {
        Some(stem) => {
            write_config_file(&with_extension(stem, "csv"), &report.best_config)?;
            emit(Some(&with_extension(stem, "json")), &doc)
        }
        None => emit(None, &doc),
    }
}

fn cmd_metrics(args: &MetricsArgs) -> Result<(), Failure> {
    let w = read_classifier(open(&args.weights)?).map_err(|e| input_failure(&args.weights, e))?;
    let features: LabeledFeatureSet = read_features(open(&args.features)?, Some(w.ncols()))
        .map_err(|e| input_failure(&args.features, e))?;
    if features.dim() != w.nrows() {
        return Err(Failure::new(
            exit::INPUT,
            format!(
                "features have dimension {} but weights have dimension {}",
                features.dim(),
                w.nrows()
            ),
        ));
    }
    let (d, k) = (w.nrows(), w.ncols());
    let reference = match args.reference.as_str() {
        "none" => None,
        "auto" => match closed_form_optimum(d, k) {
            Some((_, rho)) => {
                eprintln!("reference: closed form for d={d}, K={k}");
                Some(rho)
            }
            None => {
                let cfg = args.solver.config(d, k);
                let report = solve_softmax_code(&cfg).map_err(solver_failure)?;
                eprintln!("reference: multi-start solver with {} restarts (seed {})", cfg.restarts, cfg.seed);
                Some(report.achieved)
            }
        },
        value => Some(value.parse::<f64>().map_err(|_| {
            Failure::new(exit::USAGE, format!("--reference must be auto, none or a number, got `{value}`"))
        })?),
    };
    let report = gnc_report(&w, &features, reference).map_err(|e| Failure::new(exit::INPUT, e.to_string()))?;
    emit(args.out.as_deref(), &json(&report))
}

fn cmd_bounds(args: &BoundsArgs) -> Result<(), Failure> {
    let b = margin_bounds(args.dim, args.classes).map_err(usage)?;
    let doc = BoundsDocument {
        dim: b.dim,
        count: b.count,
        lower: b.lower,
        upper: b.upper,
        one_vs_one_lower: one_vs_one_lower_bound(args.dim, args.classes).map_err(usage)?,
        applicable: b.applicable,
    };
    emit(args.out.as_deref(), &json(&doc))
}

fn cmd_scan(args: &ScanArgs) -> Result<(), Failure> {
    let template = args.solver.config(2, args.classes);
    if args.with_solver {
        template.validate().map_err(usage)?;
    }
    let rows = scan_dimensions(args.classes, &args.dims, args.with_solver.then_some(&template))
        .map_err(solver_failure)?;
    let text = match args.format {
        TableFormat::Csv => scan_to_csv(&rows),
        TableFormat::Json => json(&ScanDocument {
            count: args.classes,
            rows,
        }),
    };
    emit(args.out.as_deref(), &text)
}

fn hardmax_csv(rows: &[HardmaxRow]) -> String {
    let mut s = String::from("tau,ce_max_cosine,hardmax_reference,gap\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            crate::io::format_real(r.tau),
            crate::io::format_real(r.ce_max_cosine),
            crate::io::format_real(r.hardmax_reference),
            crate::io::format_real(r.gap)
        ));
    }
    s
}

fn cmd_hardmax(args: &HardmaxArgs) -> Result<i32, Failure> {
    let restarts = args.restarts.unwrap_or_else(|| default_restarts(args.dim));
    let rows = verify_hardmax_convergence(args.dim, args.classes, &args.taus, restarts, args.seed)
        .map_err(solver_failure)?;
    let final_gap = rows.last().map_or(f64::NAN, |r| r.gap);
    let passed = final_gap < HARDMAX_GATE;
    let text = match args.format {
        TableFormat::Csv => hardmax_csv(&rows),
        TableFormat::Json => json(&HardmaxDocument {
            dim: args.dim,
            count: args.classes,
            restarts,
            seed: args.seed,
            rows,
            final_gap,
            gate: HARDMAX_GATE,
            passed,
        }),
    };
    emit(args.out.as_deref(), &text)?;
    if passed || args.no_gate {
        Ok(exit::OK)
    } else {
        eprintln!("final gap {final_gap} is not below {HARDMAX_GATE}");
        Ok(exit::GATE)
    }
}

fn cmd_closed_form(args: &ClosedFormArgs) -> Result<(), Failure> {
    let Some((config, _)) = closed_form_optimum(args.dim, args.classes) else {
        return Err(Failure::new(
            exit::NO_CLOSED_FORM,
            format!("no closed form for d={}, K={}", args.dim, args.classes),
        ));
    };
    match &args.out {
        Some(p) => write_config_file(p, &config),
        None => {
            let mut buf = Vec::new();
            write_configuration(&mut buf, &config).map_err(usage)?;
            emit(None, &String::from_utf8_lossy(&buf))
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::new(exit::USAGE, format!("{THREADS_ENV} must be a positive integer")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<i32, Failure> {
    configure_threads()?;
    match &cli.command {
        Command::Solve(a) => cmd_solve(a).map(|_| exit::OK),
        Command::Analyze {
            what: AnalyzeCommand::Metrics(a),
        } => cmd_metrics(a).map(|_| exit::OK),
        Command::Bounds(a) => cmd_bounds(a).map(|_| exit::OK),
        Command::Scan(a) => cmd_scan(a).map(|_| exit::OK),
        Command::Verify {
            what: VerifyCommand::Hardmax(a),
        } => cmd_hardmax(a),
        Command::ClosedForm(a) => cmd_closed_form(a).map(|_| exit::OK),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
