use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gsim_core::drive::DriveProfile;
use gsim_core::experiment::{self, ExperimentError, Scenario};
use gsim_core::params::{Laser, LaserParams, ParamError};
use gsim_core::pulse::{self, PulseError, Waveform};
use gsim_core::qkd::{self, DecoyLink, ErrorModel, QkdError};
use gsim_core::solver::{self, SolveError, SolverConfig};
use gsim_core::stats::{self, Ecdf, KsResult, Method, StatsError};

mod units;

#[derive(Parser)]
#[command(name = "gsim", version, about = "Gain-switched laser pulse simulator and signal/decoy analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one pulse, write the trace CSV and a features JSON
    Simulate(SimulateArgs),
    /// Pulse features over a grid of pre-bias currents
    Sweep(SweepArgs),
    /// Normalize, align and KS-test two waveforms
    Compare(CompareArgs),
    /// Plain two-sample KS test on the value columns of two CSV files
    KsTest(KsArgs),
    /// Decoy-state key rate report
    Keyrate(KeyrateArgs),
    /// Pulse features of a measured or simulated waveform
    Analyze(AnalyzeArgs),
}

#[derive(Args, Clone)]
struct LaserArgs {
    /// Laser parameter file (`key = value` lines)
    #[arg(long, env = "GSIM_PARAMS")]
    params: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct PulseArgs {
    /// Pre-bias current
    #[arg(long, default_value = "13mA", value_parser = units::current)]
    bias: f64,
    /// Perturbation peak current
    #[arg(long, default_value = "10A", value_parser = units::current)]
    peak: f64,
    /// Perturbation width
    #[arg(long, default_value = "2ps", value_parser = units::time)]
    width: f64,
    /// Perturbation start
    #[arg(long, default_value = "5ns", value_parser = units::time)]
    pulse_at: f64,
    /// Simulated end time (default: 2 ns after the perturbation)
    #[arg(long, value_parser = units::time)]
    t_end: Option<f64>,
    /// Driver low-pass time constant
    #[arg(long, value_parser = units::time)]
    filter_tau: Option<f64>,
    /// Solver step
    #[arg(long, default_value = "5fs", value_parser = units::time)]
    dt: f64,
    /// Spacing of recorded samples
    #[arg(long, default_value = "0.1ps", value_parser = units::time)]
    sample_every: f64,
    /// Prominence floor as a fraction of the global maximum
    #[arg(long, default_value_t = pulse::DEFAULT_PROMINENCE)]
    prominence: f64,
}

impl PulseArgs {
    fn stride(&self) -> usize {
        ((self.sample_every / self.dt).round() as usize).max(1)
    }

    fn scenario(&self) -> Result<Scenario, CliError> {
        let span = self.t_end.map_or(2e-9, |t| t - self.pulse_at);
        if !(span > 0.0) {
            return Err(CliError::Config("--t-end must lie after --pulse-at".into()));
        }
        Ok(Scenario {
            bias: self.bias,
            peak: self.peak,
            width: self.width,
            pulse_at: self.pulse_at,
            span,
            filter_tau: self.filter_tau,
            dt: self.dt,
            stride: self.stride(),
            prominence: self.prominence,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    laser: LaserArgs,
    /// Drive profile TOML; replaces the single-pulse flags
    #[arg(long)]
    drive: Option<PathBuf>,
    #[command(flatten)]
    pulse: PulseArgs,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    laser: LaserArgs,
    /// Pre-bias grid, `start:stop:count` or a comma list
    #[arg(long)]
    grid: String,
    #[command(flatten)]
    pulse: PulseArgs,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    Exact,
    Asymptotic,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Auto => Method::Auto,
            MethodArg::Exact => Method::Exact,
            MethodArg::Asymptotic => Method::Asymptotic,
        }
    }
}

#[derive(Args)]
struct CompareArgs {
    signal: PathBuf,
    decoy: PathBuf,
    #[arg(long, default_value_t = stats::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = stats::DEFAULT_POINTS)]
    n_points: usize,
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    /// Also write compare.json and ecdf.csv here
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct KsArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long, default_value_t = stats::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepVar {
    Mu,
    Eta,
}

#[derive(Args)]
struct KeyrateArgs {
    /// Link parameter TOML; flags override its values
    #[arg(long)]
    link: Option<PathBuf>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    mu_decoy: Option<f64>,
    #[arg(long)]
    y0: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    e_detector: Option<f64>,
    #[arg(long)]
    e_darkcount: Option<f64>,
    #[arg(long)]
    q_ratio: Option<f64>,
    #[arg(long)]
    f_ec: Option<f64>,
    #[arg(long)]
    cutoff: Option<u32>,
    /// Dark counts weighted by Y_0 and detector errors by η_j
    #[arg(long)]
    standard_error_model: bool,
    /// Write a CSV sweep of the key rate over this variable
    #[arg(long, value_enum, requires_all = ["from", "to"])]
    sweep: Option<SweepVar>,
    #[arg(long)]
    from: Option<f64>,
    #[arg(long)]
    to: Option<f64>,
    #[arg(long, default_value_t = 21)]
    steps: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    input: PathBuf,
    #[arg(long, default_value_t = pulse::DEFAULT_PROMINENCE)]
    prominence: f64,
    /// Drive edge time for the turn-on delay
    #[arg(long, value_parser = units::time)]
    edge: Option<f64>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) | Self::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<ParamError> for CliError {
    fn from(e: ParamError) -> Self {
        Self::Config(format!("parameters: {e}"))
    }
}

impl From<QkdError> for CliError {
    fn from(e: QkdError) -> Self {
        match e {
            QkdError::ZeroYield(_) | QkdError::Domain(_) => Self::Numerical(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        if e.is_numerical() {
            Self::Numerical(e.to_string())
        } else {
            Self::Config(e.to_string())
        }
    }
}

impl From<PulseError> for CliError {
    fn from(e: PulseError) -> Self {
        ExperimentError::from(e).into()
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        ExperimentError::from(e).into()
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        ExperimentError::from(e).into()
    }
}

fn load_laser(args: &LaserArgs) -> Result<Laser, CliError> {
    let params = match &args.params {
        Some(path) => LaserParams::from_file(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        None => LaserParams::default(),
    };
    Ok(Laser::new(params)?)
}

fn read_waveform(path: &Path) -> Result<Waveform, CliError> {
    Waveform::from_csv_file(path).map_err(|e| match e {
        PulseError::Parse { .. } | PulseError::Io(_) => CliError::Config(format!("{}: {e}", path.display())),
        other => CliError::Numerical(format!("{}: {other}", path.display())),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n")?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    // a closed pipe downstream is not an error of ours
    let _ = writeln!(io::stdout().lock(), "{text}");
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    i_th_a: f64,
    bias_a: f64,
    clamp_events: usize,
    features: &'a pulse::PulseFeatures,
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let laser = load_laser(&args.laser)?;
    fs::create_dir_all(&args.out_dir)?;
    let p = &args.pulse;
    let (trace, window, edge, bias) = match &args.drive {
        Some(path) => {
            let drive = DriveProfile::from_file(path).map_err(|e| CliError::Config(e.to_string()))?;
            let t_end = p.t_end.unwrap_or_else(|| drive.t_end());
            let i0 = drive.current_at(0.0).map_err(|e| CliError::Config(e.to_string()))?;
            let cfg = SolverConfig::new(p.dt, t_end)
                .with_stride(p.stride())
                .with_initial(solver::steady_state(&laser, i0));
            (solver::simulate(&laser, &drive, &cfg)?, (0.0, t_end), None, i0)
        }
        None => {
            let s = p.scenario()?;
            let drive = s.drive().map_err(|e| CliError::Config(e.to_string()))?;
            let trace = solver::simulate(&laser, &drive, &s.solver_config(&laser))?;
            (trace, s.window(), Some(s.pulse_at), s.bias)
        }
    };
    let mut out = BufWriter::new(fs::File::create(args.out_dir.join("trace.csv"))?);
    trace.write_csv(&mut out)?;
    out.flush()?;
    let clamp_events = trace.clamp_events;
    let run = experiment::analyze_trace(trace, window, edge, p.prominence)?;
    let report = SimulateReport {
        i_th_a: laser.i_th(),
        bias_a: bias,
        clamp_events,
        features: &run.features,
    };
    write_json(&args.out_dir.join("features.json"), &report)?;
    print_json(&report);
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let laser = load_laser(&args.laser)?;
    let grid = units::current_grid(&args.grid).map_err(CliError::Config)?;
    let template = args.pulse.scenario()?;
    template.drive().map_err(|e| CliError::Config(e.to_string()))?;
    let rows = experiment::sweep(&laser, &template, &grid, args.workers);
    fs::create_dir_all(&args.out_dir)?;
    let mut out = BufWriter::new(fs::File::create(args.out_dir.join("sweep.csv"))?);
    writeln!(
        out,
        "bias_A,bias_over_ith,primary_amplitude,secondary_amplitude,has_secondary,peak_difference,turn_on_delay_s,error"
    )?;
    let mut failures = 0;
    for r in &rows {
        match &r.outcome {
            Ok(p) => writeln!(
                out,
                "{:e},{:.6},{:e},{:e},{},{:e},{:e},",
                r.bias,
                r.bias / laser.i_th(),
                p.primary_amplitude,
                p.secondary_amplitude,
                p.has_secondary,
                p.peak_difference,
                p.turn_on_delay
            )?,
            Err(e) => {
                failures += 1;
                writeln!(out, "{:e},{:.6},,,,,,\"{}\"", r.bias, r.bias / laser.i_th(), e.replace('"', "'"))?
            }
        }
    }
    out.flush()?;
    eprintln!(
        "sweep: {} points, {failures} failed, written to {}",
        rows.len(),
        args.out_dir.join("sweep.csv").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct KsReport {
    #[serde(flatten)]
    result: KsResult,
    alpha: f64,
    verdict: &'static str,
}

impl KsReport {
    fn new(result: KsResult, alpha: f64) -> Self {
        Self {
            result,
            alpha,
            verdict: if result.indistinguishable(alpha) {
                "indistinguishable"
            } else {
                "distinguishable"
            },
        }
    }
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Config(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn write_ecdf(path: &Path, a: &Ecdf, b: &Ecdf) -> Result<(), CliError> {
    let mut xs: Vec<f64> = a.steps().into_iter().chain(b.steps()).map(|(x, _)| x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "value,cdf_signal,cdf_decoy")?;
    for x in xs {
        writeln!(out, "{:e},{:e},{:e}", x, a.eval(x), b.eval(x))?;
    }
    out.flush()?;
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), CliError> {
    check_alpha(args.alpha)?;
    let a = read_waveform(&args.signal)?;
    let b = read_waveform(&args.decoy)?;
    let c = stats::compare_waveforms(&a, &b, args.n_points, args.method.into())?;
    let report = KsReport::new(c.result, args.alpha);
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("compare.json"), &report)?;
        write_ecdf(&dir.join("ecdf.csv"), &c.ecdf_a, &c.ecdf_b)?;
    }
    print_json(&report);
    Ok(())
}

fn ks_test(args: KsArgs) -> Result<(), CliError> {
    check_alpha(args.alpha)?;
    let a = read_waveform(&args.a)?;
    let b = read_waveform(&args.b)?;
    let result = stats::ks_test(a.values(), b.values(), args.method.into())?;
    print_json(&KsReport::new(result, args.alpha));
    Ok(())
}

fn keyrate(args: KeyrateArgs) -> Result<(), CliError> {
    let mut link = match &args.link {
        Some(path) => DecoyLink::from_file(path)?,
        None => DecoyLink::default(),
    };
    let overrides = [
        (args.mu, &mut link.mu_signal),
        (args.mu_decoy, &mut link.mu_decoy),
        (args.y0, &mut link.y0),
        (args.eta, &mut link.eta),
        (args.e_detector, &mut link.e_detector),
        (args.e_darkcount, &mut link.e_darkcount),
        (args.q_ratio, &mut link.q_ratio),
        (args.f_ec, &mut link.f_ec),
    ];
    for (value, slot) in overrides {
        if let Some(v) = value {
            *slot = v;
        }
    }
    if let Some(c) = args.cutoff {
        link.photon_cutoff = c;
    }
    if args.standard_error_model {
        link.error_model = ErrorModel::Standard;
    }
    link.validate()?;
    let report = qkd::key_rate(&link)?;
    if let (Some(var), Some(from), Some(to)) = (args.sweep, args.from, args.to) {
        if args.steps < 2 {
            return Err(CliError::Config("--steps must be at least 2".into()));
        }
        fs::create_dir_all(&args.out_dir)?;
        let name = match var {
            SweepVar::Mu => "mu",
            SweepVar::Eta => "eta",
        };
        let path = args.out_dir.join(format!("keyrate_{name}.csv"));
        let mut out = BufWriter::new(fs::File::create(&path)?);
        writeln!(out, "{name},q_mu,e_mu,q1,e1,key_rate,insecure")?;
        for k in 0..args.steps {
            let x = from + (to - from) * k as f64 / (args.steps - 1) as f64;
            let mut l = link;
            match var {
                SweepVar::Mu => l.mu_signal = x,
                SweepVar::Eta => l.eta = x,
            }
            let r = qkd::key_rate(&l)?;
            writeln!(out, "{x:e},{:e},{:e},{:e},{:e},{:e},{}", r.q_mu, r.e_mu, r.q1, r.e1, r.key_rate, r.insecure)?;
        }
        out.flush()?;
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    print_json(&report);
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let w = read_waveform(&args.input)?;
    let features = pulse::pulse_features(&w, args.edge, args.prominence)?;
    print_json(&features);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Compare(a) => compare(a),
        Command::KsTest(a) => ks_test(a),
        Command::Keyrate(a) => keyrate(a),
        Command::Analyze(a) => analyze(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
