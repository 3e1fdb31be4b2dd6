//! Command-line front end: channel resolution, the `plan`, `max`, `sql` and
//! `verify` commands, and JSON reports.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error, 3 solver
//! failure.

mod suites;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::channels::{DephasingPhase, ParamChannel, TabulatedChannel, TwoParamRotation};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::maxqfim::{self, DominanceSummary, Existence, DEFAULT_STEP};
use crate::qfim::{crb, CovarianceMatrix, QfiMatrix};
use crate::scaling::{self, CapCheck, QuadraticBound, MAX_PARALLEL};

pub use suites::{bures_ratios, bures_residual, gap_corpus, run_suites, CheckRecord, SuiteReport};

pub const TOOL_NAME: &str = "qfim";

/// Dominance samples used by `max --verify` when `--samples` is absent.
pub const DEFAULT_DOMINANCE_SAMPLES: usize = 200;

/// Probe samples per `N` for the parallel cap check when `--samples` is absent.
pub const DEFAULT_CAP_SAMPLES: usize = 50;

#[derive(Debug, Parser)]
#[command(name = "qfim", version, about = "Maximal quantum Fisher information of quantum channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the parameter points a tabulated channel must provide.
    Plan(RunArgs),
    /// Extract the maximal QFIM.
    Max(RunArgs),
    /// Standard-quantum-limit bounds for parallel uses.
    Sql(RunArgs),
    /// Run the property suites.
    Verify(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    Dephasing,
    TwoParamRotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum QForm {
    /// The published dephasing bound.
    Published,
    /// `√2·diag(1, η²)/(8(1−η²))`, valid for every η.
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Oracle,
    Gaps,
    Dominance,
    Bures,
    Caps,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Oracle, Suite::Gaps, Suite::Dominance, Suite::Bures, Suite::Caps];
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Built-in channel family.
    #[arg(long, value_enum, conflicts_with = "file")]
    pub builtin: Option<Builtin>,
    /// Tabulated channel file (JSON).
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Parameter point, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Option<Vec<f64>>,
    /// Built-in parameters as key=value pairs, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Vec<String>,
    /// Relative finite-difference step.
    #[arg(long)]
    pub h: Option<f64>,
    /// Extrapolate over `h` and `h/2` (default on).
    #[arg(long, value_enum)]
    pub richardson: Option<OnOff>,
    /// Check dominance against random probes after extraction.
    #[arg(long)]
    pub verify: bool,
    /// Random probes per check.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Number of parallel channel uses.
    #[arg(long = "N")]
    pub copies: Option<usize>,
    /// Number of repetitions of the experiment.
    #[arg(long = "n")]
    pub n: Option<usize>,
    /// Seed for every random draw.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Restrict `verify` to one suite.
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    /// Dephasing Q used by `sql` (default published) and `verify` (default corrected).
    #[arg(long, value_enum)]
    pub q_form: Option<QForm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Plan,
    Max,
    Sql,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelSpec {
    Builtin { name: Builtin, params: BTreeMap<String, f64> },
    File { path: PathBuf },
}

/// Validated run settings, echoed in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub channel: Option<ChannelSpec>,
    pub x: Option<Vec<f64>>,
    pub h: f64,
    pub richardson: bool,
    pub verify: bool,
    pub samples: Option<usize>,
    #[serde(rename = "N")]
    pub copies: Option<usize>,
    pub n: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub suite: Option<Suite>,
    pub q_form: Option<QForm>,
}

fn parse_params(items: &[String]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for item in items.iter().filter(|s| !s.trim().is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("--params entry '{item}' is not key=value")))?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("--params {k}: '{v}' is not a number")))?;
        if out.insert(k.trim().to_string(), value).is_some() {
            return Err(Error::InvalidInput(format!("--params {k} given twice")));
        }
    }
    Ok(out)
}

fn reject(flag: &str, command: &str) -> Error {
    Error::InvalidInput(format!("{flag} is not used by '{command}'"))
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let (kind, args) = match &cli.command {
            Command::Plan(a) => (CommandKind::Plan, a),
            Command::Max(a) => (CommandKind::Max, a),
            Command::Sql(a) => (CommandKind::Sql, a),
            Command::Verify(a) => (CommandKind::Verify, a),
        };
        RunConfig::new(kind, args)
    }

    pub fn new(command: CommandKind, args: &RunArgs) -> Result<Self> {
        let name = match command {
            CommandKind::Plan => "plan",
            CommandKind::Max => "max",
            CommandKind::Sql => "sql",
            CommandKind::Verify => "verify",
        };
        let channel = match (&args.builtin, &args.file) {
            (Some(b), None) => Some(ChannelSpec::Builtin {
                name: *b,
                params: parse_params(&args.params)?,
            }),
            (None, Some(p)) => {
                if !args.params.is_empty() {
                    return Err(Error::InvalidInput("--params applies to built-in channels only".into()));
                }
                Some(ChannelSpec::File { path: p.clone() })
            }
            (None, None) => {
                if !args.params.is_empty() {
                    return Err(Error::InvalidInput("--params needs --builtin".into()));
                }
                None
            }
            (Some(_), Some(_)) => return Err(Error::InvalidInput("--builtin and --file are exclusive".into())),
        };
        let h = args.h.unwrap_or(DEFAULT_STEP);
        if !(h > 0.0 && h <= 0.5) {
            return Err(Error::InvalidInput(format!("--h {h} outside (0, 0.5]")));
        }
        let n = args.n.unwrap_or(1);
        if n == 0 {
            return Err(Error::InvalidInput("--n must be positive".into()));
        }
        if args.copies == Some(0) {
            return Err(Error::InvalidInput("--N must be positive".into()));
        }

        let cfg = RunConfig {
            command,
            channel,
            x: args.x.clone(),
            h,
            richardson: args.richardson.is_none_or(|r| r == OnOff::On),
            verify: args.verify,
            samples: args.samples,
            copies: args.copies,
            n,
            seed: args.seed.unwrap_or(0),
            out: args.out.clone(),
            suite: args.suite,
            q_form: args.q_form,
        };

        if command != CommandKind::Sql && cfg.copies.is_some() {
            return Err(reject("--N", name));
        }
        if command != CommandKind::Sql && command != CommandKind::Verify && cfg.q_form.is_some() {
            return Err(reject("--q-form", name));
        }
        if command != CommandKind::Verify && cfg.suite.is_some() {
            return Err(reject("--suite", name));
        }
        if command != CommandKind::Max && cfg.verify {
            return Err(reject("--verify", name));
        }
        match command {
            CommandKind::Plan => {
                if cfg.samples.is_some() {
                    return Err(reject("--samples", name));
                }
                match &cfg.channel {
                    Some(ChannelSpec::Builtin { .. }) => return Err(Error::BuiltinSelected),
                    None => return Err(Error::InvalidInput("plan needs --file".into())),
                    Some(ChannelSpec::File { .. }) => {}
                }
                if cfg.x.is_none() {
                    return Err(Error::InvalidInput("plan needs --x".into()));
                }
            }
            CommandKind::Max => {
                if cfg.channel.is_none() {
                    return Err(Error::InvalidInput("max needs --builtin or --file".into()));
                }
                if cfg.samples.is_some() && !cfg.verify {
                    return Err(Error::InvalidInput("--samples needs --verify for 'max'".into()));
                }
            }
            CommandKind::Sql => match &cfg.channel {
                Some(ChannelSpec::Builtin {
                    name: Builtin::Dephasing,
                    ..
                }) => {}
                Some(ChannelSpec::Builtin { name, .. }) => {
                    return Err(Error::UnsupportedChannel(format!(
                        "sql needs a contraction witness; only the dephasing built-in provides one, not {name:?}"
                    )))
                }
                Some(ChannelSpec::File { .. }) => {
                    return Err(Error::UnsupportedChannel(
                        "sql supports the dephasing built-in only".into(),
                    ))
                }
                None => return Err(Error::InvalidInput("sql needs --builtin dephasing".into())),
            },
            CommandKind::Verify => {
                if cfg.channel.is_some() || cfg.x.is_some() {
                    return Err(Error::InvalidInput("verify uses its own channel corpus".into()));
                }
            }
        }
        Ok(cfg)
    }
}

/// A resolved channel family and the point to analyze.
pub struct Resolved {
    pub channel: Box<dyn ParamChannel>,
    pub x: Vec<f64>,
}

pub fn load_tabulated(path: &std::path::Path) -> Result<TabulatedChannel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    TabulatedChannel::from_json(&text)
}

fn builtin_point(
    names: &[&str],
    params: &mut BTreeMap<String, f64>,
    defaults: &[Option<f64>],
    x: &Option<Vec<f64>>,
) -> Result<Vec<f64>> {
    let given: Vec<Option<f64>> = names.iter().map(|n| params.remove(*n)).collect();
    if let Some(x) = x {
        if given.iter().any(Option::is_some) {
            return Err(Error::InvalidInput("give the point either with --x or with --params, not both".into()));
        }
        if x.len() != names.len() {
            return Err(Error::DimMismatch {
                expected: names.len(),
                got: x.len(),
            });
        }
        return Ok(x.clone());
    }
    given
        .into_iter()
        .zip(names)
        .zip(defaults)
        .map(|((g, n), d)| g.or(*d).ok_or_else(|| Error::InvalidInput(format!("missing parameter {n}"))))
        .collect()
}

/// Builds the channel family and point named by the configuration.
pub fn resolve(cfg: &RunConfig) -> Result<Resolved> {
    match cfg.channel.as_ref() {
        Some(ChannelSpec::Builtin { name, params }) => {
            let mut params = params.clone();
            let (channel, x): (Box<dyn ParamChannel>, Vec<f64>) = match name {
                Builtin::Dephasing => {
                    let x = builtin_point(&["omega", "eta"], &mut params, &[Some(0.0), None], &cfg.x)?;
                    (Box::new(DephasingPhase), x)
                }
                Builtin::TwoParamRotation => {
                    let time = params.remove("T").unwrap_or(1.0);
                    if !(time > 0.0) {
                        return Err(Error::ParamOutOfRange(format!("T = {time} must be positive")));
                    }
                    let x = builtin_point(&["x1", "x2"], &mut params, &[None, None], &cfg.x)?;
                    (Box::new(TwoParamRotation { time }), x)
                }
            };
            if let Some(k) = params.keys().next() {
                return Err(Error::InvalidInput(format!("unknown parameter '{k}' for {name:?}")));
            }
            if let Builtin::Dephasing = name {
                if !(0.0..=1.0).contains(&x[1]) {
                    return Err(Error::ParamOutOfRange(format!("eta = {} must lie in [0, 1]", x[1])));
                }
            }
            Ok(Resolved { channel, x })
        }
        Some(ChannelSpec::File { path }) => {
            let tab = load_tabulated(path)?;
            let x = cfg
                .x
                .clone()
                .ok_or_else(|| Error::InvalidInput("tabulated channels need --x".into()))?;
            tab.check_point(&x)?;
            Ok(Resolved {
                channel: Box::new(tab),
                x,
            })
        }
        None => Err(Error::InvalidInput("no channel selected".into())),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanResult {
    pub param_names: Vec<String>,
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionView {
    pub label: String,
    pub dx: Vec<f64>,
    pub f_min: f64,
    pub g: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExistenceView {
    pub verdict: Existence,
    pub max_trace_distance: f64,
    /// Mean optimal reduced probe, rows of `[re, im]`.
    pub candidate_probe: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxResult {
    /// `sdp` or `eigen-angle`.
    pub path: String,
    pub jmax: QfiMatrix,
    /// `J^max⁻¹/n`, absent when `J^max` is singular.
    pub crb: Option<CovarianceMatrix>,
    pub h: f64,
    pub richardson: bool,
    pub directions: Vec<DirectionView>,
    pub step_ratios: Vec<(String, f64)>,
    pub existence: Option<ExistenceView>,
    pub dominance: Option<DominanceSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QCheckView {
    pub pass: bool,
    pub worst_slack: f64,
    pub directions: Vec<scaling::QBoundDirection>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SqlResult {
    pub q_form: QForm,
    pub q: QuadraticBound,
    #[serde(rename = "N")]
    pub copies: usize,
    pub n: usize,
    /// `Q⁻¹/(8nN)`.
    pub cov_bound: CovarianceMatrix,
    pub q_check: QCheckView,
    /// Brute-force `J ⪯ 8NQ` check, run for `N ≤ 4` only.
    pub cap: Option<CapCheck>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyResult {
    pub suites: Vec<SuiteReport>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReportBody {
    Plan(PlanResult),
    Max(MaxResult),
    Sql(SqlResult),
    Verify(VerifyResult),
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportDocument {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    /// False when a verification inside the command failed.
    pub pass: bool,
    pub result: ReportBody,
    pub diagnostics: Vec<String>,
    pub wall_time_s: f64,
}

impl ReportDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn complex_rows(m: &ComplexMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

pub fn cmd_plan(cfg: &RunConfig) -> Result<(PlanResult, Vec<String>)> {
    let Some(ChannelSpec::File { path }) = &cfg.channel else {
        return Err(Error::BuiltinSelected);
    };
    let tab = load_tabulated(path)?;
    let x = cfg.x.clone().ok_or_else(|| Error::InvalidInput("plan needs --x".into()))?;
    tab.check_point(&x)?;
    let points = maxqfim::extraction_points(&x, cfg.h, cfg.richardson);
    let missing = tab.missing(&points).len();
    let diags = vec![format!("{missing} of {} points absent from the file", points.len())];
    Ok((
        PlanResult {
            param_names: tab.param_names(),
            points,
        },
        diags,
    ))
}

pub fn cmd_max(cfg: &RunConfig) -> Result<(MaxResult, bool, Vec<String>)> {
    let r = resolve(cfg)?;
    let pch = r.channel.as_ref();
    let samples = cfg.verify.then(|| cfg.samples.unwrap_or(DEFAULT_DOMINANCE_SAMPLES));
    let (report, existence) = maxqfim::analyze(pch, &r.x, cfg.h, cfg.richardson, samples, cfg.seed)?;
    let unitary = pch.kraus_rank() == 1 && pch.dim_in() == pch.dim_out();
    let mut diags = Vec::new();
    if existence.is_none() {
        diags.push("existence diagnostics skipped: off-stencil points not tabulated".into());
    }
    let crb = match crb(&report.jmax, cfg.n) {
        Ok(c) => Some(c),
        Err(e) => {
            diags.push(format!("no Cramér-Rao bound: {e}"));
            None
        }
    };
    let pass = report.dominance.as_ref().is_none_or(|d| d.pass);
    Ok((
        MaxResult {
            path: if unitary { "eigen-angle" } else { "sdp" }.into(),
            crb,
            h: report.h,
            richardson: report.richardson,
            directions: report
                .per_direction
                .iter()
                .map(|d| DirectionView {
                    label: d.label.clone(),
                    dx: d.dx.clone(),
                    f_min: d.f_min,
                    g: d.g,
                    gap: d.gap,
                })
                .collect(),
            step_ratios: report.step_ratios.clone(),
            existence: existence.map(|e| ExistenceView {
                verdict: report.existence.unwrap_or(e.verdict),
                max_trace_distance: e.max_trace_distance,
                candidate_probe: complex_rows(e.candidate.matrix()),
            }),
            dominance: report.dominance.clone(),
            jmax: report.jmax,
        },
        pass,
        diags,
    ))
}

/// Dephasing `Q` of the requested form, labels `(eta, omega)`.
pub fn dephasing_q(form: QForm, eta: f64) -> Result<QuadraticBound> {
    match form {
        QForm::Published => scaling::dephasing_q_published(eta),
        QForm::Corrected => scaling::dephasing_q_corrected(eta),
    }
}

pub fn cmd_sql(cfg: &RunConfig) -> Result<(SqlResult, bool, Vec<String>)> {
    let r = resolve(cfg)?;
    let eta = r.x[1];
    let form = cfg.q_form.unwrap_or(QForm::Published);
    let q = dephasing_q(form, eta)?;
    let copies = cfg.copies.unwrap_or(1);
    let cov_bound = scaling::sql_cov_bound(&q, copies, cfg.n)?;
    let grid = scaling::default_q_grid(2, &[1e-2, 5e-3, 2.5e-3])?;
    let w = scaling::dephasing_w_provider(&r.x);
    let check = scaling::q_bound_check(r.channel.as_ref(), &w, &r.x, &q, &grid)?;
    let mut diags = Vec::new();
    let cap = if copies <= MAX_PARALLEL {
        let samples = cfg.samples.unwrap_or(DEFAULT_CAP_SAMPLES);
        Some(scaling::verify_parallel_qfim_cap(r.channel.as_ref(), &r.x, &q, copies, samples, cfg.seed)?)
    } else {
        diags.push(format!("parallel cap check skipped: N = {copies} > {MAX_PARALLEL}"));
        None
    };
    if !check.pass {
        diags.push("Q does not bound ‖I − K_W‖ to second order at this point".into());
    }
    let pass = check.pass && cap.as_ref().is_none_or(|c| c.pass);
    Ok((
        SqlResult {
            q_form: form,
            q,
            copies,
            n: cfg.n,
            cov_bound,
            q_check: QCheckView {
                pass: check.pass,
                worst_slack: check.worst_slack,
                directions: check.directions,
            },
            cap,
        },
        pass,
        diags,
    ))
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<(VerifyResult, bool)> {
    let selected: Vec<Suite> = match cfg.suite {
        Some(s) => vec![s],
        None => Suite::ALL.to_vec(),
    };
    let suites = run_suites(&selected, cfg.samples, cfg.q_form.unwrap_or(QForm::Corrected), cfg.seed)?;
    let pass = suites.iter().all(|s| s.pass);
    Ok((VerifyResult { suites }, pass))
}

/// Runs a validated configuration and assembles the report.
pub fn execute(cfg: &RunConfig) -> Result<ReportDocument> {
    let start = Instant::now();
    let (result, pass, diagnostics) = match cfg.command {
        CommandKind::Plan => {
            let (r, d) = cmd_plan(cfg)?;
            (ReportBody::Plan(r), true, d)
        }
        CommandKind::Max => {
            let (r, p, d) = cmd_max(cfg)?;
            (ReportBody::Max(r), p, d)
        }
        CommandKind::Sql => {
            let (r, p, d) = cmd_sql(cfg)?;
            (ReportBody::Sql(r), p, d)
        }
        CommandKind::Verify => {
            let (r, p) = cmd_verify(cfg)?;
            (ReportBody::Verify(r), p, Vec::new())
        }
    };
    Ok(ReportDocument {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        pass,
        result,
        diagnostics,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::SolverFailure { .. }
        | Error::NoConvergence
        | Error::StepTooLarge { .. }
        | Error::NegativeEigenvalue(_)
        | Error::BranchAmbiguity(_)
        | Error::SpreadExceedsPi(_) => 3,
        _ => 2,
    }
}

/// Parses, runs and writes the report; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = RunConfig::from_cli(&cli).and_then(|cfg| {
        let doc = execute(&cfg)?;
        let text = doc.to_json();
        match &cfg.out {
            Some(path) => std::fs::write(path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
            None => {
                use std::io::Write;
                // A closed pipe downstream is not an error of the run.
                let mut out = std::io::stdout().lock();
                match writeln!(out, "{text}") {
                    Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(Error::Io(e.to_string())),
                    _ => {}
                }
            }
        }
        Ok(doc.pass)
    });
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
