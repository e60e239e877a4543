//! Command dispatch: problem loading, analyses, exit status.

use std::path::PathBuf;
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use metron_core::bundle::{
    amari_dual, curvature, curvature_conjugation_residual, gauge_act, max_coefficient_difference,
    pushforward_metric, quasi_commutativity_check, Connection, MetricField,
};
use metron_core::fe_solver::{solve_fe, SolveOptions};
use metron_core::metricity::{decide_metricity, index_report, IndexReport};
use metron_core::stat_models::{alpha_scan, Family, StatisticalFamily};
use metron_core::tolerances::{Tolerances, IDENTITY_TOL, QUASI_COMMUTATIVITY_TOL};

use crate::json::{float, to_compact_string};
use crate::problem::{self, Diagnostic, Problem};
use crate::report;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Dual,
    Curvature,
    SolveFe,
    Metricity,
    Index,
    AlphaScan,
    GaugeCheck,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Dual => "dual",
            Command::Curvature => "curvature",
            Command::SolveFe => "solve-fe",
            Command::Metricity => "metricity",
            Command::Index => "index",
            Command::AlphaScan => "alpha-scan",
            Command::GaugeCheck => "gauge-check",
            Command::Validate => "validate",
        }
    }
}

/// The α values scanned when `--alphas` is not given.
pub const DEFAULT_ALPHAS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

/// Flags shared by the commands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub problem: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub tol_transport: Option<f64>,
    pub tol_kernel: Option<f64>,
    pub max_order: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    pub family: Option<String>,
    pub metric_family: Option<PathBuf>,
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// The analysis ran and is certified, whatever its verdict.
    Success,
    /// The input was rejected.
    InputError,
    /// The analysis ran but stabilization or a residual check failed.
    Uncertified,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::InputError => 2,
            Status::Uncertified => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Value,
    /// Human-readable lines for stderr.
    pub summary: String,
    pub status: Status,
}

struct InputError(Vec<Diagnostic>);

impl InputError {
    fn msg(message: impl Into<String>) -> Self {
        InputError(vec![Diagnostic {
            path: String::new(),
            message: message.into(),
        }])
    }
}

impl From<metron_core::Error> for InputError {
    fn from(e: metron_core::Error) -> Self {
        InputError::msg(e.to_string())
    }
}

impl From<Vec<Diagnostic>> for InputError {
    fn from(d: Vec<Diagnostic>) -> Self {
        InputError(d)
    }
}

struct Analysis {
    result: Value,
    certified: bool,
    summary: String,
}

pub fn run(command: Command, opts: &RunOptions) -> Outcome {
    let start = Instant::now();
    let outcome = match command {
        Command::Validate => return validate(opts),
        Command::AlphaScan => scan(opts),
        _ => with_problem(command, opts),
    };
    match outcome {
        Ok((echo, seed, tol, analysis)) => {
            let timing = opts.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
            let status = if analysis.certified { Status::Success } else { Status::Uncertified };
            let mut summary = analysis.summary;
            if !analysis.certified {
                summary.push_str("UNCERTIFIED: stabilization or residual checks failed (see report)\n");
            }
            Outcome {
                report: report::envelope(command.name(), echo, seed, &tol, analysis.result, analysis.certified, timing),
                summary,
                status,
            }
        }
        Err(InputError(diagnostics)) => input_failure(command, diagnostics),
    }
}

fn input_failure(command: Command, diagnostics: Vec<Diagnostic>) -> Outcome {
    let summary = diagnostics.iter().map(|d| format!("error: {d}\n")).collect();
    Outcome {
        report: json!({
            "toolVersion": concat!("metron ", env!("CARGO_PKG_VERSION")),
            "command": command.name(),
            "errors": diagnostics,
        }),
        summary,
        status: Status::InputError,
    }
}

fn validate(opts: &RunOptions) -> Outcome {
    let Some(path) = &opts.problem else {
        return input_failure(Command::Validate, InputError::msg("validate needs a problem file").0);
    };
    let diagnostics = problem::validate(path);
    let summary = if diagnostics.is_empty() {
        format!("{}: valid\n", path.display())
    } else {
        diagnostics.iter().map(|d| format!("{}: {d}\n", path.display())).collect()
    };
    Outcome {
        report: json!({
            "toolVersion": concat!("metron ", env!("CARGO_PKG_VERSION")),
            "command": "validate",
            "valid": diagnostics.is_empty(),
            "diagnostics": diagnostics,
        }),
        summary,
        status: if diagnostics.is_empty() { Status::Success } else { Status::InputError },
    }
}

fn effective_tolerances(base: Tolerances, opts: &RunOptions) -> Result<Tolerances, InputError> {
    let mut t = base;
    if let Some(g) = opts.grid {
        if g < 3 {
            return Err(InputError::msg(format!("--grid must be at least 3, got {g}")));
        }
        t.grid = g;
    }
    for (flag, value, slot) in [
        ("--tol-transport", opts.tol_transport, &mut t.transport),
        ("--tol-kernel", opts.tol_kernel, &mut t.kernel),
    ] {
        if let Some(v) = value {
            if !(v > 0.0 && v.is_finite()) {
                return Err(InputError::msg(format!("{flag} must be a positive number, got {v}")));
            }
            *slot = v;
        }
    }
    if let Some(k) = opts.max_order {
        t.max_order = k;
    }
    Ok(t)
}

fn solve_options(t: Tolerances, seed: u64) -> SolveOptions {
    SolveOptions {
        seed,
        ..SolveOptions::with_tolerances(t)
    }
}

type Prepared = (Value, u64, Tolerances, Analysis);

fn with_problem(command: Command, opts: &RunOptions) -> Result<Prepared, InputError> {
    let Some(path) = &opts.problem else {
        return Err(InputError::msg(format!("{} needs a problem file", command.name())));
    };
    let p = problem::load(path)?;
    let seed = opts.seed.unwrap_or(p.seed);
    let tol = effective_tolerances(p.tolerances, opts)?;
    let options = solve_options(tol, seed);
    let analysis = match command {
        Command::Dual => dual(&p)?,
        Command::Curvature => curvature_report(&p)?,
        Command::SolveFe => solve(&p, &options)?,
        Command::Metricity => metricity(&p, &options)?,
        Command::Index => index(&p, opts, &options)?,
        Command::GaugeCheck => gauge_check(&p, &options)?,
        Command::AlphaScan | Command::Validate => unreachable!("handled by run"),
    };
    Ok((json!(p.hash), seed, tol, analysis))
}

fn require_metric(p: &Problem, command: &str) -> Result<MetricField, InputError> {
    p.metric
        .clone()
        .ok_or_else(|| InputError::msg(format!("{command} needs a `metric` in the problem file")))
}

fn dual(p: &Problem) -> Result<Analysis, InputError> {
    let g = require_metric(p, "dual")?;
    g.check_regular()?;
    let d = amari_dual(&g, &p.connection)?;
    let involution = max_coefficient_difference(&amari_dual(&g, &d)?, &p.connection)?;
    let certified = involution <= IDENTITY_TOL;
    Ok(Analysis {
        summary: format!("dual connection computed; involution residual {involution:.3e}\n"),
        result: json!({
            "dualConnection": d.to_strings(),
            "involutionResidual": float(involution),
        }),
        certified,
    })
}

fn curvature_report(p: &Problem) -> Result<Analysis, InputError> {
    let r = curvature(&p.connection);
    let points = p.domain.sample_points();
    let values = points.iter().map(|x| r.eval(x)).collect::<metron_core::Result<Vec<_>>>()?;
    let m = p.dim;
    let mut components = Vec::new();
    let mut overall = 0.0f64;
    for i in 0..m {
        for j in i + 1..m {
            let worst = values.iter().map(|v| v[i][j].amax()).fold(0.0, f64::max);
            overall = overall.max(worst);
            components.push(json!({
                "i": i + 1,
                "j": j + 1,
                "expression": r.get(i, j).to_strings(),
                "maxAbs": float(worst),
            }));
        }
    }
    let flat = overall <= IDENTITY_TOL;
    Ok(Analysis {
        summary: format!(
            "curvature: max |R| = {overall:.3e} over {} sample points ({})\n",
            points.len(),
            if flat { "flat" } else { "not flat" }
        ),
        result: json!({ "components": components, "maxAbs": float(overall), "flat": flat }),
        certified: true,
    })
}

fn solve(p: &Problem, options: &SolveOptions) -> Result<Analysis, InputError> {
    let (label, target): (&str, Connection) = match (&p.dual_connection, &p.metric) {
        (Some(d), _) => ("dualConnection", d.clone()),
        (None, Some(g)) => {
            g.check_regular()?;
            ("amariDual", amari_dual(g, &p.connection)?)
        }
        (None, None) => ("connection", p.connection.clone()),
    };
    let s = solve_fe(&p.connection, &target, options)?;
    let certified = report::solution_certified(&s, &options.tolerances);
    Ok(Analysis {
        summary: format!(
            "solve-fe: dim J = {} (target: {label}), transport residual {:.3e}, substitution residual {:.3e}\n",
            s.dimension(),
            s.certified_residual,
            s.substitution_residual
        ),
        result: json!({ "target": label, "solutionSpace": report::solution_space(&s) }),
        certified,
    })
}

fn metricity(p: &Problem, options: &SolveOptions) -> Result<Analysis, InputError> {
    let c = decide_metricity(&p.connection, options)?;
    Ok(Analysis {
        summary: format!(
            "metricity: {} (dim S2 = {}, dim Omega2 = {}, dim J = {})\n",
            c.verdict.label(),
            c.dim_s2,
            c.dim_omega2,
            c.dim_j
        ),
        certified: c.certified,
        result: report::certificate(&c),
    })
}

fn index(p: &Problem, opts: &RunOptions, options: &SolveOptions) -> Result<Analysis, InputError> {
    let mut declared: Vec<MetricField> = p.metric.iter().cloned().collect();
    if let Some(path) = &opts.metric_family {
        declared.extend(problem::load_metric_family(path, &p.domain, p.rank)?);
    }
    for g in &declared {
        g.check_regular()?;
    }
    let r = index_report(&p.connection, &declared, options)?;
    Ok(Analysis {
        summary: format!(
            "index: s^b = {} (s^b given first metric = {}), ind = {:?}, {}\n",
            r.sb,
            r.sb_given_g,
            r.ind_decision,
            r.certificate.verdict.label()
        ),
        certified: report::index_certified(&r, &options.tolerances),
        result: report::index(&r),
    })
}

fn invariants(r: &IndexReport) -> Value {
    json!({
        "dimJ": r.certificate.dim_j,
        "dimS2": r.certificate.dim_s2,
        "dimOmega2": r.certificate.dim_omega2,
        "sb": r.sb,
        "verdict": r.certificate.verdict.label(),
    })
}

fn gauge_check(p: &Problem, options: &SolveOptions) -> Result<Analysis, InputError> {
    let phi = p
        .gauge
        .clone()
        .ok_or_else(|| InputError::msg("gauge-check needs a `gauge` in the problem file"))?;
    let moved = gauge_act(&phi, &p.connection)?;
    let conjugation = curvature_conjugation_residual(&phi, &p.connection)?;
    let quasi = match &p.metric {
        Some(g) => {
            g.check_regular()?;
            Some(quasi_commutativity_check(&phi, g, &p.connection)?)
        }
        None => None,
    };
    let declared: Vec<MetricField> = p.metric.iter().cloned().collect();
    let pushed = declared.iter().map(|g| pushforward_metric(&phi, g)).collect::<metron_core::Result<Vec<_>>>()?;
    let before = index_report(&p.connection, &declared, options)?;
    let after = index_report(&moved, &pushed, options)?;
    let (inv_before, inv_after) = (invariants(&before), invariants(&after));
    let unchanged = inv_before == inv_after;
    let certified = unchanged
        && conjugation <= IDENTITY_TOL
        && quasi.is_none_or(|q| q <= QUASI_COMMUTATIVITY_TOL)
        && report::index_certified(&before, &options.tolerances)
        && report::index_certified(&after, &options.tolerances);
    Ok(Analysis {
        summary: format!(
            "gauge-check: invariants {}; curvature conjugation residual {conjugation:.3e}{}\n",
            if unchanged { "unchanged" } else { "CHANGED" },
            quasi.map_or(String::new(), |q| format!("; quasi-commutativity residual {q:.3e}"))
        ),
        result: json!({
            "transformedConnection": moved.to_strings(),
            "curvatureConjugationResidual": float(conjugation),
            "quasiCommutativityResidual": quasi.map_or(Value::Null, float),
            "invariantsBefore": inv_before,
            "invariantsAfter": inv_after,
            "invariantsUnchanged": unchanged,
        }),
        certified,
    })
}

fn scan(opts: &RunOptions) -> Result<Prepared, InputError> {
    let name = opts
        .family
        .as_deref()
        .ok_or_else(|| InputError::msg("alpha-scan needs --family (gaussian1d, bernoulli, poisson or exponential)"))?;
    let family: Family = name.parse()?;
    let alphas = opts.alphas.clone().unwrap_or_else(|| DEFAULT_ALPHAS.to_vec());
    if alphas.is_empty() {
        return Err(InputError::msg("--alphas must list at least one value"));
    }
    let seed = opts.seed.unwrap_or(0);
    let tol = effective_tolerances(Tolerances::default(), opts)?;
    let model = StatisticalFamily::new(family);
    let r = alpha_scan(&model, &alphas, &solve_options(tol, seed))?;
    let certified = r.per_alpha.iter().all(|c| c.certified);
    let mut summary: String = r
        .alphas
        .iter()
        .zip(&r.per_alpha)
        .map(|(a, c)| format!("alpha-scan {}: alpha = {a}: {}\n", family.name(), c.verdict.label()))
        .collect();
    if let Some(signal) = &r.counter_signal {
        summary.push_str(&format!("WARNING: alpha-scan counter-signal: {signal}\n"));
    }
    let echo_source = json!({ "family": family.name(), "alphas": r.alphas.iter().map(|&a| float(a)).collect::<Vec<_>>() });
    let echo = format!("{:x}", Sha256::digest(to_compact_string(&echo_source).as_bytes()));
    Ok((
        json!(echo),
        seed,
        tol,
        Analysis {
            result: report::alpha_scan(&r),
            certified,
            summary,
        },
    ))
}
