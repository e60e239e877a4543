use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use metron_cli::{json, run, Command, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "metron", version)]
#[command(about = "Metricity analysis of gauge structures: dual connections, FE solution spaces, metric verdicts")]
struct Cli {
    /// Write the JSON report to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Do not print the human-readable summary to stderr.
    #[arg(long, global = true)]
    quiet: bool,

    /// Seed for randomized searches (overrides the problem file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Extension grid nodes per axis.
    #[arg(long, global = true)]
    grid: Option<usize>,

    /// Path-independence tolerance for grid extensions.
    #[arg(long, global = true)]
    tol_transport: Option<f64>,

    /// Relative singular-value cutoff for curvature-constraint kernels.
    #[arg(long, global = true)]
    tol_kernel: Option<f64>,

    /// Highest covariant derivative of curvature used in prolongation.
    #[arg(long, global = true)]
    max_order: Option<usize>,

    /// Record wall-clock time in the report (makes output non-reproducible).
    #[arg(long, global = true)]
    timing: bool,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Args)]
struct ProblemArg {
    /// Problem file (JSON).
    problem: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Amari dual of the connection with respect to the metric.
    Dual(ProblemArg),
    /// Curvature components and their size over the chart.
    Curvature(ProblemArg),
    /// Solution space of the FE system (target: dualConnection, else the
    /// Amari dual of metric, else the connection itself).
    SolveFe(ProblemArg),
    /// Metricity certificate: parallel forms, verdict, witness.
    Metricity(ProblemArg),
    /// Gauge index over a family of metrics and the metric-index decision.
    Index {
        #[command(flatten)]
        problem: ProblemArg,
        /// JSON array of additional metrics (arrays of expression strings).
        #[arg(long)]
        metric_family: Option<PathBuf>,
    },
    /// Metricity of the alpha-connections of a statistical family.
    AlphaScan {
        /// gaussian1d, bernoulli, poisson or exponential.
        #[arg(long)]
        family: String,
        /// Comma-separated alpha values.
        #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Gauge equivariance checks for the transformation in the problem file.
    GaugeCheck(ProblemArg),
    /// Structural and expression diagnostics without running an analysis.
    Validate(ProblemArg),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut opts = RunOptions {
        seed: cli.seed,
        grid: cli.grid,
        tol_transport: cli.tol_transport,
        tol_kernel: cli.tol_kernel,
        max_order: cli.max_order,
        timing: cli.timing,
        ..RunOptions::default()
    };
    let command = match cli.command {
        Cmd::Dual(p) => (Command::Dual, Some(p.problem)),
        Cmd::Curvature(p) => (Command::Curvature, Some(p.problem)),
        Cmd::SolveFe(p) => (Command::SolveFe, Some(p.problem)),
        Cmd::Metricity(p) => (Command::Metricity, Some(p.problem)),
        Cmd::Index { problem, metric_family } => {
            opts.metric_family = metric_family;
            (Command::Index, Some(problem.problem))
        }
        Cmd::AlphaScan { family, alphas } => {
            opts.family = Some(family);
            opts.alphas = alphas;
            (Command::AlphaScan, None)
        }
        Cmd::GaugeCheck(p) => (Command::GaugeCheck, Some(p.problem)),
        Cmd::Validate(p) => (Command::Validate, Some(p.problem)),
    };
    let (command, problem) = command;
    opts.problem = problem;

    let outcome = run(command, &opts);
    let text = json::to_string(&outcome.report);
    let written = match &cli.out {
        Some(path) => std::fs::write(path, &text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if !cli.quiet {
        eprint!("{}", outcome.summary);
    }
    ExitCode::from(outcome.status.code())
}
