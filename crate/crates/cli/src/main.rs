use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mmlevy::SolveOptions;
use mmlevy_cli::*;

#[derive(Parser)]
#[command(name = "mmlevy", version, about = "First-passage matrix solvers for Markov-modulated Lévy processes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one algorithm and write its trace and summary.
    Solve(SolveArgs),
    /// Run several algorithms on one model and compare them.
    Compare(CompareArgs),
    /// QME-based residual at several values of tau.
    TauSweep(SweepArgs),
    /// QME-based and Simon timings on the first example for growing n.
    Scaling(ScalingArgs),
}

#[derive(Args)]
#[group(required = false, multiple = false)]
struct Source {
    /// Built-in model.
    #[arg(long, value_parser = ["example1", "example2"])]
    preset: Option<String>,
    /// Model file, written `file:PATH`.
    #[arg(long)]
    model: Option<String>,
}

impl Source {
    fn resolve(&self) -> anyhow::Result<ModelSource> {
        match (&self.preset, &self.model) {
            (Some(p), _) => p.parse(),
            (None, Some(m)) if m.starts_with("file:") || m.starts_with("preset:") => m.parse(),
            (None, Some(m)) => format!("file:{m}").parse(),
            (None, None) => Ok(ModelSource::Example1),
        }
    }
}

#[derive(Args)]
struct Common {
    /// Stopping tolerance on successive iterates.
    #[arg(long, default_value_t = SolveOptions::default().eps)]
    eps: f64,
    #[arg(long, default_value_t = SolveOptions::default().max_iter)]
    max_iter: usize,
    /// Jump-transform evaluation.
    #[arg(long, value_enum, default_value_t = QuadChoice::Closed)]
    quad: QuadChoice,
    /// Output path prefix.
    #[arg(long, short, default_value = "mmlevy")]
    output: PathBuf,
}

impl Common {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            eps: self.eps,
            max_iter: self.max_iter,
            quad: self.quad.settings(),
            ..SolveOptions::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EmitArg {
    Csv,
    Json,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum, default_value_t = Algorithm::Qme)]
    algorithm: Algorithm,
    /// Step parameter, a positive number or `auto`.
    #[arg(long, default_value = "auto")]
    tau: TauChoice,
    #[arg(long, value_enum, default_value_t = StartPolicy::Zero)]
    x0: StartPolicy,
    /// Files to write.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [EmitArg::Csv, EmitArg::Json])]
    emit: Vec<EmitArg>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = Algorithm::ALL)]
    algorithms: Vec<Algorithm>,
    /// Starts to run each algorithm from.
    #[arg(long = "x0", value_enum, default_value_t = StartSet::Zero)]
    x0: StartSet,
    #[arg(long, default_value = "auto")]
    tau: TauChoice,
    /// Timing repetitions; the best is reported.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_delimiter = ',', default_value = "auto,1e-1,1e-3,1e-5,1e-7")]
    taus: Vec<TauChoice>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[command(flatten)]
    common: Common,
}

/// Exit status for a run that finished without meeting its target.
const EXIT_UNMET: u8 = 2;

fn solve(a: SolveArgs) -> anyhow::Result<ExitCode> {
    let cfg = RunConfig {
        model: a.source.resolve()?,
        algorithm: a.algorithm,
        tau: a.tau,
        x0: a.x0,
        eps: a.common.eps,
        max_iter: a.common.max_iter,
        quad: a.common.quad,
    };
    let out = cmd_solve(&cfg)?;
    let emit: Vec<Emit> = a
        .emit
        .iter()
        .map(|e| match e {
            EmitArg::Csv => Emit::Csv,
            EmitArg::Json => Emit::Json,
        })
        .collect();
    for p in write_solve(&out, &a.common.output, &emit)? {
        eprintln!("wrote {}", p.display());
    }
    let s = &out.summary;
    println!(
        "{} {}: {} iterations, residual {:e}, status {}",
        s.algorithm.name(),
        cfg.model,
        s.iterations,
        out.report.residual,
        s.status
    );
    if out.report.converged() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("error: solver stopped with status {}", s.status);
        Ok(ExitCode::from(EXIT_UNMET))
    }
}

fn compare(a: CompareArgs) -> anyhow::Result<ExitCode> {
    let m = a.source.resolve()?.load()?;
    let tau = a.tau.resolve(&m)?;
    let c = cmd_compare(&m, &a.algorithms, a.x0, tau, &a.common.options(), a.repeats);
    let bytes = compare_csv(&c)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    let p = write_table(&a.common.output, ".compare.csv", &bytes)?;
    eprintln!("wrote {}", p.display());
    for r in c.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("{} from {}: {}", r.algorithm, r.x0, r.error.as_deref().unwrap_or_default());
    }
    if c.agrees() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "error: algorithms disagree or failed (max pairwise difference {:e}, tolerance {AGREEMENT_TOL:e})",
            c.max_diff
        );
        Ok(ExitCode::from(EXIT_UNMET))
    }
}

fn tau_sweep(a: SweepArgs) -> anyhow::Result<ExitCode> {
    let m = a.source.resolve()?.load()?;
    let rows = cmd_tau_sweep(&m, &a.taus, &a.common.options())?;
    let bytes = tau_sweep_csv(&rows)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    let p = write_table(&a.common.output, ".tau_sweep.csv", &bytes)?;
    eprintln!("wrote {}", p.display());
    Ok(ExitCode::SUCCESS)
}

fn scaling(a: ScalingArgs) -> anyhow::Result<ExitCode> {
    let rows = cmd_scaling(&a.ns, &a.common.options(), a.repeats)?;
    let bytes = scaling_csv(&rows)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    let p = write_table(&a.common.output, ".scaling.csv", &bytes)?;
    eprintln!("wrote {}", p.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Solve(a) => solve(a),
        Cmd::Compare(a) => compare(a),
        Cmd::TauSweep(a) => tau_sweep(a),
        Cmd::Scaling(a) => scaling(a),
    }
    .context("mmlevy failed");
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
