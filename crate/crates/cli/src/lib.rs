//! Library half of the `mmlevy` command-line tool: run configuration, the
//! four commands and their CSV/JSON writers. `main.rs` only parses flags.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::ValueEnum;
use mmlevy::analysis::{observed_rate, rate_objects, RATE_WINDOW};
use mmlevy::baselines::{breuer_prep, breuer_solve, simon_solve};
use mmlevy::matcore::{diag, max_abs_diff, Matrix};
use mmlevy::model::{self, drift_kappa, preset_example1, preset_example2, Example1, Example2};
use mmlevy::qsolve::{fi_solve, qme_outer_solve, tau_opt, tau_star, u_based_solve, TauBound};
use mmlevy::rsolve::{nare_outer_solve, phase_rates, InnerMethod};
use mmlevy::{MmLevyModel, QuadSettings, SolveOptions, SolveReport};
use serde::Serialize;

/// Pairwise agreement required by `compare`.
pub const AGREEMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Example1,
    Example2,
    File(PathBuf),
}

impl FromStr for ModelSource {
    type Err = anyhow::Error;

    /// Accepts `example1`, `example2`, `preset:example1`, `preset:example2`
    /// or `file:PATH`.
    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s.strip_prefix("preset:").unwrap_or(s) {
            "example1" => Ok(ModelSource::Example1),
            "example2" => Ok(ModelSource::Example2),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(ModelSource::File(PathBuf::from(p))),
                _ => bail!("unknown model source {s:?}; use example1, example2 or file:PATH"),
            },
        }
    }
}

impl fmt::Display for ModelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSource::Example1 => f.write_str("preset:example1"),
            ModelSource::Example2 => f.write_str("preset:example2"),
            ModelSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl ModelSource {
    /// Builds or loads the model and rejects it if it fails validation.
    pub fn load(&self) -> anyhow::Result<MmLevyModel> {
        let m = match self {
            ModelSource::Example1 => preset_example1(&Example1::default())?,
            ModelSource::Example2 => preset_example2(&Example2::default())?,
            ModelSource::File(p) => {
                model::load(p).with_context(|| format!("reading model {}", p.display()))?
            }
        };
        m.ensure_valid()
            .with_context(|| format!("model {self} is invalid"))?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Fi,
    Ubased,
    Qme,
    Nare,
    Simon,
    Breuer,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Fi,
        Algorithm::Ubased,
        Algorithm::Qme,
        Algorithm::Nare,
        Algorithm::Simon,
        Algorithm::Breuer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fi => "fi",
            Algorithm::Ubased => "ubased",
            Algorithm::Qme => "qme",
            Algorithm::Nare => "nare",
            Algorithm::Simon => "simon",
            Algorithm::Breuer => "breuer",
        }
    }

    /// Works with `W = I + τG`.
    pub fn on_qme_path(self) -> bool {
        matches!(self, Algorithm::Fi | Algorithm::Ubased | Algorithm::Qme)
    }

    /// The start that accelerates this algorithm, if it has one.
    pub fn accelerated_start(self) -> Option<StartPolicy> {
        match self {
            Algorithm::Fi | Algorithm::Ubased | Algorithm::Qme => Some(StartPolicy::Identity),
            Algorithm::Nare | Algorithm::Simon => Some(StartPolicy::DeltaB),
            Algorithm::Breuer => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum StartPolicy {
    /// `W0 = 0` on the QME path, `S0 = 0` for the Riccati iterations, `G0 = 0` for Breuer.
    #[default]
    Zero,
    /// `W0 = I`.
    Identity,
    /// `S0 = Δ_b`.
    #[value(name = "delta_b")]
    DeltaB,
}

impl StartPolicy {
    pub fn name(self) -> &'static str {
        match self {
            StartPolicy::Zero => "zero",
            StartPolicy::Identity => "identity",
            StartPolicy::DeltaB => "delta_b",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauChoice {
    Auto,
    Value(f64),
}

impl FromStr for TauChoice {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        if s == "auto" {
            return Ok(TauChoice::Auto);
        }
        let v: f64 = s.parse().map_err(|_| anyhow!("tau must be a number or \"auto\", got {s:?}"))?;
        if !(v > 0.0 && v.is_finite()) {
            bail!("tau must be positive, got {v}");
        }
        Ok(TauChoice::Value(v))
    }
}

impl TauChoice {
    pub fn resolve(self, m: &MmLevyModel) -> anyhow::Result<f64> {
        match self {
            TauChoice::Auto => Ok(tau_opt(m)?),
            TauChoice::Value(v) => Ok(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum QuadChoice {
    #[default]
    Closed,
    Adaptive,
}

impl QuadChoice {
    pub fn settings(self) -> QuadSettings {
        match self {
            QuadChoice::Closed => QuadSettings::default(),
            QuadChoice::Adaptive => QuadSettings::adaptive(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelSource,
    pub algorithm: Algorithm,
    pub tau: TauChoice,
    pub x0: StartPolicy,
    pub eps: f64,
    pub max_iter: usize,
    pub quad: QuadChoice,
}

impl RunConfig {
    pub fn new(model: ModelSource, algorithm: Algorithm) -> Self {
        let d = SolveOptions::default();
        RunConfig {
            model,
            algorithm,
            tau: TauChoice::Auto,
            x0: StartPolicy::Zero,
            eps: d.eps,
            max_iter: d.max_iter,
            quad: QuadChoice::Closed,
        }
    }

    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            eps: self.eps,
            max_iter: self.max_iter,
            quad: self.quad.settings(),
            ..SolveOptions::default()
        }
    }

    pub fn check(&self) -> anyhow::Result<()> {
        check_start(self.algorithm, self.x0)?;
        self.options().validate()?;
        Ok(())
    }
}

/// Rejects starts the algorithm has no meaning for.
pub fn check_start(alg: Algorithm, x0: StartPolicy) -> anyhow::Result<()> {
    let ok = match x0 {
        StartPolicy::Zero => true,
        StartPolicy::Identity => alg.on_qme_path(),
        StartPolicy::DeltaB => matches!(alg, Algorithm::Nare | Algorithm::Simon),
    };
    if !ok {
        bail!(
            "--x0 {} is not valid for {} (identity: fi/ubased/qme; delta_b: nare/simon; breuer: zero only)",
            x0.name(),
            alg.name()
        );
    }
    Ok(())
}

/// Runs one algorithm. `tau` is only used by the QME-path algorithms.
pub fn run_algorithm(
    m: &MmLevyModel,
    alg: Algorithm,
    x0: StartPolicy,
    tau: f64,
    opts: &SolveOptions,
) -> anyhow::Result<SolveReport> {
    check_start(alg, x0)?;
    let n = m.n();
    let start = match x0 {
        StartPolicy::Zero => Matrix::zeros(n, n),
        StartPolicy::Identity => Matrix::identity(n, n),
        StartPolicy::DeltaB => diag(&phase_rates(m)?.b),
    };
    let r = match alg {
        Algorithm::Fi => fi_solve(m, tau, &start, opts)?,
        Algorithm::Ubased => u_based_solve(m, tau, &start, opts)?,
        Algorithm::Qme => qme_outer_solve(m, tau, &start, opts)?,
        Algorithm::Nare => nare_outer_solve(m, &start, InnerMethod::Sda, opts)?,
        Algorithm::Simon => simon_solve(m, &start, opts)?,
        Algorithm::Breuer => {
            let prep = breuer_prep(m, opts.eps)?;
            breuer_solve(m, &prep, &start, opts)?
        }
    };
    Ok(r)
}

/// Contents of `<prefix>.summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub x0: &'static str,
    pub tau: f64,
    pub kappa: f64,
    pub iterations: usize,
    pub residual_inf: Option<f64>,
    #[serde(rename = "rho_R")]
    pub rho_r: Option<f64>,
    #[serde(rename = "rho_Rhat")]
    pub rho_rhat: Option<f64>,
    pub observed_rate: Option<f64>,
    pub status: &'static str,
    pub elapsed_s: f64,
    /// Row-major.
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
}

pub struct SolveOutcome {
    pub summary: Summary,
    pub report: SolveReport,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn cmd_solve(cfg: &RunConfig) -> anyhow::Result<SolveOutcome> {
    cfg.check()?;
    let m = cfg.model.load()?;
    let opts = cfg.options();
    let tau = cfg.tau.resolve(&m)?;
    let report = run_algorithm(&m, cfg.algorithm, cfg.x0, tau, &opts)?;
    let kappa = drift_kappa(&m)?.kappa;
    let rates = rate_objects(&m, &report.solution, tau, &opts.quad).ok();
    let g = &report.solution;
    let summary = Summary {
        algorithm: cfg.algorithm,
        x0: cfg.x0.name(),
        tau,
        kappa,
        iterations: report.iterations,
        residual_inf: finite(report.residual),
        rho_r: rates.as_ref().and_then(|r| finite(r.rho_r)),
        rho_rhat: rates.as_ref().and_then(|r| finite(r.rho_rhat)),
        observed_rate: observed_rate(&report.error_trace, RATE_WINDOW)
            .ok()
            .and_then(|o| finite(o.rate)),
        status: report.status.as_str(),
        elapsed_s: report.elapsed,
        g: (0..g.nrows()).map(|i| g.row(i).iter().copied().collect()).collect(),
    };
    Ok(SolveOutcome { summary, report })
}

/// Writes `bytes` next to `path` and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn csv_bytes<R: Serialize>(header: &[&str], rows: &[R]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow!("csv buffer: {e}"))?)
}

pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub const TRACE_HEADER: [&str; 3] = ["iter", "err_inf", "elapsed_s"];

pub fn trace_csv(report: &SolveReport) -> anyhow::Result<Vec<u8>> {
    let rows: Vec<(usize, f64, f64)> = report
        .error_trace
        .iter()
        .zip(&report.time_trace)
        .enumerate()
        .map(|(k, (&e, &t))| (k + 1, e, t))
        .collect();
    csv_bytes(&TRACE_HEADER, &rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Emit {
    Csv,
    Json,
}

/// Writes the trace and summary files requested by `emit`; returns their paths.
pub fn write_solve(out: &SolveOutcome, prefix: &Path, emit: &[Emit]) -> anyhow::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if emit.contains(&Emit::Csv) {
        let p = with_suffix(prefix, ".trace.csv");
        write_atomic(&p, &trace_csv(&out.report)?)?;
        written.push(p);
    }
    if emit.contains(&Emit::Json) {
        let p = with_suffix(prefix, ".summary.json");
        let mut text = serde_json::to_string_pretty(&out.summary)?;
        text.push('\n');
        write_atomic(&p, text.as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

/// Which starts `compare` runs each algorithm from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum StartSet {
    #[default]
    Zero,
    Accelerated,
    Both,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub algorithm: &'static str,
    pub x0: &'static str,
    pub iterations: Option<usize>,
    pub cpu_s: Option<f64>,
    pub residual_inf: Option<f64>,
    pub max_pairwise_diff: Option<f64>,
    #[serde(skip)]
    pub error: Option<String>,
    #[serde(skip)]
    pub solution: Option<Matrix>,
}

pub const COMPARE_HEADER: [&str; 6] = [
    "algorithm",
    "x0",
    "iterations",
    "cpu_s",
    "residual_inf",
    "max_pairwise_diff",
];

pub struct Comparison {
    pub rows: Vec<CompareRow>,
    /// Largest `‖G_a − G_b‖∞` over all successful, converged pairs.
    pub max_diff: f64,
}

impl Comparison {
    pub fn agrees(&self) -> bool {
        self.max_diff <= AGREEMENT_TOL && self.rows.iter().all(|r| r.error.is_none())
    }
}

fn best_of<T>(repeats: usize, mut f: impl FnMut() -> anyhow::Result<T>) -> anyhow::Result<(f64, T)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        let v = f()?;
        best = best.min(t.elapsed().as_secs_f64());
        last = Some(v);
    }
    Ok((best, last.expect("at least one repetition")))
}

/// Runs every algorithm in `algs` from the starts in `starts`; individual
/// failures are recorded in the row and do not stop the comparison.
pub fn cmd_compare(
    m: &MmLevyModel,
    algs: &[Algorithm],
    starts: StartSet,
    tau: f64,
    opts: &SolveOptions,
    repeats: usize,
) -> Comparison {
    let mut rows = Vec::new();
    for &alg in algs {
        let mut list = Vec::new();
        if starts != StartSet::Accelerated || alg.accelerated_start().is_none() {
            list.push(StartPolicy::Zero);
        }
        if starts != StartSet::Zero {
            list.extend(alg.accelerated_start());
        }
        for x0 in list {
            let mut row = CompareRow {
                algorithm: alg.name(),
                x0: x0.name(),
                iterations: None,
                cpu_s: None,
                residual_inf: None,
                max_pairwise_diff: None,
                error: None,
                solution: None,
            };
            match best_of(repeats, || run_algorithm(m, alg, x0, tau, opts)) {
                Ok((cpu, r)) => {
                    row.iterations = Some(r.iterations);
                    row.cpu_s = Some(cpu);
                    row.residual_inf = finite(r.residual);
                    if r.converged() {
                        row.solution = Some(r.solution);
                    } else {
                        row.error = Some(format!("status {}", r.status));
                    }
                }
                Err(e) => row.error = Some(format!("{e:#}")),
            }
            rows.push(row);
        }
    }
    let mut max_diff: f64 = 0.0;
    for i in 0..rows.len() {
        let Some(a) = rows[i].solution.clone() else { continue };
        let mut worst: f64 = 0.0;
        for (j, other) in rows.iter().enumerate() {
            if let (true, Some(b)) = (i != j, &other.solution) {
                worst = worst.max(max_abs_diff(&a, b));
            }
        }
        rows[i].max_pairwise_diff = Some(worst);
        max_diff = max_diff.max(worst);
    }
    Comparison { rows, max_diff }
}

pub fn compare_csv(c: &Comparison) -> anyhow::Result<Vec<u8>> {
    csv_bytes(&COMPARE_HEADER, &c.rows)
}

pub const TAU_SWEEP_HEADER: [&str; 3] = ["tau", "residual_inf", "iterations"];

/// Marker written in the `residual_inf` column for `τ ≥ τ*`.
pub const INADMISSIBLE: &str = "inadmissible";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    /// `None` when `τ` is inadmissible.
    pub result: Option<(f64, usize)>,
}

impl Serialize for SweepRow {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeTuple;
        let mut t = s.serialize_tuple(3)?;
        t.serialize_element(&self.tau)?;
        match self.result {
            Some((res, it)) => {
                t.serialize_element(&res)?;
                t.serialize_element(&it)?;
            }
            None => {
                t.serialize_element(INADMISSIBLE)?;
                t.serialize_element("")?;
            }
        }
        t.end()
    }
}

/// QME-based solve at each `τ`; values at or above `τ*` are flagged, not run.
pub fn cmd_tau_sweep(m: &MmLevyModel, taus: &[TauChoice], opts: &SolveOptions) -> anyhow::Result<Vec<SweepRow>> {
    let bound = tau_star(m, TauBound::Mean)?;
    let n = m.n();
    let mut rows = Vec::new();
    for t in taus {
        let tau = t.resolve(m)?;
        if tau >= bound {
            rows.push(SweepRow { tau, result: None });
            continue;
        }
        let r = qme_outer_solve(m, tau, &Matrix::zeros(n, n), opts)?;
        rows.push(SweepRow {
            tau,
            result: Some((r.residual, r.iterations)),
        });
    }
    Ok(rows)
}

pub fn tau_sweep_csv(rows: &[SweepRow]) -> anyhow::Result<Vec<u8>> {
    csv_bytes(&TAU_SWEEP_HEADER, rows)
}

pub const SCALING_HEADER: [&str; 4] = ["n", "alg", "cpu_s", "residual_inf"];

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub alg: &'static str,
    pub cpu_s: f64,
    pub residual_inf: f64,
}

/// Example 1 with `n` phases, solved by the QME-based iteration and Simon's.
pub fn cmd_scaling(ns: &[usize], opts: &SolveOptions, repeats: usize) -> anyhow::Result<Vec<ScalingRow>> {
    let mut rows = Vec::new();
    for &n in ns {
        let m = preset_example1(&Example1 { n, ..Example1::default() })?;
        let tau = tau_opt(&m)?;
        for alg in [Algorithm::Qme, Algorithm::Simon] {
            let (cpu, r) = best_of(repeats, || run_algorithm(&m, alg, StartPolicy::Zero, tau, opts))?;
            if !r.converged() {
                bail!("{} did not converge at n={n}: {}", alg.name(), r.status);
            }
            rows.push(ScalingRow {
                n,
                alg: alg.name(),
                cpu_s: cpu,
                residual_inf: r.residual,
            });
        }
    }
    Ok(rows)
}

pub fn scaling_csv(rows: &[ScalingRow]) -> anyhow::Result<Vec<u8>> {
    csv_bytes(&SCALING_HEADER, rows)
}

/// Writes a table to `<prefix><suffix>`.
pub fn write_table(prefix: &Path, suffix: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
    let p = with_suffix(prefix, suffix);
    write_atomic(&p, bytes)?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_source_forms() {
        assert_eq!("example1".parse::<ModelSource>().unwrap(), ModelSource::Example1);
        assert_eq!("preset:example2".parse::<ModelSource>().unwrap(), ModelSource::Example2);
        assert_eq!(
            "file:a/b.json".parse::<ModelSource>().unwrap(),
            ModelSource::File("a/b.json".into())
        );
        assert!("example3".parse::<ModelSource>().is_err());
        assert!("file:".parse::<ModelSource>().is_err());
    }

    #[test]
    fn tau_parsing() {
        assert_eq!("auto".parse::<TauChoice>().unwrap(), TauChoice::Auto);
        assert_eq!("0.5".parse::<TauChoice>().unwrap(), TauChoice::Value(0.5));
        assert!("-1".parse::<TauChoice>().is_err());
        assert!("x".parse::<TauChoice>().is_err());
    }

    #[test]
    fn start_rules() {
        for alg in Algorithm::ALL {
            assert!(check_start(alg, StartPolicy::Zero).is_ok());
            assert_eq!(check_start(alg, StartPolicy::Identity).is_ok(), alg.on_qme_path());
        }
        assert!(check_start(Algorithm::Nare, StartPolicy::DeltaB).is_ok());
        assert!(check_start(Algorithm::Simon, StartPolicy::DeltaB).is_ok());
        assert!(check_start(Algorithm::Qme, StartPolicy::DeltaB).is_err());
        assert!(check_start(Algorithm::Breuer, StartPolicy::DeltaB).is_err());
    }

    #[test]
    fn sweep_row_serialization() {
        let rows = [
            SweepRow { tau: 0.5, result: Some((1e-15, 12)) },
            SweepRow { tau: 2.0, result: None },
        ];
        let text = String::from_utf8(tau_sweep_csv(&rows).unwrap()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "tau,residual_inf,iterations");
        assert_eq!(lines[1], "0.5,1e-15,12");
        assert_eq!(lines[2], "2.0,inadmissible,");
    }

    #[test]
    fn suffix_appends() {
        assert_eq!(with_suffix(Path::new("out/run"), ".trace.csv"), PathBuf::from("out/run.trace.csv"));
    }
}
