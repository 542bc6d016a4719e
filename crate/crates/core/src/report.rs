//! Options and results shared by every solver, and the common iteration loop.

use std::fmt;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::matcore::{max_abs_diff, norm_inf, Matrix};
use crate::model::{f_residual, MmLevyModel};
use crate::quad::QuadSettings;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stop once `‖X_{k+1} − X_k‖∞ ≤ eps`.
    pub eps: f64,
    pub max_iter: usize,
    /// Iteration cap of inner solvers (cyclic reduction, doubling).
    pub inner_max_iter: usize,
    /// Keep every iterate in [`SolveReport::iterates`].
    pub record_iterates: bool,
    pub quad: QuadSettings,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            eps: 1e-14,
            max_iter: 20_000,
            inner_max_iter: 100,
            record_iterates: false,
            quad: QuadSettings::default(),
        }
    }
}

impl SolveOptions {
    pub fn recording(mut self) -> Self {
        self.record_iterates = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || self.max_iter == 0 || self.inner_max_iter == 0 {
            return Err(Error::InvalidParameter(format!(
                "eps must be positive and iteration caps nonzero: {self:?}"
            )));
        }
        self.quad.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIter,
    Diverged,
    InvalidInput,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIter => "max_iter",
            Status::Diverged => "diverged",
            Status::InvalidInput => "invalid_input",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// The first-passage matrix `G`.
    pub solution: Matrix,
    /// Last iterate in the variable the algorithm works with (`W`, `S` or `G`).
    pub last_iterate: Matrix,
    pub iterations: usize,
    /// `‖X_{k+1} − X_k‖∞` for every completed step.
    pub error_trace: Vec<f64>,
    /// Seconds since the start of the solve at the end of each step.
    pub time_trace: Vec<f64>,
    /// `‖F(G)‖∞`; NaN when it cannot be evaluated.
    pub residual: f64,
    /// Wall time in seconds, excluding the residual evaluation.
    pub elapsed: f64,
    pub status: Status,
    /// `X_0, X_1, …` when requested.
    pub iterates: Vec<Matrix>,
    /// Why the run stopped early, if it did.
    pub message: Option<String>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

/// Runs `x_{k+1} = step(x_k)` to the stopping rule and converts the last
/// iterate to `G`.
pub(crate) fn run<S, T>(
    m: &MmLevyModel,
    x0: Matrix,
    opts: &SolveOptions,
    mut step: S,
    to_g: T,
) -> Result<SolveReport>
where
    S: FnMut(&Matrix) -> Result<Matrix>,
    T: Fn(&Matrix) -> Matrix,
{
    opts.validate()?;
    let start = Instant::now();
    let mut x = x0;
    let mut iterates = Vec::new();
    if opts.record_iterates {
        iterates.push(x.clone());
    }
    let mut error_trace = Vec::new();
    let mut time_trace = Vec::new();
    let mut status = Status::MaxIter;
    let mut message = None;
    for _ in 0..opts.max_iter {
        let next = match step(&x) {
            Ok(v) => v,
            Err(e) => {
                status = Status::Diverged;
                message = Some(e.to_string());
                break;
            }
        };
        let err = max_abs_diff(&next, &x);
        if !err.is_finite() || !next.iter().all(|v| v.is_finite()) {
            status = Status::Diverged;
            message = Some("iterate is not finite".into());
            break;
        }
        x = next;
        error_trace.push(err);
        time_trace.push(start.elapsed().as_secs_f64());
        if opts.record_iterates {
            iterates.push(x.clone());
        }
        if err <= opts.eps {
            status = Status::Converged;
            break;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let g = to_g(&x);
    let residual = f_residual(m, &g, &opts.quad)
        .map(|f| norm_inf(&f))
        .unwrap_or(f64::NAN);
    Ok(SolveReport {
        solution: g,
        last_iterate: x,
        iterations: error_trace.len(),
        error_trace,
        time_trace,
        residual,
        elapsed,
        status,
        iterates,
        message,
    })
}

pub(crate) fn check_start(m: &MmLevyModel, x0: &Matrix, what: &str) -> Result<()> {
    let n = m.n();
    if x0.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "{what}: starting matrix is {}x{}, model has {n} phases",
            x0.nrows(),
            x0.ncols()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{what}: starting matrix is not finite")));
    }
    Ok(())
}
