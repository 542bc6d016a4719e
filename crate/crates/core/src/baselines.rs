//! Two algorithms from the literature used as comparison points: Simon's
//! linearized Riccati iteration and Breuer's row-wise iteration.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::matcore::{self, diag, Matrix};
use crate::model::MmLevyModel;
use crate::quad::{self, Kernel, TransformCache};
use crate::report::{self, SolveOptions, SolveReport};
use crate::rsolve::{phase_rates, riccati_constant};

/// `S_{k+1}` solves `Δ_c S_{k+1} − S_{k+1}(S_k − Δ_b) = 2Δ_σ⁻²Ĉ(S_k)`.
pub fn simon_solve(m: &MmLevyModel, s0: &Matrix, opts: &SolveOptions) -> Result<SolveReport> {
    report::check_start(m, s0, "Simon iteration")?;
    let rates = phase_rates(m)?;
    let db = diag(&rates.b);
    let q = opts.quad;
    report::run(
        m,
        s0.clone(),
        opts,
        |x| {
            let cst = riccati_constant(m, &rates, x, &q)?;
            matcore::diag_left_sylvester_solve(&rates.c, &(x - &db), &cst)
        },
        |x| x - &db,
    )
}

/// Scalar preprocessing of Breuer's algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct BreuerPrep {
    /// `ξ_i = |s_i|`.
    pub xi: Vec<f64>,
    pub prep_time: f64,
}

/// `φ_i(s) = a_i s + ½σ_i² s² + ∫(e^{sx} − 1)ν_i(x)dx` and its derivative.
fn phi(m: &MmLevyModel, i: usize, s: f64) -> Result<(f64, f64)> {
    let nu = &m.nu[i];
    let (a, s2) = (m.a[i], m.sigma2[i]);
    let jump = nu.laplace(-s)? - nu.mass();
    // d/ds ∫ e^{sx} ν(x) dx by a centered difference of the Laplace transform
    let h = 1e-6 * s.abs().max(1.0);
    let djump = if nu.is_none() {
        0.0
    } else {
        (nu.laplace(-(s + h))? - nu.laplace(-(s - h))?) / (2.0 * h)
    };
    Ok((a * s + 0.5 * s2 * s * s + jump, a + s2 * s + djump))
}

fn phase_root(m: &MmLevyModel, i: usize, start: f64, eps: f64) -> Result<f64> {
    let target = m.q[(i, i)].abs();
    let f = |s: f64| phi(m, i, s).map(|(v, d)| (v - target, d));
    // φ is convex with φ(0) = 0 < target, so there is one root on (−∞, 0)
    let mut lo = -start;
    let mut steps = 0;
    while f(lo)?.0 <= 0.0 {
        lo *= 2.0;
        steps += 1;
        if steps > 200 {
            return Err(Error::NoConvergence("Breuer scalar bracket"));
        }
    }
    let mut hi = 0.0;
    let mut s = lo;
    for _ in 0..200 {
        let (v, d) = f(s)?;
        if v == 0.0 {
            return Ok(s);
        }
        if v > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = s - v / d;
        let next = if d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - s).abs() <= eps * s.abs() || (hi - lo).abs() <= eps * s.abs() {
            return Ok(next);
        }
        s = next;
    }
    Err(Error::NoConvergence("Breuer scalar equation"))
}

/// Solves `φ_i(s) = |q_ii|` for its negative root in every phase.
pub fn breuer_prep(m: &MmLevyModel, eps: f64) -> Result<BreuerPrep> {
    let start = Instant::now();
    let rates = phase_rates(m)?;
    let s_max = 2.0 * rates.b.iter().fold(0.0f64, |a, &b| a.max(b));
    let xi = (0..m.n())
        .map(|i| phase_root(m, i, s_max.max(1e-3), eps).map(f64::abs))
        .collect::<Result<Vec<_>>>()?;
    Ok(BreuerPrep {
        xi,
        prep_time: start.elapsed().as_secs_f64(),
    })
}

/// Residual `φ_i(−ξ_i) − |q_ii|` of the scalar equations.
pub fn breuer_prep_residuals(m: &MmLevyModel, prep: &BreuerPrep) -> Result<Vec<f64>> {
    (0..m.n())
        .map(|i| Ok(phi(m, i, -prep.xi[i])?.0 - m.q[(i, i)].abs()))
        .collect()
}

/// One simultaneous update of all rows.
pub fn breuer_step(m: &MmLevyModel, prep: &BreuerPrep, g: &Matrix, s: &quad::QuadSettings) -> Result<Matrix> {
    let n = m.n();
    let id = Matrix::identity(n, n);
    let terms = quad::jump_terms(m, g, s, Kernel::Density)?;
    let couple = quad::offdiag_atom(m) + &terms.switch;
    let g2 = g * g;
    let mut cache = TransformCache::new(g, Kernel::Density, s)?;
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let qii = m.q[(i, i)].abs();
        let mut y = g * m.a[i] + &g2 * (0.5 * m.sigma2[i]);
        if !m.nu[i].is_none() {
            y += cache.get(&m.nu[i])? - &id * m.nu[i].mass();
        }
        let lhs = &id * qii - y;
        // e_iᵀ C (ξI + V)(|q_ii|I − Y)⁻¹
        let left = couple.row(i) * (&id * prep.xi[i] + g);
        let rhs = Matrix::from_row_slice(n, 1, left.as_slice());
        let row = matcore::solve(&lhs.transpose(), &rhs, "Breuer row")?.transpose();
        out.row_mut(i).copy_from(&row);
        out[(i, i)] -= prep.xi[i];
    }
    Ok(out)
}

pub fn breuer_solve(m: &MmLevyModel, prep: &BreuerPrep, g0: &Matrix, opts: &SolveOptions) -> Result<SolveReport> {
    report::check_start(m, g0, "Breuer iteration")?;
    if prep.xi.len() != m.n() {
        return Err(Error::Dimension("Breuer preprocessing does not match the model".into()));
    }
    let q = opts.quad;
    report::run(m, g0.clone(), opts, |g| breuer_step(m, prep, g, &q), |g| g.clone())
}
