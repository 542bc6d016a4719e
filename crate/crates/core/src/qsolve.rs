//! The quadratic-matrix-equation route: with `W = I + τG` the equation
//! `F(G) = 0` becomes `B_{-1}(τ,W) + B_0(τ) W + B_1 W² = 0`, solved by the
//! natural fixed point, the U-based iteration, or an outer iteration whose
//! frozen-coefficient subproblem is handled by cyclic reduction.

use crate::error::{Error, Result};
use crate::matcore::{self, diag, max_abs_diff, Matrix};
use crate::model::MmLevyModel;
use crate::quad::{self, QuadSettings};
use crate::report::{self, SolveOptions, SolveReport};

/// Back-off factor applied to the mean bound for the default `τ`.
pub const TAU_SAFETY: f64 = 0.999999;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauBound {
    /// Uses the jump rate of each phase.
    Basic,
    /// Uses the mean jump size of each phase; less conservative.
    Mean,
}

/// Positive root of `A τ² + B τ + C` with `A < 0 < C`.
fn positive_root(a: f64, b: f64, c: f64) -> f64 {
    let sd = (b * b - 4.0 * a * c).sqrt();
    if b <= 0.0 {
        2.0 * c / (sd - b)
    } else {
        (b + sd) / (-2.0 * a)
    }
}

/// Upper end of the admissible interval `0 < τ < τ*`.
pub fn tau_star(m: &MmLevyModel, bound: TauBound) -> Result<f64> {
    m.ensure_valid()?;
    let mut t = f64::INFINITY;
    for i in 0..m.n() {
        let (a, s2, qii) = (m.a[i], m.sigma2[i], m.q[(i, i)]);
        if a > 0.0 {
            t = t.min(s2 / a);
        }
        let root = match bound {
            TauBound::Basic => positive_root(2.0 * (qii - m.nu[i].mass()), -2.0 * a, s2),
            TauBound::Mean => positive_root(2.0 * qii, -(2.0 * a + m.nu[i].mean()?), s2),
        };
        t = t.min(root);
    }
    Ok(t)
}

/// Default step parameter, just below the mean bound.
pub fn tau_opt(m: &MmLevyModel) -> Result<f64> {
    Ok(TAU_SAFETY * tau_star(m, TauBound::Mean)?)
}

/// Coefficients of the quadratic equation for a fixed `τ`.
#[derive(Debug, Clone)]
pub struct QmeSystem<'a> {
    model: &'a MmLevyModel,
    pub tau: f64,
    /// Diagonal of `B_1 = Δ_σ²`.
    pub b1: Vec<f64>,
    /// Diagonal of `B_0 = 2(τΔ_a − Δ_σ²)`.
    pub b0: Vec<f64>,
    /// `B̃_1 = −B_0⁻¹ B_1`, diagonal.
    pub bt1: Matrix,
    quad: QuadSettings,
}

impl<'a> QmeSystem<'a> {
    /// Checks `0 < τ < τ*` against the mean bound.
    pub fn new(m: &'a MmLevyModel, tau: f64, s: &QuadSettings) -> Result<Self> {
        let tau_star = tau_star(m, TauBound::Mean)?;
        if !(tau > 0.0 && tau < tau_star) {
            return Err(Error::TauOutOfRange { tau, tau_star });
        }
        s.validate()?;
        let b1 = m.sigma2.clone();
        let b0: Vec<f64> = (0..m.n()).map(|i| 2.0 * (tau * m.a[i] - m.sigma2[i])).collect();
        let bt1 = diag(&b1.iter().zip(&b0).map(|(x, y)| -x / y).collect::<Vec<_>>());
        Ok(QmeSystem {
            model: m,
            tau,
            b1,
            b0,
            bt1,
            quad: *s,
        })
    }

    /// `B_{-1}(τ,W) = Δ_σ² − 2τΔ_a + 2τ²(H(τ,W) + K(τ,W))`.
    pub fn bm1(&self, w: &Matrix) -> Result<Matrix> {
        let m = self.model;
        let t = self.tau;
        let hk = quad::h_plus_k(m, t, w, &self.quad)?;
        let lin: Vec<f64> = (0..m.n()).map(|i| m.sigma2[i] - 2.0 * t * m.a[i]).collect();
        Ok(diag(&lin) + hk * (2.0 * t * t))
    }

    /// `B̃_{-1}(τ,W) = −B_0⁻¹ B_{-1}(τ,W)`.
    pub fn bt_m1(&self, w: &Matrix) -> Result<Matrix> {
        let mut b = self.bm1(w)?;
        for (i, d) in self.b0.iter().enumerate() {
            b.row_mut(i).scale_mut(-1.0 / d);
        }
        Ok(b)
    }

    pub fn model(&self) -> &MmLevyModel {
        self.model
    }

    /// `G = τ⁻¹(W − I)`.
    pub fn to_g(&self, w: &Matrix) -> Matrix {
        quad::w_to_exponent(self.tau, w)
    }

    /// `W = I + τG`.
    pub fn to_w(&self, g: &Matrix) -> Matrix {
        let n = g.nrows();
        Matrix::identity(n, n) + g * self.tau
    }
}

fn qme_run<S>(m: &MmLevyModel, tau: f64, w0: &Matrix, opts: &SolveOptions, step: S) -> Result<SolveReport>
where
    S: Fn(&QmeSystem, &Matrix) -> Result<Matrix>,
{
    report::check_start(m, w0, "QME solver")?;
    let sys = QmeSystem::new(m, tau, &opts.quad)?;
    report::run(m, w0.clone(), opts, |w| step(&sys, w), |w| sys.to_g(w))
}

/// Natural fixed point `W_{k+1} = B̃_{-1}(τ,W_k) + B̃_1 W_k²`.
pub fn fi_solve(m: &MmLevyModel, tau: f64, w0: &Matrix, opts: &SolveOptions) -> Result<SolveReport> {
    qme_run(m, tau, w0, opts, |sys, w| Ok(sys.bt_m1(w)? + &sys.bt1 * (w * w)))
}

/// `W_{k+1} = (I − B̃_1 W_k)⁻¹ B̃_{-1}(τ,W_k)`.
pub fn u_based_solve(m: &MmLevyModel, tau: f64, w0: &Matrix, opts: &SolveOptions) -> Result<SolveReport> {
    qme_run(m, tau, w0, opts, |sys, w| {
        let n = w.nrows();
        let lhs = Matrix::identity(n, n) - &sys.bt1 * w;
        matcore::solve(&lhs, &sys.bt_m1(w)?, "U-based step")
    })
}

/// `W_{k+1}` is the minimal solution of `V = B̃_{-1}(τ,W_k) + B̃_1 V²`.
pub fn qme_outer_solve(m: &MmLevyModel, tau: f64, w0: &Matrix, opts: &SolveOptions) -> Result<SolveReport> {
    let (eps, inner) = (opts.eps, opts.inner_max_iter);
    qme_run(m, tau, w0, opts, move |sys, w| cr_solve(&sys.bt_m1(w)?, &sys.bt1, eps, inner))
}

/// Minimal nonnegative solution of `V = B_{-1} + B_1 V²` by cyclic
/// reduction, falling back to the U-based fixed point when reduction
/// breaks down or stalls.
pub fn cr_solve(bm1: &Matrix, bt1: &Matrix, eps: f64, max_iter: usize) -> Result<Matrix> {
    let n = matcore::ensure_square(bm1)?;
    if bt1.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "cyclic reduction: coefficients {}x{} and {}x{}",
            n,
            n,
            bt1.nrows(),
            bt1.ncols()
        )));
    }
    match cyclic_reduction(bm1, bt1, eps, max_iter) {
        Ok(v) => Ok(v),
        Err(Error::Singular(_)) | Err(Error::NoConvergence(_)) => {
            fixed_point_fallback(bm1, bt1, eps, 100 * max_iter.max(100))
        }
        Err(e) => Err(e),
    }
}

fn cyclic_reduction(bm1: &Matrix, bt1: &Matrix, eps: f64, max_iter: usize) -> Result<Matrix> {
    let n = bm1.nrows();
    let id = Matrix::identity(n, n);
    // A_{-1} + A_0 V + A_1 V² = 0 with A_0 = −I
    let mut am = bm1.clone();
    let mut ap = bt1.clone();
    let mut a0 = -&id;
    let mut ahat = -&id;
    let mut v = bm1.clone();
    for _ in 0..max_iter {
        let k = matcore::inverse(&a0, "cyclic reduction pivot")?;
        let amk = &am * &k;
        let apk = &ap * &k;
        let apk_am = &apk * &am;
        a0 = a0 - &amk * &ap - &apk_am;
        ahat -= apk_am;
        am = -(&amk * &am);
        ap = -(&apk * &ap);
        let next = -matcore::solve(&ahat, bm1, "cyclic reduction solution")?;
        if !next.iter().all(|x| x.is_finite()) {
            return Err(Error::Singular("cyclic reduction"));
        }
        let diff = max_abs_diff(&next, &v);
        v = next;
        if diff <= eps || am.amax() <= f64::EPSILON * eps || ap.amax() <= f64::EPSILON * eps {
            return Ok(v);
        }
    }
    Err(Error::NoConvergence("cyclic reduction"))
}

fn fixed_point_fallback(bm1: &Matrix, bt1: &Matrix, eps: f64, max_iter: usize) -> Result<Matrix> {
    let n = bm1.nrows();
    let id = Matrix::identity(n, n);
    let mut v = Matrix::zeros(n, n);
    for _ in 0..max_iter {
        let next = matcore::solve(&(&id - bt1 * &v), bm1, "fixed-point fallback")?;
        let diff = max_abs_diff(&next, &v);
        v = next;
        if diff <= eps {
            return Ok(v);
        }
    }
    Err(Error::NoConvergence("quadratic equation fixed point"))
}
