//! The Riccati route: writing `G = −Δ_b + S`, the matrix `S` solves
//! `S² − Δ_c S − S Δ_b + 2Δ_σ⁻²Ĉ(S) = 0`. Freezing `Ĉ` gives a nonsymmetric
//! algebraic Riccati equation with M-matrix structure, solved by doubling or
//! by a diagonal-Sylvester fixed point.

use crate::error::{Error, Result};
use crate::matcore::{self, diag, max_abs_diff, Matrix};
use crate::model::MmLevyModel;
use crate::quad::{self, QuadSettings};
use crate::report::{self, SolveOptions, SolveReport};

/// Per-phase rates entering the Riccati form.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRates {
    /// Within-phase jump rate `ρ_i`.
    pub rho: Vec<f64>,
    /// Total event rate `λ_i = ρ_i + |q_ii|`.
    pub lambda: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

pub fn phase_rates(m: &MmLevyModel) -> Result<PhaseRates> {
    m.ensure_valid()?;
    let rho = m.jump_rates();
    let n = m.n();
    let lambda: Vec<f64> = (0..n).map(|i| rho[i] + m.q[(i, i)].abs()).collect();
    let mut b = vec![0.0; n];
    let mut c = vec![0.0; n];
    for i in 0..n {
        let (a, s2) = (m.a[i], m.sigma2[i]);
        let root = (a * a + 2.0 * lambda[i] * s2).sqrt();
        // pick the cancellation-free form for each sign of a
        if a >= 0.0 {
            b[i] = (root + a) / s2;
            c[i] = 2.0 * lambda[i] / (root + a);
        } else {
            c[i] = (root - a) / s2;
            b[i] = 2.0 * lambda[i] / (root - a);
        }
    }
    Ok(PhaseRates { rho, lambda, b, c })
}

/// `2Δ_σ⁻² Ĉ(W)`, the constant term of the frozen Riccati equation.
pub fn riccati_constant(m: &MmLevyModel, rates: &PhaseRates, w: &Matrix, s: &QuadSettings) -> Result<Matrix> {
    let mut c = quad::c_hat(m, w, &rates.b, s)?;
    for i in 0..m.n() {
        c.row_mut(i).scale_mut(2.0 / m.sigma2[i]);
    }
    Ok(c)
}

/// `M = [[Δ_b, −I], [−2Δ_σ⁻²Ĉ(W), Δ_c]]`.
pub fn nare_m_matrix(m: &MmLevyModel, w: &Matrix, s: &QuadSettings) -> Result<Matrix> {
    let rates = phase_rates(m)?;
    let n = m.n();
    let cw = riccati_constant(m, &rates, w, s)?;
    let mut out = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        out[(i, i)] = rates.b[i];
        out[(i, n + i)] = -1.0;
        out[(n + i, n + i)] = rates.c[i];
    }
    out.view_mut((n, 0), (n, n)).copy_from(&(-cw));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerMethod {
    /// Structured doubling.
    #[default]
    Sda,
    /// `Δ_c S_{k+1} + S_{k+1} Δ_b = S_k² + C`.
    SylvesterFp,
}

/// Minimal nonnegative solution of `S² − Δ_c S − S Δ_b + cst = 0`.
pub fn riccati_min_solution(
    rates: &PhaseRates,
    cst: &Matrix,
    method: InnerMethod,
    eps: f64,
    max_iter: usize,
) -> Result<Matrix> {
    match method {
        InnerMethod::SylvesterFp => sylvester_fp(rates, cst, eps, max_iter),
        InnerMethod::Sda => match sda(rates, cst, eps, max_iter) {
            Ok(x) => Ok(x),
            Err(Error::Singular(_)) | Err(Error::NoConvergence(_)) => {
                sylvester_fp(rates, cst, eps, 1000 * max_iter.max(100))
            }
            Err(e) => Err(e),
        },
    }
}

/// Inner problem for a given `W`.
pub fn nare_inner_solve(
    m: &MmLevyModel,
    w: &Matrix,
    method: InnerMethod,
    eps: f64,
    max_iter: usize,
    s: &QuadSettings,
) -> Result<Matrix> {
    let rates = phase_rates(m)?;
    let cst = riccati_constant(m, &rates, w, s)?;
    riccati_min_solution(&rates, &cst, method, eps, max_iter)
}

fn sylvester_fp(rates: &PhaseRates, cst: &Matrix, eps: f64, max_iter: usize) -> Result<Matrix> {
    let n = cst.nrows();
    let mut x = Matrix::zeros(n, n);
    for _ in 0..max_iter {
        let next = matcore::diag_sylvester_solve(&rates.c, &rates.b, &(&x * &x + cst))?;
        let d = max_abs_diff(&next, &x);
        x = next;
        if d <= eps {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence("Riccati Sylvester fixed point"))
}

/// Doubling for `X C X − X D − A X + B = 0` with `C = I`, `A = Δ_c`,
/// `D = Δ_b`, `B = cst`.
fn sda(rates: &PhaseRates, cst: &Matrix, eps: f64, max_iter: usize) -> Result<Matrix> {
    let n = cst.nrows();
    let id = Matrix::identity(n, n);
    let gamma = rates
        .b
        .iter()
        .chain(&rates.c)
        .fold(0.0f64, |acc, &v| acc.max(v));
    let a_g: Vec<f64> = rates.c.iter().map(|c| c + gamma).collect();
    let d_g: Vec<f64> = rates.b.iter().map(|b| b + gamma).collect();
    let a_g_inv = diag(&a_g.iter().map(|v| 1.0 / v).collect::<Vec<_>>());
    let d_g_inv = diag(&d_g.iter().map(|v| 1.0 / v).collect::<Vec<_>>());
    let w_mat = diag(&a_g) - cst * &d_g_inv;
    let v_mat = diag(&d_g) - &a_g_inv * cst;
    let w_inv = matcore::inverse(&w_mat, "doubling initialization")?;
    let v_inv = matcore::inverse(&v_mat, "doubling initialization")?;
    let two_g = 2.0 * gamma;
    let mut e = &id - &v_inv * two_g;
    let mut f = &id - &w_inv * two_g;
    let mut g = &d_g_inv * &w_inv * two_g;
    let mut h = &w_inv * cst * &d_g_inv * two_g;
    for _ in 0..max_iter {
        let igh = &id - &g * &h;
        let ihg = &id - &h * &g;
        let e_igh = matcore::solve(&igh.transpose(), &e.transpose(), "doubling step")?.transpose();
        let f_ihg = matcore::solve(&ihg.transpose(), &f.transpose(), "doubling step")?.transpose();
        let h_next = &h + &f_ihg * &h * &e;
        g = &g + &e_igh * &g * &f;
        e = &e_igh * &e;
        f = &f_ihg * &f;
        if !h_next.iter().all(|v| v.is_finite()) {
            return Err(Error::Singular("doubling iterate"));
        }
        let d = max_abs_diff(&h_next, &h);
        h = h_next;
        if d <= eps * h.amax().max(1.0) || e.amax().max(f.amax()) <= f64::EPSILON {
            return Ok(h);
        }
    }
    Err(Error::NoConvergence("structured doubling"))
}

/// Outer iteration `S_{k+1} = S_min(S_k)`; returns `G = S − Δ_b`.
pub fn nare_outer_solve(
    m: &MmLevyModel,
    s0: &Matrix,
    method: InnerMethod,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    report::check_start(m, s0, "Riccati solver")?;
    let rates = phase_rates(m)?;
    let db = diag(&rates.b);
    let (eps, inner) = (opts.eps, opts.inner_max_iter);
    let q = opts.quad;
    report::run(
        m,
        s0.clone(),
        opts,
        |x| {
            let cst = riccati_constant(m, &rates, x, &q)?;
            riccati_min_solution(&rates, &cst, method, eps, inner)
        },
        |x| x - &db,
    )
}

/// `Ψ = Δ_b⁻¹ S`.
pub fn psi(rates: &PhaseRates, s: &Matrix) -> Matrix {
    let mut p = s.clone();
    for (i, b) in rates.b.iter().enumerate() {
        p.row_mut(i).scale_mut(1.0 / b);
    }
    p
}

/// The `S` start matching `W_0` of the quadratic route: `S_0 = Δ_b + τ⁻¹(W_0 − I)`.
pub fn matched_start(rates: &PhaseRates, tau: f64, w0: &Matrix) -> Matrix {
    diag(&rates.b) + quad::w_to_exponent(tau, w0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{row_sums, structure_check};
    use crate::model::{preset_example1, preset_example2, Example1, Example2, JumpDensity};

    #[test]
    fn zero_drift_collapse_and_identity() {
        let q = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]);
        let m = MmLevyModel::new(vec![0.0, 0.0], vec![0.5, 2.0], q, vec![JumpDensity::None; 2]);
        let r = phase_rates(&m).unwrap();
        for i in 0..2 {
            let expect = (2.0 * r.lambda[i]).sqrt() / m.sigma2[i].sqrt();
            assert!((r.b[i] - expect).abs() < 1e-14 && (r.c[i] - expect).abs() < 1e-14);
        }
        for m in [
            preset_example1(&Example1::default()).unwrap(),
            preset_example2(&Example2::default()).unwrap(),
        ] {
            let r = phase_rates(&m).unwrap();
            for i in 0..m.n() {
                let prod = r.b[i] * r.c[i] * m.sigma2[i] / 2.0;
                assert!((prod / r.lambda[i] - 1.0).abs() < 1e-12);
                assert!((r.c[i] - (r.b[i] - 2.0 * m.a[i] / m.sigma2[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn example2_phase1_rates() {
        let m = preset_example2(&Example2::default()).unwrap();
        let r = phase_rates(&m).unwrap();
        let s = 6.5f64.sqrt();
        assert!((r.lambda[0] - 1.25).abs() < 1e-15);
        assert!((r.b[0] - (s - 2.0)).abs() < 1e-14);
        assert!((r.c[0] - (s + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn m_matrix_structure() {
        let s = QuadSettings::default();
        let m = preset_example1(&Example1::default()).unwrap();
        let mm = nare_m_matrix(&m, &Matrix::zeros(8, 8), &s).unwrap();
        let rep = structure_check(&mm, 1e-10).unwrap();
        assert!(rep.is_m_matrix && rep.is_irreducible);

        // W 1 = b makes M diag(I, Δ_b) annihilate 1
        let m = preset_example2(&Example2::default()).unwrap();
        let r = phase_rates(&m).unwrap();
        let mut w = Matrix::from_element(3, 3, 1.0);
        for i in 0..3 {
            w.row_mut(i).scale_mut(r.b[i] / 3.0);
        }
        let mm = nare_m_matrix(&m, &w, &s).unwrap();
        let mut scale = vec![1.0; 3];
        scale.extend(&r.b);
        let tilde = mm * diag(&scale);
        assert!(row_sums(&tilde).amax() < 1e-12);
    }

    #[test]
    fn hand_assembled_blocks() {
        let s = QuadSettings::default();
        let q = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]);
        let m = MmLevyModel::new(vec![0.5, -0.5], vec![1.0, 2.0], q, vec![JumpDensity::None; 2]);
        let r = phase_rates(&m).unwrap();
        let mm = nare_m_matrix(&m, &Matrix::zeros(2, 2), &s).unwrap();
        #[rustfmt::skip]
        let expected = Matrix::from_row_slice(4, 4, &[
            r.b[0], 0.0, -1.0, 0.0,
            0.0, r.b[1], 0.0, -1.0,
            0.0, -2.0, r.c[0], 0.0,
            -2.0, 0.0, 0.0, r.c[1],
        ]);
        assert!(max_abs_diff(&mm, &expected) < 1e-15);
    }

    #[test]
    fn zero_constant_gives_zero() {
        let m = preset_example2(&Example2::default()).unwrap();
        let r = phase_rates(&m).unwrap();
        for method in [InnerMethod::Sda, InnerMethod::SylvesterFp] {
            let x = riccati_min_solution(&r, &Matrix::zeros(3, 3), method, 1e-15, 100).unwrap();
            assert!(x.amax() == 0.0);
        }
    }

    #[test]
    fn inner_methods_agree_on_example2() {
        let s = QuadSettings::default();
        let m = preset_example2(&Example2::default()).unwrap();
        let w = Matrix::zeros(3, 3);
        let a = nare_inner_solve(&m, &w, InnerMethod::Sda, 1e-15, 100, &s).unwrap();
        let b = nare_inner_solve(&m, &w, InnerMethod::SylvesterFp, 1e-15, 1_000_000, &s).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-11, "{}", max_abs_diff(&a, &b));
        let r = phase_rates(&m).unwrap();
        let sums = row_sums(&a);
        assert!((0..3).all(|i| sums[i] <= r.b[i] + 1e-10));
        assert!(a.min() > 0.0);
    }

    #[test]
    fn sylvester_inner_trace_monotone() {
        let s = QuadSettings::default();
        let m = preset_example1(&Example1 { n: 4, ..Default::default() }).unwrap();
        let r = phase_rates(&m).unwrap();
        let cst = riccati_constant(&m, &r, &Matrix::zeros(4, 4), &s).unwrap();
        let mut x = Matrix::zeros(4, 4);
        for _ in 0..200 {
            let next = matcore::diag_sylvester_solve(&r.c, &r.b, &(&x * &x + &cst)).unwrap();
            assert!((&next - &x).min() >= -1e-15);
            x = next;
        }
    }

    #[test]
    fn equality_case_keeps_row_sums() {
        let s = QuadSettings::default();
        let m = preset_example1(&Example1 { n: 4, ..Default::default() }).unwrap();
        let r = phase_rates(&m).unwrap();
        let mut w = Matrix::from_element(4, 4, 1.0);
        for i in 0..4 {
            w.row_mut(i).scale_mut(r.b[i] / 4.0);
        }
        let x = nare_inner_solve(&m, &w, InnerMethod::Sda, 1e-15, 100, &s).unwrap();
        let sums = row_sums(&x);
        assert!((0..4).all(|i| (sums[i] - r.b[i]).abs() < 1e-10));
    }

    #[test]
    fn outer_solution_has_positive_psi() {
        let m = preset_example2(&Example2::default()).unwrap();
        let r = phase_rates(&m).unwrap();
        let rep = nare_outer_solve(&m, &Matrix::zeros(3, 3), InnerMethod::Sda, &SolveOptions::default()).unwrap();
        assert!(rep.converged());
        assert!(psi(&r, &rep.last_iterate).min() > 0.0);
        assert!(rep.residual < 1e-12, "{}", rep.residual);
        let g = &rep.solution;
        assert!((0..3).all(|i| (0..3).all(|j| i == j || g[(i, j)] > 0.0)));
    }
}
