//! Asymptotic convergence rates: the splitting matrices whose spectral
//! radii predict the rates, and rate estimates from observed error traces.

use crate::error::{Error, Result};
use crate::matcore::{self, diag, Matrix, StructuralReport};
use crate::model::MmLevyModel;
use crate::qsolve::{tau_star, TauBound};
use crate::quad::{self, QuadSettings};

/// Relative threshold on the smallest eigenvalue of `Θ` below which it is
/// reported singular.
pub const THETA_SINGULAR_REL: f64 = 1e-8;

/// Default number of trailing trace entries used by [`observed_rate`].
pub const RATE_WINDOW: usize = 10;

#[derive(Debug, Clone)]
pub struct RateAnalysis {
    pub lambda: Matrix,
    pub theta: Matrix,
    pub m1: Matrix,
    pub n1: Matrix,
    pub m2: Matrix,
    pub n2: Matrix,
    /// Spectral radius of `M_1⁻¹N_1`, the rate of the U-based iteration.
    pub rho_r: f64,
    /// Spectral radius of `M_2⁻¹N_2`, the rate of the outer QME/Riccati iterations.
    pub rho_rhat: f64,
    pub theta_structure: StructuralReport,
    pub theta_is_m_matrix: bool,
    pub theta_singular: bool,
}

/// `Θ = −2Δ_a − Δ_σ²G − 2Λ` and its two splittings at step parameter `τ`.
pub fn rate_objects(m: &MmLevyModel, g: &Matrix, tau: f64, s: &QuadSettings) -> Result<RateAnalysis> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let lambda = quad::lambda_of(m, g, s)?;
    let ds = diag(&m.sigma2);
    let m2 = diag(&m.a) * -2.0 - &ds * g;
    let n2 = &lambda * 2.0;
    let theta = &m2 - &n2;
    let m1 = &m2 + &ds / tau;
    let n1 = &n2 + &ds / tau;
    let rho_r = matcore::spectral_radius(&matcore::solve(&m1, &n1, "splitting M1")?)?;
    let rho_rhat = matcore::spectral_radius(&matcore::solve(&m2, &n2, "splitting M2")?)?;
    let theta_structure = matcore::structure_check(&theta, matcore::STRUCTURE_TOL)?;
    let min_eig = matcore::min_real_eigenvalue(&theta)?;
    let theta_singular = min_eig.abs() <= THETA_SINGULAR_REL * matcore::norm_inf(&theta);
    Ok(RateAnalysis {
        theta_is_m_matrix: theta_structure.is_m_matrix,
        lambda,
        theta,
        m1,
        n1,
        m2,
        n2,
        rho_r,
        rho_rhat,
        theta_structure,
        theta_singular,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedRate {
    pub rate: f64,
    pub window: usize,
    /// Coefficient of determination of the log-linear fit.
    pub r2_fit: f64,
}

/// Geometric rate from the least-squares slope of `log err_k` over the last
/// `window` entries above the roundoff floor `100ε`.
pub fn observed_rate(trace: &[f64], window: usize) -> Result<ObservedRate> {
    if window < 3 {
        return Err(Error::InvalidParameter(format!("window must be at least 3, got {window}")));
    }
    let floor = 100.0 * f64::EPSILON;
    let usable: Vec<(f64, f64)> = trace
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > floor && e.is_finite())
        .map(|(k, &e)| (k as f64, e.ln()))
        .collect();
    if usable.len() < window {
        return Err(Error::InvalidParameter(format!(
            "trace has {} entries above the floor, window is {window}",
            usable.len()
        )));
    }
    let pts = &usable[usable.len() - window..];
    let w = window as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / w;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / w;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::InvalidParameter("trace is not decreasing".into()));
    }
    let r2_fit = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(ObservedRate {
        rate: slope.exp(),
        window,
        r2_fit,
    })
}

/// `ρ(R)` at each `τ`, for a fixed converged `G`.
pub fn tau_rate_monotonicity(m: &MmLevyModel, g: &Matrix, taus: &[f64], s: &QuadSettings) -> Result<Vec<(f64, f64)>> {
    let tau_star = tau_star(m, TauBound::Mean)?;
    if let Some(&tau) = taus.iter().find(|&&t| !(t > 0.0 && t < tau_star)) {
        return Err(Error::TauOutOfRange { tau, tau_star });
    }
    let lambda = quad::lambda_of(m, g, s)?;
    let ds = diag(&m.sigma2);
    let m2 = diag(&m.a) * -2.0 - &ds * g;
    let n2 = &lambda * 2.0;
    taus.iter()
        .map(|&tau| {
            let m1 = &m2 + &ds / tau;
            let n1 = &n2 + &ds / tau;
            let r = matcore::spectral_radius(&matcore::solve(&m1, &n1, "splitting M1")?)?;
            Ok((tau, r))
        })
        .collect()
}
