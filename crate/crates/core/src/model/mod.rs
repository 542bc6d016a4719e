//! Markov-modulated Lévy process with positive jumps: parameters,
//! validation, drift, the residual map `F(Y)` and the two reference models.

use std::fmt;

use crate::error::{Error, Result};
use crate::matcore::{self, diag, ensure_square, expm, ones, row_sums, Matrix, Vector};
use crate::quad::{self, QuadSettings};

mod io;

pub use io::{from_json_str, load, save, to_json_string};

/// Absolute tolerance used by [`validate`].
pub const MODEL_TOL: f64 = 1e-12;

/// Drift values with `|κ|` at or below this are treated as zero.
pub const ZERO_DRIFT_BAND: f64 = 1e-12;

/// A jump-size density on `(0, ∞)` with finite total mass `weight`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum JumpDensity {
    #[default]
    None,
    /// `weight · rate · e^{-rate x}`
    Exponential { rate: f64, weight: f64 },
    /// `weight · init e^{gen x} (−gen 1)`
    PhaseType {
        init: Vector,
        gen: Matrix,
        weight: f64,
    },
}

impl JumpDensity {
    pub fn exponential(rate: f64, weight: f64) -> Self {
        JumpDensity::Exponential { rate, weight }
    }

    pub fn phase_type(init: Vector, gen: Matrix, weight: f64) -> Self {
        JumpDensity::PhaseType { init, gen, weight }
    }

    pub fn is_none(&self) -> bool {
        match self {
            JumpDensity::None => true,
            JumpDensity::Exponential { weight, .. } | JumpDensity::PhaseType { weight, .. } => {
                *weight == 0.0
            }
        }
    }

    /// Total mass `∫ d(x) dx`.
    pub fn mass(&self) -> f64 {
        match self {
            JumpDensity::None => 0.0,
            JumpDensity::Exponential { weight, .. } => *weight,
            JumpDensity::PhaseType { init, weight, .. } => weight * init.sum(),
        }
    }

    /// First moment `∫ x d(x) dx`.
    pub fn mean(&self) -> Result<f64> {
        match self {
            JumpDensity::None => Ok(0.0),
            JumpDensity::Exponential { rate, weight } => Ok(weight / rate),
            JumpDensity::PhaseType { init, gen, weight } => {
                let n = gen.nrows();
                let v = matcore::solve(
                    &(-gen),
                    &Matrix::from_element(n, 1, 1.0),
                    "phase-type mean",
                )?;
                Ok(weight * init.dot(&v.column(0)))
            }
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        match self {
            JumpDensity::None => Ok(0.0),
            JumpDensity::Exponential { rate, weight } => Ok(weight * rate * (-rate * x).exp()),
            JumpDensity::PhaseType { init, gen, weight } => {
                let exit = -(gen * ones(gen.nrows()));
                let e = expm(&(gen * x))?;
                Ok(weight * (init.transpose() * e * exit)[(0, 0)])
            }
        }
    }

    /// Tail mass `∫_x^∞ d(u) du`.
    pub fn tail(&self, x: f64) -> Result<f64> {
        match self {
            JumpDensity::None => Ok(0.0),
            JumpDensity::Exponential { rate, weight } => Ok(weight * (-rate * x).exp()),
            JumpDensity::PhaseType { init, gen, weight } => {
                let e = expm(&(gen * x))?;
                Ok(weight * (init.transpose() * e * ones(gen.nrows()))[(0, 0)])
            }
        }
    }

    /// `∫_x^∞ tail(u) du`.
    pub fn tail_integral(&self, x: f64) -> Result<f64> {
        match self {
            JumpDensity::None => Ok(0.0),
            JumpDensity::Exponential { rate, weight } => {
                Ok(weight / rate * (-rate * x).exp())
            }
            JumpDensity::PhaseType { init, gen, weight } => {
                let n = gen.nrows();
                let v = matcore::solve(
                    &(-gen),
                    &Matrix::from_element(n, 1, 1.0),
                    "phase-type tail",
                )?;
                let e = expm(&(gen * x))?;
                Ok(weight * (init.transpose() * e * v)[(0, 0)])
            }
        }
    }

    /// Scalar Laplace transform `∫ d(x) e^{-s x} dx`, valid for `s` above
    /// minus the decay rate.
    pub fn laplace(&self, s: f64) -> Result<f64> {
        match self {
            JumpDensity::None => Ok(0.0),
            JumpDensity::Exponential { rate, weight } => {
                if s <= -rate {
                    return Err(Error::Divergent(format!(
                        "Laplace transform at {s} of exponential({rate})"
                    )));
                }
                Ok(weight * rate / (rate + s))
            }
            JumpDensity::PhaseType { init, gen, weight } => {
                if s <= -self.decay_rate()? {
                    return Err(Error::Divergent(format!(
                        "Laplace transform at {s} of phase-type density"
                    )));
                }
                let n = gen.nrows();
                let exit = -(gen * ones(n));
                let lhs = Matrix::identity(n, n) * s - gen;
                let v = matcore::solve(
                    &lhs,
                    &Matrix::from_column_slice(n, 1, exit.as_slice()),
                    "phase-type Laplace transform",
                )?;
                Ok(weight * init.dot(&v.column(0)))
            }
        }
    }

    /// Exponential decay rate of the density tail.
    pub fn decay_rate(&self) -> Result<f64> {
        match self {
            JumpDensity::None => Ok(f64::INFINITY),
            JumpDensity::Exponential { rate, .. } => Ok(*rate),
            JumpDensity::PhaseType { gen, .. } => Ok(-matcore::max_real_eigenvalue(gen)?),
        }
    }

    /// Problems with the density parameters, empty when valid.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            JumpDensity::None => {}
            JumpDensity::Exponential { rate, weight } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    out.push(format!("exponential rate must be positive, got {rate}"));
                }
                if !(weight.is_finite() && *weight >= 0.0) {
                    out.push(format!("weight must be nonnegative, got {weight}"));
                }
            }
            JumpDensity::PhaseType { init, gen, weight } => {
                if !(weight.is_finite() && *weight >= 0.0) {
                    out.push(format!("weight must be nonnegative, got {weight}"));
                }
                if gen.nrows() != gen.ncols() || gen.nrows() != init.len() || init.is_empty() {
                    out.push(format!(
                        "phase-type shapes: init has {} entries, generator is {}x{}",
                        init.len(),
                        gen.nrows(),
                        gen.ncols()
                    ));
                    return out;
                }
                if init.iter().any(|&p| p < -MODEL_TOL) || init.sum() > 1.0 + MODEL_TOL {
                    out.push("phase-type initial vector must be a sub-probability vector".into());
                }
                match matcore::structure_check(gen, MODEL_TOL) {
                    Ok(r) if r.is_subgenerator => {}
                    _ => out.push("phase-type generator must be a subgenerator".into()),
                }
                match matcore::max_real_eigenvalue(gen) {
                    Ok(m) if m < 0.0 => {}
                    _ => out.push("phase-type generator must be nonsingular".into()),
                }
            }
        }
        out
    }
}

/// All parameters of the process.
#[derive(Debug, Clone, PartialEq)]
pub struct MmLevyModel {
    /// Brownian drift per phase.
    pub a: Vec<f64>,
    /// Brownian variance per phase.
    pub sigma2: Vec<f64>,
    /// Phase generator.
    pub q: Matrix,
    /// Probability of a zero-size jump at a phase switch.
    pub u0: Matrix,
    /// Within-phase jump densities.
    pub nu: Vec<JumpDensity>,
    /// Switch jump densities, `mu[i][j]` for a change from `i` to `j`.
    pub mu: Vec<Vec<JumpDensity>>,
}

impl MmLevyModel {
    /// Model without switch jumps (`U(0) = 1 1ᵀ`, `μ ≡ 0`).
    pub fn new(a: Vec<f64>, sigma2: Vec<f64>, q: Matrix, nu: Vec<JumpDensity>) -> Self {
        let n = a.len();
        MmLevyModel {
            a,
            sigma2,
            q,
            u0: Matrix::from_element(n, n, 1.0),
            nu,
            mu: vec![vec![JumpDensity::None; n]; n],
        }
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// `ρ_i`, total within-phase jump rate.
    pub fn jump_rates(&self) -> Vec<f64> {
        self.nu.iter().map(|d| d.mass()).collect()
    }

    pub fn q_diag(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.q[(i, i)]).collect()
    }

    pub fn has_switch_jumps(&self) -> bool {
        self.mu.iter().flatten().any(|d| !d.is_none())
    }

    /// Fails with every violation found when the model is not valid.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = validate(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }
}

/// One failed model check.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    SigmaPositive { phase: usize },
    NonFinite(String),
    NotGenerator,
    Reducible,
    AtomRange { i: usize, j: usize },
    AtomDiagonal { i: usize },
    SwitchDiagonal { i: usize },
    Density { which: String, reason: String },
    MassIdentity { i: usize, j: usize, defect: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(s) => write!(f, "shape: {s}"),
            Violation::SigmaPositive { phase } => {
                write!(f, "sigma positive: sigma2[{phase}] must be > 0")
            }
            Violation::NonFinite(s) => write!(f, "non-finite value in {s}"),
            Violation::NotGenerator => write!(f, "generator: q must have nonnegative off-diagonal entries and zero row sums"),
            Violation::Reducible => write!(f, "irreducible: q is reducible"),
            Violation::AtomRange { i, j } => write!(f, "u0[{i}][{j}] must lie in [0, 1]"),
            Violation::AtomDiagonal { i } => write!(f, "u0[{i}][{i}] must equal 1"),
            Violation::SwitchDiagonal { i } => write!(f, "mu[{i}][{i}] must be none"),
            Violation::Density { which, reason } => write!(f, "density {which}: {reason}"),
            Violation::MassIdentity { i, j, defect } => write!(
                f,
                "mass identity: q[{i}][{j}]*(u0[{i}][{j}] + mass(mu[{i}][{j}]) - 1) = {defect:e}"
            ),
        }
    }
}

/// Checks every structural requirement on the model; empty means valid.
pub fn validate(m: &MmLevyModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = m.n();
    if n < 2 {
        out.push(Violation::Shape(format!("need at least 2 phases, got {n}")));
        return out;
    }
    let shapes = [
        ("sigma2", m.sigma2.len() == n),
        ("q", m.q.shape() == (n, n)),
        ("u0", m.u0.shape() == (n, n)),
        ("nu", m.nu.len() == n),
        ("mu", m.mu.len() == n && m.mu.iter().all(|r| r.len() == n)),
    ];
    for (name, ok) in shapes {
        if !ok {
            out.push(Violation::Shape(format!("{name} does not match {n} phases")));
        }
    }
    if !out.is_empty() {
        return out;
    }
    if m.a.iter().any(|x| !x.is_finite()) {
        out.push(Violation::NonFinite("a".into()));
    }
    for (i, s) in m.sigma2.iter().enumerate() {
        if !(s.is_finite() && *s > 0.0) {
            out.push(Violation::SigmaPositive { phase: i });
        }
    }
    if m.q.iter().any(|x| !x.is_finite()) {
        out.push(Violation::NonFinite("q".into()));
        return out;
    }
    let off_ok = (0..n).all(|i| (0..n).all(|j| i == j || m.q[(i, j)] >= 0.0));
    let sums_ok = row_sums(&m.q).iter().all(|s| s.abs() <= MODEL_TOL);
    if !(off_ok && sums_ok) {
        out.push(Violation::NotGenerator);
    }
    if !matcore::is_irreducible(&m.q, matcore::SUPPORT_TOL) {
        out.push(Violation::Reducible);
    }
    for i in 0..n {
        if m.u0[(i, i)] != 1.0 {
            out.push(Violation::AtomDiagonal { i });
        }
        if !m.mu[i][i].is_none() {
            out.push(Violation::SwitchDiagonal { i });
        }
        for j in 0..n {
            let u = m.u0[(i, j)];
            if !(0.0..=1.0).contains(&u) {
                out.push(Violation::AtomRange { i, j });
            }
        }
    }
    for (i, d) in m.nu.iter().enumerate() {
        for reason in d.check() {
            out.push(Violation::Density {
                which: format!("nu[{i}]"),
                reason,
            });
        }
    }
    for i in 0..n {
        for j in 0..n {
            for reason in m.mu[i][j].check() {
                out.push(Violation::Density {
                    which: format!("mu[{i}][{j}]"),
                    reason,
                });
            }
            if i != j {
                let defect = m.q[(i, j)] * (m.u0[(i, j)] + m.mu[i][j].mass() - 1.0);
                if defect.abs() > MODEL_TOL {
                    out.push(Violation::MassIdentity { i, j, defect });
                }
            }
        }
    }
    out
}

/// Stationary probability vector of an irreducible generator.
pub fn stationary_pi(q: &Matrix) -> Result<Vector> {
    let n = ensure_square(q)?;
    let r = matcore::structure_check(q, MODEL_TOL)?;
    if !r.is_generator {
        return Err(Error::Precondition("q is not a generator".into()));
    }
    if !r.is_irreducible {
        return Err(Error::Precondition("q is reducible".into()));
    }
    // Qᵀπ = 0 with the last equation replaced by 1ᵀπ = 1
    let mut lhs = q.transpose();
    lhs.row_mut(n - 1).fill(1.0);
    let mut rhs = Matrix::zeros(n, 1);
    rhs[(n - 1, 0)] = 1.0;
    let pi = matcore::solve(&lhs, &rhs, "stationary vector")?;
    Ok(pi.column(0).into_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftRegime {
    Negative,
    Zero,
    Positive,
}

impl DriftRegime {
    /// Solutions are generators (stochastic in `W`) unless the drift is positive.
    pub fn is_recurrent(self) -> bool {
        !matches!(self, DriftRegime::Positive)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftInfo {
    pub kappa: f64,
    pub pi: Vector,
    pub regime: DriftRegime,
}

/// Asymptotic drift `κ = πᵀ(Δ_a + ∫xΔ_ν + ∫x Q∘μ) 1`.
pub fn drift_kappa(m: &MmLevyModel) -> Result<DriftInfo> {
    m.ensure_valid()?;
    let pi = stationary_pi(&m.q)?;
    let n = m.n();
    let mut per_phase = vec![0.0; n];
    for i in 0..n {
        let mut v = m.a[i] + m.nu[i].mean()?;
        for j in 0..n {
            if i != j && !m.mu[i][j].is_none() {
                v += m.q[(i, j)] * m.mu[i][j].mean()?;
            }
        }
        if !v.is_finite() {
            return Err(Error::Divergent(format!("mean jump size in phase {i}")));
        }
        per_phase[i] = v;
    }
    let kappa: f64 = pi.iter().zip(&per_phase).map(|(p, v)| p * v).sum();
    let regime = if kappa.abs() <= ZERO_DRIFT_BAND {
        DriftRegime::Zero
    } else if kappa < 0.0 {
        DriftRegime::Negative
    } else {
        DriftRegime::Positive
    };
    Ok(DriftInfo { kappa, pi, regime })
}

/// `F(Y) = Δ_a Y + ½Δ_σ² Y² + ∫Δ_ν(x)(e^{Yx} − I)dx + Q∘U(0) + ∫(Q∘μ(x))e^{Yx}dx`.
pub fn f_residual(m: &MmLevyModel, y: &Matrix, s: &QuadSettings) -> Result<Matrix> {
    let n = m.n();
    if y.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "F(Y): Y is {}x{}, model has {n} phases",
            y.nrows(),
            y.ncols()
        )));
    }
    let terms = quad::jump_terms(m, y, s, quad::Kernel::Density)?;
    let da = diag(&m.a);
    let ds = diag(&m.sigma2);
    let rho = diag(&m.jump_rates());
    Ok(&da * y + (&ds * (y * y)) * 0.5 + terms.within - rho
        + m.q.component_mul(&m.u0)
        + terms.switch)
}

/// Parameters of the circulant example with phase-type jumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example1 {
    pub n: usize,
    pub ell: usize,
    pub r1: f64,
    pub r2: f64,
    pub c: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub rho: f64,
}

impl Default for Example1 {
    fn default() -> Self {
        Example1 {
            n: 8,
            ell: 10,
            r1: 2.0,
            r2: 1.0,
            c: 1.5,
            lambda: 0.1,
            alpha: 1.0,
            rho: -1.0,
        }
    }
}

/// Phase-type representation `(init, T)` with unit mean built from the
/// `ℓ`-phase template driven by `r1`, `r2` and `c`.
pub fn unit_mean_phase_type(ell: usize, r1: f64, r2: f64, c: f64) -> Result<(Vector, Matrix)> {
    if !(r1 > 1.0 && r1 > r2 && r2 > 0.0 && c > 0.0 && ell >= 2) {
        return Err(Error::InvalidParameter(format!(
            "phase-type template needs r1 > 1, r1 > r2 > 0, c > 0, ell >= 2 (got r1={r1}, r2={r2}, c={c}, ell={ell})"
        )));
    }
    let mut t = Matrix::zeros(ell, ell);
    let mut s = 0.0;
    for k in 1..ell {
        let up = (1.0 / r1).powi(k as i32);
        let back = (r2 / r1).powi(k as i32);
        t[(0, k)] = up;
        t[(k, 0)] = back;
        t[(k, k)] = -back;
        s += up;
    }
    t[(0, 0)] = -(c + s);
    let mut init = Vector::zeros(ell);
    init[0] = 1.0;
    let v = matcore::solve(&t, &Matrix::from_element(ell, 1, 1.0), "phase-type template")?;
    let scale = -init.dot(&v.column(0));
    Ok((init, t * scale))
}

pub fn preset_example1(p: &Example1) -> Result<MmLevyModel> {
    if p.n < 2 || !(p.rho < 0.0) || !(p.alpha > 0.0) || !(p.lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "example 1 needs n >= 2, rho < 0, alpha > 0, lambda >= 0 (got {p:?})"
        )));
    }
    let (init, gen) = unit_mean_phase_type(p.ell, p.r1, p.r2, p.c)?;
    let n = p.n;
    let mut q = Matrix::zeros(n, n);
    for i in 0..n {
        q[(i, i)] = -p.alpha;
        q[(i, (i + 1) % n)] += p.alpha;
    }
    let nu = vec![JumpDensity::phase_type(init, gen, p.lambda); n];
    Ok(MmLevyModel::new(vec![p.rho; n], vec![1.0; n], q, nu))
}

/// Parameters of the three-phase example with switch jumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example2 {
    pub alpha: f64,
    pub omega: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl Default for Example2 {
    fn default() -> Self {
        Example2 {
            alpha: 1.0,
            omega: 0.25,
            beta: 0.5,
            gamma: 1e-4,
            eta: 4.0,
        }
    }
}

pub fn preset_example2(p: &Example2) -> Result<MmLevyModel> {
    if !(p.eta > 2.0 && p.gamma > 0.0 && p.alpha > 0.0 && p.omega > 0.0 && p.beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "example 2 needs eta > 2 and positive alpha, omega, beta, gamma (got {p:?})"
        )));
    }
    let (al, om, be) = (p.alpha, p.omega, p.beta);
    let q = Matrix::from_row_slice(
        3,
        3,
        &[-al - om, al, om, al, -al - om, om, be, be, -2.0 * be],
    );
    let mut m = MmLevyModel::new(
        vec![-2.0, 1.0, -p.gamma],
        vec![1.0, 1.0, 100.0],
        q,
        vec![
            JumpDensity::None,
            JumpDensity::None,
            JumpDensity::exponential(1.0, p.gamma),
        ],
    );
    m.u0[(0, 1)] = 0.0;
    m.u0[(1, 0)] = 0.0;
    m.mu[0][1] = JumpDensity::exponential(p.eta, 1.0);
    m.mu[1][0] = JumpDensity::exponential(p.eta, 1.0);
    Ok(m)
}
