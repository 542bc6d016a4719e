//! Matrix-valued integrals against jump densities.
//!
//! Two evaluation paths exist for every transform: closed forms for the
//! supported density families (the default) and a panel-adaptive
//! Gauss–Kronrod rule on a truncated interval, kept as an independent check.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::matcore::{self, diag, kron, Matrix, Vector};
use crate::model::{JumpDensity, MmLevyModel};

/// Tolerance on sign/row-sum preconditions of the integrals.
pub const PRECONDITION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransformMethod {
    #[default]
    ClosedForm,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Tail mass left out by the finite upper limit of the adaptive path.
    pub truncation_tail: f64,
    pub method: TransformMethod,
    /// Panel budget for the adaptive path.
    pub max_panels: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            truncation_tail: 1e-16,
            method: TransformMethod::ClosedForm,
            max_panels: 4000,
        }
    }
}

impl QuadSettings {
    pub fn adaptive() -> Self {
        QuadSettings {
            method: TransformMethod::Adaptive,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.truncation_tail > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "quadrature tolerances must be positive: {self:?}"
            )))
        }
    }
}

/// What multiplies `e^{Yx}` under the integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// The density itself: `∫ d(x) e^{Yx} dx`.
    Density,
    /// The tail mass: `∫ (∫_x^∞ d) e^{Yx} dx = ∫ d(x) ∫_0^x e^{Ys} ds dx`.
    Tail,
}

// Gauss–Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

struct Panel {
    a: f64,
    b: f64,
    value: Matrix,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn gk15<F>(f: &F, a: f64, b: f64) -> Result<Panel>
where
    F: Fn(f64) -> Result<Matrix>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kron_sum = &fc * WGK[7];
    let mut gauss_sum = &fc * WG[3];
    for k in 0..7 {
        let dx = h * XGK[k];
        let f1 = f(c - dx)?;
        let f2 = f(c + dx)?;
        let pair = f1 + f2;
        kron_sum += &pair * WGK[k];
        if k % 2 == 1 {
            gauss_sum += &pair * WG[k / 2];
        }
    }
    let value = kron_sum * h;
    let gauss = gauss_sum * h;
    let err = matcore::max_abs_diff(&value, &gauss);
    Ok(Panel { a, b, value, err })
}

/// Adaptive Gauss–Kronrod integration of a matrix-valued function over the
/// given consecutive breakpoints. The error is measured in the max norm.
pub fn integrate_panels<F>(f: F, breaks: &[f64], s: &QuadSettings) -> Result<Matrix>
where
    F: Fn(f64) -> Result<Matrix>,
{
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "integration breakpoints must be strictly increasing".into(),
        ));
    }
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        heap.push(gk15(&f, w[0], w[1])?);
    }
    loop {
        let total_err: f64 = heap.iter().map(|p| p.err).sum();
        let scale = heap
            .iter()
            .fold(None, |acc: Option<Matrix>, p| match acc {
                None => Some(p.value.clone()),
                Some(m) => Some(m + &p.value),
            })
            .map(|m| m.amax())
            .unwrap_or(0.0);
        if total_err <= s.abs_tol.max(s.rel_tol * scale) {
            break;
        }
        if heap.len() >= s.max_panels {
            return Err(Error::NoConvergence("adaptive quadrature panel budget"));
        }
        let worst = heap.pop().expect("nonempty panel heap");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // panel cannot be split further; accept it
            heap.push(Panel { err: 0.0, ..worst });
            continue;
        }
        heap.push(gk15(&f, worst.a, mid)?);
        heap.push(gk15(&f, mid, worst.b)?);
    }
    // fixed summation order
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut it = panels.into_iter();
    let first = it.next().expect("nonempty panel list").value;
    Ok(it.fold(first, |acc, p| acc + p.value))
}

/// Adaptive integral over a finite interval `[a, b]`.
pub fn integrate<F>(f: F, a: f64, b: f64, s: &QuadSettings) -> Result<Matrix>
where
    F: Fn(f64) -> Result<Matrix>,
{
    integrate_panels(f, &[a, b], s)
}

/// Smallest `x` (up to bisection accuracy) with `g(x) < eps`, for
/// decreasing `g`.
fn horizon<G>(g: G, eps: f64) -> Result<f64>
where
    G: Fn(f64) -> Result<f64>,
{
    let mut hi = 1.0;
    let mut steps = 0;
    while g(hi)? >= eps {
        hi *= 2.0;
        steps += 1;
        if steps > 60 {
            return Err(Error::Divergent("density tail does not decay".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? >= eps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-6 * hi {
            break;
        }
    }
    Ok(hi)
}

/// Upper limit used by the adaptive path for the given kernel.
pub fn truncation_point(d: &JumpDensity, kernel: Kernel, s: &QuadSettings) -> Result<f64> {
    match kernel {
        Kernel::Density => horizon(|x| d.tail(x), s.truncation_tail),
        Kernel::Tail => horizon(|x| d.tail_integral(x), s.truncation_tail),
    }
}

fn check_stable(d: &JumpDensity, abscissa: f64) -> Result<()> {
    let decay = d.decay_rate()?;
    if abscissa >= decay - 1e-12 * decay.max(1.0) {
        return Err(Error::Divergent(format!(
            "exponent has spectral abscissa {abscissa:e}, density decays at rate {decay:e}"
        )));
    }
    Ok(())
}

fn ph_closed_form(init: &Vector, gen: &Matrix, exit: &Vector, y: &Matrix) -> Result<Matrix> {
    let n = y.nrows();
    let ell = gen.nrows();
    let id_n = Matrix::identity(n, n);
    let lhs = -(kron(gen, &id_n) + kron(&Matrix::identity(ell, ell), y));
    let rhs = kron(&Matrix::from_column_slice(ell, 1, exit.as_slice()), &id_n);
    let x = matcore::solve(&lhs, &rhs, "Kronecker-sum transform")?;
    let mut out = Matrix::zeros(n, n);
    for k in 0..ell {
        if init[k] != 0.0 {
            out += x.rows(k * n, n) * init[k];
        }
    }
    Ok(out)
}

fn closed_form(d: &JumpDensity, y: &Matrix, kernel: Kernel) -> Result<Matrix> {
    let n = y.nrows();
    match d {
        JumpDensity::None => Ok(Matrix::zeros(n, n)),
        JumpDensity::Exponential { rate, weight } => {
            let lhs = Matrix::identity(n, n) * *rate - y;
            let inv = matcore::inverse(&lhs, "exponential transform")?;
            Ok(match kernel {
                Kernel::Density => inv * (weight * rate),
                Kernel::Tail => inv * *weight,
            })
        }
        JumpDensity::PhaseType { init, gen, weight } => {
            let ell = gen.nrows();
            let exit = match kernel {
                Kernel::Density => -(gen * matcore::ones(ell)),
                Kernel::Tail => matcore::ones(ell),
            };
            Ok(ph_closed_form(init, gen, &exit, y)? * *weight)
        }
    }
}

fn adaptive(d: &JumpDensity, y: &Matrix, kernel: Kernel, s: &QuadSettings) -> Result<Matrix> {
    let n = y.nrows();
    if d.is_none() {
        return Ok(Matrix::zeros(n, n));
    }
    let x_max = truncation_point(d, kernel, s)?;
    adaptive_to(d, y, kernel, s, x_max)
}

/// Adaptive path with an explicit upper limit.
pub fn adaptive_to(
    d: &JumpDensity,
    y: &Matrix,
    kernel: Kernel,
    s: &QuadSettings,
    x_max: f64,
) -> Result<Matrix> {
    // geometric initial panels resolve both the fast start and the long tail
    let mut breaks = vec![0.0];
    breaks.extend((0..=24).rev().map(|k| x_max * 0.5f64.powi(k)));
    let f = |x: f64| -> Result<Matrix> {
        let w = match kernel {
            Kernel::Density => d.pdf(x)?,
            Kernel::Tail => d.tail(x)?,
        };
        Ok(matcore::expm(&(y * x))? * w)
    };
    integrate_panels(f, &breaks, s)
}

/// `∫₀^∞ d(x) e^{Yx} dx`.
pub fn exp_transform(d: &JumpDensity, y: &Matrix, s: &QuadSettings) -> Result<Matrix> {
    transform(d, y, Kernel::Density, s)
}

/// `∫₀^∞ d(x) ∫₀^x e^{Yu} du dx`.
pub fn tail_transform(d: &JumpDensity, y: &Matrix, s: &QuadSettings) -> Result<Matrix> {
    transform(d, y, Kernel::Tail, s)
}

fn transform(d: &JumpDensity, y: &Matrix, kernel: Kernel, s: &QuadSettings) -> Result<Matrix> {
    matcore::ensure_square(y)?;
    if d.is_none() {
        return Ok(Matrix::zeros(y.nrows(), y.nrows()));
    }
    check_stable(d, matcore::max_real_eigenvalue(y)?)?;
    transform_unchecked(d, y, kernel, s)
}

fn transform_unchecked(
    d: &JumpDensity,
    y: &Matrix,
    kernel: Kernel,
    s: &QuadSettings,
) -> Result<Matrix> {
    match s.method {
        TransformMethod::ClosedForm => closed_form(d, y, kernel),
        TransformMethod::Adaptive => adaptive(d, y, kernel, s),
    }
}

/// Per-evaluation cache of transforms keyed by density.
pub struct TransformCache<'a> {
    y: &'a Matrix,
    kernel: Kernel,
    settings: &'a QuadSettings,
    abscissa: f64,
    entries: Vec<(&'a JumpDensity, Matrix)>,
}

impl<'a> TransformCache<'a> {
    pub fn new(y: &'a Matrix, kernel: Kernel, settings: &'a QuadSettings) -> Result<Self> {
        matcore::ensure_square(y)?;
        settings.validate()?;
        Ok(TransformCache {
            y,
            kernel,
            settings,
            abscissa: matcore::max_real_eigenvalue(y)?,
            entries: Vec::new(),
        })
    }

    pub fn get(&mut self, d: &'a JumpDensity) -> Result<&Matrix> {
        if let Some(pos) = self.entries.iter().position(|(k, _)| *k == d) {
            return Ok(&self.entries[pos].1);
        }
        let value = if d.is_none() {
            Matrix::zeros(self.y.nrows(), self.y.nrows())
        } else {
            check_stable(d, self.abscissa)?;
            transform_unchecked(d, self.y, self.kernel, self.settings)?
        };
        self.entries.push((d, value));
        Ok(&self.entries.last().expect("just pushed").1)
    }
}

/// The two jump integrals of the model at exponent `Y`.
#[derive(Debug, Clone)]
pub struct JumpTerms {
    /// `∫ Δ_ν(x) k(x, Y) dx`, row `i` taken from the transform of `ν_i`.
    pub within: Matrix,
    /// `∫ (Q∘μ(x)) k(x, Y) dx`.
    pub switch: Matrix,
}

pub fn jump_terms(m: &MmLevyModel, y: &Matrix, s: &QuadSettings, kernel: Kernel) -> Result<JumpTerms> {
    let n = m.n();
    let mut cache = TransformCache::new(y, kernel, s)?;
    let mut within = Matrix::zeros(n, n);
    for (i, d) in m.nu.iter().enumerate() {
        if d.is_none() {
            continue;
        }
        let t = cache.get(d)?;
        within.row_mut(i).copy_from(&t.row(i));
    }
    let mut switch = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = &m.mu[i][j];
            if i == j || d.is_none() || m.q[(i, j)] == 0.0 {
                continue;
            }
            let qij = m.q[(i, j)];
            let t = cache.get(d)?;
            let contrib = t.row(j) * qij;
            let mut row = switch.row_mut(i);
            row += contrib;
        }
    }
    Ok(JumpTerms { within, switch })
}

fn check_substochastic(w: &Matrix, what: &str) -> Result<()> {
    if w.iter().any(|&x| x < -PRECONDITION_TOL)
        || matcore::row_sums(w).iter().any(|&r| r > 1.0 + PRECONDITION_TOL)
    {
        return Err(Error::Precondition(format!(
            "{what}: W must be nonnegative and substochastic"
        )));
    }
    Ok(())
}

/// `Y = τ⁻¹(W − I)`.
pub fn w_to_exponent(tau: f64, w: &Matrix) -> Matrix {
    let n = w.nrows();
    (w - Matrix::identity(n, n)) / tau
}

/// `∫Δ_ν(x)(e^{Yx} − I)dx`.
pub fn h_at(m: &MmLevyModel, y: &Matrix, s: &QuadSettings) -> Result<Matrix> {
    let t = jump_terms(m, y, s, Kernel::Density)?;
    Ok(t.within - diag(&m.jump_rates()))
}

/// `Q∘U(0) + ∫(Q∘μ(x))e^{Yx}dx`.
pub fn k_at(m: &MmLevyModel, y: &Matrix, s: &QuadSettings) -> Result<Matrix> {
    let t = jump_terms(m, y, s, Kernel::Density)?;
    Ok(m.q.component_mul(&m.u0) + t.switch)
}

pub fn h_of(m: &MmLevyModel, tau: f64, w: &Matrix, s: &QuadSettings) -> Result<Matrix> {
    check_tau(tau)?;
    check_substochastic(w, "H(tau, W)")?;
    h_at(m, &w_to_exponent(tau, w), s)
}

pub fn k_of(m: &MmLevyModel, tau: f64, w: &Matrix, s: &QuadSettings) -> Result<Matrix> {
    check_tau(tau)?;
    check_substochastic(w, "K(tau, W)")?;
    k_at(m, &w_to_exponent(tau, w), s)
}

/// `H(τ, W) + K(τ, W)` from one set of transforms.
pub fn h_plus_k(m: &MmLevyModel, tau: f64, w: &Matrix, s: &QuadSettings) -> Result<Matrix> {
    check_tau(tau)?;
    let y = w_to_exponent(tau, w);
    let t = jump_terms(m, &y, s, Kernel::Density)?;
    Ok(t.within - diag(&m.jump_rates()) + m.q.component_mul(&m.u0) + t.switch)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")))
    }
}

/// `(Q − Δ_q)∘U(0)`: phase-switch part without the diagonal.
pub fn offdiag_atom(m: &MmLevyModel) -> Matrix {
    let mut k = m.q.component_mul(&m.u0);
    k.fill_diagonal(0.0);
    k
}

/// `Ĉ(X) = (Q − Δ_q)∘U(0) + ∫Δ_ν(x)e^{(X−Δ_b)x}dx + ∫(Q∘μ(x))e^{(X−Δ_b)x}dx`.
///
/// Requires `X − Δ_b` to be a subgenerator: nonnegative off-diagonal
/// entries of `X` and `X 1 ≤ b`.
pub fn c_hat(m: &MmLevyModel, x: &Matrix, b: &[f64], s: &QuadSettings) -> Result<Matrix> {
    let n = m.n();
    if x.shape() != (n, n) || b.len() != n {
        return Err(Error::Dimension(format!(
            "C-hat: X is {}x{}, b has {}, model has {n} phases",
            x.nrows(),
            x.ncols(),
            b.len()
        )));
    }
    let sums = matcore::row_sums(x);
    for i in 0..n {
        if sums[i] > b[i] + PRECONDITION_TOL * b[i].max(1.0) {
            return Err(Error::Precondition(format!(
                "C-hat: row {i} of X sums to {} > b = {}",
                sums[i], b[i]
            )));
        }
        for j in 0..n {
            if i != j && x[(i, j)] < -PRECONDITION_TOL {
                return Err(Error::Precondition(format!(
                    "C-hat: X has a negative off-diagonal entry at ({i}, {j})"
                )));
            }
        }
    }
    let y = x - diag(b);
    let t = jump_terms(m, &y, s, Kernel::Density)?;
    Ok(offdiag_atom(m) + t.within + t.switch)
}

/// `Λ = ∫Δ_ν(x)∫₀^x e^{Gs}ds dx + ∫(Q∘μ(x))∫₀^x e^{Gs}ds dx`.
pub fn lambda_of(m: &MmLevyModel, g: &Matrix, s: &QuadSettings) -> Result<Matrix> {
    if matcore::row_sums(g)
        .iter()
        .any(|&r| r > PRECONDITION_TOL * matcore::norm_inf(g).max(1.0))
    {
        return Err(Error::Precondition("Lambda: G has a positive row sum".into()));
    }
    let t = jump_terms(m, g, s, Kernel::Tail)?;
    Ok(t.within + t.switch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{max_abs_diff, random_subgenerator, row_sums};
    use crate::model::{preset_example1, preset_example2, Example1, Example2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
        max_abs_diff(a, b) / b.amax().max(1e-300)
    }

    #[test]
    fn exponential_transform_scalar_cases() {
        let s = QuadSettings::default();
        let d = JumpDensity::exponential(4.0, 1.0);
        let i3 = Matrix::identity(3, 3);
        let t0 = exp_transform(&d, &Matrix::zeros(3, 3), &s).unwrap();
        assert!(max_abs_diff(&t0, &i3) < 1e-15);
        let (eta, w) = (2.5, 0.3);
        let d = JumpDensity::exponential(eta, w);
        let t1 = exp_transform(&d, &(-&i3), &s).unwrap();
        assert!(max_abs_diff(&t1, &(&i3 * (w * eta / (eta + 1.0)))) < 1e-15);
    }

    #[test]
    fn divergence_detected() {
        let s = QuadSettings::default();
        let d = JumpDensity::exponential(1.0, 1.0);
        let y = Matrix::identity(2, 2) * 2.0;
        assert!(matches!(exp_transform(&d, &y, &s), Err(Error::Divergent(_))));
    }

    #[test]
    fn closed_form_matches_adaptive_on_example_densities() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ex1 = preset_example1(&Example1::default()).unwrap();
        let densities = [
            ex1.nu[0].clone(),
            JumpDensity::exponential(4.0, 1.0),
            JumpDensity::exponential(1.0, 1e-4),
        ];
        let closed = QuadSettings::default();
        let adapt = QuadSettings::adaptive();
        for d in &densities {
            for _ in 0..3 {
                let y = random_subgenerator(4, &mut rng, 0.5);
                for kernel in [Kernel::Density, Kernel::Tail] {
                    let a = transform(d, &y, kernel, &closed).unwrap();
                    let b = transform(d, &y, kernel, &adapt).unwrap();
                    assert!(rel_diff(&b, &a) < 1e-10, "{kernel:?}: {}", rel_diff(&b, &a));
                }
            }
        }
    }

    #[test]
    fn doubling_truncation_point_changes_little() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = QuadSettings::adaptive();
        let d = preset_example1(&Example1::default()).unwrap().nu[0].clone();
        let y = random_subgenerator(3, &mut rng, 0.2);
        let x = truncation_point(&d, Kernel::Density, &s).unwrap();
        let a = adaptive_to(&d, &y, Kernel::Density, &s, x).unwrap();
        let b = adaptive_to(&d, &y, Kernel::Density, &s, 2.0 * x).unwrap();
        assert!(max_abs_diff(&a, &b) < s.abs_tol);
    }

    #[test]
    fn integrate_polynomial_and_exponential() {
        let s = QuadSettings::default();
        let v = integrate(|x| Ok(Matrix::from_element(1, 1, x * x)), 0.0, 3.0, &s).unwrap();
        assert!((v[(0, 0)] - 9.0).abs() < 1e-13);
        let v = integrate(|x| Ok(Matrix::from_element(1, 1, (-x).exp())), 0.0, 40.0, &s).unwrap();
        assert!((v[(0, 0)] - (1.0 - (-40f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn expm_difference_identity() {
        // e^{(A+E)t} − e^{At} = ∫₀ᵗ e^{A(t−s)} E e^{(A+E)s} ds
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let s = QuadSettings::default();
        for n in 2..=6 {
            let a = random_subgenerator(n, &mut rng, 1.0);
            let e = random_subgenerator(n, &mut rng, 1.0) * 0.5;
            let t = rng.gen_range(0.2..3.0);
            let ae = &a + &e;
            let lhs = matcore::expm(&(&ae * t)).unwrap() - matcore::expm(&(&a * t)).unwrap();
            let rhs = integrate(
                |u| Ok(matcore::expm(&(&a * (t - u)))? * &e * matcore::expm(&(&ae * u))?),
                0.0,
                t,
                &s,
            )
            .unwrap();
            assert!(max_abs_diff(&lhs, &rhs) < 1e-8);
        }
    }

    #[test]
    fn h_vanishes_at_identity_and_on_jump_free_rows() {
        let s = QuadSettings::default();
        let ex1 = preset_example1(&Example1 { n: 4, ..Default::default() }).unwrap();
        let h = h_of(&ex1, 1.0, &Matrix::identity(4, 4), &s).unwrap();
        assert!(h.amax() < 1e-15);

        let ex2 = preset_example2(&Example2::default()).unwrap();
        let w = Matrix::from_element(3, 3, 0.2);
        let h = h_of(&ex2, 0.3, &w, &s).unwrap();
        assert!(h.rows(0, 2).amax() == 0.0);
        assert!(h.row(2).amax() > 0.0);
    }

    #[test]
    fn h_row_sums_nonpositive() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = QuadSettings::default();
        let m = preset_example1(&Example1::default()).unwrap();
        for _ in 0..10 {
            let mut w = Matrix::from_fn(8, 8, |_, _| rng.gen_range(0.0..1.0));
            for i in 0..8 {
                let r = w.row(i).sum() / rng.gen_range(0.5..1.0);
                w.row_mut(i).scale_mut(1.0 / r);
            }
            let h = h_of(&m, 1.2, &w, &s).unwrap();
            assert!(row_sums(&h).iter().all(|&x| x <= 1e-12));
        }
    }

    #[test]
    fn k_without_switch_jumps_is_q() {
        let s = QuadSettings::default();
        let m = preset_example1(&Example1 { n: 3, ..Default::default() }).unwrap();
        let k = k_of(&m, 0.5, &Matrix::from_element(3, 3, 0.1), &s).unwrap();
        assert!(max_abs_diff(&k, &m.q) == 0.0);
    }

    #[test]
    fn k_is_generator_for_stochastic_w() {
        let s = QuadSettings::default();
        let m = preset_example2(&Example2::default()).unwrap();
        let w = Matrix::from_row_slice(3, 3, &[0.5, 0.3, 0.2, 0.1, 0.8, 0.1, 0.3, 0.3, 0.4]);
        let k = k_of(&m, 0.3, &w, &s).unwrap();
        assert!(row_sums(&k).iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn k_scalar_entry_example2() {
        let s = QuadSettings::default();
        let p = Example2::default();
        let m = preset_example2(&p).unwrap();
        let tau = 0.3;
        let k = k_of(&m, tau, &Matrix::zeros(3, 3), &s).unwrap();
        let expected = p.alpha * p.eta / (p.eta + 1.0 / tau);
        assert!((k[(0, 1)] - expected).abs() < 1e-14);
        assert!((k[(1, 0)] - expected).abs() < 1e-14);
    }

    #[test]
    fn c_hat_without_jumps_and_row_bound() {
        let s = QuadSettings::default();
        let q = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]);
        let m = MmLevyModel::new(vec![-0.5, 0.3], vec![1.0, 2.0], q.clone(), vec![JumpDensity::None; 2]);
        let c = c_hat(&m, &Matrix::zeros(2, 2), &[1.0, 1.0], &s).unwrap();
        let mut expected = q;
        expected.fill_diagonal(0.0);
        assert!(max_abs_diff(&c, &expected) == 0.0);

        let m = preset_example2(&Example2::default()).unwrap();
        let b = [0.6, 1.5, 0.2];
        let lam: Vec<f64> = (0..3).map(|i| m.nu[i].mass() - m.q[(i, i)]).collect();
        // X 1 = b gives equality
        let mut x = Matrix::from_row_slice(3, 3, &[0.2, 0.2, 0.2, 0.5, 0.5, 0.5, 0.05, 0.1, 0.05]);
        let ch = c_hat(&m, &x, &b, &s).unwrap();
        for i in 0..3 {
            assert!((ch.row(i).sum() - lam[i]).abs() < 1e-12);
        }
        x *= 0.5;
        let ch = c_hat(&m, &x, &b, &s).unwrap();
        for i in 0..3 {
            assert!(ch.row(i).sum() <= lam[i] + 1e-12);
        }
        assert!(ch.iter().all(|&v| v >= 0.0));
        assert!(c_hat(&m, &(x * 4.0), &b, &s).is_err());
    }

    #[test]
    fn lambda_closed_forms() {
        let s = QuadSettings::default();
        let q = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]);
        let m = MmLevyModel::new(vec![-0.5, 0.3], vec![1.0, 2.0], q.clone(), vec![JumpDensity::None; 2]);
        let g = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.5, -0.5]);
        assert!(lambda_of(&m, &g, &s).unwrap().amax() == 0.0);

        let (eta, w) = (3.0, 0.4);
        let m = MmLevyModel::new(
            vec![-0.5, 0.3],
            vec![1.0, 2.0],
            q,
            vec![JumpDensity::exponential(eta, w), JumpDensity::None],
        );
        let l = lambda_of(&m, &Matrix::zeros(2, 2), &s).unwrap();
        assert!((l[(0, 0)] - w / eta).abs() < 1e-15);
        assert!(l[(0, 1)] == 0.0 && l.row(1).amax() == 0.0);
        assert!(lambda_of(&m, &Matrix::identity(2, 2), &s).is_err());
    }
}
