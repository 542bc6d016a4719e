//! Dense real matrix kernels used throughout the solvers.
//!
//! Everything works on [`Matrix`] (`nalgebra::DMatrix<f64>`). The
//! exponential uses scaling and squaring with diagonal Padé approximants,
//! eigenvalues come from a real Schur factorisation (Hessenberg reduction
//! followed by shifted QR).

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default tolerance for the structural predicates.
pub const STRUCTURE_TOL: f64 = 1e-10;

/// Entry threshold for the support graph used by the irreducibility test.
pub const SUPPORT_TOL: f64 = 1e-12;

pub(crate) fn ensure_square(a: &Matrix) -> Result<usize> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

/// Maximum absolute row sum.
pub fn norm_inf(a: &Matrix) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn norm_one(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest entrywise absolute difference.
pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn row_sums(a: &Matrix) -> Vector {
    Vector::from_iterator(a.nrows(), a.row_iter().map(|r| r.sum()))
}

pub fn diag(v: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_column_slice(v))
}

pub fn ones(n: usize) -> Vector {
    Vector::from_element(n, 1.0)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            out.view_mut((i * br, j * bc), (br, bc))
                .copy_from(&(b * s));
        }
    }
    out
}

/// Solves `a x = b` by LU with partial pivoting, failing on an exactly or
/// numerically singular pivot.
pub fn solve(a: &Matrix, b: &Matrix, what: &'static str) -> Result<Matrix> {
    ensure_square(a)?;
    if b.nrows() != a.nrows() {
        return Err(Error::Dimension(format!(
            "{what}: lhs is {}x{}, rhs has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for k in 0..u.nrows() {
        let p = u[(k, k)].abs();
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if !(lo > hi * 1e-15) {
        return Err(Error::Singular(what));
    }
    let x = lu.solve(b).ok_or(Error::Singular(what))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow(what));
    }
    Ok(x)
}

pub fn inverse(a: &Matrix, what: &'static str) -> Result<Matrix> {
    let n = ensure_square(a)?;
    solve(a, &Matrix::identity(n, n), what)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// 1-norm bounds below which the order-m approximant is accurate to unit roundoff.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant whose order is picked from the 1-norm of `a`.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    let n = ensure_square(a)?;
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Overflow("expm input"));
    }
    let ident = Matrix::identity(n, n);
    let norm = norm_one(a);

    for &(m, theta) in &THETA {
        if norm <= theta {
            let coef: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return pade_low(a, coef, &ident);
        }
    }

    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-s);
    let mut r = pade13(&scaled, &ident)?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Overflow("expm"));
    }
    Ok(r)
}

fn pade_low(a: &Matrix, c: &[f64], ident: &Matrix) -> Result<Matrix> {
    let a2 = a * a;
    let mut even = ident * c[0];
    let mut odd = ident * c[1];
    let mut pow = ident.clone();
    let m = c.len() - 1;
    for k in 1..=m / 2 {
        pow = &pow * &a2;
        even += &pow * c[2 * k];
        if 2 * k + 1 <= m {
            odd += &pow * c[2 * k + 1];
        }
    }
    let u = a * odd;
    solve(&(&even - &u), &(&even + &u), "expm Pade denominator")
}

fn pade13(a: &Matrix, ident: &Matrix) -> Result<Matrix> {
    let b = &PADE13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * &inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + ident * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * &inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + ident * b[0];
    solve(&(&v - &u), &(&v + &u), "expm Pade denominator")
}

/// All eigenvalues of a real square matrix.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex<f64>>> {
    ensure_square(a)?;
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or(Error::NoConvergence("Schur factorization"))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Smallest real part over the spectrum.
pub fn min_real_eigenvalue(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min))
}

pub fn max_real_eigenvalue(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Solves `Δ_c X + X Δ_b = C` entrywise, `X_ij = C_ij / (c_i + b_j)`.
pub fn diag_sylvester_solve(c: &[f64], b: &[f64], rhs: &Matrix) -> Result<Matrix> {
    if rhs.nrows() != c.len() || rhs.ncols() != b.len() {
        return Err(Error::Dimension(format!(
            "diagonal Sylvester: rhs {}x{}, diagonals {} and {}",
            rhs.nrows(),
            rhs.ncols(),
            c.len(),
            b.len()
        )));
    }
    let mut x = rhs.clone();
    for i in 0..c.len() {
        for j in 0..b.len() {
            let d = c[i] + b[j];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Singular("diagonal Sylvester operator"));
            }
            x[(i, j)] /= d;
        }
    }
    Ok(x)
}

/// Solves `Δ_c X − X A = C` for a dense `A`, one row at a time:
/// row `i` satisfies `(c_i I − A)ᵀ x_i = c_i`.
pub fn diag_left_sylvester_solve(c: &[f64], a: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let n = ensure_square(a)?;
    if rhs.nrows() != c.len() || rhs.ncols() != n {
        return Err(Error::Dimension(format!(
            "Sylvester: rhs {}x{}, left diagonal {}, right {}x{}",
            rhs.nrows(),
            rhs.ncols(),
            c.len(),
            n,
            n
        )));
    }
    let at = a.transpose();
    let mut x = Matrix::zeros(c.len(), n);
    for (i, &ci) in c.iter().enumerate() {
        let lhs = Matrix::identity(n, n) * ci - &at;
        let r = rhs.row(i).transpose();
        let xi = solve(&lhs, &Matrix::from_column_slice(n, 1, r.as_slice()), "Sylvester row")?;
        x.row_mut(i).copy_from(&xi.transpose());
    }
    Ok(x)
}

/// Sign and spectral properties of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralReport {
    pub is_nonnegative: bool,
    pub is_stochastic_rows: bool,
    pub is_substochastic_rows: bool,
    pub is_generator: bool,
    pub is_subgenerator: bool,
    pub is_z_matrix: bool,
    pub is_m_matrix: bool,
    pub is_irreducible: bool,
    /// Smallest eigenvalue real part, kept so callers can tell singular
    /// from nonsingular M-matrices.
    pub min_eig_re: f64,
    pub tol: f64,
}

pub fn structure_check(a: &Matrix, tol: f64) -> Result<StructuralReport> {
    let n = ensure_square(a)?;
    let sums = row_sums(a);
    let off = |f: &dyn Fn(f64) -> bool| {
        (0..n).all(|i| (0..n).all(|j| i == j || f(a[(i, j)])))
    };
    let off_nonneg = off(&|x| x >= -tol);
    let off_nonpos = off(&|x| x <= tol);
    let is_nonnegative = a.iter().all(|&x| x >= -tol);
    let is_substochastic_rows = is_nonnegative && sums.iter().all(|&s| s <= 1.0 + tol);
    let is_stochastic_rows = is_nonnegative && sums.iter().all(|&s| (s - 1.0).abs() <= tol);
    let is_subgenerator = off_nonneg && sums.iter().all(|&s| s <= tol);
    let is_generator = off_nonneg && sums.iter().all(|&s| s.abs() <= tol);
    let min_eig_re = min_real_eigenvalue(a)?;
    let is_m_matrix = off_nonpos && min_eig_re >= -tol;
    Ok(StructuralReport {
        is_nonnegative,
        is_stochastic_rows,
        is_substochastic_rows,
        is_generator,
        is_subgenerator,
        is_z_matrix: off_nonpos,
        is_m_matrix,
        is_irreducible: is_irreducible(a, SUPPORT_TOL),
        min_eig_re,
        tol,
    })
}

/// Strong connectivity of the directed graph with an edge `i → j`
/// whenever `|a_ij| > tol`, `i ≠ j`.
pub fn is_irreducible(a: &Matrix, tol: f64) -> bool {
    let n = a.nrows();
    if n <= 1 {
        return true;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { a[(i, j)] } else { a[(j, i)] };
                if i != j && !seen[j] && w.abs() > tol {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}


#[cfg(test)]
pub(crate) use tests::random_subgenerator;
