//! Dense matrix kernels and the discrete matrix-equation solvers.
//!
//! Conventions used throughout the crate:
//!
//! * DARE: `P = AᵀPA + Q − (AᵀPB + S)(R + BᵀPB)⁻¹(BᵀPA + Sᵀ)`, gain
//!   `K = (R + BᵀPB)⁻¹(BᵀPA + Sᵀ)`, closed loop `A − BK`.
//! * Lyapunov: `X = A X Aᵀ + W`.
//! * Sylvester: `U = A U B + C`.
//!
//! Square roots of symmetric positive semidefinite matrices are always the
//! unique symmetric root built from an eigendecomposition with eigenvalues
//! sorted in descending order.

use crate::scalar::{CMat, Real};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Size up to which Lyapunov and Sylvester equations are solved exactly by
/// Kronecker vectorization instead of doubling.
pub const KRONECKER_MAX_DIM: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is singular or numerically singular ({0})")]
    Singular(String),
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NotPd { min_eig: f64 },
    #[error("Lyapunov coefficient is not stable (spectral radius {radius})")]
    UnstableCoefficient { radius: f64 },
    #[error("Sylvester coefficients are not contractive (product of spectral radii {product})")]
    UnstableProduct { product: f64 },
    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),
    #[error("non-finite entries in {0}")]
    NonFinite(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
}

pub type Result<T, E = LinalgError> = std::result::Result<T, E>;

/// Convergence controls for the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    /// Relative residual bound a returned solution must satisfy.
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        // 1e-12 is below what f32 can reach; scale with the type's epsilon.
        let floor = T::eps() * T::lit(1e3);
        let tol = T::lit(1e-12);
        Self {
            tolerance: if tol > floor { tol } else { floor },
            max_iterations: 200,
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > T::zero()) {
            return Err(LinalgError::InvalidOptions("tolerance must be > 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(LinalgError::InvalidOptions("max_iterations must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_tolerance(mut self, tolerance: T) -> Self {
        self.tolerance = tolerance;
        self
    }
}

// ---------------------------------------------------------------------------
// basic kernels
// ---------------------------------------------------------------------------

pub fn sym<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

fn check_square<T: Real>(m: &DMatrix<T>, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

fn check_finite<T: Real>(m: &DMatrix<T>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite(what.into()))
    }
}

/// Largest eigenvalue modulus. Zero for an empty matrix.
pub fn spectral_radius<T: Real>(a: &DMatrix<T>) -> T {
    if a.is_empty() {
        return T::zero();
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| nalgebra::ComplexField::modulus(*z))
        .fold(T::zero(), |m, x| if x > m { x } else { m })
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
pub fn eig_sym<T: Real>(m: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(sym(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

fn psd_floor<T: Real>(values: &DVector<T>) -> T {
    let scale = values.iter().fold(T::one(), |m, x| {
        let a = x.abs();
        if a > m {
            a
        } else {
            m
        }
    });
    -(T::eps().sqrt() * scale)
}

/// Unique symmetric positive semidefinite square root.
pub fn psd_sqrt<T: Real>(x: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_square(x, "psd_sqrt argument")?;
    check_finite(x, "psd_sqrt argument")?;
    let (values, vectors) = eig_sym(x);
    if let Some(&min) = values.iter().last() {
        if min < psd_floor(&values) {
            return Err(LinalgError::NotPsd { min_eig: min.as_f64() });
        }
    }
    let roots = values.map(|v| if v > T::zero() { v.sqrt() } else { T::zero() });
    Ok(&vectors * DMatrix::from_diagonal(&roots) * vectors.transpose())
}

/// Symmetric inverse square root of a positive definite matrix.
pub fn pd_inv_sqrt<T: Real>(x: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_square(x, "pd_inv_sqrt argument")?;
    check_finite(x, "pd_inv_sqrt argument")?;
    let (values, vectors) = eig_sym(x);
    if let Some(&min) = values.iter().last() {
        let top = values[0].abs();
        if !(min > T::eps() * top * T::lit(10.0)) || !(min > T::zero()) {
            return Err(LinalgError::NotPd { min_eig: min.as_f64() });
        }
    }
    let inv_roots = values.map(|v| T::one() / v.sqrt());
    Ok(&vectors * DMatrix::from_diagonal(&inv_roots) * vectors.transpose())
}

/// Smallest eigenvalue of a symmetric matrix (`+∞` for an empty one).
pub fn min_eig_sym<T: Real>(x: &DMatrix<T>) -> T {
    let (values, _) = eig_sym(x);
    values.iter().last().copied().unwrap_or_else(|| T::max_value().unwrap())
}

pub fn is_pd<T: Real>(x: &DMatrix<T>) -> bool {
    x.nrows() == x.ncols() && pd_inv_sqrt(x).is_ok()
}

/// `λ_max(Z P)` for symmetric psd `Z`, `P`, computed as
/// `λ_max(P^{1/2} Z P^{1/2})`.
pub fn lambda_max_pair<T: Real>(z: &DMatrix<T>, p: &DMatrix<T>) -> Result<T> {
    let n = check_square(z, "Z")?;
    if p.shape() != (n, n) {
        return Err(LinalgError::DimensionMismatch(format!(
            "Z is {n}x{n} but P is {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    if n == 0 {
        return Ok(T::zero());
    }
    let z_vals = eig_sym(z).0;
    if z_vals[n - 1] < psd_floor(&z_vals) {
        return Err(LinalgError::NotPsd { min_eig: z_vals[n - 1].as_f64() });
    }
    let root = psd_sqrt(p)?;
    let (values, _) = eig_sym(&(&root * z * &root));
    let top = values[0];
    Ok(if top > T::zero() { top } else { T::zero() })
}

/// Solves `A X = B` by LU with partial pivoting.
pub fn solve_linear<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = check_square(a, "coefficient matrix")?;
    if b.nrows() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "coefficient is {n}x{n}, right-hand side has {} rows",
            b.nrows()
        )));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| LinalgError::Singular("zero pivot in LU".into()))?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(LinalgError::Singular("non-finite LU solution".into()));
    }
    Ok(x)
}

pub fn invert<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = check_square(a, "matrix to invert")?;
    solve_linear(a, &DMatrix::identity(n, n))
}

/// Largest singular value of a complex matrix (zero when empty).
pub fn sigma_max<T: Real>(m: &CMat<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

/// Smallest of the `min(rows, cols)` singular values of a complex matrix.
pub fn sigma_min<T: Real>(m: &CMat<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(T::max_value().unwrap(), |a, b| if b < a { b } else { a })
}

/// Largest eigenvalue of a Hermitian complex matrix.
pub fn lambda_max_hermitian<T: Real>(m: &CMat<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    let h = (m + m.adjoint()) * nalgebra::Complex::new(T::lit(0.5), T::zero());
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(T::min_value().unwrap(), |a, b| if b > a { b } else { a })
}

/// Smallest singular value of a real matrix (zero when empty).
pub fn sigma_min_real<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(T::max_value().unwrap(), |a, b| if b < a { b } else { a })
}

pub fn sigma_max_real<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

fn rel_norm<T: Real>(residual: &DMatrix<T>, scale: T) -> T {
    let r = residual.norm();
    if r == T::zero() {
        T::zero()
    } else {
        let floor = T::eps().powi(4);
        r / if scale > floor { scale } else { floor }
    }
}

fn max_of<T: Real>(a: T, b: T) -> T {
    if a > b {
        a
    } else {
        b
    }
}

// ---------------------------------------------------------------------------
// Lyapunov
// ---------------------------------------------------------------------------

/// Relative residual of `X = A X Aᵀ + W`.
pub fn dlyap_residual<T: Real>(a: &DMatrix<T>, w: &DMatrix<T>, x: &DMatrix<T>) -> T {
    let r = x - a * x * a.transpose() - w;
    rel_norm(&r, max_of(x.norm(), w.norm()))
}

fn check_dlyap<T: Real>(a: &DMatrix<T>, w: &DMatrix<T>) -> Result<()> {
    let n = check_square(a, "Lyapunov coefficient")?;
    if w.shape() != (n, n) {
        return Err(LinalgError::DimensionMismatch(format!(
            "Lyapunov coefficient is {n}x{n}, constant term is {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    check_finite(a, "Lyapunov coefficient")?;
    check_finite(w, "Lyapunov constant term")?;
    let radius = spectral_radius(a);
    if !(radius < T::one()) {
        return Err(LinalgError::UnstableCoefficient { radius: radius.as_f64() });
    }
    Ok(())
}

/// Exact solve of `X = A X Aᵀ + W` through `(I − A⊗A) vec X = vec W`.
pub fn solve_dlyap_kron<T: Real>(a: &DMatrix<T>, w: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_dlyap(a, w)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let lhs = DMatrix::identity(n * n, n * n) - a.kronecker(a);
    let rhs = DMatrix::from_column_slice(n * n, 1, w.as_slice());
    let v = solve_linear(&lhs, &rhs)?;
    Ok(DMatrix::from_column_slice(n, n, v.as_slice()))
}

/// Smith doubling: `X = Σ A^k W (Aᵀ)^k`, squaring `A` every step.
pub fn solve_dlyap_doubling<T: Real>(
    a: &DMatrix<T>,
    w: &DMatrix<T>,
    opts: &SolverOptions<T>,
) -> Result<DMatrix<T>> {
    check_dlyap(a, w)?;
    opts.validate()?;
    let mut ak = a.clone();
    let mut x = w.clone();
    for _ in 0..opts.max_iterations {
        let inc = &ak * &x * ak.transpose();
        let inc_norm = inc.norm();
        x = sym(&(&x + inc));
        ak = &ak * &ak;
        if inc_norm <= opts.tolerance * T::lit(1e-2) * x.norm() || inc_norm == T::zero() {
            return Ok(x);
        }
    }
    Err(LinalgError::UnstableCoefficient {
        radius: spectral_radius(a).as_f64(),
    })
}

/// Solves `X = A X Aᵀ + W` for stable `A`.
///
/// Kronecker solve up to [`KRONECKER_MAX_DIM`], doubling above. The result
/// is symmetrized when `W` is symmetric.
pub fn solve_dlyap<T: Real>(
    a: &DMatrix<T>,
    w: &DMatrix<T>,
    opts: &SolverOptions<T>,
) -> Result<DMatrix<T>> {
    opts.validate()?;
    let mut x = if a.nrows() <= KRONECKER_MAX_DIM {
        solve_dlyap_kron(a, w)?
    } else {
        solve_dlyap_doubling(a, w, opts)?
    };
    if (w - w.transpose()).norm() <= T::eps() * T::lit(16.0) * w.norm() {
        x = sym(&x);
    }
    let res = dlyap_residual(a, w, &x);
    if res > opts.tolerance {
        return Err(LinalgError::Singular(format!(
            "Lyapunov residual {:e} above tolerance",
            res.as_f64()
        )));
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Sylvester
// ---------------------------------------------------------------------------

pub fn sylvester_residual<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    u: &DMatrix<T>,
) -> T {
    let r = u - a * u * b - c;
    rel_norm(&r, max_of(u.norm(), c.norm()))
}

fn check_sylvester<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>) -> Result<()> {
    let n = check_square(a, "Sylvester left coefficient")?;
    let m = check_square(b, "Sylvester right coefficient")?;
    if c.shape() != (n, m) {
        return Err(LinalgError::DimensionMismatch(format!(
            "Sylvester constant must be {n}x{m}, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    check_finite(a, "Sylvester left coefficient")?;
    check_finite(b, "Sylvester right coefficient")?;
    check_finite(c, "Sylvester constant")?;
    let product = spectral_radius(a) * spectral_radius(b);
    if !(product < T::one()) {
        return Err(LinalgError::UnstableProduct { product: product.as_f64() });
    }
    Ok(())
}

/// Exact solve of `U = A U B + C` through `(I − Bᵀ⊗A) vec U = vec C`.
pub fn solve_sylvester_kron<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    check_sylvester(a, b, c)?;
    let (n, m) = c.shape();
    if n * m == 0 {
        return Ok(DMatrix::zeros(n, m));
    }
    let lhs = DMatrix::identity(n * m, n * m) - b.transpose().kronecker(a);
    let rhs = DMatrix::from_column_slice(n * m, 1, c.as_slice());
    let v = solve_linear(&lhs, &rhs)?;
    Ok(DMatrix::from_column_slice(n, m, v.as_slice()))
}

/// Doubling: `U = Σ A^k C B^k`.
pub fn solve_sylvester_doubling<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    opts: &SolverOptions<T>,
) -> Result<DMatrix<T>> {
    check_sylvester(a, b, c)?;
    opts.validate()?;
    let mut ak = a.clone();
    let mut bk = b.clone();
    let mut u = c.clone();
    for _ in 0..opts.max_iterations {
        let inc = &ak * &u * &bk;
        let inc_norm = inc.norm();
        u += inc;
        ak = &ak * &ak;
        bk = &bk * &bk;
        if inc_norm <= opts.tolerance * T::lit(1e-2) * u.norm() || inc_norm == T::zero() {
            return Ok(u);
        }
    }
    Err(LinalgError::UnstableProduct {
        product: (spectral_radius(a) * spectral_radius(b)).as_f64(),
    })
}

/// Solves `U = A U B + C` under `ρ(A)·ρ(B) < 1`.
pub fn solve_sylvester<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    opts: &SolverOptions<T>,
) -> Result<DMatrix<T>> {
    opts.validate()?;
    let u = if a.nrows() * b.nrows() <= KRONECKER_MAX_DIM * KRONECKER_MAX_DIM {
        solve_sylvester_kron(a, b, c)?
    } else {
        solve_sylvester_doubling(a, b, c, opts)?
    };
    let res = sylvester_residual(a, b, c, &u);
    if res > opts.tolerance {
        return Err(LinalgError::Singular(format!(
            "Sylvester residual {:e} above tolerance",
            res.as_f64()
        )));
    }
    Ok(u)
}

// ---------------------------------------------------------------------------
// Riccati
// ---------------------------------------------------------------------------

/// Stabilizing DARE solution with its gain and closed loop.
#[derive(Debug, Clone)]
pub struct DareSolution<T: Real> {
    pub p: DMatrix<T>,
    /// `K = (R + BᵀPB)⁻¹(BᵀPA + Sᵀ)`.
    pub gain: DMatrix<T>,
    /// `A − BK`.
    pub closed_loop: DMatrix<T>,
    pub residual: T,
    pub closed_loop_radius: T,
    pub iterations: usize,
}

/// Relative residual of the DARE with cross term.
pub fn dare_residual<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    s: &DMatrix<T>,
    p: &DMatrix<T>,
) -> Result<T> {
    let at = a.transpose();
    let cross = &at * p * b + s;
    let inner = r + b.transpose() * p * b;
    let corr = &cross * solve_linear(&inner, &cross.transpose())?;
    let res = p - (&at * p * a + q - corr);
    Ok(rel_norm(&res, max_of(p.norm(), q.norm())))
}

fn dare_dims<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    s: &DMatrix<T>,
) -> Result<()> {
    let n = check_square(a, "A")?;
    let m = b.ncols();
    if b.nrows() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "B must have {n} rows, has {}",
            b.nrows()
        )));
    }
    if q.shape() != (n, n) {
        return Err(LinalgError::DimensionMismatch(format!("Q must be {n}x{n}")));
    }
    if r.shape() != (m, m) {
        return Err(LinalgError::DimensionMismatch(format!("R must be {m}x{m}")));
    }
    if s.shape() != (n, m) {
        return Err(LinalgError::DimensionMismatch(format!("S must be {n}x{m}")));
    }
    for (mat, name) in [(a, "A"), (b, "B"), (q, "Q"), (r, "R"), (s, "S")] {
        check_finite(mat, name)?;
    }
    Ok(())
}

/// Structure-preserving doubling on the reduced problem
/// `(Ā, G = B R⁻¹ Bᵀ, H = Q̄)`. Returns `H_∞` and the iteration count.
fn sda<T: Real>(
    a: &DMatrix<T>,
    g: &DMatrix<T>,
    h: &DMatrix<T>,
    opts: &SolverOptions<T>,
) -> Result<(DMatrix<T>, usize)> {
    let n = a.nrows();
    let eye = DMatrix::<T>::identity(n, n);
    let (mut ak, mut gk, mut hk) = (a.clone(), sym(g), sym(h));
    for it in 1..=opts.max_iterations {
        let w = &eye + &gk * &hk;
        let w_a = solve_linear(&w, &ak)
            .map_err(|_| LinalgError::NoStabilizingSolution("singular doubling step".into()))?;
        let w_g = solve_linear(&w, &gk)
            .map_err(|_| LinalgError::NoStabilizingSolution("singular doubling step".into()))?;
        let a_next = &ak * &w_a;
        let g_next = sym(&(&gk + &ak * &w_g * ak.transpose()));
        let h_next = sym(&(&hk + ak.transpose() * &hk * &w_a));
        if !(a_next.iter().chain(g_next.iter()).chain(h_next.iter())).all(|x| x.is_finite()) {
            return Err(LinalgError::NoStabilizingSolution("doubling diverged".into()));
        }
        let dh = (&h_next - &hk).norm();
        let hn = h_next.norm();
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if dh == T::zero() || dh <= opts.tolerance * T::lit(1e-2) * hn {
            return Ok((hk, it));
        }
    }
    Err(LinalgError::NoStabilizingSolution(format!(
        "doubling did not converge in {} iterations",
        opts.max_iterations
    )))
}

fn dare_gain<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    r: &DMatrix<T>,
    s: &DMatrix<T>,
    p: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let inner = r + b.transpose() * p * b;
    let rhs = b.transpose() * p * a + s.transpose();
    solve_linear(&inner, &rhs).map_err(|_| {
        LinalgError::NoStabilizingSolution("R + BᵀPB is singular at the solution".into())
    })
}

/// Newton (Hewer) refinement from a stabilizing gain.
fn dare_newton<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    s: &DMatrix<T>,
    mut gain: DMatrix<T>,
    opts: &SolverOptions<T>,
) -> Result<DMatrix<T>> {
    let mut p_prev: Option<DMatrix<T>> = None;
    for _ in 0..opts.max_iterations.min(60) {
        let acl = a - b * &gain;
        let w = q - s * &gain - gain.transpose() * s.transpose() + gain.transpose() * r * &gain;
        let p = sym(&solve_dlyap_kron_or_doubling(&acl.transpose(), &sym(&w), opts)?);
        gain = dare_gain(a, b, r, s, &p)?;
        if let Some(prev) = &p_prev {
            let d = (&p - prev).norm();
            if d <= opts.tolerance * T::lit(1e-2) * p.norm() || d == T::zero() {
                return Ok(p);
            }
        }
        p_prev = Some(p);
    }
    p_prev.ok_or_else(|| LinalgError::NoStabilizingSolution("Newton produced no iterate".into()))
}

fn solve_dlyap_kron_or_doubling<T: Real>(
    a: &DMatrix<T>,
    w: &DMatrix<T>,
    opts: &SolverOptions<T>,
) -> Result<DMatrix<T>> {
    if a.nrows() <= KRONECKER_MAX_DIM {
        solve_dlyap_kron(a, w)
    } else {
        solve_dlyap_doubling(a, w, opts)
    }
    .map_err(|e| LinalgError::NoStabilizingSolution(format!("Newton step failed: {e}")))
}

fn finish_dare<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    s: &DMatrix<T>,
    p: DMatrix<T>,
    iterations: usize,
) -> Result<DareSolution<T>> {
    let gain = dare_gain(a, b, r, s, &p)?;
    let closed_loop = a - b * &gain;
    let radius = spectral_radius(&closed_loop);
    let residual = dare_residual(a, b, q, r, s, &p)?;
    Ok(DareSolution {
        p,
        gain,
        closed_loop,
        residual,
        closed_loop_radius: radius,
        iterations,
    })
}

/// General DARE with cross term `S` and arbitrary (invertible) `R`.
///
/// Doubling first; a stabilizing gain from that run seeds Newton polishing
/// when the residual misses the tolerance.
pub fn solve_dare_general<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    s: &DMatrix<T>,
    opts: &SolverOptions<T>,
) -> Result<DareSolution<T>> {
    opts.validate()?;
    dare_dims(a, b, q, r, s)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(DareSolution {
            p: DMatrix::zeros(0, 0),
            gain: DMatrix::zeros(b.ncols(), 0),
            closed_loop: DMatrix::zeros(0, 0),
            residual: T::zero(),
            closed_loop_radius: T::zero(),
            iterations: 0,
        });
    }
    let r_inv = invert(r).map_err(|_| LinalgError::Singular("R is singular".into()))?;
    let a_bar = a - b * &r_inv * s.transpose();
    let q_bar = sym(&(q - s * &r_inv * s.transpose()));
    let g = sym(&(b * &r_inv * b.transpose()));

    let mut candidate = match sda(&a_bar, &g, &q_bar, opts) {
        Ok((p, it)) => finish_dare(a, b, q, r, s, p, it).ok(),
        Err(_) => None,
    };

    let good = |c: &Option<DareSolution<T>>| {
        c.as_ref()
            .map(|c| c.closed_loop_radius < T::one() && c.residual <= opts.tolerance)
            .unwrap_or(false)
    };
    if good(&candidate) {
        return Ok(candidate.unwrap());
    }

    // Newton fallback, seeded with the doubling gain when it stabilizes and
    // with the zero gain when A itself is stable.
    let mut seeds = Vec::new();
    if let Some(c) = &candidate {
        if c.closed_loop_radius < T::one() {
            seeds.push(c.gain.clone());
        }
    }
    if spectral_radius(a) < T::one() {
        seeds.push(DMatrix::zeros(b.ncols(), n));
    }
    for seed in seeds {
        if let Ok(p) = dare_newton(a, b, q, r, s, seed, opts) {
            if let Ok(sol) = finish_dare(a, b, q, r, s, p, opts.max_iterations) {
                if sol.closed_loop_radius < T::one() && sol.residual <= opts.tolerance {
                    return Ok(sol);
                }
                if candidate
                    .as_ref()
                    .map(|c| sol.residual < c.residual)
                    .unwrap_or(true)
                {
                    candidate = Some(sol);
                }
            }
        }
    }
    match candidate {
        Some(c) if !(c.closed_loop_radius < T::one()) => Err(LinalgError::NoStabilizingSolution(
            format!("closed-loop spectral radius {}", c.closed_loop_radius.as_f64()),
        )),
        Some(c) => Err(LinalgError::NoStabilizingSolution(format!(
            "residual {:e} above tolerance",
            c.residual.as_f64()
        ))),
        None => Err(LinalgError::NoStabilizingSolution(
            "doubling iteration failed".into(),
        )),
    }
}

/// Stabilizing solution of `P = AᵀPA + Q − AᵀPB(R + BᵀPB)⁻¹BᵀPA`.
pub fn solve_dare<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    opts: &SolverOptions<T>,
) -> Result<DareSolution<T>> {
    let s = DMatrix::zeros(a.nrows(), b.ncols());
    solve_dare_general(a, b, q, r, &s, opts)
}

/// Kronecker product helper kept for tests and oracles.
pub fn kron<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    a.kronecker(b)
}

/// Moore-Penrose left inverse `(BᵀB)⁻¹Bᵀ` of a full column rank matrix.
pub fn left_inverse<T: Real>(b: &DMatrix<T>) -> Result<DMatrix<T>> {
    solve_linear(&(b.transpose() * b), &b.transpose())
}

/// Block-diagonal concatenation.
pub fn block_diag<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// Stacks blocks vertically; all must share the column count.
pub fn vstack<T: Real>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r0, 0), b.shape()).copy_from(*b);
        r0 += b.nrows();
    }
    out
}

/// Concatenates blocks horizontally; all must share the row count.
pub fn hstack<T: Real>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c0), b.shape()).copy_from(*b);
        c0 += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn opts() -> SolverOptions<f64> {
        SolverOptions::default()
    }

    fn rand_mat(seed: u64, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
        // small LCG so the unit tests do not depend on the rand crate
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        DMatrix::from_fn(r, c, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) * scale
        })
    }

    #[test]
    fn scalar_dare_zero_dynamics_returns_q() {
        let one = dmatrix![1.0];
        let sol = solve_dare(&dmatrix![0.0], &one, &one, &one, &opts()).unwrap();
        assert!((sol.p[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_dare_matches_quadratic_root() {
        // P² − 0.25P − 1 = 0
        let expected = (0.25 + 4.0625f64.sqrt()) / 2.0;
        let one = dmatrix![1.0];
        let sol = solve_dare(&dmatrix![0.5], &one, &one, &one, &opts()).unwrap();
        assert!((sol.p[(0, 0)] - expected).abs() < 1e-13);
        assert!((expected - 1.1327822).abs() < 1e-7);
        assert!(sol.closed_loop_radius < 1.0);
    }

    #[test]
    fn dare_without_input_is_lyapunov() {
        let a = rand_mat(3, 4, 4, 0.3);
        let q = {
            let x = rand_mat(4, 4, 4, 1.0);
            &x * x.transpose() + DMatrix::identity(4, 4)
        };
        let b = DMatrix::zeros(4, 2);
        let r = DMatrix::identity(2, 2);
        let p = solve_dare(&a, &b, &q, &r, &opts()).unwrap().p;
        let x = solve_dlyap(&a.transpose(), &q, &opts()).unwrap();
        assert!((p - x).norm() < 1e-10);
    }

    #[test]
    fn dare_unstabilizable_is_rejected() {
        let a = dmatrix![1.5, 0.0; 0.0, 0.5];
        let b = dmatrix![0.0; 1.0];
        let err = solve_dare(&a, &b, &DMatrix::identity(2, 2), &dmatrix![1.0], &opts());
        assert!(matches!(err, Err(LinalgError::NoStabilizingSolution(_))));
    }

    #[test]
    fn dare_dimension_mismatch() {
        let err = solve_dare(
            &DMatrix::<f64>::identity(2, 2),
            &DMatrix::zeros(3, 1),
            &DMatrix::identity(2, 2),
            &dmatrix![1.0],
            &opts(),
        );
        assert!(matches!(err, Err(LinalgError::DimensionMismatch(_))));
    }

    #[test]
    fn dlyap_examples() {
        let x = solve_dlyap(&DMatrix::zeros(2, 2), &DMatrix::identity(2, 2), &opts()).unwrap();
        assert!((x - DMatrix::<f64>::identity(2, 2)).norm() < 1e-15);

        let x = solve_dlyap(&dmatrix![0.23443], &dmatrix![0.46888], &opts()).unwrap();
        assert!((x[(0, 0)] - 0.46888 / (1.0 - 0.23443f64.powi(2))).abs() < 1e-14);
        assert!((x[(0, 0)] - 0.49615).abs() < 1e-5);

        let a = rand_mat(9, 3, 3, 0.4);
        let x = solve_dlyap(&a, &DMatrix::zeros(3, 3), &opts()).unwrap();
        assert_eq!(x.norm(), 0.0);
    }

    #[test]
    fn dlyap_rejects_unstable() {
        let err = solve_dlyap(&dmatrix![1.0], &dmatrix![1.0], &opts());
        assert!(matches!(err, Err(LinalgError::UnstableCoefficient { .. })));
    }

    #[test]
    fn sylvester_examples() {
        let c = rand_mat(5, 2, 3, 1.0);
        let u = solve_sylvester(&DMatrix::zeros(2, 2), &rand_mat(6, 3, 3, 0.5), &c, &opts())
            .unwrap();
        assert!((u - &c).norm() < 1e-15);

        let u = solve_sylvester(
            &rand_mat(7, 2, 2, 0.4),
            &rand_mat(8, 3, 3, 0.4),
            &DMatrix::zeros(2, 3),
            &opts(),
        )
        .unwrap();
        assert_eq!(u.norm(), 0.0);

        let u = solve_sylvester(&dmatrix![0.2], &dmatrix![0.3], &dmatrix![1.0], &opts()).unwrap();
        assert!((u[(0, 0)] - 1.0 / 0.94).abs() < 1e-15);
    }

    #[test]
    fn sylvester_rejects_expanding_product() {
        let err = solve_sylvester(&dmatrix![2.0], &dmatrix![0.6], &dmatrix![1.0], &opts());
        assert!(matches!(err, Err(LinalgError::UnstableProduct { .. })));
    }

    #[test]
    fn lambda_max_pair_examples() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert!((lambda_max_pair(&i, &i).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(lambda_max_pair(&DMatrix::zeros(3, 3), &i).unwrap(), 0.0);
        let v: f64 = lambda_max_pair(&dmatrix![0.49615], &dmatrix![2.58634]).unwrap();
        assert!((v - 0.49615 * 2.58634).abs() < 1e-12);
        assert!((v - 1.28322).abs() < 1e-5);
    }

    #[test]
    fn lambda_max_pair_rejects_indefinite() {
        let z = dmatrix![1.0, 0.0; 0.0, -1.0];
        assert!(matches!(
            lambda_max_pair(&z, &DMatrix::identity(2, 2)),
            Err(LinalgError::NotPsd { .. })
        ));
    }

    #[test]
    fn psd_sqrt_examples() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert!((psd_sqrt(&i).unwrap() - &i).norm() < 1e-15);
        let d = psd_sqrt(&dmatrix![4.0, 0.0; 0.0, 9.0]).unwrap();
        assert!((d - dmatrix![2.0, 0.0; 0.0, 3.0]).norm() < 1e-14);
        assert!(psd_sqrt(&dmatrix![1.0, 0.0; 0.0, -1.0]).is_err());
        let z: CMat<f64> = CMat::zeros(2, 3);
        assert_eq!(sigma_max(&z), 0.0);
    }

    #[test]
    fn inverse_of_singular_fails() {
        let s = dmatrix![1.0, 2.0; 2.0, 4.0];
        assert!(matches!(invert(&s), Err(LinalgError::Singular(_))));
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let a = dmatrix![0.0, -0.8; 0.8, 0.0];
        assert!((spectral_radius::<f64>(&a) - 0.8).abs() < 1e-14);
    }

    #[test]
    fn f32_scalar_dare() {
        let one = dmatrix![1.0f32];
        let sol = solve_dare(&dmatrix![0.5f32], &one, &one, &one, &SolverOptions::default()).unwrap();
        assert!((sol.p[(0, 0)] - 1.132_782_2).abs() < 1e-5);
    }
}
