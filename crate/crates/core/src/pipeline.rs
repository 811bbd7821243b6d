//! Transfer-function algebra on state-space realizations and the
//! constructive steps behind the competitive-ratio controller: canonical
//! factors `Δ`, `∇`, `M`, the causal/anticausal split of `ΔK₀M⁻¹`, the
//! Nehari approximation and the controller assembly.
//!
//! Every function in this module expects an R-normalized plant (`R = I`);
//! [`crate::synthesis`] performs the normalization.

use crate::model::{LtiSystem, ModelError};
use crate::numerics::{
    self, hstack, invert, left_inverse, pd_inv_sqrt, psd_sqrt, solve_dare, solve_dare_general,
    solve_dlyap, solve_linear, solve_sylvester, spectral_radius, sym, vstack, LinalgError,
    SolverOptions,
};
use crate::scalar::{complexify, unit_circle, CMat, Cplx, Real};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("Riccati equation for {what} has no stabilizing solution: {source}")]
    Riccati {
        what: &'static str,
        #[source]
        source: LinalgError,
    },
    #[error("B_w is rank deficient (min singular value {sigma_min:e})")]
    RankDeficientBw { sigma_min: f64 },
    #[error("realization is singular at z = {re} + {im}j")]
    SingularAt { re: f64, im: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("causality mismatch: {0}")]
    Causality(String),
    #[error("{0} is not stable")]
    Unstable(&'static str),
    #[error("plant must be R-normalized before entering the pipeline")]
    NotNormalized,
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

fn riccati(what: &'static str) -> impl FnOnce(LinalgError) -> PipelineError {
    move |source| PipelineError::Riccati { what, source }
}

// ---------------------------------------------------------------------------
// realizations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Causality {
    Causal,
    StrictlyCausal,
    Anticausal,
    StrictlyAnticausal,
}

impl Causality {
    pub fn is_anticausal(self) -> bool {
        matches!(self, Causality::Anticausal | Causality::StrictlyAnticausal)
    }

    pub fn is_strict(self) -> bool {
        matches!(self, Causality::StrictlyCausal | Causality::StrictlyAnticausal)
    }

    fn with_strictness(self, strict: bool) -> Self {
        match (self.is_anticausal(), strict) {
            (false, false) => Causality::Causal,
            (false, true) => Causality::StrictlyCausal,
            (true, false) => Causality::Anticausal,
            (true, true) => Causality::StrictlyAnticausal,
        }
    }
}

/// `H = D + C(ζI − A)⁻¹B` with `ζ = z` for causal and `ζ = z⁻¹` for
/// anticausal realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferRealization<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    pub causality: Causality,
}

impl<T: Real> TransferRealization<T> {
    pub fn new(
        a: DMatrix<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        d: DMatrix<T>,
        causality: Causality,
    ) -> Result<Self> {
        let k = a.nrows();
        if a.ncols() != k || b.nrows() != k || c.ncols() != k || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(PipelineError::DimensionMismatch(format!(
                "realization blocks A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        if causality.is_strict() && d.iter().any(|x| *x != T::zero()) {
            return Err(PipelineError::Causality("strict realization with nonzero feedthrough".into()));
        }
        Ok(Self { a, b, c, d, causality })
    }

    pub fn causal(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>) -> Result<Self> {
        Self::new(a, b, c, d, Causality::Causal)
    }

    pub fn strictly_causal(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>) -> Result<Self> {
        let d = DMatrix::zeros(c.nrows(), b.ncols());
        Self::new(a, b, c, d, Causality::StrictlyCausal)
    }

    pub fn anticausal(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>) -> Result<Self> {
        Self::new(a, b, c, d, Causality::Anticausal)
    }

    /// Constant transfer function `D`.
    pub fn gain(d: DMatrix<T>) -> Self {
        let (p, m) = d.shape();
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, m),
            c: DMatrix::zeros(p, 0),
            d,
            causality: Causality::Causal,
        }
    }

    pub fn zero(outputs: usize, inputs: usize) -> Self {
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, inputs),
            c: DMatrix::zeros(outputs, 0),
            d: DMatrix::zeros(outputs, inputs),
            causality: Causality::StrictlyCausal,
        }
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_stable(&self) -> bool {
        spectral_radius(&self.a) < T::one()
    }

    /// Value at an arbitrary point `z` of the complex plane.
    pub fn eval_at(&self, z: Cplx<T>) -> Result<CMat<T>> {
        let zeta = if self.causality.is_anticausal() { Cplx::new(T::one(), T::zero()) / z } else { z };
        let mut out = complexify(&self.d);
        let k = self.states();
        if k == 0 {
            return Ok(out);
        }
        let mut lhs = complexify(&self.a).map(|x| -x);
        for i in 0..k {
            lhs[(i, i)] += zeta;
        }
        let x = lhs.lu().solve(&complexify(&self.b)).ok_or(PipelineError::SingularAt {
            re: z.re.as_f64(),
            im: z.im.as_f64(),
        })?;
        out += complexify(&self.c) * x;
        if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(PipelineError::SingularAt { re: z.re.as_f64(), im: z.im.as_f64() });
        }
        Ok(out)
    }

    /// Value at `z = e^{jω}`.
    pub fn eval(&self, omega: T) -> Result<CMat<T>> {
        self.eval_at(unit_circle(omega))
    }

    /// Product `self · other`, i.e. `other` acts first.
    pub fn series(&self, other: &Self) -> Result<Self> {
        if self.causality.is_anticausal() != other.causality.is_anticausal() {
            return Err(PipelineError::Causality("series of causal and anticausal realizations".into()));
        }
        if self.inputs() != other.outputs() {
            return Err(PipelineError::DimensionMismatch(format!(
                "series: left has {} inputs, right has {} outputs",
                self.inputs(),
                other.outputs()
            )));
        }
        let (k1, k2) = (self.states(), other.states());
        let mut a = DMatrix::zeros(k1 + k2, k1 + k2);
        a.view_mut((0, 0), (k2, k2)).copy_from(&other.a);
        a.view_mut((k2, 0), (k1, k2)).copy_from(&(&self.b * &other.c));
        a.view_mut((k2, k2), (k1, k1)).copy_from(&self.a);
        let b = vstack(&[&other.b, &(&self.b * &other.d)]);
        let c = hstack(&[&(&self.d * &other.c), &self.c]);
        let d = &self.d * &other.d;
        let strict = self.causality.is_strict() || other.causality.is_strict();
        Self::new(a, b, c, d, self.causality.with_strictness(strict))
    }

    /// Sum `self + other`.
    pub fn parallel(&self, other: &Self) -> Result<Self> {
        if self.causality.is_anticausal() != other.causality.is_anticausal() {
            return Err(PipelineError::Causality("sum of causal and anticausal realizations".into()));
        }
        if self.inputs() != other.inputs() || self.outputs() != other.outputs() {
            return Err(PipelineError::DimensionMismatch("parallel: shapes differ".into()));
        }
        let strict = self.causality.is_strict() && other.causality.is_strict();
        Self::new(
            numerics::block_diag(&self.a, &other.a),
            vstack(&[&self.b, &other.b]),
            hstack(&[&self.c, &other.c]),
            &self.d + &other.d,
            self.causality.with_strictness(strict),
        )
    }

    /// Inverse system; requires an invertible feedthrough.
    pub fn inverse(&self) -> Result<Self> {
        let d_inv = invert(&self.d)?;
        let causality = if self.causality.is_anticausal() { Causality::Anticausal } else { Causality::Causal };
        Self::new(
            &self.a - &self.b * &d_inv * &self.c,
            &self.b * &d_inv,
            -(&d_inv * &self.c),
            d_inv,
            causality,
        )
    }

    /// `L · H · R`.
    pub fn scale(&self, left: &DMatrix<T>, right: &DMatrix<T>) -> Result<Self> {
        Self::new(
            self.a.clone(),
            &self.b * right,
            left * &self.c,
            left * &self.d * right,
            self.causality,
        )
    }

    /// `H*(z^{-*})`: transposed realization with causality flipped.
    pub fn adjoint(&self) -> Self {
        let causality = match self.causality {
            Causality::Causal => Causality::Anticausal,
            Causality::StrictlyCausal => Causality::StrictlyAnticausal,
            Causality::Anticausal => Causality::Causal,
            Causality::StrictlyAnticausal => Causality::StrictlyCausal,
        };
        Self {
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
            d: self.d.transpose(),
            causality,
        }
    }

    /// Impulse-response coefficients `D, CB, CAB, …` (of `ζ^{-k}`).
    pub fn markov(&self, count: usize) -> Vec<DMatrix<T>> {
        let mut out = Vec::with_capacity(count);
        if count == 0 {
            return out;
        }
        out.push(self.d.clone());
        let mut ab = self.b.clone();
        for _ in 1..count {
            out.push(&self.c * &ab);
            ab = &self.a * ab;
        }
        out
    }
}

// ---------------------------------------------------------------------------
// plant operators and factors
// ---------------------------------------------------------------------------

fn require_normalized<T: Real>(sys: &LtiSystem<T>) -> Result<()> {
    if sys.is_normalized() {
        Ok(())
    } else {
        Err(PipelineError::NotNormalized)
    }
}

/// `F(z) = Q^{1/2}(zI − A)⁻¹B_u`.
pub fn build_f<T: Real>(sys: &LtiSystem<T>) -> Result<TransferRealization<T>> {
    TransferRealization::strictly_causal(sys.a.clone(), sys.b_u.clone(), sys.q_sqrt()?)
}

/// `G(z) = Q^{1/2}(zI − A)⁻¹B_w`.
pub fn build_g<T: Real>(sys: &LtiSystem<T>) -> Result<TransferRealization<T>> {
    TransferRealization::strictly_causal(sys.a.clone(), sys.b_w.clone(), sys.q_sqrt()?)
}

/// Stabilizing LQR data.
#[derive(Debug, Clone)]
pub struct Lqr<T: Real> {
    pub p: DMatrix<T>,
    /// `K_lqr = (I + B_uᵀPB_u)⁻¹B_uᵀPA`.
    pub k: DMatrix<T>,
    pub a_k: DMatrix<T>,
    /// `I + B_uᵀPB_u`.
    pub r_delta: DMatrix<T>,
    pub residual: T,
}

pub fn lqr<T: Real>(sys: &LtiSystem<T>, opts: &SolverOptions<T>) -> Result<Lqr<T>> {
    require_normalized(sys)?;
    let sol = solve_dare(&sys.a, &sys.b_u, &sys.q, &sys.r, opts).map_err(riccati("P"))?;
    let r_delta = sym(&(&sys.r + sys.b_u.transpose() * &sol.p * &sys.b_u));
    Ok(Lqr {
        p: sol.p,
        k: sol.gain,
        a_k: sol.closed_loop,
        r_delta,
        residual: sol.residual,
    })
}

#[derive(Debug, Clone)]
pub struct DeltaFactor<T: Real> {
    /// `Δ(z) = (I + B_uᵀPB_u)^{1/2}(I + K_lqr(zI − A)⁻¹B_u)`.
    pub delta: TransferRealization<T>,
    /// `Δ⁻¹(z) = (I − K_lqr(zI − A_K)⁻¹B_u)(I + B_uᵀPB_u)^{-1/2}`.
    pub delta_inv: TransferRealization<T>,
}

pub fn factor_delta<T: Real>(sys: &LtiSystem<T>, lqr: &Lqr<T>) -> Result<DeltaFactor<T>> {
    let root = psd_sqrt(&lqr.r_delta)?;
    let root_inv = pd_inv_sqrt(&lqr.r_delta)?;
    let delta = TransferRealization::causal(sys.a.clone(), sys.b_u.clone(), &root * &lqr.k, root)?;
    let delta_inv = TransferRealization::causal(
        lqr.a_k.clone(),
        &sys.b_u * &root_inv,
        -lqr.k.clone(),
        root_inv,
    )?;
    Ok(DeltaFactor { delta, delta_inv })
}

#[derive(Debug, Clone)]
pub struct NablaFactor<T: Real> {
    pub nabla: TransferRealization<T>,
    pub nabla_inv: TransferRealization<T>,
    /// Stabilizing solution of the dual Riccati equation.
    pub t: DMatrix<T>,
    /// `R_T = I + Q^{1/2}TQ^{1/2}`.
    pub r_t: DMatrix<T>,
    /// `K_T = ATQ^{1/2}R_T⁻¹`.
    pub k_t: DMatrix<T>,
    /// `A_T = A − K_TQ^{1/2}`.
    pub a_t: DMatrix<T>,
    /// Lyapunov solution `O` with `T = O(I − PO)⁻¹`.
    pub o: DMatrix<T>,
    pub residual: T,
}

/// Relative residual of `T = ATAᵀ + B_uB_uᵀ − ATQ^{1/2}R_T⁻¹Q^{1/2}TAᵀ`.
pub fn t_residual<T: Real>(sys: &LtiSystem<T>, t: &DMatrix<T>) -> Result<T> {
    let qh = sys.q_sqrt()?;
    let n = sys.n();
    let r_t = DMatrix::identity(n, n) + &qh * t * &qh;
    let corr = &sys.a * t * &qh * solve_linear(&r_t, &(&qh * t * sys.a.transpose()))?;
    let rhs = &sys.a * t * sys.a.transpose() + &sys.b_u * sys.b_u.transpose() - corr;
    let res = (t - rhs).norm();
    let scale = t.norm().max(sys.b_u.norm_squared());
    Ok(if res == T::zero() { res } else { res / scale.max(T::eps()) })
}

/// Solves the dual Riccati equation directly as a DARE in `(Aᵀ, Q^{1/2})`.
pub fn solve_t_direct<T: Real>(sys: &LtiSystem<T>, opts: &SolverOptions<T>) -> Result<DMatrix<T>> {
    let n = sys.n();
    let qh = sys.q_sqrt()?;
    let sol = solve_dare(
        &sys.a.transpose(),
        &qh,
        &(&sys.b_u * sys.b_u.transpose()),
        &DMatrix::identity(n, n),
        opts,
    )
    .map_err(riccati("T"))?;
    Ok(sol.p)
}

/// Dual factor, with `T` obtained from the LQR solution through a single
/// Lyapunov solve.
pub fn factor_nabla<T: Real>(sys: &LtiSystem<T>, lqr: &Lqr<T>, opts: &SolverOptions<T>) -> Result<NablaFactor<T>> {
    require_normalized(sys)?;
    let n = sys.n();
    let eye = DMatrix::<T>::identity(n, n);
    let w = sym(&(&sys.b_u * solve_linear(&lqr.r_delta, &sys.b_u.transpose())?));
    let o = solve_dlyap(&lqr.a_k, &w, opts)?;
    let t = sym(&solve_linear(&(&eye - &lqr.p * &o).transpose(), &o)?.transpose());
    let qh = sys.q_sqrt()?;
    let r_t = sym(&(&eye + &qh * &t * &qh));
    let k_t = (&sys.a * &t * &qh) * invert(&r_t)?;
    let a_t = &sys.a - &k_t * &qh;
    if spectral_radius(&a_t) >= T::one() {
        return Err(PipelineError::Unstable("A_T"));
    }
    let root = psd_sqrt(&r_t)?;
    let root_inv = pd_inv_sqrt(&r_t)?;
    let nabla = TransferRealization::causal(sys.a.clone(), &k_t * &root, qh.clone(), root.clone())?;
    let nabla_inv = TransferRealization::causal(a_t.clone(), k_t.clone(), -(&root_inv * &qh), root_inv)?;
    let residual = t_residual(sys, &t)?;
    Ok(NablaFactor { nabla, nabla_inv, t, r_t, k_t, a_t, o, residual })
}

/// Condition number above which a square `B_w` is routed to the general
/// factorization.
pub const SQUARE_COND_LIMIT: f64 = 1e8;

/// `true` when `B_w` is square and well conditioned.
pub fn is_square_bw<T: Real>(sys: &LtiSystem<T>) -> bool {
    if sys.m() != sys.n() {
        return false;
    }
    let smin = numerics::sigma_min_real(&sys.b_w);
    let smax = numerics::sigma_max_real(&sys.b_w);
    smin > T::zero() && smax / smin < T::lit(SQUARE_COND_LIMIT)
}

#[derive(Debug, Clone)]
pub struct MFactor<T: Real> {
    pub m_tf: TransferRealization<T>,
    pub m_inv_tf: TransferRealization<T>,
    /// Stabilizing solution of the `M` Riccati equation (zero for square `B_w`).
    pub m: DMatrix<T>,
    pub r_m: DMatrix<T>,
    pub k_m: DMatrix<T>,
    pub a_m: DMatrix<T>,
    /// `true` when the finite-impulse-response inverse of the square case
    /// was used for `m_tf`/`m_inv_tf`.
    pub square: bool,
    pub residual: T,
}

/// `W = Q^{1/2}R_T⁻¹Q^{1/2}`.
fn w_matrix<T: Real>(sys: &LtiSystem<T>, nabla: &NablaFactor<T>) -> Result<DMatrix<T>> {
    let qh = sys.q_sqrt()?;
    Ok(sym(&(&qh * solve_linear(&nabla.r_t, &qh)?)))
}

/// Relative residual of
/// `M = A_TᵀMA_T + A_TᵀWA_T − K_MᵀR_MK_M`.
pub fn m_residual<T: Real>(sys: &LtiSystem<T>, nabla: &NablaFactor<T>, f: &MFactor<T>) -> Result<T> {
    let w = w_matrix(sys, nabla)?;
    let at = &nabla.a_t;
    let rhs = at.transpose() * &f.m * at + at.transpose() * &w * at - f.k_m.transpose() * &f.r_m * &f.k_m;
    let res = (&f.m - rhs).norm();
    let scale = f.m.norm().max((at.transpose() * &w * at).norm());
    Ok(if res == T::zero() { res } else { res / scale.max(T::eps()) })
}

/// Factor of the clairvoyant cost `G*(I + FF*)⁻¹G`. Square `B_w` uses the
/// closed form with a finite-impulse-response inverse.
pub fn factor_m<T: Real>(sys: &LtiSystem<T>, nabla: &NablaFactor<T>, opts: &SolverOptions<T>) -> Result<MFactor<T>> {
    factor_m_with(sys, nabla, is_square_bw(sys), opts)
}

pub fn factor_m_with<T: Real>(
    sys: &LtiSystem<T>,
    nabla: &NablaFactor<T>,
    square: bool,
    opts: &SolverOptions<T>,
) -> Result<MFactor<T>> {
    require_normalized(sys)?;
    let n = sys.n();
    let m = sys.m();
    let smin = numerics::sigma_min_real(&sys.b_w);
    if m > n || !(smin > T::lit(crate::model::RANK_TOL) * numerics::sigma_max_real(&sys.b_w)) {
        return Err(PipelineError::RankDeficientBw { sigma_min: smin.as_f64() });
    }
    let qh = sys.q_sqrt()?;
    let rt_is = pd_inv_sqrt(&nabla.r_t)?;
    let at = &nabla.a_t;
    let c = &rt_is * &qh * at;
    let d = &rt_is * &qh * &sys.b_w;

    let (mm, r_m, k_m, a_m) = if square {
        let w = w_matrix(sys, nabla)?;
        let r_m = sym(&(sys.b_w.transpose() * &w * &sys.b_w));
        let k_m = solve_linear(&r_m, &(sys.b_w.transpose() * &w * at))?;
        let a_m = at - &sys.b_w * &k_m;
        (DMatrix::zeros(n, n), r_m, k_m, a_m)
    } else {
        let sol = solve_dare_general(
            at,
            &sys.b_w,
            &sym(&(c.transpose() * &c)),
            &sym(&(d.transpose() * &d)),
            &(c.transpose() * &d),
            opts,
        )
        .map_err(riccati("M"))?;
        let r_m = sym(&(d.transpose() * &d + sys.b_w.transpose() * &sol.p * &sys.b_w));
        (sol.p, r_m, sol.gain, sol.closed_loop)
    };

    let (m_tf, m_inv_tf) = if square {
        let bw_inv = invert(&sys.b_w)?;
        let rt_root = psd_sqrt(&nabla.r_t)?;
        let qh_inv = pd_inv_sqrt(&sys.q)?;
        let tail = &qh_inv * &rt_root;
        (
            TransferRealization::causal(at.clone(), sys.b_w.clone(), c.clone(), d.clone())?,
            TransferRealization::causal(DMatrix::zeros(n, n), tail.clone(), -(&bw_inv * at), &bw_inv * &tail)?,
        )
    } else {
        let rm_root = psd_sqrt(&r_m)?;
        let rm_is = pd_inv_sqrt(&r_m)?;
        (
            TransferRealization::causal(at.clone(), sys.b_w.clone(), &rm_root * &k_m, rm_root)?,
            TransferRealization::causal(a_m.clone(), &sys.b_w * &rm_is, -k_m.clone(), rm_is)?,
        )
    };
    let mut out = MFactor {
        m_tf,
        m_inv_tf,
        m: mm,
        r_m,
        k_m,
        a_m,
        square,
        residual: T::zero(),
    };
    if spectral_radius(&out.a_m) >= T::one() {
        return Err(PipelineError::Unstable("A_M"));
    }
    out.residual = m_residual(sys, nabla, &out)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// causal / anticausal split
// ---------------------------------------------------------------------------

/// Anticausal target `A(z) = −z⁻¹ Czᵀ (z⁻¹I − A_Kᵀ)⁻¹ Bn` of a Nehari
/// problem, with `Cz = B_u(I + B_uᵀPB_u)^{-1/2}`.
#[derive(Debug, Clone)]
pub struct NehariTarget<T: Real> {
    pub a_k: DMatrix<T>,
    pub cz: DMatrix<T>,
    pub bn: DMatrix<T>,
}

impl<T: Real> NehariTarget<T> {
    /// Realization in `ζ = z⁻¹`.
    pub fn realization(&self) -> Result<TransferRealization<T>> {
        let at = self.a_k.transpose();
        TransferRealization::anticausal(
            at.clone(),
            &at * &self.bn,
            -self.cz.transpose(),
            -(self.cz.transpose() * &self.bn),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition<T: Real> {
    /// `A(z)`, realized in `ζ = z⁻¹`.
    pub anticausal: TransferRealization<T>,
    /// `C₁(z) = −L B_uᵀPA(zI − A)⁻¹B_w M⁻¹(z)`, kept in factored form.
    pub c1: TransferRealization<T>,
    /// `C₂(z) = L B_uᵀU(zI − A_M)⁻¹B_wR_M^{-1/2}`.
    pub c2: TransferRealization<T>,
    /// Sylvester solution of `U = A_KᵀUA_M + PB_wK_M`.
    pub u: DMatrix<T>,
    /// `N = (P − A_KᵀU)B_w`.
    pub n: DMatrix<T>,
    pub target: NehariTarget<T>,
    pub u_residual: T,
}

/// Splits `−Δ^{-*}F*GM⁻¹` into anticausal and strictly causal parts.
pub fn decompose<T: Real>(
    sys: &LtiSystem<T>,
    lqr: &Lqr<T>,
    mf: &MFactor<T>,
    opts: &SolverOptions<T>,
) -> Result<Decomposition<T>> {
    require_normalized(sys)?;
    let l = pd_inv_sqrt(&lqr.r_delta)?;
    let cz = &sys.b_u * &l;
    let pbk = &lqr.p * &sys.b_w * &mf.k_m;
    let u = solve_sylvester(&lqr.a_k.transpose(), &mf.a_m, &pbk, opts)?;
    let u_residual = numerics::sylvester_residual(&lqr.a_k.transpose(), &mf.a_m, &pbk, &u);
    let n = (&lqr.p - lqr.a_k.transpose() * &u) * &sys.b_w;
    let rm_is = pd_inv_sqrt(&mf.r_m)?;
    let target = NehariTarget { a_k: lqr.a_k.clone(), cz: cz.clone(), bn: &n * &rm_is };
    let anticausal = target.realization()?;
    let m_inv = TransferRealization::causal(mf.a_m.clone(), &sys.b_w * &rm_is, -mf.k_m.clone(), rm_is.clone())?;
    let head = TransferRealization::strictly_causal(
        sys.a.clone(),
        sys.b_w.clone(),
        -(&l * sys.b_u.transpose() * &lqr.p * &sys.a),
    )?;
    let c1 = head.series(&m_inv)?;
    let c2 = TransferRealization::strictly_causal(mf.a_m.clone(), &sys.b_w * &rm_is, &l * sys.b_u.transpose() * &u)?;
    Ok(Decomposition { anticausal, c1, c2, u, n, target, u_residual })
}

/// Square-`B_w` split: anticausal `Ā(z)` and causal `C̄(z)`.
#[derive(Debug, Clone)]
pub struct SquareDecomposition<T: Real> {
    pub anticausal: TransferRealization<T>,
    pub causal: TransferRealization<T>,
    /// `P − A_KᵀPA_T`.
    pub n_bar: DMatrix<T>,
    pub target: NehariTarget<T>,
}

pub fn decompose_square<T: Real>(sys: &LtiSystem<T>, lqr: &Lqr<T>, nabla: &NablaFactor<T>) -> Result<SquareDecomposition<T>> {
    require_normalized(sys)?;
    let l = pd_inv_sqrt(&lqr.r_delta)?;
    let cz = &sys.b_u * &l;
    let n_bar = &lqr.p - lqr.a_k.transpose() * &lqr.p * &nabla.a_t;
    let tail = pd_inv_sqrt(&sys.q)? * psd_sqrt(&nabla.r_t)?;
    let target = NehariTarget { a_k: lqr.a_k.clone(), cz, bn: &n_bar * &tail };
    let anticausal = target.realization()?;
    let causal = TransferRealization::strictly_causal(
        sys.a.clone(),
        (&sys.a - &nabla.a_t) * &tail,
        -(&l * sys.b_u.transpose() * &lqr.p),
    )?;
    Ok(SquareDecomposition { anticausal, causal, n_bar, target })
}

// ---------------------------------------------------------------------------
// Nehari
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct NehariSolution<T: Real> {
    /// Optimal squared Nehari value `λ_max(Z₁Π)`.
    pub value: T,
    pub z1: DMatrix<T>,
    /// `Z₁ / value` (zero in the degenerate case).
    pub z_star: DMatrix<T>,
    pub pi: DMatrix<T>,
    /// `(I − A_K Z_* A_Kᵀ Π)⁻¹ A_K Z_* Bn`.
    pub gain: DMatrix<T>,
    /// `A_K − gain · Bnᵀ`.
    pub f_gamma: DMatrix<T>,
    /// `K'(z) = −CzᵀΠ(zI − F_γ)⁻¹ gain`.
    pub k_prime: TransferRealization<T>,
    pub degenerate: bool,
    pub z1_residual: T,
    pub pi_residual: T,
}

/// Best causal approximation of the anticausal target in operator norm.
pub fn nehari_solve<T: Real>(target: &NehariTarget<T>, opts: &SolverOptions<T>) -> Result<NehariSolution<T>> {
    let n = target.a_k.nrows();
    let a_k = &target.a_k;
    let wz = sym(&(&target.cz * target.cz.transpose()));
    let wp = sym(&(&target.bn * target.bn.transpose()));
    let z1 = solve_dlyap(a_k, &wz, opts)?;
    let pi = solve_dlyap(&a_k.transpose(), &wp, opts)?;
    let z1_residual = numerics::dlyap_residual(a_k, &wz, &z1);
    let pi_residual = numerics::dlyap_residual(&a_k.transpose(), &wp, &pi);
    let value = numerics::lambda_max_pair(&z1, &pi)?;
    let scale = z1.norm() * pi.norm();
    let p = target.cz.ncols();
    let m = target.bn.ncols();
    if !(value > T::eps() * T::lit(100.0) * scale) || value == T::zero() {
        return Ok(NehariSolution {
            value: T::zero(),
            z_star: DMatrix::zeros(n, n),
            gain: DMatrix::zeros(n, m),
            f_gamma: a_k.clone(),
            k_prime: TransferRealization::zero(p, m),
            z1,
            pi,
            degenerate: true,
            z1_residual,
            pi_residual,
        });
    }
    let z_star = &z1 / value;
    let eye = DMatrix::<T>::identity(n, n);
    let lhs = &eye - a_k * &z_star * a_k.transpose() * &pi;
    let gain = solve_linear(&lhs, &(a_k * &z_star * &target.bn))?;
    let f_gamma = a_k - &gain * target.bn.transpose();
    if spectral_radius(&f_gamma) >= T::one() {
        return Err(PipelineError::Unstable("F_gamma"));
    }
    let k_prime = TransferRealization::strictly_causal(f_gamma.clone(), gain.clone(), -(target.cz.transpose() * &pi))?;
    Ok(NehariSolution {
        value,
        z1,
        z_star,
        pi,
        gain,
        f_gamma,
        k_prime,
        degenerate: false,
        z1_residual,
        pi_residual,
    })
}

// ---------------------------------------------------------------------------
// controller assembly
// ---------------------------------------------------------------------------

/// Controller that reads `x_t` and `b_t = B_w w_t`:
/// `ξ⁺ = Ac ξ + Bc b`, `u = Cc ξ + Dx x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackParts<T: Real> {
    pub ac: DMatrix<T>,
    pub bc: DMatrix<T>,
    pub cc: DMatrix<T>,
    pub dx: DMatrix<T>,
}

#[derive(Debug, Clone)]
pub struct Assembled<T: Real> {
    /// Reduced controller in normalized input coordinates.
    pub feedback: FeedbackParts<T>,
    /// Three-block strictly causal `w → u` realization from the proof.
    pub raw: TransferRealization<T>,
    /// Gain in the paper's scaling (`K_γ` or `K̄_γ`).
    pub k_gamma: DMatrix<T>,
}

fn lambda<T: Real>(sys: &LtiSystem<T>, lqr: &Lqr<T>) -> Result<DMatrix<T>> {
    Ok(solve_linear(&lqr.r_delta, &sys.b_u.transpose())?)
}

/// Disturbance-side factor used by the assembly: static (`M = R_M^{1/2}`)
/// or dynamic (the clairvoyant factor).
#[derive(Debug, Clone)]
pub enum DisturbanceFactor<T: Real> {
    Static { r_m: DMatrix<T> },
    Dynamic { a_t: DMatrix<T>, k_m: DMatrix<T>, r_m: DMatrix<T> },
}

/// General assembly with internal states `(ξ¹, ξ²)`; `ξ¹` is dropped for a
/// static factor since `K_M = 0` there.
pub fn assemble_controller<T: Real>(
    sys: &LtiSystem<T>,
    lqr: &Lqr<T>,
    factor: &DisturbanceFactor<T>,
    u: &DMatrix<T>,
    neh: &NehariSolution<T>,
) -> Result<Assembled<T>> {
    let n = sys.n();
    let lam = lambda(sys, lqr)?;
    let bw_pinv = left_inverse(&sys.b_w)?;
    let r_m = match factor {
        DisturbanceFactor::Static { r_m } | DisturbanceFactor::Dynamic { r_m, .. } => r_m,
    };
    let k_gamma = &neh.gain * psd_sqrt(r_m)?;
    let f = &neh.f_gamma;
    let pi = &neh.pi;
    match factor {
        DisturbanceFactor::Static { .. } => {
            let feedback = FeedbackParts {
                ac: f.clone(),
                bc: &k_gamma * &bw_pinv,
                cc: -(&lam * pi),
                dx: -lqr.k.clone(),
            };
            let mut a = DMatrix::zeros(2 * n, 2 * n);
            a.view_mut((0, 0), (n, n)).copy_from(f);
            a.view_mut((n, 0), (n, n)).copy_from(&(-(&sys.b_u * &lam * pi)));
            a.view_mut((n, n), (n, n)).copy_from(&lqr.a_k);
            let raw = TransferRealization::strictly_causal(
                a,
                vstack(&[&k_gamma, &sys.b_w]),
                hstack(&[&(-(&lam * pi)), &(-lqr.k.clone())]),
            )?;
            Ok(Assembled { feedback, raw, k_gamma })
        }
        DisturbanceFactor::Dynamic { a_t, k_m, .. } => {
            let mut ac = DMatrix::zeros(2 * n, 2 * n);
            ac.view_mut((0, 0), (n, n)).copy_from(a_t);
            ac.view_mut((n, 0), (n, n)).copy_from(&(&k_gamma * k_m));
            ac.view_mut((n, n), (n, n)).copy_from(f);
            let feedback = FeedbackParts {
                ac: ac.clone(),
                bc: vstack(&[&DMatrix::identity(n, n), &(&k_gamma * &bw_pinv)]),
                cc: hstack(&[&(&lam * u), &(-(&lam * pi))]),
                dx: -lqr.k.clone(),
            };
            let mut a = DMatrix::zeros(3 * n, 3 * n);
            a.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&ac);
            a.view_mut((2 * n, 0), (n, n)).copy_from(&(&sys.b_u * &lam * u));
            a.view_mut((2 * n, n), (n, n)).copy_from(&(-(&sys.b_u * &lam * pi)));
            a.view_mut((2 * n, 2 * n), (n, n)).copy_from(&lqr.a_k);
            let raw = TransferRealization::strictly_causal(
                a,
                vstack(&[&sys.b_w, &k_gamma, &sys.b_w]),
                hstack(&[&(&lam * u), &(-(&lam * pi)), &(-lqr.k.clone())]),
            )?;
            Ok(Assembled { feedback, raw, k_gamma })
        }
    }
}

/// Square-`B_w` assembly: `ξ¹⁺ = A_Tξ¹ + b`, `ξ²⁺ = K̄A_Tξ¹ + F̄ξ² + K̄b`,
/// `u = −K_lqr x + Λ(PA_Tξ¹ − Π̄ξ²)`.
pub fn assemble_square<T: Real>(
    sys: &LtiSystem<T>,
    lqr: &Lqr<T>,
    nabla: &NablaFactor<T>,
    neh: &NehariSolution<T>,
) -> Result<Assembled<T>> {
    let n = sys.n();
    let lam = lambda(sys, lqr)?;
    let scale = psd_sqrt(&sys.q)? * pd_inv_sqrt(&nabla.r_t)?;
    let k_bar = &neh.gain * scale.transpose();
    let a_t = &nabla.a_t;
    let mut ac = DMatrix::zeros(2 * n, 2 * n);
    ac.view_mut((0, 0), (n, n)).copy_from(a_t);
    ac.view_mut((n, 0), (n, n)).copy_from(&(&k_bar * a_t));
    ac.view_mut((n, n), (n, n)).copy_from(&neh.f_gamma);
    let pat = &lqr.p * a_t;
    let feedback = FeedbackParts {
        ac: ac.clone(),
        bc: vstack(&[&DMatrix::identity(n, n), &k_bar]),
        cc: hstack(&[&(&lam * &pat), &(-(&lam * &neh.pi))]),
        dx: -lqr.k.clone(),
    };
    let mut a = DMatrix::zeros(3 * n, 3 * n);
    a.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&ac);
    a.view_mut((2 * n, 0), (n, n)).copy_from(&(&sys.b_u * &lam * &pat));
    a.view_mut((2 * n, n), (n, n)).copy_from(&(-(&sys.b_u * &lam * &neh.pi)));
    a.view_mut((2 * n, 2 * n), (n, n)).copy_from(&lqr.a_k);
    let raw = TransferRealization::strictly_causal(
        a,
        vstack(&[&sys.b_w, &(&k_bar * &sys.b_w), &sys.b_w]),
        hstack(&[&(&lam * &pat), &(-(&lam * &neh.pi)), &(-lqr.k.clone())]),
    )?;
    Ok(Assembled { feedback, raw, k_gamma: k_bar })
}

// ---------------------------------------------------------------------------
// weighted regret
// ---------------------------------------------------------------------------

/// Disturbance weight of the weighted regret problem.
#[derive(Debug, Clone)]
pub enum DisturbanceWeight<T: Real> {
    Identity,
    /// The clairvoyant factor `M(z)` of the (state/input weighted) plant.
    Clairvoyant,
    Static(DMatrix<T>),
}

/// Weighted problem rewritten as a plain one.
#[derive(Debug, Clone)]
pub struct WeightedProblem<T: Real> {
    /// Plant with `Q ← Q^{1/2}W_sQ^{1/2}` and `B_u ← B_uW_u^{-1/2}`, R = I.
    pub system: LtiSystem<T>,
    /// `W_u^{-1/2}`: maps the modified input back to the original one.
    pub input_map: DMatrix<T>,
    pub weight: DisturbanceWeight<T>,
}

#[derive(Debug, Clone)]
pub struct WeightedSolution<T: Real> {
    pub value: T,
    /// Controller in the plant's (normalized) input coordinates.
    pub feedback: FeedbackParts<T>,
    pub lqr: Lqr<T>,
    pub nehari: NehariSolution<T>,
    pub factor: DisturbanceFactor<T>,
    pub u: DMatrix<T>,
    pub raw: TransferRealization<T>,
    pub k_gamma: DMatrix<T>,
}

pub fn weighted_regret_reduce<T: Real>(
    sys: &LtiSystem<T>,
    w_s: &DMatrix<T>,
    w_u: &DMatrix<T>,
    weight: DisturbanceWeight<T>,
) -> Result<WeightedProblem<T>> {
    require_normalized(sys)?;
    let (n, p, m) = (sys.n(), sys.p(), sys.m());
    if w_s.shape() != (n, n) || w_u.shape() != (p, p) {
        return Err(PipelineError::DimensionMismatch("weights must be n×n and p×p".into()));
    }
    if let DisturbanceWeight::Static(w) = &weight {
        if w.shape() != (m, m) {
            return Err(PipelineError::DimensionMismatch("disturbance weight must be m×m".into()));
        }
        pd_inv_sqrt(w)?;
    }
    pd_inv_sqrt(w_s)?;
    let wu_is = pd_inv_sqrt(w_u)?;
    let qh = sys.q_sqrt()?;
    let system = LtiSystem {
        name: sys.name.clone(),
        a: sys.a.clone(),
        b_u: &sys.b_u * &wu_is,
        b_w: sys.b_w.clone(),
        q: sym(&(&qh * w_s * &qh)),
        r: DMatrix::identity(p, p),
    };
    Ok(WeightedProblem { system, input_map: wu_is, weight })
}

impl<T: Real> WeightedProblem<T> {
    /// Solves the reduced problem and maps the controller back.
    pub fn solve(&self, opts: &SolverOptions<T>) -> Result<WeightedSolution<T>> {
        let sys = &self.system;
        let lqr = lqr(sys, opts)?;
        let (factor, u, target) = match &self.weight {
            DisturbanceWeight::Clairvoyant => {
                let nabla = factor_nabla(sys, &lqr, opts)?;
                let mf = factor_m_with(sys, &nabla, false, opts)?;
                let dec = decompose(sys, &lqr, &mf, opts)?;
                (
                    DisturbanceFactor::Dynamic { a_t: nabla.a_t.clone(), k_m: mf.k_m.clone(), r_m: mf.r_m.clone() },
                    dec.u,
                    dec.target,
                )
            }
            DisturbanceWeight::Identity | DisturbanceWeight::Static(_) => {
                let r_m = match &self.weight {
                    DisturbanceWeight::Static(w) => sym(w),
                    _ => DMatrix::identity(sys.m(), sys.m()),
                };
                let l = pd_inv_sqrt(&lqr.r_delta)?;
                let n = &lqr.p * &sys.b_w;
                let target = NehariTarget {
                    a_k: lqr.a_k.clone(),
                    cz: &sys.b_u * &l,
                    bn: &n * pd_inv_sqrt(&r_m)?,
                };
                (DisturbanceFactor::Static { r_m }, DMatrix::zeros(sys.n(), sys.n()), target)
            }
        };
        let neh = nehari_solve(&target, opts)?;
        let asm = assemble_controller(sys, &lqr, &factor, &u, &neh)?;
        let mut feedback = asm.feedback;
        feedback.cc = &self.input_map * feedback.cc;
        feedback.dx = &self.input_map * feedback.dx;
        let raw = asm.raw.scale(&self.input_map, &DMatrix::identity(sys.m(), sys.m()))?;
        Ok(WeightedSolution {
            value: neh.value,
            feedback,
            lqr,
            nehari: neh,
            factor,
            u,
            raw,
            k_gamma: asm.k_gamma,
        })
    }
}

// ---------------------------------------------------------------------------
// grid checks
// ---------------------------------------------------------------------------

/// Relative Frobenius distance `‖x − y‖ / max(‖y‖, 1e-300)`.
pub fn rel_err<T: Real>(x: &CMat<T>, y: &CMat<T>) -> T {
    let d = (x - y).norm();
    let s = y.norm();
    if d == T::zero() {
        T::zero()
    } else {
        d / if s > T::eps().powi(4) { s } else { T::eps().powi(4) }
    }
}

/// `I + F*F`, `I + FF*`, `G*(I + FF*)⁻¹G` at one frequency.
pub struct PlantResponse<T: Real> {
    pub f: CMat<T>,
    pub g: CMat<T>,
}

impl<T: Real> PlantResponse<T> {
    pub fn at(sys: &LtiSystem<T>, omega: T) -> Result<Self> {
        Ok(Self { f: build_f(sys)?.eval(omega)?, g: build_g(sys)?.eval(omega)? })
    }

    pub fn clairvoyant(&self) -> Result<CMat<T>> {
        let n = self.f.nrows();
        let inner = CMat::<T>::identity(n, n) + &self.f * self.f.adjoint();
        let x = inner.lu().solve(&self.g).ok_or(PipelineError::SingularAt { re: f64::NAN, im: f64::NAN })?;
        Ok(self.g.adjoint() * x)
    }
}

/// Worst relative errors of the three factorization identities over `omegas`.
#[derive(Debug, Clone, Copy)]
pub struct FactorizationErrors<T> {
    pub delta: T,
    pub nabla: T,
    pub m: T,
}

pub fn factorization_errors<T: Real>(
    sys: &LtiSystem<T>,
    delta: &DeltaFactor<T>,
    nabla: &NablaFactor<T>,
    mf: &MFactor<T>,
    omegas: &[T],
) -> Result<FactorizationErrors<T>> {
    let (f_tf, g_tf) = (build_f(sys)?, build_g(sys)?);
    let mut out = FactorizationErrors { delta: T::zero(), nabla: T::zero(), m: T::zero() };
    let upd = |acc: &mut T, e: T| {
        if e > *acc {
            *acc = e
        }
    };
    for &w in omegas {
        let f = f_tf.eval(w)?;
        let g = g_tf.eval(w)?;
        let (p, n) = (f.ncols(), f.nrows());
        let d = delta.delta.eval(w)?;
        upd(&mut out.delta, rel_err(&(d.adjoint() * &d), &(CMat::identity(p, p) + f.adjoint() * &f)));
        let nb = nabla.nabla.eval(w)?;
        let ffs = CMat::identity(n, n) + &f * f.adjoint();
        upd(&mut out.nabla, rel_err(&(&nb * nb.adjoint()), &ffs));
        let mm = mf.m_tf.eval(w)?;
        let c0 = PlantResponse { f, g }.clairvoyant()?;
        upd(&mut out.m, rel_err(&(mm.adjoint() * &mm), &c0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar() -> LtiSystem<f64> {
        LtiSystem::scalar(0.5, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn opts() -> SolverOptions<f64> {
        SolverOptions::default()
    }

    #[test]
    fn f_at_zero_frequency() {
        let f = build_f(&scalar()).unwrap().eval(0.0).unwrap();
        assert!((f[(0, 0)].re - 2.0).abs() < 1e-15);
        assert!(f[(0, 0)].im.abs() < 1e-15);
    }

    #[test]
    fn g_vanishes_at_infinity() {
        let g = build_g(&scalar()).unwrap().eval_at(Cplx::new(1e12, 0.0)).unwrap();
        assert!(g.norm() < 1e-11);
    }

    #[test]
    fn zero_dynamics_is_one_tap() {
        let sys = LtiSystem::<f64>::scalar(0.0, 3.0, 1.0, 4.0, 1.0).unwrap();
        let f = build_f(&sys).unwrap();
        let h = f.markov(3);
        assert_eq!(h[0][(0, 0)], 0.0);
        assert!((h[1][(0, 0)] - 6.0).abs() < 1e-15);
        assert_eq!(h[2][(0, 0)], 0.0);
    }

    #[test]
    fn scalar_factors_at_zero_frequency() {
        let sys = scalar();
        let l = lqr(&sys, &opts()).unwrap();
        let d = factor_delta(&sys, &l).unwrap().delta.eval(0.0).unwrap();
        assert!((d[(0, 0)].norm_sqr() - 5.0).abs() < 1e-12);
        let nb = factor_nabla(&sys, &l, &opts()).unwrap();
        assert!((nb.t[(0, 0)] - l.p[(0, 0)]).abs() < 1e-12);
        let mf = factor_m(&sys, &nb, &opts()).unwrap();
        assert!(mf.square);
        assert_eq!(mf.m[(0, 0)], 0.0);
        let m = mf.m_tf.eval(0.0).unwrap();
        assert!((m[(0, 0)].norm_sqr() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn no_input_gives_identity_factors() {
        let sys = LtiSystem::new(
            dmatrix![0.3, 0.1; 0.0, -0.2],
            DMatrix::zeros(2, 1),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            dmatrix![1.0],
        )
        .unwrap();
        let l = lqr(&sys, &opts()).unwrap();
        let d = factor_delta(&sys, &l).unwrap().delta.eval(0.7).unwrap();
        assert!((d - CMat::<f64>::identity(1, 1)).norm() < 1e-14);
        let nb = factor_nabla(&sys, &l, &opts()).unwrap();
        assert!(nb.t.norm() < 1e-14);
        let dec = decompose(&sys, &l, &factor_m(&sys, &nb, &opts()).unwrap(), &opts()).unwrap();
        let neh = nehari_solve(&dec.target, &opts()).unwrap();
        assert!(neh.degenerate);
        assert_eq!(neh.value, 0.0);
    }

    #[test]
    fn series_and_inverse_cancel() {
        let sys = LtiSystem::new(
            dmatrix![0.9, 0.2; -0.1, 1.3],
            dmatrix![1.0; 0.5],
            dmatrix![0.2; 1.0],
            DMatrix::identity(2, 2),
            dmatrix![1.0],
        )
        .unwrap();
        let l = lqr(&sys, &opts()).unwrap();
        let d = factor_delta(&sys, &l).unwrap();
        let prod = d.delta_inv.series(&d.delta).unwrap();
        for k in 0..16 {
            let w = 0.37 * k as f64;
            let v = prod.eval(w).unwrap();
            assert!((v - CMat::<f64>::identity(1, 1)).norm() < 1e-10);
            let alt = d.delta.inverse().unwrap().eval(w).unwrap();
            assert!((alt - d.delta_inv.eval(w).unwrap()).norm() < 1e-10);
        }
    }

    #[test]
    fn adjoint_is_conjugate_transpose_on_circle() {
        let h = TransferRealization::causal(
            dmatrix![0.5, 0.1; 0.0, -0.3],
            dmatrix![1.0, 0.0; 0.5, 1.0],
            dmatrix![1.0, 2.0],
            dmatrix![0.3, -0.1],
        )
        .unwrap();
        for w in [0.0, 0.4, 2.0, 3.1] {
            let a = h.adjoint().eval(w).unwrap();
            assert!((a - h.eval(w).unwrap().adjoint()).norm() < 1e-13);
        }
    }
}
