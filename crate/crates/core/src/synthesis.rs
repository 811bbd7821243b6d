//! Controller synthesis: H2, competitive-ratio optimal, regret-optimal and
//! H∞ baselines.
//!
//! Controllers are synthesized on the R-normalized plant and returned in
//! the caller's input coordinates.

use crate::freqeval::{self, FreqContext, Grid};
use crate::model::{validate, LtiSystem, ModelError};
use crate::numerics::{
    self, hstack, invert, solve_dare_general, solve_linear, spectral_radius, sym,
    LinalgError, SolverOptions,
};
use crate::pipeline::{
    self, assemble_controller, assemble_square, decompose, decompose_square, factor_m_with, factor_nabla,
    lqr, nehari_solve, DisturbanceFactor, DisturbanceWeight, Lqr, PipelineError, TransferRealization,
};
use crate::scalar::{CMat, Real};
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("system failed validation:\n{0}")]
    Invalid(String),
    #[error("H-infinity problem infeasible at upper bracket gamma = {gamma:e}")]
    InfeasibleAtUpperBound { gamma: f64 },
    #[error("forced {0:?} path does not apply to this system")]
    PathNotApplicable(CrPath),
    #[error("method {0} has no causal realization")]
    NotRealizable(Method),
}

pub type Result<T, E = SynthesisError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    H2,
    Hinf,
    Cr,
    Regret,
    Noncausal,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::H2, Method::Hinf, Method::Regret, Method::Cr, Method::Noncausal];

    pub fn name(self) -> &'static str {
        match self {
            Method::H2 => "h2",
            Method::Hinf => "hinf",
            Method::Cr => "cr",
            Method::Regret => "regret",
            Method::Noncausal => "noncausal",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "h2" | "lqr" => Ok(Method::H2),
            "hinf" | "h-inf" | "hinfinity" => Ok(Method::Hinf),
            "cr" | "competitive" => Ok(Method::Cr),
            "regret" => Ok(Method::Regret),
            "noncausal" | "clairvoyant" => Ok(Method::Noncausal),
            other => Err(format!("unknown method `{other}` (expected h2, hinf, cr, regret, noncausal)")),
        }
    }
}

// ---------------------------------------------------------------------------
// controller realizations
// ---------------------------------------------------------------------------

/// `ξ⁺ = Ac ξ + Bc b`, `u = Cc ξ + Dx x`, where `b = B_w w` is
/// reconstructed from consecutive states.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackForm<T: Real> {
    pub ac: DMatrix<T>,
    pub bc: DMatrix<T>,
    pub cc: DMatrix<T>,
    pub dx: DMatrix<T>,
}

/// Strictly causal `w → u`: `η⁺ = Ak η + Bk w`, `u = Ck η`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferForm<T: Real> {
    pub ak: DMatrix<T>,
    pub bk: DMatrix<T>,
    pub ck: DMatrix<T>,
}

impl<T: Real> TransferForm<T> {
    pub fn realization(&self) -> TransferRealization<T> {
        TransferRealization::strictly_causal(self.ak.clone(), self.bk.clone(), self.ck.clone())
            .expect("transfer form blocks are consistent by construction")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerFile<T: Real> {
    Feedback(FeedbackForm<T>),
    Transfer(TransferForm<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerRealization<T: Real> {
    pub method: Option<Method>,
    pub feedback: Option<FeedbackForm<T>>,
    pub transfer: TransferForm<T>,
}

impl<T: Real> ControllerRealization<T> {
    /// Builds the transfer form
    /// `Ak = [[Ac, 0], [B_uCc, A + B_uDx]]`, `Bk = [BcB_w; B_w]`, `Ck = [Cc, Dx]`.
    pub fn from_feedback(sys: &LtiSystem<T>, fb: FeedbackForm<T>) -> Result<Self> {
        let (n, k) = (sys.n(), fb.ac.nrows());
        let shapes_ok = fb.ac.ncols() == k
            && fb.bc.shape() == (k, n)
            && fb.cc.shape() == (sys.p(), k)
            && fb.dx.shape() == (sys.p(), n);
        if !shapes_ok {
            return Err(PipelineError::DimensionMismatch(format!(
                "feedback controller does not fit plant with n={n}, p={}",
                sys.p()
            ))
            .into());
        }
        let mut ak = DMatrix::zeros(k + n, k + n);
        ak.view_mut((0, 0), (k, k)).copy_from(&fb.ac);
        ak.view_mut((k, 0), (n, k)).copy_from(&(&sys.b_u * &fb.cc));
        ak.view_mut((k, k), (n, n)).copy_from(&(&sys.a + &sys.b_u * &fb.dx));
        let bk = numerics::vstack(&[&(&fb.bc * &sys.b_w), &sys.b_w]);
        let ck = hstack(&[&fb.cc, &fb.dx]);
        Ok(Self {
            method: None,
            transfer: TransferForm { ak, bk, ck },
            feedback: Some(fb),
        })
    }

    pub fn from_transfer(sys: &LtiSystem<T>, tf: TransferForm<T>) -> Result<Self> {
        let k = tf.ak.nrows();
        if tf.ak.ncols() != k || tf.bk.shape() != (k, sys.m()) || tf.ck.shape() != (sys.p(), k) {
            return Err(PipelineError::DimensionMismatch("transfer controller does not fit plant".into()).into());
        }
        Ok(Self { method: None, feedback: None, transfer: tf })
    }

    pub fn from_file(sys: &LtiSystem<T>, file: ControllerFile<T>) -> Result<Self> {
        match file {
            ControllerFile::Feedback(fb) => Self::from_feedback(sys, fb),
            ControllerFile::Transfer(tf) => Self::from_transfer(sys, tf),
        }
    }

    /// Feedback form when available, transfer form otherwise.
    pub fn to_file(&self) -> ControllerFile<T> {
        match &self.feedback {
            Some(fb) => ControllerFile::Feedback(fb.clone()),
            None => ControllerFile::Transfer(self.transfer.clone()),
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = Some(method);
        self
    }

    pub fn realization(&self) -> TransferRealization<T> {
        self.transfer.realization()
    }

    /// Spectral radius of the plant-plus-controller loop as it would be
    /// simulated: feedback form when present, transfer form otherwise.
    pub fn closed_loop_radius(&self, sys: &LtiSystem<T>) -> T {
        match &self.feedback {
            Some(fb) => spectral_radius(&feedback_loop_matrix(sys, fb)),
            None => {
                let (n, k) = (sys.n(), self.transfer.ak.nrows());
                let mut a = DMatrix::zeros(n + k, n + k);
                a.view_mut((0, 0), (n, n)).copy_from(&sys.a);
                a.view_mut((0, n), (n, k)).copy_from(&(&sys.b_u * &self.transfer.ck));
                a.view_mut((n, n), (k, k)).copy_from(&self.transfer.ak);
                spectral_radius(&a)
            }
        }
    }
}

/// `[[A + B_uDx, B_uCc], [0, Ac]]`, the loop matrix of the feedback form
/// once `b = B_w w` is treated as the exogenous input.
pub fn feedback_loop_matrix<T: Real>(sys: &LtiSystem<T>, fb: &FeedbackForm<T>) -> DMatrix<T> {
    let (n, k) = (sys.n(), fb.ac.nrows());
    let mut a = DMatrix::zeros(n + k, n + k);
    a.view_mut((0, 0), (n, n)).copy_from(&(&sys.a + &sys.b_u * &fb.dx));
    a.view_mut((0, n), (n, k)).copy_from(&(&sys.b_u * &fb.cc));
    a.view_mut((n, n), (k, k)).copy_from(&fb.ac);
    a
}

fn to_original<T: Real>(sys: &LtiSystem<T>, parts: pipeline::FeedbackParts<T>) -> Result<FeedbackForm<T>> {
    let r_is = sys.r_inv_sqrt()?;
    Ok(FeedbackForm {
        ac: parts.ac,
        bc: parts.bc,
        cc: &r_is * parts.cc,
        dx: &r_is * parts.dx,
    })
}

// ---------------------------------------------------------------------------
// options and certificates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrPath {
    General,
    Square,
    Scalar,
}

#[derive(Debug, Clone, Copy)]
pub struct HinfOptions {
    /// Relative width at which bisection stops.
    pub rel_tol: f64,
    /// Frequency grid for the bracket estimates.
    pub grid: usize,
    /// Upper-bracket doublings before giving up.
    pub max_doublings: usize,
}

impl Default for HinfOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-4, grid: 1024, max_doublings: 30 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SynthesisOptions<T> {
    pub solver: SolverOptions<T>,
    /// Forces a competitive-ratio path instead of the dispatch rule.
    pub cr_path: Option<CrPath>,
    pub hinf: HinfOptions,
    /// Reject systems that fail [`validate`].
    pub validate: bool,
}

impl<T: Real> Default for SynthesisOptions<T> {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            cr_path: None,
            hinf: HinfOptions::default(),
            validate: true,
        }
    }
}

impl<T: Real> SynthesisOptions<T> {
    pub fn with_path(mut self, path: CrPath) -> Self {
        self.cr_path = Some(path);
        self
    }
}

/// Every constant of the competitive-ratio construction.
#[derive(Debug, Clone)]
pub struct SynthesisCertificate<T: Real> {
    pub path: CrPath,
    pub p: DMatrix<T>,
    pub k_lqr: DMatrix<T>,
    pub t: DMatrix<T>,
    pub m: DMatrix<T>,
    pub r_t: DMatrix<T>,
    pub r_m: DMatrix<T>,
    pub k_m: DMatrix<T>,
    pub a_k: DMatrix<T>,
    pub a_t: DMatrix<T>,
    pub a_m: DMatrix<T>,
    pub z_1: DMatrix<T>,
    pub z_star: DMatrix<T>,
    /// `Π`, or `Π̄` on the square path.
    pub pi: DMatrix<T>,
    pub u: DMatrix<T>,
    /// `K_γ`, or `K̄_γ` on the square path.
    pub k_gamma: DMatrix<T>,
    pub f_gamma: DMatrix<T>,
    /// `1 + λ_max(Z₁Π)`.
    pub ratio: T,
    pub residuals: BTreeMap<&'static str, f64>,
    pub spectral_radii: BTreeMap<&'static str, f64>,
}

impl<T: Real> SynthesisCertificate<T> {
    pub fn max_residual(&self) -> f64 {
        self.residuals.values().copied().fold(0.0, f64::max)
    }

    /// `key = value` report.
    pub fn report(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        writeln!(s, "path = {:?}", self.path).unwrap();
        writeln!(s, "ratio = {:.16e}", self.ratio.as_f64()).unwrap();
        writeln!(s, "nehari_value = {:.16e}", (self.ratio - T::one()).as_f64()).unwrap();
        for (k, v) in &self.residuals {
            writeln!(s, "residual.{k} = {v:.3e}").unwrap();
        }
        for (k, v) in &self.spectral_radii {
            writeln!(s, "spectral_radius.{k} = {v:.6}").unwrap();
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct H2Certificate<T: Real> {
    pub p: DMatrix<T>,
    pub k_lqr: DMatrix<T>,
    pub residual: T,
    pub closed_loop_radius: T,
}

#[derive(Debug, Clone)]
pub struct RegretCertificate<T: Real> {
    /// Optimal regret `λ_max(Z₁Π)` with `M = I`.
    pub value: T,
    pub p: DMatrix<T>,
    pub pi: DMatrix<T>,
    pub z_1: DMatrix<T>,
    pub closed_loop_radius: T,
}

#[derive(Debug, Clone)]
pub struct HinfCertificate<T: Real> {
    /// Smallest feasible `γ` found (bisection upper end).
    pub gamma: T,
    pub lower: T,
    pub iterations: usize,
    /// Solution of the game Riccati equation at `gamma`.
    pub p: DMatrix<T>,
    pub closed_loop_radius: T,
}

fn prepare<T: Real>(sys: &LtiSystem<T>, opts: &SynthesisOptions<T>) -> Result<LtiSystem<T>> {
    if opts.validate {
        let rep = validate(sys);
        if !rep.passed() {
            return Err(SynthesisError::Invalid(rep.to_string()));
        }
    }
    Ok(sys.normalize_r()?)
}

// ---------------------------------------------------------------------------
// H2
// ---------------------------------------------------------------------------

fn static_feedback<T: Real>(sys: &LtiSystem<T>, dx: DMatrix<T>) -> Result<ControllerRealization<T>> {
    ControllerRealization::from_feedback(
        sys,
        FeedbackForm {
            ac: DMatrix::zeros(0, 0),
            bc: DMatrix::zeros(0, sys.n()),
            cc: DMatrix::zeros(sys.p(), 0),
            dx,
        },
    )
}

/// LQR state feedback `u = −K_lqr x`.
pub fn synth_h2<T: Real>(
    sys: &LtiSystem<T>,
    opts: &SynthesisOptions<T>,
) -> Result<(H2Certificate<T>, ControllerRealization<T>)> {
    let norm = prepare(sys, opts)?;
    let l = lqr(&norm, &opts.solver)?;
    let dx = -(sys.r_inv_sqrt()? * &l.k);
    let ctrl = static_feedback(sys, dx)?.with_method(Method::H2);
    let cert = H2Certificate {
        closed_loop_radius: spectral_radius(&l.a_k),
        p: l.p,
        k_lqr: l.k,
        residual: l.residual,
    };
    Ok((cert, ctrl))
}

// ---------------------------------------------------------------------------
// competitive ratio
// ---------------------------------------------------------------------------

/// Dispatch rule: scalar iff `n = p = m = 1`, square iff `B_w` is square and
/// well conditioned, general otherwise.
pub fn select_path<T: Real>(sys: &LtiSystem<T>) -> CrPath {
    if sys.n() == 1 && sys.p() == 1 && sys.m() == 1 {
        CrPath::Scalar
    } else if pipeline::is_square_bw(sys) {
        CrPath::Square
    } else {
        CrPath::General
    }
}

/// `1 + B²P²(Q⁻¹ + T)/(1 + B²P)` with the dual solution `T = B²P/Q` of a
/// normalized scalar plant.
pub fn scalar_ratio<T: Real>(b_u: T, q: T, p: T) -> T {
    let b2 = b_u * b_u;
    let t = b2 * p / q;
    T::one() + b2 * p * p * (T::one() / q + t) / (T::one() + b2 * p)
}

fn z_star_residual<T: Real>(lqr: &Lqr<T>, sys: &LtiSystem<T>, z_star: &DMatrix<T>, value: T) -> Result<f64> {
    if value == T::zero() {
        return Ok(0.0);
    }
    let w = sym(&(&sys.b_u * solve_linear(&lqr.r_delta, &sys.b_u.transpose())?)) / value;
    Ok(numerics::dlyap_residual(&lqr.a_k, &w, z_star).as_f64())
}

/// Optimal competitive-ratio controller and its certificate.
pub fn synth_cr<T: Real>(
    sys: &LtiSystem<T>,
    opts: &SynthesisOptions<T>,
) -> Result<(SynthesisCertificate<T>, ControllerRealization<T>)> {
    let norm = prepare(sys, opts)?;
    let path = opts.cr_path.unwrap_or_else(|| select_path(&norm));
    match path {
        CrPath::Square if !pipeline::is_square_bw(&norm) => return Err(SynthesisError::PathNotApplicable(path)),
        CrPath::Scalar if !(norm.n() == 1 && norm.p() == 1 && norm.m() == 1) => {
            return Err(SynthesisError::PathNotApplicable(path))
        }
        _ => {}
    }
    let so = &opts.solver;
    let l = lqr(&norm, so)?;
    let nabla = factor_nabla(&norm, &l, so)?;
    let square = path != CrPath::General;
    let mf = factor_m_with(&norm, &nabla, square, so)?;
    let dec = decompose(&norm, &l, &mf, so)?;

    let (neh, asm) = if square {
        let sq = decompose_square(&norm, &l, &nabla)?;
        let neh = nehari_solve(&sq.target, so)?;
        let asm = assemble_square(&norm, &l, &nabla, &neh)?;
        (neh, asm)
    } else {
        let neh = nehari_solve(&dec.target, so)?;
        let factor = DisturbanceFactor::Dynamic {
            a_t: nabla.a_t.clone(),
            k_m: mf.k_m.clone(),
            r_m: mf.r_m.clone(),
        };
        let asm = assemble_controller(&norm, &l, &factor, &dec.u, &neh)?;
        (neh, asm)
    };

    let (ratio, ctrl) = if path == CrPath::Scalar {
        let ratio = scalar_ratio(norm.b_u[(0, 0)], norm.q[(0, 0)], l.p[(0, 0)]);
        let dx = -(sys.r_inv_sqrt()? * &l.k);
        (ratio, static_feedback(sys, dx)?)
    } else {
        let fb = to_original(sys, asm.feedback)?;
        (T::one() + neh.value, ControllerRealization::from_feedback(sys, fb)?)
    };
    let ctrl = ctrl.with_method(Method::Cr);

    let mut residuals = BTreeMap::new();
    residuals.insert("lqr_riccati", l.residual.as_f64());
    residuals.insert("dual_riccati", nabla.residual.as_f64());
    residuals.insert("m_riccati", mf.residual.as_f64());
    residuals.insert("z1_lyapunov", neh.z1_residual.as_f64());
    residuals.insert("pi_lyapunov", neh.pi_residual.as_f64());
    residuals.insert("z_star_lyapunov", z_star_residual(&l, &norm, &neh.z_star, neh.value)?);
    residuals.insert("u_sylvester", dec.u_residual.as_f64());
    if path == CrPath::Scalar {
        let lam = T::one() + neh.value;
        residuals.insert("scalar_closed_form", ((ratio - lam).abs() / lam).as_f64());
    }

    let mut spectral_radii = BTreeMap::new();
    spectral_radii.insert("A_K", spectral_radius(&l.a_k).as_f64());
    spectral_radii.insert("A_T", spectral_radius(&nabla.a_t).as_f64());
    spectral_radii.insert("A_M", spectral_radius(&mf.a_m).as_f64());
    spectral_radii.insert("F_gamma", spectral_radius(&neh.f_gamma).as_f64());
    spectral_radii.insert("closed_loop", ctrl.closed_loop_radius(sys).as_f64());

    let cert = SynthesisCertificate {
        path,
        p: l.p.clone(),
        k_lqr: l.k.clone(),
        t: nabla.t.clone(),
        m: mf.m.clone(),
        r_t: nabla.r_t.clone(),
        r_m: mf.r_m.clone(),
        k_m: mf.k_m.clone(),
        a_k: l.a_k.clone(),
        a_t: nabla.a_t.clone(),
        a_m: mf.a_m.clone(),
        z_1: neh.z1.clone(),
        z_star: neh.z_star.clone(),
        pi: neh.pi.clone(),
        u: dec.u.clone(),
        k_gamma: asm.k_gamma.clone(),
        f_gamma: neh.f_gamma.clone(),
        ratio,
        residuals,
        spectral_radii,
    };
    Ok((cert, ctrl))
}

/// Three-block `w → u` realization of the competitive-ratio controller, in
/// original input coordinates, for cross-checking the reduced form.
pub fn cr_raw_realization<T: Real>(sys: &LtiSystem<T>, opts: &SynthesisOptions<T>) -> Result<TransferRealization<T>> {
    let norm = prepare(sys, opts)?;
    let path = opts.cr_path.unwrap_or_else(|| select_path(&norm));
    let so = &opts.solver;
    let l = lqr(&norm, so)?;
    let nabla = factor_nabla(&norm, &l, so)?;
    let raw = if path == CrPath::General {
        let mf = factor_m_with(&norm, &nabla, false, so)?;
        let dec = decompose(&norm, &l, &mf, so)?;
        let neh = nehari_solve(&dec.target, so)?;
        let factor = DisturbanceFactor::Dynamic { a_t: nabla.a_t.clone(), k_m: mf.k_m, r_m: mf.r_m };
        assemble_controller(&norm, &l, &factor, &dec.u, &neh)?.raw
    } else {
        let sq = decompose_square(&norm, &l, &nabla)?;
        let neh = nehari_solve(&sq.target, so)?;
        assemble_square(&norm, &l, &nabla, &neh)?.raw
    };
    let m = sys.m();
    Ok(raw.scale(&sys.r_inv_sqrt()?, &DMatrix::identity(m, m))?)
}

// ---------------------------------------------------------------------------
// regret
// ---------------------------------------------------------------------------

/// Weighted regret-optimal controller; identity weights give the plain
/// regret-optimal controller and the clairvoyant disturbance weight gives
/// the competitive-ratio controller.
pub fn synth_weighted_regret<T: Real>(
    sys: &LtiSystem<T>,
    w_s: &DMatrix<T>,
    w_u: &DMatrix<T>,
    weight: DisturbanceWeight<T>,
    opts: &SynthesisOptions<T>,
) -> Result<(RegretCertificate<T>, ControllerRealization<T>)> {
    let norm = prepare(sys, opts)?;
    let problem = pipeline::weighted_regret_reduce(&norm, w_s, w_u, weight)?;
    let sol = problem.solve(&opts.solver)?;
    let fb = to_original(
        sys,
        pipeline::FeedbackParts { ac: sol.feedback.ac, bc: sol.feedback.bc, cc: sol.feedback.cc, dx: sol.feedback.dx },
    )?;
    let ctrl = ControllerRealization::from_feedback(sys, fb)?;
    let cert = RegretCertificate {
        value: sol.value,
        p: sol.lqr.p,
        pi: sol.nehari.pi,
        z_1: sol.nehari.z1,
        closed_loop_radius: ctrl.closed_loop_radius(sys),
    };
    Ok((cert, ctrl))
}

pub fn synth_regret<T: Real>(
    sys: &LtiSystem<T>,
    opts: &SynthesisOptions<T>,
) -> Result<(RegretCertificate<T>, ControllerRealization<T>)> {
    let (n, p) = (sys.n(), sys.p());
    let (cert, ctrl) = synth_weighted_regret(
        sys,
        &DMatrix::identity(n, n),
        &DMatrix::identity(p, p),
        DisturbanceWeight::Identity,
        opts,
    )?;
    Ok((cert, ctrl.with_method(Method::Regret)))
}

// ---------------------------------------------------------------------------
// H-infinity
// ---------------------------------------------------------------------------

/// Full-information central controller at level `gamma`, if the game
/// Riccati equation has an admissible solution.
pub fn hinf_at<T: Real>(
    norm: &LtiSystem<T>,
    gamma: T,
    opts: &SolverOptions<T>,
) -> Option<(DMatrix<T>, DMatrix<T>)> {
    let (n, p, m) = (norm.n(), norm.p(), norm.m());
    let g2 = gamma * gamma;
    let b = hstack(&[&norm.b_u, &norm.b_w]);
    let mut r = DMatrix::zeros(p + m, p + m);
    r.view_mut((0, 0), (p, p)).copy_from(&DMatrix::identity(p, p));
    r.view_mut((p, p), (m, m)).copy_from(&(DMatrix::identity(m, m) * -g2));
    let game_opts = opts.with_tolerance(opts.tolerance.max(T::lit(1e-9)));
    let sol = solve_dare_general(&norm.a, &b, &norm.q, &r, &DMatrix::zeros(n, p + m), &game_opts).ok()?;
    let pm = sol.p;
    let scale = T::one() + pm.norm();
    if numerics::min_eig_sym(&pm) < -(T::lit(1e-9) * scale) {
        return None;
    }
    let gap = sym(&(DMatrix::identity(m, m) * g2 - norm.b_w.transpose() * &pm * &norm.b_w));
    if !(numerics::min_eig_sym(&gap) > T::lit(1e-12) * g2) {
        return None;
    }
    let p_tilde = &pm + &pm * &norm.b_w * invert(&gap).ok()? * norm.b_w.transpose() * &pm;
    let inner = DMatrix::identity(p, p) + norm.b_u.transpose() * &p_tilde * &norm.b_u;
    let k = solve_linear(&inner, &(norm.b_u.transpose() * &p_tilde * &norm.a)).ok()?;
    if spectral_radius(&(&norm.a - &norm.b_u * &k)) >= T::one() {
        return None;
    }
    Some((pm, k))
}

/// Bisection on the state-feedback H∞ level.
pub fn synth_hinf<T: Real>(
    sys: &LtiSystem<T>,
    opts: &SynthesisOptions<T>,
) -> Result<(HinfCertificate<T>, ControllerRealization<T>)> {
    let norm = prepare(sys, opts)?;
    let so = &opts.solver;
    let grid = Grid::new(opts.hinf.grid);
    let ctx = FreqContext::new(sys, so)?;
    let floor = freqeval::clairvoyant_sup(&ctx, &grid)?.value;
    let (_, h2) = synth_h2(sys, &SynthesisOptions { validate: false, ..*opts })?;
    let h2_norm = freqeval::metric_opnorm_ctx(&ctx, &freqeval::Evaluated::Causal(&h2), &grid)?.value;

    let mut lo = floor.max(T::zero()).sqrt();
    let mut hi = T::lit(2.0) * h2_norm.max(T::zero()).sqrt();
    if !(hi > lo) {
        hi = lo * T::lit(2.0) + T::eps();
    }
    let mut best = hinf_at(&norm, hi, so);
    let mut doublings = 0;
    while best.is_none() {
        if doublings >= opts.hinf.max_doublings {
            return Err(SynthesisError::InfeasibleAtUpperBound { gamma: hi.as_f64() });
        }
        lo = hi;
        hi *= T::lit(2.0);
        best = hinf_at(&norm, hi, so);
        doublings += 1;
    }
    let tol = T::lit(opts.hinf.rel_tol);
    let mut iterations = 0;
    while hi - lo > tol * hi {
        let mid = (lo + hi) * T::lit(0.5);
        match hinf_at(&norm, mid, so) {
            Some(sol) => {
                hi = mid;
                best = Some(sol);
            }
            None => lo = mid,
        }
        iterations += 1;
    }
    let (pm, k) = best.expect("feasible upper bracket");
    let dx = -(sys.r_inv_sqrt()? * &k);
    let ctrl = static_feedback(sys, dx)?.with_method(Method::Hinf);
    let cert = HinfCertificate {
        gamma: hi,
        lower: lo,
        iterations,
        p: pm,
        closed_loop_radius: ctrl.closed_loop_radius(sys),
    };
    Ok((cert, ctrl))
}

// ---------------------------------------------------------------------------
// clairvoyant
// ---------------------------------------------------------------------------

/// `G*(I + FF*)⁻¹G` at `e^{jω}` (with `F` taken on the R-normalized plant).
pub fn clairvoyant_response<T: Real>(sys: &LtiSystem<T>, omega: T) -> Result<CMat<T>> {
    let norm = sys.normalize_r()?;
    Ok(pipeline::PlantResponse::at(&norm, omega)?.clairvoyant()?)
}

/// Any causal method by name.
pub fn synthesize<T: Real>(
    sys: &LtiSystem<T>,
    method: Method,
    opts: &SynthesisOptions<T>,
) -> Result<ControllerRealization<T>> {
    Ok(match method {
        Method::H2 => synth_h2(sys, opts)?.1,
        Method::Hinf => synth_hinf(sys, opts)?.1,
        Method::Cr => synth_cr(sys, opts)?.1,
        Method::Regret => synth_regret(sys, opts)?.1,
        Method::Noncausal => return Err(SynthesisError::NotRealizable(method)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar() -> LtiSystem<f64> {
        LtiSystem::scalar(0.5, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn h2_scalar_gain() {
        let (cert, ctrl) = synth_h2(&scalar(), &SynthesisOptions::default()).unwrap();
        let p = cert.p[(0, 0)];
        assert!((cert.k_lqr[(0, 0)] - p * 0.5 / (1.0 + p)).abs() < 1e-14);
        assert!((cert.k_lqr[(0, 0)] - 0.26557).abs() < 1e-5);
        assert_eq!(ctrl.feedback.unwrap().dx[(0, 0)], -cert.k_lqr[(0, 0)]);
    }

    #[test]
    fn h2_zero_dynamics_has_zero_gain() {
        let sys = LtiSystem::<f64>::scalar(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let (cert, _) = synth_h2(&sys, &SynthesisOptions::default()).unwrap();
        assert_eq!(cert.k_lqr[(0, 0)], 0.0);
    }

    #[test]
    fn cr_scalar_running_example() {
        let (cert, ctrl) = synth_cr(&scalar(), &SynthesisOptions::default()).unwrap();
        let p = (0.25 + 4.0625f64.sqrt()) / 2.0;
        assert_eq!(cert.path, CrPath::Scalar);
        assert!((cert.ratio - (1.0 + p * p)).abs() < 1e-12);
        assert!((cert.ratio - 2.2831956).abs() < 1e-7);
        assert!(ctrl.feedback.unwrap().ac.is_empty());
        assert!(cert.residuals["scalar_closed_form"] < 1e-12);
    }

    #[test]
    fn cr_scalar_zero_dynamics() {
        let sys = LtiSystem::<f64>::scalar(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let (cert, _) = synth_cr(&sys, &SynthesisOptions::default()).unwrap();
        assert!((cert.ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cr_without_input_is_one() {
        let sys = LtiSystem::new(
            dmatrix![0.5, 0.2; 0.0, -0.4],
            DMatrix::zeros(2, 1),
            dmatrix![1.0; 0.3],
            DMatrix::identity(2, 2),
            dmatrix![1.0],
        )
        .unwrap();
        let opts = SynthesisOptions { validate: false, ..Default::default() };
        let (cert, ctrl) = synth_cr(&sys, &opts).unwrap();
        assert_eq!(cert.ratio, 1.0);
        let fb = ctrl.feedback.unwrap();
        assert_eq!(fb.cc.norm(), 0.0);
        assert_eq!(fb.dx.norm(), 0.0);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }
}
