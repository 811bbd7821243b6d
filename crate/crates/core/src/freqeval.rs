//! Frequency-domain metrics: Frobenius density, operator norm, regret and
//! competitive ratio of closed-loop responses, with sup search and
//! integration over the unit circle.

use crate::model::LtiSystem;
use crate::numerics::{lambda_max_hermitian, psd_sqrt, sigma_min, vstack, SolverOptions};
use crate::pipeline::{build_g, factor_m, factor_nabla, lqr, PipelineError, PlantResponse, TransferRealization};
use crate::scalar::{CMat, Real};
use crate::synthesis::{ControllerRealization, Method};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::fmt::Write as _;

/// Smallest admissible `σ_min(M(e^{jω}))` relative to `σ_max`.
pub const M_RANK_TOL: f64 = 1e-10;

/// Uniform frequency grid on `[0, 2π)` with local refinement of maxima.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub points: usize,
    pub refine_iterations: usize,
    pub refine_top: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self::new(1024)
    }
}

impl Grid {
    /// `points` is rounded up to an even number of at least 4.
    pub fn new(points: usize) -> Self {
        let points = points.max(4).div_ceil(2) * 2;
        Self { points, refine_iterations: 30, refine_top: 3 }
    }

    pub fn unrefined(points: usize) -> Self {
        Self { refine_iterations: 0, ..Self::new(points) }
    }

    pub fn omegas<T: Real>(&self) -> Vec<T> {
        (0..self.points).map(|k| T::two_pi() * T::lit(k as f64) / T::lit(self.points as f64)).collect()
    }

    /// `ω_k = 2πk/N` for `k = 0..=N/2`.
    fn half<T: Real>(points: usize) -> Vec<T> {
        (0..=points / 2).map(|k| T::two_pi() * T::lit(k as f64) / T::lit(points as f64)).collect()
    }
}

/// Controller whose closed-loop response is being evaluated.
#[derive(Debug, Clone, Copy)]
pub enum Evaluated<'a, T: Real> {
    Causal(&'a ControllerRealization<T>),
    /// The clairvoyant benchmark, for which `T_K*T_K = T_{K₀}*T_{K₀}`.
    Noncausal,
}

/// Values of the four metric densities at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMetrics<T> {
    pub frob_density: T,
    /// `σ_max²(T_K)`.
    pub opnorm: T,
    pub regret: T,
    pub cr: T,
}

/// Supremum with its maximizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sup<T> {
    pub value: T,
    pub omega: T,
}

/// Plant data shared by every evaluation.
#[derive(Debug, Clone)]
pub struct FreqContext<T: Real> {
    pub sys: LtiSystem<T>,
    qh: DMatrix<T>,
    rh: DMatrix<T>,
    f_norm: TransferRealization<T>,
    g: TransferRealization<T>,
    m_inv: TransferRealization<T>,
    m: TransferRealization<T>,
}

impl<T: Real> FreqContext<T> {
    pub fn new(sys: &LtiSystem<T>, opts: &SolverOptions<T>) -> Result<Self, PipelineError> {
        let norm = sys.normalize_r()?;
        let l = lqr(&norm, opts)?;
        let nabla = factor_nabla(&norm, &l, opts)?;
        let mf = factor_m(&norm, &nabla, opts)?;
        Ok(Self {
            sys: sys.clone(),
            qh: sys.q_sqrt()?,
            rh: psd_sqrt(&sys.r)?,
            f_norm: crate::pipeline::build_f(&norm)?,
            g: build_g(sys)?,
            m_inv: mf.m_inv_tf,
            m: mf.m_tf,
        })
    }

    /// `T_{K₀}*T_{K₀} = G*(I + FF*)⁻¹G`.
    pub fn clairvoyant(&self, omega: T) -> Result<CMat<T>, PipelineError> {
        PlantResponse { f: self.f_norm.eval(omega)?, g: self.g.eval(omega)? }.clairvoyant()
    }

    /// Closed loop `w → [Q^{1/2}x; R^{1/2}u]`.
    pub fn closed_loop(&self, ctrl: &ControllerRealization<T>) -> Result<TransferRealization<T>, PipelineError> {
        let sys = &self.sys;
        let n = sys.n();
        let (a, b, cx, cu) = match &ctrl.feedback {
            Some(fb) => {
                let k = fb.ac.nrows();
                let a = crate::synthesis::feedback_loop_matrix(sys, fb);
                let b = vstack(&[&sys.b_w, &(&fb.bc * &sys.b_w)]);
                let mut cx = DMatrix::zeros(n, n + k);
                cx.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
                let cu = crate::numerics::hstack(&[&fb.dx, &fb.cc]);
                (a, b, cx, cu)
            }
            None => {
                let tf = &ctrl.transfer;
                let k = tf.ak.nrows();
                let mut a = DMatrix::zeros(n + k, n + k);
                a.view_mut((0, 0), (n, n)).copy_from(&sys.a);
                a.view_mut((0, n), (n, k)).copy_from(&(&sys.b_u * &tf.ck));
                a.view_mut((n, n), (k, k)).copy_from(&tf.ak);
                let b = vstack(&[&sys.b_w, &tf.bk]);
                let mut cx = DMatrix::zeros(n, n + k);
                cx.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
                let cu = crate::numerics::hstack(&[&DMatrix::zeros(sys.p(), n), &tf.ck]);
                (a, b, cx, cu)
            }
        };
        let c = vstack(&[&(&self.qh * cx), &(&self.rh * cu)]);
        TransferRealization::strictly_causal(a, b, c)
    }

    /// Evaluator for one controller.
    pub fn evaluator<'a>(&'a self, ctrl: &Evaluated<'_, T>) -> Result<Evaluator<'a, T>, PipelineError> {
        let tk = match ctrl {
            Evaluated::Causal(c) => Some(self.closed_loop(c)?),
            Evaluated::Noncausal => None,
        };
        Ok(Evaluator { ctx: self, tk })
    }
}

/// Pointwise metric evaluation for one controller.
#[derive(Debug, Clone)]
pub struct Evaluator<'a, T: Real> {
    ctx: &'a FreqContext<T>,
    tk: Option<TransferRealization<T>>,
}

impl<T: Real> Evaluator<'_, T> {
    /// `T_K(e^{jω})`; `None` for the noncausal benchmark.
    pub fn tk(&self, omega: T) -> Result<Option<CMat<T>>, PipelineError> {
        self.tk.as_ref().map(|t| t.eval(omega)).transpose()
    }

    /// `T_K*T_K`.
    pub fn gram(&self, omega: T) -> Result<CMat<T>, PipelineError> {
        match self.tk(omega)? {
            Some(t) => Ok(t.adjoint() * t),
            None => self.ctx.clairvoyant(omega),
        }
    }

    pub fn point(&self, omega: T) -> Result<PointMetrics<T>, PipelineError> {
        let h = self.gram(omega)?;
        let frob_density = h.trace().re;
        let opnorm = lambda_max_hermitian(&h);
        if self.tk.is_none() {
            return Ok(PointMetrics { frob_density, opnorm, regret: T::zero(), cr: T::one() });
        }
        let c0 = self.ctx.clairvoyant(omega)?;
        let regret = lambda_max_hermitian(&(&h - c0));
        let mm = self.ctx.m.eval(omega)?;
        let smax = crate::numerics::sigma_max(&mm);
        if sigma_min(&mm) <= T::lit(M_RANK_TOL) * smax {
            return Err(PipelineError::SingularAt { re: omega.cos().as_f64(), im: omega.sin().as_f64() });
        }
        let mi = self.ctx.m_inv.eval(omega)?;
        let cr = lambda_max_hermitian(&(mi.adjoint() * &h * &mi));
        Ok(PointMetrics { frob_density, opnorm, regret, cr })
    }

    /// `½‖T_K(e^{jω})a‖²`, the steady-state average cost of `a sin(ωt)`
    /// for `0 < ω < π`.
    pub fn directional(&self, omega: T, a: &DMatrix<T>) -> Result<T, PipelineError> {
        let h = self.gram(omega)?;
        let ac = crate::scalar::complexify(a);
        Ok((ac.adjoint() * h * ac)[(0, 0)].re * T::lit(0.5))
    }
}

fn pick<T: Real>(m: &PointMetrics<T>, k: usize) -> T {
    match k {
        0 => m.frob_density,
        1 => m.opnorm,
        2 => m.regret,
        _ => m.cr,
    }
}

fn eval_half<T: Real>(ev: &Evaluator<'_, T>, omegas: &[T]) -> Result<Vec<PointMetrics<T>>, PipelineError> {
    omegas.par_iter().map(|&w| ev.point(w)).collect()
}

/// Golden-section maximization of metric `k` on `[lo, hi]`.
fn golden_max<T: Real>(ev: &Evaluator<'_, T>, k: usize, lo: T, hi: T, iters: usize) -> Result<Sup<T>, PipelineError> {
    let g = (T::lit(5.0).sqrt() - T::one()) * T::lit(0.5);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = pick(&ev.point(c)?, k);
    let mut fd = pick(&ev.point(d)?, k);
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = pick(&ev.point(c)?, k);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = pick(&ev.point(d)?, k);
        }
    }
    Ok(if fc > fd { Sup { value: fc, omega: c } } else { Sup { value: fd, omega: d } })
}

/// Grid sup of metric `k` refined around the top local maxima.
fn sup_of<T: Real>(
    ev: &Evaluator<'_, T>,
    omegas: &[T],
    vals: &[PointMetrics<T>],
    k: usize,
    grid: &Grid,
) -> Result<Sup<T>, PipelineError> {
    let series: Vec<T> = vals.iter().map(|v| pick(v, k)).collect();
    let last = series.len() - 1;
    let mut best = Sup { value: series[0], omega: omegas[0] };
    for (i, &v) in series.iter().enumerate() {
        if v > best.value {
            best = Sup { value: v, omega: omegas[i] };
        }
    }
    if grid.refine_iterations == 0 {
        return Ok(best);
    }
    let mut peaks: Vec<usize> = (0..=last)
        .filter(|&i| {
            let left = if i == 0 { series[1] } else { series[i - 1] };
            let right = if i == last { series[last - 1] } else { series[i + 1] };
            series[i] >= left && series[i] >= right
        })
        .collect();
    peaks.sort_by(|&i, &j| series[j].partial_cmp(&series[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    peaks.truncate(grid.refine_top);
    let refined: Vec<Sup<T>> = peaks
        .par_iter()
        .map(|&i| {
            let lo = omegas[i.saturating_sub(1)];
            let hi = omegas[(i + 1).min(last)];
            golden_max(ev, k, lo, hi, grid.refine_iterations)
        })
        .collect::<Result<_, _>>()?;
    for r in refined {
        if r.value > best.value {
            best = r;
        }
    }
    Ok(best)
}

/// Periodic trapezoid mean of a symmetric density sampled on `k = 0..=N/2`.
fn trapezoid_mean<T: Real>(half: &[T]) -> T {
    let last = half.len() - 1;
    let n = T::lit((2 * last) as f64);
    let inner = half[1..last].iter().fold(T::zero(), |s, &x| s + x);
    (half[0] + half[last] + inner * T::lit(2.0)) / n
}

/// `I_{2N} + (I_{2N} − I_N)/3` from densities on the `2N`-point half grid.
fn richardson<T: Real>(fine: &[T]) -> T {
    let coarse: Vec<T> = fine.iter().step_by(2).copied().collect();
    let i2 = trapezoid_mean(fine);
    let i1 = trapezoid_mean(&coarse);
    i2 + (i2 - i1) / T::lit(3.0)
}

/// Metrics of one controller over a grid.
#[derive(Debug, Clone)]
pub struct ControllerMetrics<T> {
    pub label: String,
    /// Densities on `ω ∈ [0, 2π)`, aligned with [`FrequencyMetrics::grid`].
    pub points: Vec<PointMetrics<T>>,
    pub frobenius: T,
    pub opnorm: Sup<T>,
    pub regret: Sup<T>,
    pub cr: Sup<T>,
}

#[derive(Debug, Clone)]
pub struct FrequencyMetrics<T> {
    pub grid: Vec<T>,
    pub controllers: Vec<ControllerMetrics<T>>,
}

pub fn evaluate<T: Real>(
    ctx: &FreqContext<T>,
    label: &str,
    ctrl: &Evaluated<'_, T>,
    grid: &Grid,
) -> Result<ControllerMetrics<T>, PipelineError> {
    let ev = ctx.evaluator(ctrl)?;
    let n = grid.points;
    let fine_omegas = Grid::half::<T>(2 * n);
    let fine = eval_half(&ev, &fine_omegas)?;
    let half_omegas: Vec<T> = fine_omegas.iter().step_by(2).copied().collect();
    let half: Vec<PointMetrics<T>> = fine.iter().step_by(2).copied().collect();
    let frob: Vec<T> = fine.iter().map(|p| p.frob_density).collect();
    let frobenius = richardson(&frob);
    let mut points = half.clone();
    points.extend(half[1..n / 2].iter().rev().copied());
    let (opnorm, regret, cr) = if matches!(ctrl, Evaluated::Noncausal) {
        (
            sup_of(&ev, &half_omegas, &half, 1, grid)?,
            Sup { value: T::zero(), omega: T::zero() },
            Sup { value: T::one(), omega: T::zero() },
        )
    } else {
        (
            sup_of(&ev, &half_omegas, &half, 1, grid)?,
            sup_of(&ev, &half_omegas, &half, 2, grid)?,
            sup_of(&ev, &half_omegas, &half, 3, grid)?,
        )
    };
    Ok(ControllerMetrics { label: label.to_string(), points, frobenius, opnorm, regret, cr })
}

pub fn sweep<T: Real>(
    ctx: &FreqContext<T>,
    controllers: &[(String, Evaluated<'_, T>)],
    grid: &Grid,
) -> Result<FrequencyMetrics<T>, PipelineError> {
    let controllers = controllers
        .iter()
        .map(|(label, c)| evaluate(ctx, label, c, grid))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FrequencyMetrics { grid: grid.omegas(), controllers })
}

fn g17(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.16e}")
    }
}

impl<T: Real> FrequencyMetrics<T> {
    pub fn get(&self, label: &str) -> Option<&ControllerMetrics<T>> {
        self.controllers.iter().find(|c| c.label == label)
    }

    /// `omega,controller,frob_density,opnorm,regret,cr`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("omega,controller,frob_density,opnorm,regret,cr\n");
        for (i, w) in self.grid.iter().enumerate() {
            for c in &self.controllers {
                let p = &c.points[i];
                writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    g17(w.as_f64()),
                    c.label,
                    g17(p.frob_density.as_f64()),
                    g17(p.opnorm.as_f64()),
                    g17(p.regret.as_f64()),
                    g17(p.cr.as_f64())
                )
                .unwrap();
            }
        }
        s
    }

    /// Squared-norm summary in the layout
    /// `controller  frob_sq  opnorm_sq  regret  cr`.
    pub fn summary_table(&self) -> String {
        let mut s = format!("{:<10} {:>14} {:>14} {:>14} {:>14}\n", "controller", "frob_sq", "opnorm_sq", "regret", "cr");
        for c in &self.controllers {
            writeln!(
                s,
                "{:<10} {:>14.6} {:>14.6} {:>14.6} {:>14.6}",
                c.label,
                c.frobenius.as_f64(),
                c.opnorm.value.as_f64(),
                c.regret.value.as_f64(),
                c.cr.value.as_f64()
            )
            .unwrap();
        }
        s
    }
}

pub fn metric_frobenius<T: Real>(
    sys: &LtiSystem<T>,
    ctrl: &Evaluated<'_, T>,
    grid: &Grid,
    opts: &SolverOptions<T>,
) -> Result<T, PipelineError> {
    let ctx = FreqContext::new(sys, opts)?;
    let ev = ctx.evaluator(ctrl)?;
    let omegas = Grid::half::<T>(2 * grid.points);
    let d: Vec<T> = omegas.par_iter().map(|&w| ev.gram(w).map(|h| h.trace().re)).collect::<Result<_, _>>()?;
    Ok(richardson(&d))
}

fn metric_sup<T: Real>(ctx: &FreqContext<T>, ctrl: &Evaluated<'_, T>, grid: &Grid, k: usize) -> Result<Sup<T>, PipelineError> {
    let ev = ctx.evaluator(ctrl)?;
    let omegas = Grid::half::<T>(grid.points);
    let vals = eval_half(&ev, &omegas)?;
    sup_of(&ev, &omegas, &vals, k, grid)
}

pub fn metric_opnorm_ctx<T: Real>(ctx: &FreqContext<T>, ctrl: &Evaluated<'_, T>, grid: &Grid) -> Result<Sup<T>, PipelineError> {
    metric_sup(ctx, ctrl, grid, 1)
}

pub fn metric_regret_ctx<T: Real>(ctx: &FreqContext<T>, ctrl: &Evaluated<'_, T>, grid: &Grid) -> Result<Sup<T>, PipelineError> {
    metric_sup(ctx, ctrl, grid, 2)
}

pub fn metric_cr_ctx<T: Real>(ctx: &FreqContext<T>, ctrl: &Evaluated<'_, T>, grid: &Grid) -> Result<Sup<T>, PipelineError> {
    metric_sup(ctx, ctrl, grid, 3)
}

pub fn metric_opnorm<T: Real>(
    sys: &LtiSystem<T>,
    ctrl: &Evaluated<'_, T>,
    grid: &Grid,
    opts: &SolverOptions<T>,
) -> Result<Sup<T>, PipelineError> {
    metric_opnorm_ctx(&FreqContext::new(sys, opts)?, ctrl, grid)
}

pub fn metric_regret<T: Real>(
    sys: &LtiSystem<T>,
    ctrl: &Evaluated<'_, T>,
    grid: &Grid,
    opts: &SolverOptions<T>,
) -> Result<Sup<T>, PipelineError> {
    metric_regret_ctx(&FreqContext::new(sys, opts)?, ctrl, grid)
}

pub fn metric_cr<T: Real>(
    sys: &LtiSystem<T>,
    ctrl: &Evaluated<'_, T>,
    grid: &Grid,
    opts: &SolverOptions<T>,
) -> Result<Sup<T>, PipelineError> {
    metric_cr_ctx(&FreqContext::new(sys, opts)?, ctrl, grid)
}

/// `sup_ω λ_max(G*(I + FF*)⁻¹G)`.
pub fn clairvoyant_sup<T: Real>(ctx: &FreqContext<T>, grid: &Grid) -> Result<Sup<T>, PipelineError> {
    metric_opnorm_ctx(ctx, &Evaluated::Noncausal, grid)
}

/// `T_K(e^{jω}) = [FK + G; R^{1/2}K]` for a controller in transfer form.
pub fn transfer_tk<T: Real>(
    sys: &LtiSystem<T>,
    ctrl: &ControllerRealization<T>,
    omega: T,
) -> Result<CMat<T>, PipelineError> {
    let f = crate::pipeline::build_f(sys)?.eval(omega)?;
    let g = build_g(sys)?.eval(omega)?;
    let k = ctrl.realization().eval(omega)?;
    let rh = crate::scalar::complexify(&psd_sqrt(&sys.r)?);
    let top = &f * &k + g;
    let bottom = rh * k;
    let mut out = CMat::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(&top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(&bottom);
    Ok(out)
}

/// Label used for a method in CSV output.
pub fn label(method: Method) -> &'static str {
    method.name()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{synth_cr, synth_h2, synth_regret, SynthesisOptions};

    fn scalar() -> LtiSystem<f64> {
        LtiSystem::scalar(0.5, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn grid_is_even_and_sorted() {
        let g = Grid::new(7);
        assert_eq!(g.points, 8);
        let w: Vec<f64> = g.omegas();
        assert!(w.windows(2).all(|p| p[0] < p[1]));
        assert!(*w.last().unwrap() < std::f64::consts::TAU);
    }

    #[test]
    fn trapezoid_of_constant() {
        assert!((richardson(&[2.0f64; 9]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cr_metric_matches_certificate_scalar() {
        let sys = scalar();
        let (cert, ctrl) = synth_cr(&sys, &SynthesisOptions::default()).unwrap();
        let s = metric_cr(&sys, &Evaluated::Causal(&ctrl), &Grid::new(256), &SolverOptions::default()).unwrap();
        assert!((s.value - cert.ratio).abs() / cert.ratio < 1e-6, "{} vs {}", s.value, cert.ratio);
    }

    #[test]
    fn regret_metric_matches_certificate_scalar() {
        let sys = scalar();
        let (cert, ctrl) = synth_regret(&sys, &SynthesisOptions::default()).unwrap();
        let s = metric_regret(&sys, &Evaluated::Causal(&ctrl), &Grid::new(256), &SolverOptions::default()).unwrap();
        assert!((s.value - cert.value).abs() / cert.value < 1e-6, "{} vs {}", s.value, cert.value);
    }

    #[test]
    fn transfer_and_closed_loop_agree() {
        let sys = scalar();
        let (_, ctrl) = synth_h2(&sys, &SynthesisOptions::default()).unwrap();
        let ctx = FreqContext::new(&sys, &SolverOptions::default()).unwrap();
        let ev = ctx.evaluator(&Evaluated::Causal(&ctrl)).unwrap();
        for w in [0.0, 0.3, 2.0] {
            let a = transfer_tk(&sys, &ctrl, w).unwrap();
            let b = ev.tk(w).unwrap().unwrap();
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn noncausal_rows() {
        let sys = scalar();
        let ctx = FreqContext::new(&sys, &SolverOptions::default()).unwrap();
        let m = evaluate(&ctx, "noncausal", &Evaluated::Noncausal, &Grid::new(64)).unwrap();
        assert!(m.points.iter().all(|p| p.regret == 0.0 && p.cr == 1.0));
        assert_eq!(m.points.len(), 64);
    }
}
