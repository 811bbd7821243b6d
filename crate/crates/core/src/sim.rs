//! Closed-loop time-domain simulation with Gaussian, sinusoidal and
//! file-driven disturbances.

use crate::model::LtiSystem;
use crate::scalar::Real;
use crate::synthesis::ControllerRealization;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

/// Steps discarded before averaging sinusoidal runs.
pub const SINE_BURN_IN: usize = 1000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("closed loop is unstable (spectral radius {radius})")]
    UnstableLoop { radius: f64 },
    #[error("state became non-finite at step {step}")]
    NonFiniteState { step: usize },
    #[error("disturbance file exhausted: requested step {step} of {rows}")]
    FileExhausted { step: usize, rows: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid disturbance: {0}")]
    InvalidSpec(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceKind<T: Real> {
    /// `w_t ~ N(0, I)`; trial `i` uses PCG stream `i` of `seed`.
    Gaussian { seed: u64 },
    /// `w_t[i] = amplitude[i]·sin(ω₀t + phase[i])`.
    Sine { omega: T, amplitude: Vec<T>, phase: Vec<T> },
    /// Row `t` of the matrix is `w_t`.
    File { data: Arc<DMatrix<T>> },
}

impl<T: Real> DisturbanceKind<T> {
    /// Unit sinusoid on every channel.
    pub fn sine(omega: T, m: usize) -> Self {
        Self::Sine { omega, amplitude: vec![T::one(); m], phase: vec![T::zero(); m] }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Gaussian { .. } => "gaussian".into(),
            Self::Sine { omega, .. } => format!("sine({})", omega.as_f64()),
            Self::File { .. } => "file".into(),
        }
    }

    fn check(&self, m: usize) -> Result<()> {
        match self {
            Self::Gaussian { .. } => Ok(()),
            Self::Sine { omega, amplitude, phase } => {
                let w = omega.as_f64();
                if !(0.0..std::f64::consts::TAU).contains(&w) {
                    return Err(SimError::InvalidSpec(format!("sine frequency {w} outside [0, 2π)")));
                }
                if amplitude.len() != m || phase.len() != m {
                    return Err(SimError::DimensionMismatch(format!(
                        "sine has {} amplitudes and {} phases for {m} channels",
                        amplitude.len(),
                        phase.len()
                    )));
                }
                Ok(())
            }
            Self::File { data } => {
                if data.ncols() != m {
                    return Err(SimError::DimensionMismatch(format!(
                        "disturbance file has {} columns, plant has {m} disturbance inputs",
                        data.ncols()
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSpec<T: Real> {
    pub kind: DisturbanceKind<T>,
    pub horizon: usize,
}

/// Sequential generator for one trial.
pub struct DisturbanceStream<'a, T: Real> {
    kind: &'a DisturbanceKind<T>,
    rng: Option<Pcg64>,
    m: usize,
    t: usize,
}

impl<'a, T: Real> DisturbanceStream<'a, T> {
    pub fn new(kind: &'a DisturbanceKind<T>, m: usize, trial: usize) -> Self {
        let rng = match kind {
            DisturbanceKind::Gaussian { seed } => Some(Pcg64::new(*seed as u128, trial as u128)),
            _ => None,
        };
        Self { kind, rng, m, t: 0 }
    }

    pub fn next_into(&mut self, w: &mut DVector<T>) -> Result<()> {
        let t = self.t;
        match self.kind {
            DisturbanceKind::Gaussian { .. } => {
                let rng = self.rng.as_mut().expect("gaussian stream has a generator");
                for i in 0..self.m {
                    let x: f64 = rng.sample(StandardNormal);
                    w[i] = T::lit(x);
                }
            }
            DisturbanceKind::Sine { omega, amplitude, phase } => {
                let arg = *omega * T::lit(t as f64);
                for i in 0..self.m {
                    w[i] = amplitude[i] * (arg + phase[i]).sin();
                }
            }
            DisturbanceKind::File { data } => {
                if t >= data.nrows() {
                    return Err(SimError::FileExhausted { step: t, rows: data.nrows() });
                }
                for i in 0..self.m {
                    w[i] = data[(t, i)];
                }
            }
        }
        self.t += 1;
        Ok(())
    }
}

/// `w_t` of trial 0.
pub fn gen_disturbance<T: Real>(spec: &DisturbanceSpec<T>, m: usize, t: usize) -> Result<DVector<T>> {
    spec.kind.check(m)?;
    let mut s = DisturbanceStream::new(&spec.kind, m, 0);
    let mut w = DVector::zeros(m);
    for _ in 0..=t {
        s.next_into(&mut w)?;
    }
    Ok(w)
}

/// Reads whitespace- or comma-separated rows, one disturbance vector per
/// line; `#` starts a comment.
pub fn load_disturbance_file<T: Real>(path: &Path, m: usize) -> Result<DMatrix<T>> {
    let text = std::fs::read_to_string(path).map_err(|source| SimError::Io { path: path.into(), source })?;
    let mut rows: Vec<T> = Vec::new();
    let mut count = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if vals.len() != m {
            return Err(SimError::Parse {
                path: path.into(),
                line: i + 1,
                message: format!("expected {m} values, found {}", vals.len()),
            });
        }
        for v in vals {
            let x: f64 = v.parse().map_err(|_| SimError::Parse {
                path: path.into(),
                line: i + 1,
                message: format!("invalid number `{v}`"),
            })?;
            rows.push(T::lit(x));
        }
        count += 1;
    }
    Ok(DMatrix::from_row_slice(count, m, &rows))
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub trials: usize,
    /// Steps excluded from the averages; `None` uses [`SINE_BURN_IN`] for
    /// sinusoids and zero otherwise.
    pub burn_in: Option<usize>,
    /// Record `J_t` every `record_stride` steps (and at the horizon).
    pub record_stride: usize,
    /// Feed `B_w w_t` to the controller directly instead of reconstructing
    /// it from consecutive states.
    pub direct_feed: bool,
    pub keep_trajectories: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { trials: 1, burn_in: None, record_stride: 100, direct_feed: false, keep_trajectories: false }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub x: Vec<DVector<T>>,
    pub u: Vec<DVector<T>>,
}

#[derive(Debug, Clone)]
pub struct TrialResult<T: Real> {
    /// `(t, J_t)` at the recorded steps.
    pub running: Vec<(usize, T)>,
    pub final_avg: T,
    pub trajectory: Option<Trajectory<T>>,
}

#[derive(Debug, Clone)]
pub struct SimResult<T: Real> {
    pub trials: Vec<TrialResult<T>>,
    pub mean: T,
    pub stderr: T,
    pub horizon: usize,
    pub disturbance: String,
}

impl<T: Real> SimResult<T> {
    /// `t,trial,cost_avg`.
    pub fn running_csv(&self) -> String {
        let mut s = String::from("t,trial,cost_avg\n");
        for (i, tr) in self.trials.iter().enumerate() {
            for (t, j) in &tr.running {
                writeln!(s, "{t},{i},{:.16e}", j.as_f64()).unwrap();
            }
        }
        s
    }

    /// One `controller,disturbance,mean,stderr,T,trials` row, no header.
    pub fn summary_row(&self, controller: &str) -> String {
        format!(
            "{controller},{},{:.16e},{:.16e},{},{}\n",
            self.disturbance,
            self.mean.as_f64(),
            self.stderr.as_f64(),
            self.horizon,
            self.trials.len()
        )
    }
}

pub const SUMMARY_HEADER: &str = "controller,disturbance,mean,stderr,T,trials\n";

fn run_trial<T: Real>(
    sys: &LtiSystem<T>,
    ctrl: &ControllerRealization<T>,
    kind: &DisturbanceKind<T>,
    trial: usize,
    horizon: usize,
    burn_in: usize,
    opts: &SimOptions,
) -> Result<TrialResult<T>> {
    let (n, p, m) = (sys.n(), sys.p(), sys.m());
    let mut stream = DisturbanceStream::new(kind, m, trial);
    let mut w = DVector::zeros(m);
    let mut x = DVector::<T>::zeros(n);
    let mut x_next = DVector::<T>::zeros(n);
    let mut u = DVector::<T>::zeros(p);
    let mut b = DVector::<T>::zeros(n);
    let mut bw = DVector::<T>::zeros(n);
    let mut ru = DVector::<T>::zeros(p);
    let mut qx = DVector::<T>::zeros(n);
    let (states, fb) = match &ctrl.feedback {
        Some(fb) => (fb.ac.nrows(), Some(fb)),
        None => (ctrl.transfer.ak.nrows(), None),
    };
    let mut xi = DVector::<T>::zeros(states);
    let mut xi_next = DVector::<T>::zeros(states);
    let mut total = T::zero();
    let mut running = Vec::new();
    let mut traj = opts.keep_trajectories.then(|| Trajectory { x: Vec::new(), u: Vec::new() });
    let stride = opts.record_stride.max(1);

    for step in 0..burn_in + horizon {
        match fb {
            Some(fb) => {
                u.gemv(T::one(), &fb.cc, &xi, T::zero());
                u.gemv(T::one(), &fb.dx, &x, T::one());
            }
            None => u.gemv(T::one(), &ctrl.transfer.ck, &xi, T::zero()),
        }
        if step >= burn_in {
            qx.gemv(T::one(), &sys.q, &x, T::zero());
            ru.gemv(T::one(), &sys.r, &u, T::zero());
            total += x.dot(&qx) + u.dot(&ru);
            let t = step - burn_in + 1;
            if t % stride == 0 || t == horizon {
                running.push((t, total / T::lit(t as f64)));
            }
            if let Some(tr) = traj.as_mut() {
                tr.x.push(x.clone());
                tr.u.push(u.clone());
            }
        }
        stream.next_into(&mut w)?;
        bw.gemv(T::one(), &sys.b_w, &w, T::zero());
        x_next.gemv(T::one(), &sys.a, &x, T::zero());
        x_next.gemv(T::one(), &sys.b_u, &u, T::one());
        x_next += &bw;
        match fb {
            Some(fb) => {
                if opts.direct_feed {
                    b.copy_from(&bw);
                } else {
                    b.copy_from(&x_next);
                    b.gemv(-T::one(), &sys.a, &x, T::one());
                    b.gemv(-T::one(), &sys.b_u, &u, T::one());
                }
                xi_next.gemv(T::one(), &fb.ac, &xi, T::zero());
                xi_next.gemv(T::one(), &fb.bc, &b, T::one());
            }
            None => {
                xi_next.gemv(T::one(), &ctrl.transfer.ak, &xi, T::zero());
                xi_next.gemv(T::one(), &ctrl.transfer.bk, &w, T::one());
            }
        }
        std::mem::swap(&mut x, &mut x_next);
        std::mem::swap(&mut xi, &mut xi_next);
        if !total.is_finite() || (step % 64 == 0 && !(x.iter().all(|v| v.is_finite()))) {
            return Err(SimError::NonFiniteState { step });
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(SimError::NonFiniteState { step: burn_in + horizon });
    }
    let final_avg = total / T::lit(horizon as f64);
    Ok(TrialResult { running, final_avg, trajectory: traj })
}

/// Runs `opts.trials` independent trials from `x₀ = 0`, `ξ₀ = 0`.
pub fn simulate<T: Real>(
    sys: &LtiSystem<T>,
    ctrl: &ControllerRealization<T>,
    spec: &DisturbanceSpec<T>,
    opts: &SimOptions,
) -> Result<SimResult<T>> {
    if spec.horizon == 0 {
        return Err(SimError::InvalidSpec("horizon must be at least 1".into()));
    }
    if opts.trials == 0 {
        return Err(SimError::InvalidSpec("at least one trial is required".into()));
    }
    spec.kind.check(sys.m())?;
    let shapes_ok = match &ctrl.feedback {
        Some(fb) => fb.dx.shape() == (sys.p(), sys.n()) && fb.bc.ncols() == sys.n(),
        None => ctrl.transfer.bk.ncols() == sys.m() && ctrl.transfer.ck.nrows() == sys.p(),
    };
    if !shapes_ok {
        return Err(SimError::DimensionMismatch("controller does not fit plant".into()));
    }
    let radius = ctrl.closed_loop_radius(sys);
    if !(radius < T::one()) {
        return Err(SimError::UnstableLoop { radius: radius.as_f64() });
    }
    let burn_in = opts.burn_in.unwrap_or(match spec.kind {
        DisturbanceKind::Sine { .. } => SINE_BURN_IN,
        _ => 0,
    });
    let trials: Vec<TrialResult<T>> = (0..opts.trials)
        .into_par_iter()
        .map(|i| run_trial(sys, ctrl, &spec.kind, i, spec.horizon, burn_in, opts))
        .collect::<Result<_>>()?;
    let k = T::lit(trials.len() as f64);
    let mean = trials.iter().fold(T::zero(), |s, t| s + t.final_avg) / k;
    let stderr = if trials.len() > 1 {
        let var = trials.iter().fold(T::zero(), |s, t| s + (t.final_avg - mean).powi(2)) / (k - T::one());
        (var / k).sqrt()
    } else {
        T::zero()
    };
    Ok(SimResult { trials, mean, stderr, horizon: spec.horizon, disturbance: spec.kind.label() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{synth_h2, SynthesisOptions};

    fn scalar() -> LtiSystem<f64> {
        LtiSystem::scalar(0.5, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn quarter_period_sine() {
        let spec = DisturbanceSpec { kind: DisturbanceKind::sine(std::f64::consts::FRAC_PI_2, 2), horizon: 4 };
        let expected = [0.0, 1.0, 0.0, -1.0];
        for (t, e) in expected.iter().enumerate() {
            let w = gen_disturbance(&spec, 2, t).unwrap();
            assert!((w[0] - e).abs() < 1e-15 && (w[1] - e).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_is_deterministic() {
        let spec = DisturbanceSpec::<f64> { kind: DisturbanceKind::Gaussian { seed: 7 }, horizon: 10 };
        assert_eq!(gen_disturbance(&spec, 3, 5).unwrap(), gen_disturbance(&spec, 3, 5).unwrap());
    }

    #[test]
    fn file_exhaustion() {
        let data = Arc::new(DMatrix::<f64>::from_element(3, 1, 1.0));
        let spec = DisturbanceSpec { kind: DisturbanceKind::File { data }, horizon: 3 };
        assert!(gen_disturbance(&spec, 1, 2).is_ok());
        assert!(matches!(gen_disturbance(&spec, 1, 3), Err(SimError::FileExhausted { step: 3, rows: 3 })));
    }

    #[test]
    fn zero_disturbance_zero_cost() {
        let sys = scalar();
        let (_, ctrl) = synth_h2(&sys, &SynthesisOptions::default()).unwrap();
        let data = Arc::new(DMatrix::<f64>::zeros(50, 1));
        let spec = DisturbanceSpec { kind: DisturbanceKind::File { data }, horizon: 50 };
        let opts = SimOptions { keep_trajectories: true, ..Default::default() };
        let r = simulate(&sys, &ctrl, &spec, &opts).unwrap();
        assert_eq!(r.mean, 0.0);
        let tr = r.trials[0].trajectory.as_ref().unwrap();
        assert!(tr.x.iter().chain(&tr.u).all(|v| v.norm() == 0.0));
    }
}
