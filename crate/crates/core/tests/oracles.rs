//! Reference values from closed forms and an independent SciPy computation.

use compet_ctl::freqeval::{metric_frobenius, transfer_tk, Evaluated, FreqContext, Grid};
use compet_ctl::model::{parse_system, LtiSystem};
use compet_ctl::numerics::SolverOptions;
use compet_ctl::synthesis::{synth_cr, synth_h2, synth_hinf, ControllerRealization, FeedbackForm, SynthesisOptions};
use nalgebra::DMatrix;

const THREE_STATE: &str = include_str!("../../cli/data/three_state.sys");

fn scalar() -> LtiSystem<f64> {
    LtiSystem::scalar(0.5, 1.0, 1.0, 1.0, 1.0).unwrap()
}

fn p_scalar() -> f64 {
    (0.25 + 4.0625f64.sqrt()) / 2.0
}

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol * b.abs().max(1.0), "{a} vs {b}");
}

#[test]
fn scalar_riccati_gain_and_ratio() {
    let (cert, _) = synth_cr(&scalar(), &SynthesisOptions::default()).unwrap();
    close(cert.p[(0, 0)], p_scalar(), 1e-13);
    close(cert.k_lqr[(0, 0)], 0.265_564_437_074_637_4, 1e-9);
    close(cert.ratio, 2.283_195_554_634_329_7, 1e-12);
    close(cert.ratio, 1.0 + p_scalar().powi(2), 1e-13);
}

#[test]
fn scalar_clairvoyant_frobenius_closed_form() {
    // (1/2π)∫ dω / (|e^{jω} − a|² + 1) = 1/√(4 + a⁴)
    let sys = scalar();
    let v = metric_frobenius(&sys, &Evaluated::Noncausal, &Grid::new(512), &SolverOptions::default()).unwrap();
    close(v, 0.496_138_938_356_833_87, 1e-12);
}

#[test]
fn h2_frobenius_equals_riccati_trace() {
    let sys: LtiSystem<f64> = parse_system(THREE_STATE).unwrap();
    let (cert, h2) = synth_h2(&sys, &SynthesisOptions::default()).unwrap();
    close(cert.p.trace(), 7.368_779_497_323_21, 1e-11);
    let v = metric_frobenius(&sys, &Evaluated::Causal(&h2), &Grid::new(1024), &SolverOptions::default()).unwrap();
    close(v, 6.764_511_335_805_491, 1e-10);
}

#[test]
fn open_loop_frobenius_without_control() {
    let (a, b, q) = (0.8, 1.5, 2.0);
    let sys = LtiSystem::scalar(a, 0.0, b, q, 1.0).unwrap();
    let zero = FeedbackForm {
        ac: DMatrix::zeros(0, 0),
        bc: DMatrix::zeros(0, 1),
        cc: DMatrix::zeros(1, 0),
        dx: DMatrix::zeros(1, 1),
    };
    let ctrl = ControllerRealization::from_feedback(&sys, zero).unwrap();
    let v = metric_frobenius(&sys, &Evaluated::Causal(&ctrl), &Grid::new(1024), &SolverOptions::default()).unwrap();
    close(v, b * b * q / (1.0 - a * a), 1e-10);
}

#[test]
fn scalar_h2_response_at_dc() {
    let sys = scalar();
    let (_, h2) = synth_h2(&sys, &SynthesisOptions::default()).unwrap();
    let k = 0.5 * p_scalar() / (1.0 + p_scalar());
    let acl = 0.5 - k;
    let t = transfer_tk(&sys, &h2, 0.0).unwrap();
    close(t[(0, 0)].re, 1.0 / (1.0 - acl), 1e-12);
    close(t[(1, 0)].re, -k / (1.0 - acl), 1e-12);
    assert!(t[(0, 0)].im.abs() < 1e-12 && t[(1, 0)].im.abs() < 1e-12);
}

#[test]
fn scalar_hinf_matches_static_gain_search() {
    // min over static k of sup_ω (1 + k²)/|e^{jω} − (a − k)|² is 5/4 at k = 1/2
    let (cert, _) = synth_hinf(&scalar(), &SynthesisOptions::default()).unwrap();
    close(cert.gamma * cert.gamma, 1.25, 3e-4);
    assert!(cert.gamma * cert.gamma >= 1.25 * (1.0 - 1e-9));
}

#[test]
fn f32_and_f64_agree() {
    let s32: LtiSystem<f32> = parse_system(THREE_STATE).unwrap();
    let s64: LtiSystem<f64> = parse_system(THREE_STATE).unwrap();
    let (c32, _) = synth_cr(&s32, &SynthesisOptions::default()).unwrap();
    let (c64, _) = synth_cr(&s64, &SynthesisOptions::default()).unwrap();
    close(c32.ratio as f64, c64.ratio, 1e-4);
    let ctx = FreqContext::new(&s32, &SolverOptions::default()).unwrap();
    let g = ctx.clairvoyant(1.0).unwrap();
    assert!(g.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
}
