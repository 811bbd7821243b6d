mod common;

use common::*;
use compet_ctl::freqeval::{evaluate, Evaluated, FreqContext, Grid};
use compet_ctl::model::{format_controller, format_system, parse_controller, parse_system, LtiSystem};
use compet_ctl::numerics::{
    dare_residual, lambda_max_pair, solve_dare, solve_dlyap_doubling, solve_dlyap_kron, spectral_radius,
    SolverOptions,
};
use compet_ctl::sim::{simulate, DisturbanceKind, DisturbanceSpec, SimOptions};
use compet_ctl::synthesis::{synth_cr, synth_h2, synth_regret, ControllerRealization, SynthesisOptions};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn seeded_system(seed: u64) -> LtiSystem<f64> {
    let mut r = rng(seed);
    let (n, p, m) = random_shape(&mut r, None);
    random_system(&mut r, n, p, m)
}

fn opts() -> SynthesisOptions<f64> {
    SynthesisOptions::default()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn dlyap_kron_and_doubling_agree(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = gauss(&mut r, 5, 5);
        let a = &a * (0.9 / spectral_radius(&a).max(1e-3));
        let w = spd(&mut r, 5);
        let x1 = solve_dlyap_kron(&a, &w).unwrap();
        let x2 = solve_dlyap_doubling(&a, &w, &SolverOptions::default()).unwrap();
        prop_assert!((&x1 - &x2).norm() <= 1e-10 * x1.norm());
    }

    #[test]
    fn lambda_max_pair_is_symmetric(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let z = spd(&mut r, n);
        let p = spd(&mut r, n);
        let a = lambda_max_pair(&z, &p).unwrap();
        let b = lambda_max_pair(&p, &z).unwrap();
        prop_assert!(rel(a, b) < 1e-10);
    }

    #[test]
    fn dare_solution_is_stabilizing(seed in any::<u64>()) {
        let sys = seeded_system(seed);
        let sol = solve_dare(&sys.a, &sys.b_u, &sys.q, &sys.r, &SolverOptions::default()).unwrap();
        prop_assert!(sol.closed_loop_radius < 1.0);
        let res = dare_residual(&sys.a, &sys.b_u, &sys.q, &sys.r, &DMatrix::zeros(sys.n(), sys.p()), &sol.p).unwrap();
        prop_assert!(res < 1e-9);
    }

    #[test]
    fn regret_nonnegative_and_ratio_at_least_one(seed in any::<u64>()) {
        let sys = seeded_system(seed);
        let ctx = FreqContext::new(&sys, &SolverOptions::default()).unwrap();
        let (_, h2) = synth_h2(&sys, &opts()).unwrap();
        let m = evaluate(&ctx, "h2", &Evaluated::Causal(&h2), &Grid::new(128)).unwrap();
        for p in &m.points {
            prop_assert!(p.regret >= -1e-9 * p.opnorm);
            prop_assert!(p.cr >= 1.0 - 1e-9);
        }
        for (sup, k) in [(m.opnorm.value, 1), (m.regret.value, 2), (m.cr.value, 3)] {
            let grid_max = m.points.iter().map(|p| [p.frob_density, p.opnorm, p.regret, p.cr][k]).fold(f64::MIN, f64::max);
            prop_assert!(sup >= grid_max);
        }
    }

    #[test]
    fn ratio_invariant_under_disturbance_scaling(seed in any::<u64>(), s in 0.1f64..10.0) {
        let sys = seeded_system(seed);
        let scaled = LtiSystem::new(sys.a.clone(), sys.b_u.clone(), &sys.b_w * s, sys.q.clone(), sys.r.clone()).unwrap();
        let (a, _) = synth_cr(&sys, &opts()).unwrap();
        let (b, _) = synth_cr(&scaled, &opts()).unwrap();
        prop_assert!(rel(a.ratio, b.ratio) < 1e-8);
    }

    #[test]
    fn ratio_invariant_under_cost_scaling(seed in any::<u64>(), s in 0.1f64..10.0) {
        let sys = seeded_system(seed);
        let scaled = LtiSystem::new(sys.a.clone(), sys.b_u.clone(), sys.b_w.clone(), &sys.q * s, &sys.r * s).unwrap();
        let (a, _) = synth_cr(&sys, &opts()).unwrap();
        let (b, _) = synth_cr(&scaled, &opts()).unwrap();
        prop_assert!(rel(a.ratio, b.ratio) < 1e-8);
    }

    #[test]
    fn ratio_invariant_under_state_coordinates(seed in any::<u64>()) {
        let sys = seeded_system(seed);
        let mut r = rng(seed ^ 0x5eed);
        let n = sys.n();
        let t = gauss(&mut r, n, n) * 0.3 + DMatrix::identity(n, n);
        let ti = t.clone().try_inverse().unwrap();
        let moved = LtiSystem::new(
            &t * &sys.a * &ti,
            &t * &sys.b_u,
            &t * &sys.b_w,
            ti.transpose() * &sys.q * &ti,
            sys.r.clone(),
        )
        .unwrap();
        let (a, _) = synth_cr(&sys, &opts()).unwrap();
        let (b, _) = synth_cr(&moved, &opts()).unwrap();
        prop_assert!(rel(a.ratio, b.ratio) < 1e-7);
    }

    #[test]
    fn cr_between_one_and_h2_ratio(seed in any::<u64>()) {
        let sys = seeded_system(seed);
        let ctx = FreqContext::new(&sys, &SolverOptions::default()).unwrap();
        let (cert, _) = synth_cr(&sys, &opts()).unwrap();
        let (_, h2) = synth_h2(&sys, &opts()).unwrap();
        let h2_cr = compet_ctl::freqeval::metric_cr_ctx(&ctx, &Evaluated::Causal(&h2), &Grid::new(256)).unwrap();
        prop_assert!(cert.ratio >= 1.0);
        prop_assert!(cert.ratio <= h2_cr.value * (1.0 + 1e-9));
    }

    #[test]
    fn synthesized_controllers_stabilize(seed in any::<u64>()) {
        let sys = seeded_system(seed);
        let (c, cr) = synth_cr(&sys, &opts()).unwrap();
        let (_, reg) = synth_regret(&sys, &opts()).unwrap();
        prop_assert!(c.spectral_radii["closed_loop"] < 1.0);
        prop_assert!(reg.closed_loop_radius(&sys) < 1.0);
        prop_assert!(cr.closed_loop_radius(&sys) < 1.0);
    }

    #[test]
    fn system_file_round_trip(seed in any::<u64>()) {
        let sys = seeded_system(seed);
        let back: LtiSystem<f64> = parse_system(&format_system(&sys)).unwrap();
        prop_assert_eq!(back, sys);
    }

    #[test]
    fn controller_file_round_trip(seed in any::<u64>()) {
        let sys = seeded_system(seed);
        let (_, cr) = synth_cr(&sys, &opts()).unwrap();
        let file = cr.to_file();
        let back = parse_controller::<f64>(&format_controller(&file)).unwrap();
        prop_assert_eq!(&back, &file);
        let rebuilt = ControllerRealization::from_file(&sys, back).unwrap();
        prop_assert_eq!(rebuilt.transfer, cr.transfer);
    }

    #[test]
    fn reconstruction_matches_direct_feed(seed in any::<u64>()) {
        let sys = seeded_system(seed);
        let (_, cr) = synth_cr(&sys, &opts()).unwrap();
        let spec = DisturbanceSpec { kind: DisturbanceKind::Gaussian { seed }, horizon: 300 };
        let base = SimOptions { keep_trajectories: true, ..Default::default() };
        let a = simulate(&sys, &cr, &spec, &base).unwrap();
        let b = simulate(&sys, &cr, &spec, &SimOptions { direct_feed: true, ..base }).unwrap();
        let (ua, ub) = (&a.trials[0].trajectory.as_ref().unwrap().u, &b.trials[0].trajectory.as_ref().unwrap().u);
        let scale = ua.iter().map(|u| u.amax()).fold(1.0, f64::max);
        for (x, y) in ua.iter().zip(ub) {
            prop_assert!((x - y).amax() <= 1e-12 * scale);
        }
    }
}

#[test]
fn gaussian_trials_are_independent_streams() {
    let sys = seeded_system(3);
    let (_, h2) = synth_h2(&sys, &opts()).unwrap();
    let spec = DisturbanceSpec { kind: DisturbanceKind::Gaussian { seed: 1 }, horizon: 500 };
    let r = simulate(&sys, &h2, &spec, &SimOptions { trials: 3, ..Default::default() }).unwrap();
    assert_ne!(r.trials[0].final_avg, r.trials[1].final_avg);
    let again = simulate(&sys, &h2, &spec, &SimOptions { trials: 3, ..Default::default() }).unwrap();
    assert_eq!(r.running_csv(), again.running_csv());
}

#[test]
fn running_average_is_nonnegative() {
    let sys = seeded_system(4);
    let (_, cr) = synth_cr(&sys, &opts()).unwrap();
    let spec = DisturbanceSpec { kind: DisturbanceKind::Gaussian { seed: 2 }, horizon: 1000 };
    let r = simulate(&sys, &cr, &spec, &SimOptions { record_stride: 10, ..Default::default() }).unwrap();
    assert!(r.trials[0].running.iter().all(|&(_, j)| j >= 0.0));
    assert_eq!(r.trials[0].running.len(), 100);
}
