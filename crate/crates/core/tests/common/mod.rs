#![allow(dead_code)]

use compet_ctl::model::{validate, LtiSystem};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

pub fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

pub fn gauss(rng: &mut Pcg64, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn spd(rng: &mut Pcg64, n: usize) -> DMatrix<f64> {
    let l = gauss(rng, n, n);
    &l * l.transpose() / n as f64 + DMatrix::identity(n, n) * 0.2
}

/// Random plant with `n` states, `p` inputs, `m` disturbances that passes
/// validation.
pub fn random_system(rng: &mut Pcg64, n: usize, p: usize, m: usize) -> LtiSystem<f64> {
    loop {
        let scale = rng.random_range(0.5..1.3);
        let a = gauss(rng, n, n) * (scale / (n as f64).sqrt());
        let sys = LtiSystem::new(a, gauss(rng, n, p), gauss(rng, n, m), spd(rng, n), spd(rng, p)).unwrap();
        if validate(&sys).passed() {
            return sys;
        }
    }
}

/// Shapes `(n, p, m)` with `p, m ≤ n ≤ 6`.
pub fn random_shape(rng: &mut Pcg64, square: Option<bool>) -> (usize, usize, usize) {
    let n = rng.random_range(2..=6);
    let p = rng.random_range(1..=n);
    let m = match square {
        Some(true) => n,
        Some(false) => rng.random_range(1..n),
        None => rng.random_range(1..=n),
    };
    (n, p, m)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
