//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::Rng;
use stationary_mfg::{
    GridFunction, HamiltonianModel, PeriodicGrid, PotentialSpec, ProblemParams, State,
};

/// gamma = 1.5, alpha = 1, eps = 0.1, V = cos(2 pi x) / 2, lambda = 1.
pub fn default_params(n: usize) -> ProblemParams {
    ProblemParams::new(
        HamiltonianModel::new(1.5).unwrap(),
        1.0,
        0.1,
        1.0,
        PotentialSpec::single_cosine(0.5),
        PeriodicGrid::new(n).unwrap(),
    )
    .unwrap()
}

/// Random admissible parameters on `n` nodes.
pub fn random_params(rng: &mut impl Rng, n: usize) -> ProblemParams {
    ProblemParams::new(
        HamiltonianModel::new(rng.gen_range(1.1..1.9)).unwrap(),
        rng.gen_range(0.5..2.0),
        rng.gen_range(0.05..1.0),
        rng.gen_range(0.0..=1.0),
        PotentialSpec::new(
            vec![rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5)],
            vec![rng.gen_range(-1.0..1.0)],
        )
        .unwrap(),
        PeriodicGrid::new(n).unwrap(),
    )
    .unwrap()
}

/// Smooth random periodic function: a few Fourier modes of amplitude <= `amp`.
pub fn random_smooth(rng: &mut impl Rng, grid: &PeriodicGrid, amp: f64) -> GridFunction {
    let coeffs: Vec<(f64, f64)> = (0..4)
        .map(|_| (rng.gen_range(-amp..amp), rng.gen_range(-amp..amp)))
        .collect();
    grid.sample(|x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let w = 2.0 * PI * (k + 1) as f64 * x;
                (a * w.cos() + b * w.sin()) / (k + 1) as f64
            })
            .sum()
    })
}

/// Random state with `m = exp(smooth)` strictly positive.
pub fn random_state(rng: &mut impl Rng, grid: &PeriodicGrid) -> State {
    let u = random_smooth(rng, grid, 0.5);
    let m = random_smooth(rng, grid, 0.4).map(f64::exp);
    State::new(u, m).unwrap()
}

/// Random nodal values in [-1, 1] (not smooth).
pub fn random_values(rng: &mut impl Rng, grid: &PeriodicGrid) -> GridFunction {
    GridFunction::new(
        *grid,
        (0..grid.n()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Model Hamiltonian written out independently of the library.
pub fn h_model(gamma: f64, p: f64) -> (f64, f64, f64) {
    let s = 1.0 + p * p;
    (
        s.powf(gamma / 2.0),
        gamma * p * s.powf(gamma / 2.0 - 1.0),
        gamma * s.powf(gamma / 2.0 - 2.0) * (1.0 + (gamma - 1.0) * p * p),
    )
}
