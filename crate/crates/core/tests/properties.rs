//! Randomized invariants of the discrete operators, the residual and its
//! linearization.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stationary_mfg::grid::{diff1, diff2, inner, GridFunction, PeriodicGrid};
use stationary_mfg::linearization::{coercivity_form, duality_check, jacobian, jacobian_action};
use stationary_mfg::{residual, Hamiltonian, HamiltonianModel, PotentialSpec, State};

use common::{h_model, random_params, random_state, random_values};

fn grid_fn(n: usize) -> impl Strategy<Value = GridFunction> {
    prop::collection::vec(-10.0..10.0f64, n)
        .prop_map(move |v| GridFunction::new(PeriodicGrid::new(n).unwrap(), v).unwrap())
}

fn pair() -> impl Strategy<Value = (GridFunction, GridFunction)> {
    (8usize..80).prop_flat_map(|n| (grid_fn(n), grid_fn(n)))
}

proptest! {
    #[test]
    fn diff1_is_antisymmetric((f, g) in pair()) {
        let lhs = inner(&diff1(&f), &g);
        let rhs = -inner(&f, &diff1(&g));
        let scale = 1.0 + f.max_abs() * g.max_abs() * f.len() as f64;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn diff2_is_symmetric((f, g) in pair()) {
        let lhs = inner(&diff2(&f), &g);
        let rhs = inner(&f, &diff2(&g));
        let n = f.len() as f64;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + f.max_abs() * g.max_abs() * n * n * n));
    }

    #[test]
    fn summation_by_parts(f in (8usize..80).prop_flat_map(grid_fn)) {
        // h sum f (D2 f) = -h sum (D+ f)^2
        let h = f.grid().h();
        let fwd = f.forward_diff();
        let lhs = inner(&f, &diff2(&f));
        let rhs = -h * fwd.values().iter().map(|d| d * d).sum::<f64>();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn hamiltonian_derivatives_match_differences(gamma in 1.01..1.99f64, p in -50.0..50.0f64) {
        let ham = HamiltonianModel::new(gamma).unwrap();
        let t = 1e-5 * (1.0 + p.abs());
        let d1 = (ham.value(p + t) - ham.value(p - t)) / (2.0 * t);
        let d2 = (ham.first(p + t) - ham.first(p - t)) / (2.0 * t);
        prop_assert!((d1 - ham.first(p)).abs() <= 1e-7 * (1.0 + ham.first(p).abs()));
        prop_assert!((d2 - ham.second(p)).abs() <= 1e-7 * (1.0 + ham.second(p).abs()));
        let (v, f, s) = h_model(gamma, p);
        prop_assert!((v - ham.value(p)).abs() <= 1e-13 * v);
        prop_assert!((f - ham.first(p)).abs() <= 1e-13 * (1.0 + f.abs()));
        prop_assert!((s - ham.second(p)).abs() <= 1e-13 * (1.0 + s));
    }

    #[test]
    fn residual_commutes_with_translation(seed in any::<u64>(), k in 0usize..64) {
        // translation invariance needs a translation-invariant potential
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = random_params(&mut rng, 64);
        params.potential = PotentialSpec::zero();
        let state = random_state(&mut rng, &params.grid);
        let r = residual(&state, &params).unwrap();
        let rs = residual(&state.shifted(k), &params).unwrap();
        prop_assert!((&rs.f1 - &r.f1.shifted(k)).max_abs() <= 1e-12 * (1.0 + r.f1.max_abs()));
        prop_assert!((&rs.f2 - &r.f2.shifted(k)).max_abs() <= 1e-12 * (1.0 + r.f2.max_abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn jacobian_matches_central_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = random_params(&mut rng, 64);
        let state = random_state(&mut rng, &params.grid);
        let (v, f) = (random_values(&mut rng, &params.grid), random_values(&mut rng, &params.grid));
        let (l1, l2) = jacobian_action(&state, &params, &v, &f).unwrap();
        let t = 1e-6;
        let eval = |s: f64| {
            let st = State::new(&state.u + &v.scale(s), &state.m + &f.scale(s)).unwrap();
            residual(&st, &params).unwrap()
        };
        let (p, m) = (eval(t), eval(-t));
        let fd1 = (&p.f1 - &m.f1).scale(0.5 / t);
        let fd2 = (&p.f2 - &m.f2).scale(0.5 / t);
        let scale = l1.max_abs().max(l2.max_abs());
        prop_assert!((&fd1 - &l1).max_abs() <= 1e-6 * scale);
        prop_assert!((&fd2 - &l2).max_abs() <= 1e-6 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn duality_is_exact_and_form_is_coercive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = random_params(&mut rng, 32);
        let state = random_state(&mut rng, &params.grid);
        let (v, f) = (random_values(&mut rng, &params.grid), random_values(&mut rng, &params.grid));
        let form = coercivity_form(&state, &params, &v, &f).unwrap();
        prop_assert!(duality_check(&state, &params, &v, &f).unwrap() <= 1e-10 * form);
        let h1 = stationary_mfg::grid::h1_norm_sq(&v, &f).unwrap();
        prop_assert!(form > params.epsilon * h1);
    }
}

#[test]
fn jacobian_apply_agrees_with_action() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = random_params(&mut rng, 40);
    let state = random_state(&mut rng, &params.grid);
    let (v, f) = (
        random_values(&mut rng, &params.grid),
        random_values(&mut rng, &params.grid),
    );
    let j = jacobian(&state, &params).unwrap();
    let mut d = v.values().to_vec();
    d.extend_from_slice(f.values());
    let y = j.apply(&d).unwrap();
    let (l1, l2) = jacobian_action(&state, &params, &v, &f).unwrap();
    assert_eq!(&y[..40], l1.values());
    assert_eq!(&y[40..], l2.values());
}
