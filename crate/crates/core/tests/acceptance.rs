//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stationary_mfg::continuation::{
    continue_lambda, seed_constants, seed_v0, ContinuationSchedule,
};
use stationary_mfg::diagnostics::{
    energy_identity_residual, m_lower_bound_certificate, mass_identity_residual,
    second_order_identity_residual,
};
use stationary_mfg::grid::{GridFunction, PeriodicGrid};
use stationary_mfg::linearization::jacobian;
use stationary_mfg::mms::{convergence_study, Manufactured};
use stationary_mfg::{
    parse_config, residual, Hamiltonian, MfgError, NewtonOptions, ProblemParams, State,
};

use common::{default_params, h_model, random_params, random_state, random_values};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

fn default_trace(n: usize) -> Result<stationary_mfg::ContinuationTrace, String> {
    continue_lambda(
        &default_params(n),
        &ContinuationSchedule::default(),
        &NewtonOptions::default(),
    )
    .map_err(|e| format!("n = {n}: {e}"))
}

fn seed_correctness() -> Outcome {
    let eps: f64 = 0.1;
    let params = default_params(64).with_lambda(0.0);
    let seed = seed_constants(&params).map_err(|e| e.to_string())?;
    let (h0, _, _) = h_model(1.5, 0.0);
    let g = eps * seed.m0 + (1.0 + eps * eps) * seed.m0 - 1.0 - eps * h0;
    ensure(g.abs() <= 1e-14, || format!("|g(m0)| = {:e}", g.abs()))?;
    let closed = (1.0 + eps * h0) / (1.0 + eps + eps * eps);
    ensure((seed.m0 - closed).abs() <= 1e-12, || {
        format!("m0 = {} vs closed form {closed}", seed.m0)
    })?;
    // constant fields: F1 = u0 + H(0) - m0 - eps m0, F2 = m0 - 1 + eps u0
    let f1 = seed.u0 + h0 - seed.m0 - eps * seed.m0;
    let f2 = seed.m0 - 1.0 + eps * seed.u0;
    let state = seed_v0(&params).map_err(|e| e.to_string())?;
    let r = residual(&state, &params)
        .map_err(|e| e.to_string())?
        .max_abs();
    ensure(f1.abs().max(f2.abs()) <= 1e-12 && r <= 1e-12, || {
        format!("seed residual {r:e} (scalar {:e}, {:e})", f1, f2)
    })?;
    Ok(format!(
        "m0 = {:.15}, |g| = {:e}, residual = {r:e}",
        seed.m0,
        g.abs()
    ))
}

fn jacobian_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0_f64;
    for trial in 0..20 {
        let params = random_params(&mut rng, 64);
        let state = random_state(&mut rng, &params.grid);
        let dir_u = random_values(&mut rng, &params.grid);
        let dir_m = random_values(&mut rng, &params.grid);
        let j = jacobian(&state, &params).map_err(|e| e.to_string())?;
        let mut d = dir_u.values().to_vec();
        d.extend_from_slice(dir_m.values());
        let jd = j.apply(&d).map_err(|e| e.to_string())?;

        let t = 1e-6;
        let eval = |s: f64| {
            let shifted = State::new(&state.u + &dir_u.scale(s), &state.m + &dir_m.scale(s))
                .expect("small perturbation stays positive");
            residual(&shifted, &params).unwrap().to_stacked()
        };
        let (plus, minus) = (eval(t), eval(-t));
        let fd: Vec<f64> = plus
            .iter()
            .zip(&minus)
            .map(|(a, b)| (a - b) / (2.0 * t))
            .collect();
        let diff: Vec<f64> = fd.iter().zip(&jd).map(|(a, b)| a - b).collect();
        let rel = max_abs(&diff) / max_abs(&jd);
        worst = worst.max(rel);
        ensure(rel <= 1e-6, || {
            format!("trial {trial}: relative error {rel:e}")
        })?;
    }
    Ok(format!("worst relative error {worst:e} over 20 states"))
}

/// Coercivity form written out from nodal values.
fn coercivity_oracle(state: &State, params: &ProblemParams, v: &[f64], f: &[f64]) -> (f64, f64) {
    let n = state.n();
    let h = params.grid.h();
    let gamma = params.hamiltonian.gamma();
    let (u, m) = (state.u.values(), state.m.values());
    let (mut weighted, mut h1) = (0.0, 0.0);
    for i in 0..n {
        let (ip, im) = ((i + 1) % n, (i + n - 1) % n);
        let ux = (u[ip] - u[im]) / (2.0 * h);
        let vx = (v[ip] - v[im]) / (2.0 * h);
        let (_, _, hpp) = h_model(gamma, ux);
        weighted +=
            params.alpha * m[i].powf(params.alpha - 1.0) * f[i] * f[i] + hpp * m[i] * vx * vx;
        let (dv, df) = ((v[ip] - v[i]) / h, (f[ip] - f[i]) / h);
        h1 += v[i] * v[i] + f[i] * f[i] + dv * dv + df * df;
    }
    (h * weighted + params.epsilon * h * h1, h * h1)
}

fn duality_and_coercivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut min_margin) = (0.0_f64, f64::INFINITY);
    for trial in 0..50 {
        let n = [16, 32, 64][trial % 3];
        let params = random_params(&mut rng, n);
        let state = random_state(&mut rng, &params.grid);
        let v = random_values(&mut rng, &params.grid);
        let f = random_values(&mut rng, &params.grid);
        let j = jacobian(&state, &params).map_err(|e| e.to_string())?;
        let mut d = v.values().to_vec();
        d.extend_from_slice(f.values());
        let jd = j.apply(&d).map_err(|e| e.to_string())?;
        let h = params.grid.h();
        let pairing: f64 = h
            * (0..n)
                .map(|i| -jd[i] * f[i] + jd[n + i] * v[i])
                .sum::<f64>();
        let (form, h1) = coercivity_oracle(&state, &params, v.values(), f.values());
        let rel = (pairing - form).abs() / form.abs();
        worst = worst.max(rel);
        ensure(rel <= 1e-10, || {
            format!("trial {trial}: relative duality gap {rel:e}")
        })?;
        let margin = form - params.epsilon * h1;
        min_margin = min_margin.min(margin / form);
        ensure(margin > 0.0, || {
            format!("trial {trial}: coercivity margin {margin:e}")
        })?;
    }
    Ok(format!(
        "worst relative gap {worst:e}; smallest relative coercivity margin {min_margin:.3e}"
    ))
}

fn mms_order() -> Outcome {
    let study = convergence_study(
        &default_params(64),
        &Manufactured::default(),
        &[64, 128, 256, 512],
        &NewtonOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    for (k, order) in study.observed_orders.iter().enumerate() {
        ensure((order - 2.0).abs() <= 0.2, || {
            format!(
                "order {order} between n = {} and {}",
                study.rows[k].n,
                study.rows[k + 1].n
            )
        })?;
    }
    let orders: Vec<String> = study
        .observed_orders
        .iter()
        .map(|o| format!("{o:.4}"))
        .collect();
    Ok(format!("observed orders [{}]", orders.join(", ")))
}

fn end_to_end_continuation() -> Outcome {
    let trace = default_trace(256)?;
    ensure(trace.completed && trace.reached_lambda == 1.0, || {
        format!("reached lambda = {}", trace.reached_lambda)
    })?;
    for s in &trace.steps {
        let d = &s.diagnostics;
        ensure(d.system_residual <= 1e-10, || {
            format!("lambda = {}: residual {:e}", s.lambda, d.system_residual)
        })?;
        ensure(s.state.m.min() > 0.0, || {
            format!("lambda = {}: m_min {}", s.lambda, s.state.m.min())
        })?;
        ensure(d.eps_smallness < 0.5, || {
            format!("lambda = {}: eps smallness {}", s.lambda, d.eps_smallness)
        })?;
    }
    let worst = trace
        .steps
        .iter()
        .map(|s| s.diagnostics.system_residual)
        .fold(0.0, f64::max);
    Ok(format!(
        "{} accepted steps, worst residual {worst:e}, final min m {:.6}",
        trace.steps.len(),
        trace.final_state().m.min()
    ))
}

fn identity_refinement() -> Outcome {
    let mut rows = Vec::new();
    for n in [128, 256, 512] {
        let trace = default_trace(n)?;
        let (state, params) = (trace.final_state(), default_params(n));
        let e = |r: stationary_mfg::Result<f64>| r.map_err(|e| e.to_string());
        rows.push([
            e(energy_identity_residual(state, &params))?,
            e(second_order_identity_residual(state, &params))?,
            e(mass_identity_residual(state, &params))?,
        ]);
    }
    let names = ["energy", "second-order", "mass"];
    let mut report = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let ratios = [rows[0][k] / rows[1][k], rows[1][k] / rows[2][k]];
        for r in ratios {
            ensure((3.2..=4.8).contains(&r), || {
                format!("{name} identity ratio {r}")
            })?;
        }
        report.push(format!("{name} {:.3}/{:.3}", ratios[0], ratios[1]));
    }
    Ok(report.join(", "))
}

/// `exp(-sqrt(I2)) / I1` from nodal values.
fn certificate_oracle(m: &GridFunction) -> f64 {
    let (n, h) = (m.len(), m.grid().h());
    let (mut i1, mut i2) = (0.0, 0.0);
    for i in 0..n {
        i1 += h / m[i];
        let d = (m[(i + 1) % n].ln() - m[(i + n - 1) % n].ln()) / (2.0 * h);
        i2 += h * d * d;
    }
    (-i2.sqrt()).exp() / i1
}

fn positivity_certificate() -> Outcome {
    let trace = default_trace(256)?;
    let params = default_params(256);
    let h = params.grid.h();
    let mut tightest = f64::INFINITY;
    for s in &trace.steps {
        let cert = certificate_oracle(&s.state.m);
        let lib = s.diagnostics.m_lower_bound_certificate;
        ensure((cert - lib).abs() <= 1e-12 * cert, || {
            format!("lambda = {}: certificate {lib} vs oracle {cert}", s.lambda)
        })?;
        ensure(s.state.m.min() >= cert - 10.0 * h * h, || {
            format!(
                "lambda = {}: m_min {} below certificate {cert}",
                s.lambda,
                s.state.m.min()
            )
        })?;
        m_lower_bound_certificate(&s.state, &params.with_lambda(s.lambda))
            .map_err(|e| e.to_string())?;
        tightest = tightest.min(s.state.m.min() - cert);
    }
    let seed = &trace.steps[0];
    let gap = (certificate_oracle(&seed.state.m) - seed.state.m.min()).abs();
    ensure(gap <= 1e-12, || format!("seed certificate gap {gap:e}"))?;
    Ok(format!(
        "smallest margin m_min - certificate {tightest:.4e}; seed gap {gap:e}"
    ))
}

fn path_boundedness() -> Outcome {
    let trace = default_trace(256)?;
    for s in &trace.steps {
        if let Some(field) = s.diagnostics.first_non_finite() {
            return Err(format!("lambda = {}: non-finite {field}", s.lambda));
        }
        ensure(s.diagnostics.m_min > 0.0, || {
            format!("lambda = {}: m_min <= 0", s.lambda)
        })?;
    }
    let range = |f: fn(&stationary_mfg::DiagnosticsReport) -> f64| {
        let vals: Vec<f64> = trace.steps.iter().map(|s| f(&s.diagnostics)).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let maxima = [
        range(|d| d.energy_terms.e1).1,
        range(|d| d.energy_terms.e2).1,
        range(|d| d.energy_terms.e3).1,
        range(|d| d.mass).1,
        range(|d| d.inv_mass).1,
    ];
    ensure(maxima.iter().all(|v| v.is_finite()), || {
        format!("maxima {maxima:?}")
    })?;
    let (e1, mass) = (range(|d| d.energy_terms.e1), range(|d| d.mass));
    let spread = |(lo, hi): (f64, f64)| if lo > 0.0 { hi / lo } else { f64::INFINITY };
    Ok(format!(
        "max E1 {:.4}, E2 {:.4e}, E3 {:.4e}, mass {:.4}, I1 {:.4}; E1 spread x{:.3}, mass spread x{:.4}{}",
        maxima[0],
        maxima[1],
        maxima[2],
        maxima[3],
        maxima[4],
        spread(e1),
        spread(mass),
        if spread(e1) < 10.0 && spread(mass) < 10.0 { "" } else { " (above one order of magnitude)" }
    ))
}

fn negative_tests() -> Outcome {
    for (text, key) in [
        ("[problem]\nepsilon = 1.5\n", "problem.epsilon"),
        ("[problem]\ngamma = 2.0\n", "problem.gamma"),
    ] {
        match parse_config(text) {
            Err(MfgError::Validation { key: k, .. }) if k == key => {}
            other => return Err(format!("{text:?} gave {other:?}")),
        }
    }
    let grid = PeriodicGrid::new(64).unwrap();
    let m = GridFunction::new(
        grid,
        (0..64)
            .map(|i| if i % 2 == 0 { 1.0 } else { 0.1 })
            .collect(),
    )
    .unwrap();
    let state = State::new(grid.zeros(), m).unwrap();
    match m_lower_bound_certificate(&state, &default_params(64)) {
        Err(MfgError::CertificateViolated { m_min, certificate }) => Ok(format!(
            "config rejections ok; sawtooth m_min {m_min} < certificate {certificate:.6}"
        )),
        other => Err(format!("sawtooth density gave {other:?}")),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("seed correctness", seed_correctness),
        ("Jacobian consistency", jacobian_consistency),
        ("discrete duality and coercivity", duality_and_coercivity),
        ("manufactured-solution order", mms_order),
        ("end-to-end continuation", end_to_end_continuation),
        ("identity residual refinement", identity_refinement),
        ("positivity certificate", positivity_certificate),
        ("boundedness along the path", path_boundedness),
        ("negative tests", negative_tests),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {}. {name} ({secs:.2} s): {detail}", k + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL  {}. {name} ({secs:.2} s): {detail}", k + 1)
            }
        }
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
