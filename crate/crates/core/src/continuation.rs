//! Homotopy in the potential strength: start from the constant solution of
//! the potential-free problem and march `lambda` from 0 to 1 with a secant
//! predictor and a damped Newton corrector.

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsReport;
use crate::error::{MfgError, Result};
use crate::hamiltonian::Hamiltonian;
use crate::solver::{newton, NewtonOptions};
use crate::system::{ProblemParams, State};

/// Target for |g(m0)| in the seed bisection.
pub const SEED_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub m0: f64,
    pub u0: f64,
    /// |g(m0)|
    pub g_residual: f64,
    /// Bisection bracket [0, 1 + eps C] with C = |H(0)| + 1.
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// `g(m) = eps m^alpha + (1 + eps^2) m - 1 - eps H(0)`.
pub fn seed_function<H: Hamiltonian>(params: &ProblemParams<H>, m: f64) -> f64 {
    let eps = params.epsilon;
    eps * m.powf(params.alpha) + (1.0 + eps * eps) * m - 1.0 - eps * params.hamiltonian.value(0.0)
}

/// Constant solution of the potential-free problem by bisection on `g`.
pub fn seed_constants<H: Hamiltonian>(params: &ProblemParams<H>) -> Result<Seed> {
    if params.lambda != 0.0 {
        return Err(MfgError::SeedRequiresZeroLambda {
            lambda: params.lambda,
        });
    }
    let h0 = params.hamiltonian.value(0.0);
    let c = h0.abs() + 1.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0 + params.epsilon * c);
    let g_lo = seed_function(params, lo);
    if !(g_lo < 0.0) {
        return Err(MfgError::BracketFailure { g0: g_lo });
    }
    let g_hi = seed_function(params, hi);
    if !(g_hi > 0.0) {
        return Err(MfgError::BracketFailure { g0: g_lo });
    }
    let mut iterations = 0;
    let (mut best, mut best_g) = (hi, g_hi.abs());
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let g = seed_function(params, mid);
        if g.abs() < best_g {
            best = mid;
            best_g = g.abs();
        }
        if g == 0.0 {
            break;
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best_g > SEED_TOLERANCE || !(best > 0.0) {
        return Err(MfgError::BisectionStall { residual: best_g });
    }
    Ok(Seed {
        m0: best,
        u0: (1.0 - best) / params.epsilon,
        g_residual: best_g,
        bracket: (0.0, 1.0 + params.epsilon * c),
        iterations,
    })
}

/// Constant state `(u0, m0)` solving the system with `lambda = 0`.
pub fn seed_v0<H: Hamiltonian>(params: &ProblemParams<H>) -> Result<State> {
    let s = seed_constants(params)?;
    State::constant(&params.grid, s.u0, s.m0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationSchedule {
    pub lambda_init_step: f64,
    pub lambda_min_step: f64,
    pub growth_factor: f64,
    /// Decreasing regularization values for the sweep diagnostic.
    pub epsilon_list: Vec<f64>,
}

impl Default for ContinuationSchedule {
    fn default() -> Self {
        Self {
            lambda_init_step: 0.1,
            lambda_min_step: 1e-4,
            growth_factor: 1.5,
            epsilon_list: Vec::new(),
        }
    }
}

impl ContinuationSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min_step > 0.0
            && self.lambda_min_step <= self.lambda_init_step
            && self.lambda_init_step <= 1.0)
        {
            return Err(MfgError::InvalidParameter {
                name: "lambda_init_step",
                reason: format!(
                    "need 0 < lambda_min_step <= lambda_init_step <= 1, got {} and {}",
                    self.lambda_min_step, self.lambda_init_step
                ),
            });
        }
        if !(self.growth_factor >= 1.0) || !self.growth_factor.is_finite() {
            return Err(MfgError::InvalidParameter {
                name: "growth_factor",
                reason: format!("must be at least 1, got {}", self.growth_factor),
            });
        }
        if let Some(bad) = self.epsilon_list.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
            return Err(MfgError::InvalidParameter {
                name: "epsilon_list",
                reason: format!("entries must lie in (0, 1], got {bad}"),
            });
        }
        if self.epsilon_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(MfgError::InvalidParameter {
                name: "epsilon_list",
                reason: "must be strictly decreasing".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationStep {
    pub lambda: f64,
    pub state: State,
    pub diagnostics: DiagnosticsReport,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationTrace {
    /// Accepted steps; the first is always the seed at `lambda = 0`.
    pub steps: Vec<ContinuationStep>,
    pub reached_lambda: f64,
    /// False when the step size fell below `lambda_min_step` before reaching 1.
    pub completed: bool,
    /// Steps (by lambda) where `||eps (u - u_xx)||_inf >= 1/2`.
    pub smallness_warnings: Vec<f64>,
    /// Corrector failures that led to step halving, as (lambda target, message).
    pub rejected: Vec<(f64, String)>,
}

impl ContinuationTrace {
    pub fn final_state(&self) -> &State {
        &self.steps.last().expect("trace holds the seed").state
    }

    pub fn final_step(&self) -> &ContinuationStep {
        self.steps.last().expect("trace holds the seed")
    }

    /// Median Newton iterations over accepted steps after the seed.
    pub fn median_iterations(&self) -> Option<f64> {
        let mut its: Vec<usize> = self.steps[1..]
            .iter()
            .map(|s| s.newton_iterations)
            .collect();
        if its.is_empty() {
            return None;
        }
        its.sort_unstable();
        let k = its.len();
        Some(if k % 2 == 1 {
            its[k / 2] as f64
        } else {
            0.5 * (its[k / 2 - 1] + its[k / 2]) as f64
        })
    }

    fn push<H: Hamiltonian + Clone>(
        &mut self,
        lambda: f64,
        state: State,
        params: &ProblemParams<H>,
        iterations: usize,
        opts: &NewtonOptions,
    ) -> Result<()> {
        let p = params.with_lambda(lambda);
        let diagnostics = DiagnosticsReport::compute(&state, &p, opts.tol_residual)?;
        if !diagnostics.eps_smallness_ok {
            log::warn!(
                "lambda = {lambda}: ||eps (u - u_xx)|| = {} is not below 1/2",
                diagnostics.eps_smallness
            );
            self.smallness_warnings.push(lambda);
        }
        self.steps.push(ContinuationStep {
            lambda,
            state,
            diagnostics,
            newton_iterations: iterations,
        });
        self.reached_lambda = lambda;
        Ok(())
    }
}

fn secant_predictor(steps: &[ContinuationStep], target: f64) -> State {
    let last = &steps[steps.len() - 1];
    if steps.len() < 2 {
        return last.state.clone();
    }
    let prev = &steps[steps.len() - 2];
    let t = (target - last.lambda) / (last.lambda - prev.lambda);
    let extrapolate = |a: &crate::grid::GridFunction, b: &crate::grid::GridFunction| {
        a.zip_with(b, |x, y| x + t * (x - y))
    };
    State::new(
        extrapolate(&last.state.u, &prev.state.u),
        extrapolate(&last.state.m, &prev.state.m),
    )
    .unwrap_or_else(|_| last.state.clone())
}

/// Runs the lambda path from the seed to 1. On stall returns
/// [`MfgError::ContinuationStalled`] carrying the partial trace.
pub fn continue_lambda<H: Hamiltonian + Clone>(
    params: &ProblemParams<H>,
    schedule: &ContinuationSchedule,
    opts: &NewtonOptions,
) -> Result<ContinuationTrace> {
    schedule.validate()?;
    opts.validate()?;
    let base = params.with_lambda(0.0);
    let seed = seed_v0(&base)?;
    continue_from(seed, params, schedule, opts)
}

fn continue_from<H: Hamiltonian + Clone>(
    seed: State,
    params: &ProblemParams<H>,
    schedule: &ContinuationSchedule,
    opts: &NewtonOptions,
) -> Result<ContinuationTrace> {
    let mut trace = ContinuationTrace {
        steps: Vec::new(),
        reached_lambda: 0.0,
        completed: false,
        smallness_warnings: Vec::new(),
        rejected: Vec::new(),
    };
    trace.push(0.0, seed, params, 0, opts)?;

    if params.potential.is_zero() {
        // the system does not depend on lambda
        let rep = newton(trace.final_state(), &params.with_lambda(1.0), opts)?;
        trace.push(1.0, rep.final_state, params, rep.iterations, opts)?;
        trace.completed = true;
        return Ok(trace);
    }

    let mut lambda = 0.0_f64;
    let mut step = schedule.lambda_init_step;
    let mut streak = 0usize;
    while lambda < 1.0 {
        let mut target = (lambda + step).min(1.0);
        if 1.0 - target < 1e-12 {
            target = 1.0;
        }
        let guess = secant_predictor(&trace.steps, target);
        let outcome = newton(&guess, &params.with_lambda(target), opts);
        match outcome {
            Ok(rep) if rep.converged => {
                log::info!(
                    "lambda = {target:.6}: accepted after {} Newton iterations",
                    rep.iterations
                );
                trace.push(target, rep.final_state, params, rep.iterations, opts)?;
                lambda = target;
                streak += 1;
                if streak >= 2 {
                    step = (step * schedule.growth_factor).min(1.0);
                }
            }
            other => {
                let message = match other {
                    Ok(rep) => format!("stagnated at residual {:e}", rep.final_residual()),
                    Err(e) => e.to_string(),
                };
                log::info!("lambda = {target:.6}: rejected ({message}), halving step");
                trace.rejected.push((target, message));
                streak = 0;
                step *= 0.5;
                if step < schedule.lambda_min_step {
                    return Err(MfgError::ContinuationStalled(Box::new(trace)));
                }
            }
        }
    }
    trace.completed = true;
    Ok(trace)
}

/// Least-squares fit of `log(value) = log(c) + exponent * log(eps)`, plus the
/// smallest `c` with `value <= c eps^{-1/2}` on every sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub exponent: f64,
    pub bound_constant: f64,
}

pub fn fit_holder_growth(eps: &[f64], values: &[f64]) -> Option<HolderFit> {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&e, &v)| (e.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let bound_constant = eps
        .iter()
        .zip(values)
        .map(|(e, v)| v * e.sqrt())
        .fold(0.0, f64::max);
    Some(HolderFit {
        exponent: sxy / sxx,
        bound_constant,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepMember {
    pub epsilon: f64,
    pub warm_started: bool,
    pub outcome: std::result::Result<ContinuationTrace, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub eps_smallness: f64,
    pub m_min: f64,
    pub certificate: f64,
    pub holder: crate::diagnostics::FieldNorms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTrends {
    pub points: Vec<SweepPoint>,
    pub holder_fit_u: Option<HolderFit>,
    pub holder_fit_m: Option<HolderFit>,
    pub holder_fit_u_x: Option<HolderFit>,
    pub holder_fit_m_x: Option<HolderFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub members: Vec<SweepMember>,
    pub trends: SweepTrends,
}

impl SweepReport {
    fn build(members: Vec<SweepMember>) -> Self {
        let points: Vec<SweepPoint> = members
            .iter()
            .filter_map(|mem| {
                let trace = mem.outcome.as_ref().ok()?;
                let d = &trace.final_step().diagnostics;
                Some(SweepPoint {
                    epsilon: mem.epsilon,
                    eps_smallness: d.eps_smallness,
                    m_min: d.m_min,
                    certificate: d.m_lower_bound_certificate,
                    holder: d.holder,
                })
            })
            .collect();
        let eps: Vec<f64> = points.iter().map(|p| p.epsilon).collect();
        let fit = |f: fn(&SweepPoint) -> f64| {
            let vals: Vec<f64> = points.iter().map(f).collect();
            fit_holder_growth(&eps, &vals)
        };
        let trends = SweepTrends {
            holder_fit_u: fit(|p| p.holder.u),
            holder_fit_m: fit(|p| p.holder.m),
            holder_fit_u_x: fit(|p| p.holder.u_x),
            holder_fit_m_x: fit(|p| p.holder.m_x),
            points,
        };
        Self { members, trends }
    }
}

/// Continuation for each regularization in `schedule.epsilon_list`. After the
/// first member, each run first tries Newton at `lambda = 1` from the previous
/// member's final state and falls back to a full path if that fails.
/// Per-member failures are recorded and the sweep continues.
pub fn sweep_epsilon<H: Hamiltonian + Clone>(
    base: &ProblemParams<H>,
    schedule: &ContinuationSchedule,
    opts: &NewtonOptions,
) -> Result<SweepReport> {
    schedule.validate()?;
    opts.validate()?;
    let mut members = Vec::new();
    let mut previous: Option<State> = None;
    for &eps in &schedule.epsilon_list {
        let params = base.with_epsilon(eps);
        params.validate()?;
        let mut member = None;
        if let Some(prev) = &previous {
            match warm_start(prev, &params, opts) {
                Ok(trace) => {
                    member = Some(SweepMember {
                        epsilon: eps,
                        warm_started: true,
                        outcome: Ok(trace),
                    })
                }
                Err(e) => log::info!("eps = {eps}: warm start failed ({e}), running full path"),
            }
        }
        let member = member.unwrap_or_else(|| SweepMember {
            epsilon: eps,
            warm_started: false,
            outcome: continue_lambda(&params, schedule, opts).map_err(|e| e.to_string()),
        });
        previous = member
            .outcome
            .as_ref()
            .ok()
            .map(|t| t.final_state().clone());
        members.push(member);
    }
    Ok(SweepReport::build(members))
}

/// Like [`sweep_epsilon`] but every member runs a full path from its own seed,
/// spread over `jobs` worker threads. Results are independent of `jobs`.
pub fn sweep_epsilon_cold<H: Hamiltonian + Clone + Send + Sync>(
    base: &ProblemParams<H>,
    schedule: &ContinuationSchedule,
    opts: &NewtonOptions,
    jobs: usize,
) -> Result<SweepReport> {
    schedule.validate()?;
    opts.validate()?;
    let eps_list = &schedule.epsilon_list;
    for &eps in eps_list {
        base.with_epsilon(eps).validate()?;
    }
    let jobs = jobs.max(1).min(eps_list.len().max(1));
    let mut slots: Vec<Option<SweepMember>> = vec![None; eps_list.len()];
    std::thread::scope(|scope| {
        for (w, chunk) in slots
            .chunks_mut(eps_list.len().div_ceil(jobs).max(1))
            .enumerate()
        {
            let offset = w * eps_list.len().div_ceil(jobs).max(1);
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    let eps = eps_list[offset + k];
                    let params = base.with_epsilon(eps);
                    *slot = Some(SweepMember {
                        epsilon: eps,
                        warm_started: false,
                        outcome: continue_lambda(&params, schedule, opts)
                            .map_err(|e| e.to_string()),
                    });
                }
            });
        }
    });
    Ok(SweepReport::build(slots.into_iter().flatten().collect()))
}

fn warm_start<H: Hamiltonian + Clone>(
    prev: &State,
    params: &ProblemParams<H>,
    opts: &NewtonOptions,
) -> Result<ContinuationTrace> {
    let seed = seed_v0(&params.with_lambda(0.0))?;
    let rep = newton(prev, &params.with_lambda(1.0), opts)?;
    if !rep.converged {
        return Err(MfgError::MaxIterExceeded {
            iterations: rep.iterations,
            residual: rep.final_residual(),
        });
    }
    let mut trace = ContinuationTrace {
        steps: Vec::new(),
        reached_lambda: 0.0,
        completed: false,
        smallness_warnings: Vec::new(),
        rejected: Vec::new(),
    };
    trace.push(0.0, seed, params, 0, opts)?;
    trace.push(1.0, rep.final_state, params, rep.iterations, opts)?;
    trace.completed = true;
    Ok(trace)
}
