//! A-priori quantities and integral identities evaluated on a discrete state.
//!
//! The energy, second-order and mass identities hold exactly for smooth
//! solutions. On a converged discrete solution they hold up to the
//! truncation error of the stencils, so their residuals decay like `h^2`.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::grid::{diff1, diff2, holder_half_seminorm, integrate, GridFunction};
use crate::hamiltonian::Hamiltonian;
use crate::system::{check_positive, residual, ProblemParams, State};

/// Residuals above this multiple of the tolerance mark a report as not converged.
pub const NOT_CONVERGED_FACTOR: f64 = 100.0;

/// Slack, in units of `h^2`, allowed below the lower-bound certificate.
pub const CERTIFICATE_SLACK: f64 = 10.0;

struct Fields {
    ux: GridFunction,
    uxx: GridFunction,
    mx: GridFunction,
    mxx: GridFunction,
    v: GridFunction,
}

fn fields<H>(state: &State, params: &ProblemParams<H>) -> Result<Fields> {
    check_positive(&state.m)?;
    Ok(Fields {
        ux: diff1(&state.u),
        uxx: diff2(&state.u),
        mx: diff1(&state.m),
        mxx: diff2(&state.m),
        v: params.potential_samples()?.v,
    })
}

fn integral(n: usize, h: f64, f: impl Fn(usize) -> f64) -> f64 {
    h * (0..n).map(f).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    /// integral of m^{alpha+1}
    pub e1: f64,
    /// integral of |u_x|^gamma (1 + m)
    pub e2: f64,
    /// eps * integral of (u^2 + m^2 + u_x^2 + m_x^2)
    pub e3: f64,
}

pub fn energy_terms<H: Hamiltonian>(
    state: &State,
    params: &ProblemParams<H>,
) -> Result<EnergyTerms> {
    let f = fields(state, params)?;
    let (u, m) = (&state.u, &state.m);
    let (n, h) = (state.n(), params.grid.h());
    let gamma = params.hamiltonian.gamma();
    Ok(EnergyTerms {
        e1: integral(n, h, |i| m[i].powf(params.alpha + 1.0)),
        e2: integral(n, h, |i| f.ux[i].abs().powf(gamma) * (1.0 + m[i])),
        e3: params.epsilon
            * integral(n, h, |i| {
                u[i] * u[i] + m[i] * m[i] + f.ux[i] * f.ux[i] + f.mx[i] * f.mx[i]
            }),
    })
}

/// `|LHS - RHS|` of the identity obtained by testing the first equation
/// against `1 + eps - m` and the second against `u`.
pub fn energy_identity_residual<H: Hamiltonian>(
    state: &State,
    params: &ProblemParams<H>,
) -> Result<f64> {
    let f = fields(state, params)?;
    let terms = energy_terms(state, params)?;
    let (u, m) = (&state.u, &state.m);
    let (n, h) = (state.n(), params.grid.h());
    let ham = &params.hamiltonian;
    let (eps, alpha, lambda) = (params.epsilon, params.alpha, params.lambda);

    let lhs = integral(n, h, |i| {
        let p = f.ux[i];
        (1.0 + eps) * ham.value(p) + m[i] * (p * ham.first(p) - ham.value(p))
    }) + terms.e1
        + terms.e3;
    let rhs = -eps * integral(n, h, |i| u[i])
        + integral(n, h, |i| (m[i] - 1.0 - eps) * lambda * f.v[i])
        + (1.0 + eps) * integral(n, h, |i| m[i].powf(alpha))
        + eps * (1.0 + eps) * integral(n, h, |i| m[i]);
    Ok((lhs - rhs).abs())
}

/// The nonnegative terms of the second-order identity and the potential term they balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderTerms {
    /// integral of H''(u_x) m u_xx^2
    pub hessian: f64,
    /// integral of alpha m^{alpha-1} m_x^2
    pub congestion: f64,
    /// eps * integral of (m_x^2 + m_xx^2 + u_x^2 + u_xx^2)
    pub regularization: f64,
    /// integral of lambda V m_xx
    pub potential: f64,
}

impl SecondOrderTerms {
    pub fn nonnegative_sum(&self) -> f64 {
        self.hessian + self.congestion + self.regularization
    }

    pub fn residual(&self) -> f64 {
        (self.nonnegative_sum() + self.potential).abs()
    }
}

pub fn second_order_terms<H: Hamiltonian>(
    state: &State,
    params: &ProblemParams<H>,
) -> Result<SecondOrderTerms> {
    let f = fields(state, params)?;
    let m = &state.m;
    let (n, h) = (state.n(), params.grid.h());
    let ham = &params.hamiltonian;
    let alpha = params.alpha;
    Ok(SecondOrderTerms {
        hessian: integral(n, h, |i| ham.second(f.ux[i]) * m[i] * f.uxx[i] * f.uxx[i]),
        congestion: integral(n, h, |i| alpha * m[i].powf(alpha - 1.0) * f.mx[i] * f.mx[i]),
        regularization: params.epsilon
            * integral(n, h, |i| {
                f.mx[i] * f.mx[i] + f.mxx[i] * f.mxx[i] + f.ux[i] * f.ux[i] + f.uxx[i] * f.uxx[i]
            }),
        potential: integral(n, h, |i| params.lambda * f.v[i] * f.mxx[i]),
    })
}

/// Residual of the identity obtained by testing the first equation against
/// `m_xx` and the second against `u_xx`.
pub fn second_order_identity_residual<H: Hamiltonian>(
    state: &State,
    params: &ProblemParams<H>,
) -> Result<f64> {
    Ok(second_order_terms(state, params)?.residual())
}

/// Residual of the identity obtained by dividing the second equation by `m`:
/// `integral(1/m + m_x^2/m^2) = 1 + integral(eps (u - u_xx)/m) - integral(H'(u_x) m_x/m)`.
pub fn mass_identity_residual<H: Hamiltonian>(
    state: &State,
    params: &ProblemParams<H>,
) -> Result<f64> {
    let f = fields(state, params)?;
    let (u, m) = (&state.u, &state.m);
    let (n, h) = (state.n(), params.grid.h());
    let ham = &params.hamiltonian;
    let eps = params.epsilon;
    let lhs = integral(n, h, |i| 1.0 / m[i] + (f.mx[i] / m[i]).powi(2));
    let rhs = 1.0 + integral(n, h, |i| eps * (u[i] - f.uxx[i]) / m[i])
        - integral(n, h, |i| ham.first(f.ux[i]) * f.mx[i] / m[i]);
    Ok((lhs - rhs).abs())
}

/// Inputs and value of the a-posteriori lower bound `exp(-sqrt(I2)) / I1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    /// integral of 1/m
    pub inv_mass: f64,
    /// integral of ((ln m)_x)^2, with the derivative taken by `diff1` of ln m
    pub log_grad: f64,
    pub certificate: f64,
    pub m_min: f64,
    /// `CERTIFICATE_SLACK * h^2`
    pub tolerance: f64,
}

impl LowerBound {
    pub fn satisfied(&self) -> bool {
        self.m_min >= self.certificate - self.tolerance
    }
}

pub fn lower_bound<H>(state: &State, params: &ProblemParams<H>) -> Result<LowerBound> {
    check_positive(&state.m)?;
    let m = &state.m;
    let (n, h) = (state.n(), params.grid.h());
    let inv_mass = integral(n, h, |i| 1.0 / m[i]);
    let dlog = diff1(&m.map(f64::ln));
    let log_grad = integral(n, h, |i| dlog[i] * dlog[i]);
    Ok(LowerBound {
        inv_mass,
        log_grad,
        certificate: (-log_grad.sqrt()).exp() / inv_mass,
        m_min: m.min(),
        tolerance: CERTIFICATE_SLACK * h * h,
    })
}

/// The lower-bound certificate; fails with `CertificateViolated` when `m_min`
/// lies below it by more than the slack.
pub fn m_lower_bound_certificate<H>(state: &State, params: &ProblemParams<H>) -> Result<f64> {
    let lb = lower_bound(state, params)?;
    if !lb.satisfied() {
        return Err(MfgError::CertificateViolated {
            m_min: lb.m_min,
            certificate: lb.certificate,
        });
    }
    Ok(lb.certificate)
}

/// `max_i |eps (u_i - (diff2 u)_i)|`.
pub fn eps_smallness<H>(state: &State, params: &ProblemParams<H>) -> f64 {
    let uxx = diff2(&state.u);
    (&state.u - &uxx).max_abs() * params.epsilon
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldNorms {
    pub u: f64,
    pub m: f64,
    pub u_x: f64,
    pub m_x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    /// 1/2-Hölder seminorms.
    pub seminorms: FieldNorms,
    pub sup_norms: FieldNorms,
}

pub fn holder_report<H>(state: &State, _params: &ProblemParams<H>) -> HolderReport {
    let ux = diff1(&state.u);
    let mx = diff1(&state.m);
    HolderReport {
        seminorms: FieldNorms {
            u: holder_half_seminorm(&state.u),
            m: holder_half_seminorm(&state.m),
            u_x: holder_half_seminorm(&ux),
            m_x: holder_half_seminorm(&mx),
        },
        sup_norms: FieldNorms {
            u: state.u.max_abs(),
            m: state.m.max_abs(),
            u_x: ux.max_abs(),
            m_x: mx.max_abs(),
        },
    }
}

/// All diagnostics for one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub system_residual: f64,
    pub not_converged: bool,
    pub energy_terms: EnergyTerms,
    pub energy_identity_residual: f64,
    pub second_order_terms: SecondOrderTerms,
    pub second_order_residual: f64,
    pub mass_identity_residual: f64,
    pub mass: f64,
    pub inv_mass: f64,
    pub log_grad: f64,
    pub m_min: f64,
    pub m_lower_bound_certificate: f64,
    pub certificate_satisfied: bool,
    pub eps_smallness: f64,
    pub eps_smallness_ok: bool,
    pub holder: FieldNorms,
    pub sup_norms: FieldNorms,
    pub potential_sup_norm: f64,
    pub potential_c2_norm: f64,
}

impl DiagnosticsReport {
    /// Evaluates every diagnostic. `tol_residual` is the solver tolerance the
    /// state was converged to.
    pub fn compute<H: Hamiltonian>(
        state: &State,
        params: &ProblemParams<H>,
        tol_residual: f64,
    ) -> Result<Self> {
        let system_residual = residual(state, params)?.max_abs();
        let second = second_order_terms(state, params)?;
        let lb = lower_bound(state, params)?;
        let holder = holder_report(state, params);
        let pot = params.potential_samples()?;
        let eps_small = eps_smallness(state, params);
        Ok(Self {
            system_residual,
            not_converged: system_residual > NOT_CONVERGED_FACTOR * tol_residual,
            energy_terms: energy_terms(state, params)?,
            energy_identity_residual: energy_identity_residual(state, params)?,
            second_order_terms: second,
            second_order_residual: second.residual(),
            mass_identity_residual: mass_identity_residual(state, params)?,
            mass: integrate(&state.m),
            inv_mass: lb.inv_mass,
            log_grad: lb.log_grad,
            m_min: lb.m_min,
            m_lower_bound_certificate: lb.certificate,
            certificate_satisfied: lb.satisfied(),
            eps_smallness: eps_small,
            eps_smallness_ok: eps_small < 0.5,
            holder: holder.seminorms,
            sup_norms: holder.sup_norms,
            potential_sup_norm: pot.sup_norm(),
            potential_c2_norm: pot.c2_norm(),
        })
    }

    /// Name of the first non-finite numeric field, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        let value = serde_json::to_value(self).ok()?;
        find_non_finite(&value, String::new())
    }
}

fn find_non_finite(v: &serde_json::Value, path: String) -> Option<String> {
    match v {
        // serde_json writes non-finite floats as null
        serde_json::Value::Null => Some(path),
        serde_json::Value::Object(map) => map.iter().find_map(|(k, x)| {
            let p = if path.is_empty() {
                k.clone()
            } else {
                format!("{path}.{k}")
            };
            find_non_finite(x, p)
        }),
        serde_json::Value::Array(xs) => xs
            .iter()
            .enumerate()
            .find_map(|(i, x)| find_non_finite(x, format!("{path}[{i}]"))),
        _ => None,
    }
}
