//! Hamiltonians and the numerical audit of their growth assumptions.
//!
//! Everything downstream consumes a Hamiltonian only through [`Hamiltonian`]
//! (value, first and second derivative). The built-in model is
//! `H(p) = (1 + p^2)^{gamma/2}` with `1 < gamma < 2`.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};

pub trait Hamiltonian {
    fn value(&self, p: f64) -> f64;
    fn first(&self, p: f64) -> f64;
    fn second(&self, p: f64) -> f64;
    /// Growth exponent used by the polynomial growth bounds.
    fn gamma(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianModel {
    gamma: f64,
}

impl HamiltonianModel {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0 && gamma < 2.0) {
            return Err(MfgError::InvalidParameter {
                name: "gamma",
                reason: format!("must satisfy 1 < gamma < 2, got {gamma}"),
            });
        }
        Ok(Self { gamma })
    }
}

impl Hamiltonian for HamiltonianModel {
    fn value(&self, p: f64) -> f64 {
        (1.0 + p * p).powf(0.5 * self.gamma)
    }

    fn first(&self, p: f64) -> f64 {
        self.gamma * p * (1.0 + p * p).powf(0.5 * self.gamma - 1.0)
    }

    fn second(&self, p: f64) -> f64 {
        let s = 1.0 + p * p;
        self.gamma * s.powf(0.5 * self.gamma - 2.0) * (1.0 + (self.gamma - 1.0) * p * p)
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// What to do when the assumption audit finds a violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditPolicy {
    Off,
    #[default]
    Warn,
    Fail,
}

/// Constants of the growth bounds. Lower-envelope constants are `c2`, `ct2`;
/// upper ones `c3`, `ct3`, `c_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub ct1: f64,
    pub ct2: f64,
    pub ct3: f64,
    pub c_bar: f64,
}

/// Relative slack applied to the sampled extrema.
const CONSTANT_MARGIN: f64 = 1e-6;

fn lagrangian<H: Hamiltonian + ?Sized>(h: &H, p: f64) -> f64 {
    p * h.first(p) - h.value(p)
}

impl GrowthConstants {
    /// Fits the constants by sampling the defining ratios on a log-spaced
    /// momentum grid `[1e-6, 1e8]` (both signs), then widening by a small margin.
    ///
    /// `c1` and `ct1` are fixed at `|H(0)| + 1` and `|L(0)| + 1` with `L = pH' - H`;
    /// the remaining constants are the extremal ratios against `|p|^gamma`.
    pub fn derive<H: Hamiltonian + ?Sized>(h: &H) -> Self {
        let gamma = h.gamma();
        let c1 = h.value(0.0).abs() + 1.0;
        let ct1 = lagrangian(h, 0.0).abs() + 1.0;
        let mut c2 = f64::INFINITY;
        let mut c3 = f64::NEG_INFINITY;
        let mut ct2 = f64::INFINITY;
        let mut ct3 = f64::NEG_INFINITY;
        let mut c_bar = h.first(0.0).abs();
        let samples = 20_000;
        let (lo, hi) = (-6.0_f64, 8.0_f64);
        for k in 0..=samples {
            let mag = 10f64.powf(lo + (hi - lo) * k as f64 / samples as f64);
            for p in [mag, -mag] {
                let pg = p.abs().powf(gamma);
                let hv = h.value(p);
                let lv = lagrangian(h, p);
                c2 = c2.min((hv + c1) / pg);
                c3 = c3.max((hv - c1) / pg);
                ct2 = ct2.min((lv + ct1) / pg);
                ct3 = ct3.max((lv - ct1) / pg);
                c_bar = c_bar.max(h.first(p).abs() / (1.0 + p.abs().powf(gamma - 1.0)));
            }
        }
        Self {
            c1,
            c2: c2 * (1.0 - CONSTANT_MARGIN),
            c3: c3 * (1.0 + CONSTANT_MARGIN),
            ct1,
            ct2: ct2 * (1.0 - CONSTANT_MARGIN),
            ct3: ct3 * (1.0 + CONSTANT_MARGIN),
            c_bar: c_bar * (1.0 + CONSTANT_MARGIN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub assumption: String,
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthAudit {
    pub p_range: (f64, f64),
    pub violations: Vec<Violation>,
    pub constants_used: GrowthConstants,
}

impl GrowthAudit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn enforce(&self, policy: AuditPolicy) -> Result<()> {
        if self.violations.is_empty() {
            return Ok(());
        }
        match policy {
            AuditPolicy::Off => Ok(()),
            AuditPolicy::Warn => {
                for v in &self.violations {
                    log::warn!(
                        "assumption {} violated at p = {}: {} > {}",
                        v.assumption,
                        v.p,
                        v.lhs,
                        v.rhs
                    );
                }
                Ok(())
            }
            AuditPolicy::Fail => Err(MfgError::AssumptionViolated {
                count: self.violations.len(),
            }),
        }
    }
}

/// Checks the two-sided growth bounds on `H` and `pH' - H`, the derivative
/// growth bound, positivity of the constants and convexity on a symmetric
/// uniform sample of `[-p_max, p_max]`.
pub fn audit_assumptions<H: Hamiltonian + ?Sized>(
    h: &H,
    p_max: f64,
    samples: usize,
) -> Result<GrowthAudit> {
    if !(p_max > 0.0) || !p_max.is_finite() {
        return Err(MfgError::InvalidRange(format!(
            "p_max must be positive and finite, got {p_max}"
        )));
    }
    if samples < 100 {
        return Err(MfgError::InvalidRange(format!(
            "at least 100 samples required, got {samples}"
        )));
    }
    let k = GrowthConstants::derive(h);
    let gamma = h.gamma();
    let mut violations = Vec::new();
    for (name, c) in [
        ("H-growth:c1", k.c1),
        ("H-growth:c2", k.c2),
        ("H-growth:c3", k.c3),
        ("L-growth:c1", k.ct1),
        ("L-growth:c2", k.ct2),
        ("L-growth:c3", k.ct3),
        ("Hp-growth:c", k.c_bar),
    ] {
        if !(c > 0.0) {
            violations.push(Violation {
                assumption: format!("{name}>0"),
                p: 0.0,
                lhs: 0.0,
                rhs: c,
            });
        }
    }
    let mut record = |assumption: &str, p: f64, lhs: f64, rhs: f64| {
        if !(lhs <= rhs) {
            violations.push(Violation {
                assumption: assumption.to_string(),
                p,
                lhs,
                rhs,
            });
        }
    };

    for i in 0..samples {
        let p = -p_max + 2.0 * p_max * i as f64 / (samples - 1) as f64;
        let pg = p.abs().powf(gamma);
        let hv = h.value(p);
        let lv = lagrangian(h, p);
        record("H-growth:lower", p, -k.c1 + k.c2 * pg, hv);
        record("H-growth:upper", p, hv, k.c1 + k.c3 * pg);
        record("L-growth:lower", p, -k.ct1 + k.ct2 * pg, lv);
        record("L-growth:upper", p, lv, k.ct1 + k.ct3 * pg);
        record(
            "Hp-growth",
            p,
            h.first(p).abs(),
            k.c_bar * (1.0 + p.abs().powf(gamma - 1.0)),
        );
        record("convexity", p, 0.0, h.second(p));
    }
    Ok(GrowthAudit {
        p_range: (-p_max, p_max),
        violations,
        constants_used: k,
    })
}
