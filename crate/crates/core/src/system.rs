//! Discrete residual of the regularized stationary system
//!
//! ```text
//! u - u_xx + H(u_x) + lambda V - m^alpha - eps (m - m_xx)   = 0
//! m - m_xx - (H'(u_x) m)_x - 1 + eps (u - u_xx)             = 0
//! ```
//!
//! together with the pointwise formulas that recover `u_xx` and `m_xx`
//! from lower-order quantities.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::grid::{diff1, diff2, GridFunction, PeriodicGrid};
use crate::hamiltonian::{Hamiltonian, HamiltonianModel};
use crate::potential::{PotentialSamples, PotentialSpec};

/// Unknowns `(u, m)`; `m` is strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: GridFunction,
    pub m: GridFunction,
}

pub(crate) fn check_positive(m: &GridFunction) -> Result<()> {
    match m.values().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        Some((index, &value)) => Err(MfgError::NonpositiveDensity { index, value }),
        None => Ok(()),
    }
}

impl State {
    pub fn new(u: GridFunction, m: GridFunction) -> Result<Self> {
        if u.len() != m.len() {
            return Err(MfgError::GridMismatch {
                left: u.len(),
                right: m.len(),
            });
        }
        check_positive(&m)?;
        Ok(Self { u, m })
    }

    pub fn constant(grid: &PeriodicGrid, u: f64, m: f64) -> Result<Self> {
        Self::new(grid.constant(u), grid.constant(m))
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.u.grid()
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn m_min(&self) -> f64 {
        self.m.min()
    }

    /// Stacked vector `[u_0..u_{n-1}, m_0..m_{n-1}]`.
    pub fn to_stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.n());
        out.extend_from_slice(self.u.values());
        out.extend_from_slice(self.m.values());
        out
    }

    /// Inverse of [`State::to_stacked`]; fails if the density part is not positive.
    pub fn from_stacked(grid: &PeriodicGrid, x: &[f64]) -> Result<Self> {
        let n = grid.n();
        if x.len() != 2 * n {
            return Err(MfgError::DimensionMismatch {
                expected: 2 * n,
                actual: x.len(),
            });
        }
        Self::new(
            GridFunction::new(*grid, x[..n].to_vec())?,
            GridFunction::new(*grid, x[n..].to_vec())?,
        )
    }

    /// Cyclic shift of both fields by `k` nodes.
    pub fn shifted(&self, k: usize) -> State {
        State {
            u: self.u.shifted(k),
            m: self.m.shifted(k),
        }
    }
}

/// Everything that fixes one instance of the problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemParams<H = HamiltonianModel> {
    pub hamiltonian: H,
    pub alpha: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub potential: PotentialSpec,
    pub grid: PeriodicGrid,
}

impl<H: Hamiltonian + Clone> ProblemParams<H> {
    pub fn new(
        hamiltonian: H,
        alpha: f64,
        epsilon: f64,
        lambda: f64,
        potential: PotentialSpec,
        grid: PeriodicGrid,
    ) -> Result<Self> {
        let params = Self {
            hamiltonian,
            alpha,
            epsilon,
            lambda,
            potential,
            grid,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(MfgError::InvalidParameter {
                name: "alpha",
                reason: format!("must be positive, got {}", self.alpha),
            });
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(MfgError::InvalidParameter {
                name: "epsilon",
                reason: format!("must lie in (0, 1], got {}", self.epsilon),
            });
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(MfgError::InvalidParameter {
                name: "lambda",
                reason: format!("must lie in [0, 1], got {}", self.lambda),
            });
        }
        self.potential.sample(&self.grid)?;
        Ok(())
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    pub fn with_grid(&self, grid: PeriodicGrid) -> Self {
        Self {
            grid,
            ..self.clone()
        }
    }
}

impl<H> ProblemParams<H> {
    pub fn potential_samples(&self) -> Result<PotentialSamples> {
        self.potential.sample(&self.grid)
    }
}

/// The two residual components.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub f1: GridFunction,
    pub f2: GridFunction,
}

impl Residual {
    pub fn max_abs(&self) -> f64 {
        self.f1.max_abs().max(self.f2.max_abs())
    }

    pub fn to_stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.f1.len());
        out.extend_from_slice(self.f1.values());
        out.extend_from_slice(self.f2.values());
        out
    }
}

/// Manufactured forcing subtracted from the two equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sources {
    pub g1: GridFunction,
    pub g2: GridFunction,
}

fn check_grid<H>(state: &State, params: &ProblemParams<H>) -> Result<()> {
    if state.n() != params.grid.n() || state.m.len() != params.grid.n() {
        return Err(MfgError::GridMismatch {
            left: state.n(),
            right: params.grid.n(),
        });
    }
    Ok(())
}

pub fn residual<H: Hamiltonian>(state: &State, params: &ProblemParams<H>) -> Result<Residual> {
    check_grid(state, params)?;
    check_positive(&state.m)?;
    let v = params.potential_samples()?.v;
    let (u, m) = (&state.u, &state.m);
    let h = &params.hamiltonian;
    let (eps, alpha, lambda) = (params.epsilon, params.alpha, params.lambda);

    let ux = diff1(u);
    let uxx = diff2(u);
    let mxx = diff2(m);
    let q = ux.zip_with(m, |p, mi| h.first(p) * mi);
    let qx = diff1(&q);

    let n = state.n();
    let mut f1 = Vec::with_capacity(n);
    let mut f2 = Vec::with_capacity(n);
    for i in 0..n {
        let (ui, mi) = (u[i], m[i]);
        f1.push(
            ui - uxx[i] + h.value(ux[i]) + lambda * v[i] - mi.powf(alpha) - eps * (mi - mxx[i]),
        );
        f2.push(mi - mxx[i] - qx[i] - 1.0 + eps * (ui - uxx[i]));
    }
    Ok(Residual {
        f1: GridFunction::from_vec_unchecked(params.grid, f1),
        f2: GridFunction::from_vec_unchecked(params.grid, f2),
    })
}

/// Residual with manufactured sources subtracted: `(F1 - g1, F2 - g2)`.
pub fn residual_with_sources<H: Hamiltonian>(
    state: &State,
    params: &ProblemParams<H>,
    sources: &Sources,
) -> Result<Residual> {
    let r = residual(state, params)?;
    if sources.g1.len() != r.f1.len() || sources.g2.len() != r.f2.len() {
        return Err(MfgError::GridMismatch {
            left: sources.g1.len(),
            right: r.f1.len(),
        });
    }
    Ok(Residual {
        f1: &r.f1 - &sources.g1,
        f2: &r.f2 - &sources.g2,
    })
}

pub(crate) fn residual_opt<H: Hamiltonian>(
    state: &State,
    params: &ProblemParams<H>,
    sources: Option<&Sources>,
) -> Result<Residual> {
    match sources {
        Some(s) => residual_with_sources(state, params, s),
        None => residual(state, params),
    }
}

/// `u_xx` recovered pointwise from u, u_x, m, m_x.
pub fn reconstruct_uxx<H: Hamiltonian>(
    state: &State,
    params: &ProblemParams<H>,
) -> Result<GridFunction> {
    check_grid(state, params)?;
    check_positive(&state.m)?;
    let v = params.potential_samples()?.v;
    let (u, m) = (&state.u, &state.m);
    let h = &params.hamiltonian;
    let eps = params.epsilon;
    let ux = diff1(u);
    let mx = diff1(m);
    let out = (0..state.n())
        .map(|i| {
            let p = ux[i];
            let num = (1.0 + eps * eps) * u[i] + h.value(p) - eps + params.lambda * v[i]
                - m[i].powf(params.alpha)
                - eps * h.first(p) * mx[i];
            let den = 1.0 + eps * eps + eps * h.second(p) * m[i];
            num / den
        })
        .collect();
    Ok(GridFunction::from_vec_unchecked(params.grid, out))
}

/// `m_xx` recovered pointwise, using [`reconstruct_uxx`] for `u_xx`.
pub fn reconstruct_mxx<H: Hamiltonian>(
    state: &State,
    params: &ProblemParams<H>,
) -> Result<GridFunction> {
    let uxx = reconstruct_uxx(state, params)?;
    let (u, m) = (&state.u, &state.m);
    let h = &params.hamiltonian;
    let eps = params.epsilon;
    let ux = diff1(u);
    let mx = diff1(m);
    let out = (0..state.n())
        .map(|i| {
            let p = ux[i];
            m[i] + eps * (u[i] - uxx[i]) - 1.0 - h.second(p) * m[i] * uxx[i] - h.first(p) * mx[i]
        })
        .collect();
    Ok(GridFunction::from_vec_unchecked(params.grid, out))
}

/// Scalar parameters in a serializable form (for reports).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsSummary {
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub n: usize,
    pub potential: PotentialSpec,
}

impl<H: Hamiltonian> ProblemParams<H> {
    pub fn summary(&self) -> ParamsSummary {
        ParamsSummary {
            gamma: self.hamiltonian.gamma(),
            alpha: self.alpha,
            epsilon: self.epsilon,
            lambda: self.lambda,
            n: self.grid.n(),
            potential: self.potential.clone(),
        }
    }
}
