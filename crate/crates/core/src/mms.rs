//! Manufactured-solution convergence study.
//!
//! Exact fields `u* = a sin(2 pi x)`, `m* = 1 + b cos(2 pi x)` are made to
//! solve the continuum system by adding analytic sources; the discrete
//! solution is then compared with the samples of `u*`, `m*`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::grid::PeriodicGrid;
use crate::hamiltonian::Hamiltonian;
use crate::solver::{newton_with_sources, NewtonOptions};
use crate::system::{ProblemParams, Sources, State};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Manufactured {
    pub u_amplitude: f64,
    pub m_amplitude: f64,
}

impl Default for Manufactured {
    fn default() -> Self {
        Self {
            u_amplitude: 0.1,
            m_amplitude: 0.2,
        }
    }
}

impl Manufactured {
    pub fn u(&self, x: f64) -> (f64, f64, f64) {
        let a = self.u_amplitude;
        let (s, c) = (TWO_PI * x).sin_cos();
        (a * s, a * TWO_PI * c, -a * TWO_PI * TWO_PI * s)
    }

    pub fn m(&self, x: f64) -> (f64, f64, f64) {
        let b = self.m_amplitude;
        let (s, c) = (TWO_PI * x).sin_cos();
        (1.0 + b * c, -b * TWO_PI * s, -b * TWO_PI * TWO_PI * c)
    }

    pub fn state(&self, grid: &PeriodicGrid) -> Result<State> {
        State::new(grid.sample(|x| self.u(x).0), grid.sample(|x| self.m(x).0))
    }

    /// Continuum residuals of the exact fields.
    pub fn sources<H: Hamiltonian>(&self, params: &ProblemParams<H>) -> Result<Sources> {
        let h = &params.hamiltonian;
        let (eps, alpha, lambda) = (params.epsilon, params.alpha, params.lambda);
        let pot = &params.potential;
        let g1 = params.grid.sample(|x| {
            let (u, ux, uxx) = self.u(x);
            let (m, _, mxx) = self.m(x);
            u - uxx + h.value(ux) + lambda * pot.value(x) - m.powf(alpha) - eps * (m - mxx)
        });
        let g2 = params.grid.sample(|x| {
            let (u, ux, uxx) = self.u(x);
            let (m, mx, mxx) = self.m(x);
            let div = h.second(ux) * uxx * m + h.first(ux) * mx;
            m - mxx - div - 1.0 + eps * (u - uxx)
        });
        Ok(Sources { g1, g2 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsRow {
    pub n: usize,
    pub error_u: f64,
    pub error_m: f64,
    /// max of the two field errors
    pub error: f64,
    pub newton_iterations: usize,
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsStudy {
    pub rows: Vec<MmsRow>,
    /// log2(error_k / error_{k+1}) for consecutive doublings.
    pub observed_orders: Vec<f64>,
}

/// Solves the forced problem at every `n` (starting from `u = 0`, `m = 1`)
/// and records the max-norm error against the exact fields.
pub fn convergence_study<H: Hamiltonian + Clone>(
    params: &ProblemParams<H>,
    manufactured: &Manufactured,
    ns: &[usize],
    opts: &NewtonOptions,
) -> Result<MmsStudy> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let grid = PeriodicGrid::new(n)?;
        let p = params.with_grid(grid);
        p.validate()?;
        let sources = manufactured.sources(&p)?;
        let start = State::constant(&grid, 0.0, 1.0)?;
        let rep = newton_with_sources(&start, &p, &sources, opts)?;
        if !rep.converged {
            return Err(MfgError::MaxIterExceeded {
                iterations: rep.iterations,
                residual: rep.final_residual(),
            });
        }
        let exact = manufactured.state(&grid)?;
        let error_u = (&rep.final_state.u - &exact.u).max_abs();
        let error_m = (&rep.final_state.m - &exact.m).max_abs();
        rows.push(MmsRow {
            n,
            error_u,
            error_m,
            error: error_u.max(error_m),
            newton_iterations: rep.iterations,
            final_residual: rep.final_residual(),
        });
    }
    let observed_orders = rows
        .windows(2)
        .map(|w| (w[0].error / w[1].error).ln() / (w[1].n as f64 / w[0].n as f64).ln())
        .collect();
    Ok(MmsStudy {
        rows,
        observed_orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::HamiltonianModel;
    use crate::potential::PotentialSpec;
    use crate::system::residual_with_sources;

    fn params(n: usize) -> ProblemParams {
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

    #[test]
    fn exact_fields_leave_second_order_residual() {
        let mms = Manufactured::default();
        let err = |n: usize| {
            let p = params(n);
            let s = mms.state(&p.grid).unwrap();
            let src = mms.sources(&p).unwrap();
            residual_with_sources(&s, &p, &src).unwrap().max_abs()
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e1 < 0.1);
        let ratio = e1 / e2;
        assert!((3.2..=4.8).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn small_study_converges() {
        let study = convergence_study(
            &params(32),
            &Manufactured::default(),
            &[32, 64],
            &NewtonOptions::default(),
        )
        .unwrap();
        assert_eq!(study.rows.len(), 2);
        assert!((study.observed_orders[0] - 2.0).abs() < 0.3);
    }
}
