//! Direct solves on the banded-cyclic Jacobian and the damped Newton corrector.
//!
//! The cyclic band is split as
//!
//! ```text
//! [ A_II  A_IS ] [x_I]   [b_I]
//! [ A_SI  A_SS ] [x_S] = [b_S]
//! ```
//!
//! where the trailing block `S` is wide enough to absorb every wrap-around
//! entry, so `A_II` is an ordinary band matrix. `A_II` is factored by
//! partial-pivoting band LU; the small Schur complement
//! `A_SS - A_SI A_II^{-1} A_IS` is factored densely.
//!
//! `S` always holds whole nodes (both unknowns), so when the coercivity form
//! is positive definite every such principal block is nonsingular.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::hamiltonian::Hamiltonian;
use crate::linearization::{jacobian, BandedCyclicMatrix};
use crate::system::{residual_opt, ProblemParams, Sources, State};

/// Pivots below this magnitude are treated as exact zeros.
const PIVOT_FLOOR: f64 = 1e-300;
/// Pivot-growth ratio above which a warning is logged.
const ILL_CONDITIONED: f64 = 1e14;

/// LAPACK-style band LU of a general `dim x dim` band matrix with `kl`
/// sub- and `ku` super-diagonals. Column `j` is stored contiguously with
/// `ldab = 2 kl + ku + 1` rows; entry `(i, j)` lives at row `kl + ku + i - j`.
#[derive(Debug, Clone)]
struct BandLu {
    dim: usize,
    kl: usize,
    ku: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    fn ldab(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn at(&self, i: usize, j: usize) -> usize {
        j * self.ldab() + self.kl + self.ku + i - j
    }

    fn new(dim: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            dim,
            kl,
            ku,
            ab: vec![0.0; ldab * dim],
            ipiv: vec![0; dim],
        }
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i <= j + self.kl && j <= i + self.ku);
        let k = self.at(i, j);
        self.ab[k] = v;
    }

    /// In-place factorization; returns (max |pivot|, min |pivot|).
    fn factor(&mut self) -> Result<(f64, f64)> {
        let (dim, kl, ku) = (self.dim, self.kl, self.ku);
        let mut ju = 0usize;
        let (mut pmax, mut pmin) = (0.0_f64, f64::INFINITY);
        for j in 0..dim {
            let km = kl.min(dim - 1 - j);
            let mut p = 0;
            let mut best = self.ab[self.at(j, j)].abs();
            for i in 1..=km {
                let v = self.ab[self.at(j + i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.ipiv[j] = j + p;
            if !(best >= PIVOT_FLOOR) {
                return Err(MfgError::SingularMatrix {
                    step: j,
                    pivot: best,
                });
            }
            pmax = pmax.max(best);
            pmin = pmin.min(best);
            ju = ju.max((j + ku + p).min(dim - 1));
            if p != 0 {
                for c in j..=ju {
                    let (a, b) = (self.at(j, c), self.at(j + p, c));
                    self.ab.swap(a, b);
                }
            }
            if km > 0 {
                let piv = self.ab[self.at(j, j)];
                for i in 1..=km {
                    let k = self.at(j + i, j);
                    self.ab[k] /= piv;
                }
                for c in (j + 1)..=ju {
                    let t = self.ab[self.at(j, c)];
                    if t != 0.0 {
                        for i in 1..=km {
                            let l = self.ab[self.at(j + i, j)];
                            let k = self.at(j + i, c);
                            self.ab[k] -= l * t;
                        }
                    }
                }
            }
        }
        Ok((pmax, pmin))
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let (dim, kl) = (self.dim, self.kl);
        for j in 0..dim {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(dim - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                for i in 1..=km {
                    b[j + i] -= self.ab[self.at(j + i, j)] * bj;
                }
            }
        }
        let kv = self.kl + self.ku;
        for j in (0..dim).rev() {
            b[j] /= self.ab[self.at(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(kv);
                for (i, bi) in b[lo..j].iter_mut().enumerate() {
                    *bi -= self.ab[self.at(lo + i, j)] * bj;
                }
            }
        }
    }
}

/// Dense LU with partial pivoting for the small Schur complement.
#[derive(Debug, Clone)]
struct DenseLu {
    k: usize,
    a: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    fn factor(k: usize, mut a: Vec<f64>) -> Result<(Self, f64, f64)> {
        let mut perm: Vec<usize> = (0..k).collect();
        let (mut pmax, mut pmin) = (0.0_f64, f64::INFINITY);
        for j in 0..k {
            let (p, best) = (j..k)
                .map(|i| (i, a[i * k + j].abs()))
                .fold((j, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(best >= PIVOT_FLOOR) {
                return Err(MfgError::SingularMatrix {
                    step: j,
                    pivot: best,
                });
            }
            pmax = pmax.max(best);
            pmin = pmin.min(best);
            if p != j {
                for c in 0..k {
                    a.swap(j * k + c, p * k + c);
                }
                perm.swap(j, p);
            }
            let piv = a[j * k + j];
            for i in (j + 1)..k {
                let l = a[i * k + j] / piv;
                a[i * k + j] = l;
                for c in (j + 1)..k {
                    a[i * k + c] -= l * a[j * k + c];
                }
            }
        }
        Ok((Self { k, a, perm }, pmax, pmin))
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..k {
            for c in 0..i {
                x[i] -= self.a[i * k + c] * x[c];
            }
        }
        for i in (0..k).rev() {
            for c in (i + 1)..k {
                x[i] -= self.a[i * k + c] * x[c];
            }
            x[i] /= self.a[i * k + i];
        }
        x
    }
}

/// Factorization of a [`BandedCyclicMatrix`].
#[derive(Debug, Clone)]
pub struct CyclicLu {
    matrix: BandedCyclicMatrix,
    interior: usize,
    band: BandLu,
    /// `A_II^{-1} A_IS`, column-major (`border` columns of length `interior`).
    y: Vec<f64>,
    /// Sparse rows of `A_SI`: (border row, interior column, value).
    a_si: Vec<(usize, usize, f64)>,
    schur: DenseLu,
    condition_estimate: f64,
}

impl CyclicLu {
    pub fn factor(matrix: &BandedCyclicMatrix) -> Result<Self> {
        let dim = matrix.dim();
        let reach = matrix.lower.max(matrix.upper);
        let border = reach + reach % 2;
        let interior = dim - border;
        let w = matrix.width();

        let mut band = BandLu::new(interior, matrix.lower, matrix.upper);
        let mut a_is = vec![0.0; interior * border];
        let mut a_si = Vec::new();
        let mut a_ss = vec![0.0; border * border];
        for r in 0..dim {
            for d in 0..w {
                let v = matrix.band[r * w + d];
                if v == 0.0 {
                    continue;
                }
                let c = matrix.column_of(r, d);
                match (r < interior, c < interior) {
                    (true, true) => band.set(r, c, v),
                    (true, false) => a_is[(c - interior) * interior + r] = v,
                    (false, true) => a_si.push((r - interior, c, v)),
                    (false, false) => a_ss[(r - interior) * border + (c - interior)] = v,
                }
            }
        }
        let (bmax, bmin) = band.factor()?;
        let mut y = a_is;
        for col in y.chunks_mut(interior) {
            band.solve_in_place(col);
        }
        let mut s = a_ss;
        for &(r, c, v) in &a_si {
            for k in 0..border {
                s[r * border + k] -= v * y[k * interior + c];
            }
        }
        let (schur, smax, smin) = DenseLu::factor(border, s)?;
        let condition_estimate = (bmax.max(smax)) / (bmin.min(smin));
        if condition_estimate > ILL_CONDITIONED {
            log::warn!("ill-conditioned Jacobian: pivot ratio {condition_estimate:e}");
        }
        Ok(Self {
            matrix: matrix.clone(),
            interior,
            band,
            y,
            a_si,
            schur,
            condition_estimate,
        })
    }

    /// Ratio of the largest to the smallest pivot magnitude.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    pub fn is_ill_conditioned(&self) -> bool {
        self.condition_estimate > ILL_CONDITIONED
    }

    /// Solves for a stacked right-hand side.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let dim = self.matrix.dim();
        if rhs.len() != dim {
            return Err(MfgError::DimensionMismatch {
                expected: dim,
                actual: rhs.len(),
            });
        }
        let b = self.matrix.to_interleaved(rhs);
        let ni = self.interior;
        let border = dim - ni;
        let mut xi = b[..ni].to_vec();
        self.band.solve_in_place(&mut xi);
        let mut rs = b[ni..].to_vec();
        for &(r, c, v) in &self.a_si {
            rs[r] -= v * xi[c];
        }
        let xs = self.schur.solve(&rs);
        for (k, &xk) in xs.iter().enumerate() {
            let col = &self.y[k * ni..(k + 1) * ni];
            for (xv, yv) in xi.iter_mut().zip(col) {
                *xv -= yv * xk;
            }
        }
        xi.extend_from_slice(&xs);
        debug_assert_eq!(xi.len(), ni + border);
        Ok(self.matrix.to_stacked(&xi))
    }
}

/// Solves `J delta = rhs` for stacked vectors.
pub fn solve_linear(j: &BandedCyclicMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    CyclicLu::factor(j)?.solve(rhs)
}

/// `||J x - b||_inf / (||J||_inf ||x||_inf + ||b||_inf)`.
pub fn relative_backward_residual(j: &BandedCyclicMatrix, x: &[f64], b: &[f64]) -> Result<f64> {
    let jx = j.apply(x)?;
    let r = jx
        .iter()
        .zip(b)
        .map(|(a, c)| (a - c).abs())
        .fold(0.0, f64::max);
    let nx = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let nb = b.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let denom = j.norm_inf() * nx + nb;
    Ok(if denom == 0.0 { 0.0 } else { r / denom })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    pub tol_residual: f64,
    pub tol_step: f64,
    pub max_iters: usize,
    pub backtrack_factor: f64,
    pub min_step_scale: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            tol_step: 1e-12,
            max_iters: 50,
            backtrack_factor: 0.5,
            min_step_scale: 1e-6,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_residual", self.tol_residual),
            ("tol_step", self.tol_step),
            ("min_step_scale", self.min_step_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(MfgError::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        if self.max_iters == 0 {
            return Err(MfgError::InvalidParameter {
                name: "max_iters",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(MfgError::InvalidParameter {
                name: "backtrack_factor",
                reason: format!("must lie in (0, 1), got {}", self.backtrack_factor),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub converged: bool,
    pub iterations: usize,
    /// Residual max-norm at the start and after every accepted step.
    pub residual_history: Vec<f64>,
    pub final_state: State,
}

impl NewtonReport {
    pub fn final_residual(&self) -> f64 {
        *self
            .residual_history
            .last()
            .expect("history is never empty")
    }
}

/// Damped Newton on the residual, keeping `m > 0`.
pub fn newton<H: Hamiltonian>(
    state0: &State,
    params: &ProblemParams<H>,
    opts: &NewtonOptions,
) -> Result<NewtonReport> {
    newton_impl(state0, params, None, opts)
}

/// Damped Newton on the residual with manufactured sources subtracted.
pub fn newton_with_sources<H: Hamiltonian>(
    state0: &State,
    params: &ProblemParams<H>,
    sources: &Sources,
    opts: &NewtonOptions,
) -> Result<NewtonReport> {
    newton_impl(state0, params, Some(sources), opts)
}

fn newton_impl<H: Hamiltonian>(
    state0: &State,
    params: &ProblemParams<H>,
    sources: Option<&Sources>,
    opts: &NewtonOptions,
) -> Result<NewtonReport> {
    opts.validate()?;
    let grid = params.grid;
    let n = grid.n();
    let mut state = State::new(state0.u.clone(), state0.m.clone())?;
    let mut r = residual_opt(&state, params, sources)?;
    let mut rnorm = r.max_abs();
    let mut history = vec![rnorm];
    let mut iterations = 0;

    while rnorm > opts.tol_residual {
        if iterations == opts.max_iters {
            return Err(MfgError::MaxIterExceeded {
                iterations,
                residual: rnorm,
            });
        }
        let j = jacobian(&state, params)?;
        let rhs: Vec<f64> = r.to_stacked().iter().map(|v| -v).collect();
        let delta = solve_linear(&j, &rhs).map_err(|e| MfgError::LinearSolveFailed(Box::new(e)))?;
        let x = state.to_stacked();

        let mut s = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + s * d).collect();
            let positive = trial[n..].iter().all(|&m| m > 0.0);
            if positive {
                let cand = State::from_stacked(&grid, &trial)?;
                let rc = residual_opt(&cand, params, sources)?;
                let cn = rc.max_abs();
                if cn <= (1.0 - 0.25 * s) * rnorm {
                    break Some((cand, rc, cn));
                }
            }
            s *= opts.backtrack_factor;
            if s < opts.min_step_scale {
                if !positive {
                    return Err(MfgError::PositivityLost {
                        min_step_scale: opts.min_step_scale,
                    });
                }
                break None;
            }
        };
        let Some((cand, rc, cn)) = accepted else {
            return Err(MfgError::LineSearchFailed { residual: rnorm });
        };
        iterations += 1;
        let step = s * delta.iter().fold(0.0_f64, |a, d| a.max(d.abs()));
        state = cand;
        r = rc;
        rnorm = cn;
        history.push(rnorm);
        log::debug!("newton iter {iterations}: |F| = {rnorm:e}, scale {s}, |step| = {step:e}");
        if rnorm > opts.tol_residual && step <= opts.tol_step {
            // stagnated below the step tolerance
            break;
        }
    }
    Ok(NewtonReport {
        converged: rnorm <= opts.tol_residual,
        iterations,
        residual_history: history,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use crate::hamiltonian::HamiltonianModel;
    use crate::potential::PotentialSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_band(nodes: usize, rng: &mut ChaCha8Rng) -> BandedCyclicMatrix {
        let mut a = BandedCyclicMatrix::zeros(nodes);
        for i in 0..nodes {
            for (rb, cb, off) in [
                (0, 0, -1i64),
                (0, 0, 1),
                (0, 1, 0),
                (0, 1, 1),
                (0, 1, -1),
                (1, 0, 2),
                (1, 0, -2),
                (1, 0, 1),
                (1, 1, -1),
                (1, 1, 1),
                (1, 0, 0),
            ] {
                let j = (i as i64 + off).rem_euclid(nodes as i64) as usize;
                a.add(rb, i, cb, j, rng.gen_range(-1.0..1.0));
            }
            a.add(0, i, 0, i, 8.0);
            a.add(1, i, 1, i, 8.0);
        }
        a
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_band(16, &mut rng);
        let x = solve_linear(&a, &vec![0.0; 32]).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let a = BandedCyclicMatrix::identity(8);
        let b: Vec<f64> = (0..16).map(|k| (k as f64).sin()).collect();
        assert_eq!(solve_linear(&a, &b).unwrap(), b);
    }

    #[test]
    fn random_fixture_backward_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_band(64, &mut rng);
        let b: Vec<f64> = (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = solve_linear(&a, &b).unwrap();
        assert!(relative_backward_residual(&a, &x, &b).unwrap() <= 1e-12);
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // a permutation-like matrix: every diagonal entry is zero
        let mut a = BandedCyclicMatrix::zeros(8);
        for i in 0..8 {
            a.add(0, i, 1, i, 1.0);
            a.add(1, i, 0, i, -2.0);
            a.add(1, i, 0, i + 1, 0.25);
        }
        let b: Vec<f64> = (0..16).map(|k| 1.0 + k as f64).collect();
        let x = solve_linear(&a, &b).unwrap();
        assert!(relative_backward_residual(&a, &x, &b).unwrap() <= 1e-14);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = BandedCyclicMatrix::zeros(8);
        assert!(matches!(
            solve_linear(&a, &[1.0; 16]),
            Err(MfgError::SingularMatrix { .. })
        ));
    }

    fn params(n: usize) -> ProblemParams {
        ProblemParams::new(
            HamiltonianModel::new(1.5).unwrap(),
            1.0,
            0.1,
            0.0,
            PotentialSpec::zero(),
            PeriodicGrid::new(n).unwrap(),
        )
        .unwrap()
    }

    const M0: f64 = 1.1 / 1.11;

    #[test]
    fn newton_at_seed_is_immediate() {
        let p = params(32);
        let u0 = (1.0 - M0) / 0.1;
        let s = State::constant(&p.grid, u0, M0).unwrap();
        let rep = newton(&s, &p, &NewtonOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 1);
        assert!(rep.final_residual() <= 1e-12);
    }

    #[test]
    fn newton_returns_to_constant_solution() {
        let p = params(128);
        let u0 = (1.0 - M0) / 0.1;
        let bump = |x: f64| 0.01 * (2.0 * PI * x).sin();
        let s = State::new(
            p.grid.sample(|x| u0 + bump(x)),
            p.grid.sample(|x| M0 + bump(x)),
        )
        .unwrap();
        let rep = newton(&s, &p, &NewtonOptions::default()).unwrap();
        assert!(rep.converged);
        let f = &rep.final_state;
        assert!(f.u.values().iter().all(|v| (v - u0).abs() <= 1e-9));
        assert!(f.m.values().iter().all(|v| (v - M0).abs() <= 1e-9));
        for w in rep.residual_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn newton_reports_positivity_loss() {
        let p = params(16);
        // density nearly zero at one node and a large pull towards negative values there
        let mut m = vec![1.0; 16];
        m[5] = 1e-8;
        let u = p.grid.sample(|x| 50.0 * (2.0 * PI * x).cos());
        let s = State::new(u, crate::grid::GridFunction::new(p.grid, m).unwrap()).unwrap();
        let opts = NewtonOptions {
            min_step_scale: 1e-3,
            ..NewtonOptions::default()
        };
        match newton(&s, &p, &opts) {
            Err(MfgError::PositivityLost { .. }) => {}
            other => panic!("expected PositivityLost, got {other:?}"),
        }
    }

    #[test]
    fn options_validation() {
        let bad = NewtonOptions {
            backtrack_factor: 1.0,
            ..NewtonOptions::default()
        };
        assert!(bad.validate().is_err());
        assert!(NewtonOptions::default().validate().is_ok());
    }
}
