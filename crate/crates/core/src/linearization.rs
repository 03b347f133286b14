//! The linearized operator of the residual (the Newton Jacobian), assembled
//! analytically, and the associated coercivity form.
//!
//! For a direction `(v, f)` the Jacobian action is
//!
//! ```text
//! L1 = v - v_xx + H'(u_x) v_x - alpha m^{alpha-1} f - eps (f - f_xx)
//! L2 = f - f_xx - (H''(u_x) v_x m + H'(u_x) f)_x + eps (v - v_xx)
//! ```
//!
//! with every derivative replaced by the grid stencils. Pairing `-L1` with `f`
//! and `L2` with `v` reproduces the coercivity form exactly, because `diff1`
//! is antisymmetric and `diff2` symmetric.

use crate::error::{MfgError, Result};
use crate::grid::{diff1, h1_norm_sq, GridFunction};
use crate::hamiltonian::Hamiltonian;
use crate::system::{check_positive, ProblemParams, State};

/// Equation / unknown block: 0 for the `u` block, 1 for the `m` block.
pub type Block = usize;

/// A `2n x 2n` matrix whose entries couple nodes at cyclic distance at most two.
///
/// Rows and columns are stored interleaved (`2i + block`) so that the
/// pattern is a narrow cyclic band; the public interface speaks in terms of
/// stacked vectors `[v_0..v_{n-1}, f_0..f_{n-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedCyclicMatrix {
    pub(crate) nodes: usize,
    pub(crate) lower: usize,
    pub(crate) upper: usize,
    /// Row-major, `width()` entries per interleaved row; entry `(r, d)` holds
    /// column `(r + d - lower) mod dim`.
    pub(crate) band: Vec<f64>,
}

/// Band widths of the Jacobian stencil in interleaved ordering.
const JAC_LOWER: usize = 5;
const JAC_UPPER: usize = 3;

impl BandedCyclicMatrix {
    pub fn zeros(nodes: usize) -> Self {
        let width = JAC_LOWER + JAC_UPPER + 1;
        assert!(2 * nodes > width, "too few nodes for the band");
        Self {
            nodes,
            lower: JAC_LOWER,
            upper: JAC_UPPER,
            band: vec![0.0; 2 * nodes * width],
        }
    }

    pub fn identity(nodes: usize) -> Self {
        let mut a = Self::zeros(nodes);
        for i in 0..nodes {
            a.add(0, i, 0, i, 1.0);
            a.add(1, i, 1, i, 1.0);
        }
        a
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Dimension `2n`.
    pub fn dim(&self) -> usize {
        2 * self.nodes
    }

    pub(crate) fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    /// Band slot of interleaved entry `(r, c)`, if it lies inside the cyclic band.
    pub(crate) fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let dim = self.dim();
        let d = (c + dim + self.lower - r) % dim;
        (d < self.width()).then_some(r * self.width() + d)
    }

    pub(crate) fn column_of(&self, r: usize, d: usize) -> usize {
        let dim = self.dim();
        (r + dim + d - self.lower) % dim
    }

    /// Adds `value` to the entry coupling equation `(row_block, i)` to unknown `(col_block, j)`.
    pub fn add(&mut self, row_block: Block, i: usize, col_block: Block, j: usize, value: f64) {
        let r = 2 * (i % self.nodes) + row_block;
        let c = 2 * (j % self.nodes) + col_block;
        let s = self
            .slot(r, c)
            .unwrap_or_else(|| panic!("entry ({r}, {c}) outside the band"));
        self.band[s] += value;
    }

    pub fn get(&self, row_block: Block, i: usize, col_block: Block, j: usize) -> f64 {
        let r = 2 * (i % self.nodes) + row_block;
        let c = 2 * (j % self.nodes) + col_block;
        self.slot(r, c).map_or(0.0, |s| self.band[s])
    }

    pub(crate) fn apply_interleaved(&self, x: &[f64]) -> Vec<f64> {
        let w = self.width();
        (0..self.dim())
            .map(|r| {
                let row = &self.band[r * w..(r + 1) * w];
                row.iter()
                    .enumerate()
                    .map(|(d, a)| a * x[self.column_of(r, d)])
                    .sum()
            })
            .collect()
    }

    pub(crate) fn to_interleaved(&self, stacked: &[f64]) -> Vec<f64> {
        let n = self.nodes;
        let mut out = vec![0.0; 2 * n];
        for i in 0..n {
            out[2 * i] = stacked[i];
            out[2 * i + 1] = stacked[n + i];
        }
        out
    }

    pub(crate) fn to_stacked(&self, interleaved: &[f64]) -> Vec<f64> {
        let n = self.nodes;
        let mut out = vec![0.0; 2 * n];
        for i in 0..n {
            out[i] = interleaved[2 * i];
            out[n + i] = interleaved[2 * i + 1];
        }
        out
    }

    /// Matrix-vector product on a stacked vector.
    pub fn apply(&self, stacked: &[f64]) -> Result<Vec<f64>> {
        if stacked.len() != self.dim() {
            return Err(MfgError::DimensionMismatch {
                expected: self.dim(),
                actual: stacked.len(),
            });
        }
        let y = self.apply_interleaved(&self.to_interleaved(stacked));
        Ok(self.to_stacked(&y))
    }

    /// Max row sum of absolute values.
    pub fn norm_inf(&self) -> f64 {
        self.band
            .chunks(self.width())
            .map(|row| row.iter().map(|a| a.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Assembles the Jacobian of [`crate::system::residual`] at `state`.
pub fn jacobian<H: Hamiltonian>(
    state: &State,
    params: &ProblemParams<H>,
) -> Result<BandedCyclicMatrix> {
    check_positive(&state.m)?;
    if state.n() != params.grid.n() {
        return Err(MfgError::GridMismatch {
            left: state.n(),
            right: params.grid.n(),
        });
    }
    let g = params.grid;
    let n = g.n();
    let h = g.h();
    let (inv_h2, inv_2h) = (1.0 / (h * h), 0.5 / h);
    let eps = params.epsilon;
    let alpha = params.alpha;
    let ham = &params.hamiltonian;
    let m = &state.m;
    let ux = diff1(&state.u);
    let hp: Vec<f64> = ux.values().iter().map(|&p| ham.first(p)).collect();
    // coefficient of v_x inside the divergence
    let c: Vec<f64> = (0..n).map(|j| ham.second(ux[j]) * m[j]).collect();

    let mut a = BandedCyclicMatrix::zeros(n);
    for i in 0..n {
        let (ip, im) = (g.next(i), g.prev(i));
        let (ipp, imm) = (g.next(ip), g.prev(im));

        // first equation, u-columns: v - v_xx + H'(u_x) v_x
        a.add(0, i, 0, i, 1.0 + 2.0 * inv_h2);
        a.add(0, i, 0, ip, -inv_h2 + hp[i] * inv_2h);
        a.add(0, i, 0, im, -inv_h2 - hp[i] * inv_2h);
        // first equation, m-columns: -alpha m^{alpha-1} f - eps (f - f_xx)
        a.add(
            0,
            i,
            1,
            i,
            -alpha * m[i].powf(alpha - 1.0) - eps * (1.0 + 2.0 * inv_h2),
        );
        a.add(0, i, 1, ip, eps * inv_h2);
        a.add(0, i, 1, im, eps * inv_h2);

        // second equation, u-columns: -(c v_x)_x + eps (v - v_xx)
        let q = inv_2h * inv_2h;
        a.add(1, i, 0, ipp, -c[ip] * q);
        a.add(1, i, 0, i, (c[ip] + c[im]) * q);
        a.add(1, i, 0, imm, -c[im] * q);
        a.add(1, i, 0, i, eps * (1.0 + 2.0 * inv_h2));
        a.add(1, i, 0, ip, -eps * inv_h2);
        a.add(1, i, 0, im, -eps * inv_h2);
        // second equation, m-columns: f - f_xx - (H'(u_x) f)_x
        a.add(1, i, 1, i, 1.0 + 2.0 * inv_h2);
        a.add(1, i, 1, ip, -inv_h2 - hp[ip] * inv_2h);
        a.add(1, i, 1, im, -inv_h2 + hp[im] * inv_2h);
    }
    Ok(a)
}

/// Jacobian action on the direction `(v, f)`, returned as its two blocks.
pub fn jacobian_action<H: Hamiltonian>(
    state: &State,
    params: &ProblemParams<H>,
    v: &GridFunction,
    f: &GridFunction,
) -> Result<(GridFunction, GridFunction)> {
    let j = jacobian(state, params)?;
    let mut d = v.values().to_vec();
    d.extend_from_slice(f.values());
    let y = j.apply(&d)?;
    let n = v.len();
    Ok((
        GridFunction::new(params.grid, y[..n].to_vec())?,
        GridFunction::new(params.grid, y[n..].to_vec())?,
    ))
}

/// Discrete coercivity form
/// `h sum [alpha m^{alpha-1} f^2 + H''(u_x) m (v_x)^2 + eps (v^2 + f^2) + eps ((D+v)^2 + (D+f)^2)]`.
pub fn coercivity_form<H: Hamiltonian>(
    state: &State,
    params: &ProblemParams<H>,
    v: &GridFunction,
    f: &GridFunction,
) -> Result<f64> {
    check_positive(&state.m)?;
    let n = state.n();
    if v.len() != n || f.len() != n {
        return Err(MfgError::GridMismatch {
            left: v.len(),
            right: n,
        });
    }
    let ham = &params.hamiltonian;
    let ux = diff1(&state.u);
    let vx = diff1(v);
    let m = &state.m;
    let weighted: f64 = (0..n)
        .map(|i| {
            params.alpha * m[i].powf(params.alpha - 1.0) * f[i] * f[i]
                + ham.second(ux[i]) * m[i] * vx[i] * vx[i]
        })
        .sum::<f64>()
        * params.grid.h();
    Ok(weighted + params.epsilon * h1_norm_sq(v, f)?)
}

/// `|h sum [-(Jd)_1 f + (Jd)_2 v] - B((v,f),(v,f))|`.
pub fn duality_check<H: Hamiltonian>(
    state: &State,
    params: &ProblemParams<H>,
    v: &GridFunction,
    f: &GridFunction,
) -> Result<f64> {
    let (l1, l2) = jacobian_action(state, params, v, f)?;
    let pairing = params.grid.h()
        * (0..state.n())
            .map(|i| -l1[i] * f[i] + l2[i] * v[i])
            .sum::<f64>();
    Ok((pairing - coercivity_form(state, params, v, f)?).abs())
}
