//! Uniform periodic grid on the unit torus and the discrete calculus built on it.
//!
//! All stencils are centered and wrap modulo `n`. `diff1` is antisymmetric and
//! `diff2` symmetric with respect to the plain sum, so the summation-by-parts
//! identities used by the linearization and diagnostics hold to rounding.

use std::ops::{Add, Index, Mul, Sub};

use crate::error::{MfgError, Result};

/// Smallest admissible node count.
pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    n: usize,
    h: f64,
}

impl PeriodicGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < MIN_NODES {
            return Err(MfgError::InvalidGrid(format!(
                "n = {n} is below the minimum of {MIN_NODES}"
            )));
        }
        Ok(Self {
            n,
            h: 1.0 / n as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    #[inline]
    pub fn next(&self, i: usize) -> usize {
        if i + 1 == self.n {
            0
        } else {
            i + 1
        }
    }

    #[inline]
    pub fn prev(&self, i: usize) -> usize {
        if i == 0 {
            self.n - 1
        } else {
            i - 1
        }
    }

    /// Periodic distance between nodes `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j);
        d.min(self.n - d) as f64 * self.h
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: *self,
            values: self.nodes().map(f).collect(),
        }
    }

    pub fn constant(&self, c: f64) -> GridFunction {
        GridFunction {
            grid: *self,
            values: vec![c; self.n],
        }
    }

    pub fn zeros(&self) -> GridFunction {
        self.constant(0.0)
    }
}

/// Real samples of a periodic function on a [`PeriodicGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(MfgError::DimensionMismatch {
                expected: grid.n(),
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(MfgError::NonFinite { index, value });
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Self { grid, values }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        Self::from_vec_unchecked(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two functions on the same grid.
    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        assert_eq!(self.grid.n(), other.grid.n(), "grid mismatch");
        Self::from_vec_unchecked(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Cyclic shift: result_i = self_{i - k}.
    pub fn shifted(&self, k: usize) -> GridFunction {
        let n = self.len();
        let mut out = vec![0.0; n];
        for (i, &v) in self.values.iter().enumerate() {
            out[(i + k) % n] = v;
        }
        Self::from_vec_unchecked(self.grid, out)
    }

    /// Forward difference (f_{i+1} - f_i)/h.
    pub fn forward_diff(&self) -> GridFunction {
        let g = self.grid;
        let inv_h = 1.0 / g.h();
        Self::from_vec_unchecked(
            g,
            (0..g.n())
                .map(|i| (self.values[g.next(i)] - self.values[i]) * inv_h)
                .collect(),
        )
    }
}

impl Index<usize> for GridFunction {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl Add for &GridFunction {
    type Output = GridFunction;

    fn add(self, rhs: &GridFunction) -> GridFunction {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &GridFunction {
    type Output = GridFunction;

    fn sub(self, rhs: &GridFunction) -> GridFunction {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul for &GridFunction {
    type Output = GridFunction;

    fn mul(self, rhs: &GridFunction) -> GridFunction {
        self.zip_with(rhs, |a, b| a * b)
    }
}

/// Centered first difference (f_{i+1} - f_{i-1}) / 2h.
pub fn diff1(f: &GridFunction) -> GridFunction {
    let g = *f.grid();
    let scale = 0.5 / g.h();
    let v = f.values();
    GridFunction::from_vec_unchecked(
        g,
        (0..g.n())
            .map(|i| (v[g.next(i)] - v[g.prev(i)]) * scale)
            .collect(),
    )
}

/// Three-point second difference (f_{i+1} - 2 f_i + f_{i-1}) / h^2.
pub fn diff2(f: &GridFunction) -> GridFunction {
    let g = *f.grid();
    let inv_h2 = 1.0 / (g.h() * g.h());
    let v = f.values();
    GridFunction::from_vec_unchecked(
        g,
        (0..g.n())
            .map(|i| (v[g.next(i)] - 2.0 * v[i] + v[g.prev(i)]) * inv_h2)
            .collect(),
    )
}

/// Rectangle rule h * sum f_i.
pub fn integrate(f: &GridFunction) -> f64 {
    f.grid().h() * f.values().iter().sum::<f64>()
}

/// Discrete inner product h * sum f_i g_i.
pub fn inner(f: &GridFunction, g: &GridFunction) -> f64 {
    assert_eq!(f.len(), g.len(), "grid mismatch");
    f.grid().h()
        * f.values()
            .iter()
            .zip(g.values())
            .map(|(a, b)| a * b)
            .sum::<f64>()
}

/// Discrete L2 norm.
pub fn l2_norm(f: &GridFunction) -> f64 {
    inner(f, f).sqrt()
}

/// Squared discrete H1 x H1 norm of the pair `(v, f)`, with forward-difference gradients.
pub fn h1_norm_sq(v: &GridFunction, f: &GridFunction) -> Result<f64> {
    if v.len() != f.len() {
        return Err(MfgError::GridMismatch {
            left: v.len(),
            right: f.len(),
        });
    }
    let dv = v.forward_diff();
    let df = f.forward_diff();
    Ok(inner(v, v) + inner(f, f) + inner(&dv, &dv) + inner(&df, &df))
}

/// Discrete 1/2-Hölder seminorm: max over node pairs of |f_i - f_j| / d(x_i, x_j)^{1/2}.
pub fn holder_half_seminorm(f: &GridFunction) -> f64 {
    let g = f.grid();
    let v = f.values();
    let mut best = 0.0_f64;
    for i in 0..g.n() {
        for j in (i + 1)..g.n() {
            let q = (v[i] - v[j]).abs() / g.distance(i, j).sqrt();
            best = best.max(q);
        }
    }
    best
}
