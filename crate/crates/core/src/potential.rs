//! Zero-mean trigonometric potentials `V(x) = sum_k a_k cos(2 pi k x) + b_k sin(2 pi k x)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::grid::{GridFunction, PeriodicGrid};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    /// Cosine coefficients a_1, a_2, ...
    #[serde(default)]
    pub cos: Vec<f64>,
    /// Sine coefficients b_1, b_2, ...
    #[serde(default)]
    pub sin: Vec<f64>,
}

/// Samples of V, V' and V'' on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSamples {
    pub v: GridFunction,
    pub dv: GridFunction,
    pub d2v: GridFunction,
}

impl PotentialSamples {
    pub fn sup_norm(&self) -> f64 {
        self.v.max_abs()
    }

    /// max(|V|, |V'|, |V''|) over the grid.
    pub fn c2_norm(&self) -> f64 {
        self.v
            .max_abs()
            .max(self.dv.max_abs())
            .max(self.d2v.max_abs())
    }
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        if let Some(c) = cos.iter().chain(&sin).find(|c| !c.is_finite()) {
            return Err(MfgError::InvalidParameter {
                name: "potential",
                reason: format!("non-finite coefficient {c}"),
            });
        }
        Ok(Self { cos, sin })
    }

    /// `V(x) = amplitude * cos(2 pi x)`.
    pub fn single_cosine(amplitude: f64) -> Self {
        Self {
            cos: vec![amplitude],
            sin: Vec::new(),
        }
    }

    /// Highest mode index K.
    pub fn modes(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    pub fn is_zero(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|&c| c == 0.0)
    }

    fn coefficients(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.modes()).map(move |k| {
            let a = self.cos.get(k).copied().unwrap_or(0.0);
            let b = self.sin.get(k).copied().unwrap_or(0.0);
            (2.0 * PI * (k + 1) as f64, a, b)
        })
    }

    pub fn value(&self, x: f64) -> f64 {
        self.coefficients()
            .map(|(w, a, b)| a * (w * x).cos() + b * (w * x).sin())
            .sum()
    }

    pub fn first(&self, x: f64) -> f64 {
        self.coefficients()
            .map(|(w, a, b)| w * (-a * (w * x).sin() + b * (w * x).cos()))
            .sum()
    }

    pub fn second(&self, x: f64) -> f64 {
        self.coefficients()
            .map(|(w, a, b)| -w * w * (a * (w * x).cos() + b * (w * x).sin()))
            .sum()
    }

    /// Exact samples of V and its first two derivatives.
    pub fn sample(&self, grid: &PeriodicGrid) -> Result<PotentialSamples> {
        let k = self.modes();
        if 2 * k >= grid.n() {
            return Err(MfgError::NyquistViolation {
                modes: k,
                n: grid.n(),
            });
        }
        Ok(PotentialSamples {
            v: grid.sample(|x| self.value(x)),
            dv: grid.sample(|x| self.first(x)),
            d2v: grid.sample(|x| self.second(x)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{diff2, integrate};

    #[test]
    fn zero_potential_samples_vanish() {
        let g = PeriodicGrid::new(16).unwrap();
        let s = PotentialSpec::zero().sample(&g).unwrap();
        assert_eq!(s.c2_norm(), 0.0);
        assert!(PotentialSpec::zero().is_zero());
    }

    #[test]
    fn half_cosine_values() {
        let g = PeriodicGrid::new(8).unwrap();
        let s = PotentialSpec::single_cosine(0.5).sample(&g).unwrap();
        assert!((s.v[0] - 0.5).abs() < 1e-15);
        assert!((s.d2v[0] + 0.5 * (2.0 * PI).powi(2)).abs() < 1e-12);
        assert!((s.d2v[0] + 19.739_208_8).abs() < 1e-6);
    }

    #[test]
    fn nyquist_guard() {
        let g = PeriodicGrid::new(8).unwrap();
        let spec = PotentialSpec::new(vec![0.0, 0.0, 0.0, 1.0], vec![]).unwrap();
        assert!(matches!(
            spec.sample(&g),
            Err(MfgError::NyquistViolation { modes: 4, n: 8 })
        ));
        let ok = PotentialSpec::new(vec![0.0, 0.0, 1.0], vec![]).unwrap();
        assert!(ok.sample(&g).is_ok());
    }

    #[test]
    fn samples_have_zero_mean() {
        let g = PeriodicGrid::new(32).unwrap();
        let spec = PotentialSpec::new(vec![0.3, -0.2, 0.7], vec![1.1, 0.4]).unwrap();
        let s = spec.sample(&g).unwrap();
        assert!(integrate(&s.v).abs() < 1e-14);
    }

    #[test]
    fn finite_difference_second_derivative_is_second_order() {
        let spec = PotentialSpec::new(vec![0.5, 0.1], vec![0.2]).unwrap();
        let err = |n: usize| {
            let g = PeriodicGrid::new(n).unwrap();
            let s = spec.sample(&g).unwrap();
            (&diff2(&s.v) - &s.d2v).max_abs()
        };
        let ratio = err(64) / err(128);
        assert!((3.2..=4.8).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rejects_non_finite_coefficients() {
        assert!(PotentialSpec::new(vec![f64::INFINITY], vec![]).is_err());
    }
}
