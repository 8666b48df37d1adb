//! Piecewise cubic Hermite profiles `x -> U(x)` built from node values and
//! node derivatives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rootfind::brent;
use crate::systems::{reverse, DerivativeSamples, Model};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("profile needs at least two nodes with strictly increasing x")]
    BadNodes,
    #[error("row {row} has {got} components, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("profile has {0} zero crossings, at least two needed")]
    FewerThanTwoCrossings(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermiteProfile {
    pub x: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    /// `dU/dx` at the nodes.
    pub du: Vec<Vec<f64>>,
}

impl HermiteProfile {
    pub fn new(x: Vec<f64>, u: Vec<Vec<f64>>, du: Vec<Vec<f64>>) -> Result<Self, ProfileError> {
        if x.len() < 2 || x.windows(2).any(|w| !(w[1] > w[0])) || u.len() != x.len() || du.len() != x.len() {
            return Err(ProfileError::BadNodes);
        }
        let dim = u[0].len();
        for (row, (a, b)) in u.iter().zip(&du).enumerate() {
            for got in [a.len(), b.len()] {
                if got != dim {
                    return Err(ProfileError::Ragged { row, expected: dim, got });
                }
            }
        }
        Ok(HermiteProfile { x, u, du })
    }

    /// Node derivatives taken from the vector field of `model`.
    pub fn from_states(model: &Model, x: Vec<f64>, u: Vec<Vec<f64>>) -> Result<Self, ProfileError> {
        let du = u
            .iter()
            .map(|row| {
                let mut d = vec![0.0; row.len()];
                model.rhs_into(row, &mut d);
                d
            })
            .collect();
        Self::new(x, u, du)
    }

    pub fn dim(&self) -> usize {
        self.u[0].len()
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    fn interval(&self, x: f64) -> usize {
        self.x.partition_point(|&v| v <= x).clamp(1, self.x.len() - 1) - 1
    }

    /// Value and `x`-derivative; outside the nodes the end cubics are
    /// extrapolated.
    pub fn eval(&self, x: f64) -> (Vec<f64>, Vec<f64>) {
        let i = self.interval(x);
        self.eval_on(i, x)
    }

    fn eval_on(&self, i: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let s = (x - x0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        let (y0, y1, m0, m1) = (&self.u[i], &self.u[i + 1], &self.du[i], &self.du[i + 1]);
        let n = self.dim();
        let mut v = vec![0.0; n];
        let mut d = vec![0.0; n];
        for c in 0..n {
            v[c] = h00 * y0[c] + h10 * h * m0[c] + h01 * y1[c] + h11 * h * m1[c];
            d[c] = d00 * y0[c] + d10 * m0[c] + d01 * y1[c] + d11 * m1[c];
        }
        (v, d)
    }

    /// Zeros of component `c`, polished on the interpolant.
    pub fn zeros(&self, c: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..self.x.len() - 1 {
            let (ga, gb) = (self.u[i][c], self.u[i + 1][c]);
            if ga == 0.0 {
                if out.last() != Some(&self.x[i]) {
                    out.push(self.x[i]);
                }
                continue;
            }
            if ga * gb < 0.0 {
                let mut g = |x: f64| self.eval_on(i, x).0[c];
                let scale = self.x[i + 1].abs().max(1.0);
                out.push(brent(&mut g, self.x[i], self.x[i + 1], ga, gb, 1e-15 * scale, 0.0));
            }
        }
        if self.u.last().unwrap()[c] == 0.0 {
            out.push(self.x_max());
        }
        out
    }

    /// Gaps between consecutive zeros of `U1`.
    pub fn root_distances(&self) -> Result<Vec<f64>, ProfileError> {
        let z = self.zeros(0);
        if z.len() < 2 {
            return Err(ProfileError::FewerThanTwoCrossings(z.len()));
        }
        Ok(z.windows(2).map(|w| w[1] - w[0]).collect())
    }

    /// `x -> R U(-x)`, the image under the reversibility.
    pub fn reversed(&self) -> HermiteProfile {
        let n = self.x.len();
        let mut x = Vec::with_capacity(n);
        let mut u = Vec::with_capacity(n);
        let mut du = Vec::with_capacity(n);
        for i in (0..n).rev() {
            x.push(-self.x[i]);
            u.push(reverse(&self.u[i]).0);
            du.push(reverse(&self.du[i]).0.into_iter().map(|v| -v).collect());
        }
        HermiteProfile { x, u, du }
    }

    /// Samples `c, c', ..., c^(dim)` at `points`: the lower derivatives are
    /// the interpolated states and the top one is the derivative of the
    /// interpolant of the last component.
    pub fn derivative_samples(&self, points: &[f64]) -> DerivativeSamples {
        let values = points
            .iter()
            .map(|&x| {
                let (v, d) = self.eval(x);
                let mut row = v;
                row.push(*d.last().unwrap());
                row
            })
            .collect();
        DerivativeSamples { x: points.to_vec(), values }
    }

    /// Midpoints of all intervals, where the interpolant is least exact.
    pub fn midpoints(&self) -> Vec<f64> {
        self.x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}
