//! Gauss-Hermite quadrature for expectations of smooth functions under a
//! standard Gaussian.
//!
//! Nodes and weights come from the Golub-Welsch algorithm: the Hermite
//! three-term recurrence yields a symmetric tridiagonal companion matrix
//! with zero diagonal and sqrt(k/2) off-diagonal, whose eigenvalues are the
//! nodes and whose first eigenvector components give the weights.

use nalgebra::DMatrix;

use crate::error::{LabError, Result};

/// Quadrature rule in "standard normal" form: `E[f(Z)] ~ sum_i w_i f(z_i)`
/// for Z ~ N(0,1), with the weights normalized to sum to one exactly.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(LabError::Config("quadrature degree must be >= 1".into()));
        }
        if degree == 1 {
            return Ok(Self {
                points: vec![0.0],
                weights: vec![1.0],
            });
        }
        let mut companion = DMatrix::<f64>::zeros(degree, degree);
        for k in 0..degree - 1 {
            let off = ((k + 1) as f64 * 0.5).sqrt();
            companion[(k, k + 1)] = off;
            companion[(k + 1, k)] = off;
        }
        let eigen = companion.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = eigen
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let v0 = eigen.eigenvectors[(0, i)];
                (x, v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        // physicists' nodes integrate against exp(-x^2); substitute z = sqrt(2) x
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let points = pairs.iter().map(|p| p.0 * std::f64::consts::SQRT_2).collect();
        let weights = pairs.iter().map(|p| p.1 / total).collect();
        Ok(Self { points, weights })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Node locations for Z ~ N(0,1).
    #[inline]
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Probability weights, summing to one.
    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }

    /// Iterate over the d-fold product rule, invoking `f(z, w)` with a
    /// d-dimensional node. Intended for small d.
    pub fn product_rule(&self, dim: usize, mut f: impl FnMut(&[f64], f64)) {
        let mut idx = vec![0usize; dim];
        let mut z = vec![0.0; dim];
        loop {
            let mut w = 1.0;
            for (c, &i) in idx.iter().enumerate() {
                z[c] = self.points[i];
                w *= self.weights[i];
            }
            f(&z, w);
            // odometer increment
            let mut c = 0;
            loop {
                if c == dim {
                    return;
                }
                idx[c] += 1;
                if idx[c] < self.points.len() {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
        }
    }
}
