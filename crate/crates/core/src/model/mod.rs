//! Game instances: coefficients, action grids, initial laws, and numeric
//! validation of the standing assumptions.

mod builtins;
mod measure;
mod monotonicity;
mod validate;

pub use builtins::{builtin_model, BuiltinModel};
pub use measure::MeasureSummary;
pub use monotonicity::{check_lasry_lions, MonotonicityReport};
pub use validate::{validate_assumptions, ClauseReport, ValidationReport};

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::quad::GaussHermite;
use crate::rng;

pub type DriftFn = Arc<dyn Fn(f64, &[f64], &MeasureSummary, &[f64], &mut [f64]) + Send + Sync>;
pub type RunningCostFn = Arc<dyn Fn(f64, &[f64], &MeasureSummary, &[f64]) -> f64 + Send + Sync>;
pub type TerminalCostFn = Arc<dyn Fn(&[f64], &MeasureSummary) -> f64 + Send + Sync>;
/// Measure part `f1(t, x, m)` of a separable running cost.
pub type MeasureCostFn = Arc<dyn Fn(f64, &[f64], &MeasureSummary) -> f64 + Send + Sync>;
/// Action part `f2(t, x, a)` of a separable running cost.
pub type ActionCostFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;

/// Initial distribution: a sampler plus exact moments where known.
/// Components are independent in every variant.
#[derive(Debug, Clone)]
pub enum InitialLaw {
    Normal { mean: Vec<f64>, std: Vec<f64> },
    PointMass { point: Vec<f64> },
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Normal { mean, .. } => mean.len(),
            InitialLaw::PointMass { point } => point.len(),
            InitialLaw::UniformBox { lo, .. } => lo.len(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            InitialLaw::Normal { mean, .. } => mean.clone(),
            InitialLaw::PointMass { point } => point.clone(),
            InitialLaw::UniformBox { lo, hi } => {
                lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect()
            }
        }
    }

    pub fn std(&self) -> Vec<f64> {
        match self {
            InitialLaw::Normal { std, .. } => std.clone(),
            InitialLaw::PointMass { point } => vec![0.0; point.len()],
            InitialLaw::UniformBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| (b - a) / 12f64.sqrt())
                .collect(),
        }
    }

    pub fn sample_into(&self, seed: u64, tag: u64, unit: u64, out: &mut [f64]) {
        match self {
            InitialLaw::Normal { mean, std } => {
                for c in 0..out.len() {
                    out[c] = mean[c] + std[c] * rng::standard_normal(seed, tag, unit, 0, c as u64);
                }
            }
            InitialLaw::PointMass { point } => out.copy_from_slice(point),
            InitialLaw::UniformBox { lo, hi } => {
                for c in 0..out.len() {
                    let u = rng::uniform(seed, tag, unit, 0, c as u64);
                    out[c] = lo[c] + u * (hi[c] - lo[c]);
                }
            }
        }
    }

    /// `E |X|^q`, by quadrature for the continuous variants. Deterministic.
    pub fn abs_moment(&self, q: f64) -> f64 {
        if q == 0.0 {
            return 1.0;
        }
        match self {
            InitialLaw::PointMass { point } => {
                point.iter().map(|v| v * v).sum::<f64>().sqrt().powf(q)
            }
            InitialLaw::Normal { mean, std } => {
                if mean.len() == 1 {
                    // Simpson handles the |x|^q kink far better than
                    // Gauss-Hermite does
                    let (m, s) = (mean[0], std[0].max(1e-300));
                    let lo = m - 10.0 * s;
                    let hi = m + 10.0 * s;
                    let panels = 1 << 12;
                    let h = (hi - lo) / panels as f64;
                    let density = |x: f64| {
                        let z = (x - m) / s;
                        (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
                    };
                    let f = |x: f64| x.abs().powf(q) * density(x);
                    let mut acc = f(lo) + f(hi);
                    for i in 1..panels {
                        let x = lo + i as f64 * h;
                        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
                    }
                    return acc * h / 3.0;
                }
                let gh = GaussHermite::new(48).expect("quadrature");
                let d = mean.len();
                let mut acc = 0.0;
                gh.product_rule(d, |z, w| {
                    let r2: f64 = (0..d)
                        .map(|c| {
                            let x = mean[c] + std[c] * z[c];
                            x * x
                        })
                        .sum();
                    acc += w * r2.sqrt().powf(q);
                });
                acc
            }
            InitialLaw::UniformBox { lo, hi } => {
                // midpoint product rule, adequate for diagnostics
                let d = lo.len();
                let k = 256usize;
                let mut acc = 0.0;
                let mut idx = vec![0usize; d];
                loop {
                    let r2: f64 = (0..d)
                        .map(|c| {
                            let x = lo[c] + (idx[c] as f64 + 0.5) * (hi[c] - lo[c]) / k as f64;
                            x * x
                        })
                        .sum();
                    acc += r2.sqrt().powf(q);
                    let mut c = 0;
                    loop {
                        if c == d {
                            return acc / (k as f64).powi(d as i32);
                        }
                        idx[c] += 1;
                        if idx[c] < k {
                            break;
                        }
                        idx[c] = 0;
                        c += 1;
                    }
                }
            }
        }
    }

    /// Per-component CDF; components are independent.
    pub fn cdf_1d(&self, c: usize, x: f64) -> f64 {
        use statrs::distribution::ContinuousCDF;
        match self {
            InitialLaw::Normal { mean, std } => {
                if std[c] == 0.0 {
                    return if x >= mean[c] { 1.0 } else { 0.0 };
                }
                let n = statrs::distribution::Normal::new(mean[c], std[c]).expect("normal");
                n.cdf(x)
            }
            InitialLaw::PointMass { point } => {
                if x >= point[c] {
                    1.0
                } else {
                    0.0
                }
            }
            InitialLaw::UniformBox { lo, hi } => ((x - lo[c]) / (hi[c] - lo[c])).clamp(0.0, 1.0),
        }
    }
}

/// A game instance: coefficients, diffusion matrices, the finite action
/// grid, the initial law and the declared growth envelope.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub dim: usize,
    pub horizon: f64,
    pub drift: DriftFn,
    pub sigma: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub sigma_inv: DMatrix<f64>,
    pub running_cost: RunningCostFn,
    pub terminal_cost: TerminalCostFn,
    /// Set when `f = f1(t,x,m) + f2(t,x,a)`; required by the monotonicity
    /// checker.
    pub separable: Option<(MeasureCostFn, ActionCostFn)>,
    /// Finite action grid in R^k.
    pub actions: Vec<Vec<f64>>,
    pub action_lo: Vec<f64>,
    pub action_hi: Vec<f64>,
    pub initial_law: InitialLaw,
    /// Growth exponent of the coefficients.
    pub p: f64,
    /// Moment order of the initial law; either `p = p' = 0` or
    /// `0 < p <= max(p, 2) < p'`.
    pub p_prime: f64,
    /// Drift growth constant.
    pub c1: f64,
    /// Cost growth constant.
    pub c2: f64,
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("actions", &self.actions.len())
            .field("p", &self.p)
            .field("p_prime", &self.p_prime)
            .finish()
    }
}

impl ModelSpec {
    /// Structural invariants: invertible sigma (conditioned solve test),
    /// exponent relation, and a nonempty in-bounds action grid.
    pub fn validate_structure(&mut self) -> Result<()> {
        if self.dim == 0 || self.dim != self.initial_law.dim() {
            return Err(LabError::Config("state dimension mismatch".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(LabError::Config("horizon must be positive".into()));
        }
        if !(self.c1 > 0.0) || !(self.c2 > 0.0) {
            return Err(LabError::Config("growth constants must be positive".into()));
        }
        let bounded = self.p == 0.0 && self.p_prime == 0.0;
        let unbounded_ok =
            self.p > 0.0 && self.p <= self.p.max(2.0) && self.p.max(2.0) < self.p_prime;
        if !bounded && !unbounded_ok {
            return Err(LabError::Config(format!(
                "exponents must satisfy p = p' = 0 or 0 < p <= max(p,2) < p', got p={} p'={}",
                self.p, self.p_prime
            )));
        }
        if self.actions.is_empty() {
            return Err(LabError::Config("action grid is empty".into()));
        }
        let k = self.actions[0].len();
        if self.action_lo.len() != k || self.action_hi.len() != k {
            return Err(LabError::Config("action bound dimension mismatch".into()));
        }
        for a in &self.actions {
            if a.len() != k {
                return Err(LabError::Config("ragged action grid".into()));
            }
            for c in 0..k {
                if a[c] < self.action_lo[c] - 1e-12 || a[c] > self.action_hi[c] + 1e-12 {
                    return Err(LabError::Config(format!(
                        "action {a:?} outside declared bounds"
                    )));
                }
            }
        }
        // invertibility via solve test against the identity
        let lu = self.sigma.clone().lu();
        let det = lu.determinant();
        let scale = self.sigma.norm().max(1.0);
        if !det.is_finite() || det.abs() < 1e-10 * scale.powi(self.dim as i32) {
            return Err(LabError::Config(
                "sigma must be invertible (determinant test failed)".into(),
            ));
        }
        let inv = lu
            .try_inverse()
            .ok_or_else(|| LabError::Config("sigma inversion failed".into()))?;
        let residual = (&self.sigma * &inv - DMatrix::identity(self.dim, self.dim)).norm();
        if residual > 1e-8 {
            return Err(LabError::Config(format!(
                "sigma is too ill-conditioned: inverse residual {residual:.3e}"
            )));
        }
        self.sigma_inv = inv;
        Ok(())
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    #[inline]
    pub fn action(&self, idx: usize) -> &[f64] {
        &self.actions[idx]
    }

    pub fn max_action_norm(&self) -> f64 {
        self.actions
            .iter()
            .map(|a| a.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Moment orders cached on every empirical summary.
    pub fn moment_orders(&self) -> Vec<f64> {
        let mut q = vec![1.0, 2.0];
        if self.p > 0.0 {
            q.push(self.p);
            q.push(self.p_prime);
        }
        q.sort_by(|a, b| a.partial_cmp(b).unwrap());
        q.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        q
    }

    #[inline]
    pub fn drift_into(&self, t: f64, x: &[f64], m: &MeasureSummary, a: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, m, a, out)
    }

    pub fn drift_vec(&self, t: f64, x: &[f64], m: &MeasureSummary, a: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift_into(t, x, m, a, &mut out);
        out
    }

    #[inline]
    pub fn run_cost(&self, t: f64, x: &[f64], m: &MeasureSummary, a: &[f64]) -> f64 {
        (self.running_cost)(t, x, m, a)
    }

    #[inline]
    pub fn term_cost(&self, x: &[f64], m: &MeasureSummary) -> f64 {
        (self.terminal_cost)(x, m)
    }

    pub fn sigma_frobenius(&self) -> f64 {
        self.sigma.norm()
    }

    pub fn gamma_frobenius(&self) -> f64 {
        self.gamma.norm()
    }

    /// `sigma sigma^T + gamma gamma^T`, the full diffusion covariance.
    pub fn diffusion_covariance(&self) -> DMatrix<f64> {
        &self.sigma * self.sigma.transpose() + &self.gamma * self.gamma.transpose()
    }
}

/// `out = m x` without allocating; matrices are small.
#[inline]
pub fn mat_vec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let (rows, cols) = m.shape();
    debug_assert_eq!(cols, x.len());
    debug_assert_eq!(rows, out.len());
    for r in 0..rows {
        let mut acc = 0.0;
        for c in 0..cols {
            acc += m[(r, c)] * x[c];
        }
        out[r] = acc;
    }
}
