//! Shared fixtures and independent oracles for the integration suites.
//!
//! The oracles here deliberately avoid the library's solver code paths:
//! the scalar mean-field recursion integrates the equilibrium ODE system
//! directly, and the table-policy evaluator re-implements the frozen
//! environment arithmetic from the model's closed forms.

#![allow(dead_code)]

use std::sync::OnceLock;

use mfglab::lab::{ExperimentConfig, LabContext};
use mfglab::mfe::MfeSolution;
use mfglab::model::ModelSpec;
use mfglab::quad::GaussHermite;

/// Acceptance-scale configuration: the library defaults, i.e. 25 time
/// steps, 61 state bins, 8 scenarios, damped Picard at theta = 0.5 and
/// tol = 1e-3, a 41-point action grid and the strong-common-noise variant
/// of the mean-coupled linear-quadratic model.
pub fn acceptance_config() -> ExperimentConfig {
    ExperimentConfig::default()
}

pub struct SharedLab {
    pub ctx: LabContext,
    pub solutions: Vec<MfeSolution>,
}

static SHARED: OnceLock<SharedLab> = OnceLock::new();

/// Context plus the eight solved scenarios, computed once per test binary.
pub fn shared_lab() -> &'static SharedLab {
    SHARED.get_or_init(|| {
        let ctx = LabContext::new(acceptance_config()).expect("acceptance config");
        let solutions = ctx.solve_all().expect("picard solve");
        SharedLab { ctx, solutions }
    })
}

/// Scenario-conditional scalar oracle for the linear-quadratic model with
/// mean coupling: state-cost gradient eta and population mean follow
///
/// ```text
/// eta_j   = eta_{j+1} - c mean_j dt,      eta_N = -c_g mean_N,
/// a_j     = clip(eta_{j+1}, +-a_max),
/// mean_{j+1} = mean_j + a_j dt + gamma dB_j,
/// ```
///
/// iterated with damping to its fixed point, plus the controlled-free
/// conditional variance var_j = var_0 + sigma^2 t_j.
pub struct LqScalarOracle {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub eta: Vec<f64>,
}

pub fn lq_scalar_oracle(
    spec: &ModelSpec,
    b_path: &ndarray::Array2<f64>,
    c: f64,
    c_g: f64,
    a_max: f64,
) -> LqScalarOracle {
    let steps = b_path.nrows() - 1;
    let dt = spec.horizon / steps as f64;
    let gamma = spec.gamma[(0, 0)];
    let sigma = spec.sigma[(0, 0)];
    let m0 = spec.initial_law.mean()[0];
    let v0 = {
        let s = spec.initial_law.std()[0];
        s * s
    };

    let mut mean: Vec<f64> = (0..=steps)
        .map(|j| m0 + gamma * b_path[(j, 0)])
        .collect();
    let mut eta = vec![0.0; steps + 1];
    let theta = 0.5;
    for _ in 0..2000 {
        eta[steps] = -c_g * mean[steps];
        for j in (0..steps).rev() {
            eta[j] = eta[j + 1] - c * mean[j] * dt;
        }
        let mut fresh = vec![0.0; steps + 1];
        fresh[0] = m0;
        for j in 0..steps {
            let a = eta[j + 1].clamp(-a_max, a_max);
            fresh[j + 1] = fresh[j] + a * dt + gamma * (b_path[(j + 1, 0)] - b_path[(j, 0)]);
        }
        let mut delta = 0.0f64;
        for j in 0..=steps {
            let mixed = (1.0 - theta) * mean[j] + theta * fresh[j];
            delta = delta.max((mixed - mean[j]).abs());
            mean[j] = mixed;
        }
        if delta < 1e-13 {
            break;
        }
    }
    let variance = (0..=steps)
        .map(|j| v0 + sigma * sigma * dt * j as f64)
        .collect();
    LqScalarOracle {
        mean,
        variance,
        eta,
    }
}

/// Frozen-environment value of one fixed deviator table on the tiny
/// enumeration instance, written from the closed-form coefficients of the
/// linear-quadratic model (n = 2: the measure is the deviator plus one
/// frozen opponent).
pub struct TinyInstance {
    pub dt: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub c: f64,
    pub c_g: f64,
    pub actions: Vec<f64>,
    pub centers: Vec<f64>,
    /// Opponent states per node.
    pub opponent: Vec<f64>,
    /// Common-noise increments per step.
    pub db: Vec<f64>,
    /// Deviator's start point.
    pub x0: f64,
    pub quad: GaussHermite,
}

impl TinyInstance {
    fn interp(&self, values: &[f64], x: f64) -> f64 {
        // multilinear with edge clamp, mirroring the lattice definition
        let h = self.centers[1] - self.centers[0];
        let pos = (x - self.centers[0]) / h;
        let max_i = (self.centers.len() - 1) as f64;
        let p = pos.clamp(0.0, max_i);
        let i0 = p.floor().min(max_i - 1.0).max(0.0) as usize;
        let u = (p - i0 as f64).clamp(0.0, 1.0);
        (1.0 - u) * values[i0] + u * values[i0 + 1]
    }

    fn running(&self, x: f64, opp: f64, a: f64) -> f64 {
        let mean = 0.5 * opp + 0.5 * x;
        -0.5 * a * a - self.c * x * mean
    }

    fn terminal(&self, x: f64, opp: f64) -> f64 {
        let mean = 0.5 * opp + 0.5 * x;
        -self.c_g * x * mean
    }

    /// Value of the table under the frozen-environment dynamics.
    pub fn evaluate_table(&self, table: &[usize]) -> f64 {
        let steps = self.db.len();
        let bins = self.centers.len();
        let mut value: Vec<f64> = self
            .centers
            .iter()
            .map(|&x| self.terminal(x, self.opponent[steps]))
            .collect();
        for j in (0..steps).rev() {
            let mut next = vec![0.0; bins];
            for (bin, &x) in self.centers.iter().enumerate() {
                let a = self.actions[table[j * bins + bin]];
                let x_base = x + a * self.dt + self.gamma * self.db[j];
                let mut expectation = 0.0;
                for (z, w) in self.quad.points().iter().zip(self.quad.weights()) {
                    let x_next = x_base + self.sigma * z * self.dt.sqrt();
                    expectation += w * self.interp(&value, x_next);
                }
                next[bin] = self.running(x, self.opponent[j], a) * self.dt + expectation;
            }
            value = next;
        }
        self.interp(&value, self.x0)
    }
}
