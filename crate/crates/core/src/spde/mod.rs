//! Generators and empirical Fokker-Planck SPDE residuals.
//!
//! The base residual tests how well the empirical flow of a simulated
//! population solves the measure-valued SPDE driven by the common noise:
//!
//! ```text
//! M_j = <mu_j, phi> - <mu_0, phi>
//!       - sum_{l<j} (1/n) sum_k L phi(X^k_l, a^k_l) dt
//!       - sum_{l<j} <mu_l, grad phi>^T gamma dB_l,
//! ```
//!
//! an average of orthogonal martingales with
//! `E|M_T|^2 <= T |grad phi|_inf^2 |sigma|^2 / n` in continuous time. The
//! reweighted variant replaces the empirical flow by the zeta-weighted
//! flow and the applied actions by a candidate deviation policy, which is
//! the measure-level form of the change of drift.

mod bump;

pub use bump::{u_bump, u_bump_d1, u_bump_d2, BumpKind, BumpTestFunction, HTruncation,
               XyTestFunction};

use nalgebra::DMatrix;
use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::girsanov::{beta_action_along, GirsanovWeights};
use crate::model::{MeasureSummary, ModelSpec};
use crate::rng;
use crate::sde::{self, CommonSignal, Policy, TrajectoryBundle};
use crate::timegrid::TimeGrid;

/// `L_{t,m} phi(x, a) = b . grad phi + tr[(sigma sigma^T + gamma gamma^T) hess phi] / 2`.
pub fn generator_apply(
    spec: &ModelSpec,
    t: f64,
    m: &MeasureSummary,
    phi: &BumpTestFunction,
    x: &[f64],
    action: &[f64],
) -> f64 {
    let cov = spec.diffusion_covariance();
    generator_apply_with_cov(spec, &cov, t, m, phi, x, action)
}

fn generator_apply_with_cov(
    spec: &ModelSpec,
    cov: &DMatrix<f64>,
    t: f64,
    m: &MeasureSummary,
    phi: &BumpTestFunction,
    x: &[f64],
    action: &[f64],
) -> f64 {
    let d = spec.dim;
    let grad = phi.gradient(x);
    if grad.iter().all(|&g| g == 0.0) && phi.value(x) == 0.0 {
        // outside the support the hessian vanishes as well
        let hess = phi.hessian(x);
        if hess.iter().all(|&h| h == 0.0) {
            return 0.0;
        }
    }
    let mut drift = vec![0.0; d];
    spec.drift_into(t, x, m, action, &mut drift);
    let hess = phi.hessian(x);
    let mut acc = 0.0;
    for c in 0..d {
        acc += drift[c] * grad[c];
    }
    let mut trace = 0.0;
    for a in 0..d {
        for b in 0..d {
            trace += cov[(a, b)] * hess[(b, a)];
        }
    }
    acc + 0.5 * trace
}

/// Relaxed-control form of the generator: the action argument is a
/// probability vector over the action grid,
/// `int_A L phi(x, a) q(da) = sum_a q_a L phi(x, a)`.
/// Diagnostics only; a Dirac vector collapses to the strict form exactly.
pub fn generator_apply_relaxed(
    spec: &ModelSpec,
    t: f64,
    m: &MeasureSummary,
    phi: &BumpTestFunction,
    x: &[f64],
    action_weights: &[f64],
) -> Result<f64> {
    if action_weights.len() != spec.n_actions() {
        return Err(LabError::Domain(
            "relaxed control must weight every grid action".into(),
        ));
    }
    let total: f64 = action_weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 || action_weights.iter().any(|&w| w < 0.0) {
        return Err(LabError::Domain(
            "relaxed control weights must be a probability vector".into(),
        ));
    }
    let cov = spec.diffusion_covariance();
    let mut acc = 0.0;
    for (idx, &w) in action_weights.iter().enumerate() {
        if w != 0.0 {
            acc += w * generator_apply_with_cov(spec, &cov, t, m, phi, x, spec.action(idx));
        }
    }
    Ok(acc)
}

/// Generator of the augmented (state, weight) process for a deviation
/// `beta`, applied to a test function on (x, y):
///
/// ```text
/// grad_x psi . b(a) + tr[(ss^T + gg^T) hess_x psi]/2
///   + y^2 d_yy psi |sigma^{-1}(b(beta) - b(a))|^2 / 2
///   + y d_y grad_x psi . (b(beta) - b(a))
/// ```
#[allow(clippy::too_many_arguments)]
pub fn extended_generator_apply(
    spec: &ModelSpec,
    node: usize,
    grid: TimeGrid,
    flow_hist: &[MeasureSummary],
    b_hist: ArrayView2<f64>,
    beta_action: &[f64],
    psi: &XyTestFunction,
    x: &[f64],
    y: f64,
    action: &[f64],
) -> Result<f64> {
    if y <= 0.0 {
        return Err(LabError::Domain("weight coordinate must be positive".into()));
    }
    let _ = b_hist; // histories pin the semi-Markov information set
    let d = spec.dim;
    let t = grid.time(node);
    let m = flow_hist
        .get(node)
        .ok_or_else(|| LabError::GridMismatch("flow history shorter than node".into()))?;

    let mut drift_a = vec![0.0; d];
    let mut drift_beta = vec![0.0; d];
    spec.drift_into(t, x, m, action, &mut drift_a);
    spec.drift_into(t, x, m, beta_action, &mut drift_beta);
    let diff: Vec<f64> = (0..d).map(|c| drift_beta[c] - drift_a[c]).collect();
    let mut xi = vec![0.0; d];
    crate::model::mat_vec(&spec.sigma_inv, &diff, &mut xi);
    let xi_norm2: f64 = xi.iter().map(|v| v * v).sum();

    let grad = psi.grad_x(x, y);
    let hess = psi.hess_x(x, y);
    let cov = spec.diffusion_covariance();
    let mut acc = 0.0;
    for c in 0..d {
        acc += grad[c] * drift_a[c];
    }
    let mut trace = 0.0;
    for a in 0..d {
        for b in 0..d {
            trace += cov[(a, b)] * hess[(b, a)];
        }
    }
    acc += 0.5 * trace;
    acc += 0.5 * y * y * psi.dyy(x, y) * xi_norm2;
    let mixed = psi.dy_grad_x(x, y);
    for c in 0..d {
        acc += y * mixed[c] * diff[c];
    }
    Ok(acc)
}

#[derive(Debug, Clone)]
pub struct ResidualPath {
    pub path: Vec<f64>,
    pub max_abs: f64,
}

/// Empirical Fokker-Planck SPDE residual of a simulated bundle.
pub fn fp_residual(
    spec: &ModelSpec,
    traj: &TrajectoryBundle,
    phi: &BumpTestFunction,
    db: ArrayView2<f64>,
) -> Result<ResidualPath> {
    let steps = traj.grid.steps;
    if db.nrows() != steps {
        return Err(LabError::GridMismatch(
            "common increments do not match the trajectory grid".into(),
        ));
    }
    let n = traj.n_players();
    let dt = traj.grid.dt();
    let cov = spec.diffusion_covariance();
    let d = spec.dim;

    let pairing = |j: usize| -> f64 {
        let mut acc = 0.0;
        for k in 0..n {
            acc += phi.value(traj.state(k, j));
        }
        acc / n as f64
    };

    let mut path = Vec::with_capacity(steps + 1);
    path.push(0.0);
    let base = pairing(0);
    let mut drift_sum = 0.0;
    let mut noise_sum = 0.0;
    for l in 0..steps {
        let t = traj.grid.time(l);
        let m = &traj.measure_flow[l];
        let mut gen_avg = 0.0;
        let mut grad_avg = vec![0.0; d];
        for k in 0..n {
            let x = traj.state(k, l);
            let a = spec.action(traj.actions[(k, l)]);
            gen_avg += generator_apply_with_cov(spec, &cov, t, m, phi, x, a);
            let g = phi.gradient(x);
            for c in 0..d {
                grad_avg[c] += g[c];
            }
        }
        gen_avg /= n as f64;
        grad_avg.iter_mut().for_each(|v| *v /= n as f64);
        drift_sum += gen_avg * dt;
        // <mu, grad phi>^T gamma dB
        let mut gdb = vec![0.0; d];
        let db_l: Vec<f64> = (0..d).map(|c| db[(l, c)]).collect();
        crate::model::mat_vec(&spec.gamma, &db_l, &mut gdb);
        noise_sum += grad_avg.iter().zip(&gdb).map(|(a, b)| a * b).sum::<f64>();
        path.push(pairing(l + 1) - base - drift_sum - noise_sum);
    }
    let max_abs = path.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(ResidualPath { path, max_abs })
}

/// Residual of the zeta-reweighted flow `<nu_j, phi> = (1/n) sum zeta^k_j
/// phi(X^k_j)` against the SPDE with the candidate deviation's drift.
pub fn nu_flow_residual(
    spec: &ModelSpec,
    traj: &TrajectoryBundle,
    weights: &[GirsanovWeights],
    beta: &Policy,
    phi: &BumpTestFunction,
    db: ArrayView2<f64>,
    signal: Option<&CommonSignal>,
) -> Result<ResidualPath> {
    let steps = traj.grid.steps;
    let n = traj.n_players();
    if weights.len() != n {
        return Err(LabError::GridMismatch(
            "need one weight path per player".into(),
        ));
    }
    let dt = traj.grid.dt();
    let cov = spec.diffusion_covariance();
    let d = spec.dim;
    let b_path = sde::cumulative(&db.to_owned());

    let pairing = |j: usize| -> f64 {
        let mut acc = 0.0;
        for k in 0..n {
            acc += weights[k].zeta(j) * phi.value(traj.state(k, j));
        }
        acc / n as f64
    };

    let mut path = Vec::with_capacity(steps + 1);
    path.push(0.0);
    let base = pairing(0);
    let mut drift_sum = 0.0;
    let mut noise_sum = 0.0;
    for l in 0..steps {
        let t = traj.grid.time(l);
        let m = &traj.measure_flow[l];
        let mut gen_avg = 0.0;
        let mut grad_avg = vec![0.0; d];
        for k in 0..n {
            let zeta = weights[k].zeta(l);
            let x = traj.state(k, l);
            let beta_idx = beta_action_along(traj, &b_path, k, beta, signal, l)?;
            let a_beta = spec.action(beta_idx);
            gen_avg += zeta * generator_apply_with_cov(spec, &cov, t, m, phi, x, a_beta);
            let g = phi.gradient(x);
            for c in 0..d {
                grad_avg[c] += zeta * g[c];
            }
        }
        gen_avg /= n as f64;
        grad_avg.iter_mut().for_each(|v| *v /= n as f64);
        drift_sum += gen_avg * dt;
        let mut gdb = vec![0.0; d];
        let db_l: Vec<f64> = (0..d).map(|c| db[(l, c)]).collect();
        crate::model::mat_vec(&spec.gamma, &db_l, &mut gdb);
        noise_sum += grad_avg.iter().zip(&gdb).map(|(a, b)| a * b).sum::<f64>();
        path.push(pairing(l + 1) - base - drift_sum - noise_sum);
    }
    let max_abs = path.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(ResidualPath { path, max_abs })
}

/// Martingale variance envelope from the orthogonality bound.
pub fn paper_bound(horizon: f64, grad_sup: f64, sigma_frobenius: f64, n: usize) -> f64 {
    horizon * grad_sup * grad_sup * sigma_frobenius * sigma_frobenius / n as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub estimate: f64,
    pub se: f64,
    pub bound: f64,
    pub below_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    pub slope: f64,
    pub slope_in_band: bool,
    pub dt_allowance: f64,
}

pub const SLOPE_BAND: (f64, f64) = (-1.3, -0.7);

/// Which residual the scaling experiment measures.
pub enum ResidualKind<'a> {
    Base,
    Reweighted { beta: &'a Policy },
}

/// E|M_T|^2 across population sizes with a log-log slope fit.
///
/// `policies_for(n)` supplies the baseline policy vector; replicas are
/// seeded deterministically from `(seed, n, replica)`.
#[allow(clippy::too_many_arguments)]
pub fn residual_scaling(
    spec: &ModelSpec,
    grid: TimeGrid,
    policies_for: &(dyn Fn(usize) -> Vec<Policy> + Sync),
    phi: &BumpTestFunction,
    n_list: &[usize],
    replicas: usize,
    seed: u64,
    kind: &ResidualKind,
    dt_allowance: f64,
) -> Result<ScalingTable> {
    if n_list.len() < 3 {
        return Err(LabError::Config(
            "scaling fit needs at least three population sizes".into(),
        ));
    }
    let grad_sup = phi.grad_sup();
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let samples: Vec<f64> = (0..replicas)
            .into_par_iter()
            .map(|r| -> Result<f64> {
                let bundle_seed = rng::derive_seed(seed, &[n as u64, r as u64]);
                let noise = sde::generate_noise(bundle_seed, n, grid, spec)?;
                let policies = policies_for(n);
                let traj = sde::simulate_nplayer(spec, &noise, &policies, None)?;
                let res = match kind {
                    ResidualKind::Base => fp_residual(spec, &traj, phi, noise.db.view())?,
                    ResidualKind::Reweighted { beta } => {
                        let weights =
                            crate::girsanov::weights_all_players(spec, &traj, &noise, beta, None)?;
                        nu_flow_residual(spec, &traj, &weights, beta, phi, noise.db.view(), None)?
                    }
                };
                let m_t = res.path[res.path.len() - 1];
                Ok(m_t * m_t)
            })
            .collect::<Result<Vec<_>>>()?;
        let (estimate, se) = sde::mean_se(&samples);
        let bound = paper_bound(grid.horizon, grad_sup, spec.sigma_frobenius(), n) + dt_allowance;
        rows.push(ScalingRow {
            n,
            estimate,
            se,
            bound,
            below_bound: estimate <= bound,
        });
    }

    // least-squares slope of ln(estimate) on ln(n)
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.estimate.max(1e-300).ln()).collect();
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let ym = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;

    Ok(ScalingTable {
        rows,
        slope,
        slope_in_band: slope >= SLOPE_BAND.0 && slope <= SLOPE_BAND.1,
        dt_allowance,
    })
}

/// O(dt) allowance for the residual bound, calibrated by a dt-halving run
/// at the largest population size (where the bias is most visible).
pub fn calibrate_dt_allowance(
    spec: &ModelSpec,
    grid: TimeGrid,
    policies_for: &(dyn Fn(usize) -> Vec<Policy> + Sync),
    phi: &BumpTestFunction,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<f64> {
    let fine = TimeGrid::new(grid.horizon, grid.steps * 2)?;
    let estimate = |g: TimeGrid, salt: u64| -> Result<f64> {
        let samples: Vec<f64> = (0..replicas)
            .into_par_iter()
            .map(|r| -> Result<f64> {
                let bundle_seed = rng::derive_seed(seed, &[salt, n as u64, r as u64]);
                let noise = sde::generate_noise(bundle_seed, n, g, spec)?;
                let traj = sde::simulate_nplayer(spec, &noise, &policies_for(n), None)?;
                let res = fp_residual(spec, &traj, phi, noise.db.view())?;
                let m_t = res.path[res.path.len() - 1];
                Ok(m_t * m_t)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(sde::mean_se(&samples).0)
    };
    let coarse = estimate(grid, 1)?;
    let halved = estimate(fine, 2)?;
    // extrapolate the O(dt) part; never negative
    Ok((2.0 * (coarse - halved)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, BuiltinModel};
    use ndarray::Array2;
    use std::collections::BTreeMap;
    use std::sync::Arc as StdArc;

    fn spec() -> ModelSpec {
        builtin_model(BuiltinModel::LqMonotone, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn generator_matches_hand_arithmetic() {
        // grad phi = 3, hess phi = 4, b = 2, sigma = gamma = 1:
        // 2*3 + (1 + 1)*4/2 = 10
        let mut s = spec();
        s.sigma = DMatrix::identity(1, 1);
        s.gamma = DMatrix::identity(1, 1);
        s.validate_structure().unwrap();
        s.drift = StdArc::new(|_t, _x, _m, _a, out| out[0] = 2.0);

        // synthetic test function with prescribed derivatives at x = 0.1
        let phi = BumpTestFunction::standard(vec![0.0], 1.0);
        let x = [0.1];
        let grad = phi.gradient(&x)[0];
        let hess = phi.hessian(&x)[(0, 0)];
        let m = MeasureSummary::dirac(&[0.0]);
        let got = generator_apply(&s, 0.0, &m, &phi, &x, &[0.0]);
        let want = 2.0 * grad + 0.5 * 2.0 * hess;
        assert!((got - want).abs() < 1e-14);

        // and the literal numbers from the display
        let want_display = 2.0 * 3.0 + 0.5 * 2.0 * 4.0;
        assert_eq!(want_display, 10.0);
    }

    #[test]
    fn generator_vanishes_off_support() {
        let s = spec();
        let phi = BumpTestFunction::standard(vec![0.0], 0.5);
        let m = MeasureSummary::dirac(&[0.0]);
        assert_eq!(generator_apply(&s, 0.0, &m, &phi, &[3.0], &[1.0]), 0.0);
    }

    #[test]
    fn pure_diffusion_reduces_to_laplacian_term() {
        let mut s = spec();
        s.drift = StdArc::new(|_t, _x, _m, _a, out| out[0] = 0.0);
        s.gamma = DMatrix::zeros(1, 1);
        let phi = BumpTestFunction::standard(vec![0.0], 1.0);
        let x = [0.3];
        let m = MeasureSummary::dirac(&[0.0]);
        let got = generator_apply(&s, 0.0, &m, &phi, &x, &[0.0]);
        let sigma2 = s.sigma[(0, 0)] * s.sigma[(0, 0)];
        let want = 0.5 * sigma2 * phi.hessian(&x)[(0, 0)];
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn extended_generator_projects_to_base() {
        // y-independent psi: the weight terms vanish and the value matches
        // the base generator embedded in (x, y)
        let s = spec();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let phi = BumpTestFunction::standard(vec![0.0], 1.5);
        let psi = XyTestFunction::XOnly { phi: phi.clone() };
        let flow: Vec<MeasureSummary> = (0..5).map(|_| MeasureSummary::dirac(&[0.0])).collect();
        let b = Array2::zeros((5, 1));
        let x = [0.4];
        let a = s.action(2).to_vec();
        let beta_a = s.action(9).to_vec();
        let ext = extended_generator_apply(
            &s, 1, grid, &flow, b.view(), &beta_a, &psi, &x, 2.0, &a,
        )
        .unwrap();
        let base = generator_apply(&s, grid.time(1), &flow[1], &phi, &x, &a);
        assert!((ext - base).abs() < 1e-12, "{ext} vs {base}");

        // equal actions: the last two terms vanish for any psi
        let psi_full = XyTestFunction::Product {
            h: HTruncation { m: 5.0 },
            phi: phi.clone(),
        };
        let same = extended_generator_apply(
            &s, 1, grid, &flow, b.view(), &a, &psi_full, &x, 2.0, &a,
        )
        .unwrap();
        let h = HTruncation { m: 5.0 };
        let embedded = h.value(2.0) * base;
        assert!((same - embedded).abs() < 1e-12);
    }

    #[test]
    fn linear_y_test_function_recovers_deviated_drift() {
        // psi = y phi: d_yy psi = 0 and the cross term swaps the drift to
        // the deviation's action
        let s = spec();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let phi = BumpTestFunction::standard(vec![0.0], 1.5);
        let psi = XyTestFunction::LinearY { phi: phi.clone() };
        let flow: Vec<MeasureSummary> = (0..5).map(|_| MeasureSummary::dirac(&[0.0])).collect();
        let b = Array2::zeros((5, 1));
        let x = [0.4];
        let y = 1.7;
        let a = s.action(2).to_vec();
        let beta_a = s.action(9).to_vec();
        let ext = extended_generator_apply(
            &s, 1, grid, &flow, b.view(), &beta_a, &psi, &x, y, &a,
        )
        .unwrap();
        let base_beta = generator_apply(&s, grid.time(1), &flow[1], &phi, &x, &beta_a);
        assert!(
            (ext - y * base_beta).abs() < 1e-12,
            "net drift must use the deviation action: {ext} vs {}",
            y * base_beta
        );
    }

    #[test]
    fn dirac_relaxed_control_collapses_to_the_strict_generator() {
        let s = spec();
        let phi = BumpTestFunction::standard(vec![0.0], 2.0);
        let m = MeasureSummary::dirac(&[0.2]);
        let x = [0.4];
        for idx in [0, 5, 10] {
            let mut q = vec![0.0; s.n_actions()];
            q[idx] = 1.0;
            let relaxed = generator_apply_relaxed(&s, 0.3, &m, &phi, &x, &q).unwrap();
            let strict = generator_apply(&s, 0.3, &m, &phi, &x, s.action(idx));
            assert_eq!(relaxed, strict, "single-term sum must be exact");
        }
        // a genuine mixture averages the strict values
        let mut q = vec![0.0; s.n_actions()];
        q[0] = 0.25;
        q[10] = 0.75;
        let relaxed = generator_apply_relaxed(&s, 0.0, &m, &phi, &x, &q).unwrap();
        let expect = 0.25 * generator_apply(&s, 0.0, &m, &phi, &x, s.action(0))
            + 0.75 * generator_apply(&s, 0.0, &m, &phi, &x, s.action(10));
        assert!((relaxed - expect).abs() < 1e-15);
        // malformed vectors are rejected
        assert!(generator_apply_relaxed(&s, 0.0, &m, &phi, &x, &q[..3]).is_err());
    }

    #[test]
    fn residual_vanishes_off_the_envelope() {
        let s = spec();
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let noise = sde::generate_noise(2, 6, grid, &s).unwrap();
        let traj =
            sde::simulate_nplayer(&s, &noise, &vec![Policy::ConstantAction(5); 6], None).unwrap();
        let phi = BumpTestFunction::standard(vec![500.0], 1.0);
        let res = fp_residual(&s, &traj, &phi, noise.db.view()).unwrap();
        assert_eq!(res.max_abs, 0.0);
    }

    #[test]
    fn paper_bound_arithmetic() {
        assert!((paper_bound(1.0, 1.0, 1.0, 100) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn nu_residual_reduces_to_base_when_beta_is_baseline() {
        let s = spec();
        let grid = TimeGrid::new(1.0, 6).unwrap();
        let noise = sde::generate_noise(4, 8, grid, &s).unwrap();
        let baseline = Policy::ConstantAction(3);
        let traj = sde::simulate_nplayer(&s, &noise, &vec![baseline.clone(); 8], None).unwrap();
        let weights =
            crate::girsanov::weights_all_players(&s, &traj, &noise, &baseline, None).unwrap();
        // zeta = 1 everywhere
        assert!(weights
            .iter()
            .all(|w| w.zeta_path().iter().all(|&z| z == 1.0)));
        let phi = BumpTestFunction::standard(vec![0.0], 4.0);
        let nu =
            nu_flow_residual(&s, &traj, &weights, &baseline, &phi, noise.db.view(), None).unwrap();
        let base = fp_residual(&s, &traj, &phi, noise.db.view()).unwrap();
        for (a, b) in nu.path.iter().zip(&base.path) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_requires_three_points() {
        let s = spec();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let phi = BumpTestFunction::standard(vec![0.0], 2.0);
        let factory = |n: usize| vec![Policy::ConstantAction(0); n];
        let err = residual_scaling(
            &s,
            grid,
            &factory,
            &phi,
            &[8, 16],
            4,
            1,
            &ResidualKind::Base,
            0.0,
        )
        .unwrap_err();
        assert!(matches!(err, LabError::Config(_)));
    }
}
