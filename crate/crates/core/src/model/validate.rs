//! Sampled numeric validation of the standing assumptions.
//!
//! The checks are sampled, not proved: each clause reports its worst
//! sample so that failures are reproducible from the seed.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::rng::{self, stream};

use super::{MeasureSummary, ModelSpec};

#[derive(Debug, Clone, Serialize)]
pub struct SampleDescr {
    pub t: f64,
    pub x: Vec<f64>,
    pub measure_mean: Vec<f64>,
    pub measure_moment_p: f64,
    pub action: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClauseReport {
    pub clause: String,
    pub pass: bool,
    /// Signed margin; negative values violate the clause.
    pub worst_margin: f64,
    pub worst_sample: Option<SampleDescr>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub seed: u64,
    pub sample_budget: usize,
    pub clauses: Vec<ClauseReport>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.clauses.iter().all(|c| c.pass)
    }

    /// One JSON record per clause.
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        for clause in &self.clauses {
            let mut rec = serde_json::to_value(clause)
                .map_err(|e| LabError::Internal(format!("serialize clause: {e}")))?;
            rec["model"] = serde_json::Value::String(self.model.clone());
            rec["seed"] = serde_json::Value::from(self.seed);
            writeln!(w, "{rec}")?;
        }
        Ok(())
    }
}

struct Sample {
    t: f64,
    x: Vec<f64>,
    m: MeasureSummary,
}

impl Sample {
    fn descr(&self, spec: &ModelSpec, action: &[f64]) -> SampleDescr {
        SampleDescr {
            t: self.t,
            x: self.x.clone(),
            measure_mean: self.m.mean().to_vec(),
            measure_moment_p: self.m.moment(spec.p.max(1.0)),
            action: action.to_vec(),
        }
    }
}

fn draw_sample(spec: &ModelSpec, seed: u64, i: u64) -> Sample {
    let d = spec.dim;
    let t = spec.horizon * rng::uniform(seed, stream::VALIDATION, i, 0, 0);
    // probe the growth clauses at the law's scale and well beyond it
    let scale = [1.0, 3.0, 9.0][(i % 3) as usize];
    let mut x = vec![0.0; d];
    spec.initial_law
        .sample_into(seed, stream::VALIDATION, i * 7 + 1, &mut x);
    for v in &mut x {
        *v *= scale;
    }
    let atoms = 8usize;
    let mut pts = Array2::zeros((atoms, d));
    for a in 0..atoms {
        let mut row = vec![0.0; d];
        spec.initial_law
            .sample_into(seed, stream::VALIDATION, i * 131 + 2 + a as u64, &mut row);
        for (c, v) in row.iter().enumerate() {
            pts[(a, c)] = v * scale;
        }
    }
    let m = MeasureSummary::from_points(Arc::new(pts), &spec.moment_orders()).expect("atoms");
    Sample { t, x, m }
}

fn vec_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_finite(clause: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(LabError::Evaluation {
            clause: clause.to_string(),
            detail: format!("coefficient evaluated to {value}"),
        })
    }
}

/// Checks clauses (A.1)-(A.5) on `sample_budget` random samples.
pub fn validate_assumptions(
    spec: &ModelSpec,
    sample_budget: usize,
    rng_seed: u64,
) -> Result<ValidationReport> {
    if sample_budget < 1 {
        return Err(LabError::Config("sample budget must be >= 1".into()));
    }

    // A.1: finite nonempty action grid within its declared bounds
    let mut a1_margin = f64::INFINITY;
    for a in &spec.actions {
        for c in 0..a.len() {
            a1_margin = a1_margin
                .min(a[c] - spec.action_lo[c])
                .min(spec.action_hi[c] - a[c]);
        }
    }
    let a1 = ClauseReport {
        clause: "A.1".into(),
        pass: !spec.actions.is_empty() && a1_margin >= -1e-12,
        worst_margin: a1_margin,
        worst_sample: None,
        detail: format!("{} grid actions within declared bounds", spec.n_actions()),
    };

    let mut a2_worst = 0.0f64;
    let mut a2_sample = None;
    let mut a3_worst = f64::INFINITY;
    let mut a3_sample = None;
    let mut a4_worst = f64::INFINITY;
    let mut a4_sample = None;

    let mut drift = vec![0.0; spec.dim];
    let mut drift_pert = vec![0.0; spec.dim];

    for i in 0..sample_budget as u64 {
        let s = draw_sample(spec, rng_seed, i);
        let a_idx = (rng::uniform(rng_seed, stream::VALIDATION, i, 1, 0)
            * spec.n_actions() as f64) as usize;
        let action = spec.action(a_idx.min(spec.n_actions() - 1));

        spec.drift_into(s.t, &s.x, &s.m, action, &mut drift);
        let f = spec.run_cost(s.t, &s.x, &s.m, action);
        let g = spec.term_cost(&s.x, &s.m);
        check_finite("A.3", vec_norm(&drift))?;
        check_finite("A.4", f)?;
        check_finite("A.4", g)?;

        // A.2: local continuity probe; flags O(1) jumps across a tiny step
        let delta = 1e-6 * (1.0 + vec_norm(&s.x));
        let mut x_pert = s.x.clone();
        x_pert[0] += delta;
        spec.drift_into(s.t, &x_pert, &s.m, action, &mut drift_pert);
        let f_pert = spec.run_cost(s.t, &x_pert, &s.m, action);
        let jump = drift
            .iter()
            .zip(&drift_pert)
            .map(|(a, b)| (a - b).abs())
            .fold((f - f_pert).abs(), f64::max);
        let ratio = jump / delta;
        if ratio > a2_worst {
            a2_worst = ratio;
            a2_sample = Some(s.descr(spec, action));
        }

        // A.3 drift growth
        let xn = vec_norm(&s.x);
        let envelope = if spec.p > 0.0 {
            spec.c1 * (1.0 + xn + s.m.moment(spec.p).powf(1.0 / spec.p.max(1.0)))
        } else {
            spec.c1
        };
        let margin3 = envelope - vec_norm(&drift);
        if margin3 < a3_worst {
            a3_worst = margin3;
            a3_sample = Some(s.descr(spec, action));
        }

        // A.4 cost growth
        let envelope4 = spec.c2 * (1.0 + xn.powf(spec.p) + s.m.moment(spec.p));
        let margin4 = envelope4 - (f.abs() + g.abs());
        if margin4 < a4_worst {
            a4_worst = margin4;
            a4_sample = Some(s.descr(spec, action));
        }
    }

    let a2 = ClauseReport {
        clause: "A.2".into(),
        pass: a2_worst < 1e6,
        worst_margin: 1e6 - a2_worst,
        worst_sample: a2_sample,
        detail: "local difference-quotient probe (heuristic continuity check)".into(),
    };
    let a3 = ClauseReport {
        clause: "A.3".into(),
        pass: a3_worst >= -1e-9,
        worst_margin: a3_worst,
        worst_sample: a3_sample,
        detail: format!("drift growth |b| <= c1 envelope, c1 = {}", spec.c1),
    };
    let a4_growth = ClauseReport {
        clause: "A.4-growth".into(),
        pass: a4_worst >= -1e-9,
        worst_margin: a4_worst,
        worst_sample: a4_sample,
        detail: format!("cost growth |f|+|g| <= c2 envelope, c2 = {}", spec.c2),
    };

    // A.4 exponent relation plus a finite p'-moment for the initial law
    let bounded = spec.p == 0.0 && spec.p_prime == 0.0;
    let law_moment = if bounded {
        0.0
    } else {
        spec.initial_law.abs_moment(spec.p_prime)
    };
    let exponents_ok =
        bounded || (spec.p > 0.0 && spec.p.max(2.0) < spec.p_prime && law_moment.is_finite());
    let a4_exp = ClauseReport {
        clause: "A.4-exponents".into(),
        pass: exponents_ok,
        worst_margin: if bounded {
            0.0
        } else {
            spec.p_prime - spec.p.max(2.0)
        },
        worst_sample: None,
        detail: format!(
            "p = {}, p' = {}, initial-law p'-moment = {law_moment:.6}",
            spec.p, spec.p_prime
        ),
    };

    let a5 = check_convexity(spec, sample_budget, rng_seed)?;

    Ok(ValidationReport {
        model: spec.name.clone(),
        seed: rng_seed,
        sample_budget,
        clauses: vec![a1, a2, a3, a4_growth, a4_exp, a5],
    })
}

/// Midpoint test for convexity of `K(t,x,m) = {(b(a), z): z <= f(a)}`:
/// convex combinations of grid images must be dominated by some grid
/// action, with tolerances derived from the grid's own resolution.
fn check_convexity(spec: &ModelSpec, sample_budget: usize, rng_seed: u64) -> Result<ClauseReport> {
    let n_points = (sample_budget / 10).clamp(4, 200);
    let n_act = spec.n_actions();
    let lambdas = [0.25, 0.5, 0.75];

    let mut worst = f64::INFINITY;
    let mut worst_sample = None;
    let mut drift = vec![0.0; spec.dim];

    for i in 0..n_points as u64 {
        let s = draw_sample(spec, rng_seed ^ 0xa5a5, i);

        // image of the grid under (b, f) at this (t, x, m)
        let mut bs: Vec<Vec<f64>> = Vec::with_capacity(n_act);
        let mut fs: Vec<f64> = Vec::with_capacity(n_act);
        for a in &spec.actions {
            spec.drift_into(s.t, &s.x, &s.m, a, &mut drift);
            bs.push(drift.clone());
            fs.push(spec.run_cost(s.t, &s.x, &s.m, a));
        }

        // grid resolution in the image: covering radius of the b-values and
        // the matching f-increment between b-nearest neighbors
        let dist = |u: &[f64], v: &[f64]| -> f64 {
            u.iter()
                .zip(v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let mut tol_b = 0.0f64;
        let mut tol_f = 0.0f64;
        for j in 0..n_act {
            let mut nearest = f64::INFINITY;
            let mut nearest_df = 0.0;
            for l in 0..n_act {
                if l == j {
                    continue;
                }
                let dbl = dist(&bs[j], &bs[l]);
                if dbl < nearest {
                    nearest = dbl;
                    nearest_df = (fs[j] - fs[l]).abs();
                }
            }
            if n_act > 1 {
                tol_b = tol_b.max(nearest);
                tol_f = tol_f.max(nearest_df);
            }
        }
        let tol_b = 0.51 * tol_b + 1e-12;
        let tol_f = tol_f + 1e-9;

        let pairs = 6.min(n_act * n_act);
        for pi in 0..pairs as u64 {
            let j = (rng::uniform(rng_seed, stream::VALIDATION, i * 97 + pi, 2, 0)
                * n_act as f64) as usize % n_act;
            let l = (rng::uniform(rng_seed, stream::VALIDATION, i * 97 + pi, 3, 0)
                * n_act as f64) as usize % n_act;
            for &lam in &lambdas {
                let target_b: Vec<f64> = bs[j]
                    .iter()
                    .zip(&bs[l])
                    .map(|(a, b)| lam * a + (1.0 - lam) * b)
                    .collect();
                let target_f = lam * fs[j] + (1.0 - lam) * fs[l];
                // dominated by some grid action?
                let mut best = f64::NEG_INFINITY;
                for idx in 0..n_act {
                    if dist(&bs[idx], &target_b) <= tol_b {
                        best = best.max(fs[idx] - (target_f - tol_f));
                    }
                }
                if best < worst {
                    worst = best;
                    worst_sample = Some(s.descr(spec, spec.action(j)));
                }
            }
        }
    }

    Ok(ClauseReport {
        clause: "A.5".into(),
        pass: worst >= 0.0,
        worst_margin: worst,
        worst_sample,
        detail: "midpoint domination test on the (b, f) hypograph".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, BuiltinModel};
    use nalgebra::DMatrix;
    use std::collections::BTreeMap;

    #[test]
    fn lq_monotone_passes_all_clauses() {
        let spec = builtin_model(BuiltinModel::LqMonotone, &BTreeMap::new()).unwrap();
        let report = validate_assumptions(&spec, 2000, 11).unwrap();
        for clause in &report.clauses {
            assert!(clause.pass, "clause {} failed: {:?}", clause.clause, clause);
        }
    }

    #[test]
    fn bounded_model_passes_growth_clauses() {
        // |b|, |f|, |g| <= 1 with c1 = c2 = 1 and p = p' = 0
        let mut spec = builtin_model(BuiltinModel::BoundedTanh, &BTreeMap::new()).unwrap();
        spec.drift = std::sync::Arc::new(|_t, x, _m, _a, out| out[0] = (x[0]).tanh() * 0.5);
        spec.running_cost = std::sync::Arc::new(|_t, x, _m, _a| 0.5 * x[0].sin());
        spec.terminal_cost = std::sync::Arc::new(|x, _m| 0.4 * x[0].cos());
        spec.separable = None;
        spec.c1 = 1.0;
        spec.c2 = 1.0;
        let report = validate_assumptions(&spec, 500, 3).unwrap();
        let by_name = |n: &str| report.clauses.iter().find(|c| c.clause == n).unwrap();
        assert!(by_name("A.3").pass);
        assert!(by_name("A.4-growth").pass);
    }

    #[test]
    fn convex_action_cost_fails_midpoint_test() {
        // f = +a^2 has a non-convex hypograph in (b, z)-space
        let mut spec = builtin_model(BuiltinModel::LqMonotone, &BTreeMap::new()).unwrap();
        spec.running_cost = std::sync::Arc::new(|_t, _x, _m, a| a[0] * a[0]);
        spec.separable = None;
        let report = validate_assumptions(&spec, 2000, 5).unwrap();
        let a5 = report.clauses.iter().find(|c| c.clause == "A.5").unwrap();
        assert!(!a5.pass, "convex f must break the midpoint test");
    }

    #[test]
    fn drift_bound_violation_is_reported_with_sample() {
        let mut spec = builtin_model(BuiltinModel::LqMonotone, &BTreeMap::new()).unwrap();
        spec.drift = std::sync::Arc::new(|_t, x, _m, _a, out| out[0] = 10.0 * x[0] * x[0]);
        let report = validate_assumptions(&spec, 2000, 7).unwrap();
        let a3 = report.clauses.iter().find(|c| c.clause == "A.3").unwrap();
        assert!(!a3.pass);
        assert!(a3.worst_sample.is_some());
    }

    #[test]
    fn nonfinite_coefficient_is_an_evaluation_error() {
        let mut spec = builtin_model(BuiltinModel::LqMonotone, &BTreeMap::new()).unwrap();
        spec.running_cost = std::sync::Arc::new(|_t, x, _m, _a| 1.0 / (x[0] - x[0]));
        let err = validate_assumptions(&spec, 50, 1).unwrap_err();
        match err {
            LabError::Evaluation { clause, .. } => assert_eq!(clause, "A.4"),
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_emits_one_record_per_clause() {
        let spec = builtin_model(BuiltinModel::LqMonotone, &BTreeMap::new()).unwrap();
        let report = validate_assumptions(&spec, 100, 2).unwrap();
        let mut buf = Vec::new();
        report.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), report.clauses.len());
    }

    #[test]
    fn sigma_det_test_in_structure_validation() {
        let mut spec = builtin_model(BuiltinModel::LqMonotone, &BTreeMap::new()).unwrap();
        spec.sigma = DMatrix::from_element(1, 1, 1e-14);
        assert!(spec.validate_structure().is_err());
    }
}
