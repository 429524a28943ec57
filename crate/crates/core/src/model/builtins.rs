//! Built-in game instances.
//!
//! - `lq_monotone`: d = 1, `b = a`, `f = -a^2/2 - c x mean(m)`,
//!   `g = -c_g x mean(m)`. Separable, drift measure-free, monotone
//!   measure coupling: the unique-equilibrium workhorse.
//! - `lq_crowd`: `f = -a^2/2 - c (x - mean(m))^2`, a crowd-seeking cost
//!   that violates monotonicity; used for non-uniqueness exploration.
//! - `bounded_tanh`: bounded-coefficient variant (`p = p' = 0`) with a
//!   tanh-saturated mean-reverting drift.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{LabError, Result};

use super::{InitialLaw, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinModel {
    LqMonotone,
    LqCrowd,
    BoundedTanh,
}

impl FromStr for BuiltinModel {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lq_monotone" => Ok(Self::LqMonotone),
            "lq_crowd" => Ok(Self::LqCrowd),
            "bounded_tanh" => Ok(Self::BoundedTanh),
            other => Err(LabError::Config(format!("unknown builtin model `{other}`"))),
        }
    }
}

impl BuiltinModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::LqMonotone => "lq_monotone",
            Self::LqCrowd => "lq_crowd",
            Self::BoundedTanh => "bounded_tanh",
        }
    }

    /// Whether the instance is expected to satisfy the monotonicity check.
    pub fn expect_monotone(&self) -> bool {
        matches!(self, Self::LqMonotone)
    }
}

struct Params {
    map: BTreeMap<String, f64>,
    used: std::cell::RefCell<Vec<String>>,
}

impl Params {
    fn new(map: &BTreeMap<String, f64>) -> Self {
        Self {
            map: map.clone(),
            used: std::cell::RefCell::new(Vec::new()),
        }
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        self.used.borrow_mut().push(key.to_string());
        self.map.get(key).copied().unwrap_or(default)
    }

    fn finish(self) -> Result<()> {
        let used = self.used.borrow();
        for key in self.map.keys() {
            if !used.iter().any(|u| u == key) {
                return Err(LabError::Config(format!(
                    "unknown model parameter `{key}`"
                )));
            }
        }
        Ok(())
    }
}

fn action_grid(a_max: f64, count: usize) -> Result<Vec<Vec<f64>>> {
    if count < 2 || !(a_max > 0.0) {
        return Err(LabError::Config(
            "action grid needs a_max > 0 and at least 2 points".into(),
        ));
    }
    Ok((0..count)
        .map(|i| vec![-a_max + 2.0 * a_max * i as f64 / (count - 1) as f64])
        .collect())
}

/// Build a fully populated instance of a named model. Unknown parameter
/// keys are configuration errors.
pub fn builtin_model(name: BuiltinModel, params: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    let p = Params::new(params);
    let a_max = p.get("a_max", 1.0);
    let n_actions = p.get("actions", 11.0) as usize;
    let sigma = p.get("sigma", 0.7);
    let gamma = p.get("gamma", 0.3);
    let x0_mean = p.get("x0_mean", 0.0);
    let x0_std = p.get("x0_std", 0.5);
    let horizon = p.get("horizon", 1.0);

    let actions = action_grid(a_max, n_actions)?;
    let initial_law = InitialLaw::Normal {
        mean: vec![x0_mean],
        std: vec![x0_std],
    };

    let mut spec = match name {
        BuiltinModel::LqMonotone => {
            let c = p.get("c", 0.5);
            let c_g = p.get("c_g", 0.5);
            p.finish()?;
            ModelSpec {
                name: name.name().to_string(),
                dim: 1,
                horizon,
                drift: Arc::new(|_t, _x, _m, a, out| out[0] = a[0]),
                sigma: DMatrix::from_element(1, 1, sigma),
                gamma: DMatrix::from_element(1, 1, gamma),
                sigma_inv: DMatrix::identity(1, 1),
                running_cost: Arc::new(move |_t, x, m, a| {
                    -0.5 * a[0] * a[0] - c * x[0] * m.mean1()
                }),
                terminal_cost: Arc::new(move |x, m| -c_g * x[0] * m.mean1()),
                separable: Some((
                    Arc::new(move |_t, x, m| -c * x[0] * m.mean1()),
                    Arc::new(|_t, _x, a| -0.5 * a[0] * a[0]),
                )),
                actions,
                action_lo: vec![-a_max],
                action_hi: vec![a_max],
                initial_law,
                p: 2.0,
                p_prime: 4.0,
                c1: a_max,
                c2: (0.5 * a_max * a_max).max(0.5 * (c + c_g)),
            }
        }
        BuiltinModel::LqCrowd => {
            let c = p.get("c", 1.0);
            p.finish()?;
            ModelSpec {
                name: name.name().to_string(),
                dim: 1,
                horizon,
                drift: Arc::new(|_t, _x, _m, a, out| out[0] = a[0]),
                sigma: DMatrix::from_element(1, 1, sigma),
                gamma: DMatrix::from_element(1, 1, gamma),
                sigma_inv: DMatrix::identity(1, 1),
                running_cost: Arc::new(move |_t, x, m, a| {
                    let dx = x[0] - m.mean1();
                    -0.5 * a[0] * a[0] - c * dx * dx
                }),
                terminal_cost: Arc::new(|_x, _m| 0.0),
                separable: Some((
                    Arc::new(move |_t, x, m| {
                        let dx = x[0] - m.mean1();
                        -c * dx * dx
                    }),
                    Arc::new(|_t, _x, a| -0.5 * a[0] * a[0]),
                )),
                actions,
                action_lo: vec![-a_max],
                action_hi: vec![a_max],
                initial_law,
                p: 2.0,
                p_prime: 4.0,
                c1: a_max,
                c2: (0.5 * a_max * a_max).max(2.0 * c),
            }
        }
        BuiltinModel::BoundedTanh => {
            let c = p.get("c", 0.5);
            let c_g = p.get("c_g", 0.5);
            let kappa = p.get("kappa", 0.5);
            p.finish()?;
            ModelSpec {
                name: name.name().to_string(),
                dim: 1,
                horizon,
                drift: Arc::new(move |_t, x, _m, a, out| {
                    out[0] = a[0] + kappa * (-x[0]).tanh();
                }),
                sigma: DMatrix::from_element(1, 1, sigma),
                gamma: DMatrix::from_element(1, 1, gamma),
                sigma_inv: DMatrix::identity(1, 1),
                running_cost: Arc::new(move |_t, x, m, a| {
                    -0.5 * a[0] * a[0] - c * x[0].tanh() * m.mean1().tanh()
                }),
                terminal_cost: Arc::new(move |x, m| -c_g * x[0].tanh() * m.mean1().tanh()),
                separable: Some((
                    Arc::new(move |_t, x, m| -c * x[0].tanh() * m.mean1().tanh()),
                    Arc::new(|_t, _x, a| -0.5 * a[0] * a[0]),
                )),
                actions,
                action_lo: vec![-a_max],
                action_hi: vec![a_max],
                initial_law,
                p: 0.0,
                p_prime: 0.0,
                c1: a_max + kappa,
                c2: 0.5 * a_max * a_max + c + c_g,
            }
        }
    };
    spec.validate_structure()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lq_monotone_action_grid_is_uniform() {
        let spec = builtin_model(BuiltinModel::LqMonotone, &BTreeMap::new()).unwrap();
        assert_eq!(spec.n_actions(), 11);
        for (i, a) in spec.actions.iter().enumerate() {
            let expect = -1.0 + 0.2 * i as f64;
            assert!(
                (a[0] - expect).abs() < 1e-12,
                "action {i} = {} expected {expect}",
                a[0]
            );
        }
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let mut params = BTreeMap::new();
        params.insert("not_a_knob".to_string(), 1.0);
        assert!(builtin_model(BuiltinModel::LqMonotone, &params).is_err());
    }

    #[test]
    fn bounded_tanh_has_zero_exponents() {
        let spec = builtin_model(BuiltinModel::BoundedTanh, &BTreeMap::new()).unwrap();
        assert_eq!(spec.p, 0.0);
        assert_eq!(spec.p_prime, 0.0);
    }
}
