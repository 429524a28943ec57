//! Finite-support probability measures with cached moments.
//!
//! Coefficients receive these summaries instead of raw samples: they expose
//! the mean, the absolute moments the model declares it needs, and atom
//! access for exact integrals. An empirical summary over n particles can be
//! cheaply augmented with one extra atom (the deviating player's candidate
//! state) without copying the base support.

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{LabError, Result};

#[derive(Debug, Clone)]
enum Weighting {
    Uniform,
    Explicit(Arc<Vec<f64>>),
}

#[derive(Debug, Clone)]
pub struct MeasureSummary {
    support: Arc<Array2<f64>>,
    weighting: Weighting,
    /// Augmenting atom `(x, w)`; the base mass is scaled by `1 - w`.
    extra: Option<(Vec<f64>, f64)>,
    mean: Vec<f64>,
    moments: Vec<(f64, f64)>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl MeasureSummary {
    /// Uniform weights over the rows of `support`.
    pub fn from_points(support: Arc<Array2<f64>>, moment_orders: &[f64]) -> Result<Self> {
        if support.nrows() == 0 {
            return Err(LabError::Domain("measure needs a nonempty support".into()));
        }
        let mut m = Self {
            support,
            weighting: Weighting::Uniform,
            extra: None,
            mean: Vec::new(),
            moments: Vec::new(),
        };
        m.recompute_cache(moment_orders);
        Ok(m)
    }

    pub fn from_weighted(
        support: Arc<Array2<f64>>,
        weights: Vec<f64>,
        moment_orders: &[f64],
    ) -> Result<Self> {
        if support.nrows() == 0 {
            return Err(LabError::Domain("measure needs a nonempty support".into()));
        }
        if weights.len() != support.nrows() {
            return Err(LabError::Domain("weight/support length mismatch".into()));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(LabError::Domain("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(LabError::Domain(format!(
                "weights must sum to 1 within 1e-12, got {total}"
            )));
        }
        let mut m = Self {
            support,
            weighting: Weighting::Explicit(Arc::new(weights)),
            extra: None,
            mean: Vec::new(),
            moments: Vec::new(),
        };
        m.recompute_cache(moment_orders);
        Ok(m)
    }

    pub fn dirac(x: &[f64]) -> Self {
        let support = Arc::new(Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap());
        Self::from_points(support, &[1.0, 2.0]).unwrap()
    }

    /// Mix in one extra atom with weight `w`, scaling the base by `1 - w`.
    /// The support is shared, only the cached statistics are recomputed.
    pub fn with_atom(&self, x: &[f64], w: f64) -> Self {
        debug_assert!(self.extra.is_none(), "stacked augmentation is not supported");
        debug_assert!((0.0..=1.0).contains(&w));
        let base = 1.0 - w;
        let mean = self
            .mean
            .iter()
            .zip(x)
            .map(|(&m, &xi)| base * m + w * xi)
            .collect();
        let xnorm = norm(x);
        let moments = self
            .moments
            .iter()
            .map(|&(q, mq)| (q, base * mq + w * xnorm.powf(q)))
            .collect();
        Self {
            support: Arc::clone(&self.support),
            weighting: self.weighting.clone(),
            extra: Some((x.to_vec(), w)),
            mean,
            moments,
        }
    }

    fn recompute_cache(&mut self, moment_orders: &[f64]) {
        let d = self.support.ncols();
        let mut mean = vec![0.0; d];
        let mut orders: Vec<f64> = moment_orders.to_vec();
        orders.retain(|q| *q > 0.0);
        orders.sort_by(|a, b| a.partial_cmp(b).unwrap());
        orders.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut moments: Vec<(f64, f64)> = orders.iter().map(|&q| (q, 0.0)).collect();
        self.for_each_atom(|x, w| {
            for c in 0..d {
                mean[c] += w * x[c];
            }
            let r = norm(x);
            for (q, acc) in moments.iter_mut() {
                *acc += w * r.powf(*q);
            }
        });
        self.mean = mean;
        self.moments = moments;
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.support.ncols()
    }

    /// Number of atoms including any augmenting atom.
    pub fn len(&self) -> usize {
        self.support.nrows() + usize::from(self.extra.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Scalar mean, for one-dimensional models.
    #[inline]
    pub fn mean1(&self) -> f64 {
        self.mean[0]
    }

    /// Absolute moment `M_q = int |x|^q dm`. Cached orders are looked up,
    /// anything else is computed from the atoms.
    pub fn moment(&self, q: f64) -> f64 {
        if q == 0.0 {
            return 1.0;
        }
        for &(cq, m) in &self.moments {
            if (cq - q).abs() < 1e-12 {
                return m;
            }
        }
        let mut acc = 0.0;
        self.for_each_atom(|x, w| acc += w * norm(x).powf(q));
        acc
    }

    pub fn for_each_atom(&self, mut f: impl FnMut(&[f64], f64)) {
        let scale = self.extra.as_ref().map_or(1.0, |(_, w)| 1.0 - w);
        let n = self.support.nrows();
        match &self.weighting {
            Weighting::Uniform => {
                let w = scale / n as f64;
                for i in 0..n {
                    f(self.support.row(i).to_slice().unwrap(), w);
                }
            }
            Weighting::Explicit(ws) => {
                for i in 0..n {
                    f(self.support.row(i).to_slice().unwrap(), scale * ws[i]);
                }
            }
        }
        if let Some((x, w)) = &self.extra {
            f(x, *w);
        }
    }

    /// Atoms as `(position, weight)` pairs, one-dimensional supports only.
    pub fn atoms_1d(&self) -> Result<Vec<(f64, f64)>> {
        if self.dim() != 1 {
            return Err(LabError::Domain(format!(
                "expected 1-d support, got dimension {}",
                self.dim()
            )));
        }
        let mut out = Vec::with_capacity(self.len());
        self.for_each_atom(|x, w| out.push((x[0], w)));
        Ok(out)
    }

    pub fn total_weight(&self) -> f64 {
        let mut acc = 0.0;
        self.for_each_atom(|_, w| acc += w);
        acc
    }

    /// Weighted variance around the mean (sum over components).
    pub fn variance(&self) -> f64 {
        let mean = self.mean.clone();
        let mut acc = 0.0;
        self.for_each_atom(|x, w| {
            acc += w * x.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        });
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dirac_moments() {
        let m = MeasureSummary::dirac(&[0.0]);
        assert_eq!(m.moment(2.0), 0.0);
        assert_eq!(m.total_weight(), 1.0);
    }

    #[test]
    fn uniform_two_atom_moments() {
        let support = Arc::new(array![[-1.0], [1.0]]);
        let m = MeasureSummary::from_points(support, &[1.0, 2.0]).unwrap();
        assert!((m.moment(2.0) - 1.0).abs() < 1e-15);
        assert!((m.moment(1.0) - 1.0).abs() < 1e-15);
        assert!(m.mean1().abs() < 1e-15);

        let support = Arc::new(array![[0.0], [2.0]]);
        let m = MeasureSummary::from_points(support, &[1.0]).unwrap();
        assert!((m.moment(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_weights() {
        let support = Arc::new(array![[0.0], [1.0]]);
        assert!(MeasureSummary::from_weighted(support.clone(), vec![0.6, 0.6], &[]).is_err());
        assert!(MeasureSummary::from_weighted(support, vec![1.2, -0.2], &[]).is_err());
    }

    #[test]
    fn augmentation_updates_mean_and_moments() {
        let support = Arc::new(array![[0.0], [2.0]]);
        let base = MeasureSummary::from_points(support, &[1.0, 2.0]).unwrap();
        let aug = base.with_atom(&[4.0], 0.25);
        // 0.375 at 0, 0.375 at 2, 0.25 at 4
        assert!((aug.mean1() - (0.375 * 2.0 + 0.25 * 4.0)).abs() < 1e-14);
        assert!((aug.moment(2.0) - (0.375 * 4.0 + 0.25 * 16.0)).abs() < 1e-14);
        assert!((aug.total_weight() - 1.0).abs() < 1e-14);
        assert_eq!(aug.len(), 3);
    }
}
