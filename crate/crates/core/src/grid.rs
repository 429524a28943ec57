//! Uniform rectangular state-space grids with multilinear interpolation.

use crate::error::{LabError, Result};
use crate::model::ModelSpec;

/// Per-dimension uniform grid over a box. Values indexed by flattened bin
/// index (last dimension fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bins: Vec<usize>,
}

impl StateGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, bins: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != bins.len() || lo.is_empty() {
            return Err(LabError::Config("state grid dimension mismatch".into()));
        }
        for c in 0..lo.len() {
            if !lo[c].is_finite() || !hi[c].is_finite() || !(lo[c] < hi[c]) {
                return Err(LabError::Config(format!(
                    "state grid bounds must be finite with lo < hi, got [{}, {}]",
                    lo[c], hi[c]
                )));
            }
            if bins[c] < 2 {
                return Err(LabError::Config("state grid needs at least 2 bins".into()));
            }
        }
        Ok(Self { lo, hi, bins })
    }

    /// Grid sized from the model: centered at the initial mean, half-width
    /// covering the initial spread, the drift envelope and five diffusion
    /// standard deviations over the horizon.
    pub fn covering(spec: &ModelSpec, bins_per_dim: usize) -> Result<Self> {
        let d = spec.dim;
        let mean = spec.initial_law.mean();
        let std = spec.initial_law.std();
        let diffusion = spec.sigma_frobenius() + spec.gamma_frobenius();
        let drift_reach = spec.max_action_norm() * spec.horizon
            + spec.c1 * spec.horizon * 2.0;
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for c in 0..d {
            let half = 4.0 * std[c] + drift_reach + 5.0 * diffusion * spec.horizon.sqrt();
            lo[c] = mean[c] - half;
            hi[c] = mean[c] + half;
        }
        Self::new(lo, hi, vec![bins_per_dim; d])
    }

    /// Coverage requirement relative to a model: the half-width must reach
    /// the initial mean plus five diffusion standard deviations over the
    /// horizon. Violation is a configuration error.
    pub fn check_coverage(&self, spec: &ModelSpec) -> Result<()> {
        let mean = spec.initial_law.mean();
        let need = 5.0 * (spec.sigma_frobenius() + spec.gamma_frobenius()) * spec.horizon.sqrt();
        for c in 0..self.dim() {
            let reach_lo = mean[c] - self.lo[c];
            let reach_hi = self.hi[c] - mean[c];
            if reach_lo < need || reach_hi < need {
                return Err(LabError::Config(format!(
                    "state grid too small for diffusion spread: dim {c} needs half-width {need:.3} around the initial mean"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    #[inline]
    pub fn total_bins(&self) -> usize {
        self.bins.iter().product()
    }

    #[inline]
    pub fn width(&self, c: usize) -> f64 {
        (self.hi[c] - self.lo[c]) / self.bins[c] as f64
    }

    /// Largest bin width across dimensions; the "bin width" tolerance unit.
    pub fn max_width(&self) -> f64 {
        (0..self.dim()).map(|c| self.width(c)).fold(0.0, f64::max)
    }

    #[inline]
    pub fn center_coord(&self, c: usize, i: usize) -> f64 {
        self.lo[c] + (i as f64 + 0.5) * self.width(c)
    }

    pub fn centers_axis(&self, c: usize) -> Vec<f64> {
        (0..self.bins[c]).map(|i| self.center_coord(c, i)).collect()
    }

    pub fn unflatten(&self, flat: usize, out: &mut [usize]) {
        let mut rem = flat;
        for c in (0..self.dim()).rev() {
            out[c] = rem % self.bins[c];
            rem /= self.bins[c];
        }
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for c in 0..self.dim() {
            flat = flat * self.bins[c] + idx[c];
        }
        flat
    }

    pub fn center(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for c in (0..self.dim()).rev() {
            let i = rem % self.bins[c];
            rem /= self.bins[c];
            out[c] = self.center_coord(c, i);
        }
    }

    /// Nearest bin by center, coordinates clamped into the box.
    pub fn nearest_bin(&self, x: &[f64]) -> usize {
        let mut flat = 0;
        for c in 0..self.dim() {
            let w = self.width(c);
            let pos = (x[c] - self.lo[c]) / w - 0.5;
            let i = pos.round().clamp(0.0, (self.bins[c] - 1) as f64) as usize;
            flat = flat * self.bins[c] + i;
        }
        flat
    }

    /// Multilinear interpolation of bin-center values, clamped to edge
    /// values outside the center lattice. Returns the value and whether any
    /// coordinate was clamped (i.e. `x` escaped the box).
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> (f64, bool) {
        debug_assert_eq!(values.len(), self.total_bins());
        let d = self.dim();
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        debug_assert!(d <= 8, "grids beyond 8 dimensions are not supported");
        let mut clamped = false;
        for c in 0..d {
            if x[c] < self.lo[c] || x[c] > self.hi[c] {
                clamped = true;
            }
            let pos = (x[c] - self.lo[c]) / self.width(c) - 0.5;
            let max_i = (self.bins[c] - 1) as f64;
            let p = pos.clamp(0.0, max_i);
            let i0 = p.floor().min(max_i - 1.0).max(0.0) as usize;
            base[c] = i0;
            frac[c] = (p - i0 as f64).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        let corners = 1usize << d;
        let mut idx = [0usize; 8];
        for corner in 0..corners {
            let mut w = 1.0;
            for c in 0..d {
                if corner >> c & 1 == 1 {
                    idx[c] = base[c] + 1;
                    w *= frac[c];
                } else {
                    idx[c] = base[c];
                    w *= 1.0 - frac[c];
                }
            }
            if w != 0.0 {
                acc += w * values[self.flatten(&idx[..d])];
            }
        }
        (acc, clamped)
    }

    /// Deposit `mass` at point `x` onto the bin-center lattice by the same
    /// multilinear weights, clamping outside mass to the edge bins.
    /// Returns the portion that needed clamping.
    pub fn deposit(&self, hist: &mut [f64], x: &[f64], mass: f64) -> f64 {
        let d = self.dim();
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        let mut clamped = false;
        for c in 0..d {
            if x[c] < self.lo[c] || x[c] > self.hi[c] {
                clamped = true;
            }
            let pos = (x[c] - self.lo[c]) / self.width(c) - 0.5;
            let max_i = (self.bins[c] - 1) as f64;
            let p = pos.clamp(0.0, max_i);
            let i0 = p.floor().min(max_i - 1.0).max(0.0) as usize;
            base[c] = i0;
            frac[c] = (p - i0 as f64).clamp(0.0, 1.0);
        }
        let corners = 1usize << d;
        let mut idx = [0usize; 8];
        for corner in 0..corners {
            let mut w = 1.0;
            for c in 0..d {
                if corner >> c & 1 == 1 {
                    idx[c] = base[c] + 1;
                    w *= frac[c];
                } else {
                    idx[c] = base[c];
                    w *= 1.0 - frac[c];
                }
            }
            if w != 0.0 {
                hist[self.flatten(&idx[..d])] += w * mass;
            }
        }
        if clamped {
            mass
        } else {
            0.0
        }
    }
}
