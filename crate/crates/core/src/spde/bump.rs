//! Smooth compactly supported test functions with analytic derivatives.
//!
//! The radial profile is `u(y) = exp(1 - (1 - y^2)^{-1})` on (-1, 1) and
//! exactly zero outside; the plateau variant is identically one on a core
//! ball and rolls off through a smooth partition-of-unity profile. The
//! truncation family `h_m(y) = y u(y/m)` caps the weight coordinate in the
//! augmented-space test functions.

use nalgebra::DMatrix;

/// Scalar bump profile u and its first two derivatives.
pub fn u_bump(y: f64) -> f64 {
    if y.abs() >= 1.0 {
        return 0.0;
    }
    let w = 1.0 - y * y;
    if w <= 1e-12 {
        return 0.0;
    }
    (1.0 - 1.0 / w).exp()
}

pub fn u_bump_d1(y: f64) -> f64 {
    if y.abs() >= 1.0 {
        return 0.0;
    }
    let w = 1.0 - y * y;
    if w <= 1e-12 {
        return 0.0;
    }
    -2.0 * y / (w * w) * u_bump(y)
}

pub fn u_bump_d2(y: f64) -> f64 {
    if y.abs() >= 1.0 {
        return 0.0;
    }
    let w = 1.0 - y * y;
    if w <= 1e-12 {
        return 0.0;
    }
    let u = u_bump(y);
    let y2 = y * y;
    u * (4.0 * y2 / w.powi(4) - 2.0 / (w * w) - 8.0 * y2 / w.powi(3))
}

// partition-of-unity profile for the plateau rolloff
fn cutoff(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        (-1.0 / z).exp()
    }
}

fn cutoff_d1(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        cutoff(z) / (z * z)
    }
}

fn cutoff_d2(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        cutoff(z) * (1.0 / z.powi(4) - 2.0 / z.powi(3))
    }
}

/// Smooth transition q with q(s) = 1 for s <= 0 and q(s) = 0 for s >= 1.
fn transition(s: f64) -> f64 {
    if s <= 0.0 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    let a = cutoff(1.0 - s);
    let b = cutoff(s);
    a / (a + b)
}

fn transition_d1(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let a = cutoff(1.0 - s);
    let b = cutoff(s);
    let ap = -cutoff_d1(1.0 - s);
    let bp = cutoff_d1(s);
    let den = a + b;
    (ap * b - a * bp) / (den * den)
}

fn transition_d2(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let a = cutoff(1.0 - s);
    let b = cutoff(s);
    let ap = -cutoff_d1(1.0 - s);
    let bp = cutoff_d1(s);
    let app = cutoff_d2(1.0 - s);
    let bpp = cutoff_d2(s);
    let den = a + b;
    let dp = ap + bp;
    ((app * b - a * bpp) * den - 2.0 * dp * (ap * b - a * bp)) / den.powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BumpKind {
    /// `phi(x) = u(|x - x0| / r)`.
    Standard,
    /// Identically one on `|x - x0| <= core`, smooth rolloff to zero at the
    /// support radius.
    Plateau { core: f64 },
}

#[derive(Debug, Clone)]
pub struct BumpTestFunction {
    pub center: Vec<f64>,
    pub radius: f64,
    pub kind: BumpKind,
}

impl BumpTestFunction {
    pub fn standard(center: Vec<f64>, radius: f64) -> Self {
        assert!(radius > 0.0);
        Self {
            center,
            radius,
            kind: BumpKind::Standard,
        }
    }

    pub fn plateau(center: Vec<f64>, core: f64, radius: f64) -> Self {
        assert!(radius > core && core > 0.0);
        Self {
            center,
            radius,
            kind: BumpKind::Plateau { core },
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn dist2(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Radial profile value plus first and second radial derivatives in
    /// rho = |x - center| for the plateau variant.
    fn plateau_radial(&self, rho: f64) -> (f64, f64, f64) {
        let BumpKind::Plateau { core } = self.kind else {
            unreachable!()
        };
        if rho <= core {
            return (1.0, 0.0, 0.0);
        }
        if rho >= self.radius {
            return (0.0, 0.0, 0.0);
        }
        let width = self.radius - core;
        let s = (rho - core) / width;
        (
            transition(s),
            transition_d1(s) / width,
            transition_d2(s) / (width * width),
        )
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let s = self.dist2(x);
        if s >= self.radius * self.radius {
            return 0.0;
        }
        match self.kind {
            BumpKind::Standard => u_bump(s.sqrt() / self.radius),
            BumpKind::Plateau { .. } => self.plateau_radial(s.sqrt()).0,
        }
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let s = self.dist2(x);
        if s >= self.radius * self.radius {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        match self.kind {
            BumpKind::Standard => {
                // d/ds of exp(1 - 1/w), w = 1 - s/r^2
                let r2 = self.radius * self.radius;
                let w = 1.0 - s / r2;
                if w <= 1e-12 {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    return;
                }
                let v = (1.0 - 1.0 / w).exp();
                let vp = -v / (w * w * r2);
                for c in 0..d {
                    out[c] = 2.0 * vp * (x[c] - self.center[c]);
                }
            }
            BumpKind::Plateau { .. } => {
                let rho = s.sqrt();
                let (_, qp, _) = self.plateau_radial(rho);
                if rho == 0.0 || qp == 0.0 {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    return;
                }
                for c in 0..d {
                    out[c] = qp * (x[c] - self.center[c]) / rho;
                }
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.gradient_into(x, &mut out);
        out
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let s = self.dist2(x);
        let mut h = DMatrix::zeros(d, d);
        if s >= self.radius * self.radius {
            return h;
        }
        match self.kind {
            BumpKind::Standard => {
                let r2 = self.radius * self.radius;
                let w = 1.0 - s / r2;
                if w <= 1e-12 {
                    return h;
                }
                let v = (1.0 - 1.0 / w).exp();
                let vp = -v / (w * w * r2);
                let vpp = v / (r2 * r2) * (1.0 - 2.0 * w) / w.powi(4);
                for a in 0..d {
                    for b in 0..d {
                        let da = x[a] - self.center[a];
                        let db = x[b] - self.center[b];
                        h[(a, b)] = 4.0 * vpp * da * db + if a == b { 2.0 * vp } else { 0.0 };
                    }
                }
            }
            BumpKind::Plateau { .. } => {
                let rho = s.sqrt();
                let (_, qp, qpp) = self.plateau_radial(rho);
                if rho == 0.0 {
                    return h; // inside the flat core
                }
                for a in 0..d {
                    for b in 0..d {
                        let za = (x[a] - self.center[a]) / rho;
                        let zb = (x[b] - self.center[b]) / rho;
                        let radial = qpp * za * zb;
                        let tangential = qp / rho * (if a == b { 1.0 } else { 0.0 } - za * zb);
                        h[(a, b)] = radial + tangential;
                    }
                }
            }
        }
        h
    }

    /// Supremum of |grad phi| by a dense radial scan (deterministic).
    pub fn grad_sup(&self) -> f64 {
        let samples = 20_000;
        let mut best = 0.0f64;
        let mut x = self.center.clone();
        for i in 0..samples {
            let rho = self.radius * (i as f64 + 0.5) / samples as f64;
            x[0] = self.center[0] + rho;
            let g = self.gradient(&x);
            best = best.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        best
    }
}

/// Truncation family `h_m(y) = y u(y / m)`.
#[derive(Debug, Clone, Copy)]
pub struct HTruncation {
    pub m: f64,
}

impl HTruncation {
    pub fn value(&self, y: f64) -> f64 {
        y * u_bump(y / self.m)
    }

    pub fn d1(&self, y: f64) -> f64 {
        u_bump(y / self.m) + y * u_bump_d1(y / self.m) / self.m
    }

    pub fn d2(&self, y: f64) -> f64 {
        2.0 * u_bump_d1(y / self.m) / self.m + y * u_bump_d2(y / self.m) / (self.m * self.m)
    }
}

/// Test functions on the augmented space (x, y): the product family
/// `h(y) phi(x)`, the linear-in-y form `y phi(x)` and the embedded
/// y-independent form `phi(x)`.
#[derive(Debug, Clone)]
pub enum XyTestFunction {
    Product { h: HTruncation, phi: BumpTestFunction },
    LinearY { phi: BumpTestFunction },
    XOnly { phi: BumpTestFunction },
}

impl XyTestFunction {
    pub fn phi(&self) -> &BumpTestFunction {
        match self {
            XyTestFunction::Product { phi, .. } => phi,
            XyTestFunction::LinearY { phi } => phi,
            XyTestFunction::XOnly { phi } => phi,
        }
    }

    fn y_factor(&self, y: f64) -> f64 {
        match self {
            XyTestFunction::Product { h, .. } => h.value(y),
            XyTestFunction::LinearY { .. } => y,
            XyTestFunction::XOnly { .. } => 1.0,
        }
    }

    pub fn value(&self, x: &[f64], y: f64) -> f64 {
        self.y_factor(y) * self.phi().value(x)
    }

    pub fn grad_x(&self, x: &[f64], y: f64) -> Vec<f64> {
        let mut g = self.phi().gradient(x);
        let f = self.y_factor(y);
        g.iter_mut().for_each(|v| *v *= f);
        g
    }

    pub fn hess_x(&self, x: &[f64], y: f64) -> DMatrix<f64> {
        self.phi().hessian(x) * self.y_factor(y)
    }

    pub fn dy(&self, x: &[f64], y: f64) -> f64 {
        match self {
            XyTestFunction::Product { h, phi } => h.d1(y) * phi.value(x),
            XyTestFunction::LinearY { phi } => phi.value(x),
            XyTestFunction::XOnly { .. } => 0.0,
        }
    }

    pub fn dyy(&self, x: &[f64], y: f64) -> f64 {
        match self {
            XyTestFunction::Product { h, phi } => h.d2(y) * phi.value(x),
            _ => 0.0,
        }
    }

    /// Mixed derivative `d_y grad_x psi`.
    pub fn dy_grad_x(&self, x: &[f64], y: f64) -> Vec<f64> {
        match self {
            XyTestFunction::Product { h, phi } => {
                let mut g = phi.gradient(x);
                let f = h.d1(y);
                g.iter_mut().for_each(|v| *v *= f);
                g
            }
            XyTestFunction::LinearY { phi } => phi.gradient(x),
            XyTestFunction::XOnly { phi } => vec![0.0; phi.dim()],
        }
    }
}
