//! Closed-form kernels of the disk: Green function, its boundary limit, the
//! order `a - 1` Poisson kernel and the exterior-source potential.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{FracError, Result};
use crate::forward::{BoundaryDatum, SourceFunction};
use crate::geometry::{dist, norm, BoundaryGrid, DiskGeometry, ExteriorPatch, FractionalOrder, InteriorGrid, Point};
use crate::quadrature::{gauss_jacobi, gauss_legendre, Rule};

/// Constants attached to a fractional order in dimension `n`.
///
/// `green_scale` converts the closed-form ball kernel with the pinned constant
/// `c_tilde = a kappa_n` into the Green function of `(-Δ)^a` with the Fourier
/// normalization of `frac_constant`. The two differ by `2^(1-2a) / (Γ(a)Γ(a+1))`,
/// which is 1 only at `a = 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub kappa_n: f64,
    pub c_tilde: f64,
    pub frac_constant: f64,
    pub gamma_factor: f64,
    pub green_scale: f64,
}

impl KernelConstants {
    pub fn new(a: FractionalOrder, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(FracError::InvalidArgument("dimension must be positive".into()));
        }
        let a = a.value();
        let nf = n as f64;
        let half_n = 0.5 * nf;
        // n α(n) = 2 π^{n/2} / Γ(n/2)
        let kappa_n = gamma(half_n) / (2.0 * PI.powf(half_n));
        let abs_gamma_neg_a = gamma(1.0 - a) / a;
        let frac_constant = 4f64.powf(a) * gamma(half_n + a) / (PI.powf(half_n) * abs_gamma_neg_a);
        let gamma_factor = gamma(a) * gamma(a + 1.0);
        Ok(Self {
            kappa_n,
            c_tilde: a * kappa_n,
            frac_constant,
            gamma_factor,
            green_scale: 2f64.powf(1.0 - 2.0 * a) / gamma_factor,
        })
    }

    pub fn planar(a: FractionalOrder) -> Self {
        Self::new(a, 2).expect("n = 2 is valid")
    }
}

/// `R0(x, z) = (r^2 - |x-θ|^2)(r^2 - |z-θ|^2) / (r^2 |x - z|^2)`.
pub fn r0(x: Point, z: Point, geometry: &DiskGeometry) -> Result<f64> {
    let d = dist(x, z);
    if d == 0.0 {
        return Err(FracError::CoincidentPoints);
    }
    let r2 = geometry.radius * geometry.radius;
    Ok(geometry.algebraic_weight(x) * geometry.algebraic_weight(z) / (r2 * d * d))
}

const BETA_NODES: usize = 20;

/// Evaluates `∫_0^R t^(a-1) (1+t)^(-n/2) dt` for a fixed `(a, n)`.
///
/// With `τ = t/(1+t)` this is the incomplete beta integral
/// `∫_0^X τ^(a-1) (1-τ)^(n/2-a-1) dτ`, `X = R/(1+R)`. For `X ≤ 1/2` the
/// left-endpoint Jacobi rule is used directly; otherwise the complement from
/// the right endpoint is subtracted from the complete beta function. Both
/// remaining factors are analytic on the scaled interval, so a fixed rule
/// reaches full precision.
#[derive(Debug, Clone)]
pub struct BetaIntegrator {
    a: f64,
    half_n: f64,
    left: Rule,
    right: Option<Rule>,
    complete: f64,
}

impl BetaIntegrator {
    pub fn new(a: FractionalOrder, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(FracError::InvalidArgument("dimension must be positive".into()));
        }
        let a = a.value();
        let half_n = 0.5 * n as f64;
        let left = unit_interval_rule(a - 1.0)?;
        let b = half_n - a;
        let (right, complete) = if b > 0.0 {
            let complete = gamma(a) * gamma(b) / gamma(half_n);
            (Some(unit_interval_rule(b - 1.0)?), complete)
        } else {
            (None, f64::INFINITY)
        };
        Ok(Self {
            a,
            half_n,
            left,
            right,
            complete,
        })
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if r.is_infinite() {
            return self.complete;
        }
        let x = r / (1.0 + r);
        let p = self.half_n - self.a - 1.0;
        if x <= 0.5 {
            return x.powf(self.a) * self.left.integrate(|s| (1.0 - x * s).powf(p));
        }
        match &self.right {
            Some(rule) => {
                let y = 1.0 / (1.0 + r);
                let tail = y.powf(self.half_n - self.a)
                    * rule.integrate(|s| (1.0 - y * s).powf(self.a - 1.0));
                self.complete - tail
            }
            None => self.eval(1.0) + self.log_panels(1.0, r),
        }
    }

    /// `∫_lo^hi t^(a-1)(1+t)^(-n/2) dt` in the variable `u = ln t`.
    fn log_panels(&self, lo: f64, hi: f64) -> f64 {
        let gl = gauss_legendre(BETA_NODES).expect("fixed node count");
        let (u0, u1) = (lo.ln(), hi.ln());
        let panels = ((u1 - u0) / 0.5).ceil().max(1.0) as usize;
        let h = (u1 - u0) / panels as f64;
        (0..panels)
            .map(|k| {
                let start = u0 + h * k as f64;
                gl.mapped(start, start + h).integrate(|u| {
                    let t = u.exp();
                    t.powf(self.a) * (1.0 + t).powf(-self.half_n)
                })
            })
            .sum()
    }
}

/// Rule on `[0, 1]` for the weight `s^beta`.
fn unit_interval_rule(beta: f64) -> Result<Rule> {
    let rule = gauss_jacobi(BETA_NODES, 0.0, beta)?;
    let scale = 0.5f64.powf(beta + 1.0);
    Ok(Rule {
        nodes: rule.nodes.iter().map(|&x| 0.5 * (1.0 + x)).collect(),
        weights: rule.weights.iter().map(|&w| w * scale).collect(),
    })
}

pub fn beta_integral(r: f64, a: FractionalOrder, n: usize) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(FracError::InvalidArgument(format!("beta_integral needs R >= 0, got {r}")));
    }
    Ok(BetaIntegrator::new(a, n)?.eval(r))
}

/// Closed-form planar ball kernel with the pinned constant `c_tilde`.
#[derive(Debug, Clone)]
pub struct GreenKernel {
    pub geometry: DiskGeometry,
    pub order: FractionalOrder,
    pub constants: KernelConstants,
    beta: BetaIntegrator,
}

impl GreenKernel {
    pub fn new(geometry: DiskGeometry, order: FractionalOrder) -> Result<Self> {
        Ok(Self {
            geometry,
            order,
            constants: KernelConstants::planar(order),
            beta: BetaIntegrator::new(order, DiskGeometry::DIMENSION)?,
        })
    }

    pub fn eval(&self, x: Point, z: Point) -> Result<f64> {
        let d = dist(x, z);
        if d == 0.0 {
            return Err(FracError::CoincidentPoints);
        }
        let wx = self.geometry.algebraic_weight(x);
        let wz = self.geometry.algebraic_weight(z);
        if wx <= 0.0 || wz <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.eval_unchecked(d, wx, wz))
    }

    /// Kernel from the distance and both algebraic weights; caller guarantees
    /// `d > 0` and positive weights.
    pub fn eval_unchecked(&self, d: f64, wx: f64, wz: f64) -> f64 {
        let r2 = self.geometry.radius * self.geometry.radius;
        let big_r = wx * wz / (r2 * d * d);
        let a = self.order.value();
        self.constants.c_tilde * d.powf(2.0 * a - 2.0) * self.beta.eval(big_r)
    }
}

pub fn green_disk(x: Point, z: Point, a: FractionalOrder, geometry: &DiskGeometry) -> Result<f64> {
    GreenKernel::new(*geometry, a)?.eval(x, z)
}

/// Limit of `G(x, z) / (r^2 - |z-θ|^2)^a` as `z → omega`.
pub fn green_trace_kernel(x: Point, omega: Point, a: FractionalOrder, geometry: &DiskGeometry) -> Result<f64> {
    let r = geometry.radius;
    let xs = geometry.offset(x);
    let ws = geometry.offset(omega);
    let xh = [xs[0] / r, xs[1] / r];
    let wh = [ws[0] / r, ws[1] / r];
    let d = dist(xh, wh);
    if d == 0.0 {
        return Err(FracError::CoincidentPoints);
    }
    let w = (1.0 - xh[0] * xh[0] - xh[1] * xh[1]).max(0.0);
    let kappa = KernelConstants::planar(a).kappa_n;
    Ok(kappa * w.powf(a.value()) / (d * d) / (r * r))
}

/// Direct trapezoid quadrature of the order `a - 1` Poisson formula
/// `u(x) = (r^2-|x-θ|^2)^(a-1) · (r^2-|x-θ|^2)/(2πr) ∫ g(ω)/|x-ω|^2 dS(ω)`.
pub fn poisson_large(x: Point, g: &BoundaryDatum, a: FractionalOrder, boundary: &BoundaryGrid) -> Result<f64> {
    let geometry = &boundary.geometry;
    let w = geometry.algebraic_weight(x);
    if w <= 0.0 {
        return Err(FracError::InvalidArgument("poisson_large needs an interior point".into()));
    }
    if g.values.len() != boundary.len() {
        return Err(FracError::Incompatible("boundary datum length differs from boundary grid".into()));
    }
    let sum: f64 = (0..boundary.len())
        .map(|b| {
            let d = dist(x, boundary.nodes[b]);
            g.values[b] * boundary.arc_weights[b] / (d * d)
        })
        .sum();
    let harmonic = w / (2.0 * PI * geometry.radius) * sum;
    Ok(w.powf(a.value() - 1.0) * harmonic)
}

/// Real Fourier coefficients of data on equispaced boundary angles `2πm/M`;
/// evaluates the classical harmonic extension and its radial derivative.
#[derive(Debug, Clone)]
pub struct BoundaryFourier {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl BoundaryFourier {
    pub fn new(values: &[f64]) -> Self {
        let m = values.len();
        let half = m / 2;
        let mut cos = vec![0.0; half + 1];
        let mut sin = vec![0.0; half + 1];
        for k in 0..=half {
            let (mut c, mut s) = (0.0, 0.0);
            for (j, &v) in values.iter().enumerate() {
                let t = 2.0 * PI * (k * j % m) as f64 / m as f64;
                c += v * t.cos();
                s += v * t.sin();
            }
            let scale = if k == 0 || (m % 2 == 0 && k == half) { 1.0 } else { 2.0 } / m as f64;
            cos[k] = c * scale;
            sin[k] = if k == 0 || (m % 2 == 0 && k == half) { 0.0 } else { s * scale };
        }
        Self { cos, sin }
    }

    /// Harmonic extension `H(ρ, φ)` and `∂_ρ H` at normalized radius `ρ ≤ 1`.
    pub fn eval(&self, rho: f64, phi: f64) -> (f64, f64) {
        let mut h = self.cos[0];
        let mut dh = 0.0;
        let mut pk = 1.0;
        for k in 1..self.cos.len() {
            let kf = k as f64;
            let dpk = kf * pk;
            pk *= rho;
            let (s, c) = (kf * phi).sin_cos();
            let mode = self.cos[k] * c + self.sin[k] * s;
            h += pk * mode;
            dh += dpk * mode;
        }
        (h, dh)
    }
}

/// Spectral route to `poisson_large` on a disk: exact for band-limited data.
pub fn poisson_large_spectral(x: Point, fourier: &BoundaryFourier, a: FractionalOrder, geometry: &DiskGeometry) -> f64 {
    let o = geometry.offset(x);
    let rho = norm(o) / geometry.radius;
    let phi = o[1].atan2(o[0]);
    let w = geometry.algebraic_weight(x);
    w.powf(a.value() - 1.0) * fourier.eval(rho, phi).0
}

/// `h_src(x) = frac_constant ∫_W f(y) / |x - y|^(2+2a) dy` by patch quadrature.
pub fn exterior_source_field(f: &SourceFunction, x: Point, a: FractionalOrder, patch: &ExteriorPatch) -> f64 {
    let c = KernelConstants::planar(a).frac_constant;
    let p = -(1.0 + a.value());
    c * patch
        .nodes
        .iter()
        .zip(&patch.weights)
        .zip(&f.values)
        .filter(|(_, &v)| v != 0.0)
        .map(|((&y, &w), &v)| {
            let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
            v * w * d2.powf(p)
        })
        .sum::<f64>()
}

/// `exterior_source_field` at every interior node.
pub fn exterior_source_on_grid(f: &SourceFunction, grid: &InteriorGrid, patch: &ExteriorPatch) -> Vec<f64> {
    grid.nodes
        .par_iter()
        .map(|&x| exterior_source_field(f, x, grid.order, patch))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_disk_grids, build_exterior_patch};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn order(a: f64) -> FractionalOrder {
        FractionalOrder::new(a).unwrap()
    }

    /// Incomplete beta through the Gauss hypergeometric series.
    fn beta_series(x: f64, a: f64, b: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 0..20000 {
            let kf = k as f64;
            term *= (a + kf) * (kf + 1.0 - b) / ((a + 1.0 + kf) * (kf + 1.0)) * x;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        x.powf(a) / a * sum
    }

    #[test]
    fn planar_constants() {
        for &a in &[0.1, 0.5, 0.9] {
            let k = KernelConstants::planar(order(a));
            assert!((k.kappa_n - 1.0 / (2.0 * PI)).abs() < 1e-14);
            assert_relative_eq!(k.c_tilde / a, k.kappa_n, max_relative = 1e-15);
            assert!(k.kappa_n > 0.0 && k.c_tilde > 0.0 && k.frac_constant > 0.0 && k.gamma_factor > 0.0);
        }
        let k = KernelConstants::planar(order(0.5));
        assert_relative_eq!(k.gamma_factor, PI / 2.0, max_relative = 1e-14);
        assert_relative_eq!(k.green_scale, 1.0 / k.gamma_factor, max_relative = 1e-14);
        // C_{2,1/2} = 4^{1/2} Γ(3/2) / (π · 2√π) = 1/(2π)
        assert_relative_eq!(k.frac_constant, 1.0 / (2.0 * PI), max_relative = 1e-14);
    }

    #[test]
    fn r0_examples() {
        let g = DiskGeometry::unit();
        assert_relative_eq!(r0([0.0, 0.0], [0.5, 0.0], &g).unwrap(), 3.0, max_relative = 1e-15);
        assert!(r0([0.1, 0.2], [0.1, 0.2], &g).is_err());
        let near = r0([0.1, 0.0], [0.0, 1.0 - 1e-9], &g).unwrap();
        assert!(near < 1e-8);
    }

    #[test]
    fn beta_integral_arctan_closed_form() {
        let got = beta_integral(3.0, order(0.5), 2).unwrap();
        assert!((got - 2.0 * 3f64.sqrt().atan()).abs() < 1e-10);
        assert_eq!(beta_integral(0.0, order(0.3), 2).unwrap(), 0.0);
        for &r in &[1e-8, 0.3, 1.0, 7.0, 1e4, 1e9] {
            let got = beta_integral(r, order(0.5), 2).unwrap();
            assert!((got - 2.0 * r.sqrt().atan()).abs() < 1e-12, "R={r}");
        }
    }

    #[test]
    fn beta_integral_matches_series() {
        for &(a, n) in &[(0.2, 2), (0.7, 2), (0.3, 1), (0.6, 1), (0.45, 3)] {
            let bi = BetaIntegrator::new(order(a), n).unwrap();
            let b = 0.5 * n as f64 - a;
            for &r in &[0.01, 0.5, 1.0, 3.0, 12.0] {
                let x = r / (1.0 + r);
                let want = beta_series(x, a, b);
                assert!((bi.eval(r) - want).abs() < 1e-11 * want.max(1.0), "a={a} n={n} R={r}");
            }
        }
    }

    #[test]
    fn green_disk_examples() {
        let g = DiskGeometry::unit();
        let v = green_disk([0.0, 0.0], [0.5, 0.0], order(0.5), &g).unwrap();
        assert_relative_eq!(v, 1.0 / (4.0 * PI) * 2.0 * 2.0 * 3f64.sqrt().atan(), max_relative = 1e-12);
        assert_relative_eq!(v, 1.0 / 3.0, max_relative = 1e-12);
        assert_eq!(green_disk([0.1, 0.0], [1.2, 0.0], order(0.5), &g).unwrap(), 0.0);
        assert!(matches!(
            green_disk([0.1, 0.0], [0.1, 0.0], order(0.5), &g),
            Err(FracError::CoincidentPoints)
        ));
    }

    #[test]
    fn trace_kernel_examples() {
        let g = DiskGeometry::unit();
        let a = order(0.4);
        let v = green_trace_kernel([0.0, 0.0], [0.6, 0.8], a, &g).unwrap();
        assert_relative_eq!(v, 1.0 / (2.0 * PI), max_relative = 1e-14);
        let edge = green_trace_kernel([0.0, 1.0 - 1e-12], [1.0, 0.0], a, &g).unwrap();
        assert!(edge < 1e-4);
        assert!(green_trace_kernel([1.0, 0.0], [1.0, 0.0], a, &g).is_err());
        // numerical limit of the Green kernel
        let x = [0.2, -0.3];
        let om = [0.0, 1.0];
        let z = [0.0, 1.0 - 1e-4];
        let ratio = green_disk(x, z, a, &g).unwrap() / g.algebraic_weight(z).powf(0.4);
        let lim = green_trace_kernel(x, om, a, &g).unwrap();
        assert!((ratio - lim).abs() / lim < 1e-3);
    }

    #[test]
    fn poisson_large_examples() {
        let a = order(0.3);
        let (_, boundary) = build_disk_grids(DiskGeometry::unit(), 8, 128, a).unwrap();
        let ones = BoundaryDatum::unchecked(vec![1.0; boundary.len()]);
        assert_relative_eq!(poisson_large([0.0, 0.0], &ones, a, &boundary).unwrap(), 1.0, max_relative = 1e-13);
        for &x in &[[0.3f64, 0.1], [-0.5, 0.5], [0.0, -0.8]] {
            let want = (1.0f64 - x[0] * x[0] - x[1] * x[1]).powf(a.value() - 1.0);
            let got = poisson_large(x, &ones, a, &boundary).unwrap();
            assert!((got - want).abs() / want < 1e-8, "{x:?}");
        }
        let cosine = BoundaryDatum::unchecked(boundary.angles.iter().map(|t| t.cos()).collect());
        assert!(poisson_large([0.0, 0.0], &cosine, a, &boundary).unwrap().abs() < 1e-12);
        assert!(poisson_large([1.0, 0.0], &ones, a, &boundary).is_err());
    }

    #[test]
    fn spectral_poisson_agrees_with_quadrature() {
        let a = order(0.6);
        let geom = DiskGeometry::unit();
        let (_, boundary) = build_disk_grids(geom, 8, 128, a).unwrap();
        let vals: Vec<f64> = boundary.angles.iter().map(|t| (2.0 * t).sin() + 0.5 * (3.0 * t).cos() + 1.0).collect();
        let fourier = BoundaryFourier::new(&vals);
        let datum = BoundaryDatum::unchecked(vals);
        for &x in &[[0.1, 0.2], [-0.4, 0.3], [0.5, -0.5]] {
            let q = poisson_large(x, &datum, a, &boundary).unwrap();
            let s = poisson_large_spectral(x, &fourier, a, &geom);
            assert!((q - s).abs() < 1e-10 * q.abs().max(1.0));
        }
        // harmonic extension of sin 2φ is ρ² sin 2φ
        let (h, dh) = BoundaryFourier::new(&boundary.angles.iter().map(|t| (2.0 * t).sin()).collect::<Vec<_>>())
            .eval(0.5, 0.3);
        assert!((h - 0.25 * 0.6f64.sin()).abs() < 1e-14);
        assert!((dh - 2.0 * 0.5 * 0.6f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn exterior_source_radial_oracle() {
        let a = order(0.5);
        let geom = DiskGeometry::unit();
        let patch = build_exterior_patch(geom, 1.5, 2.0, 16, 64).unwrap();
        let f = SourceFunction::unchecked(vec![1.0; patch.len()]);
        let got = exterior_source_field(&f, [0.0, 0.0], a, &patch);
        // 2π ∫_{1.5}^{2} ρ^{-1-2a} dρ = 2π (1.5^{-2a} - 2^{-2a}) / (2a)
        let c = KernelConstants::planar(a).frac_constant;
        let want = c * 2.0 * PI * (1.5f64.powf(-1.0) - 2f64.powf(-1.0));
        assert!((got - want).abs() < 1e-6 * want);
    }

    #[test]
    fn exterior_source_bounds() {
        let a = order(0.35);
        let geom = DiskGeometry::unit();
        let patch = build_exterior_patch(geom, 1.5, 2.0, 8, 64).unwrap();
        let vals: Vec<f64> = patch.nodes.iter().map(|y| (y[0] * 3.0).sin().abs()).collect();
        let f = SourceFunction::unchecked(vals);
        let c = KernelConstants::planar(a).frac_constant;
        for k in 0..20 {
            let t = 0.7 * k as f64;
            let x = [0.9 * (k as f64 / 20.0) * t.cos(), 0.9 * (k as f64 / 20.0) * t.sin()];
            let v = exterior_source_field(&f, x, a, &patch);
            assert!(v >= 0.0);
            let bound: f64 = c * patch
                .nodes
                .iter()
                .zip(&patch.weights)
                .map(|(y, w)| w * dist(x, *y).powf(-2.0 - 2.0 * a.value()))
                .sum::<f64>();
            assert!(v <= bound * (1.0 + 1e-12));
        }
    }

    proptest! {
        #[test]
        fn beta_bracketing(r in 0.0f64..1e3, a in 0.01f64..0.99) {
            let v = beta_integral(r, order(a), 2).unwrap();
            let lo = r.powf(a) / (a * (1.0 + r));
            let hi = r.powf(a) / a;
            prop_assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12));
        }

        #[test]
        fn green_symmetric_and_nonnegative(
            r1 in 0.0f64..0.999, t1 in 0.0f64..6.3, r2 in 0.0f64..0.999, t2 in 0.0f64..6.3, a in 0.05f64..0.95
        ) {
            let g = DiskGeometry::unit();
            let x = [r1 * t1.cos(), r1 * t1.sin()];
            let z = [r2 * t2.cos(), r2 * t2.sin()];
            prop_assume!(dist(x, z) > 1e-9);
            let k = GreenKernel::new(g, order(a)).unwrap();
            let gxz = k.eval(x, z).unwrap();
            let gzx = k.eval(z, x).unwrap();
            prop_assert_eq!(gxz, gzx);
            prop_assert!(gxz >= 0.0);
        }

        #[test]
        fn trace_limit_converges(r1 in 0.0f64..0.9, t1 in 0.0f64..6.3, t2 in 0.0f64..6.3, a in 0.1f64..0.9) {
            let g = DiskGeometry::unit();
            let a = order(a);
            let x = [r1 * t1.cos(), r1 * t1.sin()];
            let om = [t2.cos(), t2.sin()];
            let lim = green_trace_kernel(x, om, a, &g).unwrap();
            let mut prev = f64::INFINITY;
            for &eps in &[1e-2, 1e-3, 1e-4] {
                let z = [(1.0 - eps) * om[0], (1.0 - eps) * om[1]];
                let err = (green_disk(x, z, a, &g).unwrap() / g.algebraic_weight(z).powf(a.value()) - lim).abs();
                prop_assert!(err <= prev * 1.0000001 + 1e-15);
                prev = err;
            }
        }
    }
}
