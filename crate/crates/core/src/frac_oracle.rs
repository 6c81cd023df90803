//! Pointwise evaluation of `(-Δ)^a u(x)` from the singular-integral definition.
//!
//! The integral is written in polar coordinates around `x`. Inside a ball of
//! radius `ρ` the symmetric second difference removes the singularity; the
//! subtracted `u(x)` part of the far field integrates in closed form; the rest
//! is a one-dimensional integral along each ray, split where the ray leaves
//! the support so the boundary power law is absorbed by a Jacobi weight.

use std::f64::consts::PI;

use crate::error::{FracError, Result};
use crate::forward::Bump;
use crate::geometry::{dist, norm, FractionalOrder, Point};
use crate::kernels::KernelConstants;
use crate::quadrature::{gauss_jacobi, gauss_legendre, JacobiRule, Rule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothness {
    GloballySmooth,
    /// Smooth inside the support circle, zero outside; behaves like
    /// `dist^exponent` at the circle.
    ZeroExterior { exponent: f64 },
}

/// A function of the plane with known smoothness structure. For `n = 1` the
/// line is the first coordinate axis.
pub struct ProfileFunction<'a> {
    evaluator: Box<dyn Fn(Point) -> f64 + Sync + 'a>,
    pub smoothness: Smoothness,
    pub support_radius: f64,
}

impl<'a> ProfileFunction<'a> {
    pub fn global<F: Fn(Point) -> f64 + Sync + 'a>(f: F) -> Self {
        Self {
            evaluator: Box::new(f),
            smoothness: Smoothness::GloballySmooth,
            support_radius: f64::INFINITY,
        }
    }

    /// Supported in the disk `|y| ≤ radius`; the evaluator is only called
    /// inside and the profile is 0 outside.
    pub fn zero_exterior<F: Fn(Point) -> f64 + Sync + 'a>(f: F, radius: f64, exponent: f64) -> Self {
        Self {
            evaluator: Box::new(f),
            smoothness: Smoothness::ZeroExterior { exponent },
            support_radius: radius,
        }
    }

    /// `(1 - |y|²)^(a-1)` in the unit disk, zero outside.
    pub fn large_harmonic(a: FractionalOrder) -> Self {
        let a = a.value();
        Self::zero_exterior(move |y| (1.0 - y[0] * y[0] - y[1] * y[1]).powf(a - 1.0), 1.0, a - 1.0)
    }

    pub fn eval(&self, y: Point) -> f64 {
        match self.smoothness {
            Smoothness::GloballySmooth => (self.evaluator)(y),
            Smoothness::ZeroExterior { .. } => {
                if norm(y) < self.support_radius {
                    (self.evaluator)(y)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvValue {
    pub value: f64,
    pub error_estimate: f64,
}

const TRUNCATION: f64 = 50.0;
const MIN_NEAR_RADIUS: f64 = 1e-3;

struct Rules {
    near: Rule,
    panel: Rule,
    edge: Option<JacobiRule>,
    directions: usize,
}

impl Rules {
    fn new(level: usize, a: f64, smoothness: Smoothness) -> Result<Self> {
        let nodes = 6 + 4 * level;
        // weight t^{1-2a} on [0, 1]
        let gj = gauss_jacobi(nodes, 0.0, 1.0 - 2.0 * a)?;
        let scale = 0.5f64.powf(2.0 - 2.0 * a);
        let near = Rule {
            nodes: gj.nodes.iter().map(|&x| 0.5 * (1.0 + x)).collect(),
            weights: gj.weights.iter().map(|&w| w * scale).collect(),
        };
        let edge = match smoothness {
            Smoothness::ZeroExterior { exponent } => Some(JacobiRule::new(nodes, exponent, 0.0)?),
            Smoothness::GloballySmooth => None,
        };
        Ok(Self {
            near,
            panel: gauss_legendre(nodes)?,
            edge,
            directions: 16 << level,
        })
    }
}

/// `C_{n,a} p.v.∫ (u(x) - u(y)) / |x - y|^(n+2a) dy` for `n ∈ {1, 2}`.
pub fn pv_fractional_laplacian(
    u: &ProfileFunction,
    x: Point,
    a: FractionalOrder,
    n: usize,
    quad_level: usize,
) -> Result<PvValue> {
    if n != 1 && n != 2 {
        return Err(FracError::InvalidArgument(format!("oracle supports n in {{1, 2}}, got {n}")));
    }
    let x = if n == 1 { [x[0], 0.0] } else { x };
    let rho = match u.smoothness {
        Smoothness::GloballySmooth => 0.1,
        Smoothness::ZeroExterior { .. } => {
            let gap = u.support_radius - norm(x);
            if gap <= 0.0 {
                return Err(FracError::TooCloseToSingularity { distance: gap.abs() });
            }
            (0.5 * gap).min(0.1)
        }
    };
    if rho < MIN_NEAR_RADIUS {
        return Err(FracError::TooCloseToSingularity { distance: 2.0 * rho });
    }
    let c = KernelConstants::new(a, n)?.frac_constant;
    let value = c * integral(u, x, a.value(), n, rho, quad_level)?;
    let other = if quad_level == 0 { quad_level + 1 } else { quad_level - 1 };
    let coarse = c * integral(u, x, a.value(), n, rho, other)?;
    Ok(PvValue {
        value,
        error_estimate: (value - coarse).abs(),
    })
}

fn integral(u: &ProfileFunction, x: Point, a: f64, n: usize, rho: f64, level: usize) -> Result<f64> {
    let rules = Rules::new(level, a, u.smoothness)?;
    let ux = u.eval(x);
    let directions: Vec<(Point, f64)> = if n == 1 {
        vec![([1.0, 0.0], 1.0), ([-1.0, 0.0], 1.0)]
    } else {
        let d = rules.directions;
        (0..d)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / d as f64;
                ([t.cos(), t.sin()], 2.0 * PI / d as f64)
            })
            .collect()
    };
    let mut total = 0.0;
    for (e, w) in directions {
        total += w * ray_integral(u, x, ux, e, a, rho, &rules);
    }
    Ok(total)
}

/// `∫_0^∞ (u(x) - u(x + t e)) t^(-1-2a) dt` with the near part symmetrized.
fn ray_integral(u: &ProfileFunction, x: Point, ux: f64, e: Point, a: f64, rho: f64, rules: &Rules) -> f64 {
    let at = |t: f64| u.eval([x[0] + t * e[0], x[1] + t * e[1]]);
    // [2u(x) - u(x+te) - u(x-te)] / (2 t²) against t^{1-2a}
    let near: f64 = rho.powf(2.0 - 2.0 * a)
        * rules.near.integrate(|s| {
            let t = rho * s;
            (2.0 * ux - at(t) - at(-t)) / (2.0 * t * t)
        });
    let analytic = ux * rho.powf(-2.0 * a) / (2.0 * a);
    let kernel = |t: f64| t.powf(-1.0 - 2.0 * a);

    let far = match (u.smoothness, &rules.edge) {
        (Smoothness::ZeroExterior { exponent }, Some(edge)) => {
            let r = u.support_radius;
            let xe = x[0] * e[0] + x[1] * e[1];
            let disc = xe * xe - (x[0] * x[0] + x[1] * x[1]) + r * r;
            let t_star = -xe + disc.max(0.0).sqrt();
            if t_star <= rho {
                0.0
            } else {
                let mut sum = 0.0;
                let mut lo = rho;
                // panels stay at least t*/2 away from the edge singularity
                while 4.0 * lo <= t_star {
                    sum += rules.panel.mapped(lo, 2.0 * lo).integrate(|t| at(t) * kernel(t));
                    lo *= 2.0;
                }
                sum + edge.integrate(lo, t_star, |t| {
                    let gap = t_star - t;
                    if gap > 0.0 {
                        at(t) * kernel(t) / gap.powf(exponent)
                    } else {
                        0.0
                    }
                })
            }
        }
        _ => {
            let mut sum = 0.0;
            let mut lo = rho;
            while lo < TRUNCATION {
                let hi = (2.0 * lo).min(TRUNCATION);
                sum += rules.panel.mapped(lo, hi).integrate(|t| at(t) * kernel(t));
                lo = hi;
            }
            // bounded tail beyond the truncation radius, frozen at its edge value
            sum + at(TRUNCATION) * TRUNCATION.powf(-2.0 * a) / (2.0 * a)
        }
    };
    near + analytic - far
}

/// `(-Δ)^a f(x) = -C_{2,a} ∫ f(y)/|x-y|^(2+2a) dy` for a sum of bumps whose
/// supports avoid `x`. Each bump is integrated in polar coordinates about
/// its own center.
pub fn exterior_fractional_laplacian(bumps: &[Bump], x: Point, a: FractionalOrder, quad_level: usize) -> Result<f64> {
    let c = KernelConstants::planar(a).frac_constant;
    let p = -1.0 - a.value();
    let panels = 4 + 2 * quad_level;
    let rule = gauss_legendre(8 + 4 * quad_level)?;
    let nt = 64 << quad_level;
    let mut total = 0.0;
    for b in bumps {
        if dist(x, b.center) <= b.width {
            return Err(FracError::TooCloseToSingularity {
                distance: (dist(x, b.center) - b.width).abs(),
            });
        }
        let h = b.width / panels as f64;
        let mut sum = 0.0;
        for k in 0..panels {
            let lo = h * k as f64;
            sum += rule.mapped(lo, lo + h).integrate(|r| {
                let mut ring = 0.0;
                for m in 0..nt {
                    let t = 2.0 * PI * m as f64 / nt as f64;
                    let y = [b.center[0] + r * t.cos(), b.center[1] + r * t.sin()];
                    let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
                    ring += b.eval(y) * d2.powf(p);
                }
                ring * r * 2.0 * PI / nt as f64
            });
        }
        total += sum;
    }
    Ok(-c * total)
}

/// Limit of `u((1-ε)ω) / ε^exponent` as `ε → 0`, Richardson-extrapolated over
/// `ε ∈ {1e-2, 1e-3, 1e-4}` in powers of `ε`.
pub fn boundary_ratio_limit<F: Fn(Point) -> f64>(u: F, omega: Point, exponent: f64) -> Result<f64> {
    let eps = [1e-2, 1e-3, 1e-4];
    let ratio = |e: f64| u([(1.0 - e) * omega[0], (1.0 - e) * omega[1]]) / e.powf(exponent);
    let r: Vec<f64> = eps.iter().map(|&e| ratio(e)).collect();
    // R(ε) = L + c₁ε + c₂ε² through the three samples
    let (e0, e1, e2) = (eps[0], eps[1], eps[2]);
    let l0 = e1 * e2 / ((e0 - e1) * (e0 - e2));
    let l1 = e0 * e2 / ((e1 - e0) * (e1 - e2));
    let l2 = e0 * e1 / ((e2 - e0) * (e2 - e1));
    let limit = l0 * r[0] + l1 * r[1] + l2 * r[2];
    let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !limit.is_finite() || !scale.is_finite() {
        return Err(FracError::WrongExponent { spread: f64::INFINITY });
    }
    if scale > 0.0 {
        let spread = (r[2] - r[1]).abs() / scale;
        if spread > 0.1 {
            return Err(FracError::WrongExponent { spread });
        }
    }
    Ok(limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;

    fn order(a: f64) -> FractionalOrder {
        FractionalOrder::new(a).unwrap()
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let one = ProfileFunction::global(|_| 1.0);
        for &n in &[1, 2] {
            let v = pv_fractional_laplacian(&one, [0.3, -0.2], order(0.4), n, 2).unwrap();
            assert!(v.value.abs() < 1e-10);
        }
    }

    #[test]
    fn large_harmonic_function_is_annihilated() {
        let a = order(0.5);
        let u = ProfileFunction::large_harmonic(a);
        let mut prev = f64::INFINITY;
        for level in 1..=3 {
            let v = pv_fractional_laplacian(&u, [0.3, 0.0], a, 2, level).unwrap();
            let scale = (1.0f64 - 0.09).powf(-0.5);
            // decreasing until the roundoff floor
            assert!(v.value.abs() < prev || v.value.abs() < 1e-10, "{v:?}");
            prev = v.value.abs();
            if level == 3 {
                assert!(v.value.abs() < 1e-2 * scale, "{v:?}");
            }
        }
    }

    #[test]
    fn gaussian_matches_fourier_multiplier() {
        let a = order(0.5);
        let u = ProfileFunction::global(|y| (-(y[0] * y[0] + y[1] * y[1])).exp());
        let v = pv_fractional_laplacian(&u, [0.0, 0.0], a, 2, 3).unwrap();
        // (2π)^{-2} ∫ |ξ|^{2a} π e^{-|ξ|²/4} dξ by Hankel-type radial quadrature
        let rule = gauss_legendre(64).unwrap();
        let hankel: f64 = (0..16)
            .map(|k| {
                rule.mapped(k as f64, k as f64 + 1.0)
                    .integrate(|r| r.powf(2.0 * a.value()) * PI * (-r * r / 4.0).exp() * 2.0 * PI * r)
            })
            .sum::<f64>()
            / (4.0 * PI * PI);
        assert!((hankel - 4f64.powf(0.5) * gamma(1.5)).abs() < 1e-10);
        assert!((v.value - hankel).abs() < 1e-4, "{} vs {}", v.value, hankel);
    }

    #[test]
    fn one_dimensional_profile() {
        // 1D torsion: (-Δ)^{1/2} (1-x²)_+^{1/2} = 1 on (-1, 1)
        let a = order(0.5);
        let u = ProfileFunction::zero_exterior(|y| (1.0 - y[0] * y[0]).powf(0.5), 1.0, 0.5);
        for &x in &[0.0, 0.3, -0.6] {
            let v = pv_fractional_laplacian(&u, [x, 0.0], a, 1, 4).unwrap();
            assert!((v.value - 1.0).abs() < 1e-6, "x={x} v={v:?}");
        }
    }

    #[test]
    fn refuses_near_the_support_edge() {
        let a = order(0.5);
        let u = ProfileFunction::large_harmonic(a);
        assert!(matches!(
            pv_fractional_laplacian(&u, [0.9995, 0.0], a, 2, 1),
            Err(FracError::TooCloseToSingularity { .. })
        ));
    }

    #[test]
    fn linear_in_the_profile() {
        let a = order(0.3);
        let f = |y: Point| (1.0 - y[0] * y[0] - y[1] * y[1]).powf(0.3) * (1.0 + y[0]);
        let u1 = ProfileFunction::zero_exterior(f, 1.0, 0.3);
        let u3 = ProfileFunction::zero_exterior(move |y| 3.0 * f(y), 1.0, 0.3);
        let v1 = pv_fractional_laplacian(&u1, [0.2, 0.1], a, 2, 2).unwrap().value;
        let v3 = pv_fractional_laplacian(&u3, [0.2, 0.1], a, 2, 2).unwrap().value;
        assert!((v3 - 3.0 * v1).abs() < 1e-12 * v1.abs().max(1.0));
    }

    #[test]
    fn error_estimate_shrinks() {
        let a = order(0.5);
        let f = |y: Point| (1.0 - y[0] * y[0] - y[1] * y[1]).powf(0.5) * (1.0 + y[0] * y[1]);
        let u = ProfileFunction::zero_exterior(f, 1.0, 0.5);
        let e1 = pv_fractional_laplacian(&u, [0.1, 0.4], a, 2, 1).unwrap().error_estimate;
        let e3 = pv_fractional_laplacian(&u, [0.1, 0.4], a, 2, 3).unwrap().error_estimate;
        assert!(e3 < e1);
    }

    #[test]
    fn boundary_ratio_examples() {
        let a = 0.5;
        let large = |x: Point| (1.0 - x[0] * x[0] - x[1] * x[1]).powf(a - 1.0);
        let om = [0.6, 0.8];
        assert!((boundary_ratio_limit(large, om, a - 1.0).unwrap() - 2f64.powf(a - 1.0)).abs() < 1e-6);
        let small = |x: Point| (1.0 - x[0] * x[0] - x[1] * x[1]).powf(a);
        assert!((boundary_ratio_limit(small, om, a).unwrap() - 2f64.powf(a)).abs() < 1e-6);
        assert!(boundary_ratio_limit(small, om, a - 1.0).unwrap().abs() < 1e-6);
        assert!(matches!(
            boundary_ratio_limit(large, om, a),
            Err(FracError::WrongExponent { .. })
        ));
    }
}
