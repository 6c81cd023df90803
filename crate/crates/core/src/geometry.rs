//! Disk domain, measurement arc, exterior source patch and their quadrature grids.
//!
//! The interior grid is a polar tensor grid. Radially it uses the variable
//! `s = (|x - θ| / r)^2` with Gauss-Jacobi nodes for the weight `(1 - s)^(a - 1)`,
//! which clusters nodes toward the boundary and integrates functions that
//! behave like `d^(a-1)` or `d^a` near `∂Ω` without loss of order. Angularly it
//! is the trapezoid rule on ring angles offset by half a step from the
//! boundary nodes.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};
use crate::quadrature::{gauss_jacobi, gauss_legendre};

pub type Point = [f64; 2];

pub fn norm(p: Point) -> f64 {
    p[0].hypot(p[1])
}

pub fn dist(p: Point, q: Point) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// Exponent `a` of the fractional Laplacian, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FractionalOrder(f64);

impl FractionalOrder {
    pub fn new(a: f64) -> Result<Self> {
        if a > 0.0 && a < 1.0 {
            Ok(Self(a))
        } else {
            Err(FracError::InvalidOrder(a))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for FractionalOrder {
    type Error = FracError;
    fn try_from(a: f64) -> Result<Self> {
        Self::new(a)
    }
}

impl From<FractionalOrder> for f64 {
    fn from(a: FractionalOrder) -> f64 {
        a.0
    }
}

/// The ball `B(θ; r)` in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskGeometry {
    pub center: Point,
    pub radius: f64,
}

impl DiskGeometry {
    pub const DIMENSION: usize = 2;

    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(FracError::InvalidArgument(format!(
                "disk radius must be positive, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn unit() -> Self {
        Self {
            center: [0.0, 0.0],
            radius: 1.0,
        }
    }

    pub fn is_unit(&self) -> bool {
        self.radius == 1.0 && self.center == [0.0, 0.0]
    }

    pub fn offset(&self, x: Point) -> Point {
        [x[0] - self.center[0], x[1] - self.center[1]]
    }

    /// `r^2 - |x - θ|^2`, negative outside.
    pub fn algebraic_weight(&self, x: Point) -> f64 {
        let o = self.offset(x);
        self.radius * self.radius - (o[0] * o[0] + o[1] * o[1])
    }

    /// Boundary distance `r - |x - θ|`.
    pub fn boundary_distance(&self, x: Point) -> f64 {
        self.radius - norm(self.offset(x))
    }

    pub fn contains(&self, x: Point) -> bool {
        self.boundary_distance(x) > 0.0
    }

    pub fn boundary_point(&self, angle: f64) -> Point {
        [
            self.center[0] + self.radius * angle.cos(),
            self.center[1] + self.radius * angle.sin(),
        ]
    }
}

/// Angular interval `[start, end)` on the boundary circle, measured in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaArc {
    pub start: f64,
    pub end: f64,
}

impl SigmaArc {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) || end <= start {
            return Err(FracError::EmptySigma);
        }
        Ok(Self { start, end })
    }

    pub fn full() -> Self {
        Self {
            start: 0.0,
            end: 2.0 * PI,
        }
    }

    pub fn half() -> Self {
        Self { start: 0.0, end: PI }
    }

    pub fn is_full(&self) -> bool {
        self.end - self.start >= 2.0 * PI
    }

    pub fn contains(&self, angle: f64) -> bool {
        if self.is_full() {
            return true;
        }
        let rel = (angle - self.start).rem_euclid(2.0 * PI);
        rel < self.end - self.start
    }
}

impl Default for SigmaArc {
    fn default() -> Self {
        Self::half()
    }
}

/// Polar tensor grid inside the disk.
#[derive(Debug, Clone)]
pub struct InteriorGrid {
    pub geometry: DiskGeometry,
    pub order: FractionalOrder,
    pub nodes: Vec<Point>,
    /// Area quadrature weights.
    pub weights: Vec<f64>,
    /// Boundary distance `r - |x - θ|` per node.
    pub dist: Vec<f64>,
    /// `(r^2 - |x - θ|^2)^a` per node.
    pub weight_a: Vec<f64>,
    pub radial_count: usize,
    pub angular_count: usize,
    /// Ring variable `s_j = (ρ_j / r)^2`, ascending.
    pub ring_s: Vec<f64>,
    /// Normalized ring radii `ρ_j / r`.
    pub ring_radius: Vec<f64>,
    /// Gauss-Jacobi weights for `∫_0^1 (1 - s)^(a-1) g(s) ds`.
    pub ring_jacobi_weights: Vec<f64>,
    /// Ring angles `2π (m + 1/2) / M`.
    pub angles: Vec<f64>,
}

impl InteriorGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index(&self, ring: usize, angle: usize) -> usize {
        ring * self.angular_count + angle
    }

    pub fn ring_of(&self, i: usize) -> usize {
        i / self.angular_count
    }

    pub fn angle_of(&self, i: usize) -> usize {
        i % self.angular_count
    }

    /// Normalized radius `|x - θ| / r` of node `i`.
    pub fn node_radius(&self, i: usize) -> f64 {
        self.ring_radius[self.ring_of(i)]
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn sample<F: Fn(Point) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,x2,weight,dist\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.nodes[i][0], self.nodes[i][1], self.weights[i], self.dist[i]
            );
        }
        out
    }
}

/// Equispaced nodes on the boundary circle with the measurement-arc mask.
#[derive(Debug, Clone)]
pub struct BoundaryGrid {
    pub geometry: DiskGeometry,
    pub nodes: Vec<Point>,
    pub angles: Vec<f64>,
    pub arc_weights: Vec<f64>,
    pub sigma: SigmaArc,
    pub sigma_mask: Vec<bool>,
}

impl BoundaryGrid {
    pub fn new(geometry: DiskGeometry, count: usize, sigma: SigmaArc) -> Result<Self> {
        if count < 8 {
            return Err(FracError::CountTooSmall {
                what: "boundary node count",
                got: count,
                min: 8,
            });
        }
        let angles: Vec<f64> = (0..count)
            .map(|m| 2.0 * PI * m as f64 / count as f64)
            .collect();
        let nodes = angles.iter().map(|&t| geometry.boundary_point(t)).collect();
        let arc_weights = vec![2.0 * PI * geometry.radius / count as f64; count];
        let mut grid = Self {
            geometry,
            nodes,
            angles,
            arc_weights,
            sigma,
            sigma_mask: Vec::new(),
        };
        grid.set_sigma(sigma)?;
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn set_sigma(&mut self, sigma: SigmaArc) -> Result<()> {
        let mask: Vec<bool> = self.angles.iter().map(|&t| sigma.contains(t)).collect();
        if !mask.iter().any(|&b| b) {
            return Err(FracError::EmptySigma);
        }
        self.sigma = sigma;
        self.sigma_mask = mask;
        Ok(())
    }

    pub fn with_sigma(mut self, sigma: SigmaArc) -> Result<Self> {
        self.set_sigma(sigma)?;
        Ok(self)
    }

    pub fn sigma_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.sigma_mask[i]).collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.arc_weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn integrate_sigma(&self, values: &[f64]) -> f64 {
        (0..self.len())
            .filter(|&i| self.sigma_mask[i])
            .map(|i| self.arc_weights[i] * values[i])
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,x2,weight,dist\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.nodes[i][0], self.nodes[i][1], self.arc_weights[i], 0.0
            );
        }
        out
    }
}

/// Annular exterior region `W = {inner < |x - θ| < outer}` with a tensor grid.
#[derive(Debug, Clone)]
pub struct ExteriorPatch {
    pub geometry: DiskGeometry,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    /// `dist(W̄, Ω̄) = inner - r`.
    pub separation: f64,
    pub radial_count: usize,
    pub angular_count: usize,
}

impl ExteriorPatch {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn area(&self) -> f64 {
        PI * (self.outer_radius.powi(2) - self.inner_radius.powi(2))
    }

    pub fn mid_radius(&self) -> f64 {
        0.5 * (self.inner_radius + self.outer_radius)
    }

    pub fn thickness(&self) -> f64 {
        self.outer_radius - self.inner_radius
    }

    /// Radial node spacing, the coarsest local resolution of the patch.
    pub fn node_spacing(&self) -> f64 {
        let radial = self.thickness() / self.radial_count as f64;
        let angular = 2.0 * PI * self.outer_radius / self.angular_count as f64;
        radial.max(angular)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,x2,weight,dist\n");
        for i in 0..self.len() {
            let d = norm(self.geometry.offset(self.nodes[i])) - self.geometry.radius;
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.nodes[i][0], self.nodes[i][1], self.weights[i], d
            );
        }
        out
    }
}

/// Builds the interior polar grid and the boundary grid (default arc `[0, π)`).
///
/// The boundary grid has `angular_count` equispaced nodes at angles `2πm/M`;
/// interior rings sit at the half-step angles.
pub fn build_disk_grids(
    geometry: DiskGeometry,
    radial_count: usize,
    angular_count: usize,
    order: FractionalOrder,
) -> Result<(InteriorGrid, BoundaryGrid)> {
    if radial_count < 4 {
        return Err(FracError::CountTooSmall {
            what: "radial_count",
            got: radial_count,
            min: 4,
        });
    }
    if angular_count < 8 {
        return Err(FracError::CountTooSmall {
            what: "angular_count",
            got: angular_count,
            min: 8,
        });
    }
    if angular_count % 2 != 0 {
        return Err(FracError::InvalidArgument(format!(
            "angular_count must be even, got {angular_count}"
        )));
    }
    let a = order.value();
    // s = (1 + x) / 2 maps [-1, 1] to [0, 1]; (1 - s) = (1 - x) / 2.
    let rule = gauss_jacobi(radial_count, a - 1.0, 0.0)?;
    let jac_scale = 0.5f64.powf(a);
    let ring_s: Vec<f64> = rule.nodes.iter().map(|&x| 0.5 * (1.0 + x)).collect();
    let ring_jacobi_weights: Vec<f64> = rule.weights.iter().map(|&w| w * jac_scale).collect();
    let ring_radius: Vec<f64> = ring_s.iter().map(|s| s.sqrt()).collect();
    let angles: Vec<f64> = (0..angular_count)
        .map(|m| 2.0 * PI * (m as f64 + 0.5) / angular_count as f64)
        .collect();

    let r = geometry.radius;
    let n = radial_count * angular_count;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut dist = Vec::with_capacity(n);
    let mut weight_a = Vec::with_capacity(n);
    for j in 0..radial_count {
        let rho = ring_radius[j] * r;
        // r^2 ∫∫ F (1/2) ds dφ with the Jacobi factor divided back out
        let w = r * r * (PI / angular_count as f64)
            * ring_jacobi_weights[j]
            * (1.0 - ring_s[j]).powf(1.0 - a);
        for &phi in &angles {
            nodes.push([
                geometry.center[0] + rho * phi.cos(),
                geometry.center[1] + rho * phi.sin(),
            ]);
            weights.push(w);
            dist.push(r - rho);
            weight_a.push((r * r * (1.0 - ring_s[j])).powf(a));
        }
    }
    let interior = InteriorGrid {
        geometry,
        order,
        nodes,
        weights,
        dist,
        weight_a,
        radial_count,
        angular_count,
        ring_s,
        ring_radius,
        ring_jacobi_weights,
        angles,
    };
    let boundary = BoundaryGrid::new(geometry, angular_count, SigmaArc::default())?;
    Ok((interior, boundary))
}

/// Annular exterior patch with Gauss-Legendre radial nodes and trapezoid angles.
pub fn build_exterior_patch(
    geometry: DiskGeometry,
    inner_radius: f64,
    outer_radius: f64,
    radial_count: usize,
    angular_count: usize,
) -> Result<ExteriorPatch> {
    if !(inner_radius > geometry.radius) {
        return Err(FracError::NoSeparation {
            inner: inner_radius,
            radius: geometry.radius,
        });
    }
    if !(outer_radius > inner_radius) {
        return Err(FracError::InvalidArgument(format!(
            "outer radius {outer_radius} must exceed inner radius {inner_radius}"
        )));
    }
    if radial_count < 2 {
        return Err(FracError::CountTooSmall {
            what: "patch radial count",
            got: radial_count,
            min: 2,
        });
    }
    if angular_count < 8 {
        return Err(FracError::CountTooSmall {
            what: "patch angular count",
            got: angular_count,
            min: 8,
        });
    }
    let rule = gauss_legendre(radial_count)?.mapped(inner_radius, outer_radius);
    let dphi = 2.0 * PI / angular_count as f64;
    let mut nodes = Vec::with_capacity(radial_count * angular_count);
    let mut weights = Vec::with_capacity(radial_count * angular_count);
    for (&rho, &w) in rule.nodes.iter().zip(&rule.weights) {
        for m in 0..angular_count {
            let phi = dphi * m as f64;
            nodes.push([
                geometry.center[0] + rho * phi.cos(),
                geometry.center[1] + rho * phi.sin(),
            ]);
            weights.push(w * rho * dphi);
        }
    }
    Ok(ExteriorPatch {
        geometry,
        inner_radius,
        outer_radius,
        nodes,
        weights,
        separation: inner_radius - geometry.radius,
        radial_count,
        angular_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn half() -> FractionalOrder {
        FractionalOrder::new(0.5).unwrap()
    }

    #[test]
    fn order_bounds() {
        assert!(FractionalOrder::new(0.0).is_err());
        assert!(FractionalOrder::new(1.0).is_err());
        assert!(FractionalOrder::new(-0.2).is_err());
        assert!(FractionalOrder::new(f64::NAN).is_err());
        assert!(FractionalOrder::new(0.999).is_ok());
    }

    #[test]
    fn unit_disk_area_and_odd_symmetry() {
        let (grid, boundary) = build_disk_grids(DiskGeometry::unit(), 16, 32, half()).unwrap();
        let area: f64 = grid.weights.iter().sum();
        assert!((area - PI).abs() / PI < 5e-3);
        let odd = grid.integrate(&grid.sample(|x| x[0]));
        assert!(odd.abs() < 1e-12);
        assert_relative_eq!(boundary.arc_weights.iter().sum::<f64>(), 2.0 * PI, max_relative = 1e-12);
    }

    #[test]
    fn inverse_square_root_weight_is_integrated() {
        let (grid, _) = build_disk_grids(DiskGeometry::unit(), 32, 64, half()).unwrap();
        let vals = grid.sample(|x| (1.0 - x[0] * x[0] - x[1] * x[1]).powf(-0.5));
        let got = grid.integrate(&vals);
        assert!((got - 2.0 * PI).abs() / (2.0 * PI) < 1e-2);
    }

    #[test]
    fn node_invariants_hold() {
        let geom = DiskGeometry::new([0.2, -0.1], 1.7).unwrap();
        let (grid, _) = build_disk_grids(geom, 8, 16, FractionalOrder::new(0.3).unwrap()).unwrap();
        for i in 0..grid.len() {
            assert!(grid.weights[i] > 0.0);
            assert!(grid.dist[i] > 0.0);
            assert!(norm(geom.offset(grid.nodes[i])) < geom.radius);
        }
        let area: f64 = grid.weights.iter().sum();
        assert!((area - PI * 1.7 * 1.7).abs() / (PI * 1.7 * 1.7) < 5e-3);
    }

    #[test]
    fn rejects_small_counts() {
        assert!(build_disk_grids(DiskGeometry::unit(), 3, 32, half()).is_err());
        assert!(build_disk_grids(DiskGeometry::unit(), 8, 6, half()).is_err());
        assert!(build_disk_grids(DiskGeometry::unit(), 8, 9, half()).is_err());
    }

    #[test]
    fn sigma_masks() {
        let (_, b) = build_disk_grids(DiskGeometry::unit(), 8, 32, half()).unwrap();
        assert_eq!(b.sigma_mask.iter().filter(|&&m| m).count(), 16);
        let full = b.clone().with_sigma(SigmaArc::full()).unwrap();
        assert!(full.sigma_mask.iter().all(|&m| m));
        assert!(SigmaArc::new(1.0, 1.0).is_err());
        // a sliver between two nodes selects nothing
        assert!(b.clone().with_sigma(SigmaArc::new(0.01, 0.02).unwrap()).is_err());
        let vals = vec![1.0; b.len()];
        assert!(b.integrate_sigma(&vals) <= full.integrate(&vals));
    }

    #[test]
    fn exterior_patch_contracts() {
        let geom = DiskGeometry::unit();
        let patch = build_exterior_patch(geom, 1.5, 2.0, 8, 32).unwrap();
        assert_relative_eq!(patch.separation, 0.5);
        let area: f64 = patch.weights.iter().sum();
        assert!((area - PI * (4.0 - 2.25)).abs() / (PI * 1.75) < 5e-3);
        assert!(patch.nodes.iter().all(|&x| norm(x) > 1.0 + patch.separation));
        assert!(matches!(
            build_exterior_patch(geom, 1.0, 2.0, 8, 32),
            Err(FracError::NoSeparation { .. })
        ));
    }

    #[test]
    fn refinement_ladder_converges() {
        // smooth integrand: ∫ exp(x1) over the unit disk = 2π I_1(1)
        let exact = 2.0 * PI * 0.565_159_103_992_485;
        let mut prev = f64::INFINITY;
        for &n in &[8, 16, 32] {
            let (grid, _) = build_disk_grids(DiskGeometry::unit(), n, 2 * n, half()).unwrap();
            let err = (grid.integrate(&grid.sample(|x| x[0].exp())) - exact).abs();
            assert!(err <= 1.1 * prev, "n={n} err={err} prev={prev}");
            prev = err;
        }
    }

    #[test]
    fn csv_dump_has_one_row_per_node() {
        let (grid, _) = build_disk_grids(DiskGeometry::unit(), 4, 8, half()).unwrap();
        let csv = grid.to_csv();
        assert!(csv.starts_with("x1,x2,weight,dist\n"));
        assert_eq!(csv.lines().count(), grid.len() + 1);
    }
}
