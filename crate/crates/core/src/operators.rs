//! Discrete operators on the polar grid of the unit disk: the Nyström Green
//! matrix, the boundary trace map and a spectral field interpolant.
//!
//! The grid is rotation invariant, so the Green matrix is block circulant in
//! the angular index. Each ring's row is assembled once at angle index 0 and
//! rotated.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{FracError, Result};
use crate::geometry::{InteriorGrid, Point};
use crate::kernels::{GreenKernel, KernelConstants};
use crate::quadrature::Barycentric;

/// Eigenvalue of `(-Δ)^a` on `(1-ρ²)^a P_n^{(a,l)}(2ρ²-1) ρ^l e^{ilφ}` in the unit disk.
pub fn disk_eigenvalue(a: f64, n: usize, l: usize) -> f64 {
    let (nf, lf) = (n as f64, l as f64);
    (a * 4f64.ln() + ln_gamma(1.0 + a + nf) + ln_gamma(1.0 + a + nf + lf)
        - ln_gamma(nf + 1.0)
        - ln_gamma(1.0 + nf + lf))
        .exp()
}

/// Torsion function `G[1] = (1-|x|²)^a / (4^a Γ(1+a)²)` on the unit disk.
pub fn torsion(a: f64, x: Point) -> f64 {
    let w = (1.0 - x[0] * x[0] - x[1] * x[1]).max(0.0);
    w.powf(a) / (4f64.powf(a) * gamma(1.0 + a).powi(2))
}

fn require_unit(grid: &InteriorGrid) -> Result<()> {
    if grid.geometry.is_unit() {
        Ok(())
    } else {
        Err(FracError::UnsupportedGeometry)
    }
}

/// Dense Nyström matrix `A` with `(A φ)_i ≈ ∫ G(x_i, z) φ(z) dz`, `G` the
/// Green function of `(-Δ)^a` on the unit disk.
///
/// Off-diagonal entries are kernel times weight. The diagonal absorbs the
/// exact torsion so constants are integrated exactly, and a local gradient
/// stencil scaled by the quadrature defect on linear functions makes
/// linears exact too.
#[derive(Debug, Clone)]
pub struct GreenOperator {
    pub matrix: DMatrix<f64>,
}

impl GreenOperator {
    pub fn new(grid: &InteriorGrid) -> Result<Self> {
        require_unit(grid)?;
        let a = grid.order.value();
        let kernel = GreenKernel::new(grid.geometry, grid.order)?;
        let scale = KernelConstants::planar(grid.order).green_scale;
        let n = grid.len();
        let (nr, na) = (grid.radial_count, grid.angular_count);
        let lam00 = disk_eigenvalue(a, 0, 0);
        let lam01 = disk_eigenvalue(a, 0, 1);
        let wts: Vec<f64> = grid.weights.iter().map(|&w| w * scale).collect();
        let alg: Vec<f64> = grid.nodes.iter().map(|x| 1.0 - x[0] * x[0] - x[1] * x[1]).collect();

        let lam10 = disk_eigenvalue(a, 1, 0);
        let lam02 = disk_eigenvalue(a, 0, 2);

        let mut base_rows = Vec::with_capacity(nr);
        for j in 0..nr {
            let i = grid.index(j, 0);
            let xi = grid.nodes[i];
            let mut row = vec![0.0; n];
            let mut off_sum = 0.0;
            let mut lin = [0.0; 2];
            let mut quad = [0.0; 3];
            for k in 0..n {
                if k == i {
                    continue;
                }
                let z = grid.nodes[k];
                let (d1, d2) = (z[0] - xi[0], z[1] - xi[1]);
                let v = kernel.eval_unchecked(d1.hypot(d2), alg[i], alg[k]) * wts[k];
                row[k] = v;
                off_sum += v;
                lin[0] += v * d1;
                lin[1] += v * d2;
                quad[0] += v * d1 * d1;
                quad[1] += v * d1 * d2;
                quad[2] += v * d2 * d2;
            }
            let wa = alg[i].powf(a);
            let s = 1.0 - alg[i];
            let (x1, x2) = (xi[0], xi[1]);
            row[i] = wa / lam00 - off_sum;

            // exact moments G[(z - x_i)^α](x_i) from the disk eigenfunctions
            let g1 = wa / lam00;
            let gz = [wa * x1 / lam01, wa * x2 / lam01];
            let gs = wa * (((a + 2.0) * s - 1.0) / lam10 + 1.0 / lam00) / (a + 2.0);
            let gc2 = wa * (x1 * x1 - x2 * x2) / lam02;
            let gs2 = wa * 2.0 * x1 * x2 / lam02;
            let m11 = 0.5 * (gs + gc2) - 2.0 * x1 * gz[0] + x1 * x1 * g1;
            let m12 = 0.5 * gs2 - x1 * gz[1] - x2 * gz[0] + x1 * x2 * g1;
            let m22 = 0.5 * (gs - gc2) - 2.0 * x2 * gz[1] + x2 * x2 * g1;

            let st = LocalStencils::new(grid, j);
            let lin_defect = [gz[0] - x1 * g1 - lin[0], gz[1] - x2 * g1 - lin[1]];
            for (col, coef) in st.gradient(lin_defect) {
                row[col] += coef;
            }
            // the gradient stencil is exact on quadratics centered at x_i, so
            // only the punctured sum contributes to the quadratic moments
            let quad_defect = [m11 - quad[0], m12 - quad[1], m22 - quad[2]];
            for (col, coef) in st.hessian(quad_defect) {
                row[col] += coef;
            }
            base_rows.push(row);
        }

        let mut matrix = DMatrix::<f64>::zeros(n, n);
        for j in 0..nr {
            let base = &base_rows[j];
            for m in 0..na {
                let i = grid.index(j, m);
                for jj in 0..nr {
                    for mm in 0..na {
                        let src = grid.index(jj, mm);
                        let dst = grid.index(jj, (mm + m) % na);
                        matrix[(i, dst)] = base[src];
                    }
                }
            }
        }
        Ok(Self { matrix })
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(values);
        (&self.matrix * v).as_slice().to_vec()
    }
}

/// Finite-difference stencils at node `(j, 0)` in the polar variables.
///
/// Radial derivatives use three points on the line through the origin (the
/// innermost ring borrows its mirror node across the origin). Angular
/// differences are scaled by `sin Δφ` and `1 - cos Δφ` so they are exact on
/// first harmonics.
struct LocalStencils {
    rho: f64,
    phi: f64,
    d_r: Vec<(usize, f64)>,
    d_rr: Vec<(usize, f64)>,
    d_p: Vec<(usize, f64)>,
    d_pp: Vec<(usize, f64)>,
    d_rp: Vec<(usize, f64)>,
}

impl LocalStencils {
    fn new(grid: &InteriorGrid, j: usize) -> Self {
        let (nr, na) = (grid.radial_count, grid.angular_count);
        let rho = grid.ring_radius[j];
        // (signed radius, ring, angular offset of the line's node)
        let line: [(f64, usize, usize); 3] = if j == 0 {
            [(-grid.ring_radius[0], 0, na / 2), (rho, 0, 0), (grid.ring_radius[1], 1, 0)]
        } else if j + 1 < nr {
            [(grid.ring_radius[j - 1], j - 1, 0), (rho, j, 0), (grid.ring_radius[j + 1], j + 1, 0)]
        } else {
            [(grid.ring_radius[j - 2], j - 2, 0), (grid.ring_radius[j - 1], j - 1, 0), (rho, j, 0)]
        };
        let xs = [line[0].0, line[1].0, line[2].0];
        let (w1, w2) = lagrange_derivatives(&xs, rho);
        let dphi = 2.0 * PI / na as f64;
        let sp = 1.0 / (2.0 * dphi.sin());
        let cp = 1.0 / (2.0 * (1.0 - dphi.cos()));
        let at = |ring: usize, off: usize, step: isize| {
            let m = (off as isize + step).rem_euclid(na as isize) as usize;
            grid.index(ring, m)
        };
        let mut d_r = Vec::new();
        let mut d_rr = Vec::new();
        let mut d_rp = Vec::new();
        for k in 0..3 {
            let (_, ring, off) = line[k];
            d_r.push((at(ring, off, 0), w1[k]));
            d_rr.push((at(ring, off, 0), w2[k]));
            d_rp.push((at(ring, off, 1), w1[k] * sp));
            d_rp.push((at(ring, off, -1), -w1[k] * sp));
        }
        let d_p = vec![(at(j, 0, 1), sp), (at(j, 0, -1), -sp)];
        let d_pp = vec![(at(j, 0, 1), cp), (at(j, 0, 0), -2.0 * cp), (at(j, 0, -1), cp)];
        Self {
            rho,
            phi: grid.angles[0],
            d_r,
            d_rr,
            d_p,
            d_pp,
            d_rp,
        }
    }

    /// Cartesian vector in the local (radial, tangential) frame.
    fn local(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.phi.sin_cos();
        [v[0] * c + v[1] * s, -v[0] * s + v[1] * c]
    }

    /// Coefficients of `v · ∇f`.
    fn gradient(&self, v: [f64; 2]) -> Vec<(usize, f64)> {
        let [vr, vt] = self.local(v);
        let mut out: Vec<(usize, f64)> = self.d_r.iter().map(|&(c, w)| (c, vr * w)).collect();
        out.extend(self.d_p.iter().map(|&(c, w)| (c, vt * w / self.rho)));
        out
    }

    /// Coefficients of `½ Σ C_kl ∂_kl f` for the symmetric `C = [c11, c12, c22]`.
    fn hessian(&self, c: [f64; 3]) -> Vec<(usize, f64)> {
        let (s, co) = self.phi.sin_cos();
        // rotate C into the local frame
        let crr = c[0] * co * co + 2.0 * c[1] * s * co + c[2] * s * s;
        let ctt = c[0] * s * s - 2.0 * c[1] * s * co + c[2] * co * co;
        let crt = (c[2] - c[0]) * s * co + c[1] * (co * co - s * s);
        let r = self.rho;
        // H_rr = f_rr, H_rt = f_rp/ρ - f_p/ρ², H_tt = f_r/ρ + f_pp/ρ²
        let mut out = Vec::new();
        out.extend(self.d_rr.iter().map(|&(k, w)| (k, 0.5 * crr * w)));
        out.extend(self.d_rp.iter().map(|&(k, w)| (k, crt * w / r)));
        out.extend(self.d_p.iter().map(|&(k, w)| (k, -crt * w / (r * r))));
        out.extend(self.d_r.iter().map(|&(k, w)| (k, 0.5 * ctt * w / r)));
        out.extend(self.d_pp.iter().map(|&(k, w)| (k, 0.5 * ctt * w / (r * r))));
        out
    }
}

/// First and second derivative weights of the quadratic interpolant through
/// three points, evaluated at `x`.
fn lagrange_derivatives(xs: &[f64; 3], x: f64) -> ([f64; 3], [f64; 3]) {
    let mut d1 = [0.0; 3];
    let mut d2 = [0.0; 3];
    for k in 0..3 {
        let (l, m) = match k {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let denom = (xs[k] - xs[l]) * (xs[k] - xs[m]);
        d1[k] = ((x - xs[l]) + (x - xs[m])) / denom;
        d2[k] = 2.0 / denom;
    }
    (d1, d2)
}

/// Boundary trace `lim w/d^a` of `w = G[ψ]` at every boundary node, as a
/// matrix acting on `ψ` sampled at interior nodes.
///
/// The limit kernel `(1-ρ²)^a/|x-ω|²` is expanded as `(1-ρ²)^(a-1)` times
/// the Poisson series and truncated at the angular Nyquist frequency, which
/// is exact for fields the grid resolves.
#[derive(Debug, Clone)]
pub struct TraceOperator {
    pub matrix: DMatrix<f64>,
}

impl TraceOperator {
    pub fn new(grid: &InteriorGrid, boundary_angles: &[f64]) -> Result<Self> {
        require_unit(grid)?;
        let a = grid.order.value();
        let consts = KernelConstants::planar(grid.order);
        let (nr, na) = (grid.radial_count, grid.angular_count);
        let half = na / 2;
        let pref = 2f64.powf(a) * consts.green_scale * consts.kappa_n * PI / na as f64;
        let mut matrix = DMatrix::<f64>::zeros(boundary_angles.len(), grid.len());
        for (b, &psi) in boundary_angles.iter().enumerate() {
            for j in 0..nr {
                let rho = grid.ring_radius[j];
                let lam = grid.ring_jacobi_weights[j];
                for m in 0..na {
                    let delta = psi - grid.angles[m];
                    let mut sum = 1.0;
                    let mut pk = 1.0;
                    for k in 1..=half {
                        pk *= rho;
                        let term = pk * (k as f64 * delta).cos();
                        sum += if k == half { term } else { 2.0 * term };
                    }
                    matrix[(b, grid.index(j, m))] = pref * lam * sum;
                }
            }
        }
        Ok(Self { matrix })
    }

    pub fn apply(&self, density: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(density);
        (&self.matrix * v).as_slice().to_vec()
    }
}

/// Interpolates a smooth function sampled on the polar grid: trigonometric in
/// angle per ring, barycentric in `s = ρ²` across rings. Odd angular modes
/// carry a factor `ρ` that is divided out before interpolation in `s`.
#[derive(Debug, Clone)]
pub struct PolarInterpolant {
    radial: Barycentric,
    /// `coeffs[k][j] = (cos, sin)` coefficient of mode `k` on ring `j`.
    coeffs: Vec<Vec<(f64, f64)>>,
}

impl PolarInterpolant {
    pub fn new(grid: &InteriorGrid, values: &[f64]) -> Self {
        let (nr, na) = (grid.radial_count, grid.angular_count);
        let half = na / 2;
        let mut coeffs = vec![vec![(0.0, 0.0); nr]; half + 1];
        for j in 0..nr {
            let rho = grid.ring_radius[j];
            for (k, ck) in coeffs.iter_mut().enumerate() {
                let (mut c, mut s) = (0.0, 0.0);
                for m in 0..na {
                    let (sn, cs) = (k as f64 * grid.angles[m]).sin_cos();
                    c += values[grid.index(j, m)] * cs;
                    s += values[grid.index(j, m)] * sn;
                }
                let scale = if k == 0 || k == half { 1.0 } else { 2.0 } / na as f64;
                let odd = if k % 2 == 1 { rho } else { 1.0 };
                ck[j] = (c * scale / odd, s * scale / odd);
            }
        }
        Self {
            radial: Barycentric::new(&grid.ring_s),
            coeffs,
        }
    }

    /// Value at normalized radius `rho` and angle `phi`.
    pub fn eval_polar(&self, rho: f64, phi: f64) -> f64 {
        let card = self.radial.cardinals(rho * rho);
        let mut out = 0.0;
        for (k, ck) in self.coeffs.iter().enumerate() {
            let (mut c, mut s) = (0.0, 0.0);
            for (l, &(cj, sj)) in card.iter().zip(ck) {
                c += l * cj;
                s += l * sj;
            }
            let (sn, cs) = (k as f64 * phi).sin_cos();
            let odd = if k % 2 == 1 { rho } else { 1.0 };
            out += odd * (c * cs + s * sn);
        }
        out
    }

    pub fn eval(&self, x: Point) -> f64 {
        self.eval_polar(x[0].hypot(x[1]), x[1].atan2(x[0]))
    }
}

/// Hager-Higham estimate of `‖B^{-1}‖_1` from solves with `B` and `B^T`.
pub fn inverse_norm1_estimate<F, G>(n: usize, solve: F, solve_t: G) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if n == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0;
    let mut last_j = usize::MAX;
    for _ in 0..5 {
        let y = solve(&x);
        est = y.iter().map(|v| v.abs()).sum::<f64>();
        let xi: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let z = solve_t(&xi);
        let (j, zmax) = z
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (k, &v)| if v.abs() > acc.1 { (k, v.abs()) } else { acc });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if zmax <= ztx || j == last_j {
            break;
        }
        last_j = j;
        x = vec![0.0; n];
        x[j] = 1.0;
    }
    // alternating-sign probe guards against an underestimate
    let alt: Vec<f64> = (0..n)
        .map(|k| {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 + k as f64 / (n as f64 - 1.0).max(1.0))
        })
        .collect();
    let y = solve(&alt);
    let alt_est = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
    est.max(alt_est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_disk_grids, DiskGeometry, FractionalOrder};
    use crate::quadrature::jacobi_pair;

    fn grid(a: f64, nr: usize, na: usize) -> InteriorGrid {
        build_disk_grids(DiskGeometry::unit(), nr, na, FractionalOrder::new(a).unwrap())
            .unwrap()
            .0
    }

    /// `P_n^{(a,l)}(2s-1) ρ^l cos(lφ)` and its image under `G`.
    fn eigen_pair(g: &InteriorGrid, n: usize, l: usize) -> (Vec<f64>, Vec<f64>) {
        let a = g.order.value();
        let lam = disk_eigenvalue(a, n, l);
        let mut f = Vec::new();
        let mut gf = Vec::new();
        for x in &g.nodes {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let rho = r2.sqrt();
            let phi = x[1].atan2(x[0]);
            let v = jacobi_pair(n, a, l as f64, 2.0 * r2 - 1.0).0 * rho.powi(l as i32) * (l as f64 * phi).cos();
            f.push(v);
            gf.push((1.0 - r2).powf(a) * v / lam);
        }
        (f, gf)
    }

    #[test]
    fn green_operator_exact_on_constants_and_linears() {
        let g = grid(0.4, 10, 32);
        let op = GreenOperator::new(&g).unwrap();
        for (n, l) in [(0, 0), (0, 1)] {
            let (f, want) = eigen_pair(&g, n, l);
            let got = op.apply(&f);
            for i in 0..g.len() {
                assert!((got[i] - want[i]).abs() < 1e-12, "n={n} l={l} i={i}");
            }
        }
    }

    #[test]
    fn green_operator_converges_on_eigenfunctions() {
        for &a in &[0.3, 0.5, 0.7] {
            let mut prev = f64::INFINITY;
            for &(nr, na) in &[(8, 32), (16, 64)] {
                let g = grid(a, nr, na);
                let op = GreenOperator::new(&g).unwrap();
                let mut worst = 0.0f64;
                for (n, l) in [(1, 0), (0, 2), (1, 2), (2, 3)] {
                    let (f, want) = eigen_pair(&g, n, l);
                    let got = op.apply(&f);
                    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    let err = got.iter().zip(&want).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                    worst = worst.max(err / scale);
                }
                assert!(worst < prev);
                prev = worst;
            }
            assert!(prev < 2e-3, "a={a} err={prev}");
        }
    }

    #[test]
    fn trace_operator_matches_eigen_traces() {
        let a = 0.35;
        let g = grid(a, 12, 32);
        let angles: Vec<f64> = (0..32).map(|m| 2.0 * PI * m as f64 / 32.0).collect();
        let tr = TraceOperator::new(&g, &angles).unwrap();
        for (n, l) in [(0, 0), (1, 1), (2, 3)] {
            let (f, _) = eigen_pair(&g, n, l);
            let got = tr.apply(&f);
            // trace of (1-ρ²)^a φ / λ divided by d^a at ρ = 1
            let p1 = jacobi_pair(n, a, l as f64, 1.0).0;
            let lam = disk_eigenvalue(a, n, l);
            for (b, &psi) in angles.iter().enumerate() {
                let want = 2f64.powf(a) * p1 * (l as f64 * psi).cos() / lam;
                assert!((got[b] - want).abs() < 1e-10 * p1.abs().max(1.0), "n={n} l={l}");
            }
        }
    }

    #[test]
    fn interpolant_reproduces_smooth_fields() {
        let g = grid(0.5, 16, 32);
        let f = |x: Point| (x[0] * 1.3).sin() + x[1] * x[1] * x[0] + 0.2;
        let vals = g.sample(f);
        let it = PolarInterpolant::new(&g, &vals);
        for &p in &[[0.0, 0.0], [0.31, -0.2], [-0.7, 0.4], [0.05, 0.9], [0.0, 0.999]] {
            assert!((it.eval(p) - f(p)).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn condition_estimate_of_diagonal() {
        let d = [1.0, 4.0, 0.25, 2.0];
        let solve = |x: &[f64]| x.iter().zip(&d).map(|(v, s)| v / s).collect::<Vec<_>>();
        let est = inverse_norm1_estimate(4, solve, solve);
        assert!((est - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_other_disks() {
        let g = build_disk_grids(DiskGeometry::new([0.0, 0.0], 2.0).unwrap(), 8, 16, FractionalOrder::new(0.5).unwrap())
            .unwrap()
            .0;
        assert!(matches!(GreenOperator::new(&g), Err(FracError::UnsupportedGeometry)));
    }
}
