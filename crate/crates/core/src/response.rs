//! Exterior-to-boundary response map: columns are `u / d^a` on the
//! measurement arc for a basis of exterior sources.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};
use crate::forward::{Bump, Discretization, FieldSolution, ForwardSolver, GridSpec, Potential, SourceFunction};
use crate::geometry::{norm, ExteriorPatch, SigmaArc};

/// Smooth bumps in the exterior patch used as test sources.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceBasis {
    pub bumps: Vec<Bump>,
    pub sources: Vec<SourceFunction>,
}

impl SourceBasis {
    pub const DEFAULT_SIZE: usize = 8;
    pub const DEFAULT_WIDTH: f64 = 0.2;

    /// Each bump must vanish within one node spacing of the patch boundary.
    pub fn from_bumps(bumps: Vec<Bump>, patch: &ExteriorPatch) -> Result<Self> {
        if bumps.is_empty() {
            return Err(FracError::CountTooSmall {
                what: "source basis size",
                got: 0,
                min: 1,
            });
        }
        let sources = bumps
            .iter()
            .map(|b| SourceFunction::from_bumps(std::slice::from_ref(b), patch))
            .collect::<Result<Vec<_>>>()?;
        let h = patch.node_spacing();
        for (k, s) in sources.iter().enumerate() {
            for (y, v) in patch.nodes.iter().zip(&s.values) {
                let r = norm(patch.geometry.offset(*y));
                let edge = (r - patch.inner_radius).min(patch.outer_radius - r);
                if edge < h && v.abs() >= 1e-14 {
                    return Err(FracError::InvalidArgument(format!(
                        "source {k} does not vanish within one node spacing ({h:.3e}) of the patch boundary"
                    )));
                }
            }
        }
        Ok(Self { bumps, sources })
    }

    /// `count` unit-height bumps at equal angles on the mid-circle of the patch.
    pub fn on_mid_circle(patch: &ExteriorPatch, count: usize, width: f64) -> Result<Self> {
        let r = patch.mid_radius();
        let c = patch.geometry.center;
        let bumps = (0..count)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / count as f64;
                Bump {
                    center: [c[0] + r * t.cos(), c[1] + r * t.sin()],
                    width,
                    height: 1.0,
                }
            })
            .collect();
        Self::from_bumps(bumps, patch)
    }

    pub fn default_for(patch: &ExteriorPatch) -> Result<Self> {
        Self::on_mid_circle(patch, Self::DEFAULT_SIZE, Self::DEFAULT_WIDTH)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Same bumps sampled on another patch.
    pub fn resampled(&self, patch: &ExteriorPatch) -> Result<Self> {
        Self::from_bumps(self.bumps.clone(), patch)
    }

    /// `h_src` of every source on the interior grid.
    pub fn source_fields(&self, disc: &Discretization) -> Vec<Vec<f64>> {
        self.sources.iter().map(|f| disc.source_field(f)).collect()
    }
}

/// Provenance of a response matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseMeta {
    pub a: f64,
    pub q_hash: String,
    pub grid: GridSpec,
    pub sigma: SigmaArc,
    /// Boundary node indices of the rows.
    pub rows: Vec<usize>,
    /// Boundary angles of the rows.
    pub angles: Vec<f64>,
    pub boundary_count: usize,
    pub sources: Vec<Bump>,
}

/// Traces `u / d^a` on `Σ` (rows) for each source (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    pub entries: DMatrix<f64>,
    pub meta: ResponseMeta,
}

/// FNV-1a over the bit patterns of the potential values.
pub fn potential_hash(q: &Potential) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in &q.values {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

impl ResponseMatrix {
    /// Builds the matrix from full-boundary traces, keeping the `Σ` rows.
    pub fn from_traces(traces: &[Vec<f64>], q: &Potential, basis: &SourceBasis, disc: &Discretization) -> Result<Self> {
        let rows = disc.boundary.sigma_indices();
        if rows.is_empty() {
            return Err(FracError::EmptySigma);
        }
        let entries = DMatrix::from_fn(rows.len(), traces.len(), |r, c| traces[c][rows[r]]);
        Ok(Self {
            entries,
            meta: ResponseMeta {
                a: disc.a(),
                q_hash: potential_hash(q),
                grid: disc.spec,
                sigma: disc.boundary.sigma,
                angles: rows.iter().map(|&i| disc.boundary.angles[i]).collect(),
                rows,
                boundary_count: disc.boundary.len(),
                sources: basis.bumps.clone(),
            },
        })
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    /// Rows whose angles fall in `sigma`.
    pub fn restrict(&self, sigma: SigmaArc) -> Result<Self> {
        let keep: Vec<usize> = (0..self.nrows()).filter(|&r| sigma.contains(self.meta.angles[r])).collect();
        if keep.is_empty() {
            return Err(FracError::EmptySigma);
        }
        let entries = self.entries.select_rows(keep.iter());
        let mut meta = self.meta.clone();
        meta.sigma = sigma;
        meta.rows = keep.iter().map(|&r| self.meta.rows[r]).collect();
        meta.angles = keep.iter().map(|&r| self.meta.angles[r]).collect();
        Ok(Self { entries, meta })
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.norm()
    }

    /// Columns `angle,src_0,...` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle");
        for c in 0..self.ncols() {
            let _ = write!(out, ",src_{c}");
        }
        out.push('\n');
        for r in 0..self.nrows() {
            let _ = write!(out, "{:.16e}", self.meta.angles[r]);
            for c in 0..self.ncols() {
                let _ = write!(out, ",{:.16e}", self.entries[(r, c)]);
            }
            out.push('\n');
        }
        out
    }

    /// Inverse of `to_csv`; the sidecar metadata supplies the shape.
    pub fn from_csv(text: &str, meta: ResponseMeta) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| FracError::InvalidArgument("response CSV is empty".into()))?;
        let ncols = header.split(',').count().saturating_sub(1);
        if ncols != meta.sources.len() {
            return Err(FracError::Incompatible(format!(
                "response CSV has {ncols} source columns, metadata lists {}",
                meta.sources.len()
            )));
        }
        let mut data = Vec::new();
        let mut nrows = 0;
        for (k, line) in lines.enumerate() {
            let fields: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| FracError::InvalidArgument(format!("response CSV line {}: {e}", k + 2)))?;
            if fields.len() != ncols + 1 {
                return Err(FracError::InvalidArgument(format!(
                    "response CSV line {} has {} fields",
                    k + 2,
                    fields.len()
                )));
            }
            data.extend_from_slice(&fields[1..]);
            nrows += 1;
        }
        if nrows != meta.rows.len() {
            return Err(FracError::Incompatible(format!(
                "response CSV has {nrows} rows, metadata lists {}",
                meta.rows.len()
            )));
        }
        Ok(Self {
            entries: DMatrix::from_row_slice(nrows, ncols, &data),
            meta,
        })
    }
}

/// Forward solves for every source field, in parallel over sources.
pub fn solve_columns(solver: &ForwardSolver, fields: &[Vec<f64>]) -> Result<Vec<FieldSolution>> {
    fields
        .par_iter()
        .enumerate()
        .map(|(j, h)| {
            solver.solve_with_source_field(h).map_err(|e| FracError::Column {
                column: j,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn assemble_response(q: &Potential, basis: &SourceBasis, disc: &Discretization) -> Result<ResponseMatrix> {
    if disc.boundary.sigma_indices().is_empty() {
        return Err(FracError::EmptySigma);
    }
    let solver = ForwardSolver::new(disc, q.clone())?;
    let fields = basis.source_fields(disc);
    let sols = solve_columns(&solver, &fields)?;
    let traces: Vec<Vec<f64>> = sols.into_iter().map(|s| s.trace_a).collect();
    ResponseMatrix::from_traces(&traces, q, basis, disc)
}

/// `max |entries| ≤ C ‖f‖_∞` at `q ≥ 0`, with
/// `C = frac_constant · separation^(-2-2a) · |W| · max_ω Σ_x |T(ω, x)|`, where
/// `T` is the discrete trace operator.
pub fn boundedness_constant(disc: &Discretization) -> f64 {
    let a = disc.a();
    let sep = disc.patch.separation;
    let t = &disc.trace.matrix;
    let trace_mass = (0..t.nrows())
        .map(|b| t.row(b).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    disc.constants.frac_constant * sep.powf(-2.0 - 2.0 * a) * disc.patch.area() * trace_mass
}

/// Singular spectrum and numerical ranks of a response matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub singular_values: Vec<f64>,
    pub rank_1e8: usize,
    pub rank_1e12: usize,
    /// Least-squares slope of `log10 σ_k` against `k`.
    pub decay_per_index: f64,
    pub condition: f64,
}

pub fn response_conditioning(r: &ResponseMatrix) -> Result<ConditioningReport> {
    if r.nrows() == 0 || r.ncols() == 0 {
        return Err(FracError::InvalidArgument("response matrix is empty".into()));
    }
    let mut sv: Vec<f64> = r.entries.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let top = sv[0];
    let rank = |tol: f64| sv.iter().filter(|&&s| s > tol * top).count();
    let logs: Vec<(f64, f64)> = sv
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(k, s)| (k as f64, s.log10()))
        .collect();
    let decay = if logs.len() < 2 {
        0.0
    } else {
        let n = logs.len() as f64;
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    };
    let last = *sv.last().unwrap();
    Ok(ConditioningReport {
        rank_1e8: rank(1e-8),
        rank_1e12: rank(1e-12),
        decay_per_index: decay,
        condition: if last > 0.0 { top / last } else { f64::INFINITY },
        singular_values: sv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FractionalOrder;

    fn disc(sigma: SigmaArc) -> Discretization {
        let spec = GridSpec {
            patch_angular: 256,
            patch_radial: 16,
            ..GridSpec::with_counts(8, 32)
        };
        Discretization::new(FractionalOrder::new(0.5).unwrap(), spec, sigma).unwrap()
    }

    #[test]
    fn default_basis_lies_inside_the_patch() {
        let d = disc(SigmaArc::half());
        let b = SourceBasis::default_for(&d.patch).unwrap();
        assert_eq!(b.len(), 8);
        for bump in &b.bumps {
            assert!((norm(bump.center) - 1.75).abs() < 1e-14);
        }
        for s in &b.sources {
            assert!(s.values.iter().all(|&v| v >= 0.0));
            assert!(s.values.iter().any(|&v| v > 0.5));
        }
    }

    #[test]
    fn basis_touching_the_patch_edge_is_rejected() {
        let d = disc(SigmaArc::half());
        assert!(SourceBasis::on_mid_circle(&d.patch, 4, 0.25).is_err());
        assert!(SourceBasis::from_bumps(Vec::new(), &d.patch).is_err());
    }

    #[test]
    fn rows_follow_sigma() {
        let d = disc(SigmaArc::half());
        let b = SourceBasis::on_mid_circle(&d.patch, 3, 0.2).unwrap();
        let r = assemble_response(&Potential::zero(&d.interior), &b, &d).unwrap();
        assert_eq!(r.nrows(), d.boundary.sigma_mask.iter().filter(|&&m| m).count());
        assert_eq!(r.ncols(), 3);
        assert!(r.entries.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_sigma_is_rejected() {
        let d = disc(SigmaArc::full());
        let tiny = SigmaArc::new(0.01, 0.02).unwrap();
        assert_eq!(d.with_sigma(tiny).unwrap_err(), FracError::EmptySigma);
        let b = SourceBasis::on_mid_circle(&d.patch, 2, 0.2).unwrap();
        let r = assemble_response(&Potential::zero(&d.interior), &b, &d).unwrap();
        assert_eq!(r.restrict(tiny).unwrap_err(), FracError::EmptySigma);
    }

    #[test]
    fn single_positive_bump_gives_positive_column() {
        let d = disc(SigmaArc::full());
        let b = SourceBasis::on_mid_circle(&d.patch, 1, 0.2).unwrap();
        let r = assemble_response(&Potential::zero(&d.interior), &b, &d).unwrap();
        assert!(r.entries.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn doubling_a_source_doubles_its_column() {
        let d = disc(SigmaArc::half());
        let q = Potential::from_bumps(&[Bump { center: [0.1, 0.0], width: 0.5, height: 2.0 }], &d.interior).unwrap();
        let b = SourceBasis::on_mid_circle(&d.patch, 2, 0.2).unwrap();
        let mut doubled = b.clone();
        doubled.bumps[1].height = 2.0;
        doubled.sources[1] = b.sources[1].scaled(2.0);
        let r1 = assemble_response(&q, &b, &d).unwrap();
        let r2 = assemble_response(&q, &doubled, &d).unwrap();
        for row in 0..r1.nrows() {
            assert_eq!(r1.entries[(row, 0)], r2.entries[(row, 0)]);
            let want = 2.0 * r1.entries[(row, 1)];
            assert!((r2.entries[(row, 1)] - want).abs() <= 1e-14 * want.abs());
        }
    }

    #[test]
    fn restriction_is_exact() {
        let d = disc(SigmaArc::full());
        let q = Potential::from_bumps(&[Bump { center: [0.0, 0.2], width: 0.4, height: 3.0 }], &d.interior).unwrap();
        let b = SourceBasis::on_mid_circle(&d.patch, 4, 0.2).unwrap();
        let full = assemble_response(&q, &b, &d).unwrap();
        let direct = assemble_response(&q, &b, &d.with_sigma(SigmaArc::half()).unwrap()).unwrap();
        let masked = full.restrict(SigmaArc::half()).unwrap();
        assert_eq!(masked.entries, direct.entries);
        assert_eq!(masked.meta.rows, direct.meta.rows);
    }

    #[test]
    fn boundedness_echo() {
        let d = disc(SigmaArc::full());
        let c = boundedness_constant(&d);
        let b = SourceBasis::default_for(&d.patch).unwrap();
        for q in [
            Potential::zero(&d.interior),
            Potential::from_bumps(&[Bump { center: [0.2, 0.0], width: 0.5, height: 4.0 }], &d.interior).unwrap(),
        ] {
            let r = assemble_response(&q, &b, &d).unwrap();
            let max = r.entries.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max > 0.0 && max <= c, "max {max} bound {c}");
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = disc(SigmaArc::half());
        let b = SourceBasis::on_mid_circle(&d.patch, 3, 0.2).unwrap();
        let r = assemble_response(&Potential::zero(&d.interior), &b, &d).unwrap();
        let back = ResponseMatrix::from_csv(&r.to_csv(), r.meta.clone()).unwrap();
        assert_eq!(back, r);
        let mut wrong = r.meta.clone();
        wrong.sources.pop();
        assert!(ResponseMatrix::from_csv(&r.to_csv(), wrong).is_err());
    }

    #[test]
    fn hash_tracks_values() {
        let d = disc(SigmaArc::half());
        let z = Potential::zero(&d.interior);
        let q = Potential::from_bumps(&[Bump { center: [0.0, 0.0], width: 0.3, height: 1.0 }], &d.interior).unwrap();
        assert_eq!(potential_hash(&z), potential_hash(&z.clone()));
        assert_ne!(potential_hash(&z), potential_hash(&q));
    }

    #[test]
    fn conditioning_of_single_source() {
        let d = disc(SigmaArc::half());
        let b = SourceBasis::on_mid_circle(&d.patch, 1, 0.2).unwrap();
        let r = assemble_response(&Potential::zero(&d.interior), &b, &d).unwrap();
        let rep = response_conditioning(&r).unwrap();
        assert_eq!(rep.singular_values.len(), 1);
        assert_eq!(rep.rank_1e12, 1);
    }

    #[test]
    fn rank_grows_with_nested_bases() {
        let d = disc(SigmaArc::half());
        let mut prev = 0;
        for n in [2, 4, 8, 16] {
            let b = SourceBasis::on_mid_circle(&d.patch, n, 0.2).unwrap();
            let r = assemble_response(&Potential::zero(&d.interior), &b, &d).unwrap();
            let rep = response_conditioning(&r).unwrap();
            assert!(rep.rank_1e12 >= prev);
            assert!(rep.singular_values.iter().all(|&s| s > 0.0));
            prev = rep.rank_1e12;
        }
    }
}
