//! Recovery of `q` from response data by regularized Gauss–Newton.
//!
//! The unknowns are the values of `q` at interior nodes inside a declared
//! support disk. Linearizing `t = T (h - q w)` with `w = (I + A Q)^(-1) A h`
//! gives `δt = -T (I + Q A)^(-1) (δq ∘ w)`, so one adjoint solve per
//! measurement node yields every Jacobian row.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};
use crate::forward::{Bump, Discretization, ForwardSolver, Potential};
use crate::geometry::norm;
use crate::kernels::BoundaryFourier;
use crate::response::{potential_hash, solve_columns, ResponseMatrix, SourceBasis};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionConfig {
    /// Largest Tikhonov weight of the discrepancy scan.
    pub regularization_weight: f64,
    pub max_iterations: usize,
    /// Stop when the accepted step is below this, relative to `1 + ‖q‖`.
    pub step_tolerance: f64,
    pub noise_level: f64,
    pub seed: u64,
    /// Synthesize data on the inversion grid itself.
    pub inverse_crime: bool,
    /// Radius of the disk carrying the unknown `q`.
    pub support_radius: f64,
    /// Number of weights `λ_k = λ_0 10^(-k/2)` tried by the discrepancy scan.
    pub lambda_steps: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            regularization_weight: 1e-4,
            max_iterations: 20,
            step_tolerance: 1e-6,
            noise_level: 0.01,
            seed: 20240901,
            inverse_crime: false,
            support_radius: 0.8,
            lambda_steps: 10,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.regularization_weight > 0.0 && self.regularization_weight.is_finite()) {
            return Err(FracError::InvalidArgument("regularization_weight must be positive".into()));
        }
        if self.max_iterations < 1 {
            return Err(FracError::CountTooSmall {
                what: "max_iterations",
                got: self.max_iterations,
                min: 1,
            });
        }
        if !(self.step_tolerance >= 0.0) {
            return Err(FracError::InvalidArgument("step_tolerance must be nonnegative".into()));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(FracError::InvalidArgument("noise_level must be nonnegative".into()));
        }
        if !(self.support_radius > 0.0 && self.support_radius <= 0.9) {
            return Err(FracError::InvalidArgument("support_radius must lie in (0, 0.9]".into()));
        }
        if self.lambda_steps < 1 {
            return Err(FracError::CountTooSmall {
                what: "lambda_steps",
                got: self.lambda_steps,
                min: 1,
            });
        }
        Ok(())
    }
}

/// Full-boundary traces resampled from one boundary grid to another
/// through their trigonometric interpolants.
fn resample_trace(values: &[f64], angles: &[f64]) -> Vec<f64> {
    let f = BoundaryFourier::new(values);
    angles.iter().map(|&t| f.eval(1.0, t).0).collect()
}

/// Response data for `q_true`, with Gaussian noise of standard deviation
/// `noise_level · ‖R‖_F / sqrt(entries)`. Without the inverse crime the
/// forward model runs on a grid 1.5 times finer than `disc`.
pub fn synthesize_data(
    q_true: &[Bump],
    basis: &SourceBasis,
    noise_level: f64,
    seed: u64,
    inverse_crime: bool,
    disc: &Discretization,
) -> Result<ResponseMatrix> {
    let synth = if inverse_crime {
        disc.clone()
    } else {
        Discretization::new(disc.order(), disc.spec.refined(1.5), disc.boundary.sigma)?
    };
    let q_fine = Potential::from_bumps(q_true, &synth.interior)?;
    let basis_fine = basis.resampled(&synth.patch)?;
    let solver = ForwardSolver::new(&synth, q_fine)?;
    let sols = solve_columns(&solver, &basis_fine.source_fields(&synth))?;
    let traces: Vec<Vec<f64>> = sols
        .into_iter()
        .map(|s| {
            if inverse_crime {
                s.trace_a
            } else {
                resample_trace(&s.trace_a, &disc.boundary.angles)
            }
        })
        .collect();
    let q_coarse = Potential::from_bumps(q_true, &disc.interior)?;
    let mut data = ResponseMatrix::from_traces(&traces, &q_coarse, basis, disc)?;
    add_noise(&mut data, noise_level, seed)?;
    Ok(data)
}

fn add_noise(data: &mut ResponseMatrix, noise_level: f64, seed: u64) -> Result<()> {
    if noise_level == 0.0 {
        return Ok(());
    }
    let sigma = noise_level * data.frobenius() / (data.entries.len() as f64).sqrt();
    let normal = Normal::new(0.0, sigma).map_err(|e| FracError::InvalidArgument(format!("noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // column-major order fixes the draw sequence
    for v in data.entries.iter_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(())
}

/// Nodes carrying the unknowns and the map between `q` and the parameters.
#[derive(Debug, Clone)]
pub struct Parametrization {
    pub nodes: Vec<usize>,
    pub support_radius: f64,
}

impl Parametrization {
    pub fn new(disc: &Discretization, support_radius: f64) -> Self {
        let nodes = (0..disc.interior.len())
            .filter(|&i| norm(disc.interior.nodes[i]) < support_radius)
            .collect();
        Self { nodes, support_radius }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn potential(&self, p: &[f64], disc: &Discretization) -> Result<Potential> {
        let mut values = vec![0.0; disc.interior.len()];
        for (&i, &v) in self.nodes.iter().zip(p) {
            values[i] = v;
        }
        Potential::from_values(values, self.support_radius, &disc.interior)
    }

    /// Restriction of `q` to the unknowns; values outside the support are dropped.
    pub fn project(&self, q: &Potential) -> Vec<f64> {
        self.nodes.iter().map(|&i| q.values[i]).collect()
    }

    /// `LᵀL` for the discrete gradient: differences to the next ring and the
    /// next angle, weighted by node area over squared spacing. Neighbors
    /// outside the support are held at zero.
    pub fn gradient_gram(&self, disc: &Discretization) -> DMatrix<f64> {
        let grid = &disc.interior;
        let n = self.len();
        let mut pos = vec![usize::MAX; grid.len()];
        for (k, &i) in self.nodes.iter().enumerate() {
            pos[i] = k;
        }
        let mut g = DMatrix::<f64>::zeros(n, n);
        let na = grid.angular_count;
        let dphi = 2.0 * std::f64::consts::PI / na as f64;
        for (k, &i) in self.nodes.iter().enumerate() {
            let (j, m) = (grid.ring_of(i), grid.angle_of(i));
            let mut neighbors = vec![(grid.index(j, (m + 1) % na), grid.ring_radius[j] * dphi)];
            if j + 1 < grid.radial_count {
                neighbors.push((grid.index(j + 1, m), grid.ring_radius[j + 1] - grid.ring_radius[j]));
            }
            for (nb, h) in neighbors {
                let c = grid.weights[i] / (h * h);
                g[(k, k)] += c;
                if pos[nb] != usize::MAX {
                    let l = pos[nb];
                    g[(l, l)] += c;
                    g[(k, l)] -= c;
                    g[(l, k)] -= c;
                }
            }
        }
        g
    }
}

/// Forward traces on `Σ` plus everything the linearization needs.
struct Linearization {
    /// Traces on `Σ`, column-major (sources outer).
    traces: DVector<f64>,
    /// Interior `w` per source.
    fields: Vec<Vec<f64>>,
    solver_rows: Vec<Vec<f64>>,
}

fn sigma_rows(disc: &Discretization) -> Vec<usize> {
    disc.boundary.sigma_indices()
}

fn forward_traces(q: &Potential, h: &[Vec<f64>], disc: &Discretization, want_adjoint: bool) -> Result<Linearization> {
    let solver = ForwardSolver::new(disc, q.clone())?;
    let sols = solve_columns(&solver, h)?;
    let rows = sigma_rows(disc);
    let nr = rows.len();
    let mut traces = DVector::<f64>::zeros(nr * sols.len());
    for (j, s) in sols.iter().enumerate() {
        for (r, &b) in rows.iter().enumerate() {
            traces[j * nr + r] = s.trace_a[b];
        }
    }
    let solver_rows = if want_adjoint {
        let t: Vec<Vec<f64>> = rows.iter().map(|&b| disc.trace.matrix.row(b).iter().copied().collect()).collect();
        solver.solve_adjoint_many(&t)?
    } else {
        Vec::new()
    };
    Ok(Linearization {
        traces,
        fields: sols.into_iter().map(|s| s.interior_values).collect(),
        solver_rows,
    })
}

/// `δt_{b,j} = -m_b · (δq ∘ w_j)` with `m_b (I + Q A) = T_b`; rows are the
/// measurement nodes, columns the sources.
pub fn frechet_derivative(q: &Potential, basis: &SourceBasis, dq: &[f64], disc: &Discretization) -> Result<DMatrix<f64>> {
    if dq.len() != disc.interior.len() {
        return Err(FracError::Incompatible("direction does not match the interior grid".into()));
    }
    let lin = forward_traces(q, &basis.source_fields(disc), disc, true)?;
    let nr = lin.solver_rows.len();
    Ok(DMatrix::from_fn(nr, lin.fields.len(), |r, j| {
        let m = &lin.solver_rows[r];
        let w = &lin.fields[j];
        -(0..m.len()).map(|k| m[k] * dq[k] * w[k]).sum::<f64>()
    }))
}

fn jacobian(lin: &Linearization, param: &Parametrization) -> DMatrix<f64> {
    let nr = lin.solver_rows.len();
    let ns = lin.fields.len();
    DMatrix::from_fn(nr * ns, param.len(), |row, c| {
        let (j, r) = (row / nr, row % nr);
        let k = param.nodes[c];
        -lin.solver_rows[r][k] * lin.fields[j][k]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconstructionStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTrial {
    pub lambda: f64,
    pub misfit: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionResult {
    #[serde(skip)]
    pub q_estimate: Option<Potential>,
    /// Values of the estimate at interior nodes.
    pub q_values: Vec<f64>,
    /// Tikhonov objective at the start and after each accepted step.
    pub residual_history: Vec<f64>,
    /// Data misfit `‖A(q) - data‖_F` along the same steps.
    pub misfit_history: Vec<f64>,
    pub relative_error: Option<f64>,
    /// Selected weight; `None` when `q = 0` already meets the discrepancy
    /// target, which is the limit of infinite weight.
    pub lambda: Option<f64>,
    pub iterations: usize,
    pub status: ReconstructionStatus,
    /// Target misfit `1.1 · noise_level · ‖data‖_F` of the discrepancy scan.
    pub discrepancy_target: Option<f64>,
    /// Whether some weight met the target (otherwise the smallest misfit wins).
    pub discrepancy_met: bool,
    pub scan: Vec<LambdaTrial>,
    pub config: InversionConfig,
}

fn check_compatible(data: &ResponseMatrix, basis: &SourceBasis, disc: &Discretization) -> Result<()> {
    let rows = sigma_rows(disc);
    if data.meta.rows != rows {
        return Err(FracError::Incompatible("data rows differ from the measurement arc".into()));
    }
    if (data.meta.a - disc.a()).abs() > 1e-15 {
        return Err(FracError::Incompatible(format!(
            "data were generated for a = {}, inversion uses a = {}",
            data.meta.a,
            disc.a()
        )));
    }
    if data.meta.sources != basis.bumps || data.ncols() != basis.len() {
        return Err(FracError::Incompatible("data sources differ from the basis".into()));
    }
    if data.meta.boundary_count != disc.boundary.len() {
        return Err(FracError::Incompatible("data boundary grid differs".into()));
    }
    Ok(())
}

struct Problem<'a> {
    disc: &'a Discretization,
    param: Parametrization,
    fields: Vec<Vec<f64>>,
    data: DVector<f64>,
    gram: DMatrix<f64>,
}

impl Problem<'_> {
    fn misfit(&self, p: &[f64], adjoint: bool) -> Result<(f64, Linearization)> {
        let q = self.param.potential(p, self.disc)?;
        let lin = forward_traces(&q, &self.fields, self.disc, adjoint)?;
        Ok(((&lin.traces - &self.data).norm(), lin))
    }

    fn penalty(&self, p: &DVector<f64>) -> f64 {
        p.dot(&(&self.gram * p))
    }

    /// Gauss–Newton with Armijo backtracking at fixed `λ`.
    fn solve(&self, lambda: f64, start: &[f64], config: &InversionConfig) -> Result<GnRun> {
        let mut p = DVector::from_column_slice(start);
        let (mut misfit, mut lin) = self.misfit(p.as_slice(), true)?;
        let mut objective = misfit * misfit + lambda * self.penalty(&p);
        let mut history = vec![objective];
        let mut misfits = vec![misfit];
        let mut status = ReconstructionStatus::MaxIterations;
        let mut iterations = 0;
        for it in 0..config.max_iterations {
            let j = jacobian(&lin, &self.param);
            let r = &lin.traces - &self.data;
            let grad = j.transpose() * &r + lambda * (&self.gram * &p);
            if grad.norm() == 0.0 {
                status = ReconstructionStatus::Converged;
                break;
            }
            let mut h = j.transpose() * &j + lambda * &self.gram;
            // keeps the normal matrix definite on directions L does not see
            let shift = 1e-14 * h.diagonal().amax();
            for k in 0..h.nrows() {
                h[(k, k)] += shift;
            }
            let step = h
                .cholesky()
                .map(|c| c.solve(&(-&grad)))
                .ok_or(FracError::IllConditioned { estimate: f64::INFINITY })?;
            let slope = 2.0 * grad.dot(&step);
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha > 1e-10 {
                let trial = &p + alpha * &step;
                if let Ok((m, l)) = self.misfit(trial.as_slice(), true) {
                    let obj = m * m + lambda * self.penalty(&trial);
                    if obj <= objective + 1e-4 * alpha * slope {
                        accepted = Some((trial, m, l, obj));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((trial, m, l, obj)) = accepted else {
                status = ReconstructionStatus::LineSearchFailed;
                break;
            };
            let moved = (&trial - &p).norm();
            p = trial;
            misfit = m;
            lin = l;
            objective = obj;
            history.push(objective);
            misfits.push(misfit);
            iterations = it + 1;
            if moved <= config.step_tolerance * (1.0 + p.norm()) {
                status = ReconstructionStatus::Converged;
                break;
            }
        }
        Ok(GnRun {
            p: p.as_slice().to_vec(),
            misfit,
            history,
            misfits,
            iterations,
            status,
        })
    }
}

struct GnRun {
    p: Vec<f64>,
    misfit: f64,
    history: Vec<f64>,
    misfits: Vec<f64>,
    iterations: usize,
    status: ReconstructionStatus,
}

/// Minimizes `‖A(q) - data‖² + λ ‖L q‖²` over `q` supported in the declared
/// disk. `λ` is the largest of `λ_0 10^(-k/2)` whose misfit is within 1.1
/// times the noise level; each weight warm-starts from the previous one.
pub fn reconstruct_gauss_newton(
    data: &ResponseMatrix,
    basis: &SourceBasis,
    config: &InversionConfig,
    disc: &Discretization,
    q_true: Option<&Potential>,
) -> Result<ReconstructionResult> {
    config.validate()?;
    check_compatible(data, basis, disc)?;
    let param = Parametrization::new(disc, config.support_radius);
    if param.is_empty() {
        return Err(FracError::InvalidArgument("declared support holds no grid nodes".into()));
    }
    let problem = Problem {
        disc,
        gram: param.gradient_gram(disc),
        fields: basis.source_fields(disc),
        data: DVector::from_column_slice(data.entries.as_slice()),
        param,
    };
    let target = (config.noise_level > 0.0).then(|| 1.1 * config.noise_level * data.frobenius());
    let mut start = vec![0.0; problem.param.len()];
    let zero_misfit = problem.misfit(&start, false)?.0;
    let mut scan = Vec::new();
    let mut best: Option<(GnRun, Option<f64>)> = None;
    let mut met = false;
    if target.is_some_and(|t| zero_misfit <= t) {
        met = true;
        best = Some((
            GnRun {
                p: start.clone(),
                misfit: zero_misfit,
                history: vec![zero_misfit * zero_misfit],
                misfits: vec![zero_misfit],
                iterations: 0,
                status: ReconstructionStatus::Converged,
            },
            None,
        ));
    }
    for k in 0..config.lambda_steps {
        if met {
            break;
        }
        let lambda = config.regularization_weight * 10f64.powf(-(k as f64) / 2.0);
        let run = problem.solve(lambda, &start, config)?;
        scan.push(LambdaTrial {
            lambda,
            misfit: run.misfit,
            iterations: run.iterations,
        });
        start.clone_from(&run.p);
        let hit = target.is_some_and(|t| run.misfit <= t);
        let better = best.as_ref().is_none_or(|(b, _)| run.misfit < b.misfit);
        if hit || better {
            best = Some((run, Some(lambda)));
        }
        if hit {
            met = true;
            break;
        }
    }
    let (run, lambda) = best.expect("at least one weight was tried");
    let q = problem.param.potential(&run.p, disc)?;
    let relative_error = q_true.map(|qt| {
        let diff: Vec<f64> = q.values.iter().zip(&qt.values).map(|(a, b)| a - b).collect();
        disc.interior.l2_norm(&diff) / disc.interior.l2_norm(&qt.values)
    });
    Ok(ReconstructionResult {
        q_values: q.values.clone(),
        q_estimate: Some(q),
        residual_history: run.history,
        misfit_history: run.misfits,
        relative_error,
        lambda,
        iterations: run.iterations,
        status: run.status,
        discrepancy_target: target,
        discrepancy_met: met,
        scan,
        config: *config,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    /// `‖A₁ - A₂‖_F / ‖A₁‖_F` on `Σ`.
    pub separation: f64,
    /// Largest trace deviation for each source.
    pub per_source_max_deviation: Vec<f64>,
    pub q1_hash: String,
    pub q2_hash: String,
}

pub fn distinguishability_test(q1: &Potential, q2: &Potential, basis: &SourceBasis, disc: &Discretization) -> Result<SeparationReport> {
    let fields = basis.source_fields(disc);
    let a1 = forward_traces(q1, &fields, disc, false)?.traces;
    let a2 = forward_traces(q2, &fields, disc, false)?.traces;
    let nr = sigma_rows(disc).len();
    let diff = &a1 - &a2;
    let norm1 = a1.norm();
    Ok(SeparationReport {
        separation: if norm1 > 0.0 { diff.norm() / norm1 } else { diff.norm() },
        per_source_max_deviation: (0..basis.len())
            .map(|j| diff.rows(j * nr, nr).amax())
            .collect(),
        q1_hash: potential_hash(q1),
        q2_hash: potential_hash(q2),
    })
}
