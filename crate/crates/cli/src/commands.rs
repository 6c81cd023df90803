//! The six pipelines behind the subcommands.

use std::fs;
use std::path::Path;

use anyhow::Context;
use fraclab_core::error::FracError;
use fraclab_core::forward::{certify_with_oracle, default_probes, BoundaryDatum, Discretization, ForwardSolver, ProbeResidual};
use fraclab_core::geometry::{FractionalOrder, Point, SigmaArc};
use fraclab_core::identity::{
    boundary_ucp_probe, check_gov_identity, check_ibp_identity, check_local_characterization, converse_characterization,
    counterexample_constructor, default_potential, fourier_data, range_density_probe, IdentityCase, IdentityReport,
    REFINEMENT,
};
use fraclab_core::inverse::{reconstruct_gauss_newton, synthesize_data, ReconstructionResult};
use fraclab_core::kernels::{green_disk, r0};
use fraclab_core::response::{
    boundedness_constant, potential_hash, response_conditioning, solve_columns, ResponseMatrix, ResponseMeta,
    SourceBasis,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{grid_label, num, Csv, RunDir};
use crate::{plot, Failure};

/// Oracle tolerance of the forward certificate, relative to the local scale.
pub const ORACLE_TOLERANCE: f64 = 2e-2;

pub struct RunContext<'a> {
    pub config: &'a RunConfig,
    pub out: &'a RunDir,
    pub plot: bool,
}

fn numerical(e: FracError) -> Failure {
    match e {
        FracError::Incompatible(msg) => Failure::Config(format!("incompatible data: {msg}")),
        other => Failure::Numerical(other.to_string()),
    }
}

fn discretization(config: &RunConfig) -> Result<Discretization, Failure> {
    Discretization::new(config.order(), config.grid, config.sigma).map_err(numerical)
}

fn basis(config: &RunConfig, disc: &Discretization) -> Result<SourceBasis, Failure> {
    SourceBasis::on_mid_circle(&disc.patch, config.source.size, config.source.width).map_err(numerical)
}

#[derive(Serialize)]
struct ForwardReport {
    a: f64,
    grid: String,
    q_hash: String,
    sources: usize,
    solve_residuals: Vec<f64>,
    oracle_source: usize,
    oracle_probes: Vec<ProbeResidual>,
    oracle_max_relative: f64,
    oracle_tolerance: f64,
    certified: bool,
}

/// Exterior solves for every basis source; the first one is certified by
/// the p.v. oracle.
pub fn forward(ctx: &RunContext) -> Result<(), Failure> {
    let config = ctx.config;
    let disc = discretization(config)?;
    let q = config.potential_on(&disc.interior).map_err(numerical)?;
    let basis = basis(config, &disc)?;
    let solver = ForwardSolver::new(&disc, q.clone()).map_err(numerical)?;
    let sols = solve_columns(&solver, &basis.source_fields(&disc)).map_err(numerical)?;

    let mut header = vec!["x1".to_string(), "x2".into(), "weight".into(), "q".into()];
    header.extend((0..sols.len()).map(|j| format!("u_{j}")));
    let mut field = Csv::new(&header);
    for i in 0..disc.interior.len() {
        let x = disc.interior.nodes[i];
        let mut row = vec![x[0], x[1], disc.interior.weights[i], q.values[i]];
        row.extend(sols.iter().map(|s| s.interior_values[i]));
        field.numbers(&row);
    }
    ctx.out.csv("field.csv", field).map_err(Failure::io)?;

    let mut header = vec!["angle".to_string(), "in_sigma".into()];
    header.extend((0..sols.len()).map(|j| format!("trace_{j}")));
    let mut traces = Csv::new(&header);
    for b in 0..disc.boundary.len() {
        let mut row = vec![num(disc.boundary.angles[b]), (disc.boundary.sigma_mask[b] as u8).to_string()];
        row.extend(sols.iter().map(|s| num(s.trace_a[b])));
        traces.row(&row);
    }
    ctx.out.csv("traces.csv", traces).map_err(Failure::io)?;

    let probes = certify_with_oracle(
        &disc,
        &q,
        &sols[0],
        Some(std::slice::from_ref(&basis.bumps[0])),
        &default_probes(),
        config.verify.quad_level,
    )
    .map_err(numerical)?;
    let worst = probes.iter().map(|p| p.relative).fold(0.0, f64::max);
    let report = ForwardReport {
        a: config.a,
        grid: grid_label(config.grid.radial_count, config.grid.angular_count),
        q_hash: potential_hash(&q),
        sources: sols.len(),
        solve_residuals: sols.iter().map(|s| s.residual).collect(),
        oracle_source: 0,
        oracle_probes: probes,
        oracle_max_relative: worst,
        oracle_tolerance: ORACLE_TOLERANCE,
        certified: worst <= ORACLE_TOLERANCE,
    };
    ctx.out.json("forward.json", "forward", &report).map_err(Failure::io)?;
    if ctx.plot {
        let series: Vec<Vec<f64>> = sols.iter().map(|s| s.trace_a.clone()).collect();
        ctx.out
            .write("traces.svg", &plot::lines("boundary traces u/d^a", &disc.boundary.angles, &series, false))
            .map_err(Failure::io)?;
    }
    Ok(())
}

/// Sidecar of `response.csv`: everything `invert` needs besides the numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseSidecar {
    pub schema_version: u32,
    pub command: String,
    pub meta: ResponseMeta,
    pub noise_level: f64,
    pub seed: u64,
    pub inverse_crime: bool,
}

#[derive(Serialize)]
struct RespondSummary<'a> {
    meta: &'a ResponseMeta,
    noise_level: f64,
    seed: u64,
    inverse_crime: bool,
    singular_values: &'a [f64],
    rank_1e8: usize,
    rank_1e12: usize,
    decay_per_index: f64,
    condition: f64,
    boundedness_constant: f64,
    max_entry: f64,
}

pub fn respond(ctx: &RunContext) -> Result<(), Failure> {
    let config = ctx.config;
    let inv = &config.inversion;
    let disc = discretization(config)?;
    let basis = basis(config, &disc)?;
    let data = synthesize_data(
        &config.potential.bumps(),
        &basis,
        inv.noise_level,
        inv.seed,
        inv.inverse_crime,
        &disc,
    )
    .map_err(numerical)?;
    ctx.out.write("response.csv", &data.to_csv()).map_err(Failure::io)?;
    let sidecar = ResponseSidecar {
        schema_version: crate::output::SCHEMA_VERSION,
        command: "respond".into(),
        meta: data.meta.clone(),
        noise_level: inv.noise_level,
        seed: inv.seed,
        inverse_crime: inv.inverse_crime,
    };
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Failure::Numerical(e.to_string()))?;
    ctx.out.write("response.json", &(text + "\n")).map_err(Failure::io)?;

    let cond = response_conditioning(&data).map_err(numerical)?;
    let summary = RespondSummary {
        meta: &data.meta,
        noise_level: inv.noise_level,
        seed: inv.seed,
        inverse_crime: inv.inverse_crime,
        singular_values: &cond.singular_values,
        rank_1e8: cond.rank_1e8,
        rank_1e12: cond.rank_1e12,
        decay_per_index: cond.decay_per_index,
        condition: cond.condition,
        boundedness_constant: boundedness_constant(&disc),
        max_entry: data.entries.amax(),
    };
    ctx.out.json("respond_summary.json", "respond", &summary).map_err(Failure::io)?;
    if ctx.plot {
        let cols: Vec<Vec<f64>> = data.entries.column_iter().map(|c| c.iter().copied().collect()).collect();
        ctx.out
            .write("response.svg", &plot::lines("response columns on the arc", &data.meta.angles, &cols, false))
            .map_err(Failure::io)?;
        let idx: Vec<f64> = (0..cond.singular_values.len()).map(|k| k as f64).collect();
        ctx.out
            .write(
                "singular_values.svg",
                &plot::lines("singular values", &idx, &[cond.singular_values.clone()], true),
            )
            .map_err(Failure::io)?;
    }
    Ok(())
}

fn read_data_file(path: &Path) -> Result<String, Failure> {
    if !path.is_file() {
        return Err(Failure::Config(format!("missing data file: {}", path.display())));
    }
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::io)
}

#[derive(Serialize)]
struct InvertSummary<'a> {
    data_q_hash: &'a str,
    config_q_hash: String,
    truth_known: bool,
    #[serde(flatten)]
    result: &'a ReconstructionResult,
}

pub fn invert(ctx: &RunContext) -> Result<(), Failure> {
    let config = ctx.config;
    let dir = config.data_dir();
    let csv = read_data_file(&dir.join("response.csv"))?;
    let sidecar_text = read_data_file(&dir.join("response.json"))?;
    let sidecar: ResponseSidecar = serde_json::from_str(&sidecar_text)
        .map_err(|e| Failure::Config(format!("malformed response.json: {e}")))?;
    let data = ResponseMatrix::from_csv(&csv, sidecar.meta.clone()).map_err(|e| Failure::Config(format!("malformed response.csv: {e}")))?;
    let disc = discretization(config)?;
    let basis = SourceBasis::from_bumps(sidecar.meta.sources.clone(), &disc.patch).map_err(numerical)?;
    let q_config = config.potential_on(&disc.interior).map_err(numerical)?;
    let config_hash = potential_hash(&q_config);
    let truth_known = config_hash == sidecar.meta.q_hash;
    let mut inv = config.inversion;
    inv.noise_level = sidecar.noise_level;
    let result = reconstruct_gauss_newton(&data, &basis, &inv, &disc, truth_known.then_some(&q_config)).map_err(numerical)?;

    let mut est = Csv::new(&["x1", "x2", "weight", "q_estimate"]);
    for (i, x) in disc.interior.nodes.iter().enumerate() {
        est.numbers(&[x[0], x[1], disc.interior.weights[i], result.q_values[i]]);
    }
    ctx.out.csv("q_estimate.csv", est).map_err(Failure::io)?;
    let mut hist = Csv::new(&["iteration", "objective", "misfit"]);
    for (k, (o, m)) in result.residual_history.iter().zip(&result.misfit_history).enumerate() {
        hist.row(&[k.to_string(), num(*o), num(*m)]);
    }
    ctx.out.csv("history.csv", hist).map_err(Failure::io)?;
    let summary = InvertSummary {
        data_q_hash: &sidecar.meta.q_hash,
        config_q_hash: config_hash,
        truth_known,
        result: &result,
    };
    ctx.out.json("inversion.json", "invert", &summary).map_err(Failure::io)?;
    if ctx.plot {
        ctx.out
            .write("reconstruction.svg", &plot::heatmap("reconstructed q", &disc.interior.nodes, &result.q_values))
            .map_err(Failure::io)?;
    }
    if result.status == fraclab_core::inverse::ReconstructionStatus::LineSearchFailed {
        return Err(Failure::Numerical("line search could not decrease the objective".into()));
    }
    Ok(())
}

/// One row of the verification summary.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub grid: String,
    /// Upper bound on `residual`; `None` for checks judged otherwise.
    pub tolerance: Option<f64>,
    pub within_tolerance: bool,
    pub detail: serde_json::Value,
}

fn outcome(check: &str, lhs: f64, rhs: f64, residual: f64, grid: &str, tolerance: Option<f64>, detail: serde_json::Value) -> CheckOutcome {
    CheckOutcome {
        check: check.into(),
        lhs,
        rhs,
        residual,
        grid: grid.into(),
        tolerance,
        within_tolerance: tolerance.is_none_or(|t| residual <= t),
        detail,
    }
}

fn identity_outcome(r: &IdentityReport, grid: &str) -> CheckOutcome {
    let mut o = outcome(&r.check, r.lhs, r.rhs, r.relative_residual, grid, Some(2e-2), json!(r));
    o.within_tolerance &= r.decreases();
    o
}

fn run_check(name: &str, config: &RunConfig) -> fraclab_core::error::Result<CheckOutcome> {
    let order = config.order();
    let spec = config.grid;
    let grid = grid_label(spec.radial_count, spec.angular_count);
    let level = config.verify.quad_level;
    match name {
        "large-harmonic" => {
            let coarse = converse_characterization(order, |_| 1.0, level)?;
            let fine = converse_characterization(order, |_| 1.0, level + 1)?;
            let mut o = outcome(
                name,
                fine,
                0.0,
                fine,
                &format!("level {}", level + 1),
                Some(1e-2),
                json!({ "levels": [level, level + 1], "residuals": [coarse, fine] }),
            );
            o.within_tolerance &= fine <= coarse || fine <= 1e-10;
            Ok(o)
        }
        "ibp" => check_ibp_identity(&IdentityCase::ibp_default(order, spec)).map(|r| identity_outcome(&r, &grid)),
        "ibp-bump" => check_ibp_identity(&IdentityCase::ibp_default(order, spec).with_q(default_potential()))
            .map(|r| identity_outcome(&named(r, name), &grid)),
        "gov" => check_gov_identity(&IdentityCase::gov_default(order, spec)).map(|r| identity_outcome(&r, &grid)),
        "gov-bump" => check_gov_identity(&IdentityCase::gov_default(order, spec).with_q(default_potential()))
            .map(|r| identity_outcome(&named(r, name), &grid)),
        "local-characterization" => {
            // a Fourier mode on the whole circle, so the datum is not cut off by the arc
            let disc = Discretization::new(order, spec, SigmaArc::full())?;
            let g = BoundaryDatum::from_fn(&disc.boundary, f64::cos);
            let r = check_local_characterization(&disc, &g, Some(|x: Point| x[0]), level)?;
            let mut o = outcome(name, r.laplacian_residual, 0.0, r.laplacian_residual, &grid, Some(1e-6), json!(r));
            o.within_tolerance &= r.pv_residual <= 1e-2 && r.harmonic_mismatch <= 1e-6;
            Ok(o)
        }
        "converse" => {
            let r = converse_characterization(order, |x: Point| x[0] * x[0] - x[1] * x[1], level)?;
            Ok(outcome(name, r, 0.0, r, &format!("level {level}"), Some(1e-2), json!({ "pv_residual": r })))
        }
        "counterexample" => {
            let disc = Discretization::new(order, spec, config.sigma)?;
            let c = &config.counterexample;
            let ce = counterexample_constructor(&disc, c.omega_radius, c.degree, c.seed)?;
            let r = ce.report;
            let mut o = outcome(name, r.trace_sup, 0.0, r.ratio, &grid, Some(1e-3), json!(r));
            o.within_tolerance &= r.l2_norm > 0.0;
            Ok(o)
        }
        "boundary-ucp" => {
            let disc = Discretization::new(order, spec, config.sigma)?;
            let q = config.potential_on(&disc.interior)?;
            let r = boundary_ucp_probe(&disc, &q, config.sigma, &fourier_data(12))?;
            let mut o = outcome(name, r.min_singular_value, 0.0, r.min_singular_value, &grid, None, json!(r));
            o.within_tolerance = r.min_singular_value > 0.0;
            Ok(o)
        }
        "range-density" => {
            let disc = Discretization::new(order, spec, config.sigma)?;
            let q = config.potential_on(&disc.interior)?;
            let sizes = [2, 4, 8];
            let r = range_density_probe(&disc, &q, &sizes, config.source.width)?;
            let last = *r.ranks_1e8.last().unwrap_or(&0) as f64;
            let mut o = outcome(name, last, 8.0, 1.0 - last / 8.0, &grid, None, json!(r));
            o.within_tolerance = r.ranks_1e8.windows(2).all(|w| w[1] >= w[0]);
            Ok(o)
        }
        other => Err(FracError::InvalidArgument(format!("unknown check {other}"))),
    }
}

fn named(mut r: IdentityReport, name: &str) -> IdentityReport {
    r.check = name.to_string();
    r
}

pub fn verify(ctx: &RunContext) -> Result<(), Failure> {
    let config = ctx.config;
    let checks = config.verify.selected();
    // checks are independent; collecting keeps the report order fixed
    let results: Vec<(String, fraclab_core::error::Result<CheckOutcome>)> = checks
        .par_iter()
        .map(|&c| (c.to_string(), run_check(c, config)))
        .collect();
    let mut summary = Csv::new(&["check", "lhs", "rhs", "residual", "grid"]);
    let mut failures = Vec::new();
    let mut outcomes = Vec::new();
    for (name, res) in results {
        match res {
            Ok(o) => {
                summary.row(&[o.check.clone(), num(o.lhs), num(o.rhs), num(o.residual), o.grid.clone()]);
                ctx.out.json(&format!("verify/{name}.json"), "verify", &o).map_err(Failure::io)?;
                outcomes.push(o);
            }
            Err(e) => {
                summary.row(&[name.clone(), "NaN".into(), "NaN".into(), "NaN".into(), "failed".into()]);
                ctx.out
                    .json(&format!("verify/{name}.json"), "verify", &json!({ "check": name, "error": e.to_string() }))
                    .map_err(Failure::io)?;
                failures.push(format!("{name}: {e}"));
            }
        }
    }
    ctx.out.csv("verify_summary.csv", summary).map_err(Failure::io)?;
    let overview = json!({
        "checks": outcomes.iter().map(|o| json!({
            "check": o.check,
            "residual": o.residual,
            "tolerance": o.tolerance,
            "within_tolerance": o.within_tolerance,
        })).collect::<Vec<_>>(),
        "failures": failures,
        "refinement_factor": REFINEMENT,
    });
    ctx.out.json("verify.json", "verify", &overview).map_err(Failure::io)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(failures.join("; ")))
    }
}

pub fn counterexample(ctx: &RunContext) -> Result<(), Failure> {
    let config = ctx.config;
    let disc = discretization(config)?;
    let c = &config.counterexample;
    let ce = match counterexample_constructor(&disc, c.omega_radius, c.degree, c.seed) {
        Ok(ce) => ce,
        Err(e) => {
            ctx.out
                .json("counterexample.json", "counterexample", &json!({ "error": e.to_string() }))
                .map_err(Failure::io)?;
            return Err(numerical(e));
        }
    };
    let mut field = Csv::new(&["x1", "x2", "weight", "g", "v"]);
    for (i, x) in disc.interior.nodes.iter().enumerate() {
        field.numbers(&[x[0], x[1], disc.interior.weights[i], ce.g[i], ce.v[i]]);
    }
    ctx.out.csv("counterexample.csv", field).map_err(Failure::io)?;
    let mut trace = Csv::new(&["angle", "trace"]);
    for (t, v) in disc.boundary.angles.iter().zip(&ce.trace) {
        trace.numbers(&[*t, *v]);
    }
    ctx.out.csv("counterexample_trace.csv", trace).map_err(Failure::io)?;
    ctx.out
        .json("counterexample.json", "counterexample", &ce.report)
        .map_err(Failure::io)?;
    if ctx.plot {
        ctx.out
            .write("counterexample.svg", &plot::heatmap("v = G[g]", &disc.interior.nodes, &ce.v))
            .map_err(Failure::io)?;
    }
    Ok(())
}

/// Closed-form kernel `G` and `R₀` on every ordered pair of sampled nodes.
pub fn kernels(ctx: &RunContext) -> Result<(), Failure> {
    let config = ctx.config;
    let order: FractionalOrder = config.order();
    let (interior, _) = fraclab_core::geometry::build_disk_grids(
        fraclab_core::geometry::DiskGeometry::unit(),
        config.grid.radial_count,
        config.grid.angular_count,
        order,
    )
    .map_err(numerical)?;
    let n = interior.len();
    let count = config.kernels.points.min(n);
    let picks: Vec<Point> = (0..count).map(|k| interior.nodes[k * n / count]).collect();
    let geometry = interior.geometry;
    let mut table = Csv::new(&["x1", "x2", "z1", "z2", "G", "R0"]);
    for &x in &picks {
        for &z in &picks {
            if x == z {
                continue;
            }
            let g = green_disk(x, z, order, &geometry).map_err(numerical)?;
            let r = r0(x, z, &geometry).map_err(numerical)?;
            table.numbers(&[x[0], x[1], z[0], z[1], g, r]);
        }
    }
    ctx.out.csv("kernels.csv", table).map_err(Failure::io)?;
    Ok(())
}
