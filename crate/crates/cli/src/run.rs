//! Experiment execution: build mesh and metric, solve, run the selected
//! measurement battery, and emit deterministic CSV artifacts plus a JSON
//! report.
//!
//! All artifact bytes are independent of the worker count; timings live
//! only in the report and are never compared.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{CheckSpec, ExperimentConfig, SolveMode};
use crate::error::{CliError, CliResult};
use pharm_core::energy::EnergyParams;
use pharm_core::field::VectorField;
use pharm_core::harness::{
    campanato_sequence, comparison_csv, comparison_scan, decay_csv, hessian_csv,
    hessian_quotient, hole_filling_csv, hole_filling_scan, holder_csv, holder_exponent,
    morrey_csv, morrey_decay, ComparisonMode, OscSource,
};
use pharm_core::hull::convex_hull_check;
use pharm_core::io::{content_hash_hex, csv_table};
use pharm_core::mesh::DiskMesh;
use pharm_core::metric::MetricField;
use pharm_core::profiles::{BoundaryFamily, CriticalRhs, RhsSpec};
use pharm_core::region::{dyadic_hierarchy, BallRegion};
use pharm_core::solver::{
    solve_critical, solve_dirichlet, w12_norm, DirichletProblem, SolveReport, SolverOptions,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub converged: bool,
    pub iterations: usize,
    pub residual_norm: f64,
    pub energy: f64,
    pub final_mu: f64,
    pub warnings: Vec<String>,
    pub contractions: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub index: usize,
    pub name: String,
    pub passed: bool,
    pub measured: serde_json::Value,
    pub thresholds: serde_json::Value,
    pub wall_ms: u128,
    pub artifact: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub mesh_level: u32,
    pub mesh_hash: String,
    pub solve: SolveSummary,
    pub checks: Vec<CheckOutcome>,
    pub all_passed: bool,
    pub wall_ms_total: u128,
}

/// A finished run: the report plus every artifact as (relative path,
/// bytes), ready to be written or byte-compared.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub artifacts: Vec<(String, String)>,
    pub field: VectorField,
}

/// Which battery entries to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatteryFilter {
    All,
    SolveOnly,
    Comparison,
    Decay,
    Hessian,
}

impl BatteryFilter {
    fn admits(&self, check: &CheckSpec) -> bool {
        match self {
            BatteryFilter::All => true,
            BatteryFilter::SolveOnly => false,
            BatteryFilter::Comparison => matches!(check, CheckSpec::Comparison { .. }),
            BatteryFilter::Decay => {
                matches!(check, CheckSpec::Campanato { .. } | CheckSpec::Morrey { .. })
            }
            BatteryFilter::Hessian => matches!(check, CheckSpec::Hessian { .. }),
        }
    }
}

pub fn run(config: &ExperimentConfig, filter: BatteryFilter) -> CliResult<RunOutcome> {
    config.validate()?;
    let t_total = Instant::now();
    let mesh = DiskMesh::unit_disk(config.mesh_level)?;
    let metric = MetricField::from_spec(&config.metric)?;
    let boundary = boundary_family(config)?;
    if boundary.dim() != config.energy.target_dim {
        return Err(CliError::Config(format!(
            "boundary: family dimension {} does not match energy.target_dim {}",
            boundary.dim(),
            config.energy.target_dim
        )));
    }
    let params = EnergyParams::new(config.energy.p, config.energy.target_dim)?
        .with_gamma(config.energy.gamma);
    let opts = SolverOptions {
        tolerance: config.solver.tolerance,
        max_iterations: config.solver.max_iterations,
        mu_init: config.solver.mu_init,
        mu_final: config.solver.mu_final,
        mu_factor: config.solver.mu_factor,
    };
    let boundary_values = boundary.boundary_values(&mesh);

    let report = match config.solve {
        SolveMode::Dirichlet => {
            let problem = DirichletProblem {
                mesh: &mesh,
                metric: &metric,
                params,
                boundary_values: boundary_values.clone(),
            };
            solve_dirichlet(&problem, &opts)?
        }
        SolveMode::Critical => {
            let rhs = rhs_of(config)?;
            solve_critical(
                &mesh,
                &metric,
                &rhs,
                boundary_values.clone(),
                &params,
                &opts,
                config.solver.max_outer,
            )?
        }
    };

    let mut artifacts: Vec<(String, String)> = vec![
        ("config_echo.json".into(), config.canonical_json()),
        ("mesh_vertices.csv".into(), mesh.vertices_csv()),
        ("mesh_triangles.csv".into(), mesh.triangles_csv()),
        ("field.csv".into(), report.field.to_csv(&mesh)),
    ];

    let mut checks = Vec::new();
    for (index, spec) in config.battery.iter().enumerate() {
        if !filter.admits(spec) {
            continue;
        }
        let t = Instant::now();
        let outcome = run_check(
            index,
            spec,
            config,
            &mesh,
            &metric,
            &params,
            &opts,
            &report,
            &boundary_values,
        );
        let (mut outcome, artifact_body) = match outcome {
            Ok((o, a)) => (o, a),
            Err(e) => (
                CheckOutcome {
                    index,
                    name: spec.name().into(),
                    passed: false,
                    measured: json!({}),
                    thresholds: json!({}),
                    wall_ms: 0,
                    artifact: None,
                    error: Some(e.to_string()),
                },
                None,
            ),
        };
        outcome.wall_ms = t.elapsed().as_millis();
        if let Some(body) = artifact_body {
            let path = format!("checks/{index:02}_{}.csv", spec.name());
            outcome.artifact = Some(path.clone());
            // Tables with more than two columns get a plain two-column
            // companion for external plotting.
            if let Some(plot) = plot_projection(spec, &body) {
                artifacts.push((
                    format!("checks/{index:02}_{}_plot.csv", spec.name()),
                    plot,
                ));
            }
            artifacts.push((path, body));
        }
        checks.push(outcome);
    }

    let all_passed = checks.iter().all(|c| c.passed);
    let run_report = RunReport {
        config_hash: content_hash_hex(&config.canonical_json()),
        mesh_level: config.mesh_level,
        mesh_hash: mesh.content_hash(),
        solve: SolveSummary {
            converged: report.converged,
            iterations: report.iterations,
            residual_norm: report.residual_norm,
            energy: report.energy_value,
            final_mu: report.final_mu,
            warnings: report.warnings.clone(),
            contractions: report.contractions.clone(),
        },
        checks,
        all_passed,
        wall_ms_total: t_total.elapsed().as_millis(),
    };
    Ok(RunOutcome {
        report: run_report,
        artifacts,
        field: report.field,
    })
}

/// Two-column (x, y) projection of a multi-column record CSV.
fn plot_projection(spec: &CheckSpec, csv: &str) -> Option<String> {
    let (x_col, y_col) = match spec {
        CheckSpec::Comparison { .. } => ("radius", "ratio"),
        CheckSpec::Campanato { .. } => ("radius", "a_i"),
        CheckSpec::HoleFilling { .. } => ("radius", "theta"),
        _ => return None,
    };
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next()?.split(',').collect();
    let xi = header.iter().position(|&h| h == x_col)?;
    let yi = header.iter().position(|&h| h == y_col)?;
    let mut out = format!("{x_col},{y_col}\n");
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        out.push_str(&format!("{},{}\n", cells.get(xi)?, cells.get(yi)?));
    }
    Some(out)
}

fn boundary_family(config: &ExperimentConfig) -> CliResult<BoundaryFamily> {
    let mut fam = BoundaryFamily::from_spec(&config.boundary)?;
    // The config seed backs data families that did not pin their own.
    if let BoundaryFamily::RandomFourier { seed, .. } = &mut fam {
        if *seed == 0 {
            *seed = config.seed;
        }
    }
    Ok(fam)
}

fn rhs_of(config: &ExperimentConfig) -> CliResult<CriticalRhs> {
    let spec = config.rhs.clone().unwrap_or(RhsSpec {
        family: "zero".into(),
        gamma: 0.0,
        direction: vec![],
    });
    Ok(CriticalRhs::from_spec(&spec, config.energy.target_dim)?)
}

#[allow(clippy::too_many_arguments)]
fn run_check(
    index: usize,
    spec: &CheckSpec,
    config: &ExperimentConfig,
    mesh: &DiskMesh,
    metric: &MetricField,
    params: &EnergyParams,
    opts: &SolverOptions,
    solve: &SolveReport,
    boundary_values: &[f64],
) -> CliResult<(CheckOutcome, Option<String>)> {
    let name = spec.name().to_string();
    let field = &solve.field;
    match spec {
        CheckSpec::ConvexHull { tolerance_rel } => {
            let rep = convex_hull_check(mesh, field, boundary_values)?;
            let limit = tolerance_rel * rep.data_diameter.max(1e-12);
            let passed = rep.max_violation <= limit;
            let body = csv_table(
                &["max_violation", "data_diameter"],
                &[vec![
                    rep.max_violation.to_string(),
                    rep.data_diameter.to_string(),
                ]],
            );
            Ok((
                CheckOutcome {
                    index,
                    name,
                    passed,
                    measured: json!({
                        "max_violation": rep.max_violation,
                        "data_diameter": rep.data_diameter,
                    }),
                    thresholds: json!({ "tolerance_rel": tolerance_rel }),
                    wall_ms: 0,
                    artifact: None,
                    error: None,
                },
                Some(body),
            ))
        }
        CheckSpec::Campanato {
            center,
            r0,
            delta,
            count,
            min_exponent,
            max_exponent,
        } => {
            let hierarchy = dyadic_hierarchy(mesh, *center, *r0, *delta, *count)?;
            let table = campanato_sequence(mesh, field, &hierarchy, params)?;
            let (slope, residual, degenerate) = match &table.fit {
                Some(f) => (f.slope, f.residual, false),
                None => (f64::INFINITY, 0.0, true),
            };
            let passed = if let Some(me) = max_exponent {
                degenerate || slope <= *me
            } else {
                degenerate || slope >= *min_exponent
            };
            Ok((
                CheckOutcome {
                    index,
                    name,
                    passed,
                    measured: json!({
                        "a": table.a,
                        "radii": table.radii,
                        "exponent": if degenerate { json!("degenerate") } else { json!(slope) },
                        "fit_residual": residual,
                        "cap_m": table.cap_m,
                        "cap_ref": table.cap_ref,
                    }),
                    thresholds: json!({
                        "min_exponent": min_exponent,
                        "max_exponent": max_exponent,
                    }),
                    wall_ms: 0,
                    artifact: None,
                    error: None,
                },
                Some(decay_csv(&table)),
            ))
        }
        CheckSpec::Comparison {
            center,
            radii,
            beta,
            min_slope,
            max_residual,
        } => {
            let (records, fit) = comparison_scan(
                mesh,
                field,
                *center,
                radii,
                metric,
                params,
                &ComparisonMode::Holder(*beta),
                opts,
            )?;
            let passed = fit
                .as_ref()
                .map(|f| f.slope >= *min_slope && f.residual <= *max_residual)
                .unwrap_or(false);
            Ok((
                CheckOutcome {
                    index,
                    name,
                    passed,
                    measured: json!({
                        "ratios": records.iter().map(|r| r.ratio).collect::<Vec<_>>(),
                        "slope": fit.as_ref().map(|f| f.slope),
                        "fit_residual": fit.as_ref().map(|f| f.residual),
                    }),
                    thresholds: json!({
                        "min_slope": min_slope,
                        "max_residual": max_residual,
                        "beta": beta,
                    }),
                    wall_ms: 0,
                    artifact: None,
                    error: None,
                },
                Some(comparison_csv(&records)),
            ))
        }
        CheckSpec::Morrey {
            center,
            radii,
            min_slope,
            max_residual,
        } => {
            let table = morrey_decay(mesh, field, *center, radii, params, metric)?;
            let passed = table.degenerate
                || table
                    .fit
                    .as_ref()
                    .map(|f| f.slope >= *min_slope && f.residual <= *max_residual)
                    .unwrap_or(false);
            Ok((
                CheckOutcome {
                    index,
                    name,
                    passed,
                    measured: json!({
                        "values": table.values,
                        "slope": table.fit.as_ref().map(|f| f.slope),
                        "fit_residual": table.fit.as_ref().map(|f| f.residual),
                        "degenerate": table.degenerate,
                    }),
                    thresholds: json!({ "min_slope": min_slope, "max_residual": max_residual }),
                    wall_ms: 0,
                    artifact: None,
                    error: None,
                },
                Some(morrey_csv(&table)),
            ))
        }
        CheckSpec::Holder {
            center,
            scales,
            gradient,
            expected,
            tol,
        } => {
            let source = if *gradient {
                OscSource::Gradient(field)
            } else {
                OscSource::Nodal(field)
            };
            let fit = holder_exponent(mesh, source, *center, scales)?;
            let passed = if fit.degenerate {
                true
            } else if let Some(e) = expected {
                (fit.exponent - e).abs() <= *tol
            } else {
                fit.residual <= 0.5
            };
            Ok((
                CheckOutcome {
                    index,
                    name,
                    passed,
                    measured: json!({
                        "exponent": if fit.degenerate { json!("degenerate") } else { json!(fit.exponent) },
                        "residual": fit.residual,
                        "oscillations": fit.oscillations,
                    }),
                    thresholds: json!({ "expected": expected, "tol": tol }),
                    wall_ms: 0,
                    artifact: None,
                    error: None,
                },
                Some(holder_csv(&fit)),
            ))
        }
        CheckSpec::Hessian {
            center,
            radius,
            h_list,
            max_bound_ratio,
        } => {
            let ball = BallRegion::new(mesh, *center, *radius)?;
            let rec = hessian_quotient(mesh, field, metric, &ball, params, h_list)?;
            let cauchy = rec
                .quotient_integrals
                .windows(2)
                .map(|w| (w[1] - w[0]).abs())
                .collect::<Vec<_>>();
            let cauchy_ok = cauchy.windows(2).all(|w| w[1] <= w[0] + 1e-12);
            let ratio_ok = match max_bound_ratio {
                Some(r) => rec.extrapolated_limit <= r * rec.bound_factor,
                None => true,
            };
            let passed = rec.extrapolated_limit.is_finite() && cauchy_ok && ratio_ok;
            Ok((
                CheckOutcome {
                    index,
                    name,
                    passed,
                    measured: json!({
                        "quotient_integrals": rec.quotient_integrals,
                        "extrapolated": rec.extrapolated_limit,
                        "bound_factor": rec.bound_factor,
                        "grad_g_sup": rec.grad_g_sup,
                        "h_floor_warning": rec.h_floor_warning,
                    }),
                    thresholds: json!({ "max_bound_ratio": max_bound_ratio }),
                    wall_ms: 0,
                    artifact: None,
                    error: None,
                },
                Some(hessian_csv(&rec)),
            ))
        }
        CheckSpec::HoleFilling {
            centers,
            radii,
            max_theta,
        } => {
            let (records, mean_exp) = hole_filling_scan(mesh, field, centers, radii)?;
            let passed = records
                .iter()
                .all(|r| r.theta >= 0.0 && r.theta < *max_theta);
            Ok((
                CheckOutcome {
                    index,
                    name,
                    passed,
                    measured: json!({
                        "thetas": records.iter().map(|r| r.theta).collect::<Vec<_>>(),
                        "mean_implied_exponent": mean_exp,
                    }),
                    thresholds: json!({ "max_theta": max_theta }),
                    wall_ms: 0,
                    artifact: None,
                    error: None,
                },
                Some(hole_filling_csv(&records)),
            ))
        }
        CheckSpec::PicardConsistency { factor } => {
            // Solve both routes explicitly: the fixed-point iteration with
            // zero right-hand side must land on the plain minimizer, no
            // matter what the main solve of this run was.
            let dirichlet = solve_dirichlet(
                &DirichletProblem {
                    mesh,
                    metric,
                    params: *params,
                    boundary_values: boundary_values.to_vec(),
                },
                opts,
            )?;
            let critical = solve_critical(
                mesh,
                metric,
                &CriticalRhs::Zero,
                boundary_values.to_vec(),
                params,
                opts,
                config.solver.max_outer,
            )?;
            let diff = critical.field.axpy(mesh, 1.0, -1.0, &dirichlet.field)?;
            let distance = w12_norm(mesh, &diff);
            let limit = factor * opts.tolerance * critical.scale.max(1.0);
            let passed = distance <= limit;
            let body = csv_table(
                &["w12_distance", "limit"],
                &[vec![distance.to_string(), limit.to_string()]],
            );
            Ok((
                CheckOutcome {
                    index,
                    name,
                    passed,
                    measured: json!({ "w12_distance": distance }),
                    thresholds: json!({ "factor": factor, "limit": limit }),
                    wall_ms: 0,
                    artifact: None,
                    error: None,
                },
                Some(body),
            ))
        }
    }
}

/// Write the artifacts plus report.json under the output directory.
pub fn write_outcome(out_dir: &std::path::Path, outcome: &RunOutcome) -> CliResult<()> {
    std::fs::create_dir_all(out_dir.join("checks"))?;
    for (rel, body) in &outcome.artifacts {
        let path = out_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, body)?;
    }
    let report = serde_json::to_string_pretty(&outcome.report)
        .map_err(|e| CliError::Config(format!("report serialization: {e}")))?;
    std::fs::write(out_dir.join("report.json"), report)?;
    Ok(())
}

/// Re-run the config recorded next to a report and byte-compare every CSV
/// artifact; deterministic mode is forced on.
pub fn replay(report_dir: &std::path::Path) -> CliResult<RunReport> {
    let echo = std::fs::read_to_string(report_dir.join("config_echo.json"))?;
    let mut config = ExperimentConfig::from_json(&echo)?;
    config.deterministic = true;
    let outcome = run(&config, BatteryFilter::All)?;
    for (rel, fresh) in &outcome.artifacts {
        if !rel.ends_with(".csv") {
            continue;
        }
        let recorded = std::fs::read_to_string(report_dir.join(rel))?;
        if &recorded != fresh {
            let row = recorded
                .lines()
                .zip(fresh.lines())
                .position(|(a, b)| a != b)
                .unwrap_or_else(|| recorded.lines().count().min(fresh.lines().count()));
            return Err(CliError::NonReproducible {
                file: rel.clone(),
                row,
            });
        }
    }
    Ok(outcome.report)
}

/// Stable, sorted listing of every registry.
pub fn list_registries() -> String {
    let mut out = String::new();
    out.push_str("metric families:\n");
    for f in pharm_core::metric::metric_families() {
        out.push_str(&format!("  {f}\n"));
    }
    out.push_str("boundary families:\n");
    for f in pharm_core::profiles::boundary_families() {
        out.push_str(&format!("  {f}\n"));
    }
    out.push_str("critical rhs families:\n");
    for f in pharm_core::profiles::rhs_families() {
        out.push_str(&format!("  {f}\n"));
    }
    out
}
