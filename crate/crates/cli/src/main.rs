use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pharm_cli::{
    list_registries, replay, run, write_outcome, BatteryFilter, CliError, ExperimentConfig,
    SolveMode,
};
use pharm_core::energy::EnergyParams;
use pharm_core::metric::MetricField;
use pharm_core::profiles::BoundaryFamily;
use pharm_core::region::BallRegion;
use pharm_core::solver::{pharmonic_extension, solve_dirichlet, DirichletProblem, SolverOptions};

#[derive(Parser)]
#[command(
    name = "pharm",
    about = "Weighted p-energy solves and regularity measurements on the unit disk",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mesh refinement level override.
    #[arg(long)]
    mesh_level: Option<u32>,
    /// Force deterministic artifact mode (on by default; recorded in the
    /// report).
    #[arg(long)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and dump mesh/field artifacts.
    Solve(CommonArgs),
    /// Solve, then run a frozen-metric extension on one ball.
    Extend {
        #[command(flatten)]
        common: CommonArgs,
        /// Ball center as `x,y`.
        #[arg(long, value_parser = parse_point)]
        center: (f64, f64),
        #[arg(long)]
        radius: f64,
    },
    /// Run only the comparison checks from the battery.
    Compare(CommonArgs),
    /// Run only the decay checks (sharp averages, Morrey growth).
    Decay(CommonArgs),
    /// Run only the difference-quotient second-derivative checks.
    Hessian(CommonArgs),
    /// Solve the critical system configured by `rhs` and run the battery.
    Critical(CommonArgs),
    /// Run the full configured battery.
    Run(CommonArgs),
    /// Re-run a recorded report and byte-compare its CSV artifacts.
    Replay { report_dir: PathBuf },
    /// List metric, boundary-data and right-hand-side registries.
    List,
}

fn parse_point(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected x,y".into());
    }
    let x = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
    let y = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
    Ok((x, y))
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(&common.config)?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(level) = common.mesh_level {
        config.mesh_level = level;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.display().to_string();
    }
    if common.deterministic {
        config.deterministic = true;
    }
    Ok(config)
}

fn execute(common: &CommonArgs, filter: BatteryFilter, force_mode: Option<SolveMode>) -> Result<bool, CliError> {
    let mut config = load_config(common)?;
    if let Some(mode) = force_mode {
        config.solve = mode;
    }
    let outcome = run(&config, filter)?;
    let out_dir = PathBuf::from(&config.output_dir);
    write_outcome(&out_dir, &outcome)?;
    for check in &outcome.report.checks {
        println!(
            "{}: {} ({} ms)",
            check.name,
            if check.passed { "pass" } else { "FAIL" },
            check.wall_ms
        );
        if let Some(err) = &check.error {
            println!("  error: {err}");
        }
    }
    println!(
        "solve: converged={} iterations={} residual={:.3e} energy={:.6e}",
        outcome.report.solve.converged,
        outcome.report.solve.iterations,
        outcome.report.solve.residual_norm,
        outcome.report.solve.energy
    );
    println!("report: {}", out_dir.join("report.json").display());
    Ok(outcome.report.all_passed)
}

fn run_extend(common: &CommonArgs, center: (f64, f64), radius: f64) -> Result<bool, CliError> {
    let config = load_config(common)?;
    let mesh = pharm_core::mesh::DiskMesh::unit_disk(config.mesh_level)?;
    let metric = MetricField::from_spec(&config.metric)?;
    let boundary = BoundaryFamily::from_spec(&config.boundary)?;
    let params = EnergyParams::new(config.energy.p, config.energy.target_dim)?;
    let opts = SolverOptions {
        tolerance: config.solver.tolerance,
        max_iterations: config.solver.max_iterations,
        mu_init: config.solver.mu_init,
        mu_final: config.solver.mu_final,
        mu_factor: config.solver.mu_factor,
    };
    let problem = DirichletProblem {
        mesh: &mesh,
        metric: &metric,
        params,
        boundary_values: boundary.boundary_values(&mesh),
    };
    let solved = solve_dirichlet(&problem, &opts)?;
    let ball = BallRegion::new(&mesh, [center.0, center.1], radius)?;
    let g0 = metric.freeze(&[center.0, center.1])?;
    let ext = pharmonic_extension(&mesh, &solved.field, &ball, &g0, &params, &opts)?;
    let out_dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(
        out_dir.join("extension_field.csv"),
        ext.report.field.to_csv(&ext.sub.mesh),
    )?;
    println!(
        "extension: converged={} residual={:.3e} energy={:.6e} sub_elements={}",
        ext.report.converged,
        ext.report.residual_norm,
        ext.report.energy_value,
        ext.sub.mesh.triangle_count()
    );
    Ok(ext.report.converged)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<bool, CliError> = match &cli.command {
        Command::Solve(c) => execute(c, BatteryFilter::SolveOnly, None),
        Command::Extend {
            common,
            center,
            radius,
        } => run_extend(common, *center, *radius),
        Command::Compare(c) => execute(c, BatteryFilter::Comparison, None),
        Command::Decay(c) => execute(c, BatteryFilter::Decay, None),
        Command::Hessian(c) => execute(c, BatteryFilter::Hessian, None),
        Command::Critical(c) => execute(c, BatteryFilter::All, Some(SolveMode::Critical)),
        Command::Run(c) => execute(c, BatteryFilter::All, None),
        Command::Replay { report_dir } => replay(report_dir).map(|report| {
            println!("replay: artifacts identical ({} checks)", report.checks.len());
            true
        }),
        Command::List => {
            print!("{}", list_registries());
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
