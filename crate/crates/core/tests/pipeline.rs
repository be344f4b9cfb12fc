//! End-to-end pipeline through the public API: metric from JSON, solve,
//! then every measurement family on the same solution.

use pharm_core::energy::{weak_residual_norm, EnergyParams};
use pharm_core::field::VectorField;
use pharm_core::harness::{
    campanato_sequence, comparison_ratio, hole_filling_ratio, holder_exponent, morrey_decay,
    ComparisonMode, OscSource,
};
use pharm_core::hull::convex_hull_check;
use pharm_core::mesh::DiskMesh;
use pharm_core::metric::MetricField;
use pharm_core::region::{dyadic_hierarchy, BallRegion};
use pharm_core::solver::{boundary_trace, solve_dirichlet, DirichletProblem, SolverOptions};

#[test]
fn solve_then_measure_everything() {
    let mesh = DiskMesh::unit_disk(4).unwrap();
    let metric = MetricField::from_json(
        r#"{"kind":"closed_form","family":"conformal_sin","params":{"eps":0.1,"k":2.0}}"#,
    )
    .unwrap();
    let params = EnergyParams::new(2.0, 1).unwrap();
    let opts = SolverOptions::default();
    let boundary_values = boundary_trace(&mesh, 1, |p| vec![0.6 * p[0] + 0.2 * p[1] * p[1]]);
    let problem = DirichletProblem {
        mesh: &mesh,
        metric: &metric,
        params,
        boundary_values: boundary_values.clone(),
    };
    let rep = solve_dirichlet(&problem, &opts).unwrap();
    assert!(rep.converged);
    let residual = weak_residual_norm(&mesh, &rep.field, &metric, &params).unwrap();
    assert!(residual <= 2.0 * opts.tolerance * rep.scale);

    let hull = convex_hull_check(&mesh, &rep.field, &boundary_values).unwrap();
    assert!(hull.max_violation <= 1e-6 * hull.data_diameter);

    let hierarchy = dyadic_hierarchy(&mesh, [0.0, 0.0], 0.4, 0.5, 3).unwrap();
    let decay = campanato_sequence(&mesh, &rep.field, &hierarchy, &params).unwrap();
    assert_eq!(decay.a.len(), 3);
    for i in 0..3 {
        assert!(decay.a[i] <= 2.0 * decay.local_lp[i] + 1e-12);
    }

    let morrey = morrey_decay(
        &mesh,
        &rep.field,
        [0.0, 0.0],
        &[0.4, 0.2, 0.1],
        &params,
        &metric,
    )
    .unwrap();
    assert!(!morrey.degenerate);

    let ball = BallRegion::new(&mesh, [0.0, 0.0], 0.35).unwrap();
    let record = comparison_ratio(
        &mesh,
        &rep.field,
        &ball,
        &metric,
        &params,
        &ComparisonMode::Holder(0.99),
        &opts,
    )
    .unwrap();
    assert!(record.lhs >= 0.0 && record.rhs_factor > 0.0);
    assert!(record.metric_seminorm_rbeta > 0.0);

    let fit = holder_exponent(
        &mesh,
        OscSource::Nodal(&rep.field),
        [0.0, 0.0],
        &[0.4, 0.28, 0.2],
    )
    .unwrap();
    assert!(!fit.degenerate);

    let theta = hole_filling_ratio(&mesh, &rep.field, [0.0, 0.0], 0.4).unwrap();
    assert!((0.0..=1.0).contains(&theta));
}

#[test]
fn sampled_profile_round_trip_through_csv() {
    let mesh = DiskMesh::unit_disk(3).unwrap();
    let field = VectorField::sample(&mesh, 2, |p| vec![p[0], p[0] * p[1]]);
    let csv = field.to_csv(&mesh);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + mesh.vertex_count());
    assert_eq!(lines[0], "vertex_id,x,y,v_1,v_2");
    // Deterministic: identical dumps on repeated calls.
    assert_eq!(csv, field.to_csv(&mesh));
}
