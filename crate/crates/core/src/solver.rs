//! Discrete minimizers of the weighted p-energy under Dirichlet data, the
//! constant-metric change of variables, frozen-metric extensions on
//! sub-regions, and the critical-system fixed-point iteration.
//!
//! The energy is degenerate at `∇v = 0` for `p > 2`, so minimization runs
//! a continuation in the regularization μ (geometric schedule, default
//! `1e-1 → 1e-8`). Each stage uses damped Newton steps with an Armijo line
//! search; when the Newton system is badly conditioned the stage falls
//! back to a lagged-weight (fixed-point) step and finally to plain
//! gradient descent, both of which are descent directions for this convex
//! functional. Every reduction is ordered, so solves are reproducible
//! across worker counts.

use rayon::prelude::*;

use crate::energy::{
    energy_value, first_variation_with_cache, residual_sup, test_norms, EnergyParams, MetricCache,
};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::mesh::{clip_submesh, DiskMesh, SubMesh};
use crate::metric::MetricField;
use crate::profiles::CriticalRhs;
use crate::region::BallRegion;
use crate::sparse::{pcg, CsrMatrix};

const MAX_TARGET_DIM: usize = 4;
const MIN_EXTENSION_INTERIOR: usize = 10;

/// The p-harmonic extension problem: minimize `E_g` over fields matching
/// the given values on the flagged boundary vertices.
#[derive(Debug, Clone)]
pub struct DirichletProblem<'a> {
    pub mesh: &'a DiskMesh,
    pub metric: &'a MetricField,
    pub params: EnergyParams,
    /// Values on boundary vertices in ascending vertex order, vertex-major.
    pub boundary_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative residual tolerance; the reported residual is normalized by
    /// the data scale `max(1, ‖∇v₀‖_∞)^(p−1)` of the initial extension.
    pub tolerance: f64,
    /// Inner iteration budget per continuation stage.
    pub max_iterations: usize,
    pub mu_init: f64,
    pub mu_final: f64,
    pub mu_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-8,
            max_iterations: 60,
            mu_init: 1e-1,
            mu_final: 1e-8,
            mu_factor: 0.1,
        }
    }
}

/// Outcome of a minimization. `residual_norm` is the scale-normalized weak
/// residual at `final_mu`; `energy_value` is always re-evaluated at μ = 0.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub field: VectorField,
    pub iterations: usize,
    pub final_mu: f64,
    pub residual_norm: f64,
    pub energy_value: f64,
    pub converged: bool,
    /// Residual normalization used (data scale to the power p−1).
    pub scale: f64,
    pub warnings: Vec<String>,
    /// Successive-distance ratios of the outer fixed-point loop
    /// (critical solves only).
    pub contractions: Vec<f64>,
}

/// Boundary values of `f` restricted to the flagged boundary vertices,
/// ascending vertex order.
pub fn boundary_trace(mesh: &DiskMesh, dim: usize, f: impl Fn([f64; 2]) -> Vec<f64>) -> Vec<f64> {
    let mut out = Vec::new();
    for v in mesh.boundary_vertices() {
        let val = f(mesh.vertex(v));
        assert_eq!(val.len(), dim);
        out.extend_from_slice(&val);
    }
    out
}

pub fn solve_dirichlet(problem: &DirichletProblem, opts: &SolverOptions) -> Result<SolveReport> {
    solve_inner(problem, opts, None, None)
}

/// Change of variables onto the flat metric: for constant SPD `g0`, the map
/// `w(x) = v(√g0⁻¹ x)` lives on the image mesh `√g0 · mesh` and has the
/// same energy for the flat metric. Nodal values transfer exactly; the
/// reported discrepancy is the relative energy mismatch actually measured.
#[derive(Debug, Clone)]
pub struct FlatTransform {
    pub mesh: DiskMesh,
    pub field: VectorField,
    pub energy_curved: f64,
    pub energy_flat: f64,
    pub resampling_error: f64,
}

pub fn flat_transform(
    mesh: &DiskMesh,
    v: &VectorField,
    g0: &MetricField,
    params: &EnergyParams,
) -> Result<FlatTransform> {
    if !g0.is_constant() {
        return Err(Error::ShapeMismatch(
            "flat_transform needs a constant metric".into(),
        ));
    }
    let s = g0.sample(&[0.0, 0.0])?;
    if !(s.sqrt_det > 0.0) {
        return Err(Error::MetricNotSPD("degenerate image domain".into()));
    }
    let a = &s.sqrt_g;
    let vertices: Vec<[f64; 2]> = mesh
        .vertices()
        .iter()
        .map(|p| {
            [
                a[(0, 0)] * p[0] + a[(0, 1)] * p[1],
                a[(1, 0)] * p[0] + a[(1, 1)] * p[1],
            ]
        })
        .collect();
    let image = DiskMesh::from_raw(vertices, mesh.triangles().to_vec(), mesh.refinement_level());
    let w = VectorField::from_values(&image, v.dim(), v.values().to_vec())?;
    let p0 = params.with_mu(0.0);
    let cache_curved = MetricCache::at_centroids(mesh, g0)?;
    let energy_curved = energy_value(mesh, v, &cache_curved, &p0);
    let cache_flat = MetricCache::flat(&image);
    let energy_flat = energy_value(&image, &w, &cache_flat, &p0);
    let resampling_error = if energy_curved.abs() > 0.0 {
        (energy_flat - energy_curved).abs() / energy_curved.abs()
    } else {
        (energy_flat - energy_curved).abs()
    };
    Ok(FlatTransform {
        mesh: image,
        field: w,
        energy_curved,
        energy_flat,
        resampling_error,
    })
}

/// Extension solve on the conforming core of a ball with frozen metric.
#[derive(Debug)]
pub struct ExtensionResult {
    pub sub: SubMesh,
    pub report: SolveReport,
}

/// Solve the Dirichlet problem for the constant metric `g0` on the
/// conforming sub-region of `region`, with boundary data the trace of `v`.
/// Traces are nodal values of the parent field, so the restriction of `v`
/// is an admissible competitor and `E_{g0}(w) ≤ E_{g0}(v|region)` holds
/// exactly at the discrete level.
pub fn pharmonic_extension(
    mesh: &DiskMesh,
    v: &VectorField,
    region: &BallRegion,
    g0: &MetricField,
    params: &EnergyParams,
    opts: &SolverOptions,
) -> Result<ExtensionResult> {
    let sub = clip_submesh(mesh, region.center, region.radius).map_err(|e| match e {
        Error::EmptyRegion => Error::RegionTooCoarse {
            interior: 0,
            needed: MIN_EXTENSION_INTERIOR,
        },
        other => other,
    })?;
    let interior = sub.mesh.vertex_count() - sub.mesh.boundary_vertices().len();
    if interior < MIN_EXTENSION_INTERIOR {
        return Err(Error::RegionTooCoarse {
            interior,
            needed: MIN_EXTENSION_INTERIOR,
        });
    }
    let dim = v.dim();
    let mut boundary_values = Vec::new();
    for sv in sub.mesh.boundary_vertices() {
        boundary_values.extend_from_slice(v.value(sub.vertex_map[sv]));
    }
    let mut init_values = Vec::with_capacity(sub.mesh.vertex_count() * dim);
    for sv in 0..sub.mesh.vertex_count() {
        init_values.extend_from_slice(v.value(sub.vertex_map[sv]));
    }
    let init = VectorField::from_values(&sub.mesh, dim, init_values)?;
    let problem = DirichletProblem {
        mesh: &sub.mesh,
        metric: g0,
        params: *params,
        boundary_values,
    };
    let report = solve_inner(&problem, opts, None, Some(&init))?;
    Ok(ExtensionResult { sub, report })
}

/// Fixed-point iteration for `∆_{g,n} u = f(u, ∇u)` at `p = n = 2`: each
/// outer step minimizes `E_g(v) − ∫ f(u_k, ∇u_k)·v dvol_g` with Dirichlet
/// data, until the `W^{1,2}` distance of successive iterates drops below
/// the tolerance. Divergence (three consecutive increasing distances)
/// returns the best iterate inside the error.
pub fn solve_critical(
    mesh: &DiskMesh,
    metric: &MetricField,
    rhs: &CriticalRhs,
    boundary_values: Vec<f64>,
    params: &EnergyParams,
    opts: &SolverOptions,
    max_outer: usize,
) -> Result<SolveReport> {
    if params.p != 2.0 {
        return Err(Error::UnsupportedExponentCombo { p: params.p, n: 2 });
    }
    let mut warnings = Vec::new();
    let osc = boundary_oscillation(&boundary_values, params.target_dim);
    if params.gamma * osc > 0.1 {
        warnings.push(format!(
            "small-data hypothesis strained: gamma*osc(boundary) = {:.3} > 0.1",
            params.gamma * osc
        ));
    }
    let problem = DirichletProblem {
        mesh,
        metric,
        params: *params,
        boundary_values,
    };
    let cache = MetricCache::at_centroids(mesh, metric)?;
    let mut report = solve_inner(&problem, opts, None, None)?;
    let mut total_iterations = report.iterations;
    let mut contractions = Vec::new();
    let scale = 1.0 + w12_norm(mesh, &report.field);
    let mut prev_distance = f64::INFINITY;
    let mut increases = 0;
    let mut converged = false;
    for _outer in 0..max_outer {
        let load = assemble_critical_load(mesh, &report.field, &cache, rhs);
        let next = solve_inner(&problem, opts, Some(&load), Some(&report.field))?;
        total_iterations += next.iterations;
        let diff = next.field.axpy(mesh, 1.0, -1.0, &report.field)?;
        let d = w12_norm(mesh, &diff);
        if prev_distance.is_finite() && prev_distance > 0.0 {
            contractions.push(d / prev_distance);
        }
        let best_is_prev = d > prev_distance;
        if best_is_prev {
            increases += 1;
        } else {
            increases = 0;
        }
        report = next;
        if d <= opts.tolerance * scale {
            converged = true;
            break;
        }
        if increases >= 3 {
            report.iterations = total_iterations;
            report.converged = false;
            report.warnings = warnings;
            report.contractions = contractions;
            return Err(Error::SolveDiverged(Box::new(report)));
        }
        prev_distance = d;
    }
    report.iterations = total_iterations;
    report.converged = converged && report.converged;
    report.warnings.extend(warnings);
    report.contractions = contractions;
    if !report.converged {
        return Err(Error::SolveDiverged(Box::new(report)));
    }
    Ok(report)
}

/// Flat `W^{1,2}` norm via centroid quadrature.
pub fn w12_norm(mesh: &DiskMesh, f: &VectorField) -> f64 {
    let dim = f.dim();
    let total: f64 = (0..mesh.triangle_count())
        .map(|t| {
            let tri = mesh.triangle(t);
            let mut val2 = 0.0;
            for j in 0..dim {
                let c = (f.value(tri[0])[j] + f.value(tri[1])[j] + f.value(tri[2])[j]) / 3.0;
                val2 += c * c;
            }
            let g = f.grad(t);
            let grad2: f64 = g.iter().map(|x| x * x).sum();
            mesh.area(t) * (val2 + grad2)
        })
        .sum();
    total.sqrt()
}

fn boundary_oscillation(boundary_values: &[f64], dim: usize) -> f64 {
    let k = boundary_values.len() / dim.max(1);
    let mut osc2 = 0.0_f64;
    for a in 0..k {
        for b in (a + 1)..k {
            let mut d2 = 0.0;
            for j in 0..dim {
                let d = boundary_values[a * dim + j] - boundary_values[b * dim + j];
                d2 += d * d;
            }
            osc2 = osc2.max(d2);
        }
    }
    osc2.sqrt()
}

/// Load vector `b_i = ∫ f(u, ∇u) φ_i dvol_g` with `f` frozen at the
/// current iterate, centroid quadrature.
fn assemble_critical_load(
    mesh: &DiskMesh,
    u: &VectorField,
    cache: &MetricCache,
    rhs: &CriticalRhs,
) -> Vec<f64> {
    let dim = u.dim();
    let per_elem: Vec<Vec<f64>> = (0..mesh.triangle_count())
        .into_par_iter()
        .map(|t| {
            let tri = mesh.triangle(t);
            let mut u_c = vec![0.0; dim];
            for &vert in &tri {
                let val = u.value(vert);
                for j in 0..dim {
                    u_c[j] += val[j] / 3.0;
                }
            }
            let grad_norm_sq = cache.grad_norm_sq(t, u.grad(t), dim);
            rhs.eval(&u_c, grad_norm_sq)
        })
        .collect();
    let mut load = vec![0.0; mesh.vertex_count() * dim];
    for (t, f_t) in per_elem.iter().enumerate() {
        let w = mesh.area(t) * cache.sqrt_det[t] / 3.0;
        let tri = mesh.triangle(t);
        for &vert in &tri {
            for j in 0..dim {
                load[vert * dim + j] += w * f_t[j];
            }
        }
    }
    load
}

// ---------------------------------------------------------------------------
// Core minimization
// ---------------------------------------------------------------------------

struct Dofs {
    /// Interior dof index per vertex (None on the boundary).
    of_vertex: Vec<Option<usize>>,
    count: usize,
}

fn interior_dofs(mesh: &DiskMesh) -> Dofs {
    let mut of_vertex = vec![None; mesh.vertex_count()];
    let mut count = 0;
    for v in 0..mesh.vertex_count() {
        if !mesh.is_boundary(v) {
            of_vertex[v] = Some(count);
            count += 1;
        }
    }
    Dofs { of_vertex, count }
}

fn build_pattern(mesh: &DiskMesh, dofs: &Dofs, dim: usize) -> CsrMatrix {
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); dofs.count];
    for t in 0..mesh.triangle_count() {
        let tri = mesh.triangle(t);
        for &a in &tri {
            if let Some(da) = dofs.of_vertex[a] {
                for &b in &tri {
                    if let Some(db) = dofs.of_vertex[b] {
                        neighbors[da].push(db);
                    }
                }
            }
        }
    }
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); dofs.count * dim];
    for (da, nbrs) in neighbors.iter().enumerate() {
        let mut sorted = nbrs.clone();
        sorted.sort_unstable();
        sorted.dedup();
        for j in 0..dim {
            let row = da * dim + j;
            for &db in &sorted {
                for jp in 0..dim {
                    cols[row].push(db * dim + jp);
                }
            }
        }
    }
    CsrMatrix::from_pattern(cols)
}

/// Assemble the interior-dof system matrix: the Newton Hessian of the
/// regularized energy, or the lagged-weight (fixed-point) matrix when
/// `rank_one` is off.
fn assemble_matrix(
    mesh: &DiskMesh,
    v: &VectorField,
    cache: &MetricCache,
    params: &EnergyParams,
    dofs: &Dofs,
    matrix: &mut CsrMatrix,
    rank_one: bool,
) {
    let dim = v.dim();
    let p = params.p;
    let mu2 = params.mu * params.mu;
    matrix.zero_values();
    let locals: Vec<[f64; 144]> = (0..mesh.triangle_count())
        .into_par_iter()
        .map(|t| {
            let grad = v.grad(t);
            let s = cache.grad_norm_sq(t, grad, dim) + mu2;
            let rho = mesh.area(t) * cache.sqrt_det[t];
            let [i00, i01, i11] = cache.inv[t];
            let bg = mesh.bary_grad(t);
            // 0^0 = 1 keeps the p = 2 weight alive on degenerate elements;
            // the rank-one weight needs the explicit guard because its
            // exponent is negative for p < 4.
            let w1 = p * s.powf(p / 2.0 - 1.0);
            let w2 = if rank_one && p != 2.0 && s > 0.0 {
                p * (p - 2.0) * s.powf(p / 2.0 - 2.0)
            } else {
                0.0
            };
            // q[k][j] = (g⁻¹ G)_j · ∇λ_k
            let mut q = [[0.0_f64; MAX_TARGET_DIM]; 3];
            for j in 0..dim {
                let gx = grad[j];
                let gy = grad[dim + j];
                let wx = i00 * gx + i01 * gy;
                let wy = i01 * gx + i11 * gy;
                for k in 0..3 {
                    q[k][j] = wx * bg[k][0] + wy * bg[k][1];
                }
            }
            // c[k][l] = ∇λ_k ᵀ g⁻¹ ∇λ_l
            let mut c = [[0.0_f64; 3]; 3];
            for k in 0..3 {
                for l in 0..3 {
                    c[k][l] = i00 * bg[k][0] * bg[l][0]
                        + i01 * (bg[k][0] * bg[l][1] + bg[k][1] * bg[l][0])
                        + i11 * bg[k][1] * bg[l][1];
                }
            }
            let mut local = [0.0_f64; 144];
            let stride = 3 * dim;
            for k in 0..3 {
                for j in 0..dim {
                    for l in 0..3 {
                        for jp in 0..dim {
                            let mut h = w2 * q[k][j] * q[l][jp];
                            if j == jp {
                                h += w1 * c[k][l];
                            }
                            local[(k * dim + j) * stride + l * dim + jp] = rho * h;
                        }
                    }
                }
            }
            local
        })
        .collect();
    let stride = 3 * dim;
    for (t, local) in locals.iter().enumerate() {
        let tri = mesh.triangle(t);
        for k in 0..3 {
            let Some(da) = dofs.of_vertex[tri[k]] else {
                continue;
            };
            for l in 0..3 {
                let Some(db) = dofs.of_vertex[tri[l]] else {
                    continue;
                };
                for j in 0..dim {
                    for jp in 0..dim {
                        let h = local[(k * dim + j) * stride + l * dim + jp];
                        if h != 0.0 {
                            matrix.add(da * dim + j, db * dim + jp, h);
                        }
                    }
                }
            }
        }
    }
}

struct Objective<'a> {
    mesh: &'a DiskMesh,
    cache: &'a MetricCache,
    load: Option<&'a [f64]>,
}

impl<'a> Objective<'a> {
    fn value(&self, v: &VectorField, params: &EnergyParams) -> f64 {
        let mut e = energy_value(self.mesh, v, self.cache, params);
        if let Some(b) = self.load {
            e -= b
                .iter()
                .zip(v.values().iter())
                .map(|(x, y)| x * y)
                .sum::<f64>();
        }
        e
    }

    fn gradient(&self, v: &VectorField, params: &EnergyParams) -> Vec<f64> {
        let mut g = first_variation_with_cache(self.mesh, v, self.cache, params);
        if let Some(b) = self.load {
            for (gi, bi) in g.iter_mut().zip(b.iter()) {
                *gi -= bi;
            }
        }
        g
    }
}

fn apply_step(
    mesh: &DiskMesh,
    v: &VectorField,
    dofs: &Dofs,
    dim: usize,
    dir: &[f64],
    t: f64,
) -> VectorField {
    let mut values = v.values().to_vec();
    for (vert, dof) in dofs.of_vertex.iter().enumerate() {
        if let Some(d) = dof {
            for j in 0..dim {
                values[vert * dim + j] += t * dir[d * dim + j];
            }
        }
    }
    VectorField::from_values(mesh, dim, values).expect("step preserves shape")
}

fn interior_restrict(g: &[f64], dofs: &Dofs, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dofs.count * dim];
    for (vert, dof) in dofs.of_vertex.iter().enumerate() {
        if let Some(d) = dof {
            for j in 0..dim {
                out[d * dim + j] = g[vert * dim + j];
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Armijo backtracking; returns the accepted iterate and step size.
fn line_search(
    obj: &Objective,
    params: &EnergyParams,
    mesh: &DiskMesh,
    dofs: &Dofs,
    dim: usize,
    v: &VectorField,
    f0: f64,
    g_interior: &[f64],
    dir: &[f64],
) -> Option<(VectorField, f64, f64)> {
    let slope = dot(g_interior, dir);
    if !(slope < 0.0) {
        return None;
    }
    let mut t = 1.0;
    for _ in 0..50 {
        let candidate = apply_step(mesh, v, dofs, dim, dir, t);
        let f = obj.value(&candidate, params);
        if f <= f0 + 1e-4 * t * slope {
            return Some((candidate, f, t));
        }
        t *= 0.5;
    }
    None
}

fn solve_inner(
    problem: &DirichletProblem,
    opts: &SolverOptions,
    load: Option<&[f64]>,
    initial: Option<&VectorField>,
) -> Result<SolveReport> {
    let mesh = problem.mesh;
    let params = problem.params;
    let dim = params.target_dim;
    if dim > MAX_TARGET_DIM {
        return Err(Error::ShapeMismatch(format!(
            "target dimension {dim} exceeds supported maximum {MAX_TARGET_DIM}"
        )));
    }
    if params.p < 2.0 {
        return Err(Error::UnsupportedExponentCombo { p: params.p, n: 2 });
    }
    let boundary = mesh.boundary_vertices();
    if problem.boundary_values.len() != boundary.len() * dim {
        return Err(Error::ShapeMismatch(format!(
            "expected {} boundary values, got {}",
            boundary.len() * dim,
            problem.boundary_values.len()
        )));
    }
    if let Some(b) = load {
        if b.len() != mesh.vertex_count() * dim {
            return Err(Error::ShapeMismatch("load vector shape".into()));
        }
    }
    let cache = MetricCache::at_centroids(mesh, problem.metric)?;
    let dofs = interior_dofs(mesh);
    let norms = test_norms(mesh, params.p);
    let mut matrix = build_pattern(mesh, &dofs, dim);
    let obj = Objective { mesh, cache: &cache, load };
    let cg_max = (20 * (dofs.count * dim).max(50)).min(20_000);

    // Initial iterate: boundary lift plus one quadratic (p = 2) solve,
    // i.e. the discrete harmonic extension for the same metric. A caller
    // supplied iterate (already matching the boundary data) wins.
    let mut v = match initial {
        Some(f) => {
            if f.dim() != dim || f.values().len() != mesh.vertex_count() * dim {
                return Err(Error::ShapeMismatch("initial field shape".into()));
            }
            f.clone()
        }
        None => {
            let mut values = vec![0.0; mesh.vertex_count() * dim];
            for (k, &bv) in boundary.iter().enumerate() {
                for j in 0..dim {
                    values[bv * dim + j] = problem.boundary_values[k * dim + j];
                }
            }
            let lift = VectorField::from_values(mesh, dim, values)?;
            let quad = EnergyParams::new(2.0, dim)?.with_mu(0.0);
            let g2 = obj.gradient(&lift, &quad);
            let g2_i = interior_restrict(&g2, &dofs, dim);
            assemble_matrix(mesh, &lift, &cache, &quad, &dofs, &mut matrix, false);
            let neg: Vec<f64> = g2_i.iter().map(|x| -x).collect();
            let out = pcg(&matrix, &neg, 1e-12, cg_max);
            apply_step(mesh, &lift, &dofs, dim, &out.solution, 1.0)
        }
    };
    // Enforce the boundary data exactly on the working iterate.
    {
        let mut values = v.values().to_vec();
        for (k, &bv) in boundary.iter().enumerate() {
            for j in 0..dim {
                values[bv * dim + j] = problem.boundary_values[k * dim + j];
            }
        }
        v = VectorField::from_values(mesh, dim, values)?;
    }

    let grad_inf = (0..mesh.triangle_count())
        .map(|t| v.grad(t).iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let scale = grad_inf.max(1.0).powf(params.p - 1.0);
    let energy_init = energy_value(mesh, &v, &cache, &params.with_mu(0.0));

    let mut warnings = Vec::new();
    let mut iterations = 0usize;
    let mut converged = true;
    let mut final_mu = opts.mu_final;

    // Continuation schedule; p = 2 needs no regularization at all.
    let schedule: Vec<f64> = if params.p == 2.0 {
        vec![0.0]
    } else {
        let mut s = Vec::new();
        let mut mu = opts.mu_init;
        while mu > opts.mu_final * (1.0 + 1e-12) {
            s.push(mu);
            mu *= opts.mu_factor;
        }
        s.push(opts.mu_final);
        s
    };

    for (si, &mu) in schedule.iter().enumerate() {
        let stage = params.with_mu(mu);
        let last = si + 1 == schedule.len();
        let stage_tol = if last {
            opts.tolerance
        } else {
            (opts.tolerance * 100.0).min(1e-4).max(opts.tolerance)
        } * scale;
        let mut stage_ok = false;
        for _ in 0..opts.max_iterations {
            let g = obj.gradient(&v, &stage);
            let res = residual_sup(mesh, &g, &norms, dim);
            if res <= stage_tol {
                stage_ok = true;
                break;
            }
            iterations += 1;
            let g_i = interior_restrict(&g, &dofs, dim);
            let f0 = obj.value(&v, &stage);
            let neg: Vec<f64> = g_i.iter().map(|x| -x).collect();

            // Newton direction.
            assemble_matrix(mesh, &v, &cache, &stage, &dofs, &mut matrix, true);
            let newton = pcg(&matrix, &neg, 1e-8, cg_max);
            let mut accepted = false;
            if newton.converged || newton.iterations > 0 {
                if let Some((next, _f, _t)) =
                    line_search(&obj, &stage, mesh, &dofs, dim, &v, f0, &g_i, &newton.solution)
                {
                    v = next;
                    accepted = true;
                }
            }
            if !accepted {
                // Lagged-weight fallback.
                assemble_matrix(mesh, &v, &cache, &stage, &dofs, &mut matrix, false);
                let lagged = pcg(&matrix, &neg, 1e-8, cg_max);
                if let Some((next, _f, _t)) =
                    line_search(&obj, &stage, mesh, &dofs, dim, &v, f0, &g_i, &lagged.solution)
                {
                    v = next;
                    accepted = true;
                }
            }
            if !accepted {
                // Plain descent as a last resort.
                if let Some((next, _f, _t)) =
                    line_search(&obj, &stage, mesh, &dofs, dim, &v, f0, &g_i, &neg)
                {
                    v = next;
                } else {
                    break;
                }
            }
        }
        if !stage_ok {
            let g = obj.gradient(&v, &stage);
            let res = residual_sup(mesh, &g, &norms, dim);
            if res <= stage_tol {
                stage_ok = true;
            }
        }
        if !stage_ok && last {
            converged = false;
        }
        if last {
            final_mu = mu;
        }
    }

    let p0 = params.with_mu(0.0);
    let energy_final = energy_value(mesh, &v, &cache, &p0);
    let slack = 1e-6 * energy_init.abs().max(1.0) + params.p * opts.mu_init * opts.mu_init;
    if energy_final > energy_init + slack {
        warnings.push(format!(
            "energy {energy_final:.6e} exceeds the quadratic-extension competitor {energy_init:.6e}"
        ));
    }

    let g_final = obj.gradient(&v, &params.with_mu(final_mu));
    let residual_norm = residual_sup(mesh, &g_final, &norms, dim) / scale;
    let report = SolveReport {
        field: v,
        iterations,
        final_mu,
        residual_norm,
        energy_value: energy_final,
        converged: converged && residual_norm <= opts.tolerance * (1.0 + 1e-12),
        scale,
        warnings,
        contractions: Vec::new(),
    };
    if !report.converged {
        return Err(Error::SolveDiverged(Box::new(report)));
    }
    Ok(report)
}
