//! Discrete weighted p-energy, its first variation and localized variants.
//!
//! Per element `T` with centroid `c` the regularized energy reads
//!
//! ```text
//! E_T = area(T) · √det g(c) · ( gᵅᵝ(c) ∂_α v · ∂_β v + μ² )^(p/2)
//! ```
//!
//! and the total is the ordered sum over elements. Centroid quadrature is
//! exact for P1 fields under a constant metric. `first_variation` is the
//! exact gradient of this discrete functional, so finite-difference checks
//! of the implementation close to machine precision.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::mesh::DiskMesh;
use crate::metric::MetricField;
use crate::region::BallRegion;

/// Exponent, target dimension and regularization of the energy. `gamma`
/// is the growth constant of the critical-system right-hand side and is
/// only read by the critical solver.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnergyParams {
    pub p: f64,
    pub target_dim: usize,
    pub mu: f64,
    pub gamma: f64,
}

impl EnergyParams {
    pub fn new(p: f64, target_dim: usize) -> Result<EnergyParams> {
        if p < 2.0 {
            return Err(Error::UnsupportedExponentCombo { p, n: 2 });
        }
        if target_dim == 0 {
            return Err(Error::ShapeMismatch("target dimension must be >= 1".into()));
        }
        Ok(EnergyParams {
            p,
            target_dim,
            mu: 0.0,
            gamma: 0.0,
        })
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

/// Total energy, per-element contributions and the weak residual of the
/// unregularized functional.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub total: f64,
    pub per_element: Vec<f64>,
    pub residual_norm: f64,
}

impl EnergyReport {
    /// JSON summary: `{total, residual_norm, p, mu, mesh_hash}`.
    pub fn to_json(&self, params: &EnergyParams, mesh: &DiskMesh) -> String {
        serde_json::json!({
            "total": self.total,
            "residual_norm": self.residual_norm,
            "p": params.p,
            "mu": params.mu,
            "mesh_hash": mesh.content_hash(),
        })
        .to_string()
    }
}

/// Inverse metric and volume factor frozen at element centroids. Built
/// once per (mesh, metric) pair and shared by energy evaluations, solves
/// and harness integrals.
#[derive(Debug, Clone)]
pub struct MetricCache {
    /// Symmetric inverse per element: `[i00, i01, i11]`.
    pub inv: Vec<[f64; 3]>,
    pub sqrt_det: Vec<f64>,
}

impl MetricCache {
    pub fn at_centroids(mesh: &DiskMesh, metric: &MetricField) -> Result<MetricCache> {
        if metric.dim() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "mesh is 2-dimensional, metric has dimension {}",
                metric.dim()
            )));
        }
        // `eval` carries the per-representation domain semantics: constant
        // fields are defined everywhere (transformed image meshes included),
        // position-dependent fields stay restricted to the unit ball.
        let samples: Vec<Result<([f64; 3], f64)>> = (0..mesh.triangle_count())
            .into_par_iter()
            .map(|t| {
                let c = mesh.centroid(t);
                let g = metric.eval(&[c[0], c[1]])?;
                let (g00, g01, g11) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
                let det = g00 * g11 - g01 * g01;
                if !(det > 0.0 && g00 > 0.0) {
                    return Err(Error::MetricNotSPD(format!(
                        "element {t}: det {det}, g00 {g00}"
                    )));
                }
                Ok(([g11 / det, -g01 / det, g00 / det], det.sqrt()))
            })
            .collect();
        let mut inv = Vec::with_capacity(samples.len());
        let mut sqrt_det = Vec::with_capacity(samples.len());
        for s in samples {
            let (i, d) = s?;
            inv.push(i);
            sqrt_det.push(d);
        }
        Ok(MetricCache { inv, sqrt_det })
    }

    pub fn flat(mesh: &DiskMesh) -> MetricCache {
        MetricCache {
            inv: vec![[1.0, 0.0, 1.0]; mesh.triangle_count()],
            sqrt_det: vec![1.0; mesh.triangle_count()],
        }
    }

    /// `|G|²_g = Σ_j G_jᵀ g⁻¹ G_j` for a `2 × dim` gradient block.
    pub fn grad_norm_sq(&self, t: usize, grad: &[f64], dim: usize) -> f64 {
        let [i00, i01, i11] = self.inv[t];
        let mut s = 0.0;
        for j in 0..dim {
            let gx = grad[j];
            let gy = grad[dim + j];
            s += i00 * gx * gx + 2.0 * i01 * gx * gy + i11 * gy * gy;
        }
        s
    }
}

fn check_shapes(mesh: &DiskMesh, v: &VectorField, params: &EnergyParams) -> Result<()> {
    if v.dim() != params.target_dim {
        return Err(Error::ShapeMismatch(format!(
            "field dimension {} vs params target_dim {}",
            v.dim(),
            params.target_dim
        )));
    }
    if v.values().len() != mesh.vertex_count() * v.dim() {
        return Err(Error::ShapeMismatch("field does not match mesh".into()));
    }
    Ok(())
}

/// Per-element energies for the cached metric.
pub fn energy_per_element(
    mesh: &DiskMesh,
    v: &VectorField,
    cache: &MetricCache,
    params: &EnergyParams,
) -> Vec<f64> {
    let dim = v.dim();
    let mu2 = params.mu * params.mu;
    (0..mesh.triangle_count())
        .into_par_iter()
        .map(|t| {
            let s = cache.grad_norm_sq(t, v.grad(t), dim) + mu2;
            mesh.area(t) * cache.sqrt_det[t] * s.powf(params.p / 2.0)
        })
        .collect()
}

/// Weighted p-energy of `v` for metric `g`, with the weak residual of the
/// unregularized functional attached.
pub fn energy(
    mesh: &DiskMesh,
    v: &VectorField,
    metric: &MetricField,
    params: &EnergyParams,
) -> Result<EnergyReport> {
    check_shapes(mesh, v, params)?;
    let cache = MetricCache::at_centroids(mesh, metric)?;
    Ok(energy_with_cache(mesh, v, &cache, params))
}

pub fn energy_with_cache(
    mesh: &DiskMesh,
    v: &VectorField,
    cache: &MetricCache,
    params: &EnergyParams,
) -> EnergyReport {
    let per_element = energy_per_element(mesh, v, cache, params);
    let total = per_element.iter().sum();
    let residual_norm = weak_residual_with_cache(mesh, v, cache, &params.with_mu(0.0));
    EnergyReport {
        total,
        per_element,
        residual_norm,
    }
}

/// Plain energy value (no residual pass), used in solver inner loops.
pub fn energy_value(
    mesh: &DiskMesh,
    v: &VectorField,
    cache: &MetricCache,
    params: &EnergyParams,
) -> f64 {
    energy_per_element(mesh, v, cache, params).iter().sum()
}

/// Exact gradient of the discrete regularized energy with respect to every
/// nodal value, vertex-major (`out[k*dim + j] = ∂E/∂v_k^j`).
pub fn first_variation(
    mesh: &DiskMesh,
    v: &VectorField,
    metric: &MetricField,
    params: &EnergyParams,
) -> Result<Vec<f64>> {
    check_shapes(mesh, v, params)?;
    let cache = MetricCache::at_centroids(mesh, metric)?;
    Ok(first_variation_with_cache(mesh, v, &cache, params))
}

pub fn first_variation_with_cache(
    mesh: &DiskMesh,
    v: &VectorField,
    cache: &MetricCache,
    params: &EnergyParams,
) -> Vec<f64> {
    let dim = v.dim();
    let mu2 = params.mu * params.mu;
    let p = params.p;
    // Per-element nodal contributions, then an ordered accumulation so the
    // result is independent of the worker count.
    let per_elem: Vec<[f64; 12]> = (0..mesh.triangle_count())
        .into_par_iter()
        .map(|t| {
            let grad = v.grad(t);
            let s = cache.grad_norm_sq(t, grad, dim) + mu2;
            let rho = mesh.area(t) * cache.sqrt_det[t];
            // 0^0 = 1 handles the p = 2 degenerate elements correctly.
            let factor = rho * p * s.powf(p / 2.0 - 1.0);
            let [i00, i01, i11] = cache.inv[t];
            let bg = mesh.bary_grad(t);
            let mut out = [0.0_f64; 12]; // 3 corners x up to 4 components
            for j in 0..dim {
                let gx = grad[j];
                let gy = grad[dim + j];
                // W_j = g⁻¹ G_j
                let wx = i00 * gx + i01 * gy;
                let wy = i01 * gx + i11 * gy;
                for k in 0..3 {
                    out[k * dim + j] = factor * (wx * bg[k][0] + wy * bg[k][1]);
                }
            }
            out
        })
        .collect();
    let mut grad_out = vec![0.0; mesh.vertex_count() * dim];
    for (t, contrib) in per_elem.iter().enumerate() {
        let tri = mesh.triangle(t);
        for (k, &vert) in tri.iter().enumerate() {
            for j in 0..dim {
                grad_out[vert * dim + j] += contrib[k * dim + j];
            }
        }
    }
    grad_out
}

/// Flat `L^p` norms of the hat-function gradients,
/// `‖∇φ_k‖_{L^p} = (Σ_{T∋k} area_T |∇λ_k|^p)^{1/p}`; used to normalize
/// weak residuals per test function.
pub fn test_norms(mesh: &DiskMesh, p: f64) -> Vec<f64> {
    let mut acc = vec![0.0; mesh.vertex_count()];
    for t in 0..mesh.triangle_count() {
        let tri = mesh.triangle(t);
        let bg = mesh.bary_grad(t);
        for (k, &vert) in tri.iter().enumerate() {
            let norm = bg[k][0].hypot(bg[k][1]);
            acc[vert] += mesh.area(t) * norm.powf(p);
        }
    }
    acc.iter().map(|a| a.powf(1.0 / p)).collect()
}

/// Max over interior hat functions of `|⟨δE(v), φ⟩| / ‖∇φ‖_{L^p}` at μ = 0.
/// Zero (to solver tolerance) iff `v` is a discrete solution of the
/// Dirichlet problem.
pub fn weak_residual_norm(
    mesh: &DiskMesh,
    v: &VectorField,
    metric: &MetricField,
    params: &EnergyParams,
) -> Result<f64> {
    check_shapes(mesh, v, params)?;
    let cache = MetricCache::at_centroids(mesh, metric)?;
    Ok(weak_residual_with_cache(mesh, v, &cache, &params.with_mu(0.0)))
}

/// Residual at the given `params.mu` (callers pick μ = 0 for the true
/// optimality measure).
pub fn weak_residual_with_cache(
    mesh: &DiskMesh,
    v: &VectorField,
    cache: &MetricCache,
    params: &EnergyParams,
) -> f64 {
    let grad = first_variation_with_cache(mesh, v, cache, params);
    let norms = test_norms(mesh, params.p);
    residual_sup(mesh, &grad, &norms, v.dim())
}

pub(crate) fn residual_sup(mesh: &DiskMesh, grad: &[f64], norms: &[f64], dim: usize) -> f64 {
    let mut sup = 0.0_f64;
    for k in 0..mesh.vertex_count() {
        if mesh.is_boundary(k) {
            continue;
        }
        for j in 0..dim {
            let r = grad[k * dim + j].abs() / norms[k];
            sup = sup.max(r);
        }
    }
    sup
}

/// Energy restricted to a ball region via element weights, at the given
/// `params.mu` (pass μ = 0 for the true localized energy).
pub fn localized_energy(
    mesh: &DiskMesh,
    v: &VectorField,
    metric: &MetricField,
    params: &EnergyParams,
    region: &BallRegion,
) -> Result<f64> {
    check_shapes(mesh, v, params)?;
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let cache = MetricCache::at_centroids(mesh, metric)?;
    Ok(localized_energy_with_cache(mesh, v, &cache, params, region))
}

pub fn localized_energy_with_cache(
    mesh: &DiskMesh,
    v: &VectorField,
    cache: &MetricCache,
    params: &EnergyParams,
    region: &BallRegion,
) -> f64 {
    let dim = v.dim();
    let mu2 = params.mu * params.mu;
    let mut total = 0.0;
    for &(t, w) in &region.weights {
        let s = cache.grad_norm_sq(t, v.grad(t), dim) + mu2;
        total += w * mesh.area(t) * cache.sqrt_det[t] * s.powf(params.p / 2.0);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::BallRegion;
    use nalgebra::DMatrix;

    fn flat() -> MetricField {
        MetricField::identity(2)
    }

    fn affine_field(mesh: &DiskMesh) -> VectorField {
        // A = I on N = n = 2: |∇v|² = 2.
        VectorField::sample(mesh, 2, |p| vec![p[0], p[1]])
    }

    #[test]
    fn constant_field_zero_energy() {
        let mesh = DiskMesh::unit_disk(3).unwrap();
        let v = VectorField::constant(&mesh, &[1.0, -2.0]);
        let params = EnergyParams::new(3.0, 2).unwrap();
        let rep = energy(&mesh, &v, &flat(), &params).unwrap();
        assert_eq!(rep.total, 0.0);
        assert!(rep.per_element.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn affine_energy_closed_form() {
        let mesh = DiskMesh::unit_disk(4).unwrap();
        let v = affine_field(&mesh);
        for p in [2.0, 3.0, 4.0] {
            let params = EnergyParams::new(p, 2).unwrap();
            let rep = energy(&mesh, &v, &flat(), &params).unwrap();
            let expect = 2.0_f64.powf(p / 2.0) * mesh.total_area();
            assert!(
                (rep.total - expect).abs() < 1e-10 * expect,
                "p={p}: {} vs {expect}",
                rep.total
            );
        }
    }

    #[test]
    fn constant_metric_scaling_law() {
        // For g = c·I in n = 2: E_g = c^{1−p/2} · E_flat, exactly at the
        // quadrature level.
        let mesh = DiskMesh::unit_disk(3).unwrap();
        let v = affine_field(&mesh);
        let c = 2.7;
        let g = MetricField::constant(DMatrix::from_row_slice(2, 2, &[c, 0.0, 0.0, c])).unwrap();
        for p in [2.0, 3.0, 4.0] {
            let params = EnergyParams::new(p, 2).unwrap();
            let flat_e = energy(&mesh, &v, &flat(), &params).unwrap().total;
            let curved = energy(&mesh, &v, &g, &params).unwrap().total;
            let expect = c.powf(1.0 - p / 2.0) * flat_e;
            assert!(
                (curved - expect).abs() < 1e-10 * expect.abs(),
                "p={p}: {curved} vs {expect}"
            );
        }
    }

    #[test]
    fn field_scaling_law() {
        let mesh = DiskMesh::unit_disk(3).unwrap();
        let v = VectorField::sample(&mesh, 1, |p| vec![(2.0 * p[0]).sin() * p[1]]);
        let cv = VectorField::from_values(
            &mesh,
            1,
            v.values().iter().map(|x| 3.0 * x).collect(),
        )
        .unwrap();
        let params = EnergyParams::new(3.0, 1).unwrap();
        let e1 = energy(&mesh, &v, &flat(), &params).unwrap().total;
        let e3 = energy(&mesh, &cv, &flat(), &params).unwrap().total;
        assert!((e3 - 27.0 * e1).abs() < 1e-9 * e3.abs(), "{e3} vs {}", 27.0 * e1);
    }

    #[test]
    fn first_variation_constant_field_is_zero() {
        let mesh = DiskMesh::unit_disk(2).unwrap();
        let v = VectorField::constant(&mesh, &[0.3]);
        let params = EnergyParams::new(4.0, 1).unwrap().with_mu(1e-3);
        let g = first_variation(&mesh, &v, &flat(), &params).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    /// Independent P1 stiffness assembly via the cotangent formula; test
    /// oracle for the p = 2 case, deliberately not sharing code with the
    /// energy assembly.
    fn cotangent_residual(mesh: &DiskMesh, v: &VectorField) -> Vec<f64> {
        let mut out = vec![0.0; mesh.vertex_count()];
        for t in 0..mesh.triangle_count() {
            let tri = mesh.triangle(t);
            let p = [
                mesh.vertex(tri[0]),
                mesh.vertex(tri[1]),
                mesh.vertex(tri[2]),
            ];
            // cot of angle at each corner
            for k in 0..3 {
                let a = p[(k + 1) % 3];
                let b = p[(k + 2) % 3];
                let o = p[k];
                let u = [a[0] - o[0], a[1] - o[1]];
                let w = [b[0] - o[0], b[1] - o[1]];
                let cross = u[0] * w[1] - u[1] * w[0];
                let dot = u[0] * w[0] + u[1] * w[1];
                let cot = dot / cross.abs();
                // Edge (a, b) opposite corner k gets weight cot/2.
                let (i, j) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let diff = v.value(i)[0] - v.value(j)[0];
                out[i] += 0.5 * cot * diff;
                out[j] -= 0.5 * cot * diff;
            }
        }
        out
    }

    #[test]
    fn p2_variation_matches_cotangent_stiffness() {
        let mesh = DiskMesh::unit_disk(3).unwrap();
        let v = VectorField::sample(&mesh, 1, |p| vec![(p[0] * 2.0).cos() + p[1]]);
        let params = EnergyParams::new(2.0, 1).unwrap();
        let fv = first_variation(&mesh, &v, &flat(), &params).unwrap();
        let kv = cotangent_residual(&mesh, &v);
        // δE = 2·K v for E = ∫|∇v|².
        for k in 0..mesh.vertex_count() {
            assert!(
                (fv[k] - 2.0 * kv[k]).abs() < 1e-10,
                "vertex {k}: {} vs {}",
                fv[k],
                2.0 * kv[k]
            );
        }
    }

    #[test]
    fn finite_difference_consistency() {
        let mesh = DiskMesh::unit_disk(3).unwrap();
        let g =
            MetricField::conformal_sin(2, 0.1, 2.0).unwrap();
        let v = VectorField::sample(&mesh, 2, |p| {
            vec![(3.0 * p[0]).sin() + 0.2 * p[1], p[0] * p[1]]
        });
        let phi = VectorField::sample(&mesh, 2, |p| {
            vec![(2.0 * p[1]).cos(), (p[0] + p[1]).sin()]
        });
        let params = EnergyParams::new(3.0, 2).unwrap().with_mu(1e-3);
        let cache = MetricCache::at_centroids(&mesh, &g).unwrap();
        let grad = first_variation_with_cache(&mesh, &v, &cache, &params);
        let pairing: f64 = grad
            .iter()
            .zip(phi.values().iter())
            .map(|(a, b)| a * b)
            .sum();
        let t = 1e-5;
        let plus = v.axpy(&mesh, 1.0, t, &phi).unwrap();
        let minus = v.axpy(&mesh, 1.0, -t, &phi).unwrap();
        let fd = (energy_value(&mesh, &plus, &cache, &params)
            - energy_value(&mesh, &minus, &cache, &params))
            / (2.0 * t);
        assert!(
            (fd - pairing).abs() <= 1e-6 * pairing.abs().max(1e-12),
            "fd {fd} vs pairing {pairing}"
        );
    }

    #[test]
    fn affine_maps_are_discretely_p_harmonic() {
        let mesh = DiskMesh::unit_disk(4).unwrap();
        let v = affine_field(&mesh);
        for p in [2.0, 3.0, 4.0] {
            let params = EnergyParams::new(p, 2).unwrap();
            let r = weak_residual_norm(&mesh, &v, &flat(), &params).unwrap();
            assert!(r < 1e-11, "p={p}: residual {r}");
        }
    }

    #[test]
    fn residual_grows_with_perturbation() {
        let mesh = DiskMesh::unit_disk(3).unwrap();
        let v = affine_field(&mesh);
        let bump = VectorField::sample(&mesh, 2, |p| {
            let r2 = p[0] * p[0] + p[1] * p[1];
            let b = (1.0 - 4.0 * r2).max(0.0);
            vec![b * b, 0.0]
        });
        let params = EnergyParams::new(3.0, 2).unwrap();
        let mut last = 0.0;
        for eps in [1e-3, 1e-2, 1e-1] {
            let w = v.axpy(&mesh, 1.0, eps, &bump).unwrap();
            let r = weak_residual_norm(&mesh, &w, &flat(), &params).unwrap();
            assert!(r > last, "eps={eps}: {r} <= {last}");
            last = r;
        }
    }

    #[test]
    fn localized_energy_cases() {
        let mesh = DiskMesh::unit_disk(4).unwrap();
        let v = affine_field(&mesh);
        let params = EnergyParams::new(3.0, 2).unwrap();
        let ball = BallRegion::new(&mesh, [0.0, 0.0], 0.4).unwrap();
        let got = localized_energy(&mesh, &v, &flat(), &params, &ball).unwrap();
        let expect = 2.0_f64.powf(1.5) * std::f64::consts::PI * 0.16;
        let band = 2.0_f64.powf(1.5) * 2.0 * std::f64::consts::PI * 0.4 * mesh.max_diameter();
        assert!((got - expect).abs() < band, "{got} vs {expect}");

        let half = BallRegion::new(&mesh, [0.0, 0.0], 0.2).unwrap();
        let smaller = localized_energy(&mesh, &v, &flat(), &params, &half).unwrap();
        assert!(smaller <= got);

        let c = VectorField::constant(&mesh, &[0.0, 0.0]);
        assert_eq!(
            localized_energy(&mesh, &c, &flat(), &params, &ball).unwrap(),
            0.0
        );
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mesh = DiskMesh::unit_disk(2).unwrap();
        let v = VectorField::constant(&mesh, &[0.0]);
        let params = EnergyParams::new(2.0, 2).unwrap();
        assert!(matches!(
            energy(&mesh, &v, &flat(), &params),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn exponent_below_two_rejected() {
        assert!(matches!(
            EnergyParams::new(1.5, 1),
            Err(Error::UnsupportedExponentCombo { .. })
        ));
    }

    #[test]
    fn report_json_fields() {
        let mesh = DiskMesh::unit_disk(1).unwrap();
        let v = VectorField::constant(&mesh, &[0.0]);
        let params = EnergyParams::new(2.0, 1).unwrap();
        let rep = energy(&mesh, &v, &flat(), &params).unwrap();
        let json = rep.to_json(&params, &mesh);
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["p"], 2.0);
        assert!(parsed["mesh_hash"].is_string());
    }
}
