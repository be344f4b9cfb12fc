//! Ball sub-regions of the mesh, dyadic hierarchies, weighted averages and
//! oscillations.
//!
//! Ball/element overlap uses centroid classification with recursive 4-way
//! subdivision of boundary-straddling elements; the residual overlap error
//! is reported with the region rather than hidden.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::mesh::DiskMesh;
use crate::metric::MetricField;

const SUBDIV_DEPTH: u32 = 4;

/// A measurable ball `B(center, radius)` resolved against a mesh:
/// per-element overlap fractions in `[0, 1]` plus an overlap-error
/// estimate for the boundary band.
#[derive(Debug, Clone)]
pub struct BallRegion {
    pub center: [f64; 2],
    pub radius: f64,
    /// `(element, overlap fraction)` for elements with positive overlap.
    pub weights: Vec<(usize, f64)>,
    /// `Σ w_T · area_T`, the resolved area of the intersection.
    pub overlap_area: f64,
    /// Estimated residual area error of the subdivision rule.
    pub overlap_error: f64,
}

impl BallRegion {
    /// Resolve `B(center, radius)` against the mesh.
    pub fn new(mesh: &DiskMesh, center: [f64; 2], radius: f64) -> Result<BallRegion> {
        if radius <= 0.0 {
            return Err(Error::EmptyRegion);
        }
        let r2 = radius * radius;
        let inside = |p: [f64; 2]| {
            let dx = p[0] - center[0];
            let dy = p[1] - center[1];
            dx * dx + dy * dy <= r2
        };
        let classified: Vec<(usize, f64, bool)> = (0..mesh.triangle_count())
            .into_par_iter()
            .filter_map(|t| {
                let tri = mesh.triangle(t);
                let pts = [
                    mesh.vertex(tri[0]),
                    mesh.vertex(tri[1]),
                    mesh.vertex(tri[2]),
                ];
                let ins = [inside(pts[0]), inside(pts[1]), inside(pts[2])];
                if ins.iter().all(|&b| b) {
                    // A triangle with all vertices in the (convex) ball is inside.
                    return Some((t, 1.0, false));
                }
                if !ins.iter().any(|&b| b)
                    && point_triangle_distance(center, &pts) > radius
                {
                    return None;
                }
                let w = subdivided_fraction(&pts, center, r2, SUBDIV_DEPTH);
                if w > 0.0 {
                    Some((t, w, true))
                } else {
                    None
                }
            })
            .collect();
        let mut weights = Vec::with_capacity(classified.len());
        let mut overlap_area = 0.0;
        let mut overlap_error = 0.0;
        let mut sorted = classified;
        sorted.sort_by_key(|&(t, _, _)| t);
        for (t, w, straddling) in sorted {
            overlap_area += w * mesh.area(t);
            if straddling {
                overlap_error += mesh.area(t) / (1 << SUBDIV_DEPTH) as f64;
            }
            weights.push((t, w));
        }
        if weights.is_empty() {
            return Err(Error::EmptyRegion);
        }
        Ok(BallRegion {
            center,
            radius,
            weights,
            overlap_area,
            overlap_error,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Overlap fraction of a triangle with the ball, by recursive 4-way
/// subdivision and centroid rule on the leaves.
fn subdivided_fraction(pts: &[[f64; 2]; 3], center: [f64; 2], r2: f64, depth: u32) -> f64 {
    let centroid = [
        (pts[0][0] + pts[1][0] + pts[2][0]) / 3.0,
        (pts[0][1] + pts[1][1] + pts[2][1]) / 3.0,
    ];
    let inside = |p: [f64; 2]| {
        let dx = p[0] - center[0];
        let dy = p[1] - center[1];
        dx * dx + dy * dy <= r2
    };
    if depth == 0 {
        return if inside(centroid) { 1.0 } else { 0.0 };
    }
    let ins: Vec<bool> = pts.iter().map(|&p| inside(p)).collect();
    if ins.iter().all(|&b| b) && inside(centroid) {
        return 1.0;
    }
    if !ins.iter().any(|&b| b) && point_triangle_distance(center, pts) * point_triangle_distance(center, pts) > r2 {
        return 0.0;
    }
    let m01 = mid(pts[0], pts[1]);
    let m12 = mid(pts[1], pts[2]);
    let m20 = mid(pts[2], pts[0]);
    let children = [
        [pts[0], m01, m20],
        [pts[1], m12, m01],
        [pts[2], m20, m12],
        [m01, m12, m20],
    ];
    children
        .iter()
        .map(|c| subdivided_fraction(c, center, r2, depth - 1))
        .sum::<f64>()
        / 4.0
}

fn mid(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
}

/// Euclidean distance from a point to a (filled) triangle.
fn point_triangle_distance(p: [f64; 2], pts: &[[f64; 2]; 3]) -> f64 {
    // Inside test via sign of barycentric areas.
    let sign = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
    };
    let d0 = sign(pts[0], pts[1], p);
    let d1 = sign(pts[1], pts[2], p);
    let d2 = sign(pts[2], pts[0], p);
    let has_neg = d0 < 0.0 || d1 < 0.0 || d2 < 0.0;
    let has_pos = d0 > 0.0 || d1 > 0.0 || d2 > 0.0;
    if !(has_neg && has_pos) {
        return 0.0;
    }
    let seg = |a: [f64; 2], b: [f64; 2]| {
        let ab = [b[0] - a[0], b[1] - a[1]];
        let ap = [p[0] - a[0], p[1] - a[1]];
        let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
        let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
        (p[0] - q[0]).hypot(p[1] - q[1])
    };
    seg(pts[0], pts[1])
        .min(seg(pts[1], pts[2]))
        .min(seg(pts[2], pts[0]))
}

// ---------------------------------------------------------------------------
// Dyadic hierarchies
// ---------------------------------------------------------------------------

/// Balls `B(x, δⁱ·r₀)`, `i = 0..count`, all inside the unit ball.
#[derive(Debug, Clone)]
pub struct DyadicHierarchy {
    pub center: [f64; 2],
    pub r0: f64,
    pub delta: f64,
    pub balls: Vec<BallRegion>,
}

pub fn dyadic_hierarchy(
    mesh: &DiskMesh,
    center: [f64; 2],
    r0: f64,
    delta: f64,
    count: usize,
) -> Result<DyadicHierarchy> {
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::ShapeMismatch(format!("delta {delta} outside (0,1)")));
    }
    if count < 2 {
        return Err(Error::ShapeMismatch("hierarchy needs at least 2 balls".into()));
    }
    let c_norm = center[0].hypot(center[1]);
    if c_norm + r0 > 1.0 + 1e-12 {
        return Err(Error::OutOfDomain(center[0], center[1]));
    }
    let mut balls = Vec::with_capacity(count);
    for i in 0..count {
        let r = delta.powi(i as i32) * r0;
        balls.push(BallRegion::new(mesh, center, r)?);
    }
    Ok(DyadicHierarchy {
        center,
        r0,
        delta,
        balls,
    })
}

// ---------------------------------------------------------------------------
// Averages, integrals, oscillations
// ---------------------------------------------------------------------------

/// Measure used when weighting an integrand over a region.
pub enum AverageWeight<'a> {
    Lebesgue,
    /// Multiplies by `√det g` at element centroids. Averages stay
    /// normalized by the Lebesgue area of the region.
    VolG(&'a MetricField),
}

/// Weighted integral of a per-element quantity over the region.
pub fn ball_integral(
    mesh: &DiskMesh,
    quantity: &[f64],
    region: &BallRegion,
    weight: &AverageWeight,
) -> Result<f64> {
    if quantity.len() != mesh.triangle_count() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} per-element values, got {}",
            mesh.triangle_count(),
            quantity.len()
        )));
    }
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut total = 0.0;
    for &(t, w) in &region.weights {
        let dens = match weight {
            AverageWeight::Lebesgue => 1.0,
            AverageWeight::VolG(g) => {
                let c = mesh.centroid(t);
                g.sample(&[c[0], c[1]])?.sqrt_det
            }
        };
        total += w * mesh.area(t) * dens * quantity[t];
    }
    Ok(total)
}

/// Lebesgue-normalized mean of a per-element quantity; in `VolG` mode the
/// integrand is weighted by `√det g` while the normalization stays the
/// Lebesgue area, so a constant `1` averages to `√det g` itself.
pub fn ball_average(
    mesh: &DiskMesh,
    quantity: &[f64],
    region: &BallRegion,
    weight: &AverageWeight,
) -> Result<f64> {
    let num = ball_integral(mesh, quantity, region, weight)?;
    if region.overlap_area <= 0.0 {
        return Err(Error::EmptyRegion);
    }
    Ok(num / region.overlap_area)
}

/// Lebesgue average of the per-element gradients over the region
/// (`2 × dim` block, same layout as [`VectorField::grad`]).
pub fn mean_gradient(mesh: &DiskMesh, field: &VectorField, region: &BallRegion) -> Result<Vec<f64>> {
    if region.is_empty() || region.overlap_area <= 0.0 {
        return Err(Error::EmptyRegion);
    }
    let m = 2 * field.dim();
    let mut acc = vec![0.0; m];
    for &(t, w) in &region.weights {
        let wa = w * mesh.area(t);
        let g = field.grad(t);
        for k in 0..m {
            acc[k] += wa * g[k];
        }
    }
    for v in acc.iter_mut() {
        *v /= region.overlap_area;
    }
    Ok(acc)
}

/// Max pairwise distance of the P1 field over the ball: nodal values at
/// vertices inside plus interpolated values on the bounding circle, where
/// the extremes of a piecewise-linear function over a disk live.
pub fn oscillation_nodal(mesh: &DiskMesh, field: &VectorField, region: &BallRegion) -> Result<f64> {
    let r2 = region.radius * region.radius;
    let dim = field.dim();
    let mut samples: Vec<Vec<f64>> = (0..mesh.vertex_count())
        .filter(|&v| {
            let p = mesh.vertex(v);
            let dx = p[0] - region.center[0];
            let dy = p[1] - region.center[1];
            dx * dx + dy * dy <= r2 + 1e-15
        })
        .map(|v| field.value(v).to_vec())
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let circle = 128;
    for k in 0..circle {
        let theta = 2.0 * std::f64::consts::PI * (k as f64) / circle as f64;
        let p = [
            region.center[0] + region.radius * theta.cos(),
            region.center[1] + region.radius * theta.sin(),
        ];
        if p[0].hypot(p[1]) <= 1.0 {
            samples.push(field.eval_at(mesh, p));
        }
    }
    let osc = samples
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let mut max_d2 = 0.0_f64;
            for b in &samples[i + 1..] {
                let mut d2 = 0.0;
                for k in 0..dim {
                    let d = a[k] - b[k];
                    d2 += d * d;
                }
                max_d2 = max_d2.max(d2);
            }
            max_d2
        })
        .reduce(|| 0.0, f64::max)
        .sqrt();
    // Interpolated samples of a constant field carry ~1e-16 rounding; an
    // oscillation below that scale is a zero.
    let value_scale = samples
        .iter()
        .flat_map(|s| s.iter())
        .fold(0.0_f64, |m, &x| m.max(x.abs()));
    Ok(if osc <= 1e-14 * (1.0 + value_scale) {
        0.0
    } else {
        osc
    })
}

/// Max pairwise Frobenius distance of element gradients over elements
/// whose centroid lies in the ball.
pub fn oscillation_gradient(
    mesh: &DiskMesh,
    field: &VectorField,
    region: &BallRegion,
) -> Result<f64> {
    let r2 = region.radius * region.radius;
    let elems: Vec<usize> = region
        .weights
        .iter()
        .map(|&(t, _)| t)
        .filter(|&t| {
            let c = mesh.centroid(t);
            let dx = c[0] - region.center[0];
            let dy = c[1] - region.center[1];
            dx * dx + dy * dy <= r2
        })
        .collect();
    if elems.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let m = 2 * field.dim();
    let osc = elems
        .par_iter()
        .enumerate()
        .map(|(i, &ti)| {
            let a = field.grad(ti);
            let mut max_d2 = 0.0_f64;
            for &tj in &elems[i + 1..] {
                let b = field.grad(tj);
                let mut d2 = 0.0;
                for k in 0..m {
                    let d = a[k] - b[k];
                    d2 += d * d;
                }
                max_d2 = max_d2.max(d2);
            }
            max_d2
        })
        .reduce(|| 0.0, f64::max);
    Ok(osc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh() -> DiskMesh {
        DiskMesh::unit_disk(4).unwrap()
    }

    #[test]
    fn ball_area_resolved() {
        let m = mesh();
        let b = BallRegion::new(&m, [0.0, 0.0], 0.5).unwrap();
        let exact = std::f64::consts::PI * 0.25;
        let band = 2.0 * std::f64::consts::PI * 0.5 * m.max_diameter();
        assert!(
            (b.overlap_area - exact).abs() < band,
            "area {} vs {exact} (band {band})",
            b.overlap_area
        );
        assert!(b.overlap_error < band);
    }

    #[test]
    fn average_of_constant() {
        let m = mesh();
        let b = BallRegion::new(&m, [0.2, -0.1], 0.3).unwrap();
        let q = vec![7.5; m.triangle_count()];
        let a = ball_average(&m, &q, &b, &AverageWeight::Lebesgue).unwrap();
        assert!((a - 7.5).abs() < 1e-12);
    }

    #[test]
    fn average_of_odd_function_vanishes() {
        let m = mesh();
        let b = BallRegion::new(&m, [0.0, 0.0], 0.6).unwrap();
        let q: Vec<f64> = (0..m.triangle_count()).map(|t| m.centroid(t)[0]).collect();
        let a = ball_average(&m, &q, &b, &AverageWeight::Lebesgue).unwrap();
        assert!(a.abs() < m.max_diameter(), "{a}");
    }

    #[test]
    fn vol_g_average_scales_by_sqrt_det() {
        let m = mesh();
        let g = MetricField::constant(nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[4.0, 0.0, 0.0, 4.0],
        ))
        .unwrap();
        let b = BallRegion::new(&m, [0.0, 0.0], 0.4).unwrap();
        let q = vec![1.0; m.triangle_count()];
        let a = ball_average(&m, &q, &b, &AverageWeight::VolG(&g)).unwrap();
        assert!((a - 4.0).abs() < 1e-12, "{a}");
    }

    #[test]
    fn mean_gradient_of_affine_is_exact() {
        let m = mesh();
        let f = VectorField::sample(&m, 2, |p| vec![2.0 * p[0] - p[1], 0.5 * p[1]]);
        let b = BallRegion::new(&m, [0.1, 0.1], 0.35).unwrap();
        let g = mean_gradient(&m, &f, &b).unwrap();
        let expect = [2.0, 0.0, -1.0, 0.5];
        for (got, want) in g.iter().zip(expect.iter()) {
            assert!((got - want).abs() < 1e-12, "{g:?}");
        }
    }

    #[test]
    fn mean_gradient_symmetry_case() {
        // v = (x₁², 0): mean of ∂₁v¹ = mean of 2x₁ ≈ 0 over a centered ball.
        let m = mesh();
        let f = VectorField::sample(&m, 2, |p| vec![p[0] * p[0], 0.0]);
        let b = BallRegion::new(&m, [0.0, 0.0], 0.5).unwrap();
        let g = mean_gradient(&m, &f, &b).unwrap();
        for v in &g {
            assert!(v.abs() < m.max_diameter(), "{g:?}");
        }
    }

    #[test]
    fn oscillation_cases() {
        let m = mesh();
        let b = BallRegion::new(&m, [0.0, 0.0], 0.4).unwrap();
        let c = VectorField::constant(&m, &[3.0]);
        assert!(oscillation_nodal(&m, &c, &b).unwrap() < 1e-15);

        let f = VectorField::sample(&m, 1, |p| vec![p[0]]);
        let osc = oscillation_nodal(&m, &f, &b).unwrap();
        assert!(
            (osc - 0.8).abs() < m.max_diameter(),
            "osc {osc} expected ~0.8"
        );
        // Affine gradients have zero oscillation.
        assert!(oscillation_gradient(&m, &f, &b).unwrap() < 1e-13);
    }

    #[test]
    fn dyadic_radii() {
        let m = mesh();
        let h = dyadic_hierarchy(&m, [0.0, 0.0], 0.5, 0.5, 3).unwrap();
        let radii: Vec<f64> = h.balls.iter().map(|b| b.radius).collect();
        assert_eq!(radii, vec![0.5, 0.25, 0.125]);

        let h = dyadic_hierarchy(&m, [0.0, 0.0], 0.4, 0.25, 2).unwrap();
        assert_eq!(h.balls[1].radius, 0.1);

        assert!(matches!(
            dyadic_hierarchy(&m, [0.6, 0.0], 0.5, 0.5, 3),
            Err(Error::OutOfDomain(_, _))
        ));
    }

    #[test]
    fn averages_converge_under_refinement() {
        // Successive differences of a smooth quantity's average shrink by
        // at least 2x per level.
        let mut prev: Option<f64> = None;
        let mut diffs = Vec::new();
        for level in 3..=6 {
            let m = DiskMesh::unit_disk(level).unwrap();
            let q: Vec<f64> = (0..m.triangle_count())
                .map(|t| {
                    let c = m.centroid(t);
                    (c[0] + 2.0 * c[1]).sin()
                })
                .collect();
            let b = BallRegion::new(&m, [0.15, 0.0], 0.45).unwrap();
            let a = ball_average(&m, &q, &b, &AverageWeight::Lebesgue).unwrap();
            if let Some(p) = prev {
                diffs.push((a - p).abs());
            }
            prev = Some(a);
        }
        for w in diffs.windows(2) {
            assert!(w[1] < w[0] / 2.0, "diffs {diffs:?}");
        }
    }

    #[test]
    fn nested_integral_monotone() {
        let m = mesh();
        let q: Vec<f64> = (0..m.triangle_count())
            .map(|t| m.centroid(t)[0].abs() + 0.1)
            .collect();
        let small = BallRegion::new(&m, [0.1, 0.1], 0.2).unwrap();
        let large = BallRegion::new(&m, [0.1, 0.1], 0.4).unwrap();
        let a = ball_integral(&m, &q, &small, &AverageWeight::Lebesgue).unwrap();
        let b = ball_integral(&m, &q, &large, &AverageWeight::Lebesgue).unwrap();
        assert!(a <= b + 1e-12);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]

            #[test]
            fn mean_gradient_linearity(a in -2.0_f64..2.0, b in -2.0_f64..2.0) {
                let m = DiskMesh::unit_disk(3).unwrap();
                let u = VectorField::sample(&m, 1, |p| vec![(3.0 * p[0]).sin()]);
                let v = VectorField::sample(&m, 1, |p| vec![p[0] * p[1]]);
                let combo = u.axpy(&m, a, b, &v).unwrap();
                let ball = BallRegion::new(&m, [0.0, 0.0], 0.5).unwrap();
                let gu = mean_gradient(&m, &u, &ball).unwrap();
                let gv = mean_gradient(&m, &v, &ball).unwrap();
                let gc = mean_gradient(&m, &combo, &ball).unwrap();
                for k in 0..2 {
                    prop_assert!((gc[k] - (a * gu[k] + b * gv[k])).abs() < 1e-10);
                }
            }

            #[test]
            fn oscillation_subadditive_and_shift_invariant(shift in -5.0_f64..5.0) {
                let m = DiskMesh::unit_disk(3).unwrap();
                let u = VectorField::sample(&m, 1, |p| vec![(4.0 * p[0]).cos()]);
                let v = VectorField::sample(&m, 1, |p| vec![p[1].abs()]);
                let sum = u.axpy(&m, 1.0, 1.0, &v).unwrap();
                let shifted = VectorField::sample(&m, 1, |p| vec![(4.0 * p[0]).cos() + shift]);
                let ball = BallRegion::new(&m, [0.0, 0.0], 0.6).unwrap();
                let ou = oscillation_nodal(&m, &u, &ball).unwrap();
                let ov = oscillation_nodal(&m, &v, &ball).unwrap();
                let os = oscillation_nodal(&m, &sum, &ball).unwrap();
                let osh = oscillation_nodal(&m, &shifted, &ball).unwrap();
                prop_assert!(os <= ou + ov + 1e-12);
                prop_assert!((osh - ou).abs() < 1e-12);
            }
        }
    }
}
