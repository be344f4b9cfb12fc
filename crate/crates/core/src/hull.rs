//! Convex-hull maximum principle check: interior nodal values of a solved
//! Dirichlet problem must lie in the convex envelope of the boundary
//! values.
//!
//! For N ≤ 2 the hull is computed exactly (interval / monotone chain) and
//! violations are Euclidean distances to the hull. For larger N the check
//! uses the half-space characterization against a deterministic battery of
//! random directions, which lower-bounds the true distance.

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::mesh::DiskMesh;

#[derive(Debug, Clone)]
pub struct HullReport {
    /// Largest distance of an interior nodal value outside the hull.
    pub max_violation: f64,
    /// Diameter of the boundary data (for relative tolerances).
    pub data_diameter: f64,
    pub directions_used: usize,
}

/// `boundary_values` are per boundary vertex in ascending vertex order,
/// vertex-major, exactly as handed to the solver.
pub fn convex_hull_check(
    mesh: &DiskMesh,
    v: &VectorField,
    boundary_values: &[f64],
) -> Result<HullReport> {
    let dim = v.dim();
    let boundary = mesh.boundary_vertices();
    if boundary_values.len() != boundary.len() * dim {
        return Err(Error::ShapeMismatch(format!(
            "expected {} boundary values, got {}",
            boundary.len() * dim,
            boundary_values.len()
        )));
    }
    let hull_points: Vec<&[f64]> = boundary_values.chunks(dim).collect();
    let interior: Vec<&[f64]> = (0..mesh.vertex_count())
        .filter(|&k| !mesh.is_boundary(k))
        .map(|k| v.value(k))
        .collect();
    let data_diameter = diameter(&hull_points);
    let (max_violation, directions_used) = match dim {
        1 => (violation_interval(&hull_points, &interior), 0),
        2 => (violation_hull2(&hull_points, &interior), 0),
        _ => violation_directions(&hull_points, &interior, dim),
    };
    Ok(HullReport {
        max_violation,
        data_diameter,
        directions_used,
    })
}

fn diameter(points: &[&[f64]]) -> f64 {
    let mut d2 = 0.0_f64;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let s: f64 = points[i]
                .iter()
                .zip(points[j].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2 = d2.max(s);
        }
    }
    d2.sqrt()
}

fn violation_interval(hull: &[&[f64]], interior: &[&[f64]]) -> f64 {
    let lo = hull.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let hi = hull.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    interior
        .iter()
        .map(|p| (lo - p[0]).max(p[0] - hi).max(0.0))
        .fold(0.0, f64::max)
}

/// Andrew's monotone chain; returns the hull polygon counterclockwise.
fn convex_hull_2d(points: &[&[f64]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn violation_hull2(hull_pts: &[&[f64]], interior: &[&[f64]]) -> f64 {
    let hull = convex_hull_2d(hull_pts);
    if hull.is_empty() {
        return 0.0;
    }
    let dist_to = |p: [f64; 2]| -> f64 {
        match hull.len() {
            1 => (p[0] - hull[0][0]).hypot(p[1] - hull[0][1]),
            2 => dist_segment(p, hull[0], hull[1]),
            _ => {
                // Inside test for a CCW convex polygon, else min edge distance.
                let mut inside = true;
                for i in 0..hull.len() {
                    let a = hull[i];
                    let b = hull[(i + 1) % hull.len()];
                    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                    if cross < 0.0 {
                        inside = false;
                        break;
                    }
                }
                if inside {
                    0.0
                } else {
                    (0..hull.len())
                        .map(|i| dist_segment(p, hull[i], hull[(i + 1) % hull.len()]))
                        .fold(f64::INFINITY, f64::min)
                }
            }
        }
    };
    interior
        .iter()
        .map(|p| dist_to([p[0], p[1]]))
        .fold(0.0, f64::max)
}

fn dist_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// Half-space battery with deterministic pseudo-random unit directions Z:
/// the violation of an interior value is `(min_b⟨b,Z⟩ − ⟨v,Z⟩)₊`.
fn violation_directions(hull: &[&[f64]], interior: &[&[f64]], dim: usize) -> (f64, usize) {
    let n_dirs = 256;
    let mut state: u64 = 0x5deece66d;
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let mut worst = 0.0_f64;
    for _ in 0..n_dirs {
        let mut z: Vec<f64> = (0..dim).map(|_| next()).collect();
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        for zi in z.iter_mut() {
            *zi /= norm;
        }
        let alpha = hull
            .iter()
            .map(|p| p.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        for p in interior {
            let val: f64 = p.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
            worst = worst.max(alpha - val);
        }
    }
    (worst.max(0.0), n_dirs)
}
