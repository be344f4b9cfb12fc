//! Triangulated unit disk with nested refinement, point location and
//! conforming sub-region extraction.
//!
//! Level 0 is a regular octagon fan (8 triangles). Each refinement splits
//! every triangle into four via edge midpoints; midpoints of boundary edges
//! are projected back onto the unit circle, so boundary vertices lie on the
//! circle to machine precision and the mesh area equals the area of the
//! inscribed regular polygon with `8·2^level` sides. Vertices of level `k`
//! are a prefix of the vertices of level `k+1`.

use crate::error::{Error, Result};
use crate::io::fnv1a64;

pub const MAX_REFINEMENT_LEVEL: u32 = 9;

#[derive(Debug, Clone)]
pub struct DiskMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    level: u32,
    areas: Vec<f64>,
    centroids: Vec<[f64; 2]>,
    /// Barycentric gradients `∇λ_i` per element, one `[f64;2]` per corner.
    bary_grads: Vec<[[f64; 2]; 3]>,
    diameters: Vec<f64>,
    locator: Locator,
    hash: u64,
}

impl DiskMesh {
    /// Triangulated unit disk at the given refinement level.
    pub fn unit_disk(level: u32) -> Result<DiskMesh> {
        if level > MAX_REFINEMENT_LEVEL {
            return Err(Error::RefinementOutOfRange(level));
        }
        let mut vertices: Vec<[f64; 2]> = vec![[0.0, 0.0]];
        for k in 0..8 {
            let a = 2.0 * std::f64::consts::PI * (k as f64) / 8.0;
            vertices.push([a.cos(), a.sin()]);
        }
        let mut triangles: Vec<[usize; 3]> = (0..8).map(|k| [0, 1 + k, 1 + (k + 1) % 8]).collect();

        for _ in 0..level {
            (vertices, triangles) = refine(vertices, triangles);
        }
        Ok(Self::from_raw(vertices, triangles, level))
    }

    /// Assemble a mesh from explicit geometry. Triangles are reoriented to
    /// positive area; boundary vertices are those on single-triangle edges.
    pub(crate) fn from_raw(
        vertices: Vec<[f64; 2]>,
        mut triangles: Vec<[usize; 3]>,
        level: u32,
    ) -> DiskMesh {
        for t in triangles.iter_mut() {
            if signed_area(&vertices, t) < 0.0 {
                t.swap(1, 2);
            }
        }
        let boundary = boundary_flags(vertices.len(), &triangles);
        let mut areas = Vec::with_capacity(triangles.len());
        let mut centroids = Vec::with_capacity(triangles.len());
        let mut bary_grads = Vec::with_capacity(triangles.len());
        let mut diameters = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let [a, b, c] = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
            let area = signed_area(&vertices, t);
            areas.push(area);
            centroids.push([(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]);
            let two_a = 2.0 * area;
            bary_grads.push([
                [(b[1] - c[1]) / two_a, (c[0] - b[0]) / two_a],
                [(c[1] - a[1]) / two_a, (a[0] - c[0]) / two_a],
                [(a[1] - b[1]) / two_a, (b[0] - a[0]) / two_a],
            ]);
            let d = dist(a, b).max(dist(b, c)).max(dist(c, a));
            diameters.push(d);
        }
        let locator = Locator::build(&vertices, &triangles, &diameters);
        let hash = mesh_hash(level, &vertices, &triangles);
        DiskMesh {
            vertices,
            triangles,
            boundary,
            level,
            areas,
            centroids,
            bary_grads,
            diameters,
            locator,
            hash,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex(&self, i: usize) -> [f64; 2] {
        self.vertices[i]
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    /// Indices of boundary vertices, ascending.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| self.boundary[v])
            .collect()
    }

    pub fn refinement_level(&self) -> u32 {
        self.level
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        self.centroids[t]
    }

    pub fn bary_grad(&self, t: usize) -> &[[f64; 2]; 3] {
        &self.bary_grads[t]
    }

    pub fn diameter(&self, t: usize) -> f64 {
        self.diameters[t]
    }

    pub fn max_diameter(&self) -> f64 {
        self.diameters.iter().cloned().fold(0.0, f64::max)
    }

    /// FNV-1a content hash of level, vertex coordinates and connectivity.
    pub fn content_hash(&self) -> String {
        format!("{:016x}", self.hash)
    }

    /// Element containing `p` together with its barycentric coordinates.
    /// Points marginally outside the mesh snap to the nearest candidate
    /// element with clamped coordinates.
    pub fn locate(&self, p: [f64; 2]) -> (usize, [f64; 3]) {
        self.locator.locate(self, p)
    }

    /// P1 barycentric coordinates of `p` in triangle `t`.
    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let tri = self.triangles[t];
        let a = self.vertices[tri[0]];
        let b = self.vertices[tri[1]];
        let c = self.vertices[tri[2]];
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Mesh dump: vertex table (`vertex_id,x,y,boundary`).
    pub fn vertices_csv(&self) -> String {
        let mut out = String::from("vertex_id,x,y,boundary\n");
        for (i, v) in self.vertices.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                i,
                v[0],
                v[1],
                u8::from(self.boundary[i])
            ));
        }
        out
    }

    /// Mesh dump: triangle table (`triangle_id,v0,v1,v2,area`).
    pub fn triangles_csv(&self) -> String {
        let mut out = String::from("triangle_id,v0,v1,v2,area\n");
        for (t, tri) in self.triangles.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t, tri[0], tri[1], tri[2], self.areas[t]
            ));
        }
        out
    }
}

fn signed_area(vertices: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    let a = vertices[t[0]];
    let b = vertices[t[1]];
    let c = vertices[t[2]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// One 4-way refinement pass. Midpoints of boundary edges (edges incident
/// to exactly one triangle) are projected radially onto the unit circle.
fn refine(
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
) -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    use std::collections::HashMap;
    let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
    for t in &triangles {
        for (i, j) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            *edge_count.entry(ordered(i, j)).or_insert(0) += 1;
        }
    }
    let mut verts = vertices;
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut new_triangles = Vec::with_capacity(triangles.len() * 4);
    let mut mid = |verts: &mut Vec<[f64; 2]>, i: usize, j: usize| -> usize {
        let key = ordered(i, j);
        if let Some(&m) = midpoint.get(&key) {
            return m;
        }
        let a = verts[i];
        let b = verts[j];
        let mut m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        if edge_count[&key] == 1 {
            let r = m[0].hypot(m[1]);
            m = [m[0] / r, m[1] / r];
        }
        verts.push(m);
        let idx = verts.len() - 1;
        midpoint.insert(key, idx);
        idx
    };
    for t in &triangles {
        let m01 = mid(&mut verts, t[0], t[1]);
        let m12 = mid(&mut verts, t[1], t[2]);
        let m20 = mid(&mut verts, t[2], t[0]);
        new_triangles.push([t[0], m01, m20]);
        new_triangles.push([t[1], m12, m01]);
        new_triangles.push([t[2], m20, m12]);
        new_triangles.push([m01, m12, m20]);
    }
    (verts, new_triangles)
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

fn boundary_flags(nv: usize, triangles: &[[usize; 3]]) -> Vec<bool> {
    use std::collections::HashMap;
    let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
    for t in triangles {
        for (i, j) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            *edge_count.entry(ordered(i, j)).or_insert(0) += 1;
        }
    }
    let mut flags = vec![false; nv];
    for (&(i, j), &c) in edge_count.iter() {
        if c == 1 {
            flags[i] = true;
            flags[j] = true;
        }
    }
    flags
}

fn mesh_hash(level: u32, vertices: &[[f64; 2]], triangles: &[[usize; 3]]) -> u64 {
    let mut bytes = Vec::with_capacity(4 + vertices.len() * 16 + triangles.len() * 24);
    bytes.extend_from_slice(&level.to_le_bytes());
    for v in vertices {
        bytes.extend_from_slice(&v[0].to_le_bytes());
        bytes.extend_from_slice(&v[1].to_le_bytes());
    }
    for t in triangles {
        for &i in t {
            bytes.extend_from_slice(&(i as u64).to_le_bytes());
        }
    }
    fnv1a64(&bytes)
}

// ---------------------------------------------------------------------------
// Point location
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Locator {
    nx: usize,
    ny: usize,
    min: [f64; 2],
    cell: f64,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn build(vertices: &[[f64; 2]], triangles: &[[usize; 3]], diameters: &[f64]) -> Locator {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let h = diameters.iter().cloned().fold(1e-12, f64::max);
        let cell = h.max(1e-6);
        let nx = (((hi[0] - lo[0]) / cell).ceil() as usize).max(1);
        let ny = (((hi[1] - lo[1]) / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tri) in triangles.iter().enumerate() {
            let (mut tl, mut th) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for &v in tri {
                for d in 0..2 {
                    tl[d] = tl[d].min(vertices[v][d]);
                    th[d] = th[d].max(vertices[v][d]);
                }
            }
            let i0 = (((tl[0] - lo[0]) / cell).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let i1 = (((th[0] - lo[0]) / cell).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let j0 = (((tl[1] - lo[1]) / cell).floor() as isize).clamp(0, ny as isize - 1) as usize;
            let j1 = (((th[1] - lo[1]) / cell).floor() as isize).clamp(0, ny as isize - 1) as usize;
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        Locator {
            nx,
            ny,
            min: lo,
            cell,
            buckets,
        }
    }

    fn locate(&self, mesh: &DiskMesh, p: [f64; 2]) -> (usize, [f64; 3]) {
        let ci = (((p[0] - self.min[0]) / self.cell).floor() as isize).clamp(0, self.nx as isize - 1);
        let cj = (((p[1] - self.min[1]) / self.cell).floor() as isize).clamp(0, self.ny as isize - 1);
        // Expanding ring search; ring 0 and 1 cover almost every query.
        for ring in 0..=2_isize {
            let mut best: Option<(usize, [f64; 3], f64)> = None;
            for dj in -ring..=ring {
                for di in -ring..=ring {
                    if di.abs() != ring && dj.abs() != ring {
                        continue;
                    }
                    let i = ci + di;
                    let j = cj + dj;
                    if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
                        continue;
                    }
                    for &t in &self.buckets[(j * self.nx as isize + i) as usize] {
                        let l = mesh.barycentric(t, p);
                        let deficit = -l[0].min(l[1]).min(l[2]);
                        if deficit <= 1e-12 {
                            return (t, l);
                        }
                        if best.is_none_or(|(_, _, d)| deficit < d) {
                            best = Some((t, l, deficit));
                        }
                    }
                }
            }
            // Accept a near miss on the widest ring searched so far.
            if ring == 2 {
                if let Some((t, l, d)) = best {
                    if d < 1e-9 {
                        return (t, clamp_bary(l));
                    }
                }
            }
        }
        // Fallback: nearest centroid over all elements (rare; points that
        // genuinely left the mesh polygon).
        let mut best_t = 0;
        let mut best_d = f64::INFINITY;
        for t in 0..mesh.triangle_count() {
            let c = mesh.centroid(t);
            let d = (c[0] - p[0]).hypot(c[1] - p[1]);
            if d < best_d {
                best_d = d;
                best_t = t;
            }
        }
        (best_t, clamp_bary(mesh.barycentric(best_t, p)))
    }
}

fn clamp_bary(l: [f64; 3]) -> [f64; 3] {
    let c = [l[0].max(0.0), l[1].max(0.0), l[2].max(0.0)];
    let s = c[0] + c[1] + c[2];
    [c[0] / s, c[1] / s, c[2] / s]
}

// ---------------------------------------------------------------------------
// Conforming sub-region extraction
// ---------------------------------------------------------------------------

/// A sub-mesh made of whole parent elements (no cut elements), with maps
/// back to the parent numbering. Used for frozen-metric extension solves;
/// traces are nodal values of the parent field, hence exact.
#[derive(Debug, Clone)]
pub struct SubMesh {
    pub mesh: DiskMesh,
    /// Sub-mesh vertex -> parent vertex.
    pub vertex_map: Vec<usize>,
    /// Sub-mesh element -> parent element.
    pub elem_map: Vec<usize>,
}

/// Extract the conforming core of `B(center, radius)`: all elements whose
/// three vertices lie in the closed ball. The jagged boundary tracks the
/// circle to within one element diameter.
pub fn clip_submesh(mesh: &DiskMesh, center: [f64; 2], radius: f64) -> Result<SubMesh> {
    let inside = |v: usize| {
        let p = mesh.vertex(v);
        (p[0] - center[0]).hypot(p[1] - center[1]) <= radius + 1e-12
    };
    let mut elem_map = Vec::new();
    for t in 0..mesh.triangle_count() {
        let tri = mesh.triangle(t);
        if tri.iter().all(|&v| inside(v)) {
            elem_map.push(t);
        }
    }
    if elem_map.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut parent_to_sub = vec![usize::MAX; mesh.vertex_count()];
    let mut vertex_map = Vec::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(elem_map.len());
    for &t in &elem_map {
        let tri = mesh.triangle(t);
        let mut sub_tri = [0usize; 3];
        for (k, &v) in tri.iter().enumerate() {
            if parent_to_sub[v] == usize::MAX {
                parent_to_sub[v] = vertices.len();
                vertices.push(mesh.vertex(v));
                vertex_map.push(v);
            }
            sub_tri[k] = parent_to_sub[v];
        }
        triangles.push(sub_tri);
    }
    let sub = DiskMesh::from_raw(vertices, triangles, mesh.refinement_level());
    Ok(SubMesh {
        mesh: sub,
        vertex_map,
        elem_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Area of the inscribed regular polygon with `sides` sides.
    fn inscribed_polygon_area(sides: u32) -> f64 {
        let n = sides as f64;
        0.5 * n * (2.0 * std::f64::consts::PI / n).sin()
    }

    #[test]
    fn coarse_mesh_shape() {
        let m = DiskMesh::unit_disk(0).unwrap();
        assert_eq!(m.triangle_count(), 8);
        assert_eq!(m.vertex_count(), 9);
        let rel = (m.total_area() - std::f64::consts::PI).abs() / std::f64::consts::PI;
        assert!(rel < 0.15, "rel area error {rel}");
    }

    #[test]
    fn area_matches_inscribed_polygon_exactly() {
        for level in [0, 1, 2, 3, 4] {
            let m = DiskMesh::unit_disk(level).unwrap();
            let expect = inscribed_polygon_area(8 * 2u32.pow(level));
            assert!(
                (m.total_area() - expect).abs() < 1e-12,
                "level {level}: {} vs {expect}",
                m.total_area()
            );
        }
    }

    #[test]
    fn area_convergence_rates() {
        let pi = std::f64::consts::PI;
        let m4 = DiskMesh::unit_disk(4).unwrap();
        assert!((m4.total_area() - pi).abs() / pi < 0.01);
        let m6 = DiskMesh::unit_disk(6).unwrap();
        assert!((m6.total_area() - pi).abs() / pi < 0.001);
        assert_eq!(m6.triangle_count(), 8 * 4usize.pow(6));
    }

    #[test]
    fn positively_oriented_and_boundary_on_circle() {
        let m = DiskMesh::unit_disk(3).unwrap();
        for t in 0..m.triangle_count() {
            assert!(m.area(t) > 0.0);
        }
        for v in m.boundary_vertices() {
            let p = m.vertex(v);
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nested_refinement_prefix() {
        let coarse = DiskMesh::unit_disk(2).unwrap();
        let fine = DiskMesh::unit_disk(3).unwrap();
        assert_eq!(fine.triangle_count(), 4 * coarse.triangle_count());
        for v in 0..coarse.vertex_count() {
            let a = coarse.vertex(v);
            let b = fine.vertex(v);
            assert!(dist(a, b) < 1e-15, "vertex {v} moved");
        }
    }

    #[test]
    fn level_out_of_range() {
        assert!(matches!(
            DiskMesh::unit_disk(10),
            Err(Error::RefinementOutOfRange(10))
        ));
    }

    #[test]
    fn locate_finds_containing_triangle() {
        let m = DiskMesh::unit_disk(4).unwrap();
        for p in [[0.0, 0.0], [0.3, 0.4], [-0.7, 0.1], [0.05, -0.9]] {
            let (t, l) = m.locate(p);
            let tri = m.triangle(t);
            let mut q = [0.0; 2];
            for k in 0..3 {
                q[0] += l[k] * m.vertex(tri[k])[0];
                q[1] += l[k] * m.vertex(tri[k])[1];
            }
            assert!(dist(p, q) < 1e-10);
        }
    }

    #[test]
    fn clip_submesh_covers_ball_core() {
        let m = DiskMesh::unit_disk(5).unwrap();
        let sub = clip_submesh(&m, [0.1, -0.1], 0.4).unwrap();
        // Conforming core area is within one element diameter band of the disk.
        let ball = std::f64::consts::PI * 0.4 * 0.4;
        let band = 2.0 * std::f64::consts::PI * 0.4 * m.max_diameter();
        assert!(sub.mesh.total_area() <= ball + 1e-12);
        assert!(sub.mesh.total_area() >= ball - band);
        // Vertex map points at identical coordinates.
        for (sv, &pv) in sub.vertex_map.iter().enumerate() {
            assert_eq!(sub.mesh.vertex(sv), m.vertex(pv));
        }
        // Sub-mesh boundary vertices are near the circle or mesh boundary.
        for v in sub.mesh.boundary_vertices() {
            let p = sub.mesh.vertex(v);
            let r = (p[0] - 0.1).hypot(p[1] + 0.1);
            assert!(r > 0.4 - 2.0 * m.max_diameter());
        }
    }

    #[test]
    fn hash_is_stable_and_level_sensitive() {
        let a = DiskMesh::unit_disk(2).unwrap();
        let b = DiskMesh::unit_disk(2).unwrap();
        let c = DiskMesh::unit_disk(3).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn csv_dumps_are_deterministic() {
        let m = DiskMesh::unit_disk(1).unwrap();
        assert_eq!(m.vertices_csv(), m.vertices_csv());
        let lines: Vec<&str> = m.vertices_csv().lines().map(|_| "").collect();
        assert_eq!(lines.len(), 1 + m.vertex_count());
        assert!(m.triangles_csv().starts_with("triangle_id,v0,v1,v2,area\n"));
    }
}
