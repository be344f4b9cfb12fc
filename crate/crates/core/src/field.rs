//! Nodal vector fields `v : mesh → Rᴺ` with exact per-element P1 gradients.

use crate::error::{Error, Result};
use crate::mesh::DiskMesh;

/// A P1 finite-element map into `Rᴺ`. Values are vertex-major
/// (`values[v*dim + j]`); the gradient cache holds the exact element
/// gradient of the nodal data, laid out `grads[t*2*dim + alpha*dim + j]`
/// for space direction `alpha` and target component `j`.
#[derive(Debug, Clone)]
pub struct VectorField {
    dim: usize,
    values: Vec<f64>,
    grads: Vec<f64>,
}

impl VectorField {
    pub fn from_values(mesh: &DiskMesh, dim: usize, values: Vec<f64>) -> Result<VectorField> {
        if dim == 0 {
            return Err(Error::ShapeMismatch("target dimension must be >= 1".into()));
        }
        if values.len() != mesh.vertex_count() * dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {} nodal values, got {}",
                mesh.vertex_count() * dim,
                values.len()
            )));
        }
        let grads = compute_gradients(mesh, dim, &values);
        Ok(VectorField { dim, values, grads })
    }

    /// Sample a closed-form map at the mesh vertices.
    pub fn sample(mesh: &DiskMesh, dim: usize, f: impl Fn([f64; 2]) -> Vec<f64>) -> VectorField {
        let mut values = Vec::with_capacity(mesh.vertex_count() * dim);
        for v in 0..mesh.vertex_count() {
            let val = f(mesh.vertex(v));
            assert_eq!(val.len(), dim, "sampler returned wrong dimension");
            values.extend_from_slice(&val);
        }
        let grads = compute_gradients(mesh, dim, &values);
        VectorField { dim, values, grads }
    }

    pub fn constant(mesh: &DiskMesh, value: &[f64]) -> VectorField {
        let dim = value.len();
        let values: Vec<f64> = value.repeat(mesh.vertex_count());
        let grads = vec![0.0; mesh.triangle_count() * 2 * dim];
        VectorField { dim, values, grads }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, vertex: usize) -> &[f64] {
        &self.values[vertex * self.dim..(vertex + 1) * self.dim]
    }

    /// Element gradient, a `2 × dim` block.
    pub fn grad(&self, t: usize) -> &[f64] {
        &self.grads[t * 2 * self.dim..(t + 1) * 2 * self.dim]
    }

    /// P1 evaluation at an arbitrary point.
    pub fn eval_at(&self, mesh: &DiskMesh, p: [f64; 2]) -> Vec<f64> {
        let (t, l) = mesh.locate(p);
        let tri = mesh.triangle(t);
        let mut out = vec![0.0; self.dim];
        for k in 0..3 {
            let val = self.value(tri[k]);
            for j in 0..self.dim {
                out[j] += l[k] * val[j];
            }
        }
        out
    }

    /// Element gradient at the element containing `p` (piecewise constant).
    pub fn grad_at(&self, mesh: &DiskMesh, p: [f64; 2]) -> &[f64] {
        let (t, _) = mesh.locate(p);
        self.grad(t)
    }

    /// Linear combination `a·self + b·other`.
    pub fn axpy(&self, mesh: &DiskMesh, a: f64, b: f64, other: &VectorField) -> Result<VectorField> {
        if other.dim != self.dim || other.values.len() != self.values.len() {
            return Err(Error::ShapeMismatch("field shapes differ".into()));
        }
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(x, y)| a * x + b * y)
            .collect();
        VectorField::from_values(mesh, self.dim, values)
    }

    /// Field dump: `vertex_id,x,y,v_1..v_N`.
    pub fn to_csv(&self, mesh: &DiskMesh) -> String {
        let mut header = String::from("vertex_id,x,y");
        for j in 1..=self.dim {
            header.push_str(&format!(",v_{j}"));
        }
        header.push('\n');
        let mut out = header;
        for v in 0..mesh.vertex_count() {
            let p = mesh.vertex(v);
            out.push_str(&format!("{},{},{}", v, p[0], p[1]));
            for j in 0..self.dim {
                out.push_str(&format!(",{}", self.value(v)[j]));
            }
            out.push('\n');
        }
        out
    }
}

fn compute_gradients(mesh: &DiskMesh, dim: usize, values: &[f64]) -> Vec<f64> {
    let mut grads = vec![0.0; mesh.triangle_count() * 2 * dim];
    for t in 0..mesh.triangle_count() {
        let tri = mesh.triangle(t);
        let bg = mesh.bary_grad(t);
        let block = &mut grads[t * 2 * dim..(t + 1) * 2 * dim];
        for (k, &v) in tri.iter().enumerate() {
            for j in 0..dim {
                let val = values[v * dim + j];
                block[j] += bg[k][0] * val;
                block[dim + j] += bg[k][1] * val;
            }
        }
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_field_has_exact_gradient() {
        let mesh = DiskMesh::unit_disk(3).unwrap();
        // v(x) = A x with A = [[1, 2], [0, -1]] acting on (x₁, x₂).
        let f = VectorField::sample(&mesh, 2, |p| {
            vec![p[0] + 2.0 * p[1], -p[1]]
        });
        for t in 0..mesh.triangle_count() {
            let g = f.grad(t);
            // layout: [∂₁v¹, ∂₁v², ∂₂v¹, ∂₂v²]
            assert!((g[0] - 1.0).abs() < 1e-12);
            assert!((g[1] - 0.0).abs() < 1e-12);
            assert!((g[2] - 2.0).abs() < 1e-12);
            assert!((g[3] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_at_reproduces_linear_functions() {
        let mesh = DiskMesh::unit_disk(3).unwrap();
        let f = VectorField::sample(&mesh, 1, |p| vec![3.0 * p[0] - p[1] + 0.5]);
        for p in [[0.11, 0.22], [-0.4, 0.1], [0.0, 0.0]] {
            let v = f.eval_at(&mesh, p);
            assert!((v[0] - (3.0 * p[0] - p[1] + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_detected() {
        let mesh = DiskMesh::unit_disk(1).unwrap();
        assert!(matches!(
            VectorField::from_values(&mesh, 2, vec![0.0; 5]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn csv_header_matches_dim() {
        let mesh = DiskMesh::unit_disk(0).unwrap();
        let f = VectorField::constant(&mesh, &[1.0, 2.0]);
        let csv = f.to_csv(&mesh);
        assert!(csv.starts_with("vertex_id,x,y,v_1,v_2\n"));
    }
}
