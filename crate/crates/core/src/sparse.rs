//! Minimal CSR matrix with Jacobi-preconditioned conjugate gradients.
//!
//! The sparsity pattern is built once per (mesh, dof layout) and refilled
//! per Newton iteration. Matrix-vector products parallelize over rows with
//! a fixed per-row summation order; inner products are sequential, so CG
//! trajectories do not depend on the worker count.

use rayon::prelude::*;

/// Symmetric sparse matrix in CSR layout with a frozen pattern.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build the pattern from per-row column sets (sorted, deduplicated).
    pub fn from_pattern(mut cols_per_row: Vec<Vec<usize>>) -> CsrMatrix {
        let n = cols_per_row.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for cols in cols_per_row.iter_mut() {
            cols.sort_unstable();
            cols.dedup();
            col_idx.extend_from_slice(cols);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn zero_values(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Add into entry (i, j); the position must exist in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        let slice = &self.col_idx[lo..hi];
        let k = slice.binary_search(&j).expect("entry outside CSR pattern");
        self.values[lo + k] += v;
    }

    pub fn mat_vec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        });
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] = self.values[k];
                }
            }
        }
        d
    }
}

pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Jacobi-preconditioned CG for SPD systems.
pub fn pcg(a: &CsrMatrix, b: &[f64], rel_tol: f64, max_iter: usize) -> CgOutcome {
    let n = a.n;
    let mut diag = a.diagonal();
    for d in diag.iter_mut() {
        if d.abs() < 1e-300 {
            *d = 1.0;
        }
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return CgOutcome {
            solution: x,
            iterations: 0,
            converged: true,
        };
    }
    let mut z: Vec<f64> = r.iter().zip(diag.iter()).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let tol = rel_tol * b_norm;
    for it in 0..max_iter {
        a.mat_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            // Not positive definite along p (or breakdown): bail with the
            // current iterate; the caller falls back to a safer step.
            return CgOutcome {
                solution: x,
                iterations: it,
                converged: false,
            };
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= tol {
            return CgOutcome {
                solution: x,
                iterations: it + 1,
                converged: true,
            };
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome {
        solution: x,
        iterations: max_iter,
        converged: false,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let pattern: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut cols = vec![i];
                if i > 0 {
                    cols.push(i - 1);
                }
                if i + 1 < n {
                    cols.push(i + 1);
                }
                cols
            })
            .collect();
        let mut m = CsrMatrix::from_pattern(pattern);
        for i in 0..n {
            m.add(i, i, 2.0);
            if i > 0 {
                m.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                m.add(i, i + 1, -1.0);
            }
        }
        m
    }

    #[test]
    fn cg_solves_tridiagonal() {
        let n = 64;
        let a = laplacian_1d(n);
        let b = vec![1.0; n];
        let out = pcg(&a, &b, 1e-12, 10 * n);
        assert!(out.converged);
        let mut ax = vec![0.0; n];
        a.mat_vec(&out.solution, &mut ax);
        for i in 0..n {
            assert!((ax[i] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cg_zero_rhs() {
        let a = laplacian_1d(8);
        let out = pcg(&a, &vec![0.0; 8], 1e-12, 100);
        assert!(out.converged);
        assert!(out.solution.iter().all(|&x| x == 0.0));
    }
}
