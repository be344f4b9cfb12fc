//! Metric tensor fields `g` on the unit ball: evaluation, inversion,
//! square roots, ellipticity constants, Hölder seminorms and distance to a
//! constant metric.
//!
//! Matrix square roots and inverses are obtained from one symmetric
//! eigendecomposition per evaluation; the operator norm of a matrix is its
//! largest singular value. Seminorm and bound estimators are sample-based
//! lower bounds of the true suprema.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regularity class tag of a metric field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricKind {
    Constant,
    Linfty,
    Holder(f64),
    C1,
}

/// All derived quantities of `g` at one point: inverse, square root,
/// inverse square root and `√det g`.
#[derive(Debug, Clone)]
pub struct MetricSample {
    pub point: Vec<f64>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub sqrt_g: DMatrix<f64>,
    pub inv_sqrt_g: DMatrix<f64>,
    pub sqrt_det: f64,
}

/// Certified-over-samples eigenvalue range of a metric field.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EllipticityBounds {
    pub lambda: f64,
    pub lambda_max: f64,
    pub sample_count: usize,
}

#[derive(Debug, Clone)]
enum Repr {
    Constant(DMatrix<f64>),
    ClosedForm(Family),
    Grid(GridMetric),
}

/// Named analytic metric families with numeric parameters. All families
/// are conformal (scalar multiple of the identity), which keeps their
/// regularity class and seminorms explicit.
#[derive(Debug, Clone)]
enum Family {
    /// `g = (1 + eps·sin(k π x₁))·I`
    ConformalSin { eps: f64, k: f64 },
    /// `g = (1 + a·x₁ + b·x₂)·I`
    ConformalAffine { a: f64, b: f64 },
    /// `g = (1 + c·|x|^beta)·I`; exact `C^{0,beta}` profile
    RadialHolder { c: f64, beta: f64 },
    /// Piecewise constant `low·I / high·I` on a `k × k` checkerboard
    Checkerboard { k: f64, low: f64, high: f64 },
}

#[derive(Debug, Clone)]
struct GridMetric {
    nx: usize,
    ny: usize,
    /// Row-major node entries, `n*n` values per node on the lattice
    /// covering `[-1,1]²`.
    entries: Vec<f64>,
}

/// A metric tensor field on the closed unit ball.
#[derive(Debug, Clone)]
pub struct MetricField {
    dim: usize,
    kind: MetricKind,
    repr: Repr,
}

impl MetricField {
    /// The flat metric ξ (identity everywhere).
    pub fn identity(dim: usize) -> Self {
        MetricField {
            dim,
            kind: MetricKind::Constant,
            repr: Repr::Constant(DMatrix::identity(dim, dim)),
        }
    }

    /// A constant field. Fails if the matrix is not SPD.
    pub fn constant(g: DMatrix<f64>) -> Result<Self> {
        check_spd(&g)?;
        Ok(MetricField {
            dim: g.nrows(),
            kind: MetricKind::Constant,
            repr: Repr::Constant(g),
        })
    }

    /// `g = (1 + eps·sin(k π x₁))·I` in dimension `dim`.
    pub fn conformal_sin(dim: usize, eps: f64, k: f64) -> Result<Self> {
        if eps.abs() >= 1.0 {
            return Err(Error::MetricNotSPD(format!(
                "conformal_sin amplitude {eps} makes the conformal factor vanish"
            )));
        }
        Ok(MetricField {
            dim,
            kind: MetricKind::C1,
            repr: Repr::ClosedForm(Family::ConformalSin { eps, k }),
        })
    }

    /// `g = (1 + a·x₁ + b·x₂)·I` in dimension `dim`.
    pub fn conformal_affine(dim: usize, a: f64, b: f64) -> Result<Self> {
        if a.hypot(b) >= 1.0 {
            return Err(Error::MetricNotSPD(format!(
                "conformal_affine slope ({a}, {b}) makes the factor vanish on the ball"
            )));
        }
        Ok(MetricField {
            dim,
            kind: MetricKind::C1,
            repr: Repr::ClosedForm(Family::ConformalAffine { a, b }),
        })
    }

    /// `g = (1 + c·|x|^beta)·I`, an exact Hölder-`beta` profile.
    pub fn radial_holder(dim: usize, c: f64, beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) || beta == 0.0 {
            return Err(Error::MetricNotSPD(format!(
                "radial_holder exponent {beta} outside (0,1)"
            )));
        }
        if c <= -1.0 {
            return Err(Error::MetricNotSPD(format!(
                "radial_holder amplitude {c} makes the factor vanish"
            )));
        }
        Ok(MetricField {
            dim,
            kind: MetricKind::Holder(beta),
            repr: Repr::ClosedForm(Family::RadialHolder { c, beta }),
        })
    }

    /// Piecewise-constant checkerboard between `low·I` and `high·I`.
    pub fn checkerboard(dim: usize, k: f64, low: f64, high: f64) -> Result<Self> {
        if low <= 0.0 || high <= 0.0 {
            return Err(Error::MetricNotSPD(format!(
                "checkerboard factors ({low}, {high}) must be positive"
            )));
        }
        Ok(MetricField {
            dim,
            kind: MetricKind::Linfty,
            repr: Repr::ClosedForm(Family::Checkerboard { k, low, high }),
        })
    }

    /// Grid-sampled field on a lattice over `[-1,1]²`; entries are
    /// interpolated bilinearly and re-symmetrized, and SPD-ness is
    /// re-checked after interpolation.
    pub fn grid(nx: usize, ny: usize, entries: Vec<f64>) -> Result<Self> {
        if nx < 2 || ny < 2 || entries.len() != nx * ny * 4 {
            return Err(Error::ShapeMismatch(format!(
                "grid metric expects nx,ny >= 2 and nx*ny*4 entries, got {}x{} with {}",
                nx,
                ny,
                entries.len()
            )));
        }
        Ok(MetricField {
            dim: 2,
            kind: MetricKind::Linfty,
            repr: Repr::Grid(GridMetric { nx, ny, entries }),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.repr, Repr::Constant(_))
    }

    /// Raw evaluation of `g` at a point. Constant fields evaluate
    /// everywhere; position-dependent fields are restricted to the closed
    /// unit ball.
    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if x.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "point dimension {} vs metric dimension {}",
                x.len(),
                self.dim
            )));
        }
        match &self.repr {
            Repr::Constant(g) => Ok(g.clone()),
            Repr::ClosedForm(fam) => {
                check_domain(x)?;
                let factor = fam.factor(x);
                if factor <= 0.0 {
                    return Err(Error::MetricNotSPD(format!(
                        "conformal factor {factor} at {x:?}"
                    )));
                }
                Ok(DMatrix::identity(self.dim, self.dim) * factor)
            }
            Repr::Grid(grid) => {
                check_domain(x)?;
                let g = grid.interpolate(x[0], x[1]);
                check_spd(&g)?;
                Ok(g)
            }
        }
    }

    /// All derived quantities at a point, computed from one symmetric
    /// eigendecomposition. This is the general entry point used by
    /// averages, solves and reports.
    pub fn sample(&self, x: &[f64]) -> Result<MetricSample> {
        check_domain(x)?;
        let g = self.eval(x)?;
        metric_sample_of(x, g)
    }

    /// `∂_k g` for each direction `k`, when the field is differentiable.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        match &self.repr {
            Repr::Constant(g) => {
                Ok(vec![DMatrix::zeros(g.nrows(), g.ncols()); self.dim])
            }
            Repr::ClosedForm(fam) => {
                let id = DMatrix::identity(self.dim, self.dim);
                match fam.factor_grad(x, self.dim) {
                    Some(df) => Ok(df.into_iter().map(|d| &id * d).collect()),
                    None => Err(Error::MetricNotC1),
                }
            }
            Repr::Grid(_) => Err(Error::MetricNotC1),
        }
    }

    pub fn has_gradient(&self) -> bool {
        match &self.repr {
            Repr::Constant(_) => true,
            Repr::ClosedForm(fam) => fam.differentiable(),
            Repr::Grid(_) => false,
        }
    }

    /// Freeze the field at `x`: the constant field `g(x)`.
    pub fn freeze(&self, x: &[f64]) -> Result<MetricField> {
        check_domain(x)?;
        let g = self.eval(x)?;
        MetricField::constant(g)
    }
}

impl Family {
    fn factor(&self, x: &[f64]) -> f64 {
        match self {
            Family::ConformalSin { eps, k } => {
                1.0 + eps * (k * std::f64::consts::PI * x[0]).sin()
            }
            Family::ConformalAffine { a, b } => {
                1.0 + a * x[0] + b * x.get(1).copied().unwrap_or(0.0)
            }
            Family::RadialHolder { c, beta } => {
                let r = x.iter().map(|t| t * t).sum::<f64>().sqrt();
                1.0 + c * r.powf(*beta)
            }
            Family::Checkerboard { k, low, high } => {
                let cell = |t: f64| (t * k).floor() as i64;
                let parity = x.iter().map(|&t| cell(t)).sum::<i64>();
                if parity.rem_euclid(2) == 0 {
                    *low
                } else {
                    *high
                }
            }
        }
    }

    fn differentiable(&self) -> bool {
        matches!(
            self,
            Family::ConformalSin { .. } | Family::ConformalAffine { .. }
        )
    }

    /// Gradient of the conformal factor, when smooth.
    fn factor_grad(&self, x: &[f64], dim: usize) -> Option<Vec<f64>> {
        match self {
            Family::ConformalSin { eps, k } => {
                let mut d = vec![0.0; dim];
                let kp = k * std::f64::consts::PI;
                d[0] = eps * kp * (kp * x[0]).cos();
                Some(d)
            }
            Family::ConformalAffine { a, b } => {
                let mut d = vec![0.0; dim];
                d[0] = *a;
                if dim > 1 {
                    d[1] = *b;
                }
                Some(d)
            }
            _ => None,
        }
    }
}

impl GridMetric {
    /// Bilinear interpolation of the four matrix entries, re-symmetrized.
    fn interpolate(&self, x: f64, y: f64) -> DMatrix<f64> {
        let fx = ((x + 1.0) / 2.0 * (self.nx - 1) as f64).clamp(0.0, (self.nx - 1) as f64);
        let fy = ((y + 1.0) / 2.0 * (self.ny - 1) as f64).clamp(0.0, (self.ny - 1) as f64);
        let i0 = (fx.floor() as usize).min(self.nx - 2);
        let j0 = (fy.floor() as usize).min(self.ny - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let node = |i: usize, j: usize, e: usize| self.entries[(j * self.nx + i) * 4 + e];
        let mut vals = [0.0; 4];
        for (e, v) in vals.iter_mut().enumerate() {
            let v00 = node(i0, j0, e);
            let v10 = node(i0 + 1, j0, e);
            let v01 = node(i0, j0 + 1, e);
            let v11 = node(i0 + 1, j0 + 1, e);
            *v = v00 * (1.0 - tx) * (1.0 - ty)
                + v10 * tx * (1.0 - ty)
                + v01 * (1.0 - tx) * ty
                + v11 * tx * ty;
        }
        let off = 0.5 * (vals[1] + vals[2]);
        DMatrix::from_row_slice(2, 2, &[vals[0], off, off, vals[3]])
    }
}

fn check_domain(x: &[f64]) -> Result<()> {
    let r2: f64 = x.iter().map(|t| t * t).sum();
    if r2 > 1.0 + 1e-9 {
        return Err(Error::OutOfDomain(x[0], x.get(1).copied().unwrap_or(0.0)));
    }
    Ok(())
}

fn check_spd(g: &DMatrix<f64>) -> Result<()> {
    let n = g.nrows();
    if g.ncols() != n {
        return Err(Error::ShapeMismatch("metric matrix must be square".into()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = 1.0 + g[(i, i)].abs().max(g[(j, j)].abs());
            if (g[(i, j)] - g[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::MetricNotSPD(format!(
                    "asymmetric entry ({i},{j}): {} vs {}",
                    g[(i, j)],
                    g[(j, i)]
                )));
            }
        }
    }
    let eig = g.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::MetricNotSPD(format!("smallest eigenvalue {min}")));
    }
    Ok(())
}

/// Build a [`MetricSample`] from an already evaluated matrix.
fn metric_sample_of(x: &[f64], g: DMatrix<f64>) -> Result<MetricSample> {
    check_spd(&g)?;
    let n = g.nrows();
    let eig = g.clone().symmetric_eigen();
    let q = &eig.eigenvectors;
    let rebuild = |f: &dyn Fn(f64) -> f64| -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            n,
            eig.eigenvalues.iter().map(|&l| f(l)),
        ));
        q * d * q.transpose()
    };
    let g_inv = rebuild(&|l| 1.0 / l);
    let sqrt_g = rebuild(&|l| l.sqrt());
    let inv_sqrt_g = rebuild(&|l| 1.0 / l.sqrt());
    let sqrt_det = eig.eigenvalues.iter().product::<f64>().sqrt();
    Ok(MetricSample {
        point: x.to_vec(),
        g,
        g_inv,
        sqrt_g,
        inv_sqrt_g,
        sqrt_det,
    })
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Smallest / largest eigenvalue of `g` over the sample set.
pub fn ellipticity_bounds(field: &MetricField, samples: &[Vec<f64>]) -> Result<EllipticityBounds> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in samples {
        let g = field.eval(x)?;
        let eig = g.symmetric_eigen();
        for &l in eig.eigenvalues.iter() {
            lo = lo.min(l);
            hi = hi.max(l);
        }
    }
    Ok(EllipticityBounds {
        lambda: lo,
        lambda_max: hi,
        sample_count: samples.len(),
    })
}

/// Sampled lower bound of `[g]_{C^{0,β}}`: the largest
/// `|g(x) − g(y)|_op / |x−y|^β` over the given pairs.
pub fn holder_seminorm(
    field: &MetricField,
    beta: f64,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<f64> {
    if !(0.0 < beta && beta < 1.0) {
        return Err(Error::ShapeMismatch(format!("beta {beta} outside (0,1)")));
    }
    if pairs.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut best = 0.0_f64;
    for (x, y) in pairs {
        let dist = x
            .iter()
            .zip(y.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist == 0.0 {
            return Err(Error::DegeneratePair(x[0], x.get(1).copied().unwrap_or(0.0)));
        }
        let diff = field.eval(x)? - field.eval(y)?;
        best = best.max(operator_norm(&diff) / dist.powf(beta));
    }
    Ok(best)
}

/// Max over samples of
/// `‖g−g0‖ + ‖id − g⁻¹g0‖ + ‖id − g·g0⁻¹‖` in operator norm.
pub fn distance_to_constant(
    field: &MetricField,
    g0: &DMatrix<f64>,
    samples: &[Vec<f64>],
) -> Result<f64> {
    check_spd(g0)?;
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let g0_inv = g0
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::MetricNotSPD("g0 not invertible".into()))?;
    let n = g0.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut worst = 0.0_f64;
    for x in samples {
        let s = field.sample(x)?;
        let t1 = operator_norm(&(&s.g - g0));
        let t2 = operator_norm(&(&id - &s.g_inv * g0));
        let t3 = operator_norm(&(&id - &s.g * &g0_inv));
        worst = worst.max(t1 + t2 + t3);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// JSON-loadable metric specifications
// ---------------------------------------------------------------------------

/// Serializable metric definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSpec {
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    ClosedForm {
        family: String,
        #[serde(default)]
        params: serde_json::Value,
        #[serde(default = "default_dim")]
        dimension: usize,
    },
    Grid {
        nx: usize,
        ny: usize,
        entries: Vec<f64>,
    },
}

fn default_dim() -> usize {
    2
}

#[derive(Deserialize)]
struct SinParams {
    #[serde(default = "one_tenth")]
    eps: f64,
    #[serde(default = "two")]
    k: f64,
}

#[derive(Deserialize)]
struct AffineParams {
    #[serde(default)]
    a: f64,
    #[serde(default)]
    b: f64,
}

#[derive(Deserialize)]
struct RadialHolderParams {
    #[serde(default = "one")]
    c: f64,
    #[serde(default = "half")]
    beta: f64,
}

#[derive(Deserialize)]
struct CheckerboardParams {
    #[serde(default = "two")]
    k: f64,
    #[serde(default = "one")]
    low: f64,
    #[serde(default = "two")]
    high: f64,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn half() -> f64 {
    0.5
}
fn one_tenth() -> f64 {
    0.1
}

/// Registry of named closed-form families, for listings.
pub fn metric_families() -> Vec<&'static str> {
    vec![
        "checkerboard",
        "conformal_affine",
        "conformal_sin",
        "constant",
        "identity",
        "radial_holder",
    ]
}

impl MetricField {
    pub fn from_spec(spec: &MetricSpec) -> Result<Self> {
        match spec {
            MetricSpec::Constant { matrix } => {
                let n = matrix.len();
                if n == 0 || matrix.iter().any(|row| row.len() != n) {
                    return Err(Error::ShapeMismatch(
                        "constant metric matrix must be square".into(),
                    ));
                }
                let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
                MetricField::constant(DMatrix::from_row_slice(n, n, &flat))
            }
            MetricSpec::ClosedForm {
                family,
                params,
                dimension,
            } => {
                let dim = *dimension;
                let bad = |e: serde_json::Error| {
                    Error::ShapeMismatch(format!("params for family '{family}': {e}"))
                };
                match family.as_str() {
                    "identity" => Ok(MetricField::identity(dim)),
                    "conformal_sin" => {
                        let p: SinParams =
                            serde_json::from_value(params.clone()).map_err(bad)?;
                        MetricField::conformal_sin(dim, p.eps, p.k)
                    }
                    "conformal_affine" => {
                        let p: AffineParams =
                            serde_json::from_value(params.clone()).map_err(bad)?;
                        MetricField::conformal_affine(dim, p.a, p.b)
                    }
                    "radial_holder" => {
                        let p: RadialHolderParams =
                            serde_json::from_value(params.clone()).map_err(bad)?;
                        MetricField::radial_holder(dim, p.c, p.beta)
                    }
                    "checkerboard" => {
                        let p: CheckerboardParams =
                            serde_json::from_value(params.clone()).map_err(bad)?;
                        MetricField::checkerboard(dim, p.k, p.low, p.high)
                    }
                    other => Err(Error::ShapeMismatch(format!(
                        "unknown metric family '{other}'"
                    ))),
                }
            }
            MetricSpec::Grid { nx, ny, entries } => MetricField::grid(*nx, *ny, entries.clone()),
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: MetricSpec = serde_json::from_str(json)
            .map_err(|e| Error::ShapeMismatch(format!("metric spec: {e}")))?;
        MetricField::from_spec(&spec)
    }
}
