//! Registries of boundary data families and critical-system right-hand
//! sides. Right-hand sides carry their growth bound by construction:
//! every registered `f` satisfies `|f(u, q)| ≤ Γ·|q|²_g` analytically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::mesh::DiskMesh;
use crate::solver::boundary_trace;

/// Closed-form boundary data (and full-field samplers for manufactured
/// tests).
#[derive(Debug, Clone)]
pub enum BoundaryFamily {
    Constant {
        value: Vec<f64>,
    },
    /// `φ(x) = A·x + offset`.
    Affine {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
    /// Radial power profile `ρ(|x − center|)^exponent` into the first
    /// component, with the core smoothly clipped below `clip_radius`:
    /// `ρ(r) = (r² + r_c²) / (2 r_c)` for `r < r_c`, `ρ(r) = r` otherwise
    /// (C¹ match at `r_c`). With `exponent = (p−n)/(p−1)` this is the
    /// p-Laplace fundamental-solution profile.
    RadialPower {
        center: [f64; 2],
        exponent: f64,
        clip_radius: f64,
    },
    /// `φ(x) = x` on the unit circle (values into R², N = 2).
    CircleValued,
    /// Random trigonometric polynomial per component with `1/k²` decay,
    /// deterministic in the seed.
    RandomFourier {
        dim: usize,
        modes: usize,
        amplitude: f64,
        seed: u64,
    },
}

impl BoundaryFamily {
    pub fn dim(&self) -> usize {
        match self {
            BoundaryFamily::Constant { value } => value.len(),
            BoundaryFamily::Affine { matrix, .. } => matrix.len(),
            BoundaryFamily::RadialPower { .. } => 1,
            BoundaryFamily::CircleValued => 2,
            BoundaryFamily::RandomFourier { dim, .. } => *dim,
        }
    }

    /// Evaluate the profile at an arbitrary point (used both for boundary
    /// traces and manufactured full-field oracles).
    pub fn eval(&self, x: [f64; 2]) -> Vec<f64> {
        match self {
            BoundaryFamily::Constant { value } => value.clone(),
            BoundaryFamily::Affine { matrix, offset } => matrix
                .iter()
                .zip(offset.iter())
                .map(|(row, off)| row[0] * x[0] + row[1] * x[1] + off)
                .collect(),
            BoundaryFamily::RadialPower {
                center,
                exponent,
                clip_radius,
            } => {
                let r = (x[0] - center[0]).hypot(x[1] - center[1]);
                let rc = *clip_radius;
                let rho = if rc > 0.0 && r < rc {
                    (r * r + rc * rc) / (2.0 * rc)
                } else {
                    r
                };
                vec![rho.powf(*exponent)]
            }
            BoundaryFamily::CircleValued => vec![x[0], x[1]],
            BoundaryFamily::RandomFourier {
                dim,
                modes,
                amplitude,
                seed,
            } => {
                let theta = x[1].atan2(x[0]);
                let mut out = vec![0.0; *dim];
                // Cheap splitmix-style generator; enough to decorrelate
                // coefficients deterministically from the seed.
                let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
                let mut next = || {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
                };
                for item in out.iter_mut() {
                    let mut acc = 0.0;
                    for k in 1..=*modes {
                        let sigma = amplitude / (k * k) as f64;
                        let a = next();
                        let b = next();
                        acc += sigma * (a * (k as f64 * theta).cos() + b * (k as f64 * theta).sin());
                    }
                    *item = acc;
                }
                out
            }
        }
    }

    pub fn boundary_values(&self, mesh: &DiskMesh) -> Vec<f64> {
        boundary_trace(mesh, self.dim(), |p| self.eval(p))
    }

    /// Sample the profile on every vertex (manufactured-solution oracle).
    pub fn sample_field(&self, mesh: &DiskMesh) -> VectorField {
        VectorField::sample(mesh, self.dim(), |p| self.eval(p))
    }
}

/// Serializable boundary-data specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub family: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Deserialize)]
struct AffineParams {
    matrix: Vec<Vec<f64>>,
    #[serde(default)]
    offset: Vec<f64>,
}

#[derive(Deserialize)]
struct RadialParams {
    #[serde(default = "default_radial_center")]
    center: [f64; 2],
    exponent: f64,
    #[serde(default = "default_clip")]
    clip_radius: f64,
}

#[derive(Deserialize)]
struct FourierParams {
    #[serde(default = "default_two")]
    dim: usize,
    #[serde(default = "default_four")]
    modes: usize,
    #[serde(default = "default_amp")]
    amplitude: f64,
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize)]
struct ConstantParams {
    value: Vec<f64>,
}

fn default_radial_center() -> [f64; 2] {
    [1.5, 0.0]
}
fn default_clip() -> f64 {
    0.05
}
fn default_two() -> usize {
    2
}
fn default_four() -> usize {
    4
}
fn default_amp() -> f64 {
    0.5
}

impl BoundaryFamily {
    pub fn from_spec(spec: &BoundarySpec) -> Result<BoundaryFamily> {
        let bad = |e: serde_json::Error| {
            Error::ShapeMismatch(format!("boundary family '{}': {e}", spec.family))
        };
        match spec.family.as_str() {
            "constant" => {
                let p: ConstantParams = serde_json::from_value(spec.params.clone()).map_err(bad)?;
                Ok(BoundaryFamily::Constant { value: p.value })
            }
            "affine" => {
                let p: AffineParams = serde_json::from_value(spec.params.clone()).map_err(bad)?;
                let n = p.matrix.len();
                if n == 0 || p.matrix.iter().any(|r| r.len() != 2) {
                    return Err(Error::ShapeMismatch(
                        "affine boundary matrix must be N x 2".into(),
                    ));
                }
                let offset = if p.offset.is_empty() {
                    vec![0.0; n]
                } else if p.offset.len() == n {
                    p.offset
                } else {
                    return Err(Error::ShapeMismatch("affine offset length".into()));
                };
                Ok(BoundaryFamily::Affine {
                    matrix: p.matrix,
                    offset,
                })
            }
            "radial_pfundamental" => {
                let p: RadialParams = serde_json::from_value(spec.params.clone()).map_err(bad)?;
                Ok(BoundaryFamily::RadialPower {
                    center: p.center,
                    exponent: p.exponent,
                    clip_radius: p.clip_radius,
                })
            }
            "circle_valued" => Ok(BoundaryFamily::CircleValued),
            "random_fourier" => {
                let p: FourierParams = serde_json::from_value(spec.params.clone()).map_err(bad)?;
                Ok(BoundaryFamily::RandomFourier {
                    dim: p.dim,
                    modes: p.modes,
                    amplitude: p.amplitude,
                    seed: p.seed,
                })
            }
            other => Err(Error::ShapeMismatch(format!(
                "unknown boundary family '{other}'"
            ))),
        }
    }
}

pub fn boundary_families() -> Vec<&'static str> {
    vec![
        "affine",
        "circle_valued",
        "constant",
        "radial_pfundamental",
        "random_fourier",
    ]
}

// ---------------------------------------------------------------------------
// Critical-system right-hand sides
// ---------------------------------------------------------------------------

/// Right-hand sides `f(u, ∇u)` for the critical system in dimension 2,
/// each satisfying `|f| ≤ Γ·|∇u|²_g` by construction.
#[derive(Debug, Clone)]
pub enum CriticalRhs {
    Zero,
    /// `f = Γ·|∇u|²_g · e` for a fixed unit vector `e`.
    DirectionalGrowth { gamma: f64, direction: Vec<f64> },
    /// `f = Γ·|∇u|²_g · u/√(1+|u|²)`; the saturating factor has norm < 1.
    UnitVectorSaturating { gamma: f64 },
}

impl CriticalRhs {
    pub fn directional_growth(gamma: f64, mut direction: Vec<f64>) -> CriticalRhs {
        let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for d in direction.iter_mut() {
                *d /= norm;
            }
        }
        CriticalRhs::DirectionalGrowth { gamma, direction }
    }

    /// The certified growth constant Γ of this family.
    pub fn certified_gamma(&self) -> f64 {
        match self {
            CriticalRhs::Zero => 0.0,
            CriticalRhs::DirectionalGrowth { gamma, .. } => *gamma,
            CriticalRhs::UnitVectorSaturating { gamma } => *gamma,
        }
    }

    /// Evaluate `f` from the solution value and `|∇u|²_g` (which is
    /// `|∇u|ⁿ_g` at n = 2).
    pub fn eval(&self, u: &[f64], grad_norm_g_sq: f64) -> Vec<f64> {
        match self {
            CriticalRhs::Zero => vec![0.0; u.len()],
            CriticalRhs::DirectionalGrowth { gamma, direction } => {
                let mut out = vec![0.0; u.len()];
                for (o, d) in out.iter_mut().zip(direction.iter()) {
                    *o = gamma * grad_norm_g_sq * d;
                }
                out
            }
            CriticalRhs::UnitVectorSaturating { gamma } => {
                let norm2: f64 = u.iter().map(|x| x * x).sum();
                let nu = 1.0 / (1.0 + norm2).sqrt();
                u.iter().map(|&x| gamma * grad_norm_g_sq * nu * x).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhsSpec {
    pub family: String,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub direction: Vec<f64>,
}

impl CriticalRhs {
    pub fn from_spec(spec: &RhsSpec, dim: usize) -> Result<CriticalRhs> {
        match spec.family.as_str() {
            "zero" => Ok(CriticalRhs::Zero),
            "directional_growth" => {
                let dir = if spec.direction.is_empty() {
                    let mut d = vec![0.0; dim];
                    d[0] = 1.0;
                    d
                } else if spec.direction.len() == dim {
                    spec.direction.clone()
                } else {
                    return Err(Error::ShapeMismatch("rhs direction length".into()));
                };
                Ok(CriticalRhs::directional_growth(spec.gamma, dir))
            }
            "unit_vector_saturating" => Ok(CriticalRhs::UnitVectorSaturating { gamma: spec.gamma }),
            other => Err(Error::ShapeMismatch(format!("unknown rhs family '{other}'"))),
        }
    }
}

pub fn rhs_families() -> Vec<&'static str> {
    vec!["directional_growth", "unit_vector_saturating", "zero"]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_power_clip_is_c1_and_positive() {
        let f = BoundaryFamily::RadialPower {
            center: [0.0, 0.0],
            exponent: 2.0 / 3.0,
            clip_radius: 0.1,
        };
        // Continuity across the clip radius.
        let below = f.eval([0.1 - 1e-9, 0.0])[0];
        let above = f.eval([0.1 + 1e-9, 0.0])[0];
        assert!((below - above).abs() < 1e-6);
        // Positive at the center.
        assert!(f.eval([0.0, 0.0])[0] > 0.0);
        // Far from the clip, exactly r^(2/3).
        let v = f.eval([0.5, 0.0])[0];
        assert!((v - 0.5_f64.powf(2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn random_fourier_is_deterministic_in_seed() {
        let f = |seed| BoundaryFamily::RandomFourier {
            dim: 2,
            modes: 4,
            amplitude: 1.0,
            seed,
        };
        let a = f(7).eval([0.6, 0.8]);
        let b = f(7).eval([0.6, 0.8]);
        let c = f(8).eval([0.6, 0.8]);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rhs_growth_bound_holds() {
        let rhs = CriticalRhs::directional_growth(0.3, vec![3.0, 4.0]);
        let f = rhs.eval(&[1.0, 2.0], 5.0);
        let norm = (f[0] * f[0] + f[1] * f[1]).sqrt();
        assert!(norm <= 0.3 * 5.0 + 1e-12);

        let rhs = CriticalRhs::UnitVectorSaturating { gamma: 0.3 };
        let f = rhs.eval(&[10.0, 0.0], 5.0);
        let norm = (f[0] * f[0] + f[1] * f[1]).sqrt();
        assert!(norm <= 0.3 * 5.0 + 1e-12);
    }

    #[test]
    fn spec_parsing() {
        let spec: BoundarySpec = serde_json::from_str(
            r#"{"family":"affine","params":{"matrix":[[1.0,0.0],[0.0,1.0]]}}"#,
        )
        .unwrap();
        let fam = BoundaryFamily::from_spec(&spec).unwrap();
        assert_eq!(fam.eval([0.3, 0.4]), vec![0.3, 0.4]);
        let bad: BoundarySpec =
            serde_json::from_str(r#"{"family":"nope","params":{}}"#).unwrap();
        assert!(BoundaryFamily::from_spec(&bad).is_err());
    }
}
