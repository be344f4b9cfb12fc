//! Quantitative measurements on solved fields: frozen-metric comparison
//! ratios, sharp-average decay over dyadic balls, Morrey growth, Hölder
//! exponent fits, difference-quotient second-derivative integrals and
//! hole-filling ratios.
//!
//! Measure conventions follow the estimates they instantiate: sharp
//! averages use the Lebesgue measure and flat norms; comparison and Morrey
//! integrals use `|·|_g` and `dvol_g`. Every fitted exponent carries the
//! RMS log-residual of its fit.

use crate::energy::{EnergyParams, MetricCache};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::fit::{fit_loglog, LogLogFit};
use crate::io::csv_table;
use crate::mesh::DiskMesh;
use crate::metric::{distance_to_constant, holder_seminorm, operator_norm, MetricField};
use crate::region::{mean_gradient, oscillation_gradient, oscillation_nodal, BallRegion, DyadicHierarchy};
use crate::solver::{pharmonic_extension, SolverOptions};

// ---------------------------------------------------------------------------
// Comparison against frozen-metric extensions
// ---------------------------------------------------------------------------

/// How the metric-smallness factor of a comparison is measured.
#[derive(Debug, Clone)]
pub enum ComparisonMode {
    /// `[g]_{C^{0,β}} · r^β`, seminorm sampled inside the ball.
    Holder(f64),
    /// Distance of `g` to the given constant metric over the ball.
    Linfty(MetricField),
}

/// One frozen-metric comparison on a ball: `lhs = ∫ |dv − dw|^p_g dvol_g`
/// against `rhs_factor = ∫ |dv|^p_g dvol_g`, where `w` solves the
/// constant-metric problem with the trace of `v`.
#[derive(Debug, Clone)]
pub struct ComparisonRecord {
    pub radius: f64,
    pub lhs: f64,
    pub rhs_factor: f64,
    pub ratio: f64,
    /// `[g]_{C^{0,β}}·r^β` (Hölder mode) or the constant-distance ε
    /// (L∞ mode).
    pub metric_seminorm_rbeta: f64,
    /// Oscillation of `v` over the ball (the small-data factor of the
    /// critical variant).
    pub osc_v: f64,
}

pub fn comparison_ratio(
    mesh: &DiskMesh,
    v: &VectorField,
    ball: &BallRegion,
    g: &MetricField,
    params: &EnergyParams,
    mode: &ComparisonMode,
    opts: &SolverOptions,
) -> Result<ComparisonRecord> {
    let g0 = g.freeze(&[ball.center[0], ball.center[1]])?;
    let ext = pharmonic_extension(mesh, v, ball, &g0, params, opts)?;
    let sub = &ext.sub;
    let w = &ext.report.field;
    let cache_g = MetricCache::at_centroids(&sub.mesh, g)?;
    let dim = v.dim();
    let half_p = params.p / 2.0;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let mut diff = vec![0.0; 2 * dim];
    for (se, &pe) in sub.elem_map.iter().enumerate() {
        let dv = v.grad(pe);
        let dw = w.grad(se);
        for k in 0..2 * dim {
            diff[k] = dv[k] - dw[k];
        }
        let rho = sub.mesh.area(se) * cache_g.sqrt_det[se];
        lhs += rho * cache_g.grad_norm_sq(se, &diff, dim).powf(half_p);
        rhs += rho * cache_g.grad_norm_sq(se, dv, dim).powf(half_p);
    }
    let ratio = if rhs > 1e-300 { lhs / rhs } else { 0.0 };
    let metric_seminorm_rbeta = match mode {
        ComparisonMode::Holder(beta) => {
            let pairs = ball_sample_pairs(ball);
            holder_seminorm(g, *beta, &pairs)? * ball.radius.powf(*beta)
        }
        ComparisonMode::Linfty(g0_field) => {
            let g0_matrix = g0_field.eval(&[0.0, 0.0])?;
            let samples: Vec<Vec<f64>> = ball_sample_points(ball)
                .into_iter()
                .map(|p| vec![p[0], p[1]])
                .collect();
            distance_to_constant(g, &g0_matrix, &samples)?
        }
    };
    let osc_v = oscillation_nodal(mesh, v, ball)?;
    Ok(ComparisonRecord {
        radius: ball.radius,
        lhs,
        rhs_factor: rhs,
        ratio,
        metric_seminorm_rbeta,
        osc_v,
    })
}

/// Comparison records over a family of radii at one center, with the
/// log-log fit of ratio against radius.
pub fn comparison_scan(
    mesh: &DiskMesh,
    v: &VectorField,
    center: [f64; 2],
    radii: &[f64],
    g: &MetricField,
    params: &EnergyParams,
    mode: &ComparisonMode,
    opts: &SolverOptions,
) -> Result<(Vec<ComparisonRecord>, Option<LogLogFit>)> {
    let mut records = Vec::with_capacity(radii.len());
    for &r in radii {
        let ball = BallRegion::new(mesh, center, r)?;
        records.push(comparison_ratio(mesh, v, &ball, g, params, mode, opts)?);
    }
    let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.radius, r.ratio)).collect();
    Ok((records, fit_loglog(&pts)))
}

pub fn comparison_csv(records: &[ComparisonRecord]) -> String {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.radius.to_string(),
                r.lhs.to_string(),
                r.rhs_factor.to_string(),
                r.ratio.to_string(),
                r.metric_seminorm_rbeta.to_string(),
                r.osc_v.to_string(),
            ]
        })
        .collect();
    csv_table(
        &["radius", "lhs", "rhs_factor", "ratio", "seminorm_rbeta", "osc_v"],
        &rows,
    )
}

/// Deterministic polar sampling of a ball (25 points).
fn ball_sample_points(ball: &BallRegion) -> Vec<[f64; 2]> {
    let mut pts = vec![ball.center];
    for (ri, rho) in [1.0 / 3.0, 2.0 / 3.0, 0.95].iter().enumerate() {
        for k in 0..8 {
            let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.1 * ri as f64) / 8.0;
            pts.push([
                ball.center[0] + rho * ball.radius * theta.cos(),
                ball.center[1] + rho * ball.radius * theta.sin(),
            ]);
        }
    }
    pts
}

fn ball_sample_pairs(ball: &BallRegion) -> Vec<(Vec<f64>, Vec<f64>)> {
    let pts = ball_sample_points(ball);
    let mut pairs = Vec::new();
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            pairs.push((vec![pts[i][0], pts[i][1]], vec![pts[j][0], pts[j][1]]));
        }
    }
    pairs
}

// ---------------------------------------------------------------------------
// Campanato sharp-average decay
// ---------------------------------------------------------------------------

/// Sharp averages `aᵢ = (⨍_{Bᵢ} |∇v − (∇v)_{Bᵢ}|^p)^{1/p}` over a dyadic
/// hierarchy (flat norm, Lebesgue measure), with the fitted decay exponent
/// and the running cap of the local `L^p` gradient averages.
#[derive(Debug, Clone)]
pub struct DecayTable {
    pub center: [f64; 2],
    pub delta: f64,
    pub radii: Vec<f64>,
    pub a: Vec<f64>,
    /// `(⨍_{Bᵢ} |∇v|^p)^{1/p}` per ball.
    pub local_lp: Vec<f64>,
    /// `∫_{Bᵢ} |∇v|^p dx` per ball.
    pub local_energies: Vec<f64>,
    pub fit: Option<LogLogFit>,
    /// `max_i local_lp[i]`.
    pub cap_m: f64,
    /// Reference scale `local_lp[0] + local_lp[1]`.
    pub cap_ref: f64,
}

pub fn campanato_sequence(
    mesh: &DiskMesh,
    v: &VectorField,
    hierarchy: &DyadicHierarchy,
    params: &EnergyParams,
) -> Result<DecayTable> {
    let dim = v.dim();
    let half_p = params.p / 2.0;
    let mut radii = Vec::new();
    let mut a = Vec::new();
    let mut local_lp = Vec::new();
    let mut local_energies = Vec::new();
    for ball in &hierarchy.balls {
        if ball.weights.len() < 3 {
            return Err(Error::RegionTooCoarse {
                interior: ball.weights.len(),
                needed: 3,
            });
        }
        let mean = mean_gradient(mesh, v, ball)?;
        let mut sharp = 0.0;
        let mut lp = 0.0;
        for &(t, w) in &ball.weights {
            let wa = w * mesh.area(t);
            let g = v.grad(t);
            let mut d2 = 0.0;
            let mut g2 = 0.0;
            for k in 0..2 * dim {
                let d = g[k] - mean[k];
                d2 += d * d;
                g2 += g[k] * g[k];
            }
            sharp += wa * d2.powf(half_p);
            lp += wa * g2.powf(half_p);
        }
        radii.push(ball.radius);
        let lp_avg = (lp / ball.overlap_area).powf(1.0 / params.p);
        let mut sharp_avg = (sharp / ball.overlap_area).powf(1.0 / params.p);
        // Sharp averages below solver/rounding noise of the gradient scale
        // are zeros (constant-gradient fields give exact zeros here).
        if sharp_avg <= 1e-10 * (1.0 + lp_avg) {
            sharp_avg = 0.0;
        }
        a.push(sharp_avg);
        local_lp.push(lp_avg);
        local_energies.push(lp);
    }
    let pts: Vec<(f64, f64)> = radii.iter().cloned().zip(a.iter().cloned()).collect();
    let fit = fit_loglog(&pts);
    let cap_m = local_lp.iter().cloned().fold(0.0, f64::max);
    let cap_ref = local_lp[0] + local_lp[1];
    Ok(DecayTable {
        center: hierarchy.center,
        delta: hierarchy.delta,
        radii,
        a,
        local_lp,
        local_energies,
        fit,
        cap_m,
        cap_ref,
    })
}

pub fn decay_csv(table: &DecayTable) -> String {
    let rows: Vec<Vec<String>> = (0..table.radii.len())
        .map(|i| {
            vec![
                i.to_string(),
                table.radii[i].to_string(),
                table.a[i].to_string(),
                table.local_lp[i].to_string(),
                table.local_energies[i].to_string(),
            ]
        })
        .collect();
    csv_table(&["i", "radius", "a_i", "local_lp", "local_energy"], &rows)
}

// ---------------------------------------------------------------------------
// Morrey growth
// ---------------------------------------------------------------------------

/// Values of `(1/r^{n−p}) ∫_{B(x,r)} |dv|^p_g dvol_g` over a radius family
/// with the fitted growth exponent.
#[derive(Debug, Clone)]
pub struct MorreyTable {
    pub center: [f64; 2],
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub fit: Option<LogLogFit>,
    /// All quotients vanished; the exponent is meaningless.
    pub degenerate: bool,
}

pub fn morrey_decay(
    mesh: &DiskMesh,
    v: &VectorField,
    center: [f64; 2],
    radii: &[f64],
    params: &EnergyParams,
    g: &MetricField,
) -> Result<MorreyTable> {
    let n = 2.0;
    if params.p > n {
        return Err(Error::UnsupportedExponentCombo {
            p: params.p,
            n: 2,
        });
    }
    let cache = MetricCache::at_centroids(mesh, g)?;
    let dim = v.dim();
    let half_p = params.p / 2.0;
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        let ball = BallRegion::new(mesh, center, r)?;
        let mut acc = 0.0;
        for &(t, w) in &ball.weights {
            let rho = w * mesh.area(t) * cache.sqrt_det[t];
            acc += rho * cache.grad_norm_sq(t, v.grad(t), dim).powf(half_p);
        }
        values.push(acc / r.powf(n - params.p));
    }
    let degenerate = values.iter().all(|&x| x < 1e-300);
    let pts: Vec<(f64, f64)> = radii.iter().cloned().zip(values.iter().cloned()).collect();
    let fit = if degenerate { None } else { fit_loglog(&pts) };
    Ok(MorreyTable {
        center,
        radii: radii.to_vec(),
        values,
        fit,
        degenerate,
    })
}

pub fn morrey_csv(table: &MorreyTable) -> String {
    let rows: Vec<Vec<String>> = table
        .radii
        .iter()
        .zip(table.values.iter())
        .map(|(r, v)| vec![r.to_string(), v.to_string()])
        .collect();
    csv_table(&["radius", "morrey_quotient"], &rows)
}

// ---------------------------------------------------------------------------
// Hölder exponent fits
// ---------------------------------------------------------------------------

/// What to measure oscillations of.
#[derive(Debug, Clone, Copy)]
pub enum OscSource<'a> {
    Nodal(&'a VectorField),
    Gradient(&'a VectorField),
}

#[derive(Debug, Clone)]
pub struct HolderFit {
    pub scales: Vec<f64>,
    pub oscillations: Vec<f64>,
    /// Fitted exponent; `f64::INFINITY` when every oscillation vanished.
    pub exponent: f64,
    pub residual: f64,
    pub degenerate: bool,
}

pub fn holder_exponent(
    mesh: &DiskMesh,
    source: OscSource,
    center: [f64; 2],
    scales: &[f64],
) -> Result<HolderFit> {
    if scales.len() < 3 {
        return Err(Error::InsufficientScales(scales.len()));
    }
    let mut oscillations = Vec::with_capacity(scales.len());
    for &s in scales {
        let ball = BallRegion::new(mesh, center, s)?;
        let osc = match source {
            OscSource::Nodal(f) => oscillation_nodal(mesh, f, &ball)?,
            OscSource::Gradient(f) => oscillation_gradient(mesh, f, &ball)?,
        };
        oscillations.push(osc);
    }
    if oscillations.iter().all(|&o| o < 1e-300) {
        return Ok(HolderFit {
            scales: scales.to_vec(),
            oscillations,
            exponent: f64::INFINITY,
            residual: 0.0,
            degenerate: true,
        });
    }
    let pts: Vec<(f64, f64)> = scales
        .iter()
        .cloned()
        .zip(oscillations.iter().cloned())
        .collect();
    match fit_loglog(&pts) {
        Some(fit) => Ok(HolderFit {
            scales: scales.to_vec(),
            oscillations,
            exponent: fit.slope,
            residual: fit.residual,
            degenerate: false,
        }),
        None => Ok(HolderFit {
            scales: scales.to_vec(),
            oscillations,
            exponent: f64::INFINITY,
            residual: 0.0,
            degenerate: true,
        }),
    }
}

pub fn holder_csv(fit: &HolderFit) -> String {
    let rows: Vec<Vec<String>> = fit
        .scales
        .iter()
        .zip(fit.oscillations.iter())
        .map(|(s, o)| vec![s.to_string(), o.to_string()])
        .collect();
    csv_table(&["scale", "oscillation"], &rows)
}

// ---------------------------------------------------------------------------
// Difference-quotient second derivatives
// ---------------------------------------------------------------------------

/// Difference-quotient integrals `∫_B Σᵢ |D_{i,h} Φ(∇v)|² dvol_g` for
/// `Φ(q) = |q|_g^{(p−2)/2} q`, over a shrinking list of step sizes, plus
/// the scaling factor of the second-derivative estimate they are compared
/// against.
#[derive(Debug, Clone)]
pub struct HessianRecord {
    pub h_values: Vec<f64>,
    pub quotient_integrals: Vec<f64>,
    /// Linear-in-h Richardson extrapolation of the last two integrals.
    pub extrapolated_limit: f64,
    /// `(1/r² + ‖∇g‖²_∞) ∫_{2B} |∇v|^p_g dvol_g` (doubled ball clamped to
    /// the domain).
    pub bound_factor: f64,
    pub grad_g_sup: f64,
    pub ball2_radius: f64,
    /// Some step fell below twice the local element size; translation
    /// resampling noise may dominate there.
    pub h_floor_warning: bool,
}

pub fn hessian_quotient(
    mesh: &DiskMesh,
    v: &VectorField,
    g: &MetricField,
    ball: &BallRegion,
    params: &EnergyParams,
    h_list: &[f64],
) -> Result<HessianRecord> {
    if !g.has_gradient() {
        return Err(Error::MetricNotC1);
    }
    if h_list.is_empty() {
        return Err(Error::InsufficientScales(0));
    }
    let max_h = h_list.iter().cloned().fold(0.0, f64::max);
    let c_norm = ball.center[0].hypot(ball.center[1]);
    if c_norm + ball.radius + max_h > 1.0 + 1e-12 {
        return Err(Error::OutOfDomain(ball.center[0], ball.center[1]));
    }
    let dim = v.dim();
    let cache = MetricCache::at_centroids(mesh, g)?;
    let phi = |point: [f64; 2]| -> Result<Vec<f64>> {
        let (t, _) = mesh.locate(point);
        let grad = v.grad(t);
        let s = g.sample(&[point[0], point[1]])?;
        let inv = [s.g_inv[(0, 0)], s.g_inv[(0, 1)], s.g_inv[(1, 1)]];
        let mut snorm = 0.0;
        for j in 0..dim {
            let gx = grad[j];
            let gy = grad[dim + j];
            snorm += inv[0] * gx * gx + 2.0 * inv[1] * gx * gy + inv[2] * gy * gy;
        }
        let factor = if params.p == 2.0 {
            1.0
        } else if snorm > 0.0 {
            snorm.powf((params.p - 2.0) / 4.0)
        } else {
            0.0
        };
        Ok(grad.iter().map(|x| factor * x).collect())
    };
    let mut quotient_integrals = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let mut acc = 0.0;
        for &(t, w) in &ball.weights {
            let c = mesh.centroid(t);
            let base = phi(c)?;
            let rho = w * mesh.area(t) * cache.sqrt_det[t];
            for dir in 0..2 {
                let mut shifted_pt = c;
                shifted_pt[dir] += h;
                let shifted = phi(shifted_pt)?;
                let mut d2 = 0.0;
                for k in 0..2 * dim {
                    let d = (shifted[k] - base[k]) / h;
                    d2 += d * d;
                }
                acc += rho * d2;
            }
        }
        quotient_integrals.push(acc);
    }
    let extrapolated_limit = if h_list.len() >= 2 {
        let k = h_list.len();
        let (h1, h2) = (h_list[k - 2], h_list[k - 1]);
        let (i1, i2) = (quotient_integrals[k - 2], quotient_integrals[k - 1]);
        i2 + (i2 - i1) * h2 / (h1 - h2)
    } else {
        quotient_integrals[0]
    };

    // Scaling factor from the doubled ball, clamped inside the domain.
    let ball2_radius = (2.0 * ball.radius).min((1.0 - c_norm).max(ball.radius));
    let ball2 = BallRegion::new(mesh, ball.center, ball2_radius)?;
    let half_p = params.p / 2.0;
    let mut energy2 = 0.0;
    for &(t, w) in &ball2.weights {
        let rho = w * mesh.area(t) * cache.sqrt_det[t];
        energy2 += rho * cache.grad_norm_sq(t, v.grad(t), dim).powf(half_p);
    }
    let mut grad_g_sup = 0.0_f64;
    for p in ball_sample_points(&ball2) {
        let parts = g.grad(&[p[0], p[1]])?;
        let mut s = 0.0;
        for part in &parts {
            let n = operator_norm(part);
            s += n * n;
        }
        grad_g_sup = grad_g_sup.max(s.sqrt());
    }
    let bound_factor =
        (1.0 / (ball.radius * ball.radius) + grad_g_sup * grad_g_sup) * energy2;

    let min_h = h_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let local_diam = ball
        .weights
        .iter()
        .map(|&(t, _)| mesh.diameter(t))
        .fold(0.0, f64::max);
    Ok(HessianRecord {
        h_values: h_list.to_vec(),
        quotient_integrals,
        extrapolated_limit,
        bound_factor,
        grad_g_sup,
        ball2_radius,
        h_floor_warning: min_h < 2.0 * local_diam,
    })
}

pub fn hessian_csv(record: &HessianRecord) -> String {
    let rows: Vec<Vec<String>> = record
        .h_values
        .iter()
        .zip(record.quotient_integrals.iter())
        .map(|(h, q)| vec![h.to_string(), q.to_string()])
        .collect();
    csv_table(&["h", "quotient_integral"], &rows)
}

// ---------------------------------------------------------------------------
// Hole filling
// ---------------------------------------------------------------------------

/// `θ = ∫_{B(c,r/2)} |∇u|²_ξ / ∫_{B(c,r)} |∇u|²_ξ` (flat norm, Lebesgue
/// measure, n = 2).
pub fn hole_filling_ratio(mesh: &DiskMesh, u: &VectorField, center: [f64; 2], r: f64) -> Result<f64> {
    let dim = u.dim();
    let energy_on = |ball: &BallRegion| -> f64 {
        let mut acc = 0.0;
        for &(t, w) in &ball.weights {
            let g = u.grad(t);
            let g2: f64 = g.iter().map(|x| x * x).sum();
            acc += w * mesh.area(t) * g2;
        }
        let _ = dim;
        acc
    };
    let outer = BallRegion::new(mesh, center, r)?;
    let denom = energy_on(&outer);
    if denom <= 1e-14 {
        return Err(Error::DegenerateRegion);
    }
    let inner = BallRegion::new(mesh, center, r / 2.0)?;
    Ok(energy_on(&inner) / denom)
}

#[derive(Debug, Clone)]
pub struct HoleFillingRecord {
    pub center: [f64; 2],
    pub radius: f64,
    pub theta: f64,
    /// Decay exponent `n·α` implied by iterating θ over dyadic radii:
    /// `−log₂ θ`.
    pub implied_exponent: f64,
}

/// Ratios over a battery of centers and radii, with the mean implied
/// exponent.
pub fn hole_filling_scan(
    mesh: &DiskMesh,
    u: &VectorField,
    centers: &[[f64; 2]],
    radii: &[f64],
) -> Result<(Vec<HoleFillingRecord>, f64)> {
    let mut records = Vec::new();
    for &c in centers {
        for &r in radii {
            let theta = hole_filling_ratio(mesh, u, c, r)?;
            records.push(HoleFillingRecord {
                center: c,
                radius: r,
                theta,
                implied_exponent: -theta.log2(),
            });
        }
    }
    let mean = records.iter().map(|r| r.implied_exponent).sum::<f64>() / records.len() as f64;
    Ok((records, mean))
}

pub fn hole_filling_csv(records: &[HoleFillingRecord]) -> String {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.center[0].to_string(),
                r.center[1].to_string(),
                r.radius.to_string(),
                r.theta.to_string(),
                r.implied_exponent.to_string(),
            ]
        })
        .collect();
    csv_table(&["cx", "cy", "radius", "theta", "implied_exponent"], &rows)
}
