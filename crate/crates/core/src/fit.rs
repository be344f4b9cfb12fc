//! Log-log least squares for decay-exponent estimation. Every fitted
//! exponent travels with its RMS residual in log scale; callers gate on
//! both so a slope from a meaningless fit is never trusted.

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the fit in log space.
    pub residual: f64,
    /// Number of (x, y) points actually used (positive values only).
    pub used: usize,
}

/// Least-squares fit of `log y` against `log x`, skipping non-positive
/// values. Returns `None` with fewer than two usable points.
pub fn fit_loglog(points: &[(f64, f64)]) -> Option<LogLogFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = usable.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let sx: f64 = usable.iter().map(|(x, _)| x).sum();
    let sy: f64 = usable.iter().map(|(_, y)| y).sum();
    let sxx: f64 = usable.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = usable.iter().map(|(x, y)| x * y).sum();
    let denom = nf * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    let slope = (nf * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / nf;
    let residual = (usable
        .iter()
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum::<f64>()
        / nf)
        .sqrt();
    Some(LogLogFit {
        slope,
        intercept,
        residual,
        used: n,
    })
}
