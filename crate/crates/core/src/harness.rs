//! Experiment driver: convergence suites, amplification sweeps, and the
//! bounded-transport benchmark, with CSV/metadata output.

use crate::error::{Error, Result};

/// Least-squares slope of ln(error) against ln(spacing).
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(dx, e)| dx <= 0.0 || e <= 0.0) {
        return Err(Error::DegenerateInput(
            "slope fit needs positive spacings and errors".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(dx, e)| (dx.ln(), e.ln())).collect();
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}
