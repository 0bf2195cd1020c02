//! Whittaker smoother with automatic V-curve selection of lambda.

use super::banded::PentaBands;
use crate::error::{Error, Result};

/// log10(lambda) search grid: -2 to 8 in steps of 0.5.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=20).map(|i| -2.0 + 0.5 * i as f64).collect()
}

fn validate(y: &[f64], w: &[f64], lambda: f64) -> Result<()> {
    if y.len() != w.len() {
        return Err(Error::Numerical(format!(
            "length mismatch: {} values vs {} weights",
            y.len(),
            w.len()
        )));
    }
    if y.len() < 3 {
        return Err(Error::Numerical("whittaker needs n >= 3".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Numerical(format!("invalid lambda {lambda}")));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite input to whittaker".into()));
    }
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::Numerical("all-zero weights".into()));
    }
    Ok(())
}

/// Weighted least-squares line through (index, y) over points with w > 0.
fn weighted_line(y: &[f64], w: &[f64]) -> (f64, f64) {
    let (mut sw, mut st, mut sy) = (0.0, 0.0, 0.0);
    for (i, (&yi, &wi)) in y.iter().zip(w).enumerate() {
        sw += wi;
        st += wi * i as f64;
        sy += wi * yi;
    }
    let tbar = st / sw;
    let ybar = sy / sw;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (&yi, &wi)) in y.iter().zip(w).enumerate() {
        let dt = i as f64 - tbar;
        num += wi * dt * (yi - ybar);
        den += wi * dt * dt;
    }
    let slope = if den > 0.0 { num / den } else { 0.0 };
    (ybar - slope * tbar, slope)
}

/// Solve `(diag(w) + lambda * D'D) z = diag(w) y`.
///
/// The linear trend is solved for separately (it spans the null space of
/// D'D, so eliminating it keeps the banded solve well conditioned even for
/// very large lambda), and one step of iterative refinement tightens the
/// residual.
pub fn whittaker_smooth(y: &[f64], w: &[f64], lambda: f64) -> Result<Vec<f64>> {
    validate(y, w, lambda)?;
    if lambda == 0.0 {
        if w.iter().any(|&v| v == 0.0) {
            return Err(Error::Numerical(
                "lambda = 0 with zero weights is singular".into(),
            ));
        }
        return Ok(y.to_vec());
    }

    let n = y.len();
    let (intercept, slope) = weighted_line(y, w);
    let line: Vec<f64> = (0..n).map(|i| intercept + slope * i as f64).collect();
    let rhs: Vec<f64> = (0..n).map(|i| w[i] * (y[i] - line[i])).collect();

    let bands = PentaBands::whittaker(w, lambda);
    let mut u = bands.solve(&rhs)?;
    // one refinement pass
    let au = bands.matvec(&u);
    let res: Vec<f64> = rhs.iter().zip(&au).map(|(r, a)| r - a).collect();
    if res.iter().any(|v| v.abs() > 1e-14) {
        let delta = bands.solve(&res)?;
        for (ui, di) in u.iter_mut().zip(&delta) {
            *ui += di;
        }
    }
    Ok(line.iter().zip(&u).map(|(l, ui)| l + ui).collect())
}

/// Max-norm residual of the Whittaker system for a candidate solution.
pub fn system_residual(y: &[f64], w: &[f64], lambda: f64, z: &[f64]) -> f64 {
    let bands = PentaBands::whittaker(w, lambda);
    let az = bands.matvec(z);
    az.iter()
        .enumerate()
        .map(|(i, a)| (a - w[i] * y[i]).abs())
        .fold(0.0, f64::max)
}

fn fidelity(y: &[f64], w: &[f64], z: &[f64]) -> f64 {
    y.iter()
        .zip(w)
        .zip(z)
        .map(|((yi, wi), zi)| wi * (yi - zi) * (yi - zi))
        .sum()
}

fn roughness(z: &[f64]) -> f64 {
    z.windows(3)
        .map(|t| {
            let d2 = t[0] - 2.0 * t[1] + t[2];
            d2 * d2
        })
        .sum()
}

/// Pick lambda by the V-curve: minimize the log-log segment length between
/// consecutive grid lambdas and return the geometric mean of the winning
/// pair. Ties break toward smaller lambda.
pub fn vcurve_lambda_with_grid(y: &[f64], w: &[f64], log10_grid: &[f64]) -> Result<f64> {
    validate(y, w, 1.0)?;
    if log10_grid.len() < 3 {
        return Err(Error::Numerical("vcurve grid needs >= 3 points".into()));
    }
    let mut support = y
        .iter()
        .zip(w)
        .filter(|&(_, &wi)| wi > 0.0)
        .map(|(&yi, _)| yi);
    let first = support.next().unwrap();
    if support.all(|v| v == first) {
        // constant signal: any lambda fits it exactly
        return Ok(10f64.powf(log10_grid[0]));
    }

    let mut log_f = Vec::with_capacity(log10_grid.len());
    let mut log_r = Vec::with_capacity(log10_grid.len());
    for &e in log10_grid {
        let z = whittaker_smooth(y, w, 10f64.powf(e))?;
        log_f.push(fidelity(y, w, &z).max(1e-300).log10());
        log_r.push(roughness(&z).max(1e-300).log10());
    }
    let mut best = (f64::INFINITY, 0usize);
    for i in 0..log10_grid.len() - 1 {
        let df = log_f[i + 1] - log_f[i];
        let dr = log_r[i + 1] - log_r[i];
        let v = (df * df + dr * dr).sqrt();
        if v < best.0 {
            best = (v, i);
        }
    }
    Ok(10f64.powf(0.5 * (log10_grid[best.1] + log10_grid[best.1 + 1])))
}

/// V-curve selection over the default grid.
pub fn vcurve_lambda(y: &[f64], w: &[f64]) -> Result<f64> {
    vcurve_lambda_with_grid(y, w, &default_lambda_grid())
}
