//! Error metrics over Monte Carlo runs. Arrays are indexed `[run][k]`.

use nalgebra::DVector;

use crate::error::{Error, Result};

fn check_shape(a: &[Vec<DVector<f64>>], b: &[Vec<DVector<f64>>], context: &'static str) -> Result<usize> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch {
            context,
            expected: b.len(),
            found: a.len(),
        });
    }
    let steps = b[0].len();
    for (x, y) in a.iter().zip(b) {
        if x.len() != steps || y.len() != steps {
            return Err(Error::DimensionMismatch {
                context,
                expected: steps,
                found: x.len().min(y.len()),
            });
        }
    }
    Ok(steps)
}

/// `(1/P) sum_p |a_{k,p} - b_{k,p}|^2` for every `k`.
pub fn mse_curve(a: &[Vec<DVector<f64>>], b: &[Vec<DVector<f64>>]) -> Result<Vec<f64>> {
    let steps = check_shape(a, b, "mse curve")?;
    let runs = a.len() as f64;
    Ok((0..steps)
        .map(|k| a.iter().zip(b).map(|(x, y)| (&x[k] - &y[k]).norm_squared()).sum::<f64>() / runs)
        .collect())
}

/// Averages `curve[1..=T]`; the `k = 0` entry is left out.
pub fn time_average(curve: &[f64]) -> f64 {
    if curve.len() < 2 {
        return f64::NAN;
    }
    curve[1..].iter().sum::<f64>() / (curve.len() - 1) as f64
}

/// `J = (1/T) sum_{k=1}^T (1/P) sum_p |xhat_{k,p} - x_{k,p}|^2`.
pub fn averaged_mse(estimates: &[Vec<DVector<f64>>], truths: &[Vec<DVector<f64>>]) -> Result<f64> {
    Ok(time_average(&mse_curve(estimates, truths)?))
}

/// `(J1 - J2) / J2`.
pub fn relative_rmse(j1: f64, j2: f64) -> f64 {
    (j1 - j2) / j2
}

/// Per-step MSE against a benchmark estimator rather than the truth.
pub fn mse_vs_benchmark(estimates: &[Vec<DVector<f64>>], benchmarks: &[Vec<DVector<f64>>]) -> Result<Vec<f64>> {
    mse_curve(estimates, benchmarks)
}

/// `curve / reference`, pointwise; `0 / 0` is taken as 1.
pub fn normalize_curve(curve: &[f64], reference: &[f64]) -> Vec<f64> {
    curve
        .iter()
        .zip(reference)
        .map(|(&c, &r)| if c == 0.0 && r == 0.0 { 1.0 } else { c / r })
        .collect()
}

/// `Eff(k) = 1 / (MSE(k) * cost)` for a per-step cost in seconds.
pub fn efficiency(mse: &[f64], avg_cost: f64) -> Vec<f64> {
    mse.iter().map(|m| 1.0 / (m * avg_cost)).collect()
}
