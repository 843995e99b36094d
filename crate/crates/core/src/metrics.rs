//! Post-run error analysis: per-axis RMS against the setpoint, total RMS,
//! position-consistency (stability) metric, and the combined performance
//! score. All values are reported in the units of the log columns.

use crate::harness::RunLog;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("series is empty")]
    EmptySeries,
}

/// Summary block for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub rms_x: f64,
    pub rms_y: f64,
    pub rms_z: f64,
    pub rms_total: f64,
    pub stability: f64,
    pub score: f64,
}

/// Root-mean-square deviation of a series from a fixed target.
pub fn rms_axis(series: &[f64], target: f64) -> Result<f64, MetricsError> {
    if series.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let sum_sq: f64 = series.iter().map(|v| (v - target) * (v - target)).sum();
    Ok((sum_sq / series.len() as f64).sqrt())
}

/// Euclidean combination of the per-axis RMS values.
pub fn rms_total(x: f64, y: f64, z: f64) -> f64 {
    (x * x + y * y + z * z).sqrt()
}

/// Position-consistency metric: minus the mean of the per-axis standard
/// deviations. Always non-positive.
pub fn stability_metric(sigma_x: f64, sigma_y: f64, sigma_z: f64) -> f64 {
    -(sigma_x + sigma_y + sigma_z) / 3.0
}

/// Combined score: `-RMS_total + stability`. Larger is better.
pub fn performance_score(rms_total: f64, stability: f64) -> f64 {
    -rms_total + stability
}

/// Population standard deviation (divide by `n`).
pub fn std_dev(series: &[f64]) -> Result<f64, MetricsError> {
    if series.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

/// Full report for one run log, measured against the log's own setpoint.
pub fn analyze(log: &RunLog) -> Result<MetricsReport, MetricsError> {
    let x: Vec<f64> = log.rows.iter().map(|r| r.position[0]).collect();
    let y: Vec<f64> = log.rows.iter().map(|r| r.position[1]).collect();
    let z: Vec<f64> = log.rows.iter().map(|r| r.position[2]).collect();
    let rms_x = rms_axis(&x, log.setpoint[0])?;
    let rms_y = rms_axis(&y, log.setpoint[1])?;
    let rms_z = rms_axis(&z, log.setpoint[2])?;
    let total = rms_total(rms_x, rms_y, rms_z);
    let stability = stability_metric(std_dev(&x)?, std_dev(&y)?, std_dev(&z)?);
    Ok(MetricsReport {
        rms_x,
        rms_y,
        rms_z,
        rms_total: total,
        stability,
        score: performance_score(total, stability),
    })
}

/// Aligned text table over several labelled reports.
pub fn report_table(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8} {:>10} {:>10} {:>10} {:>11} {:>11} {:>11}\n",
        "Run", "RMS X", "RMS Y", "RMS Z", "Total RMS", "Stability", "Score"
    ));
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<8} {:>10.3} {:>10.3} {:>10.3} {:>11.3} {:>11.3} {:>11.3}\n",
            name, r.rms_x, r.rms_y, r.rms_z, r.rms_total, r.stability, r.score
        ));
    }
    out
}

/// CSV rendering of the same rows (header plus one line per run).
pub fn report_csv(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::from("run,rms_x,rms_y,rms_z,rms_total,stability,score\n");
    for (name, r) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            name, r.rms_x, r.rms_y, r.rms_z, r.rms_total, r.stability, r.score
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rms_constant_on_target_is_zero() {
        assert_eq!(rms_axis(&[0.2, 0.2, 0.2], 0.2).unwrap(), 0.0);
    }

    #[test]
    fn rms_two_sample_hand_value() {
        assert_relative_eq!(rms_axis(&[0.1, 0.3], 0.2).unwrap(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn rms_rejects_empty() {
        assert_eq!(rms_axis(&[], 0.0), Err(MetricsError::EmptySeries));
    }

    #[test]
    fn rms_total_pythagorean() {
        assert_relative_eq!(rms_total(3.0, 4.0, 0.0), 5.0, epsilon = 1e-15);
        assert_eq!(rms_total(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn rms_total_reference_row() {
        assert_relative_eq!(rms_total(3.670, 2.460, 0.085), 4.419, epsilon = 1e-3);
    }

    #[test]
    fn stability_mean_and_sign() {
        assert_eq!(stability_metric(0.0, 0.0, 0.0), 0.0);
        assert_relative_eq!(stability_metric(0.1, 0.2, 0.3), -0.2, epsilon = 1e-15);
        assert!(stability_metric(0.5, 0.01, 0.2) <= 0.0);
    }

    #[test]
    fn score_reference_and_monotonicity() {
        assert_relative_eq!(performance_score(4.419, -0.090), -4.509, epsilon = 1e-12);
        assert_eq!(performance_score(0.0, 0.0), 0.0);
        assert!(performance_score(5.0, -0.1) < performance_score(4.0, -0.1));
    }

    #[test]
    fn rms_about_own_mean_vanishes_iff_constant() {
        let series = [1.0, 1.0, 1.0];
        let mean = 1.0;
        assert_eq!(rms_axis(&series, mean).unwrap(), 0.0);
        let varied = [0.9, 1.1];
        assert!(rms_axis(&varied, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn population_std_dev() {
        // Variance of [1, 3] about mean 2 is ((1)^2 + (1)^2) / 2 = 1.
        assert_relative_eq!(std_dev(&[1.0, 3.0]).unwrap(), 1.0, epsilon = 1e-15);
    }
}
