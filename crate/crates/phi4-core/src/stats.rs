//! Market statistics: cross-sectional market mean, rolling Pearson kurtosis
//! and forecast error metrics.

use crate::data::ReturnPanel;
use crate::error::{Error, Result};

/// Cross-sectional mean over tickers per trading day: one market return per
/// date.
pub fn market_series(panel: &ReturnPanel) -> Vec<f64> {
    let inv = 1.0 / panel.n_tickers() as f64;
    (0..panel.n_days())
        .map(|d| panel.day_row(d).iter().sum::<f64>() * inv)
        .collect()
}

/// Rolling Pearson kurtosis `m4 / m2^2` with population moments about the
/// trailing-window mean. A zero-variance window yields `None`.
pub fn rolling_kurtosis(series: &[f64], window: usize) -> Result<Vec<Option<f64>>> {
    if window < 4 {
        return Err(Error::InvalidConfig(format!(
            "kurtosis window must be >= 4, got {window}"
        )));
    }
    if window > series.len() {
        return Err(Error::InvalidConfig(format!(
            "kurtosis window {window} exceeds series length {}",
            series.len()
        )));
    }
    let mut out = Vec::with_capacity(series.len() - window + 1);
    for start in 0..=(series.len() - window) {
        out.push(window_kurtosis(&series[start..start + window]));
    }
    Ok(out)
}

/// Pooled variant: kurtosis over all (day, ticker) returns in the trailing
/// window rather than over the market-mean series.
pub fn rolling_kurtosis_pooled(panel: &ReturnPanel, window: usize) -> Result<Vec<Option<f64>>> {
    if window < 4 {
        return Err(Error::InvalidConfig(format!(
            "kurtosis window must be >= 4, got {window}"
        )));
    }
    if window > panel.n_days() {
        return Err(Error::InvalidConfig(format!(
            "kurtosis window {window} exceeds panel length {}",
            panel.n_days()
        )));
    }
    let mut out = Vec::with_capacity(panel.n_days() - window + 1);
    let mut pooled = Vec::with_capacity(window * panel.n_tickers());
    for start in 0..=(panel.n_days() - window) {
        pooled.clear();
        for d in start..start + window {
            pooled.extend_from_slice(panel.day_row(d));
        }
        out.push(window_kurtosis(&pooled));
    }
    Ok(out)
}

fn window_kurtosis(xs: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    if m2 == 0.0 {
        None
    } else {
        Some(m4 / (m2 * m2))
    }
}

/// Mean absolute error between prediction and truth series of equal length.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: pred.len() });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("mae series"));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64)
}
