//! Prediction tasks: cross-sectional imputation of one stock from the
//! others, one-day-ahead forecasting from a stock's own history, and the two
//! baselines (rescaled remnant mean, rolling linear regression).

use log::warn;

use crate::data::window_vectors;
use crate::error::{Error, Result};
use crate::model::CouplingSet;
use crate::rng::derive_seed;
use crate::sampler::{conditional_mean, Clamp, SamplerConfig};
use crate::trainer::{train, TrainConfig};

/// Posterior summary of one imputed or forecast value.
#[derive(Debug, Clone, Copy)]
pub struct Posterior {
    pub mean: f64,
    pub std: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

/// Imputes the single missing coordinate: clamps every observed value and
/// samples the target's conditional distribution. `observed[i] = None` marks
/// the target; exactly one entry must be missing.
pub fn impute(
    theta: &CouplingSet,
    observed: &[Option<f64>],
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<Posterior> {
    if observed.len() != theta.volume() {
        return Err(Error::DimensionMismatch {
            expected: theta.volume(),
            got: observed.len(),
        });
    }
    let missing = observed.iter().filter(|o| o.is_none()).count();
    if missing != 1 {
        return Err(Error::InvalidConfig(format!(
            "imputation needs exactly one missing coordinate, got {missing}"
        )));
    }
    let clamp = Clamp::from_options(observed);
    let summary = conditional_mean(theta, cfg, &clamp, seed)?;
    Ok(Posterior {
        mean: summary.mean[0],
        std: summary.std[0],
        q05: summary.q05[0],
        q50: summary.q50[0],
        q95: summary.q95[0],
    })
}

/// Rescaled mean of the remnant stocks:
/// `R = (sigma_target / n) * sum_i observed_i / sigma_i`.
/// With two remnant stocks this reduces to the familiar two-predictor form
/// `(sigma_T / 2)(phi_A / sigma_A + phi_B / sigma_B)`.
pub fn rescaled_mean_baseline(
    observed: &[(f64, f64)],
    sigma_target: f64,
) -> Result<f64> {
    if observed.is_empty() {
        return Err(Error::EmptyInput("rescaled mean inputs"));
    }
    if !(sigma_target > 0.0) {
        return Err(Error::ZeroSigma(sigma_target));
    }
    let mut sum = 0.0;
    for &(phi, sigma) in observed {
        if !(sigma > 0.0) {
            return Err(Error::ZeroSigma(sigma));
        }
        sum += phi / sigma;
    }
    Ok(sigma_target / observed.len() as f64 * sum)
}

/// Walk-forward one-day-ahead forecasting settings.
#[derive(Debug, Clone)]
pub struct ForecastConfig {
    /// Model dimension: the target day plus the preceding `window - 1` days.
    pub window: usize,
    /// Total days of trailing history per training set; with stride 1 this
    /// yields `train_window - window + 1` training vectors.
    pub train_window: usize,
    pub stride: usize,
    /// Retrain every k-th forecast day (1 = daily).
    pub retrain_every: usize,
    /// Rescale each training window to unit root-mean-square before training
    /// and map predictions back. Daily returns are orders of magnitude below
    /// the couplings' natural scale, so this is on by default; the scale is
    /// computed from the training window only (causal).
    pub standardize: bool,
    pub train: TrainConfig,
    pub predict_sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            window: 150,
            train_window: 230,
            stride: 1,
            retrain_every: 1,
            standardize: true,
            train: TrainConfig::default(),
            predict_sampler: SamplerConfig {
                sweeps_burn_in: 500,
                sweeps_between_samples: 2,
                n_samples: 2_000,
                ..SamplerConfig::default()
            },
            seed: 0,
        }
    }
}

/// Root mean square of a slice; the standardization scale.
pub fn rms(series: &[f64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    (series.iter().map(|x| x * x).sum::<f64>() / series.len() as f64).sqrt()
}

/// One-day-ahead forecast for one evaluation day.
#[derive(Debug, Clone, Copy)]
pub struct DayForecast {
    /// Index of the forecast day in the history series.
    pub index: usize,
    pub truth: f64,
    pub posterior: Posterior,
}

/// Walk-forward next-day forecasts over the last `eval_days` entries of
/// `history`. For each forecast day `t` a model is trained on window vectors
/// drawn from `history[t - train_window .. t]`, the preceding `window - 1`
/// returns are clamped and the target day's conditional is sampled; the
/// posterior mean is the point forecast. No input dated `>= t` enters the
/// training window or the clamp, so predictions are unchanged when the
/// series is truncated right after the forecast day.
///
/// Days whose training run diverges are skipped and logged.
pub fn next_day_forecast(
    history: &[f64],
    eval_days: usize,
    cfg: &ForecastConfig,
) -> Result<Vec<DayForecast>> {
    if cfg.window < 2 {
        return Err(Error::InvalidConfig("window must be >= 2".into()));
    }
    if cfg.train_window < cfg.window {
        return Err(Error::InvalidConfig(format!(
            "train_window {} smaller than window {}",
            cfg.train_window, cfg.window
        )));
    }
    if eval_days == 0 {
        return Err(Error::InvalidConfig("eval_days must be >= 1".into()));
    }
    if history.len() < cfg.train_window + eval_days {
        return Err(Error::InsufficientHistory {
            needed: cfg.train_window + eval_days,
            have: history.len(),
        });
    }
    let first = history.len() - eval_days;
    let mut out = Vec::with_capacity(eval_days);
    let mut current: Option<(CouplingSet, f64)> = None;
    for (k, t) in (first..history.len()).enumerate() {
        if k % cfg.retrain_every.max(1) == 0 || current.is_none() {
            let train_slice = &history[t - cfg.train_window..t];
            let scale = if cfg.standardize {
                let s = rms(train_slice);
                if s > 0.0 { s } else { 1.0 }
            } else {
                1.0
            };
            let scaled: Vec<f64> = train_slice.iter().map(|x| x / scale).collect();
            let vectors = window_vectors(&scaled, cfg.window, cfg.stride, None)?;
            let mut day_cfg = cfg.train.clone();
            // Per-day seed: forecasts depend only on the day index, not on
            // how many other days are evaluated in the same run.
            day_cfg.seed = derive_seed(cfg.seed, &[0xF0CA57, t as u64]);
            match train(&vectors, &day_cfg) {
                Ok((theta, _)) => current = Some((theta, scale)),
                Err(Error::TrainingDiverged { epoch, reason }) => {
                    warn!("forecast day {t}: training diverged at epoch {epoch} ({reason}); day skipped");
                    current = None;
                    continue;
                }
                Err(e) => return Err(e),
            }
        }
        let Some((theta, scale)) = current.as_ref() else { continue };
        // Site 0 is the target day; site k holds the return of day t - k,
        // in training units.
        let observed: Vec<Option<f64>> = (0..cfg.window)
            .map(|site| if site == 0 { None } else { Some(history[t - site] / scale) })
            .collect();
        let p = impute(
            theta,
            &observed,
            &cfg.predict_sampler,
            derive_seed(cfg.seed, &[0x1A57, t as u64]),
        )?;
        let posterior = Posterior {
            mean: p.mean * scale,
            std: p.std * scale,
            q05: p.q05 * scale,
            q50: p.q50 * scale,
            q95: p.q95 * scale,
        };
        out.push(DayForecast { index: t, truth: history[t], posterior });
    }
    Ok(out)
}

/// Per-window-size outcome of the rolling linear-regression baseline.
#[derive(Debug, Clone)]
pub struct LinregResult {
    pub window: usize,
    /// Mean absolute error over the evaluation days with a defined fit.
    pub mae: f64,
    /// (day index, prediction); `None` where the design matrix was singular.
    pub predictions: Vec<(usize, Option<f64>)>,
}

/// Walk-forward AR(p) regression baseline: for each window size, refit an
/// ordinary least-squares regression of the next-day return on the previous
/// `p` returns (plus intercept) over the trailing window, each evaluation
/// day. Evaluation days are the last `eval_days` indices of `history`,
/// matching [`next_day_forecast`]. Singular designs yield a missing
/// prediction for that day (logged).
pub fn rolling_linreg_baseline(
    history: &[f64],
    window_sizes: &[usize],
    p: usize,
    eval_days: usize,
) -> Result<Vec<LinregResult>> {
    if p == 0 {
        return Err(Error::InvalidConfig("lag count p must be >= 1".into()));
    }
    if eval_days == 0 || eval_days >= history.len() {
        return Err(Error::InvalidConfig("eval_days out of range".into()));
    }
    let first = history.len() - eval_days;
    let mut results = Vec::with_capacity(window_sizes.len());
    for &ws in window_sizes {
        if ws < p + 1 {
            return Err(Error::InvalidConfig(format!(
                "window {ws} too small for {p} lags plus intercept"
            )));
        }
        if first < ws + p {
            return Err(Error::InsufficientHistory { needed: ws + p + eval_days, have: history.len() });
        }
        let mut predictions = Vec::with_capacity(eval_days);
        let mut abs_errors = Vec::new();
        for t in first..history.len() {
            let beta = fit_ar_ols(history, t, ws, p);
            let pred = beta.map(|b| {
                let mut y = b[0];
                for lag in 1..=p {
                    y += b[lag] * history[t - lag];
                }
                y
            });
            if pred.is_none() {
                warn!("linreg baseline: singular design at day {t}, window {ws}");
            }
            if let Some(y) = pred {
                abs_errors.push((y - history[t]).abs());
            }
            predictions.push((t, pred));
        }
        if abs_errors.is_empty() {
            return Err(Error::EmptyInput("no solvable regression days"));
        }
        let mae = abs_errors.iter().sum::<f64>() / abs_errors.len() as f64;
        results.push(LinregResult { window: ws, mae, predictions });
    }
    Ok(results)
}

/// OLS fit of `history[s] ~ 1 + history[s-1..s-p]` over `s` in
/// `[t - ws, t)`. Returns `None` when the normal equations are singular.
fn fit_ar_ols(history: &[f64], t: usize, ws: usize, p: usize) -> Option<Vec<f64>> {
    let dim = p + 1;
    let mut xtx = vec![vec![0.0; dim]; dim];
    let mut xty = vec![0.0; dim];
    for s in (t - ws)..t {
        let mut row = Vec::with_capacity(dim);
        row.push(1.0);
        for lag in 1..=p {
            row.push(history[s - lag]);
        }
        let y = history[s];
        for i in 0..dim {
            xty[i] += row[i] * y;
            for j in 0..dim {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    solve_linear(&mut xtx, &mut xty)
}

/// Gaussian elimination with partial pivoting for the small AR systems.
fn solve_linear(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Sample standard deviation (n - 1 denominator) of a series; used for the
/// rescaled-mean baseline's per-stock scale.
pub fn sample_std(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::InsufficientHistory { needed: 2, have: series.len() });
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(Error::ZeroSigma(0.0));
    }
    Ok(var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{conditional_quadrature_moments, QuadratureSpec};
    use crate::rng::derive_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn rescaled_mean_two_stock_values() {
        let r = rescaled_mean_baseline(&[(0.02, 1.0), (0.04, 1.0)], 1.0).unwrap();
        assert!((r - 0.03).abs() < 1e-15);
        let r = rescaled_mean_baseline(&[(0.5, 1.0), (-0.5, 1.0)], 1.0).unwrap();
        assert_eq!(r, 0.0);
        let r1 = rescaled_mean_baseline(&[(0.1, 0.3), (0.2, 0.4)], 0.5).unwrap();
        let r2 = rescaled_mean_baseline(&[(0.1, 0.3), (0.2, 0.4)], 1.0).unwrap();
        assert!((r2 - 2.0 * r1).abs() < 1e-15);
    }

    #[test]
    fn rescaled_mean_is_linear_in_observations() {
        let base = rescaled_mean_baseline(&[(0.1, 0.2), (0.3, 0.4)], 0.7).unwrap();
        let bumped = rescaled_mean_baseline(&[(0.1 + 0.05, 0.2), (0.3, 0.4)], 0.7).unwrap();
        let slope = (bumped - base) / 0.05;
        let bumped2 = rescaled_mean_baseline(&[(0.1 + 0.1, 0.2), (0.3, 0.4)], 0.7).unwrap();
        assert!((bumped2 - base - slope * 0.1).abs() < 1e-12);
    }

    #[test]
    fn rescaled_mean_rejects_zero_sigma() {
        assert!(matches!(
            rescaled_mean_baseline(&[(0.1, 0.0), (0.2, 1.0)], 1.0),
            Err(Error::ZeroSigma(_))
        ));
        assert!(matches!(
            rescaled_mean_baseline(&[(0.1, 1.0)], 0.0),
            Err(Error::ZeroSigma(_))
        ));
    }

    #[test]
    fn impute_with_zero_couplings_matches_unconditional_marginal() {
        // Factorized model: the conditional equals the marginal regardless of
        // the observed values.
        let theta = CouplingSet::new(
            3,
            vec![0.0, 0.0, 0.0],
            vec![0.5; 3],
            vec![0.3; 3],
            vec![0.2; 3],
        )
        .unwrap();
        let cfg = SamplerConfig {
            sweeps_burn_in: 500,
            sweeps_between_samples: 3,
            n_samples: 8_000,
            ..SamplerConfig::default()
        };
        let a = impute(&theta, &[Some(0.9), Some(-0.9), None], &cfg, 3).unwrap();
        let b = impute(&theta, &[Some(-0.4), Some(0.1), None], &cfg, 4).unwrap();
        let marginal = conditional_quadrature_moments(
            &theta,
            &[Some(0.0), Some(0.0), None],
            &QuadratureSpec::with_points(401),
        )
        .unwrap()
        .moments
        .mean_phi[2];
        let se_a = a.std / (cfg.n_samples as f64).sqrt();
        let se_b = b.std / (cfg.n_samples as f64).sqrt();
        assert!((a.mean - marginal).abs() < 3.0 * se_a, "{} vs {marginal}", a.mean);
        assert!((b.mean - marginal).abs() < 3.0 * se_b, "{} vs {marginal}", b.mean);
    }

    #[test]
    fn impute_follows_strong_positive_couplings() {
        let theta = CouplingSet::new(
            3,
            vec![1.5, 1.5, 1.5],
            vec![0.5; 3],
            vec![0.3; 3],
            vec![0.0; 3],
        )
        .unwrap();
        let cfg = SamplerConfig {
            sweeps_burn_in: 500,
            sweeps_between_samples: 3,
            n_samples: 6_000,
            ..SamplerConfig::default()
        };
        let clamp = [Some(0.8), Some(0.6), None];
        let post = impute(&theta, &clamp, &cfg, 11).unwrap();
        let oracle = conditional_quadrature_moments(
            &theta,
            &clamp,
            &QuadratureSpec::with_points(401),
        )
        .unwrap()
        .moments
        .mean_phi[2];
        assert!(post.mean > 0.0, "prediction should share the observed sign");
        let se = post.std / (cfg.n_samples as f64).sqrt();
        assert!((post.mean - oracle).abs() < 4.0 * se.max(5e-3), "{} vs {oracle}", post.mean);
        assert!(post.q05 <= post.q50 && post.q50 <= post.q95);
    }

    #[test]
    fn impute_requires_exactly_one_target() {
        let theta = CouplingSet::uniform(3, 0.1, 0.5, 0.5, 0.0).unwrap();
        let cfg = SamplerConfig::default();
        assert!(impute(&theta, &[None, None, Some(0.1)], &cfg, 0).is_err());
        assert!(impute(&theta, &[Some(0.1), Some(0.2), Some(0.3)], &cfg, 0).is_err());
    }

    fn ar1_series(rng: &mut impl Rng, n: usize, coef: f64, noise: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        let mut x = 0.0;
        for _ in 0..n {
            x = coef * x + noise * rng.sample::<f64, _>(StandardNormal);
            out.push(x);
        }
        out
    }

    #[test]
    fn linreg_recovers_ar1_noise_floor() {
        let mut rng = derive_rng(101, &[]);
        let noise = 0.01;
        let history = ar1_series(&mut rng, 1200, 0.6, noise);
        let res = rolling_linreg_baseline(&history, &[400], 1, 300).unwrap();
        let expected = noise * (2.0 / std::f64::consts::PI).sqrt();
        let rel = (res[0].mae - expected).abs() / expected;
        assert!(rel < 0.15, "mae {} vs expected {expected}", res[0].mae);
    }

    #[test]
    fn linreg_two_point_window_is_defined() {
        let history: Vec<f64> = (0..40).map(|i| (i as f64 * 0.73).sin() * 0.02).collect();
        let res = rolling_linreg_baseline(&history, &[2], 1, 5).unwrap();
        assert_eq!(res[0].predictions.len(), 5);
        // Two points, two parameters: the fit interpolates both rows exactly,
        // and the prediction is the extrapolation of that line.
        let t = res[0].predictions[0].0;
        let (x1, y1) = (history[t - 2], history[t - 1]);
        let (x2, y2) = (history[t - 3], history[t - 2]);
        let slope = (y1 - y2) / (x1 - x2);
        let expect = y1 + slope * (history[t - 1] - x1);
        let got = res[0].predictions[0].1.unwrap();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    #[test]
    fn linreg_constant_history_is_singular() {
        let history = vec![0.01; 300];
        let res = rolling_linreg_baseline(&history, &[50], 1, 10);
        // Zero-variance regressor: every day is singular, so no MAE exists.
        assert!(res.is_err());
    }

    #[test]
    fn forecast_requires_enough_history() {
        let history = vec![0.0; 100];
        let cfg = ForecastConfig {
            window: 10,
            train_window: 95,
            ..ForecastConfig::default()
        };
        assert!(matches!(
            next_day_forecast(&history, 10, &cfg),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    fn tiny_forecast_cfg(seed: u64) -> ForecastConfig {
        ForecastConfig {
            window: 5,
            train_window: 60,
            stride: 1,
            retrain_every: 1,
            standardize: true,
            train: TrainConfig {
                epochs: 40,
                chains: 2,
                learning_rate: 0.05,
                sampler: SamplerConfig {
                    sweeps_burn_in: 200,
                    sweeps_between_samples: 2,
                    n_samples: 250,
                    ..SamplerConfig::default()
                },
                ..TrainConfig::default()
            },
            predict_sampler: SamplerConfig {
                sweeps_burn_in: 300,
                sweeps_between_samples: 2,
                n_samples: 1_500,
                ..SamplerConfig::default()
            },
            seed,
        }
    }

    #[test]
    fn forecast_is_causal_under_truncation() {
        let mut rng = derive_rng(107, &[]);
        let history = ar1_series(&mut rng, 120, 0.5, 0.01);
        let cfg = tiny_forecast_cfg(5);
        let full = next_day_forecast(&history, 6, &cfg).unwrap();
        // Re-run with the series cut right after each forecast day: the
        // prediction for that day must be bit-identical.
        for day in &full {
            let truncated = &history[..day.index + 1];
            let cut = next_day_forecast(truncated, 1, &cfg).unwrap();
            assert_eq!(cut.len(), 1);
            assert_eq!(cut[0].index, day.index);
            assert_eq!(cut[0].posterior.mean, day.posterior.mean);
            assert_eq!(cut[0].posterior.q95, day.posterior.q95);
        }
    }

    #[test]
    fn white_noise_forecast_matches_series_dispersion() {
        // No exploitable structure: the forecast MAE must land within 10% of
        // the evaluation days' mean absolute deviation (the naive-zero MAE).
        let mut rng = derive_rng(211, &[]);
        let sigma = 0.01;
        let history: Vec<f64> = (0..260)
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let eval_days = 60;
        let cfg = ForecastConfig {
            window: 6,
            train_window: 126,
            ..tiny_forecast_cfg(3)
        };
        let out = next_day_forecast(&history, eval_days, &cfg).unwrap();
        assert_eq!(out.len(), eval_days);
        let mae_phi4 = out
            .iter()
            .map(|d| (d.posterior.mean - d.truth).abs())
            .sum::<f64>()
            / out.len() as f64;
        let mad = out.iter().map(|d| d.truth.abs()).sum::<f64>() / out.len() as f64;
        let rel = (mae_phi4 - mad).abs() / mad;
        assert!(rel < 0.10, "phi4 MAE {mae_phi4} vs series MAD {mad} (rel {rel:.3})");
    }

    #[test]
    fn constant_history_forecasts_the_constant() {
        let c = 0.01;
        let history = vec![c; 80];
        let cfg = ForecastConfig {
            train: TrainConfig {
                epochs: 150,
                learning_rate: 0.05,
                ..tiny_forecast_cfg(9).train
            },
            ..tiny_forecast_cfg(9)
        };
        let out = next_day_forecast(&history, 2, &cfg).unwrap();
        for day in &out {
            let gap = (day.posterior.mean - c).abs();
            assert!(
                gap < 5.0 * day.posterior.std,
                "prediction {} vs constant {c} (std {})",
                day.posterior.mean,
                day.posterior.std
            );
        }
    }
}
