//! Finite-size scaling of learned couplings: mean weight and bias versus the
//! number of modelled stocks, with power-law exponent extraction from a
//! log-log least-squares fit.

use rand::seq::SliceRandom;

use crate::data::ReturnPanel;
use crate::error::{Error, Result};
use crate::model::CouplingSet;
use crate::rng::derive_rng;
use crate::trainer::{train, TrainConfig};

/// Arithmetic means over the stored pair weights and the site biases.
pub fn coupling_means(theta: &CouplingSet) -> (f64, f64) {
    let nw = theta.n_pairs().max(1);
    let mean_w = theta.weights().iter().sum::<f64>() / nw as f64;
    let mean_a = theta.bias().iter().sum::<f64>() / theta.volume() as f64;
    (mean_w, mean_a)
}

/// Power-law exponent estimate `y ~ c * V^k` from OLS of `ln|y|` on `ln V`.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub exponent: f64,
    pub prefactor: f64,
    /// OLS standard error of the exponent; `None` for two-point fits.
    pub stderr: Option<f64>,
    pub r_squared: f64,
    /// Common sign of the fitted y values.
    pub sign: f64,
    pub points: Vec<(f64, f64)>,
}

/// Fits `ln|y| = ln c + k ln V`. All y values must be nonzero and share one
/// sign (the sign is recorded; the fit runs on magnitudes).
pub fn powerlaw_fit(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "power-law fit needs >= 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(v, _)| !(v > 0.0)) {
        return Err(Error::InvalidConfig("volumes must be positive".into()));
    }
    {
        let mut vols: Vec<f64> = points.iter().map(|&(v, _)| v).collect();
        vols.sort_by(f64::total_cmp);
        if vols.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("volumes must be distinct".into()));
        }
    }
    let sign = points[0].1.signum();
    if points.iter().any(|&(_, y)| y == 0.0 || y.signum() != sign) {
        return Err(Error::MixedSignFit(format!("{points:?}")));
    }

    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(v, _)| v.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, y)| y.abs().ln()).collect();
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let k = sxy / sxx;
    let intercept = ybar - k * xbar;

    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + k * x);
            r * r
        })
        .sum();
    let sst: f64 = ys.iter().map(|y| (y - ybar) * (y - ybar)).sum();
    let r_squared = if sst == 0.0 { 1.0 } else { 1.0 - ssr / sst };
    let stderr = if points.len() > 2 {
        Some((ssr / (n - 2.0) / sxx).sqrt())
    } else {
        None
    };

    Ok(FitResult {
        exponent: k,
        prefactor: sign * intercept.exp(),
        stderr,
        r_squared,
        sign,
        points: points.to_vec(),
    })
}

/// How sub-panels are chosen for each volume.
#[derive(Debug, Clone)]
pub enum SubsetRule {
    /// Nested prefixes of the alphabetically sorted ticker list.
    Nested,
    /// Seeded random nested subsets; coupling means are averaged over draws.
    NestedRandom { seed: u64, draws: usize },
}

/// Coupling means recorded at one volume.
#[derive(Debug, Clone)]
pub struct VolumePoint {
    pub volume: usize,
    pub mean_weight: f64,
    pub mean_bias: f64,
}

/// Outcome of a scaling sweep: per-volume means and the two power-law fits.
/// A fit can fail on data grounds (mixed-sign means carry no one-sign power
/// law); the points remain available either way.
#[derive(Debug)]
pub struct ScalingRun {
    pub points: Vec<VolumePoint>,
    pub weight_fit: Result<FitResult>,
    pub bias_fit: Result<FitResult>,
}

/// Runs the scaling sweep by training at every volume with nested ticker
/// subsets and fitting both coupling-mean series. A training failure aborts
/// with the completed points preserved in the error.
pub fn scaling_run(
    panel: &ReturnPanel,
    volumes: &[usize],
    rule: &SubsetRule,
    cfg: &TrainConfig,
) -> Result<ScalingRun> {
    scaling_run_with(panel, volumes, rule, |sub| {
        let (theta, _) = train(&sub.day_vectors(), cfg)?;
        Ok(theta)
    })
}

/// [`scaling_run`] with the per-volume fitting step injected. Tests use this
/// to substitute known couplings for the training step.
pub fn scaling_run_with(
    panel: &ReturnPanel,
    volumes: &[usize],
    rule: &SubsetRule,
    mut fit_theta: impl FnMut(&ReturnPanel) -> Result<CouplingSet>,
) -> Result<ScalingRun> {
    if volumes.len() < 2 {
        return Err(Error::InvalidConfig("need at least two volumes".into()));
    }
    if volumes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("volumes must be sorted and distinct".into()));
    }
    let max_v = *volumes.last().expect("non-empty");
    if panel.n_tickers() < max_v {
        return Err(Error::InvalidConfig(format!(
            "panel has {} tickers, need {max_v}",
            panel.n_tickers()
        )));
    }
    if volumes[0] < 2 {
        return Err(Error::InvalidConfig("volumes must be >= 2".into()));
    }

    let orderings: Vec<Vec<String>> = match rule {
        SubsetRule::Nested => {
            let mut sorted = panel.tickers().to_vec();
            sorted.sort();
            vec![sorted]
        }
        SubsetRule::NestedRandom { seed, draws } => {
            if *draws == 0 {
                return Err(Error::InvalidConfig("draws must be >= 1".into()));
            }
            (0..*draws)
                .map(|d| {
                    let mut rng = derive_rng(*seed, &[0x5CA1E, d as u64]);
                    let mut tickers = panel.tickers().to_vec();
                    tickers.sort();
                    tickers.shuffle(&mut rng);
                    tickers
                })
                .collect()
        }
    };

    let mut points: Vec<VolumePoint> = Vec::with_capacity(volumes.len());
    for &v in volumes {
        let mut mean_w = 0.0;
        let mut mean_a = 0.0;
        for ordering in &orderings {
            let sub = panel.select_tickers(&ordering[..v])?;
            let theta = fit_theta(&sub).map_err(|e| Error::ScalingAborted {
                volume: v,
                reason: format!("{e} (completed {} of {} volumes)", points.len(), volumes.len()),
                completed: points
                    .iter()
                    .map(|p| (p.volume, p.mean_weight, p.mean_bias))
                    .collect(),
            })?;
            let (w, a) = coupling_means(&theta);
            mean_w += w;
            mean_a += a;
        }
        points.push(VolumePoint {
            volume: v,
            mean_weight: mean_w / orderings.len() as f64,
            mean_bias: mean_a / orderings.len() as f64,
        });
    }

    let weight_fit =
        powerlaw_fit(&points.iter().map(|p| (p.volume as f64, p.mean_weight)).collect::<Vec<_>>());
    let bias_fit =
        powerlaw_fit(&points.iter().map(|p| (p.volume as f64, p.mean_bias)).collect::<Vec<_>>());
    Ok(ScalingRun { points, weight_fit, bias_fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn coupling_means_uniform_values() {
        let theta = CouplingSet::uniform(4, 0.1, 0.5, 0.5, -0.2).unwrap();
        let (w, a) = coupling_means(&theta);
        assert!((w - 0.1).abs() < 1e-15);
        assert!((a + 0.2).abs() < 1e-15);
    }

    #[test]
    fn coupling_means_three_site_weights() {
        let theta = CouplingSet::new(
            3,
            vec![0.1, 0.2, 0.3],
            vec![0.5; 3],
            vec![0.5; 3],
            vec![0.4, -0.4, 0.0],
        )
        .unwrap();
        let (w, a) = coupling_means(&theta);
        assert!((w - 0.2).abs() < 1e-15);
        assert!(a.abs() < 1e-15);
    }

    #[test]
    fn coupling_means_permutation_invariant() {
        let theta = CouplingSet::new(
            3,
            vec![0.15, -0.05, 0.3],
            vec![0.5, 0.6, 0.7],
            vec![0.3, 0.2, 0.1],
            vec![0.1, 0.2, 0.3],
        )
        .unwrap();
        let permuted = theta.permuted(&[2, 0, 1]).unwrap();
        let (w0, a0) = coupling_means(&theta);
        let (w1, a1) = coupling_means(&permuted);
        assert!((w0 - w1).abs() < 1e-15);
        assert!((a0 - a1).abs() < 1e-15);
    }

    #[test]
    fn exact_powerlaw_recovery() {
        let points: Vec<(f64, f64)> =
            [16.0f64, 32.0, 48.0, 64.0].iter().map(|&v| (v, 3.0 * v.powf(-0.5))).collect();
        let fit = powerlaw_fit(&points).unwrap();
        assert!((fit.exponent + 0.5).abs() < 1e-12);
        assert!((fit.prefactor - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.sign, 1.0);
    }

    #[test]
    fn negative_values_fit_on_magnitudes() {
        let points: Vec<(f64, f64)> =
            [16.0f64, 32.0, 64.0].iter().map(|&v| (v, -2.0 * v.powf(-1.0))).collect();
        let fit = powerlaw_fit(&points).unwrap();
        assert!((fit.exponent + 1.0).abs() < 1e-12);
        assert_eq!(fit.sign, -1.0);
        assert!((fit.prefactor + 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_fit_has_no_stderr() {
        let fit = powerlaw_fit(&[(16.0, 1.0), (32.0, 0.5)]).unwrap();
        assert!((fit.exponent + 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.stderr.is_none());
    }

    #[test]
    fn degenerate_fits_are_rejected() {
        assert!(powerlaw_fit(&[(16.0, 1.0)]).is_err());
        assert!(powerlaw_fit(&[(16.0, 1.0), (32.0, -0.5)]).is_err());
        assert!(powerlaw_fit(&[(16.0, 1.0), (32.0, 0.0)]).is_err());
        assert!(powerlaw_fit(&[(16.0, 1.0), (16.0, 0.5)]).is_err());
    }

    #[test]
    fn scale_covariance_leaves_exponent_unchanged() {
        let base: Vec<(f64, f64)> =
            [8.0f64, 16.0, 24.0, 40.0].iter().map(|&v| (v, 1.7 * v.powf(-0.8))).collect();
        let scaled: Vec<(f64, f64)> = base.iter().map(|&(v, y)| (v, 5.0 * y)).collect();
        let f0 = powerlaw_fit(&base).unwrap();
        let f1 = powerlaw_fit(&scaled).unwrap();
        assert!((f0.exponent - f1.exponent).abs() < 1e-12);
        assert!((f1.prefactor / f0.prefactor - 5.0).abs() < 1e-12);
    }

    fn synthetic_panel(n_tickers: usize, n_days: usize) -> ReturnPanel {
        let tickers: Vec<String> = (0..n_tickers).map(|i| format!("S{i:02}")).collect();
        let dates: Vec<NaiveDate> = (0..n_days)
            .map(|i| NaiveDate::from_ymd_opt(2012, 1, 2).unwrap() + chrono::Days::new(i as u64))
            .collect();
        let rows: Vec<Vec<f64>> = (0..n_days)
            .map(|d| (0..n_tickers).map(|t| ((d + t) % 7) as f64 * 0.01 - 0.03).collect())
            .collect();
        ReturnPanel::from_parts(tickers, dates, rows).unwrap()
    }

    #[test]
    fn injected_couplings_recover_inverse_volume_law() {
        let panel = synthetic_panel(8, 30);
        let volumes = vec![4, 6, 8];
        let run = scaling_run_with(&panel, &volumes, &SubsetRule::Nested, |sub| {
            let v = sub.n_tickers();
            let c = 0.8 / v as f64;
            CouplingSet::uniform(v, c, 0.5, 0.5, -0.3 / v as f64)
        })
        .unwrap();
        let weight_fit = run.weight_fit.unwrap();
        let bias_fit = run.bias_fit.unwrap();
        assert!((weight_fit.exponent + 1.0).abs() < 1e-9);
        assert!((bias_fit.exponent + 1.0).abs() < 1e-9);
        assert_eq!(run.points.len(), 3);
        assert_eq!(bias_fit.sign, -1.0);
    }

    #[test]
    fn training_failure_aborts_with_context() {
        let panel = synthetic_panel(8, 30);
        let volumes = vec![4, 6, 8];
        let mut calls = 0;
        let err = scaling_run_with(&panel, &volumes, &SubsetRule::Nested, |sub| {
            calls += 1;
            if calls == 2 {
                return Err(Error::EmptyInput("simulated failure"));
            }
            CouplingSet::uniform(sub.n_tickers(), 0.1, 0.5, 0.5, 0.1)
        })
        .unwrap_err();
        match err {
            Error::ScalingAborted { volume, reason, completed } => {
                assert_eq!(volume, 6);
                assert!(reason.contains("completed 1"));
                assert_eq!(completed.len(), 1);
                assert_eq!(completed[0].0, 4);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn random_nested_subsets_are_seed_stable() {
        let panel = synthetic_panel(8, 30);
        let volumes = vec![4, 8];
        let rule = SubsetRule::NestedRandom { seed: 3, draws: 2 };
        let run_once = |_: ()| {
            scaling_run_with(&panel, &volumes, &rule, |sub| {
                let v = sub.n_tickers();
                // Depend on the subset composition so draw order matters.
                let tag: f64 = sub
                    .tickers()
                    .iter()
                    .map(|t| t.bytes().map(|b| b as f64).sum::<f64>())
                    .sum::<f64>();
                CouplingSet::uniform(v, 1.0 / (v as f64 + tag * 1e-6), 0.5, 0.5, 0.1)
            })
            .unwrap()
        };
        let a = run_once(());
        let b = run_once(());
        assert_eq!(a.points[0].mean_weight, b.points[0].mean_weight);
        assert_eq!(
            a.weight_fit.unwrap().exponent,
            b.weight_fit.unwrap().exponent
        );
    }

    #[test]
    fn mixed_sign_bias_means_fail_only_the_bias_fit() {
        let panel = synthetic_panel(8, 30);
        let volumes = vec![4, 6, 8];
        let mut flip = 1.0;
        let run = scaling_run_with(&panel, &volumes, &SubsetRule::Nested, |sub| {
            let v = sub.n_tickers();
            flip = -flip;
            CouplingSet::uniform(v, 0.9 / v as f64, 0.5, 0.5, flip * 1e-4)
        })
        .unwrap();
        assert!(run.weight_fit.is_ok());
        assert!(matches!(run.bias_fit, Err(Error::MixedSignFit(_))));
        assert_eq!(run.points.len(), 3);
    }
}
