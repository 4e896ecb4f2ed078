//! Implementations of the CLI subcommands.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use phi4_core::checkpoint::Checkpoint;
use phi4_core::data::{
    binarize, ingest_csv_long, ingest_csv_wide, log_returns, minmax_rescale, sma, CsvSchema,
    PriceTable, ReturnPanel,
};
use phi4_core::forecast::{
    impute, next_day_forecast, rescaled_mean_baseline, rms, rolling_linreg_baseline,
};
use phi4_core::model::FieldConfig;
use phi4_core::rng::derive_seed;
use phi4_core::sampler::sample;
use phi4_core::scaling::{scaling_run_with, FitResult, SubsetRule};
use phi4_core::stats::{mae, market_series, rolling_kurtosis, rolling_kurtosis_pooled};
use phi4_core::trainer::train;
use phi4_core::{Error, Result};

use crate::config::RunConfig;
use crate::io_util::{input_checksum, metadata_line, read_panel_csv, write_panel_csv};
use crate::{Command, IngestFormat, SubsetRuleArg};

pub fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Ingest { input, format, out, date_col, ticker_col, close_col, seed } => {
            cmd_ingest(&input, format, &out, &date_col, &ticker_col, &close_col, seed)
        }
        Command::Train { panel, config, seed, out, history, standardize } => {
            cmd_train(&panel, config.as_deref(), seed, &out, history.as_deref(), standardize)
        }
        Command::Stats { panel, checkpoint, config, seed, out, binarize, window, pooled } => {
            cmd_stats(
                &panel,
                checkpoint.as_deref(),
                config.as_deref(),
                seed,
                &out,
                binarize,
                window,
                pooled,
            )
        }
        Command::Scaling {
            panel,
            volumes,
            config,
            seed,
            out,
            summary,
            subset_rule,
            draws,
        } => cmd_scaling(
            &panel,
            &volumes,
            config.as_deref(),
            seed,
            &out,
            summary.as_deref(),
            subset_rule,
            draws,
        ),
        Command::Impute {
            checkpoint,
            panel,
            target,
            eval_days,
            config,
            seed,
            out,
            summary,
        } => cmd_impute(
            &checkpoint,
            &panel,
            &target,
            eval_days,
            config.as_deref(),
            seed,
            &out,
            summary.as_deref(),
        ),
        Command::Forecast {
            panel,
            ticker,
            eval_days,
            config,
            seed,
            out,
            summary,
            window,
            train_window,
            cadence,
            baseline_window,
        } => cmd_forecast(
            &panel,
            &ticker,
            eval_days,
            config.as_deref(),
            seed,
            &out,
            summary.as_deref(),
            window,
            train_window,
            cadence,
            baseline_window,
        ),
        Command::Sample { checkpoint, n, clamp, config, seed, out } => {
            cmd_sample(&checkpoint, n, clamp.as_deref(), config.as_deref(), seed, &out)
        }
        Command::Baseline { panel, ticker, windows, lags, eval_days, out, seed } => {
            cmd_baseline(&panel, &ticker, &windows, lags, eval_days, &out, seed)
        }
        Command::Validate { level, seed } => {
            let ok = crate::validate::run(level, seed.unwrap_or(0));
            Ok(if ok { 0 } else { 1 })
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).map_err(Error::InvalidConfig),
        None => Ok(RunConfig::default()),
    }
}

/// Flag beats config file beats the zero default.
fn resolve_seed(flag: Option<u64>, rc: &RunConfig) -> u64 {
    flag.or(rc.seed).unwrap_or(0)
}

fn default_sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    out.with_file_name(name)
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad {what} entry {s:?}")))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

fn cmd_ingest(
    input: &str,
    format: IngestFormat,
    out: &Path,
    date_col: &str,
    ticker_col: &str,
    close_col: &str,
    seed: Option<u64>,
) -> Result<u8> {
    let seed = seed.unwrap_or(0);
    let (table, input_paths) = match format {
        IngestFormat::Long => {
            let path = PathBuf::from(input);
            let schema = CsvSchema {
                date_col: date_col.into(),
                ticker_col: ticker_col.into(),
                close_col: close_col.into(),
            };
            let table = ingest_csv_long(std::fs::File::open(&path)?, &schema)?;
            (table, vec![path])
        }
        IngestFormat::Wide => {
            let paths = wide_input_paths(input)?;
            let mut table = PriceTable::new();
            for p in &paths {
                let ticker = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| Error::InvalidConfig(format!("bad file name {p:?}")))?;
                let one = ingest_csv_wide(std::fs::File::open(p)?, ticker)?;
                table.extend(one)?;
            }
            (table, paths)
        }
    };
    let (panel, dropped) = log_returns(&table)?;
    let refs: Vec<&Path> = input_paths.iter().map(|p| p.as_path()).collect();
    let header = metadata_line(seed, &input_checksum(&refs)?);
    write_panel_csv(out, &panel, &header)?;
    println!(
        "panel: {} tickers x {} days ({} incomplete rows dropped) -> {}",
        panel.n_tickers(),
        panel.n_days(),
        dropped,
        out.display()
    );
    Ok(0)
}

fn wide_input_paths(input: &str) -> Result<Vec<PathBuf>> {
    let as_path = PathBuf::from(input);
    if as_path.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&as_path)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::EmptyInput("no csv files in input directory"));
        }
        Ok(paths)
    } else {
        Ok(input.split(',').map(|s| PathBuf::from(s.trim())).collect())
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Per-ticker root-mean-square scales over the panel.
fn panel_scales(panel: &ReturnPanel) -> Result<Vec<f64>> {
    panel
        .tickers()
        .iter()
        .map(|t| {
            let s = rms(&panel.column(t)?);
            if s > 0.0 {
                Ok(s)
            } else {
                Err(Error::ZeroSigma(s))
            }
        })
        .collect()
}

fn scaled_day_vectors(panel: &ReturnPanel, scales: &[f64]) -> Vec<FieldConfig> {
    (0..panel.n_days())
        .map(|d| {
            let row: Vec<f64> = panel
                .day_row(d)
                .iter()
                .zip(scales)
                .map(|(x, s)| x / s)
                .collect();
            FieldConfig::new(row).expect("finite panel rows")
        })
        .collect()
}

fn train_on_panel(
    panel: &ReturnPanel,
    rc: &RunConfig,
    seed: u64,
    standardize: bool,
) -> Result<(Checkpoint, phi4_core::trainer::TrainHistory)> {
    let cfg = rc.train_config(seed);
    let scales = if standardize {
        panel_scales(panel)?
    } else {
        vec![1.0; panel.n_tickers()]
    };
    let vectors = scaled_day_vectors(panel, &scales);
    let (theta, history) = train(&vectors, &cfg)?;

    let mut meta = BTreeMap::new();
    meta.insert("tool_version".into(), crate::io_util::TOOL_VERSION.into());
    meta.insert("seed".into(), seed.to_string());
    meta.insert("standardize".into(), standardize.to_string());
    meta.insert("learning_rate".into(), cfg.learning_rate.to_string());
    meta.insert("lr_decay".into(), cfg.lr_decay.to_string());
    meta.insert("quartic_lr_scale".into(), cfg.quartic_lr_scale.to_string());
    meta.insert("epochs".into(), cfg.epochs.to_string());
    meta.insert("chains".into(), cfg.chains.to_string());
    meta.insert("persistent".into(), cfg.persistent.to_string());
    meta.insert("l2_weight_decay".into(), cfg.l2_weight_decay.to_string());
    meta.insert("sweeps_burn_in".into(), cfg.sampler.sweeps_burn_in.to_string());
    meta.insert(
        "sweeps_between_samples".into(),
        cfg.sampler.sweeps_between_samples.to_string(),
    );
    meta.insert("n_samples".into(), cfg.sampler.n_samples.to_string());
    meta.insert("train_start".into(), panel.dates()[0].to_string());
    meta.insert(
        "train_end".into(),
        panel.dates()[panel.n_days() - 1].to_string(),
    );
    if let Some(last) = history.epochs.last() {
        meta.insert("final_residual_max".into(), last.max_residual().to_string());
        meta.insert("final_acceptance".into(), last.acceptance.to_string());
    }
    // Per-ticker scale of the training window, used by the imputation
    // baseline and to undo standardization at sampling time.
    for (t, s) in panel.tickers().iter().zip(&scales) {
        meta.insert(format!("sigma.{t}"), s.to_string());
    }
    let ck = Checkpoint::from_couplings(&theta, panel.tickers().to_vec(), meta)?;
    Ok((ck, history))
}

fn cmd_train(
    panel_path: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    history_path: Option<&Path>,
    standardize: bool,
) -> Result<u8> {
    let rc = load_config(config)?;
    let seed = resolve_seed(seed, &rc);
    // The flag turns standardization on; the config key sets the default.
    let standardize = standardize || rc.standardize.unwrap_or(false);
    let panel = read_panel_csv(panel_path)?;
    let checksum = {
        let mut paths: Vec<&Path> = vec![panel_path];
        if let Some(c) = config {
            paths.push(c);
        }
        input_checksum(&paths)?
    };
    let (mut ck, history) = train_on_panel(&panel, &rc, seed, standardize)?;
    ck.training_metadata.insert("cmd".into(), crate::io_util::normalized_cmd());
    ck.training_metadata.insert("inputs_sha256".into(), checksum.clone());
    ck.save(out)?;

    let hist_path = history_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_sibling(out, ".history.csv"));
    let mut f = std::fs::File::create(&hist_path)?;
    writeln!(f, "{}", metadata_line(seed, &checksum))?;
    writeln!(
        f,
        "epoch,residual_pair,residual_first,residual_second,residual_fourth,acceptance"
    )?;
    for e in &history.epochs {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            e.epoch,
            e.residual_pair,
            e.residual_first,
            e.residual_second,
            e.residual_fourth,
            e.acceptance
        )?;
    }
    if let Some(last) = history.epochs.last() {
        println!(
            "final moment residuals: pair {:.3e}, first {:.3e}, second {:.3e}, fourth {:.3e} \
             (acceptance {:.3})",
            last.residual_pair,
            last.residual_first,
            last.residual_second,
            last.residual_fourth,
            last.acceptance
        );
    }
    println!("checkpoint -> {}", out.display());
    Ok(0)
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

/// Sampled synthetic panel from a checkpointed model, mapped back to raw
/// return units when the checkpoint was trained standardized.
fn sample_model_panel(ck: &Checkpoint, panel: &ReturnPanel, rc: &RunConfig, seed: u64) -> Result<ReturnPanel> {
    let theta = ck.to_couplings()?;
    let mut cfg = rc.sampler_config();
    cfg.n_samples = panel.n_days();
    let configs = sample(
        &theta,
        &cfg,
        &FieldConfig::zeros(theta.volume()),
        None,
        derive_seed(seed, &[0x57A7]),
    )?;
    let standardized = ck
        .training_metadata
        .get("standardize")
        .is_some_and(|v| v == "true");
    let scales: Vec<f64> = ck
        .tickers
        .iter()
        .map(|t| {
            if standardized {
                ck.training_metadata
                    .get(&format!("sigma.{t}"))
                    .and_then(|s| s.parse::<f64>().ok())
                    .unwrap_or(1.0)
            } else {
                1.0
            }
        })
        .collect();
    let rows: Vec<Vec<f64>> = configs
        .iter()
        .map(|c| c.values().iter().zip(&scales).map(|(x, s)| x * s).collect())
        .collect();
    ReturnPanel::from_parts(ck.tickers.clone(), panel.dates().to_vec(), rows)
}

struct StatsSeries {
    label: &'static str,
    mean_sma: Vec<f64>,
    kurtosis: Vec<Option<f64>>,
}

fn panel_stats(panel: &ReturnPanel, window: usize, pooled: bool, label: &'static str) -> Result<StatsSeries> {
    let market = market_series(panel);
    let mean_sma = sma(&market, window)?;
    let kurtosis = if pooled {
        rolling_kurtosis_pooled(panel, window)?
    } else {
        rolling_kurtosis(&market, window)?
    };
    Ok(StatsSeries { label, mean_sma, kurtosis })
}

#[allow(clippy::too_many_arguments)]
fn cmd_stats(
    panel_path: &Path,
    checkpoint: Option<&Path>,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    emit_binarized: bool,
    window: usize,
    pooled: bool,
) -> Result<u8> {
    let rc = load_config(config)?;
    let seed = resolve_seed(seed, &rc);
    let panel = read_panel_csv(panel_path)?;
    let mut input_paths: Vec<&Path> = vec![panel_path];
    if let Some(c) = checkpoint {
        input_paths.push(c);
    }
    if let Some(c) = config {
        input_paths.push(c);
    }
    let checksum = input_checksum(&input_paths)?;

    let ck = match checkpoint {
        Some(p) => Checkpoint::load(p)?,
        None => train_on_panel(&panel, &rc, seed, rc.standardize.unwrap_or(true))?.0,
    };
    if ck.tickers != panel.tickers() {
        return Err(Error::InvalidConfig(
            "checkpoint tickers do not match panel tickers".into(),
        ));
    }
    let model_panel = sample_model_panel(&ck, &panel, &rc, seed)?;

    let mut series = vec![
        panel_stats(&panel, window, pooled, "original")?,
        panel_stats(&model_panel, window, pooled, "phi4")?,
    ];
    if emit_binarized {
        let mut b = panel_stats(&binarize(&panel), window, pooled, "binarized")?;
        // The binarized mean lives on a +-1 scale; normalize it into the
        // original mean's range for comparison.
        let lo = series[0].mean_sma.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = series[0].mean_sma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        b.mean_sma = minmax_rescale(&b.mean_sma, lo, hi);
        series.push(b);
    }

    let mut f = std::fs::File::create(out)?;
    writeln!(f, "{}", metadata_line(seed, &checksum))?;
    writeln!(f, "date,market_mean_sma,market_kurtosis,source_label")?;
    let offset = window - 1;
    for s in &series {
        for (i, (m, k)) in s.mean_sma.iter().zip(&s.kurtosis).enumerate() {
            let date = panel.dates()[offset + i];
            match k {
                Some(kv) => writeln!(f, "{date},{m},{kv},{}", s.label)?,
                None => writeln!(f, "{date},{m},,{}", s.label)?,
            }
        }
    }
    println!(
        "stats: {} series x {} windows -> {}",
        series.len(),
        series[0].mean_sma.len(),
        out.display()
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// scaling
// ---------------------------------------------------------------------------

fn write_scaling_points(path: &Path, header: &str, points: &[(usize, f64, f64)]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{header}")?;
    writeln!(f, "V,mean_w,mean_a")?;
    for (v, w, a) in points {
        writeln!(f, "{v},{w},{a}")?;
    }
    Ok(())
}

fn write_fit_summary(path: &Path, header: &str, fits: &[(&str, &FitResult)]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{header}")?;
    writeln!(f, "family,exponent,stderr,r_squared,sign,prefactor")?;
    for (family, fit) in fits {
        let stderr = fit.stderr.map_or(String::new(), |s| s.to_string());
        writeln!(
            f,
            "{family},{},{stderr},{},{},{}",
            fit.exponent, fit.r_squared, fit.sign, fit.prefactor
        )?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_scaling(
    panel_path: &Path,
    volumes: &str,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    summary: Option<&Path>,
    subset_rule: SubsetRuleArg,
    draws: usize,
) -> Result<u8> {
    let rc = load_config(config)?;
    let seed = resolve_seed(seed, &rc);
    let panel = read_panel_csv(panel_path)?;
    let volumes = parse_usize_list(volumes, "volume")?;
    let mut paths: Vec<&Path> = vec![panel_path];
    if let Some(c) = config {
        paths.push(c);
    }
    let checksum = input_checksum(&paths)?;
    let header = metadata_line(seed, &checksum);
    let rule = match subset_rule {
        SubsetRuleArg::Nested => SubsetRule::Nested,
        SubsetRuleArg::Random => SubsetRule::NestedRandom { seed, draws },
    };
    let cfg = rc.train_config(seed);
    let standardize = rc.standardize.unwrap_or(false);

    let outcome = scaling_run_with(&panel, &volumes, &rule, |sub| {
        let scales = if standardize {
            panel_scales(sub)?
        } else {
            vec![1.0; sub.n_tickers()]
        };
        let vectors = scaled_day_vectors(sub, &scales);
        let (theta, _) = train(&vectors, &cfg)?;
        Ok(theta)
    });
    match outcome {
        Ok(run) => {
            let points: Vec<(usize, f64, f64)> = run
                .points
                .iter()
                .map(|p| (p.volume, p.mean_weight, p.mean_bias))
                .collect();
            write_scaling_points(out, &header, &points)?;
            let summary_path = summary
                .map(Path::to_path_buf)
                .unwrap_or_else(|| default_sibling(out, ".summary.csv"));
            let mut fits: Vec<(&str, &FitResult)> = Vec::new();
            for (family, fit) in
                [("weights", &run.weight_fit), ("biases", &run.bias_fit)]
            {
                match fit {
                    Ok(f) => {
                        fits.push((family, f));
                        println!(
                            "scaling {family}: k = {:.4} (stderr {}, r2 {:.4}, sign {})",
                            f.exponent,
                            f.stderr.map_or("-".into(), |s| format!("{s:.4}")),
                            f.r_squared,
                            f.sign
                        );
                    }
                    // Mixed-sign or zero means carry no one-sign power law;
                    // the points file still has the numbers.
                    Err(e) => println!("scaling {family}: fit unavailable ({e})"),
                }
            }
            write_fit_summary(&summary_path, &header, &fits)?;
            println!("points -> {}", out.display());
            Ok(0)
        }
        Err(Error::ScalingAborted { volume, reason, completed }) => {
            // Preserve the completed points before reporting the failure.
            write_scaling_points(out, &header, &completed)?;
            Err(Error::ScalingAborted { volume, reason, completed })
        }
        Err(e) => Err(e),
    }
}

// ---------------------------------------------------------------------------
// impute
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn cmd_impute(
    checkpoint: &Path,
    panel_path: &Path,
    target: &str,
    eval_days: usize,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    summary: Option<&Path>,
) -> Result<u8> {
    let rc = load_config(config)?;
    let seed = resolve_seed(seed, &rc);
    let ck = Checkpoint::load(checkpoint)?;
    let theta = ck.to_couplings()?;
    if ck.tickers.is_empty() {
        return Err(Error::CheckpointFormat(
            "checkpoint has no ticker names; imputation needs them".into(),
        ));
    }
    let full_panel = read_panel_csv(panel_path)?;
    let panel = full_panel.select_tickers(&ck.tickers)?;
    let target_idx = panel.ticker_index(target)?;
    if eval_days == 0 || eval_days > panel.n_days() {
        return Err(Error::InvalidConfig(format!(
            "eval_days {eval_days} out of range for {}-day panel",
            panel.n_days()
        )));
    }

    let standardized = ck
        .training_metadata
        .get("standardize")
        .is_some_and(|v| v == "true");
    // Per-stock scale from the training window (checkpoint metadata), with a
    // pre-evaluation fallback for externally produced checkpoints.
    let scales: Vec<f64> = ck
        .tickers
        .iter()
        .map(|t| {
            if let Some(s) = ck
                .training_metadata
                .get(&format!("sigma.{t}"))
                .and_then(|s| s.parse::<f64>().ok())
            {
                return Ok(s);
            }
            let col = panel.column(t)?;
            let pre = &col[..col.len() - eval_days];
            let s = rms(pre);
            if s > 0.0 {
                Ok(s)
            } else {
                Err(Error::ZeroSigma(s))
            }
        })
        .collect::<Result<_>>()?;

    let sampler = rc.predict_sampler();
    let checksum = input_checksum(&[checkpoint, panel_path])?;
    let mut f = std::fs::File::create(out)?;
    writeln!(f, "{}", metadata_line(seed, &checksum))?;
    writeln!(f, "date,truth,phi4_mean,phi4_q05,phi4_q50,phi4_q95,baseline_value")?;

    let first = panel.n_days() - eval_days;
    let mut phi4_pred = Vec::with_capacity(eval_days);
    let mut base_pred = Vec::with_capacity(eval_days);
    let mut truths = Vec::with_capacity(eval_days);
    for d in first..panel.n_days() {
        let row = panel.day_row(d);
        let observed: Vec<Option<f64>> = (0..panel.n_tickers())
            .map(|i| {
                if i == target_idx {
                    None
                } else if standardized {
                    Some(row[i] / scales[i])
                } else {
                    Some(row[i])
                }
            })
            .collect();
        let post = impute(&theta, &observed, &sampler, derive_seed(seed, &[0x13E7, d as u64]))?;
        let unit = if standardized { scales[target_idx] } else { 1.0 };
        let mean = post.mean * unit;
        let remnants: Vec<(f64, f64)> = (0..panel.n_tickers())
            .filter(|&i| i != target_idx)
            .map(|i| (row[i], scales[i]))
            .collect();
        let baseline = rescaled_mean_baseline(&remnants, scales[target_idx])?;
        let truth = row[target_idx];
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            panel.dates()[d],
            truth,
            mean,
            post.q05 * unit,
            post.q50 * unit,
            post.q95 * unit,
            baseline
        )?;
        phi4_pred.push(mean);
        base_pred.push(baseline);
        truths.push(truth);
    }

    let phi4_mae = mae(&phi4_pred, &truths)?;
    let base_mae = mae(&base_pred, &truths)?;
    let summary_path = summary
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_sibling(out, ".summary.csv"));
    let mut sf = std::fs::File::create(&summary_path)?;
    writeln!(sf, "{}", metadata_line(seed, &checksum))?;
    writeln!(sf, "method,mae")?;
    writeln!(sf, "phi4,{phi4_mae}")?;
    writeln!(sf, "rescaled_mean,{base_mae}")?;
    println!("impute {target}: phi4 MAE {phi4_mae:.6}, rescaled-mean MAE {base_mae:.6}");
    Ok(0)
}

// ---------------------------------------------------------------------------
// forecast
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn cmd_forecast(
    panel_path: &Path,
    ticker: &str,
    eval_days: usize,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    summary: Option<&Path>,
    window: Option<usize>,
    train_window: Option<usize>,
    cadence: Option<usize>,
    baseline_window: usize,
) -> Result<u8> {
    let rc = load_config(config)?;
    let seed = resolve_seed(seed, &rc);
    let panel = read_panel_csv(panel_path)?;
    let history = panel.column(ticker)?;
    let mut cfg = rc.forecast_config(seed);
    if let Some(w) = window {
        cfg.window = w;
    }
    if let Some(tw) = train_window {
        cfg.train_window = tw;
    }
    if let Some(c) = cadence {
        cfg.retrain_every = c;
    }

    let forecasts = next_day_forecast(&history, eval_days, &cfg)?;
    // Like-for-like baseline over the same evaluation days.
    let baseline: Option<std::collections::BTreeMap<usize, Option<f64>>> =
        if baseline_window > 0 {
            let res = rolling_linreg_baseline(&history, &[baseline_window], 1, eval_days)?;
            Some(res[0].predictions.iter().cloned().collect())
        } else {
            None
        };

    let checksum = input_checksum(&[panel_path])?;
    let mut f = std::fs::File::create(out)?;
    writeln!(f, "{}", metadata_line(seed, &checksum))?;
    writeln!(f, "date,truth,phi4_mean,phi4_q05,phi4_q50,phi4_q95,baseline_value")?;
    let mut base_pred = Vec::new();
    let mut base_truth = Vec::new();
    for day in &forecasts {
        let base = baseline
            .as_ref()
            .and_then(|b| b.get(&day.index).copied().flatten());
        if let Some(bv) = base {
            base_pred.push(bv);
            base_truth.push(day.truth);
        }
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            panel.dates()[day.index],
            day.truth,
            day.posterior.mean,
            day.posterior.q05,
            day.posterior.q50,
            day.posterior.q95,
            base.map_or(String::new(), |v| v.to_string())
        )?;
    }
    let preds: Vec<f64> = forecasts.iter().map(|d| d.posterior.mean).collect();
    let truths: Vec<f64> = forecasts.iter().map(|d| d.truth).collect();
    let phi4_mae = mae(&preds, &truths)?;
    let naive_mae = mae(&vec![0.0; truths.len()], &truths)?;
    let summary_path = summary
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_sibling(out, ".summary.csv"));
    let mut sf = std::fs::File::create(&summary_path)?;
    writeln!(sf, "{}", metadata_line(seed, &checksum))?;
    writeln!(sf, "method,mae,days")?;
    writeln!(sf, "phi4,{phi4_mae},{}", forecasts.len())?;
    writeln!(sf, "naive_zero,{naive_mae},{}", forecasts.len())?;
    if !base_pred.is_empty() {
        let base_mae = mae(&base_pred, &base_truth)?;
        writeln!(sf, "linreg_w{baseline_window},{base_mae},{}", base_pred.len())?;
    }
    println!(
        "forecast {ticker}: phi4 MAE {phi4_mae:.6} vs naive {naive_mae:.6} over {} days",
        forecasts.len()
    );
    Ok(0)
}

/// Parses "AAA=0.01,BBB=-0.02" into per-site clamp values.
fn parse_clamp(spec: &str, tickers: &[String]) -> Result<Vec<Option<f64>>> {
    let mut out = vec![None; tickers.len()];
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (name, value) = part.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("bad clamp entry {part:?}, expected TICKER=VALUE"))
        })?;
        let idx = tickers
            .iter()
            .position(|t| t == name.trim())
            .ok_or_else(|| Error::UnknownTicker(name.trim().into()))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad clamp value {value:?}")))?;
        out[idx] = Some(v);
    }
    Ok(out)
}

fn cmd_sample(
    checkpoint: &Path,
    n: usize,
    clamp_spec: Option<&str>,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<u8> {
    let rc = load_config(config)?;
    let seed = resolve_seed(seed, &rc);
    let ck = Checkpoint::load(checkpoint)?;
    let theta = ck.to_couplings()?;
    let names: Vec<String> = if ck.tickers.is_empty() {
        (0..theta.volume()).map(|i| format!("site{i}")).collect()
    } else {
        ck.tickers.clone()
    };

    let standardized = ck
        .training_metadata
        .get("standardize")
        .is_some_and(|v| v == "true");
    let scales: Vec<f64> = names
        .iter()
        .map(|t| {
            if standardized {
                ck.training_metadata
                    .get(&format!("sigma.{t}"))
                    .and_then(|s| s.parse::<f64>().ok())
                    .unwrap_or(1.0)
            } else {
                1.0
            }
        })
        .collect();

    // Clamp values arrive in raw units; the chain runs in training units.
    let clamp = match clamp_spec {
        Some(spec) => {
            let raw = parse_clamp(spec, &names)?;
            let scaled: Vec<Option<f64>> = raw
                .iter()
                .zip(&scales)
                .map(|(v, s)| v.map(|x| x / s))
                .collect();
            Some(phi4_core::Clamp::from_options(&scaled))
        }
        None => None,
    };

    let mut cfg = rc.sampler_config();
    cfg.n_samples = n;
    let configs = sample(
        &theta,
        &cfg,
        &FieldConfig::zeros(theta.volume()),
        clamp.as_ref(),
        derive_seed(seed, &[0x5A11]),
    )?;

    let checksum = input_checksum(&[checkpoint])?;
    let mut f = std::fs::File::create(out)?;
    writeln!(f, "{}", metadata_line(seed, &checksum))?;
    writeln!(f, "{}", names.join(","))?;
    for c in &configs {
        let row: Vec<String> = c
            .values()
            .iter()
            .zip(&scales)
            .map(|(x, s)| format!("{}", x * s))
            .collect();
        writeln!(f, "{}", row.join(","))?;
    }
    println!("{} samples x {} sites -> {}", configs.len(), names.len(), out.display());
    Ok(0)
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

fn cmd_baseline(
    panel_path: &Path,
    ticker: &str,
    windows: &str,
    lags: usize,
    eval_days: usize,
    out: &Path,
    seed: Option<u64>,
) -> Result<u8> {
    let seed = seed.unwrap_or(0);
    let panel = read_panel_csv(panel_path)?;
    let history = panel.column(ticker)?;
    let windows = parse_usize_list(windows, "window")?;
    let results = rolling_linreg_baseline(&history, &windows, lags, eval_days)?;
    let checksum = input_checksum(&[panel_path])?;
    let mut f = std::fs::File::create(out)?;
    writeln!(f, "{}", metadata_line(seed, &checksum))?;
    writeln!(f, "window,mae,days")?;
    for r in &results {
        let days = r.predictions.iter().filter(|(_, p)| p.is_some()).count();
        writeln!(f, "{},{},{days}", r.window, r.mae)?;
    }
    for r in &results {
        println!("linreg window {:>4}: MAE {:.6}", r.window, r.mae);
    }
    Ok(0)
}
