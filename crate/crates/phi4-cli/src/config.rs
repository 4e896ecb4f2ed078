//! Flat key-value run configuration: a TOML file mirroring the trainer and
//! sampler field names. Command-line flags override file values; anything
//! unset falls back to the library defaults.

use std::path::Path;

use serde::Deserialize;

use phi4_core::forecast::ForecastConfig;
use phi4_core::{InitSpec, SamplerConfig, TrainConfig};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // trainer
    pub learning_rate: Option<f64>,
    pub lr_decay: Option<f64>,
    pub quartic_lr_scale: Option<f64>,
    pub epochs: Option<usize>,
    pub chains: Option<usize>,
    pub persistent: Option<bool>,
    pub l2_weight_decay: Option<f64>,
    pub standardize: Option<bool>,
    pub seed: Option<u64>,
    // initialization
    pub w_init_std: Option<f64>,
    pub bias_init: Option<f64>,
    pub mass_sq_init: Option<f64>,
    pub quartic_init: Option<f64>,
    // sampler (training chains)
    pub proposal_width: Option<f64>,
    pub sweeps_burn_in: Option<usize>,
    pub sweeps_between_samples: Option<usize>,
    pub n_samples: Option<usize>,
    /// Target acceptance in (0,1); set to 0 to disable adaptation.
    pub adapt_acceptance: Option<f64>,
    // forecasting
    pub window: Option<usize>,
    pub train_window: Option<usize>,
    pub stride: Option<usize>,
    pub retrain_every: Option<usize>,
    pub predict_burn_in: Option<usize>,
    pub predict_thin: Option<usize>,
    pub predict_samples: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let d = SamplerConfig::default();
        SamplerConfig {
            proposal_width: self.proposal_width.unwrap_or(d.proposal_width),
            sweeps_burn_in: self.sweeps_burn_in.unwrap_or(d.sweeps_burn_in),
            sweeps_between_samples: self
                .sweeps_between_samples
                .unwrap_or(d.sweeps_between_samples),
            n_samples: self.n_samples.unwrap_or(d.n_samples),
            adapt_acceptance: match self.adapt_acceptance {
                Some(t) if t == 0.0 => None,
                Some(t) => Some(t),
                None => d.adapt_acceptance,
            },
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        let di = InitSpec::default();
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            lr_decay: self.lr_decay.unwrap_or(d.lr_decay),
            quartic_lr_scale: self.quartic_lr_scale.unwrap_or(d.quartic_lr_scale),
            epochs: self.epochs.unwrap_or(d.epochs),
            chains: self.chains.unwrap_or(d.chains),
            persistent: self.persistent.unwrap_or(d.persistent),
            sampler: SamplerConfig {
                // Training epochs default to a smaller per-epoch budget than
                // plain sampling.
                n_samples: self.n_samples.unwrap_or(d.sampler.n_samples),
                ..self.sampler_config()
            },
            init: InitSpec {
                w_init_std: self.w_init_std.unwrap_or(di.w_init_std),
                bias_init: self.bias_init.unwrap_or(di.bias_init),
                mass_sq_init: self.mass_sq_init.unwrap_or(di.mass_sq_init),
                quartic_init: self.quartic_init.unwrap_or(di.quartic_init),
            },
            seed,
            l2_weight_decay: self.l2_weight_decay.unwrap_or(d.l2_weight_decay),
        }
    }

    pub fn predict_sampler(&self) -> SamplerConfig {
        let d = ForecastConfig::default().predict_sampler;
        SamplerConfig {
            proposal_width: self.proposal_width.unwrap_or(d.proposal_width),
            sweeps_burn_in: self.predict_burn_in.unwrap_or(d.sweeps_burn_in),
            sweeps_between_samples: self.predict_thin.unwrap_or(d.sweeps_between_samples),
            n_samples: self.predict_samples.unwrap_or(d.n_samples),
            adapt_acceptance: match self.adapt_acceptance {
                Some(t) if t == 0.0 => None,
                Some(t) => Some(t),
                None => d.adapt_acceptance,
            },
        }
    }

    pub fn forecast_config(&self, seed: u64) -> ForecastConfig {
        let d = ForecastConfig::default();
        ForecastConfig {
            window: self.window.unwrap_or(d.window),
            train_window: self.train_window.unwrap_or(d.train_window),
            stride: self.stride.unwrap_or(d.stride),
            retrain_every: self.retrain_every.unwrap_or(d.retrain_every),
            standardize: self.standardize.unwrap_or(d.standardize),
            train: self.train_config(seed),
            predict_sampler: self.predict_sampler(),
            seed,
        }
    }
}
