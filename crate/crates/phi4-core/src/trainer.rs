//! Moment-matching maximum-likelihood training.
//!
//! The objective is the KL divergence from the empirical distribution of the
//! training vectors to the model's Boltzmann distribution. Its gradient is the
//! gap between data and model expectations of the action's sufficient
//! statistics; model expectations are estimated with parallel MCMC chains
//! (persistent across epochs by default).

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    CouplingGrad, CouplingSet, FieldConfig, MomentAccumulator, Moments, LAMBDA_MIN,
};
use crate::rng::{derive_rng, derive_seed};
use crate::sampler::{burn_in, record_moments, ChainState, SamplerConfig};

/// Initial coupling values; weights are drawn `N(0, w_init_std^2)`.
#[derive(Debug, Clone, Copy)]
pub struct InitSpec {
    pub w_init_std: f64,
    pub bias_init: f64,
    pub mass_sq_init: f64,
    pub quartic_init: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            w_init_std: 0.01,
            bias_init: 0.0,
            mass_sq_init: 0.5,
            quartic_init: 0.5,
        }
    }
}

/// Gradient-descent schedule and chain layout.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Per-epoch multiplicative decay of the learning rate (1.0 = constant).
    /// A decayed tail lets the moment match settle below the gradient-noise
    /// floor of the per-epoch sample budget.
    pub lr_decay: f64,
    /// Extra factor on quartic updates (their sufficient statistic is the
    /// largest-magnitude moment).
    pub quartic_lr_scale: f64,
    pub epochs: usize,
    pub chains: usize,
    /// Keep chain states across epochs (persistent estimator) instead of
    /// re-initializing and re-burning every epoch.
    pub persistent: bool,
    pub sampler: SamplerConfig,
    pub init: InitSpec,
    pub seed: u64,
    pub l2_weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            lr_decay: 1.0,
            quartic_lr_scale: 0.1,
            epochs: 200,
            chains: 4,
            persistent: true,
            sampler: SamplerConfig {
                sweeps_burn_in: 2_000,
                sweeps_between_samples: 10,
                n_samples: 500,
                ..SamplerConfig::default()
            },
            init: InitSpec::default(),
            seed: 0,
            l2_weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidConfig("lr_decay must lie in (0, 1]".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::InvalidConfig("chains must be >= 1".into()));
        }
        if self.l2_weight_decay < 0.0 {
            return Err(Error::InvalidConfig("l2_weight_decay must be >= 0".into()));
        }
        if self.init.quartic_init < LAMBDA_MIN {
            return Err(Error::InvalidConfig(format!(
                "quartic_init must be >= {LAMBDA_MIN}"
            )));
        }
        self.sampler.validate()
    }
}

/// Per-epoch diagnostics: max absolute data-vs-model moment gap per family
/// and the mean Metropolis acceptance rate.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub residual_pair: f64,
    pub residual_first: f64,
    pub residual_second: f64,
    pub residual_fourth: f64,
    pub acceptance: f64,
}

impl EpochStats {
    pub fn max_residual(&self) -> f64 {
        self.residual_pair
            .max(self.residual_first)
            .max(self.residual_second)
            .max(self.residual_fourth)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

/// Exact empirical averages of the sufficient statistics over a slice of
/// configurations.
pub fn data_moments(slice: &[FieldConfig]) -> Result<MomentAccumulator> {
    let first = slice.first().ok_or(Error::EmptyInput("training slice"))?;
    let mut acc = MomentAccumulator::new(first.len());
    for phi in slice {
        acc.push(phi)?;
    }
    Ok(acc)
}

/// Gradient of `KL(q || p)` with respect to every coupling family, written in
/// terms of data (`q`) and model (`p`) expectations:
///
/// ```text
/// dKL/dw_ij = -(<phi_i phi_j>_q - <phi_i phi_j>_p)
/// dKL/da_i  = -(<phi_i>_q       - <phi_i>_p)
/// dKL/dmu_i  = +(<phi_i^2>_q    - <phi_i^2>_p)
/// dKL/dlam_i = +(<phi_i^4>_q    - <phi_i^4>_p)
/// ```
///
/// Descending this gradient matches model moments to data moments; the
/// gradient vanishes identically when they coincide.
pub fn kl_gradient(data: &MomentAccumulator, model: &MomentAccumulator) -> Result<CouplingGrad> {
    if data.volume() != model.volume() {
        return Err(Error::DimensionMismatch {
            expected: data.volume(),
            got: model.volume(),
        });
    }
    let q = data.means()?;
    let p = model.means()?;
    Ok(kl_gradient_from_means(&q, &p))
}

/// Same gradient from precomputed means (used with quadrature moments).
pub fn kl_gradient_from_means(q: &Moments, p: &Moments) -> CouplingGrad {
    let diff = |a: &[f64], b: &[f64], sign: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| sign * (x - y)).collect()
    };
    CouplingGrad {
        weights: diff(&q.mean_pair, &p.mean_pair, -1.0),
        bias: diff(&q.mean_phi, &p.mean_phi, -1.0),
        mass_sq: diff(&q.mean_sq, &p.mean_sq, 1.0),
        quartic: diff(&q.mean_quart, &p.mean_quart, 1.0),
    }
}

/// Initial couplings for a volume, drawn from the init spec.
pub fn init_couplings(v: usize, init: &InitSpec, seed: u64) -> Result<CouplingSet> {
    let mut rng = derive_rng(seed, &[0x1217]);
    let weights: Vec<f64> = (0..crate::model::n_pairs(v))
        .map(|_| {
            if init.w_init_std > 0.0 {
                init.w_init_std * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            }
        })
        .collect();
    CouplingSet::new(
        v,
        weights,
        vec![init.mass_sq_init; v],
        vec![init.quartic_init; v],
        vec![init.bias_init; v],
    )
}

/// Learns couplings by stochastic gradient descent on the KL divergence.
///
/// Each epoch estimates model moments from `cfg.chains` chains (run in
/// parallel, merged in chain order so results are independent of thread
/// count), applies one descent step with the per-family learning-rate scheme
/// and re-projects the quartic couplings onto the positivity bound.
pub fn train(data: &[FieldConfig], cfg: &TrainConfig) -> Result<(CouplingSet, TrainHistory)> {
    train_with_stream_keys(data, cfg, None)
}

/// [`train`] with explicit per-site RNG stream keys, so a permuted panel can
/// reuse the original site streams (site relabeling then relabels the learned
/// couplings exactly).
pub fn train_with_stream_keys(
    data: &[FieldConfig],
    cfg: &TrainConfig,
    stream_keys: Option<&[u64]>,
) -> Result<(CouplingSet, TrainHistory)> {
    cfg.validate()?;
    let data_acc = data_moments(data)?;
    let v = data_acc.volume();
    for phi in data {
        if phi.len() != v {
            return Err(Error::DimensionMismatch { expected: v, got: phi.len() });
        }
    }
    let data_m = data_acc.means()?;

    let mut theta = init_couplings(v, &cfg.init, cfg.seed)?;
    let make_chain = |chain_id: u64, epoch: u64| -> Result<TrainerChain> {
        // Start chains at data vectors: they already sit in the bulk of the
        // target's support.
        let init = data[(chain_id as usize + epoch as usize) % data.len()].clone();
        let seed = derive_seed(cfg.seed, &[0xC4A1, epoch, chain_id]);
        Ok(TrainerChain {
            state: ChainState::with_clamp_and_keys(
                init,
                &vec![false; v],
                seed,
                cfg.sampler.proposal_width,
                stream_keys,
            )?,
            burned: false,
        })
    };
    let mut chains: Vec<TrainerChain> =
        (0..cfg.chains as u64).map(|c| make_chain(c, 0)).collect::<Result<_>>()?;

    let mut history = TrainHistory::default();
    let mut lr = cfg.learning_rate;
    for epoch in 0..cfg.epochs {
        if !cfg.persistent && epoch > 0 {
            chains = (0..cfg.chains as u64)
                .map(|c| make_chain(c, epoch as u64))
                .collect::<Result<_>>()?;
        }

        let theta_ref = &theta;
        let sampler = &cfg.sampler;
        let per_chain: Vec<Result<(MomentAccumulator, f64)>> = chains
            .par_iter_mut()
            .map(|chain| {
                if !chain.burned {
                    burn_in(theta_ref, &mut chain.state, sampler)?;
                    chain.burned = true;
                }
                let (acc, stats) = record_moments(
                    theta_ref,
                    &mut chain.state,
                    sampler.sweeps_between_samples,
                    sampler.n_samples,
                )?;
                Ok((acc, stats.rate()))
            })
            .collect();

        let mut model_acc = MomentAccumulator::new(v);
        let mut acceptance = 0.0;
        for r in per_chain {
            let (acc, rate) = r?;
            model_acc.merge(&acc)?;
            acceptance += rate;
        }
        acceptance /= cfg.chains as f64;

        let model_m = model_acc.means()?;
        let grad = kl_gradient_from_means(&data_m, &model_m);
        if !grad.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                reason: "non-finite gradient estimate".into(),
            });
        }
        theta
            .descend(&grad, lr, cfg.quartic_lr_scale, cfg.l2_weight_decay)
            .map_err(|e| Error::TrainingDiverged { epoch, reason: e.to_string() })?;
        lr *= cfg.lr_decay;

        let gaps = data_m.max_abs_gap(&model_m)?;
        history.epochs.push(EpochStats {
            epoch,
            residual_pair: gaps.pair,
            residual_first: gaps.first,
            residual_second: gaps.second,
            residual_fourth: gaps.fourth,
            acceptance,
        });
    }
    Ok((theta, history))
}

/// Long-run model moment estimate for a fixed coupling set, as used by the
/// self-consistency checks: fresh chains, full burn-in, ordered merge.
pub fn estimate_model_moments(
    theta: &CouplingSet,
    sampler: &SamplerConfig,
    chains: usize,
    seed: u64,
) -> Result<MomentAccumulator> {
    let per_chain: Vec<Result<MomentAccumulator>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut state = ChainState::new(
                FieldConfig::zeros(theta.volume()),
                derive_seed(seed, &[0xE5717, c as u64]),
                sampler.proposal_width,
            )?;
            burn_in(theta, &mut state, sampler)?;
            let (acc, _) = record_moments(
                theta,
                &mut state,
                sampler.sweeps_between_samples,
                sampler.n_samples,
            )?;
            Ok(acc)
        })
        .collect();
    let mut total = MomentAccumulator::new(theta.volume());
    for r in per_chain {
        total.merge(&r?)?;
    }
    Ok(total)
}

struct TrainerChain {
    state: ChainState,
    burned: bool,
}
