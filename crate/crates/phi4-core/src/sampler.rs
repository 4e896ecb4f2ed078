//! Single-site random-walk Metropolis sampling of the Boltzmann weight,
//! unconditional or with clamped (observed) fields.
//!
//! Each site owns an independent ChaCha stream derived from the chain seed,
//! and a sweep visits unclamped sites in ascending stream-key order (index
//! order by default). Per-site streams keep the draw sequence of a site
//! independent of what happens at other sites, so relabeling the sites of a
//! chain (data, keys and clamps together) relabels the sample stream exactly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{CouplingSet, FieldConfig, MomentAccumulator};
use crate::rng::derive_rng;

/// Metropolis schedule settings.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    /// Std of the Gaussian single-site proposal; must be positive.
    pub proposal_width: f64,
    pub sweeps_burn_in: usize,
    /// Sweeps between recorded samples (thinning).
    pub sweeps_between_samples: usize,
    pub n_samples: usize,
    /// Target acceptance rate for width adaptation during burn-in;
    /// `None` disables adaptation. Recording never adapts.
    pub adapt_acceptance: Option<f64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            proposal_width: 1.0,
            sweeps_burn_in: 2_000,
            sweeps_between_samples: 10,
            n_samples: 5_000,
            adapt_acceptance: Some(0.44),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.proposal_width > 0.0) || !self.proposal_width.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "proposal_width must be positive, got {}",
                self.proposal_width
            )));
        }
        if let Some(t) = self.adapt_acceptance {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "adapt_acceptance target must lie in (0,1), got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Counters returned by one sweep.
#[derive(Debug, Clone, Copy, Default)]
pub struct SweepStats {
    pub proposed: usize,
    pub accepted: usize,
}

impl SweepStats {
    fn absorb(&mut self, other: SweepStats) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// One MCMC chain: current fields, clamp mask, per-site RNG streams and the
/// live proposal width. Confined to one thread; clamped coordinates are set
/// at construction and never touched afterwards.
#[derive(Debug, Clone)]
pub struct ChainState {
    phi: FieldConfig,
    clamp: Vec<bool>,
    site_rngs: Vec<ChaCha8Rng>,
    visit_order: Vec<usize>,
    step_count: u64,
    proposal_width: f64,
}

impl ChainState {
    /// Chain over `initial` with nothing clamped, site streams keyed by index.
    pub fn new(initial: FieldConfig, seed: u64, width: f64) -> Result<Self> {
        let v = initial.len();
        Self::with_clamp_and_keys(initial, &vec![false; v], seed, width, None)
    }

    /// Chain with `clamp[i]` holding site `i` fixed at its initial value.
    pub fn clamped(
        initial: FieldConfig,
        clamp: &[bool],
        seed: u64,
        width: f64,
    ) -> Result<Self> {
        Self::with_clamp_and_keys(initial, clamp, seed, width, None)
    }

    /// Full constructor. `stream_keys[i]` selects site `i`'s RNG stream and
    /// the sweep visits unclamped sites in ascending key order; passing a
    /// permuted key set relabels the chain's randomness with the sites.
    pub fn with_clamp_and_keys(
        initial: FieldConfig,
        clamp: &[bool],
        seed: u64,
        width: f64,
        stream_keys: Option<&[u64]>,
    ) -> Result<Self> {
        let v = initial.len();
        if clamp.len() != v {
            return Err(Error::DimensionMismatch { expected: v, got: clamp.len() });
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "proposal width must be positive, got {width}"
            )));
        }
        let keys: Vec<u64> = match stream_keys {
            Some(k) => {
                if k.len() != v {
                    return Err(Error::DimensionMismatch { expected: v, got: k.len() });
                }
                k.to_vec()
            }
            None => (0..v as u64).collect(),
        };
        let site_rngs: Vec<ChaCha8Rng> =
            keys.iter().map(|&k| derive_rng(seed, &[0x517E, k])).collect();
        let mut visit_order: Vec<usize> = (0..v).collect();
        visit_order.sort_by_key(|&i| keys[i]);
        Ok(Self {
            phi: initial,
            clamp: clamp.to_vec(),
            site_rngs,
            visit_order,
            step_count: 0,
            proposal_width: width,
        })
    }

    pub fn phi(&self) -> &FieldConfig {
        &self.phi
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn proposal_width(&self) -> f64 {
        self.proposal_width
    }

    pub fn n_free(&self) -> usize {
        self.clamp.iter().filter(|&&c| !c).count()
    }
}

/// One Metropolis sweep: every unclamped site is visited once in fixed order;
/// a Gaussian move is proposed and accepted with probability
/// `min(1, exp(-delta_S))`. Detailed balance holds per site for the
/// conditional target, so the composition leaves it invariant.
pub fn metropolis_sweep(theta: &CouplingSet, state: &mut ChainState) -> Result<SweepStats> {
    if theta.volume() != state.phi.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.volume(),
            got: state.phi.len(),
        });
    }
    let mut stats = SweepStats::default();
    let width = state.proposal_width;
    for &site in &state.visit_order {
        if state.clamp[site] {
            continue;
        }
        let rng = &mut state.site_rngs[site];
        let step: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        let proposal = state.phi[site] + width * step;
        let delta = theta.action_delta(&state.phi, site, proposal)?;
        stats.proposed += 1;
        if delta <= 0.0 || u < (-delta).exp() {
            state.phi.set(site, proposal);
            stats.accepted += 1;
        }
    }
    state.step_count += 1;
    Ok(stats)
}

/// Sweeps between width adjustments during adaptive burn-in.
const ADAPT_INTERVAL: usize = 50;
/// Bounds keeping the adapted width positive and sane.
const WIDTH_BOUNDS: (f64, f64) = (1e-9, 1e6);

/// Runs the burn-in phase, optionally adapting the proposal width toward the
/// target acceptance rate. Adaptation happens only here, never while
/// recording, so recorded samples come from a fixed kernel.
pub fn burn_in(theta: &CouplingSet, state: &mut ChainState, cfg: &SamplerConfig) -> Result<()> {
    let mut window = SweepStats::default();
    for sweep in 0..cfg.sweeps_burn_in {
        window.absorb(metropolis_sweep(theta, state)?);
        if let Some(target) = cfg.adapt_acceptance {
            if (sweep + 1) % ADAPT_INTERVAL == 0 && window.proposed > 0 {
                let factor = (window.rate() - target).exp();
                state.proposal_width =
                    (state.proposal_width * factor).clamp(WIDTH_BOUNDS.0, WIDTH_BOUNDS.1);
                window = SweepStats::default();
            }
        }
    }
    Ok(())
}

/// Records `n` samples separated by `thin` sweeps, pushing each into `sink`
/// and returning aggregate acceptance stats.
pub fn record(
    theta: &CouplingSet,
    state: &mut ChainState,
    thin: usize,
    n: usize,
    mut sink: impl FnMut(&FieldConfig),
) -> Result<SweepStats> {
    let mut stats = SweepStats::default();
    for _ in 0..n {
        for _ in 0..thin.max(1) {
            stats.absorb(metropolis_sweep(theta, state)?);
        }
        sink(&state.phi);
    }
    Ok(stats)
}

/// Observed-value clamp: `mask[i]` together with `values[i]`.
#[derive(Debug, Clone)]
pub struct Clamp {
    pub mask: Vec<bool>,
    pub values: Vec<f64>,
}

impl Clamp {
    pub fn none(v: usize) -> Self {
        Self { mask: vec![false; v], values: vec![0.0; v] }
    }

    /// Clamp from `Some(value)` entries, leaving `None` sites free.
    pub fn from_options(spec: &[Option<f64>]) -> Self {
        Self {
            mask: spec.iter().map(|s| s.is_some()).collect(),
            values: spec.iter().map(|s| s.unwrap_or(0.0)).collect(),
        }
    }

    fn validate(&self, v: usize) -> Result<()> {
        if self.mask.len() != v || self.values.len() != v {
            return Err(Error::DimensionMismatch { expected: v, got: self.mask.len() });
        }
        for (m, x) in self.mask.iter().zip(&self.values) {
            if *m && !x.is_finite() {
                return Err(Error::NonFinite { context: "clamp values" });
            }
        }
        if self.mask.iter().all(|&m| m) {
            return Err(Error::AllSitesClamped);
        }
        Ok(())
    }
}

/// Burn-in then record: returns `cfg.n_samples` configurations from the
/// (conditional) Boltzmann distribution. Clamped coordinates equal their
/// observed values in every returned sample.
pub fn sample(
    theta: &CouplingSet,
    cfg: &SamplerConfig,
    initial: &FieldConfig,
    clamp: Option<&Clamp>,
    seed: u64,
) -> Result<Vec<FieldConfig>> {
    cfg.validate()?;
    let v = theta.volume();
    if initial.len() != v {
        return Err(Error::DimensionMismatch { expected: v, got: initial.len() });
    }
    let owned_none;
    let clamp = match clamp {
        Some(c) => c,
        None => {
            owned_none = Clamp::none(v);
            &owned_none
        }
    };
    clamp.validate(v)?;
    let mut start = initial.values().to_vec();
    for i in 0..v {
        if clamp.mask[i] {
            start[i] = clamp.values[i];
        }
    }
    let mut state = ChainState::clamped(
        FieldConfig::new(start)?,
        &clamp.mask,
        seed,
        cfg.proposal_width,
    )?;
    burn_in(theta, &mut state, cfg)?;
    let mut out = Vec::with_capacity(cfg.n_samples);
    record(theta, &mut state, cfg.sweeps_between_samples, cfg.n_samples, |phi| {
        out.push(phi.clone())
    })?;
    Ok(out)
}

/// Posterior summary of the free coordinates under a clamp.
#[derive(Debug, Clone)]
pub struct ConditionalSummary {
    /// Indices of the free (sampled) sites.
    pub free_sites: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub q05: Vec<f64>,
    pub q50: Vec<f64>,
    pub q95: Vec<f64>,
}

/// Samples the conditional distribution and summarizes the free coordinates:
/// posterior mean (the point forecast), std and 5/50/95% quantiles.
pub fn conditional_mean(
    theta: &CouplingSet,
    cfg: &SamplerConfig,
    clamp: &Clamp,
    seed: u64,
) -> Result<ConditionalSummary> {
    let v = theta.volume();
    let initial = FieldConfig::zeros(v);
    let samples = sample(theta, cfg, &initial, Some(clamp), seed)?;
    let free_sites: Vec<usize> = (0..v).filter(|&i| !clamp.mask[i]).collect();
    let n = samples.len();
    if n == 0 {
        return Err(Error::EmptyInput("no samples recorded"));
    }
    let mut mean = Vec::with_capacity(free_sites.len());
    let mut std = Vec::with_capacity(free_sites.len());
    let mut q05 = Vec::with_capacity(free_sites.len());
    let mut q50 = Vec::with_capacity(free_sites.len());
    let mut q95 = Vec::with_capacity(free_sites.len());
    for &site in &free_sites {
        let mut xs: Vec<f64> = samples.iter().map(|s| s[site]).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
        xs.sort_by(|a, b| a.total_cmp(b));
        mean.push(m);
        std.push(var.sqrt());
        q05.push(quantile_sorted(&xs, 0.05));
        q50.push(quantile_sorted(&xs, 0.50));
        q95.push(quantile_sorted(&xs, 0.95));
    }
    Ok(ConditionalSummary { free_sites, mean, std, q05, q50, q95 })
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    debug_assert!(!xs.is_empty() && (0.0..=1.0).contains(&q));
    if xs.len() == 1 {
        return xs[0];
    }
    let pos = q * (xs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    xs[lo] + (xs[hi] - xs[lo]) * frac
}

/// Accumulates moments over recorded samples from an existing chain.
pub fn record_moments(
    theta: &CouplingSet,
    state: &mut ChainState,
    thin: usize,
    n: usize,
) -> Result<(MomentAccumulator, SweepStats)> {
    let mut acc = MomentAccumulator::new(theta.volume());
    let mut err = None;
    let stats = record(theta, state, thin, n, |phi| {
        if err.is_none() {
            if let Err(e) = acc.push(phi) {
                err = Some(e);
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok((acc, stats)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{quadrature_moments, QuadratureSpec};

    fn small_cfg(n: usize) -> SamplerConfig {
        SamplerConfig {
            proposal_width: 1.0,
            sweeps_burn_in: 500,
            sweeps_between_samples: 3,
            n_samples: n,
            adapt_acceptance: Some(0.44),
        }
    }

    #[test]
    fn all_clamped_sweep_leaves_state_unchanged() {
        let theta = CouplingSet::uniform(3, 0.2, 0.5, 0.5, 0.1).unwrap();
        let phi = FieldConfig::new(vec![0.1, -0.2, 0.3]).unwrap();
        let mut state =
            ChainState::clamped(phi.clone(), &[true, true, true], 9, 1.0).unwrap();
        let stats = metropolis_sweep(&theta, &mut state).unwrap();
        assert_eq!(stats.proposed, 0);
        assert_eq!(state.phi().values(), phi.values());
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn sample_rejects_full_clamp() {
        let theta = CouplingSet::uniform(2, 0.0, 0.5, 0.5, 0.0).unwrap();
        let clamp = Clamp { mask: vec![true, true], values: vec![0.1, 0.2] };
        assert!(matches!(
            sample(&theta, &small_cfg(10), &FieldConfig::zeros(2), Some(&clamp), 1),
            Err(Error::AllSitesClamped)
        ));
    }

    #[test]
    fn tiny_width_accepts_nearly_everything() {
        let theta = CouplingSet::uniform(2, 0.1, 0.5, 0.5, 0.0).unwrap();
        let mut state = ChainState::new(FieldConfig::zeros(2), 3, 1e-9).unwrap();
        let mut stats = SweepStats::default();
        for _ in 0..200 {
            stats.absorb(metropolis_sweep(&theta, &mut state).unwrap());
        }
        assert!(stats.rate() > 0.999, "rate {}", stats.rate());
    }

    #[test]
    fn reproducible_sample_stream() {
        let theta = CouplingSet::uniform(3, 0.15, 0.4, 0.4, 0.05).unwrap();
        let cfg = small_cfg(50);
        let a = sample(&theta, &cfg, &FieldConfig::zeros(3), None, 42).unwrap();
        let b = sample(&theta, &cfg, &FieldConfig::zeros(3), None, 42).unwrap();
        assert_eq!(a, b);
        let c = sample(&theta, &cfg, &FieldConfig::zeros(3), None, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn clamped_coordinates_are_bit_identical() {
        let theta = CouplingSet::uniform(3, 0.3, 0.5, 0.5, 0.0).unwrap();
        let clamp = Clamp {
            mask: vec![true, false, true],
            values: vec![0.123456789, 0.0, -0.987654321],
        };
        let samples =
            sample(&theta, &small_cfg(200), &FieldConfig::zeros(3), Some(&clamp), 7).unwrap();
        for s in &samples {
            assert_eq!(s[0], 0.123456789);
            assert_eq!(s[2], -0.987654321);
        }
    }

    #[test]
    fn symmetric_model_has_symmetric_marginals() {
        let theta = CouplingSet::uniform(2, 0.0, 0.5, 0.5, 0.0).unwrap();
        let cfg = SamplerConfig {
            n_samples: 4000,
            sweeps_between_samples: 5,
            ..small_cfg(0)
        };
        let samples = sample(&theta, &cfg, &FieldConfig::zeros(2), None, 11).unwrap();
        let n = samples.len() as f64;
        for site in 0..2 {
            let mean = samples.iter().map(|s| s[site]).sum::<f64>() / n;
            let var = samples.iter().map(|s| s[site] * s[site]).sum::<f64>() / n;
            let se = (var / n).sqrt();
            assert!(mean.abs() < 3.0 * se, "mean {mean} vs se {se}");
        }
    }

    /// Test-side probability oracle: rectangle-rule mass of the same-sign
    /// quadrants of the two-site density, independent of the sampler path.
    fn same_sign_probability(theta: &CouplingSet, half_width: f64, n: usize) -> f64 {
        let h = 2.0 * half_width / n as f64;
        let mut total = 0.0;
        let mut same = 0.0;
        for i in 0..n {
            let x = -half_width + h * (i as f64 + 0.5);
            for j in 0..n {
                let y = -half_width + h * (j as f64 + 0.5);
                let phi = FieldConfig::new(vec![x, y]).unwrap();
                let p = (-theta.action(&phi).unwrap()).exp();
                total += p;
                if (x >= 0.0) == (y >= 0.0) {
                    same += p;
                }
            }
        }
        same / total
    }

    #[test]
    fn strong_positive_coupling_aligns_signs() {
        let theta = CouplingSet::uniform(2, 2.0, 0.5, 0.5, 0.0).unwrap();
        let cfg = SamplerConfig {
            n_samples: 4000,
            sweeps_between_samples: 5,
            ..small_cfg(0)
        };
        let samples = sample(&theta, &cfg, &FieldConfig::zeros(2), None, 5).unwrap();
        let same = samples
            .iter()
            .filter(|s| (s[0] >= 0.0) == (s[1] >= 0.0))
            .count() as f64
            / samples.len() as f64;
        let oracle = same_sign_probability(&theta, 8.0, 600);
        let se = (oracle * (1.0 - oracle) / samples.len() as f64).sqrt();
        assert!(same > 0.5, "same-sign fraction {same}");
        assert!(
            (same - oracle).abs() < 4.0 * se + 0.01,
            "empirical {same} vs oracle {oracle}"
        );
    }

    #[test]
    fn single_site_second_moment_matches_quadrature() {
        let theta = CouplingSet::new(1, vec![], vec![1.0], vec![1.0], vec![0.0]).unwrap();
        let oracle = quadrature_moments(&theta, &QuadratureSpec::with_points(401)).unwrap();
        let cfg = SamplerConfig {
            proposal_width: 1.0,
            sweeps_burn_in: 1000,
            sweeps_between_samples: 5,
            n_samples: 20_000,
            adapt_acceptance: Some(0.44),
        };
        let samples = sample(&theta, &cfg, &FieldConfig::zeros(1), None, 1234).unwrap();
        let n = samples.len() as f64;
        let m2 = samples.iter().map(|s| s[0] * s[0]).sum::<f64>() / n;
        let m4 = samples.iter().map(|s| s[0].powi(4)).sum::<f64>() / n;
        let se2 = ((m4 - m2 * m2).max(0.0) / n).sqrt();
        let gap = (m2 - oracle.moments.mean_sq[0]).abs();
        assert!(gap < 3.0 * se2.max(1e-4), "gap {gap}, se {se2}");
    }

    #[test]
    fn conditional_mean_matches_clamped_quadrature() {
        let theta = CouplingSet::new(
            3,
            vec![0.6, -0.2, 0.4],
            vec![0.5, 0.6, 0.4],
            vec![0.3, 0.3, 0.3],
            vec![0.1, 0.0, -0.1],
        )
        .unwrap();
        let clamp = Clamp::from_options(&[Some(0.8), Some(-0.5), None]);
        let oracle = crate::quadrature::conditional_quadrature_moments(
            &theta,
            &[Some(0.8), Some(-0.5), None],
            &QuadratureSpec::with_points(401),
        )
        .unwrap();
        let cfg = SamplerConfig {
            proposal_width: 1.0,
            sweeps_burn_in: 1000,
            sweeps_between_samples: 5,
            n_samples: 20_000,
            adapt_acceptance: Some(0.44),
        };
        let summary = conditional_mean(&theta, &cfg, &clamp, 77).unwrap();
        assert_eq!(summary.free_sites, vec![2]);
        let se = summary.std[0] / (cfg.n_samples as f64).sqrt();
        let gap = (summary.mean[0] - oracle.moments.mean_phi[2]).abs();
        assert!(gap < 4.0 * se.max(1e-4), "gap {gap}, se {se}");
        assert!(summary.q05[0] <= summary.q50[0] && summary.q50[0] <= summary.q95[0]);
    }

    #[test]
    fn unclamped_symmetric_conditional_mean_near_zero() {
        let theta = CouplingSet::uniform(2, 0.0, 0.5, 0.5, 0.0).unwrap();
        let clamp = Clamp::none(2);
        let cfg = SamplerConfig {
            n_samples: 5000,
            sweeps_between_samples: 2,
            ..small_cfg(0)
        };
        let summary = conditional_mean(&theta, &cfg, &clamp, 21).unwrap();
        for (m, s) in summary.mean.iter().zip(&summary.std) {
            let se = s / (cfg.n_samples as f64).sqrt();
            assert!(m.abs() < 5.0 * se, "mean {m}, se {se}");
        }
    }

    #[test]
    fn width_adapts_only_during_burn_in() {
        let theta = CouplingSet::uniform(2, 0.1, 0.5, 0.5, 0.0).unwrap();
        let cfg = SamplerConfig {
            proposal_width: 0.05,
            sweeps_burn_in: 400,
            sweeps_between_samples: 2,
            n_samples: 300,
            adapt_acceptance: Some(0.44),
        };
        let mut state = ChainState::new(FieldConfig::zeros(2), 13, cfg.proposal_width).unwrap();
        burn_in(&theta, &mut state, &cfg).unwrap();
        let adapted = state.proposal_width();
        assert_ne!(adapted, 0.05, "burn-in should have adapted the width");
        record(&theta, &mut state, cfg.sweeps_between_samples, cfg.n_samples, |_| {})
            .unwrap();
        assert_eq!(state.proposal_width(), adapted, "recording must not adapt");
    }

    #[test]
    fn quantiles_bracket_posterior_mean_in_seeded_runs() {
        let theta = CouplingSet::new(
            2,
            vec![0.3],
            vec![0.5, 0.4],
            vec![0.3, 0.3],
            vec![0.2, -0.1],
        )
        .unwrap();
        let cfg = SamplerConfig {
            proposal_width: 1.0,
            sweeps_burn_in: 200,
            sweeps_between_samples: 2,
            n_samples: 400,
            adapt_acceptance: Some(0.44),
        };
        let clamp = Clamp::from_options(&[Some(0.3), None]);
        let mut bracketed = 0;
        let runs = 100;
        for seed in 0..runs {
            let s = conditional_mean(&theta, &cfg, &clamp, 9000 + seed).unwrap();
            if s.q05[0] <= s.mean[0] && s.mean[0] <= s.q95[0] {
                bracketed += 1;
            }
        }
        assert!(bracketed >= 99, "bracketed only {bracketed}/{runs}");
    }

    #[test]
    fn quantile_interpolation() {
        let xs = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
        assert_eq!(quantile_sorted(&xs, 0.5), 2.5);
    }

    #[test]
    fn permuted_stream_keys_relabel_the_chain_exactly() {
        let theta = CouplingSet::new(
            3,
            vec![0.4, -0.3, 0.2],
            vec![0.5, 0.7, 0.3],
            vec![0.2, 0.4, 0.3],
            vec![0.1, -0.2, 0.0],
        )
        .unwrap();
        // perm[new] = old
        let perm = [2usize, 0, 1];
        let theta_p = theta.permuted(&perm).unwrap();
        let init = FieldConfig::new(vec![0.3, -0.1, 0.2]).unwrap();
        let init_p = FieldConfig::new(perm.iter().map(|&p| init[p]).collect()).unwrap();
        // Site at new position i is old site perm[i]; give it old key perm[i].
        let keys_p: Vec<u64> = perm.iter().map(|&p| p as u64).collect();

        let mut a = ChainState::new(init, 99, 0.8).unwrap();
        let mut b = ChainState::with_clamp_and_keys(
            init_p,
            &[false; 3],
            99,
            0.8,
            Some(&keys_p),
        )
        .unwrap();
        for _ in 0..200 {
            metropolis_sweep(&theta, &mut a).unwrap();
            metropolis_sweep(&theta_p, &mut b).unwrap();
        }
        for new in 0..3 {
            assert_eq!(b.phi()[new], a.phi()[perm[new]]);
        }
    }
}
