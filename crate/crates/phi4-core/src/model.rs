//! Quartic scalar-field energy model on a complete graph.
//!
//! The energy (action) of a field configuration `phi` under couplings `theta` is
//!
//! ```text
//! S = -sum_{i<j} w_ij phi_i phi_j + sum_i mu_i phi_i^2 + sum_i lambda_i phi_i^4 - sum_i a_i phi_i
//! ```
//!
//! with the pair sum running once over unordered pairs. The Boltzmann weight
//! `exp(-S)/Z` is normalizable as long as every quartic coupling stays strictly
//! positive, which [`CouplingSet`] enforces via [`LAMBDA_MIN`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound kept on every quartic coupling so the Boltzmann weight stays
/// normalizable. Projected after every training update.
pub const LAMBDA_MIN: f64 = 1e-4;

/// Number of stored unordered pairs for volume `v`.
pub fn n_pairs(v: usize) -> usize {
    v * (v - 1) / 2
}

/// Flat index of the unordered pair `{i, j}` (`i != j`) in upper-triangular
/// row-major order.
pub fn pair_index(v: usize, i: usize, j: usize) -> usize {
    debug_assert!(i != j && i < v && j < v);
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    i * v - i * (i + 1) / 2 + (j - i - 1)
}

/// All learnable parameters of the model over a `V`-site complete graph.
///
/// Weights are stored upper-triangular row-major with no diagonal; `mass_sq`,
/// `quartic` and `bias` are per-site vectors. Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSet {
    volume: usize,
    weights: Vec<f64>,
    mass_sq: Vec<f64>,
    quartic: Vec<f64>,
    bias: Vec<f64>,
}

impl CouplingSet {
    /// Builds a coupling set, validating shapes, finiteness and the quartic
    /// positivity bound.
    pub fn new(
        volume: usize,
        weights: Vec<f64>,
        mass_sq: Vec<f64>,
        quartic: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if volume == 0 {
            return Err(Error::InvalidCoupling("volume must be positive".into()));
        }
        if weights.len() != n_pairs(volume) {
            return Err(Error::DimensionMismatch {
                expected: n_pairs(volume),
                got: weights.len(),
            });
        }
        for (name, vec) in [("mass_sq", &mass_sq), ("quartic", &quartic), ("bias", &bias)] {
            if vec.len() != volume {
                return Err(Error::InvalidCoupling(format!(
                    "{name} has length {}, expected {volume}",
                    vec.len()
                )));
            }
        }
        let all = weights
            .iter()
            .chain(&mass_sq)
            .chain(&quartic)
            .chain(&bias);
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "coupling set" });
        }
        if quartic.iter().any(|&l| l < LAMBDA_MIN) {
            return Err(Error::InvalidCoupling(format!(
                "every quartic coupling must be >= {LAMBDA_MIN}"
            )));
        }
        Ok(Self { volume, weights, mass_sq, quartic, bias })
    }

    /// Uniform couplings across sites with all pair weights equal.
    pub fn uniform(volume: usize, w: f64, mu: f64, lambda: f64, a: f64) -> Result<Self> {
        Self::new(
            volume,
            vec![w; n_pairs(volume)],
            vec![mu; volume],
            vec![lambda; volume],
            vec![a; volume],
        )
    }

    pub fn volume(&self) -> usize {
        self.volume
    }

    pub fn n_pairs(&self) -> usize {
        n_pairs(self.volume)
    }

    /// Pair weight `w_ij` for any `i != j`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[pair_index(self.volume, i, j)]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass_sq(&self) -> &[f64] {
        &self.mass_sq
    }

    pub fn quartic(&self) -> &[f64] {
        &self.quartic
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// The action `S(theta, phi)`.
    pub fn action(&self, phi: &FieldConfig) -> Result<f64> {
        self.check_dim(phi)?;
        let x = phi.values();
        let mut pair = 0.0;
        for i in 0..self.volume {
            for j in (i + 1)..self.volume {
                pair += self.weights[pair_index(self.volume, i, j)] * x[i] * x[j];
            }
        }
        let mut local = 0.0;
        for i in 0..self.volume {
            let xi = x[i];
            let xi2 = xi * xi;
            local += self.mass_sq[i] * xi2 + self.quartic[i] * xi2 * xi2 - self.bias[i] * xi;
        }
        Ok(-pair + local)
    }

    /// Change in action when `phi[site]` is replaced by `new_value`, using
    /// only the O(V) terms that contain the site.
    pub fn action_delta(&self, phi: &FieldConfig, site: usize, new_value: f64) -> Result<f64> {
        self.check_dim(phi)?;
        if site >= self.volume {
            return Err(Error::SiteOutOfRange { index: site, volume: self.volume });
        }
        if !new_value.is_finite() {
            return Err(Error::NonFinite { context: "proposed field value" });
        }
        let x = phi.values();
        let old = x[site];
        let mut neighbor = 0.0;
        for j in 0..self.volume {
            if j != site {
                neighbor += self.weights[pair_index(self.volume, site, j)] * x[j];
            }
        }
        let d1 = new_value - old;
        let old2 = old * old;
        let new2 = new_value * new_value;
        Ok(-neighbor * d1
            + self.mass_sq[site] * (new2 - old2)
            + self.quartic[site] * (new2 * new2 - old2 * old2)
            - self.bias[site] * d1)
    }

    /// Per-parameter derivatives of the action at `phi`:
    /// `dS/dw_ij = -phi_i phi_j`, `dS/dmu_i = phi_i^2`,
    /// `dS/dlambda_i = phi_i^4`, `dS/da_i = -phi_i`.
    pub fn grad_action(&self, phi: &FieldConfig) -> Result<CouplingGrad> {
        self.check_dim(phi)?;
        let x = phi.values();
        let mut gw = vec![0.0; self.n_pairs()];
        for i in 0..self.volume {
            for j in (i + 1)..self.volume {
                gw[pair_index(self.volume, i, j)] = -x[i] * x[j];
            }
        }
        let mut gmu = vec![0.0; self.volume];
        let mut glam = vec![0.0; self.volume];
        let mut ga = vec![0.0; self.volume];
        for i in 0..self.volume {
            let x2 = x[i] * x[i];
            gmu[i] = x2;
            glam[i] = x2 * x2;
            ga[i] = -x[i];
        }
        Ok(CouplingGrad { weights: gw, mass_sq: gmu, quartic: glam, bias: ga })
    }

    /// Applies one gradient-descent step in place and re-projects the quartic
    /// couplings onto `[LAMBDA_MIN, inf)`. Used by the trainer between
    /// sampling phases; the updated set is re-validated for finiteness.
    pub(crate) fn descend(
        &mut self,
        grad: &CouplingGrad,
        lr: f64,
        quartic_lr_scale: f64,
        l2_weight_decay: f64,
    ) -> Result<()> {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            *w -= lr * (g + l2_weight_decay * *w);
        }
        for (m, g) in self.mass_sq.iter_mut().zip(&grad.mass_sq) {
            *m -= lr * g;
        }
        for (l, g) in self.quartic.iter_mut().zip(&grad.quartic) {
            *l = (*l - lr * quartic_lr_scale * g).max(LAMBDA_MIN);
        }
        for (a, g) in self.bias.iter_mut().zip(&grad.bias) {
            *a -= lr * g;
        }
        let all = self
            .weights
            .iter()
            .chain(&self.mass_sq)
            .chain(&self.quartic)
            .chain(&self.bias);
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "coupling update" });
        }
        Ok(())
    }

    /// Relabels sites by `perm`, where `perm[new] = old`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.volume {
            return Err(Error::DimensionMismatch { expected: self.volume, got: perm.len() });
        }
        let v = self.volume;
        let mut weights = vec![0.0; self.n_pairs()];
        for i in 0..v {
            for j in (i + 1)..v {
                weights[pair_index(v, i, j)] = self.weight(perm[i], perm[j]);
            }
        }
        Self::new(
            v,
            weights,
            perm.iter().map(|&p| self.mass_sq[p]).collect(),
            perm.iter().map(|&p| self.quartic[p]).collect(),
            perm.iter().map(|&p| self.bias[p]).collect(),
        )
    }

    fn check_dim(&self, phi: &FieldConfig) -> Result<()> {
        if phi.len() != self.volume {
            return Err(Error::DimensionMismatch { expected: self.volume, got: phi.len() });
        }
        Ok(())
    }
}

/// One configuration of the fields: a V-vector of real values (one day's
/// return vector, or one MCMC state). Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    values: Vec<f64>,
}

impl FieldConfig {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("field configuration"));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "field configuration" });
        }
        Ok(Self { values })
    }

    pub fn zeros(v: usize) -> Self {
        Self { values: vec![0.0; v] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn set(&mut self, site: usize, value: f64) {
        self.values[site] = value;
    }

    /// Sign flip of every field.
    pub fn negated(&self) -> Self {
        Self { values: self.values.iter().map(|x| -x).collect() }
    }
}

impl std::ops::Index<usize> for FieldConfig {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Parameter-shaped bundle of derivatives (same layout as [`CouplingSet`]).
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingGrad {
    pub weights: Vec<f64>,
    pub mass_sq: Vec<f64>,
    pub quartic: Vec<f64>,
    pub bias: Vec<f64>,
}

impl CouplingGrad {
    pub fn zeros(v: usize) -> Self {
        Self {
            weights: vec![0.0; n_pairs(v)],
            mass_sq: vec![0.0; v],
            quartic: vec![0.0; v],
            bias: vec![0.0; v],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.mass_sq)
            .chain(&self.quartic)
            .chain(&self.bias)
            .all(|x| x.is_finite())
    }

    /// Largest absolute entry over all families.
    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.mass_sq)
            .chain(&self.quartic)
            .chain(&self.bias)
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// Running sums of the sufficient statistics `phi_i`, `phi_i phi_j`,
/// `phi_i^2`, `phi_i^4` over a stream of configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    volume: usize,
    n: u64,
    sum_phi: Vec<f64>,
    sum_pair: Vec<f64>,
    sum_sq: Vec<f64>,
    sum_quart: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(volume: usize) -> Self {
        Self {
            volume,
            n: 0,
            sum_phi: vec![0.0; volume],
            sum_pair: vec![0.0; n_pairs(volume)],
            sum_sq: vec![0.0; volume],
            sum_quart: vec![0.0; volume],
        }
    }

    pub fn volume(&self) -> usize {
        self.volume
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, phi: &FieldConfig) -> Result<()> {
        if phi.len() != self.volume {
            return Err(Error::DimensionMismatch { expected: self.volume, got: phi.len() });
        }
        let x = phi.values();
        for i in 0..self.volume {
            let xi = x[i];
            let xi2 = xi * xi;
            self.sum_phi[i] += xi;
            self.sum_sq[i] += xi2;
            self.sum_quart[i] += xi2 * xi2;
        }
        let mut k = 0;
        for i in 0..self.volume {
            for j in (i + 1)..self.volume {
                self.sum_pair[k] += x[i] * x[j];
                k += 1;
            }
        }
        self.n += 1;
        Ok(())
    }

    /// Merges another accumulator over the same volume.
    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if other.volume != self.volume {
            return Err(Error::DimensionMismatch { expected: self.volume, got: other.volume });
        }
        self.n += other.n;
        for (s, o) in self.sum_phi.iter_mut().zip(&other.sum_phi) {
            *s += o;
        }
        for (s, o) in self.sum_pair.iter_mut().zip(&other.sum_pair) {
            *s += o;
        }
        for (s, o) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *s += o;
        }
        for (s, o) in self.sum_quart.iter_mut().zip(&other.sum_quart) {
            *s += o;
        }
        Ok(())
    }

    /// Sample means of all tracked statistics. Defined only for `n >= 1`.
    pub fn means(&self) -> Result<Moments> {
        if self.n == 0 {
            return Err(Error::EmptyInput("moment accumulator"));
        }
        let inv = 1.0 / self.n as f64;
        Ok(Moments {
            volume: self.volume,
            mean_phi: self.sum_phi.iter().map(|s| s * inv).collect(),
            mean_pair: self.sum_pair.iter().map(|s| s * inv).collect(),
            mean_sq: self.sum_sq.iter().map(|s| s * inv).collect(),
            mean_quart: self.sum_quart.iter().map(|s| s * inv).collect(),
        })
    }
}

/// Expectations of the sufficient statistics, either empirical (from an
/// accumulator) or exact (from quadrature).
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub volume: usize,
    pub mean_phi: Vec<f64>,
    pub mean_pair: Vec<f64>,
    pub mean_sq: Vec<f64>,
    pub mean_quart: Vec<f64>,
}

impl Moments {
    /// Largest absolute gap per family: (weights, bias, mass_sq, quartic)
    /// correspond to (pair, first, second, fourth) moments.
    pub fn max_abs_gap(&self, other: &Moments) -> Result<FamilyGaps> {
        if other.volume != self.volume {
            return Err(Error::DimensionMismatch { expected: self.volume, got: other.volume });
        }
        let gap = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
        };
        Ok(FamilyGaps {
            pair: gap(&self.mean_pair, &other.mean_pair),
            first: gap(&self.mean_phi, &other.mean_phi),
            second: gap(&self.mean_sq, &other.mean_sq),
            fourth: gap(&self.mean_quart, &other.mean_quart),
        })
    }
}

/// Per-family maximum absolute moment gaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyGaps {
    pub pair: f64,
    pub first: f64,
    pub second: f64,
    pub fourth: f64,
}

impl FamilyGaps {
    pub fn max(&self) -> f64 {
        self.pair.max(self.first).max(self.second).max(self.fourth)
    }
}
