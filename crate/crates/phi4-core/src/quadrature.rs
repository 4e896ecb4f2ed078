//! Deterministic tensor-product quadrature over the Boltzmann weight
//! `exp(-S)` for small volumes.
//!
//! This is the trust anchor for the MCMC code: it computes the partition
//! function and exact model expectations for `V <= 3` free sites (optionally
//! with some sites clamped to observed values) on a Simpson grid, entirely
//! independent of the sampler. Used by tests and the `validate` command.

use crate::error::{Error, Result};
use crate::model::{pair_index, CouplingSet, Moments};

/// Largest number of free (integrated) sites the grid supports.
pub const MAX_FREE_SITES: usize = 3;

/// Grid specification for the quadrature.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    /// Points per axis; must be odd and >= 3 (Simpson rule).
    pub points_per_axis: usize,
    /// Integration half-width `L`; `None` selects it adaptively.
    pub half_width: Option<f64>,
    /// Scale hint for the adaptive start `L = 6 * max(1, scale_hint)`.
    pub scale_hint: f64,
    /// Maximum allowed ratio of boundary density to peak density.
    pub boundary_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            points_per_axis: 401,
            half_width: None,
            scale_hint: 1.0,
            boundary_tol: 1e-16,
        }
    }
}

impl QuadratureSpec {
    pub fn with_points(points_per_axis: usize) -> Self {
        Self { points_per_axis, ..Self::default() }
    }
}

/// Partition function and exact expectations of the sufficient statistics.
///
/// Clamped coordinates are reported with their deterministic values
/// (`mean = value`, `mean_sq = value^2`, ...), so the moment vectors always
/// have full length `V` and compare directly against sample moments.
#[derive(Debug, Clone)]
pub struct QuadratureResult {
    pub log_z: f64,
    pub moments: Moments,
    /// Half-width actually used (after adaptation).
    pub half_width: f64,
}

/// Exact moments of the unconditional model distribution; `V <= 3`.
pub fn quadrature_moments(theta: &CouplingSet, spec: &QuadratureSpec) -> Result<QuadratureResult> {
    conditional_quadrature_moments(theta, &vec![None; theta.volume()], spec)
}

/// Log of the partition function `Z = integral exp(-S)`; `V <= 3`.
pub fn log_partition(theta: &CouplingSet, spec: &QuadratureSpec) -> Result<f64> {
    Ok(quadrature_moments(theta, spec)?.log_z)
}

/// Exact moments of the conditional distribution with `clamp[i] = Some(v)`
/// holding site `i` fixed at `v`. At most [`MAX_FREE_SITES`] entries may be
/// `None`. `log_z` is the log normalizer of the conditional density.
pub fn conditional_quadrature_moments(
    theta: &CouplingSet,
    clamp: &[Option<f64>],
    spec: &QuadratureSpec,
) -> Result<QuadratureResult> {
    let v = theta.volume();
    if clamp.len() != v {
        return Err(Error::DimensionMismatch { expected: v, got: clamp.len() });
    }
    if clamp.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context: "clamp values" });
    }
    let free: Vec<usize> = (0..v).filter(|&i| clamp[i].is_none()).collect();
    if free.is_empty() {
        return Err(Error::AllSitesClamped);
    }
    if free.len() > MAX_FREE_SITES {
        return Err(Error::QuadratureTooLarge { max: MAX_FREE_SITES, got: free.len() });
    }
    let n = spec.points_per_axis;
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "points_per_axis must be odd and >= 3, got {n}"
        )));
    }

    let mut half_width = spec.half_width.unwrap_or(6.0 * spec.scale_hint.max(1.0));
    let fixed_l = spec.half_width.is_some();
    // Double L until the boundary carries negligible density. The scan pass
    // is cheap (no moment accumulation), so adaptation costs little.
    const MAX_DOUBLINGS: usize = 12;
    for attempt in 0.. {
        let grid = Grid::new(theta, clamp, &free, half_width, n);
        let scan = grid.scan();
        let ratio = (scan.min_action - scan.min_boundary_action).exp();
        if ratio < spec.boundary_tol {
            let mut result = grid.integrate(scan.min_action);
            fill_deterministic_moments(&mut result.moments, clamp);
            return Ok(result);
        }
        if fixed_l {
            return Err(Error::QuadratureBoundary { ratio, half_width });
        }
        if attempt >= MAX_DOUBLINGS {
            return Err(Error::QuadratureBoundary { ratio, half_width });
        }
        half_width *= 2.0;
    }
    unreachable!()
}

/// Moments involving only clamped coordinates are deterministic; write them
/// exactly instead of as ratios of integrals (which would carry rounding).
/// Mixed pairs factor into `value x free mean`.
fn fill_deterministic_moments(m: &mut Moments, clamp: &[Option<f64>]) {
    let v = m.volume;
    for i in 0..v {
        if let Some(c) = clamp[i] {
            m.mean_phi[i] = c;
            m.mean_sq[i] = c * c;
            m.mean_quart[i] = c * c * c * c;
        }
    }
    let mut k = 0;
    for i in 0..v {
        for j in (i + 1)..v {
            match (clamp[i], clamp[j]) {
                (Some(a), Some(b)) => m.mean_pair[k] = a * b,
                (Some(a), None) => m.mean_pair[k] = a * m.mean_phi[j],
                (None, Some(b)) => m.mean_pair[k] = m.mean_phi[i] * b,
                (None, None) => {}
            }
            k += 1;
        }
    }
}

struct ScanResult {
    min_action: f64,
    min_boundary_action: f64,
}

struct Grid<'a> {
    theta: &'a CouplingSet,
    free: &'a [usize],
    base: Vec<f64>,
    half_width: f64,
    n: usize,
    step: f64,
}

impl<'a> Grid<'a> {
    fn new(
        theta: &'a CouplingSet,
        clamp: &[Option<f64>],
        free: &'a [usize],
        half_width: f64,
        n: usize,
    ) -> Self {
        let base: Vec<f64> = clamp.iter().map(|c| c.unwrap_or(0.0)).collect();
        let step = 2.0 * half_width / (n - 1) as f64;
        Self { theta, free, base, half_width, n, step }
    }

    fn coord(&self, k: usize) -> f64 {
        -self.half_width + self.step * k as f64
    }

    /// Simpson weight without the h/3 prefactor (constant prefactors cancel
    /// in every moment ratio and shift log Z additively).
    fn weight_1d(&self, k: usize) -> f64 {
        if k == 0 || k == self.n - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        }
    }

    fn for_each_point(&self, mut f: impl FnMut(&[usize], &[f64], f64)) {
        let d = self.free.len();
        let mut idx = vec![0usize; d];
        let mut phi = self.base.clone();
        loop {
            for (axis, &k) in idx.iter().enumerate() {
                phi[self.free[axis]] = self.coord(k);
            }
            let s = action_on_slice(self.theta, &phi);
            f(&idx, &phi, s);
            // advance the mixed-radix counter
            let mut axis = 0;
            loop {
                idx[axis] += 1;
                if idx[axis] < self.n {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
                if axis == d {
                    return;
                }
            }
        }
    }

    fn scan(&self) -> ScanResult {
        let mut min_action = f64::INFINITY;
        let mut min_boundary = f64::INFINITY;
        let n = self.n;
        self.for_each_point(|idx, _phi, s| {
            if s < min_action {
                min_action = s;
            }
            if idx.iter().any(|&k| k == 0 || k == n - 1) && s < min_boundary {
                min_boundary = s;
            }
        });
        ScanResult { min_action, min_boundary_action: min_boundary }
    }

    /// Accumulates Z and all moment numerators with the density shifted by
    /// `exp(-(S - s_min))` for overflow safety; the shift cancels in ratios.
    fn integrate(&self, s_min: f64) -> QuadratureResult {
        let theta = self.theta;
        let v = theta.volume();
        let mut z = 0.0;
        let mut m1 = vec![0.0; v];
        let mut m2 = vec![0.0; v];
        let mut m4 = vec![0.0; v];
        let mut mp = vec![0.0; theta.n_pairs()];
        self.for_each_point(|idx, phi, s| {
            let mut wt = 1.0;
            for &k in idx {
                wt *= self.weight_1d(k);
            }
            let dens = wt * (-(s - s_min)).exp();
            z += dens;
            for i in 0..v {
                let xi = phi[i];
                let xi2 = xi * xi;
                m1[i] += dens * xi;
                m2[i] += dens * xi2;
                m4[i] += dens * xi2 * xi2;
            }
            let mut k = 0;
            for i in 0..v {
                for j in (i + 1)..v {
                    mp[k] += dens * phi[i] * phi[j];
                    k += 1;
                }
            }
        });
        let inv_z = 1.0 / z;
        let d = self.free.len() as f64;
        // Restore the (h/3)^d prefactor dropped from the weights.
        let log_z = z.ln() + d * (self.step / 3.0).ln() - s_min;
        QuadratureResult {
            log_z,
            moments: Moments {
                volume: v,
                mean_phi: m1.iter().map(|x| x * inv_z).collect(),
                mean_pair: mp.iter().map(|x| x * inv_z).collect(),
                mean_sq: m2.iter().map(|x| x * inv_z).collect(),
                mean_quart: m4.iter().map(|x| x * inv_z).collect(),
            },
            half_width: self.half_width,
        }
    }
}

/// Action evaluated on a raw coordinate slice (no allocation per grid point).
fn action_on_slice(theta: &CouplingSet, x: &[f64]) -> f64 {
    let v = theta.volume();
    let w = theta.weights();
    let mut pair = 0.0;
    for i in 0..v {
        for j in (i + 1)..v {
            pair += w[pair_index(v, i, j)] * x[i] * x[j];
        }
    }
    let mu = theta.mass_sq();
    let lam = theta.quartic();
    let a = theta.bias();
    let mut local = 0.0;
    for i in 0..v {
        let xi = x[i];
        let xi2 = xi * xi;
        local += mu[i] * xi2 + lam[i] * xi2 * xi2 - a[i] * xi;
    }
    -pair + local
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_site(mu: f64, lambda: f64, a: f64) -> CouplingSet {
        CouplingSet::new(1, vec![], vec![mu], vec![lambda], vec![a]).unwrap()
    }

    #[test]
    fn symmetric_single_site_mean_is_zero() {
        let theta = single_site(1.0, 1.0, 0.0);
        let r = quadrature_moments(&theta, &QuadratureSpec::default()).unwrap();
        assert!(r.moments.mean_phi[0].abs() < 1e-12);
        assert!(r.moments.mean_sq[0] > 0.0);
    }

    #[test]
    fn richardson_self_consistency() {
        let theta = single_site(1.0, 1.0, 0.0);
        let coarse = quadrature_moments(&theta, &QuadratureSpec::with_points(201)).unwrap();
        let fine = quadrature_moments(&theta, &QuadratureSpec::with_points(401)).unwrap();
        let rel = (coarse.moments.mean_sq[0] - fine.moments.mean_sq[0]).abs()
            / fine.moments.mean_sq[0];
        assert!(rel < 1e-8, "relative gap {rel}");
        assert!((coarse.log_z - fine.log_z).abs() < 1e-8);
    }

    #[test]
    fn bias_sign_flip_flips_means() {
        let c = 0.4;
        let plus = CouplingSet::new(2, vec![0.2], vec![0.5, 0.5], vec![0.3, 0.3], vec![c, c])
            .unwrap();
        let minus = CouplingSet::new(2, vec![0.2], vec![0.5, 0.5], vec![0.3, 0.3], vec![-c, -c])
            .unwrap();
        let spec = QuadratureSpec::with_points(201);
        let rp = quadrature_moments(&plus, &spec).unwrap();
        let rm = quadrature_moments(&minus, &spec).unwrap();
        for i in 0..2 {
            assert!((rp.moments.mean_phi[i] + rm.moments.mean_phi[i]).abs() < 1e-12);
            assert!((rp.moments.mean_sq[i] - rm.moments.mean_sq[i]).abs() < 1e-12);
        }
        assert!(rp.moments.mean_phi[0].abs() > 1e-3, "bias should shift the mean");
    }

    #[test]
    fn gaussian_limit_matches_closed_form() {
        // With lambda at the floor the single-site weight is nearly
        // N(0, 1/(2 mu)); quartic corrections are O(lambda) here.
        let mu = 1.5;
        let theta = single_site(mu, LAMBDA_TINY, 0.0);
        let r = quadrature_moments(&theta, &QuadratureSpec::with_points(401)).unwrap();
        let var = 1.0 / (2.0 * mu);
        assert!((r.moments.mean_sq[0] - var).abs() < 2e-3);
        // Z approx sqrt(pi / mu)
        let z = (std::f64::consts::PI / mu).sqrt();
        assert!((r.log_z - z.ln()).abs() < 2e-3);
    }

    const LAMBDA_TINY: f64 = 1e-4;

    #[test]
    fn clamped_sites_report_their_values() {
        let theta = CouplingSet::new(
            3,
            vec![0.3, -0.1, 0.2],
            vec![0.5; 3],
            vec![0.4; 3],
            vec![0.0; 3],
        )
        .unwrap();
        let clamp = vec![Some(0.7), None, Some(-0.2)];
        let r =
            conditional_quadrature_moments(&theta, &clamp, &QuadratureSpec::with_points(401))
                .unwrap();
        assert_eq!(r.moments.mean_phi[0], 0.7);
        assert!((r.moments.mean_sq[2] - 0.04).abs() < 1e-15);
        // pair (0,2) is deterministic: 0.7 * -0.2
        let k02 = pair_index(3, 0, 2);
        assert!((r.moments.mean_pair[k02] - (0.7 * -0.2)).abs() < 1e-15);
        // positive coupling to the positive clamp pulls the free mean up
        assert!(r.moments.mean_phi[1].is_finite());
    }

    #[test]
    fn all_clamped_is_an_error() {
        let theta = CouplingSet::uniform(2, 0.1, 0.5, 0.5, 0.0).unwrap();
        assert!(matches!(
            conditional_quadrature_moments(
                &theta,
                &[Some(0.1), Some(0.2)],
                &QuadratureSpec::default()
            ),
            Err(Error::AllSitesClamped)
        ));
    }

    #[test]
    fn too_many_free_sites_is_an_error() {
        let theta = CouplingSet::uniform(4, 0.0, 0.5, 0.5, 0.0).unwrap();
        assert!(matches!(
            quadrature_moments(&theta, &QuadratureSpec::default()),
            Err(Error::QuadratureTooLarge { .. })
        ));
    }

    #[test]
    fn fixed_small_half_width_fails_boundary_check() {
        let theta = single_site(0.01, LAMBDA_TINY, 0.0);
        let spec = QuadratureSpec {
            half_width: Some(1.0),
            ..QuadratureSpec::with_points(101)
        };
        assert!(matches!(
            quadrature_moments(&theta, &spec),
            Err(Error::QuadratureBoundary { .. })
        ));
    }

    #[test]
    fn pair_moments_symmetric_under_relabel() {
        let theta = CouplingSet::new(
            2,
            vec![0.25],
            vec![0.6, 0.4],
            vec![0.3, 0.5],
            vec![0.1, -0.2],
        )
        .unwrap();
        let perm = vec![1usize, 0];
        let theta_p = theta.permuted(&perm).unwrap();
        let spec = QuadratureSpec::with_points(201);
        let r = quadrature_moments(&theta, &spec).unwrap();
        let rp = quadrature_moments(&theta_p, &spec).unwrap();
        assert!((r.moments.mean_phi[0] - rp.moments.mean_phi[1]).abs() < 1e-12);
        assert!((r.moments.mean_pair[0] - rp.moments.mean_pair[0]).abs() < 1e-12);
    }
}
