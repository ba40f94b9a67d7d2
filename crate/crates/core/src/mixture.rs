//! Gaussian scale mixtures over station size and mode counting for sums of
//! Gaussians.
//!
//! A station of size `n` voting independently with probability `p` gives a
//! share that is approximately `N(p, p(1-p)/n)`. Mixing over a size measure
//! `mu` yields a scale mixture, which is Gaussian only when `mu` is a single
//! atom. [`mixture_moments`] detects this through the excess kurtosis and
//! [`kolmogorov_distance_to_gaussian`] through the CDF.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MixtureError {
    #[error("size measure is empty")]
    EmptyMeasure,
    #[error("size measure has an atom at n = 0")]
    ZeroSize,
    #[error("atom weight {0} is not a positive finite number")]
    BadWeight(f64),
    #[error("p = {0} must lie strictly between 0 and 1")]
    DegenerateP(f64),
    #[error("no Gaussian components")]
    NoComponents,
    #[error("component {index}: {detail}")]
    BadComponent { index: usize, detail: String },
    #[error("grid step {step} exceeds a tenth of the smallest sigma {min_sigma}")]
    CoarseGrid { step: f64, min_sigma: f64 },
}

/// A finite measure over station sizes.
///
/// Weights need not sum to one; every operation normalises internally.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SizeMeasure {
    atoms: BTreeMap<u64, f64>,
}

impl SizeMeasure {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(n: u64) -> Self {
        Self {
            atoms: BTreeMap::from([(n, 1.0)]),
        }
    }

    /// Equal weight on every size in `sizes`.
    pub fn uniform(sizes: impl IntoIterator<Item = u64>) -> Self {
        let mut mu = Self::new();
        for n in sizes {
            mu.atoms.insert(n, 1.0);
        }
        mu
    }

    pub fn from_atoms(atoms: impl IntoIterator<Item = (u64, f64)>) -> Result<Self, MixtureError> {
        let mut mu = Self::new();
        for (n, w) in atoms {
            if !(w.is_finite() && w > 0.0) {
                return Err(MixtureError::BadWeight(w));
            }
            mu.add(n, w);
        }
        Ok(mu)
    }

    /// Accumulate `weight` on size `n`.
    pub fn add(&mut self, n: u64, weight: f64) {
        *self.atoms.entry(n).or_insert(0.0) += weight;
    }

    pub fn atoms(&self) -> &BTreeMap<u64, f64> {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.values().sum()
    }

    pub fn normalized(&self) -> Self {
        let total = self.total_mass();
        Self {
            atoms: self.atoms.iter().map(|(&n, &w)| (n, w / total)).collect(),
        }
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= 1e-12
    }

    /// Normalised `(n, w)` pairs after checking the measure is usable for
    /// variance computations.
    fn probabilities(&self) -> Result<Vec<(u64, f64)>, MixtureError> {
        if self.atoms.is_empty() {
            return Err(MixtureError::EmptyMeasure);
        }
        if self.atoms.contains_key(&0) {
            return Err(MixtureError::ZeroSize);
        }
        if let Some(&w) = self.atoms.values().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(MixtureError::BadWeight(w));
        }
        let total = self.total_mass();
        Ok(self.atoms.iter().map(|(&n, &w)| (n, w / total)).collect())
    }
}

fn check_p(p: f64) -> Result<(), MixtureError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(MixtureError::DegenerateP(p))
    }
}

fn variance(p: f64, n: u64) -> f64 {
    p * (1.0 - p) / n as f64
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

fn normal_cdf(x: f64, mean: f64, var: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (2.0 * var).sqrt())
}

/// Density of the scale mixture `sum_n w_n N(p, p(1-p)/n)` at `x`.
///
/// At `p = 1/2` each term is `sqrt(2n/pi) exp(-2n (x - 1/2)^2)`.
pub fn mixture_density(mu: &SizeMeasure, p: f64, x: f64) -> Result<f64, MixtureError> {
    check_p(p)?;
    Ok(mu
        .probabilities()?
        .into_iter()
        .map(|(n, w)| w * normal_pdf(x, p, variance(p, n)))
        .sum())
}

/// CDF of the same mixture.
pub fn mixture_cdf(mu: &SizeMeasure, p: f64, x: f64) -> Result<f64, MixtureError> {
    check_p(p)?;
    Ok(mu
        .probabilities()?
        .into_iter()
        .map(|(n, w)| w * normal_cdf(x, p, variance(p, n)))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub excess_kurtosis: f64,
}

/// Mean, variance and excess kurtosis of the scale mixture.
///
/// The fourth central moment of a scale mixture of normals is `3 E[s^4]`,
/// so the excess kurtosis is `3 E[s^4] / E[s^2]^2 - 3`, which vanishes
/// exactly when all the mass sits on one variance.
pub fn mixture_moments(mu: &SizeMeasure, p: f64) -> Result<Moments, MixtureError> {
    check_p(p)?;
    let probs = mu.probabilities()?;
    let (mut m2, mut m4) = (0.0, 0.0);
    for (n, w) in probs {
        let s2 = variance(p, n);
        m2 += w * s2;
        m4 += w * s2 * s2;
    }
    Ok(Moments {
        mean: p,
        variance: m2,
        excess_kurtosis: 3.0 * m4 / (m2 * m2) - 3.0,
    })
}

/// Sup-distance between the mixture CDF and the Gaussian with the same mean
/// and variance.
///
/// The supremum is located on a uniform grid over `p +- 10 sigma_max` and
/// then refined by golden-section search around the best grid point.
pub fn kolmogorov_distance_to_gaussian(mu: &SizeMeasure, p: f64) -> Result<f64, MixtureError> {
    let moments = mixture_moments(mu, p)?;
    let probs = mu.probabilities()?;
    let var_max = probs
        .iter()
        .map(|&(n, _)| variance(p, n))
        .fold(0.0, f64::max);
    let gap = |x: f64| {
        let mix: f64 = probs
            .iter()
            .map(|&(n, w)| w * normal_cdf(x, p, variance(p, n)))
            .sum();
        (mix - normal_cdf(x, p, moments.variance)).abs()
    };

    let half = 10.0 * var_max.sqrt();
    let steps = 4000;
    let h = 2.0 * half / steps as f64;
    let (mut best_x, mut best) = (p, gap(p));
    for i in 0..=steps {
        let x = p - half + i as f64 * h;
        let g = gap(x);
        if g > best {
            best = g;
            best_x = x;
        }
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (best_x - h, best_x + h);
    for _ in 0..80 {
        let c = b - inv_phi * (b - a);
        let d = a + inv_phi * (b - a);
        if gap(c) > gap(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(best.max(gap((a + b) / 2.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeScan {
    pub xs: Vec<f64>,
    pub density: Vec<f64>,
    pub modes: Vec<f64>,
}

impl ModeScan {
    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }
}

/// Sample `sum_i w_i N(mean_i, sigma_i^2)` on a grid spanning every
/// component's `mean +- 4 sigma` and locate its modes.
pub fn gaussian_sum_modes(
    components: &[GaussianComponent],
    grid_step: f64,
) -> Result<ModeScan, MixtureError> {
    if components.is_empty() {
        return Err(MixtureError::NoComponents);
    }
    for (index, c) in components.iter().enumerate() {
        let detail = if !(c.weight.is_finite() && c.weight > 0.0) {
            format!("weight {} must be positive", c.weight)
        } else if !(c.sigma.is_finite() && c.sigma > 0.0) {
            format!("sigma {} must be positive", c.sigma)
        } else if !c.mean.is_finite() {
            format!("mean {} is not finite", c.mean)
        } else {
            continue;
        };
        return Err(MixtureError::BadComponent { index, detail });
    }
    let min_sigma = components.iter().map(|c| c.sigma).fold(f64::INFINITY, f64::min);
    if !(grid_step > 0.0 && grid_step <= min_sigma / 10.0) {
        return Err(MixtureError::CoarseGrid {
            step: grid_step,
            min_sigma,
        });
    }
    let lo = components
        .iter()
        .map(|c| c.mean - 4.0 * c.sigma)
        .fold(f64::INFINITY, f64::min);
    let hi = components
        .iter()
        .map(|c| c.mean + 4.0 * c.sigma)
        .fold(f64::NEG_INFINITY, f64::max);
    let steps = ((hi - lo) / grid_step).ceil() as usize;
    let xs: Vec<f64> = (0..=steps).map(|i| lo + i as f64 * grid_step).collect();
    let density: Vec<f64> = xs
        .iter()
        .map(|&x| {
            components
                .iter()
                .map(|c| c.weight * normal_pdf(x, c.mean, c.sigma * c.sigma))
                .sum()
        })
        .collect();
    let modes = find_modes(&density)
        .into_iter()
        .map(|(a, b)| (xs[a] + xs[b]) / 2.0)
        .collect();
    Ok(ModeScan { xs, density, modes })
}

/// Strict local maxima of a sampled sequence, as inclusive index ranges.
///
/// A run of equal samples counts as one maximum when both neighbouring runs
/// are lower; a run touching either end of the sequence only needs the one
/// neighbour it has.
pub fn find_modes(samples: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < samples.len() {
        let mut j = i;
        while j + 1 < samples.len() && samples[j + 1] == samples[i] {
            j += 1;
        }
        let left_lower = i == 0 || samples[i - 1] < samples[i];
        let right_lower = j + 1 == samples.len() || samples[j + 1] < samples[i];
        let interior = i > 0 || j + 1 < samples.len();
        if left_lower && right_lower && interior {
            out.push((i, j));
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_point() -> SizeMeasure {
        SizeMeasure::from_atoms([(100, 0.5), (400, 0.5)]).unwrap()
    }

    #[test]
    fn single_atom_peak() {
        for n in [1u64, 10, 100, 3000] {
            let d = mixture_density(&SizeMeasure::single(n), 0.5, 0.5).unwrap();
            assert_abs_diff_eq!(d, (2.0 * n as f64 / PI).sqrt(), epsilon = 1e-9);
        }
    }

    #[test]
    fn two_point_peak() {
        let d = mixture_density(&two_point(), 0.5, 0.5).unwrap();
        let want = ((200.0 / PI).sqrt() + (800.0 / PI).sqrt()) / 2.0;
        assert_abs_diff_eq!(d, want, epsilon = 1e-9);
    }

    #[test]
    fn peak_integrand_at_half() {
        let n = 37.0;
        let x: f64 = 0.47;
        let d = mixture_density(&SizeMeasure::single(37), 0.5, x).unwrap();
        let want = (2.0 * n / PI).sqrt() * (-2.0 * n * (x - 0.5).powi(2)).exp();
        assert_abs_diff_eq!(d, want, epsilon = 1e-12);
    }

    #[test]
    fn density_rejects_degenerate_p() {
        let mu = SizeMeasure::single(10);
        assert_eq!(mixture_density(&mu, 0.0, 0.1), Err(MixtureError::DegenerateP(0.0)));
        assert_eq!(mixture_density(&mu, 1.0, 0.1), Err(MixtureError::DegenerateP(1.0)));
        assert_eq!(
            mixture_density(&SizeMeasure::new(), 0.5, 0.5),
            Err(MixtureError::EmptyMeasure)
        );
        assert_eq!(
            mixture_density(&SizeMeasure::single(0), 0.5, 0.5),
            Err(MixtureError::ZeroSize)
        );
    }

    #[test]
    fn single_atom_moments() {
        let m = mixture_moments(&SizeMeasure::single(100), 0.5).unwrap();
        assert_eq!(m.mean, 0.5);
        assert_abs_diff_eq!(m.variance, 1.0 / 400.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.excess_kurtosis, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn two_point_kurtosis() {
        // sigma^2 in {1/400, 1/1600}: E[s^2] = 1/640, E[s^4] = 17/5_120_000.
        let e2 = 1.0 / 640.0;
        let e4 = 17.0 / 5_120_000.0;
        let m = mixture_moments(&two_point(), 0.5).unwrap();
        assert_abs_diff_eq!(m.variance, e2, epsilon = 1e-15);
        assert_abs_diff_eq!(m.excess_kurtosis, 3.0 * e4 / (e2 * e2) - 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.excess_kurtosis, 1.08, epsilon = 1e-12);
    }

    #[test]
    fn moments_ignore_weight_scale() {
        let a = mixture_moments(&two_point(), 0.3).unwrap();
        let b = mixture_moments(&SizeMeasure::from_atoms([(100, 7.0), (400, 7.0)]).unwrap(), 0.3)
            .unwrap();
        assert_abs_diff_eq!(a.variance, b.variance, epsilon = 1e-15);
        assert_abs_diff_eq!(a.excess_kurtosis, b.excess_kurtosis, epsilon = 1e-12);
    }

    #[test]
    fn kolmogorov_distance_separates_atoms() {
        let single = kolmogorov_distance_to_gaussian(&SizeMeasure::single(100), 0.5).unwrap();
        assert!(single < 1e-6, "{single}");
        let two = kolmogorov_distance_to_gaussian(&two_point(), 0.5).unwrap();
        assert!(two > 1e-3, "{two}");
    }

    #[test]
    fn cdf_limits() {
        let mu = two_point();
        assert_abs_diff_eq!(mixture_cdf(&mu, 0.5, 0.5).unwrap(), 0.5, epsilon = 1e-15);
        assert!(mixture_cdf(&mu, 0.5, -1.0).unwrap() < 1e-12);
        assert!(mixture_cdf(&mu, 0.5, 2.0).unwrap() > 1.0 - 1e-12);
    }

    fn comp(weight: f64, mean: f64, sigma: f64) -> GaussianComponent {
        GaussianComponent { weight, mean, sigma }
    }

    #[test]
    fn mode_counts() {
        let one = gaussian_sum_modes(&[comp(1.0, 0.4, 0.05)], 0.001).unwrap();
        assert_eq!(one.mode_count(), 1);
        assert_abs_diff_eq!(one.modes[0], 0.4, epsilon = 1e-3);

        let twins = gaussian_sum_modes(&[comp(1.0, 0.4, 0.05), comp(1.0, 0.4, 0.05)], 0.001).unwrap();
        assert_eq!(twins.mode_count(), 1);

        let pair = gaussian_sum_modes(&[comp(1.0, 0.3, 0.05), comp(1.0, 0.6, 0.05)], 0.001).unwrap();
        assert_eq!(pair.mode_count(), 2);
        assert_abs_diff_eq!(pair.modes[0], 0.3, epsilon = 2e-3);
        assert_abs_diff_eq!(pair.modes[1], 0.6, epsilon = 2e-3);
    }

    #[test]
    fn close_components_merge() {
        let scan = gaussian_sum_modes(&[comp(1.0, 0.45, 0.05), comp(1.0, 0.5, 0.05)], 0.001).unwrap();
        assert_eq!(scan.mode_count(), 1);
    }

    #[test]
    fn grid_must_resolve_sigma() {
        assert!(matches!(
            gaussian_sum_modes(&[comp(1.0, 0.4, 0.05)], 0.01),
            Err(MixtureError::CoarseGrid { .. })
        ));
        assert!(gaussian_sum_modes(&[], 0.001).is_err());
        assert!(gaussian_sum_modes(&[comp(0.0, 0.4, 0.05)], 0.001).is_err());
    }

    #[test]
    fn plateau_modes() {
        assert_eq!(find_modes(&[0.0, 1.0, 1.0, 0.0]), vec![(1, 2)]);
        assert_eq!(find_modes(&[0.0, 1.0, 1.0, 2.0]), vec![(3, 3)]);
        assert_eq!(find_modes(&[1.0, 1.0, 1.0]), vec![]);
        assert_eq!(find_modes(&[3.0, 1.0, 2.0, 0.0]), vec![(0, 0), (2, 2)]);
    }
}
