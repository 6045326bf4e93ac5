//! Spatial channel model for a uniform linear array.
//!
//! Each channel is conditionally Gaussian, `h | δ ~ CN(0, C_δ)`, where `δ`
//! collects cluster centre angles and gains. The covariance is the integral
//! of `g(θ; δ) a(θ) a(θ)ᴴ` over `[−π, π]`, with `a` the half-wavelength ULA
//! steering vector and `g` a weighted sum of Laplace densities truncated to
//! `[−π, π]`. The integral is evaluated with the trapezoid rule on a uniform
//! grid, and `g` is renormalized on that same grid so the covariance
//! diagonal is one.

use std::f64::consts::PI;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{normalize_dataset, ChannelDataset, ChannelSample};
use crate::linalg::{
    hermitian_cholesky, sample_with_factor, Complex64, ComplexVector, HermitianMatrix,
};
use crate::rng::{stream, stream_rng};
use crate::{par, Error, Result};

/// Cluster centre angles are drawn from `[−SECTOR_HALF_WIDTH, SECTOR_HALF_WIDTH]`
/// (a 120° sector).
pub const SECTOR_HALF_WIDTH: f64 = PI / 3.0;

/// 2° per-cluster angle spread.
pub const DEFAULT_SPREAD: f64 = 2.0 * PI / 180.0;

/// Smallest quadrature grid ever used.
pub const MIN_QUADRATURE_POINTS: usize = 3600;

pub fn default_quadrature_points(n_antennas: usize) -> usize {
    MIN_QUADRATURE_POINTS.max(16 * n_antennas)
}

/// Propagation-cluster parameters `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    angles: Vec<f64>,
    gains: Vec<f64>,
    spread: f64,
}

impl ClusterParams {
    pub fn new(angles: Vec<f64>, gains: Vec<f64>, spread: f64) -> Result<Self> {
        if angles.is_empty() || angles.len() != gains.len() {
            return Err(Error::InvalidArgument(format!(
                "{} angles and {} gains",
                angles.len(),
                gains.len()
            )));
        }
        if angles
            .iter()
            .any(|a| !(-SECTOR_HALF_WIDTH..=SECTOR_HALF_WIDTH).contains(a))
        {
            return Err(Error::InvalidArgument(
                "cluster angles must lie in [-pi/3, pi/3]".into(),
            ));
        }
        if gains.iter().any(|g| g.is_nan() || *g < 0.0)
            || (gains.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::InvalidArgument(
                "gains must be nonnegative and sum to one".into(),
            ));
        }
        if !(spread > 0.0 && spread.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad angle spread {spread}")));
        }
        Ok(Self {
            angles,
            gains,
            spread,
        })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn spread(&self) -> f64 {
        self.spread
    }

    pub fn n_clusters(&self) -> usize {
        self.angles.len()
    }

    /// `Σ_p gains_p · e^{−|θ−θ_p|/b} / (2b)` before truncation renormalization.
    fn raw_density(&self, theta: f64) -> f64 {
        let b = self.spread;
        self.angles
            .iter()
            .zip(&self.gains)
            .map(|(a, g)| g * (-(theta - a).abs() / b).exp())
            .sum::<f64>()
            / (2.0 * b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub antennas: usize,
    pub clusters: usize,
    /// Per-cluster Laplace angle spread in radians.
    pub spread: f64,
    pub quadrature_points: usize,
    pub seed: u64,
    /// Keep each sample's generating covariance (memory grows as `M·N²`).
    pub retain_covariances: bool,
}

impl ModelConfig {
    pub fn new(antennas: usize, clusters: usize, seed: u64) -> Self {
        Self {
            antennas,
            clusters,
            spread: DEFAULT_SPREAD,
            quadrature_points: default_quadrature_points(antennas),
            seed,
            retain_covariances: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.clusters == 0 {
            return Err(Error::Config(
                "antennas and clusters must be positive".into(),
            ));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(Error::Config(format!("bad angle spread {}", self.spread)));
        }
        if self.quadrature_points < 16 * self.antennas {
            return Err(Error::Config(format!(
                "quadrature_points = {} is below 16·N = {}",
                self.quadrature_points,
                16 * self.antennas
            )));
        }
        Ok(())
    }
}

/// `a(θ)_i = e^{jπ i sin θ}` for `i = 0..n`.
pub fn steering_vector(theta: f64, n_antennas: usize) -> ComplexVector {
    let s = theta.sin();
    (0..n_antennas)
        .map(|i| Complex64::from_polar(1.0, PI * i as f64 * s))
        .collect()
}

/// Uniform trapezoid grid over `[−π, π]`.
#[derive(Debug, Clone)]
struct AngularGrid {
    angles: Vec<f64>,
    weights: Vec<f64>,
}

impl AngularGrid {
    fn new(points: usize) -> Self {
        assert!(points >= 2, "quadrature needs at least two points");
        let h = 2.0 * PI / (points - 1) as f64;
        let angles = (0..points).map(|q| -PI + q as f64 * h).collect();
        let weights = (0..points)
            .map(|q| {
                if q == 0 || q == points - 1 {
                    0.5 * h
                } else {
                    h
                }
            })
            .collect();
        Self { angles, weights }
    }

    /// Quadrature weights times `g`, normalized so they sum to one. The sum
    /// of the unnormalized products is the truncation normalizer `Z`.
    fn density_weights(&self, params: &ClusterParams) -> (Vec<f64>, f64) {
        let mut w: Vec<f64> = self
            .angles
            .iter()
            .zip(&self.weights)
            .map(|(&t, &qw)| qw * params.raw_density(t))
            .collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= z);
        (w, z)
    }
}

/// `g(θ; δ)`, renormalized so its trapezoid integral on a grid with
/// `quadrature_points` nodes over `[−π, π]` equals one.
pub fn laplace_power_density(theta: f64, params: &ClusterParams, quadrature_points: usize) -> f64 {
    let (_, z) = AngularGrid::new(quadrature_points).density_weights(params);
    params.raw_density(theta) / z
}

/// Evaluates `C_δ` for many `δ` on a fixed array and grid.
///
/// Precomputes the phase table `e^{jπ d sin θ_q}` for lags `d = 0..N`; each
/// covariance is then Toeplitz with first column `r_d = Σ_q w_q g(θ_q) e^{jπ d sin θ_q}`.
#[derive(Debug, Clone)]
pub struct CovarianceIntegrator {
    n_antennas: usize,
    grid: AngularGrid,
    phases: Vec<Complex64>,
}

impl CovarianceIntegrator {
    pub fn new(n_antennas: usize, quadrature_points: usize) -> Self {
        assert!(
            quadrature_points >= 16 * n_antennas,
            "quadrature_points must be at least 16·N"
        );
        let grid = AngularGrid::new(quadrature_points);
        let mut phases = Vec::with_capacity(quadrature_points * n_antennas);
        for &t in &grid.angles {
            phases.extend(steering_vector(t, n_antennas));
        }
        Self {
            n_antennas,
            grid,
            phases,
        }
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn covariance(&self, params: &ClusterParams) -> HermitianMatrix {
        let n = self.n_antennas;
        let (w, _) = self.grid.density_weights(params);
        let mut lags = vec![Complex64::new(0.0, 0.0); n];
        for (q, &wq) in w.iter().enumerate() {
            if wq == 0.0 {
                continue;
            }
            let row = &self.phases[q * n..(q + 1) * n];
            for (acc, p) in lags.iter_mut().zip(row) {
                *acc += p * wq;
            }
        }
        // (i, j) with i <= j is r_{i-j} = conj(r_{j-i}).
        HermitianMatrix::from_upper_fn(n, |i, j| lags[j - i].conj())
    }
}

/// Trapezoid approximation of `∫ g(θ; δ) a(θ) a(θ)ᴴ dθ` over `[−π, π]`.
///
/// # Panics
///
/// If `quadrature_points < 16 · n_antennas`.
pub fn cluster_covariance(
    params: &ClusterParams,
    n_antennas: usize,
    quadrature_points: usize,
) -> HermitianMatrix {
    CovarianceIntegrator::new(n_antennas, quadrature_points).covariance(params)
}

/// Angles uniform on the 120° sector, raw gains uniform on `(0, 1]` and then
/// normalized to sum to one.
pub fn draw_cluster_params<R: Rng + ?Sized>(
    n_clusters: usize,
    spread: f64,
    rng: &mut R,
) -> ClusterParams {
    assert!(n_clusters >= 1, "need at least one cluster");
    let angles: Vec<f64> = (0..n_clusters)
        .map(|_| rng.random_range(-SECTOR_HALF_WIDTH..=SECTOR_HALF_WIDTH))
        .collect();
    let raw: Vec<f64> = (0..n_clusters).map(|_| 1.0 - rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let gains = raw.iter().map(|g| g / total).collect();
    ClusterParams {
        angles,
        gains,
        spread,
    }
}

/// Unnormalized samples for the global indices in `range`. Sample `i` depends
/// only on `(config.seed, i)`.
pub fn generate_samples(config: &ModelConfig, range: Range<usize>) -> Result<Vec<ChannelSample>> {
    config.validate()?;
    let integrator = CovarianceIntegrator::new(config.antennas, config.quadrature_points);
    let start = range.start;
    let draws = par::map_range(range.len(), |offset| {
        let index = (start + offset) as u64;
        let mut rng = stream_rng(config.seed, &[stream::CHANNEL_SAMPLE, index]);
        let params = draw_cluster_params(config.clusters, config.spread, &mut rng);
        let cov = integrator.covariance(&params);
        let factor = hermitian_cholesky(&cov, cov.default_ridge())?;
        let zero = vec![Complex64::new(0.0, 0.0); config.antennas];
        let h = sample_with_factor(&zero, &factor, &mut rng);
        Ok(if config.retain_covariances {
            ChannelSample::with_covariance(h, cov)
        } else {
            ChannelSample::new(h)
        })
    });
    draws.into_iter().collect()
}

/// Draws `n_samples` channels and rescales them so the mean of `‖h‖²` is
/// exactly `N`; retained covariances are scaled by the square of the same
/// factor.
pub fn generate_dataset(config: &ModelConfig, n_samples: usize) -> Result<ChannelDataset> {
    let samples = generate_samples(config, 0..n_samples)?;
    normalize_dataset(&ChannelDataset::new(config.antennas, samples)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm_sqr, sample_gaussian};
    use crate::rng::seeded_rng;

    fn single(theta: f64, spread: f64) -> ClusterParams {
        ClusterParams::new(vec![theta], vec![1.0], spread).unwrap()
    }

    /// Trapezoid integral over `[lo, hi]` with `n` nodes.
    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * f(lo + i as f64 * h)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn steering_vector_cases() {
        let one = Complex64::new(1.0, 0.0);
        assert_eq!(steering_vector(0.0, 4), vec![one; 4]);
        let a = steering_vector(PI / 2.0, 2);
        assert!((a[0] - one).norm() < 1e-15);
        assert!((a[1] + one).norm() < 1e-15);
        for theta in [-2.0, 0.3, 1.1] {
            let a = steering_vector(theta, 8);
            assert!(a.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
            assert!((norm_sqr(&a) - 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn laplace_density_is_even_around_center() {
        let p = single(0.4, 0.1);
        for x in [0.01, 0.2, 1.0, 2.0] {
            let a = laplace_power_density(0.4 + x, &p, 3600);
            let b = laplace_power_density(0.4 - x, &p, 3600);
            assert!((a - b).abs() <= 1e-12 * a.max(1e-300), "x = {x}");
        }
    }

    #[test]
    fn laplace_density_integrates_to_one_on_its_grid() {
        let p =
            ClusterParams::new(vec![-0.5, 0.2, 0.9], vec![0.2, 0.3, 0.5], DEFAULT_SPREAD).unwrap();
        let q = 3600;
        let total = trapezoid(|t| laplace_power_density(t, &p, q), -PI, PI, q);
        assert!((total - 1.0).abs() < 1e-6, "integral {total}");
    }

    #[test]
    fn two_narrow_clusters_split_mass_evenly() {
        let b = 0.01;
        let p = ClusterParams::new(vec![-0.6, 0.5], vec![0.5, 0.5], b).unwrap();
        let q = 20_001;
        for c in p.angles().to_vec() {
            let mass = trapezoid(
                |t| laplace_power_density(t, &p, q),
                c - 5.0 * b,
                c + 5.0 * b,
                2001,
            );
            // A ±5b window of a Laplace density holds 1 − e^{−5} of its mass.
            assert!(
                (mass - 0.5 * (1.0 - (-5.0f64).exp())).abs() < 1e-3,
                "mass {mass}"
            );
        }
    }

    #[test]
    fn covariance_is_toeplitz_with_unit_diagonal() {
        let mut rng = seeded_rng(21);
        for clusters in [1, 3] {
            let p = draw_cluster_params(clusters, DEFAULT_SPREAD, &mut rng);
            let c = cluster_covariance(&p, 16, 3600);
            for i in 0..16 {
                assert!((c.get(i, i).re - 1.0).abs() < 1e-6);
            }
            let mut worst: f64 = 0.0;
            for d in 0..16 {
                let first = c.get(d, 0);
                for i in d..16 {
                    worst = worst.max((c.get(i, i - d) - first).norm());
                }
            }
            assert!(worst < 1e-10, "toeplitz deviation {worst}");
            assert!((c.trace() - 16.0).abs() < 1e-6 * 16.0);
            hermitian_cholesky(&c, c.default_ridge()).unwrap();
        }
    }

    #[test]
    fn narrow_cluster_approaches_rank_one() {
        let theta = 0.37;
        let n = 8;
        // Grid spacing must resolve the 1e-4 spread.
        let c = cluster_covariance(&single(theta, 1e-4), n, 400_001);
        let oracle = HermitianMatrix::outer(&steering_vector(theta, n));
        let rel = c.frobenius_distance(&oracle) / oracle.frobenius_norm();
        assert!(rel < 1e-2, "relative distance {rel}");
    }

    #[test]
    fn narrow_cluster_samples_lie_near_steering_span() {
        let theta = -0.2;
        let n = 8;
        let c = cluster_covariance(&single(theta, 1e-4), n, 400_001);
        let a = steering_vector(theta, n);
        let zero = vec![Complex64::new(0.0, 0.0); n];
        for h in sample_gaussian(&zero, &c, &mut seeded_rng(5), 20).unwrap() {
            let coef: Complex64 = a
                .iter()
                .zip(&h)
                .map(|(x, y)| x.conj() * y)
                .sum::<Complex64>()
                / n as f64;
            let resid: f64 = h
                .iter()
                .zip(&a)
                .map(|(y, x)| (y - x * coef).norm_sqr())
                .sum();
            assert!((resid / norm_sqr(&h)).sqrt() < 1e-1);
        }
    }

    #[test]
    fn drawn_params_respect_invariants() {
        let mut rng = seeded_rng(3);
        let p = draw_cluster_params(1, DEFAULT_SPREAD, &mut rng);
        assert_eq!(p.gains(), &[1.0]);
        let p = draw_cluster_params(3, DEFAULT_SPREAD, &mut rng);
        assert!((p.gains().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.gains().iter().all(|&g| g > 0.0));
        assert_eq!(p.spread(), DEFAULT_SPREAD);
        ClusterParams::new(p.angles().to_vec(), p.gains().to_vec(), p.spread()).unwrap();
    }

    #[test]
    fn angles_are_uniform_on_sector() {
        let mut rng = seeded_rng(4);
        let mut angles: Vec<f64> = (0..10_000)
            .map(|_| draw_cluster_params(1, DEFAULT_SPREAD, &mut rng).angles()[0])
            .collect();
        angles.sort_by(f64::total_cmp);
        let n = angles.len() as f64;
        let ks = angles
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let cdf = (a + SECTOR_HALF_WIDTH) / (2.0 * SECTOR_HALF_WIDTH);
                (cdf - i as f64 / n)
                    .abs()
                    .max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS statistic {ks}");
    }

    #[test]
    fn dataset_is_normalized_and_reproducible() {
        let mut cfg = ModelConfig::new(8, 2, 17);
        cfg.retain_covariances = true;
        let ds = generate_dataset(&cfg, 300).unwrap();
        assert!(ds.is_normalized());
        assert!((ds.mean_squared_norm() - 8.0).abs() < 1e-12);
        for s in ds.samples() {
            let c = s.covariance.as_ref().unwrap();
            hermitian_cholesky(c, c.default_ridge()).unwrap();
        }
        assert_eq!(generate_dataset(&cfg, 300).unwrap(), ds);

        cfg.seed = 18;
        let other = generate_dataset(&cfg, 300).unwrap();
        assert_ne!(other.samples()[0].channel, ds.samples()[0].channel);
    }

    #[test]
    fn ranges_compose() {
        let cfg = ModelConfig::new(4, 1, 9);
        let all = generate_samples(&cfg, 0..10).unwrap();
        let tail = generate_samples(&cfg, 6..10).unwrap();
        assert_eq!(&all[6..], &tail[..]);
    }

    #[test]
    fn fixed_params_match_empirical_covariance() {
        let n = 8;
        let p = ClusterParams::new(vec![0.3], vec![1.0], 0.1).unwrap();
        let c = cluster_covariance(&p, n, default_quadrature_points(n));
        let zero = vec![Complex64::new(0.0, 0.0); n];
        let draws = sample_gaussian(&zero, &c, &mut seeded_rng(8), 10_000).unwrap();
        let emp = HermitianMatrix::from_upper_fn(n, |i, j| {
            draws.iter().map(|h| h[i] * h[j].conj()).sum::<Complex64>() / draws.len() as f64
        });
        let rel = emp.frobenius_distance(&c) / c.frobenius_norm();
        assert!(rel < 0.1, "relative error {rel}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModelConfig::new(16, 1, 0);
        cfg.quadrature_points = 100;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(generate_dataset(&cfg, 1).is_err());
    }
}
