//! Expectation-maximization for complex Gaussian mixtures.
//!
//! All densities are combined in the log domain. The E-step runs in parallel
//! over samples and the M-step in parallel over components; each reduction
//! walks samples in index order, so a fit is bit-reproducible for a given
//! seed regardless of thread count.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans_labels;
use super::{FactoredMixture, GmmModel};
use crate::dataset::ChannelDataset;
use crate::linalg::{hermitian_cholesky, log_sum_exp, Complex64, HermitianMatrix};
use crate::rng::{stream, stream_rng, SimRng};
use crate::{par, Error, Result};

/// Components whose summed responsibility falls below this are treated as
/// collapsed (equivalently, effective weight below `1 / (10·M)`).
const COLLAPSE_MASS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Uniform random soft assignments followed by one M-step.
    RandomResponsibility,
    /// Hard assignments from k-means++ / Lloyd on the samples.
    KmeansSeeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Stop once the per-sample log-likelihood improves by less than this
    /// fraction of its magnitude.
    pub rel_tolerance: f64,
    /// Diagonal loading per M-step, relative to `trace(C_k) / N`.
    pub ridge_scale: f64,
    pub init: InitStrategy,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            rel_tolerance: 1e-6,
            ridge_scale: 1e-6,
            init: InitStrategy::RandomResponsibility,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("em max_iterations must be positive".into()));
        }
        if !(self.rel_tolerance > 0.0 && self.rel_tolerance < 1.0) {
            return Err(Error::Config(format!(
                "em rel_tolerance {} outside (0, 1)",
                self.rel_tolerance
            )));
        }
        if !(self.ridge_scale >= 0.0 && self.ridge_scale.is_finite()) {
            return Err(Error::Config(format!(
                "bad em ridge_scale {}",
                self.ridge_scale
            )));
        }
        Ok(())
    }
}

/// A component restarted after collapsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reinit {
    pub iteration: usize,
    pub component: usize,
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: GmmModel,
    /// Average per-sample log-likelihood of the model after each iteration.
    /// Non-decreasing between reinitialization events.
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
    pub reinitialized: Vec<Reinit>,
}

impl EmFit {
    pub fn iterations(&self) -> usize {
        self.log_likelihood_trace.len()
    }
}

struct Params {
    weights: Vec<f64>,
    covariances: Vec<HermitianMatrix>,
    mixture: FactoredMixture,
}

struct Data<'a> {
    n: usize,
    m: usize,
    x: &'a [Complex64],
    /// Mean of `‖x‖² / N`, the fallback scale for ridge loading.
    scale: f64,
}

impl Data<'_> {
    fn row(&self, i: usize) -> &[Complex64] {
        &self.x[i * self.n..(i + 1) * self.n]
    }
}

/// Fits a `k`-component mixture to the channels of `ds`.
///
/// Each component may be reinitialized once after collapsing (summed
/// responsibility below 0.1); a second collapse of the same component fails
/// with [`Error::DegenerateComponent`].
pub fn fit_em(ds: &ChannelDataset, k: usize, cfg: &EmConfig) -> Result<EmFit> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::InvalidArgument(
            "number of components must be positive".into(),
        ));
    }
    if ds.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} samples cannot support {k} components",
            ds.len()
        )));
    }
    let n = ds.n_antennas();
    let flat: Vec<Complex64> = ds.channels().flatten().copied().collect();
    let m = ds.len();
    let scale = flat.iter().map(|v| v.norm_sqr()).sum::<f64>() / (m * n) as f64;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::DegenerateDataset(
            "channels are all zero or non-finite".into(),
        ));
    }
    let data = Data {
        n,
        m,
        x: &flat,
        scale,
    };

    let mut rng = stream_rng(cfg.seed, &[stream::EM, k as u64]);
    let mut resp = match cfg.init {
        InitStrategy::RandomResponsibility => random_responsibilities(m, k, &mut rng),
        InitStrategy::KmeansSeeded => {
            let labels = kmeans_labels(data.x, n, k, &mut rng);
            let mut r = vec![0.0; m * k];
            for (i, &l) in labels.iter().enumerate() {
                r[i * k + l] = 1.0;
            }
            r
        }
    };

    let mut reinitialized = Vec::new();
    let mut params = m_step(&data, &resp, k, cfg, 0, &mut rng, &mut reinitialized)?;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    for iteration in 0..cfg.max_iterations {
        let ll = e_step(&data, &params.mixture, &mut resp);
        let restarted = reinitialized
            .last()
            .is_some_and(|r: &Reinit| r.iteration == iteration);
        if let (Some(&prev), false) = (trace.last(), restarted) {
            if ll - prev < cfg.rel_tolerance * prev.abs() {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if iteration + 1 == cfg.max_iterations {
            break;
        }
        params = m_step(
            &data,
            &resp,
            k,
            cfg,
            iteration + 1,
            &mut rng,
            &mut reinitialized,
        )?;
    }

    let Params {
        weights,
        covariances,
        mixture,
    } = params;
    Ok(EmFit {
        model: GmmModel {
            weights,
            means: mixture.means,
            covariances,
        },
        log_likelihood_trace: trace,
        converged,
        reinitialized,
    })
}

fn random_responsibilities(m: usize, k: usize, rng: &mut SimRng) -> Vec<f64> {
    let mut r: Vec<f64> = (0..m * k).map(|_| rng.random::<f64>()).collect();
    for row in r.chunks_mut(k) {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
    }
    r
}

/// Overwrites `resp` with posteriors under `mix`; returns the average
/// per-sample log-likelihood.
fn e_step(data: &Data<'_>, mix: &FactoredMixture, resp: &mut [f64]) -> f64 {
    let k = mix.n_components();
    let mut ll = vec![0.0; data.m];
    par::for_each_row(resp, k, &mut ll, |i, row, ll_i| {
        let mut scratch = vec![Complex64::new(0.0, 0.0); k * data.n];
        mix.joint_log_densities(data.row(i), row, &mut scratch);
        let lse = log_sum_exp(row);
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
        *ll_i = lse;
    });
    ll.iter().sum::<f64>() / data.m as f64
}

enum ComponentUpdate {
    Fitted {
        mass: f64,
        mean: Vec<Complex64>,
        cov: HermitianMatrix,
    },
    Collapsed,
}

fn ridge_for(cov: &HermitianMatrix, ridge_scale: f64, data_scale: f64) -> f64 {
    let avg_diag = cov.trace() / cov.dim() as f64;
    // A component on a single point (or on identical points) has zero trace.
    let base = if avg_diag > 1e-12 * data_scale {
        avg_diag
    } else {
        data_scale
    };
    ridge_scale * base
}

fn update_component(
    data: &Data<'_>,
    resp: &[f64],
    k: usize,
    comp: usize,
    cfg: &EmConfig,
) -> ComponentUpdate {
    let n = data.n;
    let mass: f64 = (0..data.m).map(|i| resp[i * k + comp]).sum();
    if mass < COLLAPSE_MASS {
        return ComponentUpdate::Collapsed;
    }
    let mut mean = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..data.m {
        let w = resp[i * k + comp];
        if w != 0.0 {
            for (acc, x) in mean.iter_mut().zip(data.row(i)) {
                *acc += x * w;
            }
        }
    }
    mean.iter_mut().for_each(|v| *v /= mass);

    let mut acc = vec![Complex64::new(0.0, 0.0); n * n];
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..data.m {
        let w = resp[i * k + comp];
        if w == 0.0 {
            continue;
        }
        for ((di, x), mu) in d.iter_mut().zip(data.row(i)).zip(&mean) {
            *di = x - mu;
        }
        for a in 0..n {
            let wa = d[a] * w;
            let row = &mut acc[a * n..(a + 1) * n];
            for b in a..n {
                row[b] += wa * d[b].conj();
            }
        }
    }
    let mut cov = HermitianMatrix::from_upper_fn(n, |a, b| acc[a * n + b] / mass);
    cov.add_diagonal(ridge_for(&cov, cfg.ridge_scale, data.scale));
    ComponentUpdate::Fitted { mass, mean, cov }
}

fn m_step(
    data: &Data<'_>,
    resp: &[f64],
    k: usize,
    cfg: &EmConfig,
    iteration: usize,
    rng: &mut SimRng,
    reinitialized: &mut Vec<Reinit>,
) -> Result<Params> {
    let updates = par::map_range(k, |comp| update_component(data, resp, k, comp, cfg));

    let mut weights = vec![0.0; k];
    let mut means = vec![Vec::new(); k];
    let mut covariances = vec![HermitianMatrix::zeros(data.n); k];
    let mut collapsed = Vec::new();
    for (comp, update) in updates.into_iter().enumerate() {
        match update {
            ComponentUpdate::Fitted { mass, mean, cov } => {
                weights[comp] = mass / data.m as f64;
                means[comp] = mean;
                covariances[comp] = cov;
            }
            ComponentUpdate::Collapsed => collapsed.push(comp),
        }
    }
    // A collapsed component restarts at a random sample and splits off half
    // the weight of the component that currently explains that sample,
    // borrowing its covariance. A restart with a broad covariance would lose
    // every sample to the sharper surviving components straight away.
    for &comp in &collapsed {
        if reinitialized.iter().any(|r| r.component == comp) {
            return Err(Error::DegenerateComponent {
                component: comp,
                iteration,
            });
        }
        reinitialized.push(Reinit {
            iteration,
            component: comp,
        });
        let pick = rng.random_range(0..data.m);
        let owner = (0..k)
            .filter(|c| !collapsed.contains(c))
            .max_by(|&a, &b| resp[pick * k + a].total_cmp(&resp[pick * k + b]))
            .expect("collapsed components hold less than the total mass");
        weights[owner] *= 0.5;
        weights[comp] = weights[owner];
        means[comp] = data.row(pick).to_vec();
        covariances[comp] = covariances[owner].clone();
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let factors = covariances
        .iter()
        .map(|c| hermitian_cholesky(c, 0.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(Params {
        mixture: FactoredMixture {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            means,
            factors,
        },
        weights,
        covariances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{log_likelihood, sample_gmm};
    use crate::linalg::standard_complex_normal;
    use crate::rng::seeded_rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dataset(channels: Vec<Vec<Complex64>>) -> ChannelDataset {
        let n = channels[0].len();
        ChannelDataset::from_channels(n, channels).unwrap()
    }

    #[test]
    fn single_component_is_closed_form_ml() {
        let mut rng = seeded_rng(1);
        let n = 3;
        let xs: Vec<_> = (0..500)
            .map(|_| {
                let mut v = standard_complex_normal(&mut rng, n);
                v[0] += c(1.0, -0.5);
                v
            })
            .collect();
        let ds = dataset(xs.clone());
        let fit = fit_em(&ds, 1, &EmConfig::default()).unwrap();
        let model = &fit.model;
        assert_eq!(model.weights(), &[1.0]);

        let m = xs.len() as f64;
        let mean: Vec<Complex64> = (0..n)
            .map(|i| xs.iter().map(|x| x[i]).sum::<Complex64>() / m)
            .collect();
        for (a, b) in model.means()[0].iter().zip(&mean) {
            assert!((a - b).norm() < 1e-12);
        }
        let mut cov = HermitianMatrix::from_upper_fn(n, |i, j| {
            xs.iter()
                .map(|x| (x[i] - mean[i]) * (x[j] - mean[j]).conj())
                .sum::<Complex64>()
                / m
        });
        cov.add_diagonal(1e-6 * cov.trace() / n as f64);
        assert!(model.covariances()[0].frobenius_distance(&cov) < 1e-12 * cov.frobenius_norm());
        assert!(fit.converged);

        // Seed- and init-independent.
        for (seed, init) in [
            (5, InitStrategy::RandomResponsibility),
            (9, InitStrategy::KmeansSeeded),
        ] {
            let cfg = EmConfig {
                seed,
                init,
                ..EmConfig::default()
            };
            let other = fit_em(&ds, 1, &cfg).unwrap().model;
            assert!(other.covariances()[0].frobenius_distance(&model.covariances()[0]) < 1e-12);
            for (a, b) in other.means()[0].iter().zip(&model.means()[0]) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn recovers_two_separated_components() {
        let n = 2;
        let truth = GmmModel::new(
            vec![0.35, 0.65],
            vec![
                vec![c(10.0, 0.0), c(0.0, 10.0)],
                vec![c(-10.0, 0.0), c(0.0, -10.0)],
            ],
            vec![
                HermitianMatrix::identity(n),
                HermitianMatrix::scaled_identity(n, 1.0),
            ],
        )
        .unwrap();
        let xs = sample_gmm(&truth, &mut seeded_rng(2), 2000).unwrap();
        let ds = dataset(xs);
        for init in [
            InitStrategy::RandomResponsibility,
            InitStrategy::KmeansSeeded,
        ] {
            let cfg = EmConfig {
                init,
                seed: 3,
                ..EmConfig::default()
            };
            let fit = fit_em(&ds, 2, &cfg).unwrap();
            let est = &fit.model;
            // Match components by the sign of the first mean entry.
            let order = if est.means()[0][0].re > 0.0 {
                [0, 1]
            } else {
                [1, 0]
            };
            for (t, &e) in order.iter().enumerate() {
                let tm = &truth.means()[t];
                let em = &est.means()[e];
                let err: f64 = tm
                    .iter()
                    .zip(em)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                let scale: f64 = tm.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                assert!(err < 0.05 * scale, "{init:?}: mean error {err}");
                assert!((truth.weights()[t] - est.weights()[e]).abs() < 0.05);
            }
            assert!(fit.reinitialized.is_empty());
        }
    }

    #[test]
    fn trace_is_monotone_and_matches_log_likelihood() {
        let mut rng = seeded_rng(4);
        let n = 4;
        let xs: Vec<_> = (0..400)
            .map(|i| {
                let mut v = standard_complex_normal(&mut rng, n);
                let s = if i % 3 == 0 { 3.0 } else { 0.5 };
                v.iter_mut().for_each(|x| *x *= s);
                v
            })
            .collect();
        let ds = dataset(xs);
        let cfg = EmConfig {
            seed: 4,
            max_iterations: 200,
            ..EmConfig::default()
        };
        let fit = fit_em(&ds, 3, &cfg).unwrap();
        for w in fit.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
        let ll = log_likelihood(&fit.model, &ds).unwrap() / ds.len() as f64;
        let last = *fit.log_likelihood_trace.last().unwrap();
        assert!((ll - last).abs() < 1e-10 * ll.abs(), "{ll} vs {last}");
    }

    #[test]
    fn fits_are_reproducible() {
        let mut rng = seeded_rng(5);
        let ds = dataset(
            (0..300)
                .map(|_| standard_complex_normal(&mut rng, 3))
                .collect(),
        );
        let cfg = EmConfig {
            seed: 11,
            max_iterations: 30,
            ..EmConfig::default()
        };
        let a = fit_em(&ds, 4, &cfg).unwrap();
        let b = fit_em(&ds, 4, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log_likelihood_trace, b.log_likelihood_trace);
    }

    #[test]
    fn collapsed_component_is_reinitialized_then_rejected() {
        // Two distinct points and three components: k-means leaves one
        // cluster empty, which collapses at the first M-step. After the
        // restart the duplicate keeps losing mass and collapses again.
        let pts = [vec![c(5.0, 0.0)], vec![c(-5.0, 0.0)]];
        let xs: Vec<_> = (0..40).map(|i| pts[i % 2].clone()).collect();
        let ds = dataset(xs);
        let cfg = EmConfig {
            init: InitStrategy::KmeansSeeded,
            ..EmConfig::default()
        };
        match fit_em(&ds, 3, &cfg) {
            Err(Error::DegenerateComponent { .. }) => {}
            Ok(fit) => assert!(!fit.reinitialized.is_empty()),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let ds = dataset(vec![vec![c(1.0, 0.0)]; 3]);
        assert!(fit_em(&ds, 4, &EmConfig::default()).is_err());
        assert!(fit_em(&ds, 0, &EmConfig::default()).is_err());
        let bad = EmConfig {
            rel_tolerance: 1.5,
            ..EmConfig::default()
        };
        assert!(matches!(fit_em(&ds, 1, &bad), Err(Error::Config(_))));
        let zeros = dataset(vec![vec![c(0.0, 0.0)]; 3]);
        assert!(matches!(
            fit_em(&zeros, 1, &EmConfig::default()),
            Err(Error::DegenerateDataset(_))
        ));
    }
}
