//! Circularly-symmetric complex Gaussian mixture models.
//!
//! A model is `f(h) = Σ_k p(k) CN(h; μ_k, C_k)`. Observing `y = h + n` with
//! `n ~ CN(0, Σ)` gives the receive-signal mixture with covariances
//! `C_k + Σ`; its posterior component probabilities are the
//! responsibilities used by the conditional-mean estimator.

mod em;
mod io;
mod kmeans;

pub use em::{fit_em, EmConfig, EmFit, InitStrategy};
pub use io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::dataset::ChannelDataset;
use crate::linalg::{
    check_dim, hermitian_cholesky, log_normalizer, log_sum_exp, sample_gaussian,
    sample_with_factor, CholeskyFactor, Complex64, ComplexVector, HermitianMatrix,
};
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<ComplexVector>,
    covariances: Vec<HermitianMatrix>,
}

impl GmmModel {
    /// Validates shapes and weights. Weights must be nonnegative and sum to
    /// one within 1e-9; they are renormalized exactly. Every covariance must
    /// admit a Cholesky factor with the default ridge.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<ComplexVector>,
        covariances: Vec<HermitianMatrix>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covariances.len() != k {
            return Err(Error::InvalidArgument(format!(
                "mixture needs matching nonzero counts: {k} weights, {} means, {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        let n = means[0].len();
        for (m, c) in means.iter().zip(&covariances) {
            check_dim(n, m.len())?;
            check_dim(n, c.dim())?;
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| w.is_nan() || *w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "weights must be nonnegative and sum to one (sum = {total})"
            )));
        }
        for c in &covariances {
            hermitian_cholesky(c, c.default_ridge())?;
        }
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
            means,
            covariances,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[ComplexVector] {
        &self.means
    }

    pub fn covariances(&self) -> &[HermitianMatrix] {
        &self.covariances
    }

    /// The mixture with every covariance replaced by `C_k + noise`.
    pub fn receive_pdf(&self, noise: &HermitianMatrix) -> Result<GmmModel> {
        check_dim(self.dim(), noise.dim())?;
        Ok(GmmModel {
            weights: self.weights.clone(),
            means: self.means.clone(),
            covariances: self
                .covariances
                .iter()
                .map(|c| c.try_add(noise))
                .collect::<Result<_>>()?,
        })
    }

    /// Mixture with precomputed Cholesky factors, optionally of `C_k + noise`.
    pub fn factored(&self, noise: Option<&HermitianMatrix>) -> Result<FactoredMixture> {
        let factors = self
            .covariances
            .iter()
            .map(|c| match noise {
                Some(s) => hermitian_cholesky(&c.try_add(s)?, 0.0),
                None => hermitian_cholesky(c, 0.0),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FactoredMixture {
            log_weights: self.weights.iter().map(|w| w.ln()).collect(),
            means: self.means.clone(),
            factors,
        })
    }
}

/// Mixture weights, means and covariance factors ready for repeated density
/// evaluation.
#[derive(Debug, Clone)]
pub struct FactoredMixture {
    log_weights: Vec<f64>,
    means: Vec<ComplexVector>,
    factors: Vec<CholeskyFactor>,
}

impl FactoredMixture {
    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.means.len()
    }

    pub fn factor(&self, k: usize) -> &CholeskyFactor {
        &self.factors[k]
    }

    pub fn mean(&self, k: usize) -> &[Complex64] {
        &self.means[k]
    }

    /// Writes `ln p(k) + ln CN(x; μ_k, ·)` into `out` and, for each
    /// component, the whitened residual `L_k⁻¹ (x − μ_k)` into `whitened`
    /// (row `k`, length `N`).
    pub(crate) fn joint_log_densities(
        &self,
        x: &[Complex64],
        out: &mut [f64],
        whitened: &mut [Complex64],
    ) {
        let n = self.dim();
        let norm = log_normalizer(n);
        for k in 0..self.n_components() {
            let z = &mut whitened[k * n..(k + 1) * n];
            for ((zi, xi), mi) in z.iter_mut().zip(x).zip(&self.means[k]) {
                *zi = xi - mi;
            }
            if self.log_weights[k] == f64::NEG_INFINITY {
                out[k] = f64::NEG_INFINITY;
                continue;
            }
            let f = &self.factors[k];
            f.forward_solve_in_place(z);
            let q: f64 = z.iter().map(|v| v.norm_sqr()).sum();
            out[k] = self.log_weights[k] + norm - f.log_det() - q;
        }
    }

    /// `ln f(x)` by log-sum-exp over components.
    pub fn log_density(&self, x: &[Complex64]) -> f64 {
        let k = self.n_components();
        let mut logs = vec![0.0; k];
        let mut scratch = vec![Complex64::new(0.0, 0.0); k * self.dim()];
        self.joint_log_densities(x, &mut logs, &mut scratch);
        log_sum_exp(&logs)
    }

    /// Posterior component probabilities `p(k | x)`.
    pub fn posteriors(&self, x: &[Complex64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let k = self.n_components();
        let mut logs = vec![0.0; k];
        let mut scratch = vec![Complex64::new(0.0, 0.0); k * self.dim()];
        self.joint_log_densities(x, &mut logs, &mut scratch);
        Ok(normalize_log_weights(&logs))
    }
}

/// `exp(v − logsumexp(v))`.
pub(crate) fn normalize_log_weights(logs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logs);
    logs.iter().map(|v| (v - lse).exp()).collect()
}

/// `Σ_m ln Σ_k p(k) CN(h_m; μ_k, C_k)`.
pub fn log_likelihood(model: &GmmModel, ds: &ChannelDataset) -> Result<f64> {
    check_dim(model.dim(), ds.n_antennas())?;
    let mix = model.factored(None)?;
    let per_sample = par::map_range(ds.len(), |m| mix.log_density(&ds.samples()[m].channel));
    Ok(per_sample.iter().sum())
}

/// `p(k | y) ∝ p(k) CN(y; μ_k, C_k + Σ)`.
pub fn responsibilities(
    model: &GmmModel,
    y: &[Complex64],
    noise: &HermitianMatrix,
) -> Result<Vec<f64>> {
    check_dim(model.dim(), y.len())?;
    model.factored(Some(noise))?.posteriors(y)
}

/// Draws a component index from the weights, then a Gaussian sample from that
/// component. A single-component model delegates to [`sample_gaussian`].
pub fn sample_gmm<R: Rng + ?Sized>(
    model: &GmmModel,
    rng: &mut R,
    count: usize,
) -> Result<Vec<ComplexVector>> {
    if model.n_components() == 1 {
        return sample_gaussian(&model.means[0], &model.covariances[0], rng, count);
    }
    Ok(sample_gmm_labelled(model, rng, count)?
        .into_iter()
        .map(|(_, h)| h)
        .collect())
}

/// Like [`sample_gmm`] but also returns the component each draw came from.
pub fn sample_gmm_labelled<R: Rng + ?Sized>(
    model: &GmmModel,
    rng: &mut R,
    count: usize,
) -> Result<Vec<(usize, ComplexVector)>> {
    let index = WeightedIndex::new(&model.weights)
        .map_err(|e| Error::InvalidArgument(format!("mixture weights: {e}")))?;
    let factors = model
        .covariances
        .iter()
        .map(|c| hermitian_cholesky(c, c.default_ridge()))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..count)
        .map(|_| {
            let k = index.sample(rng);
            (k, sample_with_factor(&model.means[k], &factors[k], rng))
        })
        .collect())
}
