//! Channel estimators for the observation model `y = h + n`.

mod omp;

pub use omp::{dft_dictionary, omp_genie, omp_path, Dictionary};

use std::fmt;
use std::str::FromStr;

use crate::dataset::ChannelDataset;
use crate::gmm::{FactoredMixture, GmmModel};
use crate::linalg::{
    check_dim, hermitian_cholesky, log_sum_exp, CholeskyFactor, Complex64, ComplexVector,
    HermitianMatrix,
};
use crate::{par, Error, Result};

/// Components whose responsibility is below this contribute nothing
/// measurable to the estimate and are skipped.
const NEGLIGIBLE_RESPONSIBILITY: f64 = 1e-22;

/// Additive noise `n ~ CN(0, Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    sigma_sq: f64,
    covariance: HermitianMatrix,
}

impl NoiseModel {
    /// `Σ = σ² I`.
    pub fn isotropic(sigma_sq: f64, n_antennas: usize) -> Result<Self> {
        if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance {sigma_sq} must be positive"
            )));
        }
        Ok(Self {
            sigma_sq,
            covariance: HermitianMatrix::scaled_identity(n_antennas, sigma_sq),
        })
    }

    /// Isotropic noise with `σ² = 10^(−snr_db / 10)`.
    pub fn from_snr_db(snr_db: f64, n_antennas: usize) -> Result<Self> {
        Self::isotropic(10f64.powf(-snr_db / 10.0), n_antennas)
    }

    /// General noise covariance; `sigma_sq` is its average diagonal.
    pub fn with_covariance(covariance: HermitianMatrix) -> Result<Self> {
        hermitian_cholesky(&covariance, covariance.default_ridge())?;
        let sigma_sq = covariance.trace() / covariance.dim() as f64;
        if sigma_sq.is_nan() || sigma_sq <= 0.0 {
            return Err(Error::InvalidArgument(
                "noise covariance has zero trace".into(),
            ));
        }
        Ok(Self {
            sigma_sq,
            covariance,
        })
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    pub fn covariance(&self) -> &HermitianMatrix {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    /// Linear SNR `1 / σ²` under unit per-antenna channel energy.
    pub fn snr(&self) -> f64 {
        1.0 / self.sigma_sq
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    LeastSquares,
    SampleCovariance,
    GenieLmmse,
    Gmm,
    GenieOmp,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        Self::LeastSquares,
        Self::SampleCovariance,
        Self::GenieLmmse,
        Self::Gmm,
        Self::GenieOmp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LeastSquares => "ls",
            Self::SampleCovariance => "sample_cov",
            Self::GenieLmmse => "genie_lmmse",
            Self::Gmm => "gmm",
            Self::GenieOmp => "genie_omp",
        }
    }

    /// Whether the estimator needs per-sample ground truth.
    pub fn is_genie(self) -> bool {
        matches!(self, Self::GenieLmmse | Self::GenieOmp)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Self::ALL.iter().map(|k| k.as_str()).collect();
                Error::Config(format!(
                    "unknown estimator '{s}' (known: {})",
                    known.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimateAux {
    /// Support size picked by the genie OMP search.
    Sparsity(usize),
    /// Largest responsibility of the mixture estimator.
    DominantResponsibility(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub channel: ComplexVector,
    pub estimator: EstimatorKind,
    pub aux: Option<EstimateAux>,
}

impl Estimate {
    fn plain(channel: ComplexVector, estimator: EstimatorKind) -> Self {
        Self {
            channel,
            estimator,
            aux: None,
        }
    }
}

/// Returns the observation unchanged.
pub fn ls_estimate(y: &[Complex64]) -> Estimate {
    Estimate::plain(y.to_vec(), EstimatorKind::LeastSquares)
}

/// `(1/M) Σ h_m h_mᴴ` without mean removal.
pub fn sample_covariance(ds: &ChannelDataset) -> Result<HermitianMatrix> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = ds.n_antennas();
    let mut acc = vec![Complex64::new(0.0, 0.0); n * n];
    for h in ds.channels() {
        for i in 0..n {
            let row = &mut acc[i * n..(i + 1) * n];
            for j in i..n {
                row[j] += h[i] * h[j].conj();
            }
        }
    }
    let m = ds.len() as f64;
    Ok(HermitianMatrix::from_upper_fn(n, |i, j| acc[i * n + j] / m))
}

/// `C (C + Σ)⁻¹ y` with a cached factor of `C + Σ`.
#[derive(Debug, Clone)]
pub struct LmmseFilter {
    cov: HermitianMatrix,
    factor: CholeskyFactor,
}

impl LmmseFilter {
    pub fn new(cov: &HermitianMatrix, noise: &NoiseModel) -> Result<Self> {
        let factor = hermitian_cholesky(&cov.try_add(noise.covariance())?, 0.0)?;
        Ok(Self {
            cov: cov.clone(),
            factor,
        })
    }

    pub fn apply(&self, y: &[Complex64]) -> Result<ComplexVector> {
        check_dim(self.cov.dim(), y.len())?;
        let mut x = y.to_vec();
        self.factor.forward_solve_in_place(&mut x);
        self.factor.backward_solve_in_place(&mut x);
        Ok(self.cov.mul_vec(&x))
    }
}

/// Single-shot LMMSE; labelled as the sample-covariance estimator. Use
/// [`genie_lmmse_estimate`] when `cov` is the true channel covariance.
pub fn lmmse_estimate(
    cov: &HermitianMatrix,
    noise: &NoiseModel,
    y: &[Complex64],
) -> Result<Estimate> {
    Ok(Estimate::plain(
        LmmseFilter::new(cov, noise)?.apply(y)?,
        EstimatorKind::SampleCovariance,
    ))
}

pub fn genie_lmmse_estimate(
    true_cov: &HermitianMatrix,
    noise: &NoiseModel,
    y: &[Complex64],
) -> Result<Estimate> {
    Ok(Estimate::plain(
        LmmseFilter::new(true_cov, noise)?.apply(y)?,
        EstimatorKind::GenieLmmse,
    ))
}

/// Conditional-mean estimator under a mixture prior, with the factors of
/// every `C_k + Σ` computed once.
#[derive(Debug, Clone)]
pub struct GmmCme {
    receive: FactoredMixture,
    covariances: Vec<HermitianMatrix>,
}

impl GmmCme {
    pub fn new(model: &GmmModel, noise: &NoiseModel) -> Result<Self> {
        check_dim(model.dim(), noise.dim())?;
        Ok(Self {
            receive: model.factored(Some(noise.covariance()))?,
            covariances: model.covariances().to_vec(),
        })
    }

    /// `Σ_k p(k|y) (C_k (C_k + Σ)⁻¹ (y − μ_k) + μ_k)`.
    pub fn estimate(&self, y: &[Complex64]) -> Result<Estimate> {
        let n = self.receive.dim();
        check_dim(n, y.len())?;
        let k = self.receive.n_components();
        let mut logs = vec![0.0; k];
        let mut whitened = vec![Complex64::new(0.0, 0.0); k * n];
        self.receive
            .joint_log_densities(y, &mut logs, &mut whitened);
        let lse = log_sum_exp(&logs);

        let mut h = vec![Complex64::new(0.0, 0.0); n];
        let mut dominant = 0.0f64;
        let mut total = 0.0;
        for (c, log) in logs.iter().enumerate() {
            let r = (log - lse).exp();
            total += r;
            dominant = dominant.max(r);
            if r < NEGLIGIBLE_RESPONSIBILITY {
                continue;
            }
            let z = &mut whitened[c * n..(c + 1) * n];
            self.receive.factor(c).backward_solve_in_place(z);
            let shrunk = self.covariances[c].mul_vec(z);
            for ((hi, si), mi) in h.iter_mut().zip(&shrunk).zip(self.receive.mean(c)) {
                *hi += (si + mi) * r;
            }
        }
        debug_assert!(
            (total - 1.0).abs() < 1e-9,
            "responsibilities sum to {total}"
        );
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "observation produced a non-finite estimate".into(),
            ));
        }
        Ok(Estimate {
            channel: h,
            estimator: EstimatorKind::Gmm,
            aux: Some(EstimateAux::DominantResponsibility(dominant)),
        })
    }

    /// Estimates for many observations, in input order.
    pub fn estimate_batch(&self, ys: &[ComplexVector]) -> Result<Vec<Estimate>> {
        par::map_range(ys.len(), |i| self.estimate(&ys[i]))
            .into_iter()
            .collect()
    }
}

pub fn gmm_cme_estimate(model: &GmmModel, noise: &NoiseModel, y: &[Complex64]) -> Result<Estimate> {
    GmmCme::new(model, noise)?.estimate(y)
}
