//! Monte Carlo sweeps over SNR and mixture size.
//!
//! Every estimator in a sweep sees the same noisy observations: the noise
//! for test sample `m` at SNR index `s` comes from its own stream keyed by
//! `(seed, s, m)`. Per-sample work runs in parallel and is reduced in index
//! order, so results do not depend on the thread count.

mod config;
mod csv;

pub use config::{DataSource, ExperimentConfig, Preset};
pub use csv::{emit_csv, render_csv};

use std::time::Instant;

use crate::channel::generate_samples;
use crate::dataset::{normalize_jointly, read_dataset, ChannelDataset};
use crate::estimators::{
    dft_dictionary, omp_genie, sample_covariance, Dictionary, EstimatorKind, GmmCme, LmmseFilter,
    NoiseModel,
};
use crate::gmm::{fit_em, load_model, GmmModel};
use crate::linalg::{check_dim, distance_sqr, standard_complex_normal, Complex64, ComplexVector};
use crate::rng::{stream, stream_rng};
use crate::{par, Error, Result};

/// Largest support searched by the genie OMP unless configured otherwise.
pub const DEFAULT_OMP_SPARSITY_CAP: usize = 64;

/// `(1/(M·N)) Σ_m ‖h_m − ĥ_m‖²`.
pub fn normalized_mse<T, E>(truths: &[T], estimates: &[E]) -> Result<f64>
where
    T: AsRef<[Complex64]>,
    E: AsRef<[Complex64]>,
{
    if truths.len() != estimates.len() || truths.is_empty() {
        return Err(Error::LengthMismatch {
            truths: truths.len(),
            estimates: estimates.len(),
        });
    }
    let n = truths[0].as_ref().len();
    let mut total = 0.0;
    for (h, e) in truths.iter().zip(estimates) {
        check_dim(n, h.as_ref().len())?;
        check_dim(n, e.as_ref().len())?;
        total += distance_sqr(h.as_ref(), e.as_ref());
    }
    Ok(total / (truths.len() * n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    SnrDb,
    KComponents,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepMetadata {
    /// The effective configuration in file format.
    pub config: String,
    pub seed: u64,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub axis_values: Vec<f64>,
    /// Normalized MSE per column, each aligned with `axis_values`.
    pub columns: Vec<(String, Vec<f64>)>,
    pub metadata: SweepMetadata,
}

impl SweepResult {
    pub fn mse(&self, column: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(name, _)| name == column)
            .map(|(_, v)| v.as_slice())
    }
}

/// Train and test sets on a shared normalization.
///
/// Generated data uses sample indices `0..n_train` for training and the
/// following `n_test` indices for testing; only test samples keep their
/// covariances.
pub fn load_or_generate(cfg: &ExperimentConfig) -> Result<(ChannelDataset, ChannelDataset)> {
    let (mut train, mut test) = match &cfg.data {
        DataSource::Generate {
            model,
            n_train,
            n_test,
        } => {
            let train_cfg = crate::channel::ModelConfig {
                retain_covariances: false,
                ..model.clone()
            };
            let train =
                ChannelDataset::new(model.antennas, generate_samples(&train_cfg, 0..*n_train)?)?;
            let test = ChannelDataset::new(
                model.antennas,
                generate_samples(model, *n_train..n_train + n_test)?,
            )?;
            (train, test)
        }
        DataSource::Files { train, test } => (read_dataset(train)?, read_dataset(test)?),
    };
    check_dim(test.n_antennas(), train.n_antennas())?;
    normalize_jointly(&mut [&mut train, &mut test])?;
    Ok((train, test))
}

/// Noisy observations of every test channel at one SNR grid index.
pub fn observe(
    test: &ChannelDataset,
    noise: &NoiseModel,
    seed: u64,
    snr_index: usize,
) -> Vec<ComplexVector> {
    let sd = noise.sigma_sq().sqrt();
    par::map_range(test.len(), |m| {
        let mut rng = stream_rng(seed, &[stream::NOISE, snr_index as u64, m as u64]);
        let w = standard_complex_normal(&mut rng, test.n_antennas());
        test.samples()[m]
            .channel
            .iter()
            .zip(&w)
            .map(|(h, n)| h + n * sd)
            .collect()
    })
}

/// Shared state for evaluating one estimator at one noise level.
struct Trained<'a> {
    sample_cov: Option<LmmseFilter>,
    gmm: Option<GmmCme>,
    dictionary: Option<&'a Dictionary>,
    omp_sparsity: usize,
}

fn evaluate(
    kind: EstimatorKind,
    trained: &Trained<'_>,
    test: &ChannelDataset,
    noise: &NoiseModel,
    ys: &[ComplexVector],
) -> Result<f64> {
    let estimates: Vec<ComplexVector> = match kind {
        EstimatorKind::LeastSquares => return normalized_mse(&channels(test), ys),
        EstimatorKind::SampleCovariance => {
            let filter = trained
                .sample_cov
                .as_ref()
                .expect("sample covariance prepared");
            collect(par::map_range(ys.len(), |m| filter.apply(&ys[m])))?
        }
        EstimatorKind::GenieLmmse => collect(par::map_range(ys.len(), |m| {
            let cov = test.samples()[m]
                .covariance
                .as_ref()
                .ok_or_else(|| Error::Config("genie LMMSE needs test covariances".into()))?;
            LmmseFilter::new(cov, noise)?.apply(&ys[m])
        }))?,
        EstimatorKind::Gmm => {
            let cme = trained.gmm.as_ref().expect("mixture prepared");
            cme.estimate_batch(ys)?
                .into_iter()
                .map(|e| e.channel)
                .collect()
        }
        EstimatorKind::GenieOmp => {
            let dict = trained.dictionary.expect("dictionary prepared");
            collect(par::map_range(ys.len(), |m| {
                omp_genie(
                    &ys[m],
                    dict,
                    &test.samples()[m].channel,
                    trained.omp_sparsity,
                )
                .map(|e| e.channel)
            }))?
        }
    };
    normalized_mse(&channels(test), &estimates)
}

fn channels(ds: &ChannelDataset) -> Vec<&[Complex64]> {
    ds.channels().collect()
}

fn collect(items: Vec<Result<ComplexVector>>) -> Result<Vec<ComplexVector>> {
    items.into_iter().collect()
}

fn check_genie(cfg: &ExperimentConfig, test: &ChannelDataset) -> Result<()> {
    if cfg.estimators.contains(&EstimatorKind::GenieLmmse) && !test.has_covariances() {
        return Err(Error::Config(
            "genie_lmmse requested but the test set has no covariances".into(),
        ));
    }
    Ok(())
}

fn omp_sparsity(cfg: &ExperimentConfig, n: usize) -> Result<usize> {
    let cap = n.min(n * cfg.omp_oversampling);
    let s = cfg
        .omp_max_sparsity
        .unwrap_or(n.min(DEFAULT_OMP_SPARSITY_CAP));
    if s > cap {
        return Err(Error::Config(format!(
            "omp_max_sparsity {s} exceeds min(N, L) = {cap}"
        )));
    }
    Ok(s)
}

fn fit_or_load(cfg: &ExperimentConfig, train: &ChannelDataset, k: usize) -> Result<GmmModel> {
    match &cfg.model {
        Some(path) => {
            let model = load_model(path)?;
            check_dim(train.n_antennas(), model.dim())?;
            Ok(model)
        }
        None => Ok(fit_em(train, k, &cfg.em_config())?.model),
    }
}

fn metadata(cfg: &ExperimentConfig, start: Instant) -> SweepMetadata {
    SweepMetadata {
        config: cfg.to_toml_string(),
        seed: cfg.seed,
        runtime_secs: start.elapsed().as_secs_f64(),
    }
}

fn uses(cfg: &ExperimentConfig, kind: EstimatorKind) -> bool {
    cfg.estimators.contains(&kind)
}

/// Normalized MSE of each configured estimator at each SNR, on the data
/// described by `cfg`.
pub fn run_snr_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let (train, test) = load_or_generate(cfg)?;
    run_snr_sweep_on(cfg, &train, &test)
}

/// Like [`run_snr_sweep`] on given, already normalized datasets.
pub fn run_snr_sweep_on(
    cfg: &ExperimentConfig,
    train: &ChannelDataset,
    test: &ChannelDataset,
) -> Result<SweepResult> {
    let start = Instant::now();
    cfg.validate()?;
    check_genie(cfg, test)?;
    let n = test.n_antennas();
    check_dim(n, train.n_antennas())?;

    let sample_cov = if uses(cfg, EstimatorKind::SampleCovariance) {
        Some(sample_covariance(train)?)
    } else {
        None
    };
    let model = if uses(cfg, EstimatorKind::Gmm) {
        Some(fit_or_load(cfg, train, cfg.components)?)
    } else {
        None
    };
    let dictionary = if uses(cfg, EstimatorKind::GenieOmp) {
        Some(dft_dictionary(n, cfg.omp_oversampling)?)
    } else {
        None
    };
    let sparsity = omp_sparsity(cfg, n)?;

    let mut columns: Vec<(String, Vec<f64>)> = cfg
        .estimators
        .iter()
        .map(|e| (e.as_str().to_string(), Vec::with_capacity(cfg.snr_db.len())))
        .collect();
    for (s, &snr) in cfg.snr_db.iter().enumerate() {
        let noise = NoiseModel::from_snr_db(snr, n)?;
        let ys = observe(test, &noise, cfg.seed, s);
        let trained = Trained {
            sample_cov: sample_cov
                .as_ref()
                .map(|c| LmmseFilter::new(c, &noise))
                .transpose()?,
            gmm: model.as_ref().map(|m| GmmCme::new(m, &noise)).transpose()?,
            dictionary: dictionary.as_ref(),
            omp_sparsity: sparsity,
        };
        for (kind, (_, column)) in cfg.estimators.iter().zip(columns.iter_mut()) {
            column.push(evaluate(*kind, &trained, test, &noise, &ys)?);
        }
    }
    Ok(SweepResult {
        axis: SweepAxis::SnrDb,
        axis_values: cfg.snr_db.clone(),
        columns,
        metadata: metadata(cfg, start),
    })
}

/// Mixture-estimator MSE against the number of components, one column per
/// `(estimator, SNR)` pair named `<estimator>@<snr>dB`. Baselines do not
/// depend on K and repeat their value down the column.
pub fn run_k_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let (train, test) = load_or_generate(cfg)?;
    run_k_sweep_on(cfg, &train, &test)
}

pub fn run_k_sweep_on(
    cfg: &ExperimentConfig,
    train: &ChannelDataset,
    test: &ChannelDataset,
) -> Result<SweepResult> {
    let start = Instant::now();
    cfg.validate()?;
    let grid = cfg
        .k_grid
        .clone()
        .ok_or_else(|| Error::Config("k sweep needs a k_grid".into()))?;
    if !uses(cfg, EstimatorKind::Gmm) {
        return Err(Error::Config("k sweep needs the gmm estimator".into()));
    }
    if cfg.model.is_some() {
        return Err(Error::Config(
            "k sweep fits its own models; remove the model key".into(),
        ));
    }
    check_genie(cfg, test)?;
    let n = test.n_antennas();
    check_dim(n, train.n_antennas())?;

    let models = grid
        .iter()
        .map(|&k| fit_or_load(cfg, train, k))
        .collect::<Result<Vec<_>>>()?;
    let sample_cov = if uses(cfg, EstimatorKind::SampleCovariance) {
        Some(sample_covariance(train)?)
    } else {
        None
    };
    let dictionary = if uses(cfg, EstimatorKind::GenieOmp) {
        Some(dft_dictionary(n, cfg.omp_oversampling)?)
    } else {
        None
    };
    let sparsity = omp_sparsity(cfg, n)?;

    let mut columns = Vec::new();
    for (s, &snr) in cfg.snr_db.iter().enumerate() {
        let noise = NoiseModel::from_snr_db(snr, n)?;
        let ys = observe(test, &noise, cfg.seed, s);
        let mut trained = Trained {
            sample_cov: sample_cov
                .as_ref()
                .map(|c| LmmseFilter::new(c, &noise))
                .transpose()?,
            gmm: None,
            dictionary: dictionary.as_ref(),
            omp_sparsity: sparsity,
        };
        for kind in &cfg.estimators {
            let name = format!("{kind}@{snr}dB");
            let values = if *kind == EstimatorKind::Gmm {
                models
                    .iter()
                    .map(|m| {
                        trained.gmm = Some(GmmCme::new(m, &noise)?);
                        evaluate(*kind, &trained, test, &noise, &ys)
                    })
                    .collect::<Result<Vec<_>>>()?
            } else {
                vec![evaluate(*kind, &trained, test, &noise, &ys)?; grid.len()]
            };
            columns.push((name, values));
        }
    }
    Ok(SweepResult {
        axis: SweepAxis::KComponents,
        axis_values: grid.iter().map(|&k| k as f64).collect(),
        columns,
        metadata: metadata(cfg, start),
    })
}

/// Per-sample squared error `‖h − ĥ‖² / N` of the mixture estimator at one
/// SNR, with noise drawn as in a sweep at grid index 0.
pub fn gmm_sample_errors(
    model: &GmmModel,
    test: &ChannelDataset,
    snr_db: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = test.n_antennas();
    check_dim(n, model.dim())?;
    let noise = NoiseModel::from_snr_db(snr_db, n)?;
    let ys = observe(test, &noise, seed, 0);
    let estimates = GmmCme::new(model, &noise)?.estimate_batch(&ys)?;
    Ok(test
        .channels()
        .zip(&estimates)
        .map(|(h, e)| distance_sqr(h, &e.channel) / n as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::standard_complex_normal;
    use crate::rng::seeded_rng;

    fn small_config(estimators: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            "antennas = 8\nclusters = 2\nn_train = 600\nn_test = 300\ncomponents = 3\n\
             k_grid = [1, 2]\nsnr_db = [0.0, 10.0]\nem_max_iterations = 40\nestimators = {estimators}"
        ))
        .unwrap()
    }

    #[test]
    fn mse_basics() {
        let mut rng = seeded_rng(1);
        let hs: Vec<_> = (0..2000)
            .map(|_| standard_complex_normal(&mut rng, 16))
            .collect();
        assert_eq!(normalized_mse(&hs, &hs).unwrap(), 0.0);
        let zeros = vec![vec![Complex64::new(0.0, 0.0); 16]; 2000];
        let ds = crate::dataset::normalize_dataset(&ChannelDataset::from_channels(16, hs).unwrap())
            .unwrap();
        let hs: Vec<_> = ds.channels().collect();
        assert!((normalized_mse(&hs, &zeros).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            normalized_mse(&hs, &zeros[..3]),
            Err(Error::LengthMismatch { .. })
        ));
        let empty: Vec<Vec<Complex64>> = Vec::new();
        assert!(normalized_mse(&empty, &empty).is_err());
    }

    #[test]
    fn ls_only_sweep_tracks_inverse_snr() {
        let cfg = small_config("[\"ls\"]");
        let r = run_snr_sweep(&cfg).unwrap();
        assert_eq!(r.axis, SweepAxis::SnrDb);
        for (snr, mse) in r.axis_values.iter().zip(r.mse("ls").unwrap()) {
            let target = 10f64.powf(-snr / 10.0);
            assert!((mse / target - 1.0).abs() < 0.05, "{snr}: {mse}");
        }
    }

    #[test]
    fn sweeps_are_reproducible_and_ordered() {
        let cfg = small_config("[\"ls\", \"sample_cov\", \"genie_lmmse\", \"gmm\", \"genie_omp\"]");
        let a = run_snr_sweep(&cfg).unwrap();
        let b = run_snr_sweep(&cfg).unwrap();
        assert_eq!(render_csv(&a).unwrap(), render_csv(&b).unwrap());
        for i in 0..2 {
            let genie = a.mse("genie_lmmse").unwrap()[i];
            for other in ["ls", "sample_cov", "gmm"] {
                assert!(
                    genie <= a.mse(other).unwrap()[i] * 1.02,
                    "{other} beats genie"
                );
            }
            assert!(a.mse("genie_omp").unwrap()[i] <= a.mse("ls").unwrap()[i]);
        }
    }

    #[test]
    fn k_sweep_columns() {
        let cfg = small_config("[\"gmm\", \"ls\"]");
        let r = run_k_sweep(&cfg).unwrap();
        assert_eq!(r.axis_values, vec![1.0, 2.0]);
        let names: Vec<_> = r.columns.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, vec!["gmm@0dB", "ls@0dB", "gmm@10dB", "ls@10dB"]);
        let ls = r.mse("ls@10dB").unwrap();
        assert_eq!(ls[0], ls[1]);
    }

    #[test]
    fn config_errors() {
        let cfg = small_config("[\"ls\"]");
        assert!(matches!(run_k_sweep(&cfg), Err(Error::Config(_))));

        let mut rng = seeded_rng(2);
        let plain = ChannelDataset::from_channels(
            4,
            (0..20)
                .map(|_| standard_complex_normal(&mut rng, 4))
                .collect(),
        )
        .unwrap();
        let genie = small_config("[\"genie_lmmse\"]");
        assert!(matches!(
            run_snr_sweep_on(&genie, &plain, &plain),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn observations_depend_only_on_indices() {
        let mut rng = seeded_rng(3);
        let ds = ChannelDataset::from_channels(
            4,
            (0..10)
                .map(|_| standard_complex_normal(&mut rng, 4))
                .collect(),
        )
        .unwrap();
        let noise = NoiseModel::from_snr_db(0.0, 4).unwrap();
        let a = observe(&ds, &noise, 9, 1);
        let b = observe(&ds, &noise, 9, 1);
        let c = observe(&ds, &noise, 9, 2);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
