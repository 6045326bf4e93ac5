//! Experiment configuration and its flat TOML file format.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{default_quadrature_points, ModelConfig};
use crate::estimators::EstimatorKind;
use crate::gmm::{EmConfig, InitStrategy};
use crate::{Error, Result};

/// Where the train and test channels come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Draw `n_train + n_test` samples from the spatial model; sample `i`
    /// depends only on the seed and `i`. Test samples keep their generating
    /// covariances so genie estimators can run.
    Generate {
        model: ModelConfig,
        n_train: usize,
        n_test: usize,
    },
    Files {
        train: PathBuf,
        test: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    pub estimators: Vec<EstimatorKind>,
    pub snr_db: Vec<f64>,
    pub k_grid: Option<Vec<usize>>,
    /// Mixture size for SNR sweeps.
    pub components: usize,
    /// EM settings; the seed is taken from [`ExperimentConfig::seed`].
    pub em: EmConfig,
    pub omp_oversampling: usize,
    /// Defaults to `min(N, 64)`.
    pub omp_max_sparsity: Option<usize>,
    /// Pre-fitted model used instead of fitting on the training set.
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// N = 16, K = 16, 20 000 / 2 000 samples. Minutes on a laptop.
    Desk,
    /// N = 128, K = 128, 190 000 / 10 000 samples. Hours.
    Full,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "full" => Ok(Self::Full),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (desk, full)"
            ))),
        }
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let (n, k, n_train, n_test) = match preset {
            Preset::Desk => (16, 16, 20_000, 2_000),
            Preset::Full => (128, 128, 190_000, 10_000),
        };
        let seed = 1;
        let mut model = ModelConfig::new(n, 1, seed);
        model.retain_covariances = true;
        Self {
            seed,
            data: DataSource::Generate {
                model,
                n_train,
                n_test,
            },
            estimators: EstimatorKind::ALL.to_vec(),
            snr_db: (-15..=40).step_by(5).map(f64::from).collect(),
            k_grid: Some(vec![1, 2, 4, 8, k]),
            components: k,
            em: EmConfig::default(),
            omp_oversampling: 4,
            omp_max_sparsity: None,
            model: None,
            output: None,
        }
    }

    pub fn n_antennas(&self) -> Option<usize> {
        match &self.data {
            DataSource::Generate { model, .. } => Some(model.antennas),
            DataSource::Files { .. } => None,
        }
    }

    /// EM settings with the experiment seed applied.
    pub fn em_config(&self) -> EmConfig {
        EmConfig {
            seed: self.seed,
            ..self.em.clone()
        }
    }

    /// Sets the seed everywhere it is used.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let DataSource::Generate { model, .. } = &mut self.data {
            model.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() {
            return Err(Error::Config("snr_db grid is empty".into()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite())
            || self.snr_db.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Config(
                "snr_db grid must be finite and strictly increasing".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.estimators {
            if !seen.insert(e) {
                return Err(Error::Config(format!("estimator '{e}' listed twice")));
            }
        }
        if let Some(grid) = &self.k_grid {
            if grid.is_empty() || grid.contains(&0) {
                return Err(Error::Config(
                    "k_grid must be non-empty and positive".into(),
                ));
            }
        }
        if self.components == 0 {
            return Err(Error::Config("components must be positive".into()));
        }
        if self.omp_oversampling == 0 {
            return Err(Error::Config("omp_oversampling must be positive".into()));
        }
        if self.omp_max_sparsity == Some(0) {
            return Err(Error::Config("omp_max_sparsity must be positive".into()));
        }
        self.em.validate()?;
        if let DataSource::Generate {
            model,
            n_train,
            n_test,
        } = &self.data
        {
            model.validate()?;
            if *n_test == 0 {
                return Err(Error::Config("n_test must be positive".into()));
            }
            if *n_train == 0
                && self.model.is_none()
                && self
                    .estimators
                    .iter()
                    .any(|e| !e.is_genie() && *e != EstimatorKind::LeastSquares)
            {
                return Err(Error::Config(
                    "n_train must be positive for trained estimators".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.resolve()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The configuration in the file format; parsing it back yields `self`.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(&RawConfig::from(self)).expect("configuration is always serializable")
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_toml_string())
    }
}

/// One flat table; every key optional and layered over a preset.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    antennas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clusters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spread_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quadrature_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_train: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_test: Option<usize>,
    estimators: Option<Vec<String>>,
    snr_db: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_grid: Option<Vec<usize>>,
    components: Option<usize>,
    em_max_iterations: Option<usize>,
    em_tolerance: Option<f64>,
    em_ridge: Option<f64>,
    em_init: Option<String>,
    omp_oversampling: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omp_max_sparsity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
}

fn init_name(init: InitStrategy) -> &'static str {
    match init {
        InitStrategy::RandomResponsibility => "random",
        InitStrategy::KmeansSeeded => "kmeans",
    }
}

impl RawConfig {
    fn resolve(self) -> Result<ExperimentConfig> {
        let preset = match &self.preset {
            Some(p) => p.parse()?,
            None => Preset::Desk,
        };
        let mut cfg = ExperimentConfig::preset(preset);

        let generation_keys = self.antennas.is_some()
            || self.clusters.is_some()
            || self.spread_deg.is_some()
            || self.quadrature_points.is_some()
            || self.n_train.is_some()
            || self.n_test.is_some();
        match (self.train, self.test) {
            (Some(train), Some(test)) => {
                if generation_keys {
                    return Err(Error::Config(
                        "generation keys cannot be combined with train/test files".into(),
                    ));
                }
                cfg.data = DataSource::Files { train, test };
            }
            (None, None) => {
                if let DataSource::Generate {
                    model,
                    n_train,
                    n_test,
                } = &mut cfg.data
                {
                    if let Some(n) = self.antennas {
                        model.antennas = n;
                        model.quadrature_points = default_quadrature_points(n);
                    }
                    if let Some(c) = self.clusters {
                        model.clusters = c;
                    }
                    if let Some(deg) = self.spread_deg {
                        model.spread = deg.to_radians();
                    }
                    if let Some(q) = self.quadrature_points {
                        model.quadrature_points = q;
                    }
                    if let Some(m) = self.n_train {
                        *n_train = m;
                    }
                    if let Some(m) = self.n_test {
                        *n_test = m;
                    }
                }
            }
            _ => {
                return Err(Error::Config(
                    "train and test files must be given together".into(),
                ))
            }
        }

        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Some(names) = self.estimators {
            cfg.estimators = names.iter().map(|n| n.parse()).collect::<Result<_>>()?;
        }
        if let Some(grid) = self.snr_db {
            cfg.snr_db = grid;
        }
        if self.k_grid.is_some() {
            cfg.k_grid = self.k_grid;
        }
        if let Some(k) = self.components {
            cfg.components = k;
        }
        if let Some(v) = self.em_max_iterations {
            cfg.em.max_iterations = v;
        }
        if let Some(v) = self.em_tolerance {
            cfg.em.rel_tolerance = v;
        }
        if let Some(v) = self.em_ridge {
            cfg.em.ridge_scale = v;
        }
        if let Some(name) = self.em_init {
            cfg.em.init = match name.as_str() {
                "random" => InitStrategy::RandomResponsibility,
                "kmeans" => InitStrategy::KmeansSeeded,
                other => {
                    return Err(Error::Config(format!(
                        "unknown em_init '{other}' (random, kmeans)"
                    )))
                }
            };
        }
        if let Some(v) = self.omp_oversampling {
            cfg.omp_oversampling = v;
        }
        if self.omp_max_sparsity.is_some() {
            cfg.omp_max_sparsity = self.omp_max_sparsity;
        }
        cfg.model = self.model;
        cfg.output = self.output;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<&ExperimentConfig> for RawConfig {
    fn from(cfg: &ExperimentConfig) -> Self {
        let mut raw = RawConfig {
            seed: Some(cfg.seed),
            estimators: Some(
                cfg.estimators
                    .iter()
                    .map(|e| e.as_str().to_string())
                    .collect(),
            ),
            snr_db: Some(cfg.snr_db.clone()),
            k_grid: cfg.k_grid.clone(),
            components: Some(cfg.components),
            em_max_iterations: Some(cfg.em.max_iterations),
            em_tolerance: Some(cfg.em.rel_tolerance),
            em_ridge: Some(cfg.em.ridge_scale),
            em_init: Some(init_name(cfg.em.init).to_string()),
            omp_oversampling: Some(cfg.omp_oversampling),
            omp_max_sparsity: cfg.omp_max_sparsity,
            model: cfg.model.clone(),
            output: cfg.output.clone(),
            ..RawConfig::default()
        };
        match &cfg.data {
            DataSource::Generate {
                model,
                n_train,
                n_test,
            } => {
                raw.antennas = Some(model.antennas);
                raw.clusters = Some(model.clusters);
                raw.spread_deg = Some(model.spread.to_degrees());
                raw.quadrature_points = Some(model.quadrature_points);
                raw.n_train = Some(*n_train);
                raw.n_test = Some(*n_test);
            }
            DataSource::Files { train, test } => {
                raw.train = Some(train.clone());
                raw.test = Some(test.clone());
            }
        }
        raw
    }
}
