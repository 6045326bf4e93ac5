use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use chanest::channel::generate_samples;
use chanest::dataset::{
    normalize_dataset, read_dataset, split_dataset, write_dataset, ChannelDataset,
};
use chanest::gmm::{fit_em, load_model, save_model};
use chanest::harness::{
    gmm_sample_errors, render_csv, run_k_sweep, run_snr_sweep, DataSource, ExperimentConfig,
    SweepResult,
};
use chanest::rng::{stream, stream_rng};

/// Channel estimation with Gaussian mixture priors: data generation, model
/// fitting and Monte Carlo sweeps.
#[derive(Parser, Debug)]
#[command(name = "chanest", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Experiment config file (flat TOML); defaults to the desk preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; results go to stdout when omitted and a sink is optional.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw channels from the spatial model and write a dataset file.
    Generate {
        /// Number of channels (defaults to n_train + n_test from the config).
        #[arg(long)]
        samples: Option<usize>,
        /// Store each sample's generating covariance.
        #[arg(long)]
        keep_covariances: bool,
        /// Write `<out>.train` and `<out>.test` with this training fraction.
        #[arg(long)]
        split: Option<f64>,
    },
    /// Fit a Gaussian mixture to a dataset with EM and write the model.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Number of mixture components (defaults to the config value).
        #[arg(long)]
        components: Option<usize>,
    },
    /// Per-sample squared errors of the mixture estimator at one SNR.
    Estimate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        snr_db: f64,
    },
    /// Normalized MSE of each estimator across the SNR grid, as CSV.
    SweepSnr,
    /// Normalized MSE against the number of mixture components, as CSV.
    SweepK,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    configure_threads(cli.global.threads)?;

    let mut cfg = match &cli.global.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &cli.global.out {
        cfg.output = Some(out.clone());
    }
    cfg.validate()?;
    eprintln!("# effective configuration\n{cfg}# seed = {}", cfg.seed);

    match cli.command {
        Command::Generate {
            samples,
            keep_covariances,
            split,
        } => generate(&cfg, samples, keep_covariances, split),
        Command::Fit { data, components } => fit(&cfg, &data, components),
        Command::Estimate {
            model,
            data,
            snr_db,
        } => estimate(&cfg, &model, &data, snr_db),
        Command::SweepSnr => sweep(&cfg, run_snr_sweep(&cfg)?),
        Command::SweepK => sweep(&cfg, run_k_sweep(&cfg)?),
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(threads: Option<usize>) -> Result<()> {
    if threads.is_some_and(|n| n != 1) {
        log::warn!("built without parallel support; --threads is ignored");
    }
    Ok(())
}

fn require_out(cfg: &ExperimentConfig) -> Result<&Path> {
    cfg.output
        .as_deref()
        .context("this command writes a file; pass --out or set output in the config")
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn generate(
    cfg: &ExperimentConfig,
    samples: Option<usize>,
    keep_covariances: bool,
    split: Option<f64>,
) -> Result<()> {
    let out = require_out(cfg)?;
    let DataSource::Generate {
        model,
        n_train,
        n_test,
    } = &cfg.data
    else {
        bail!("generate needs generation settings, not train/test files");
    };
    let count = samples.unwrap_or(n_train + n_test);
    let model = chanest::channel::ModelConfig {
        retain_covariances: keep_covariances,
        ..model.clone()
    };
    eprintln!(
        "# generate: samples = {count}, keep_covariances = {keep_covariances}, split = {split:?}"
    );
    log::info!("drawing {count} channels with {} antennas", model.antennas);
    let ds = normalize_dataset(&ChannelDataset::new(
        model.antennas,
        generate_samples(&model, 0..count)?,
    )?)?;
    match split {
        None => {
            write_dataset(&ds, out)?;
            log::info!("wrote {}", out.display());
        }
        Some(fraction) => {
            let mut rng = stream_rng(cfg.seed, &[stream::SPLIT]);
            let (train, test) = split_dataset(&ds, fraction, &mut rng)?;
            for (part, suffix) in [(&train, ".train"), (&test, ".test")] {
                let path = with_suffix(out, suffix);
                write_dataset(part, &path)?;
                log::info!("wrote {} samples to {}", part.len(), path.display());
            }
        }
    }
    Ok(())
}

fn fit(cfg: &ExperimentConfig, data: &Path, components: Option<usize>) -> Result<()> {
    let out = require_out(cfg)?;
    let ds = read_dataset(data).with_context(|| format!("reading {}", data.display()))?;
    if !ds.is_normalized() {
        log::warn!(
            "{} is not normalized to mean squared norm N",
            data.display()
        );
    }
    let k = components.unwrap_or(cfg.components);
    let em = cfg.em_config();
    eprintln!("# fit: components = {k}, em = {em:?}");
    let fit = fit_em(&ds, k, &em)?;
    save_model(&fit.model, out)?;
    let last = fit.log_likelihood_trace.last().copied().unwrap_or(f64::NAN);
    log::info!(
        "{} iterations (converged: {}), {} reinitializations, mean log-likelihood {last:.6}",
        fit.iterations(),
        fit.converged,
        fit.reinitialized.len()
    );
    Ok(())
}

fn estimate(cfg: &ExperimentConfig, model_path: &Path, data: &Path, snr_db: f64) -> Result<()> {
    let model =
        load_model(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let ds = read_dataset(data).with_context(|| format!("reading {}", data.display()))?;
    eprintln!(
        "# estimate: snr_db = {snr_db}, components = {}",
        model.n_components()
    );
    let errors = gmm_sample_errors(&model, &ds, snr_db, cfg.seed)?;
    let mut text = String::from("sample,error\n");
    for (i, e) in errors.iter().enumerate() {
        text.push_str(&format!("{i},{e:.16e}\n"));
    }
    write_output(cfg.output.as_deref(), &text)?;
    let mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
    log::info!("normalized MSE {mean:.6e} over {} samples", errors.len());
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, result: SweepResult) -> Result<()> {
    write_output(cfg.output.as_deref(), &render_csv(&result)?)?;
    log::info!("sweep finished in {:.1} s", result.metadata.runtime_secs);
    Ok(())
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}
