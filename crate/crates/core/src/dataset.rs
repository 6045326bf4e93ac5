//! Channel datasets and their on-disk formats.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic "CHDS" | version u32 | n_antennas u32 | n_samples u64 | has_covariances u8
//! then per sample:
//!   n_antennas × (re f64, im f64)
//!   if has_covariances: row-major upper triangle of the covariance, same encoding
//! ```

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::codec::{Decoder, Encoder};
use crate::linalg::{norm_sqr, Complex64, ComplexVector, HermitianMatrix};
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"CHDS";
pub const DATASET_VERSION: u32 = 1;
/// Size of the fixed header in bytes.
pub const DATASET_HEADER_LEN: usize = 4 + 4 + 4 + 8 + 1;

/// Relative tolerance used to decide whether a dataset read from disk is
/// normalized.
const NORMALIZED_RTOL: f64 = 1e-9;

/// One channel realization, optionally with the covariance it was drawn
/// from (needed by genie baselines).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub channel: ComplexVector,
    pub covariance: Option<HermitianMatrix>,
}

impl ChannelSample {
    pub fn new(channel: ComplexVector) -> Self {
        Self {
            channel,
            covariance: None,
        }
    }

    pub fn with_covariance(channel: ComplexVector, covariance: HermitianMatrix) -> Self {
        Self {
            channel,
            covariance: Some(covariance),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    n_antennas: usize,
    samples: Vec<ChannelSample>,
    normalized: bool,
}

impl ChannelDataset {
    /// Checks that every sample has dimension `n_antennas` and that either all
    /// or none of the samples carry a covariance.
    pub fn new(n_antennas: usize, samples: Vec<ChannelSample>) -> Result<Self> {
        if n_antennas == 0 {
            return Err(Error::InvalidArgument("n_antennas must be positive".into()));
        }
        let with_cov = samples.first().is_some_and(|s| s.covariance.is_some());
        for s in &samples {
            if s.channel.len() != n_antennas {
                return Err(Error::DimensionMismatch {
                    expected: n_antennas,
                    actual: s.channel.len(),
                });
            }
            match &s.covariance {
                Some(c) if !with_cov || c.dim() != n_antennas => {
                    return Err(Error::InvalidArgument(
                        "covariances must be present on all samples with matching dimension".into(),
                    ))
                }
                None if with_cov => {
                    return Err(Error::InvalidArgument(
                        "covariances must be present on all samples or none".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(Self {
            n_antennas,
            samples,
            normalized: false,
        })
    }

    pub fn from_channels(n_antennas: usize, channels: Vec<ComplexVector>) -> Result<Self> {
        Self::new(
            n_antennas,
            channels.into_iter().map(ChannelSample::new).collect(),
        )
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[ChannelSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<ChannelSample> {
        self.samples
    }

    pub fn channels(&self) -> impl ExactSizeIterator<Item = &[Complex64]> + '_ {
        self.samples.iter().map(|s| s.channel.as_slice())
    }

    pub fn has_covariances(&self) -> bool {
        self.samples.first().is_some_and(|s| s.covariance.is_some())
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `(1/M) Σ ‖h_m‖²`, or 0 for an empty dataset.
    pub fn mean_squared_norm(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.channels().map(norm_sqr).sum::<f64>() / self.samples.len() as f64
    }

    /// Drops the retained covariances.
    pub fn without_covariances(mut self) -> Self {
        for s in &mut self.samples {
            s.covariance = None;
        }
        self
    }

    /// Multiplies every channel by `factor` and every covariance by
    /// `factor²`. Clears the normalized flag.
    pub fn rescale(&mut self, factor: f64) {
        for s in &mut self.samples {
            for v in &mut s.channel {
                *v *= factor;
            }
            if let Some(c) = &mut s.covariance {
                c.scale(factor * factor);
            }
        }
        self.normalized = false;
    }

    fn looks_normalized(&self) -> bool {
        !self.samples.is_empty()
            && (self.mean_squared_norm() - self.n_antennas as f64).abs()
                <= NORMALIZED_RTOL * self.n_antennas as f64
    }
}

pub fn encode_dataset(ds: &ChannelDataset) -> Vec<u8> {
    let mut enc = Encoder::default();
    enc.bytes(DATASET_MAGIC);
    enc.u32(DATASET_VERSION);
    enc.u32(ds.n_antennas as u32);
    enc.u64(ds.samples.len() as u64);
    enc.u8(ds.has_covariances() as u8);
    for s in &ds.samples {
        s.channel.iter().for_each(|&v| enc.complex(v));
        if let Some(c) = &s.covariance {
            c.upper_triangle().for_each(|v| enc.complex(v));
        }
    }
    enc.into_inner()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<ChannelDataset> {
    let mut dec = Decoder::new(bytes);
    let magic: [u8; 4] = dec.array()?;
    if &magic != DATASET_MAGIC {
        return Err(Error::CorruptFile(format!("bad dataset magic {magic:?}")));
    }
    let version = dec.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::CorruptFile(format!(
            "unsupported dataset version {version}"
        )));
    }
    let n = dec.u32()? as usize;
    let m = dec.u64()?;
    let has_cov = match dec.u8()? {
        0 => false,
        1 => true,
        f => return Err(Error::CorruptFile(format!("bad covariance flag {f}"))),
    };
    if n == 0 {
        return Err(Error::CorruptFile("zero antennas".into()));
    }
    let record = 16 * (n + if has_cov { n * (n + 1) / 2 } else { 0 });
    let expected = (m as u128) * (record as u128);
    if expected != dec.remaining() as u128 {
        return Err(Error::CorruptFile(format!(
            "payload holds {} bytes, header implies {expected}",
            dec.remaining()
        )));
    }
    let mut samples = Vec::with_capacity(m as usize);
    for _ in 0..m {
        let channel = dec.complex_vec(n)?;
        let covariance = if has_cov {
            let upper = dec.complex_vec(n * (n + 1) / 2)?;
            Some(HermitianMatrix::from_upper_triangle(n, &upper)?)
        } else {
            None
        };
        samples.push(ChannelSample {
            channel,
            covariance,
        });
    }
    dec.finish()?;
    let mut ds = ChannelDataset::new(n, samples)?;
    // The header carries no normalization flag; it is recovered from the data.
    ds.normalized = ds.looks_normalized();
    Ok(ds)
}

pub fn write_dataset(ds: &ChannelDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_dataset(ds))?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<ChannelDataset> {
    decode_dataset(&fs::read(path)?)
}

/// Reads one sample per line: `2·n_antennas` comma-separated reals,
/// alternating real and imaginary parts. Blank lines are skipped.
pub fn import_csv(path: impl AsRef<Path>, n_antennas: usize) -> Result<ChannelDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut channels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(line_no, format!("field {f:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != 2 * n_antennas {
            return Err(parse_err(
                line_no,
                format!("expected {} fields, found {}", 2 * n_antennas, values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(line_no, "non-finite value".into()));
        }
        channels.push(
            values
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect(),
        );
    }
    ChannelDataset::from_channels(n_antennas, channels)
}

/// `c = sqrt(N·M / Σ‖h_m‖²)`, the factor that brings the mean squared norm
/// to `N`.
pub fn normalization_factor(ds: &ChannelDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = ds.channels().map(norm_sqr).sum();
    if total <= 0.0 {
        return Err(Error::DegenerateDataset("all channels are zero".into()));
    }
    Ok((ds.n_antennas as f64 * ds.len() as f64 / total).sqrt())
}

/// Scales the dataset so that `(1/M) Σ‖h_m‖² = N`.
pub fn normalize_dataset(ds: &ChannelDataset) -> Result<ChannelDataset> {
    let c = normalization_factor(ds)?;
    let mut out = ds.clone();
    if c != 1.0 {
        out.rescale(c);
    }
    out.normalized = true;
    Ok(out)
}

/// Normalizes several datasets with one shared factor computed over their
/// union, so train and test parts stay on the same scale.
pub fn normalize_jointly(parts: &mut [&mut ChannelDataset]) -> Result<f64> {
    let n = parts
        .first()
        .map(|p| p.n_antennas)
        .ok_or(Error::EmptyDataset)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for p in parts.iter() {
        crate::linalg::check_dim(n, p.n_antennas)?;
        total += p.channels().map(norm_sqr).sum::<f64>();
        count += p.len();
    }
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    if total <= 0.0 {
        return Err(Error::DegenerateDataset("all channels are zero".into()));
    }
    let c = (n as f64 * count as f64 / total).sqrt();
    for p in parts.iter_mut() {
        if c != 1.0 {
            p.rescale(c);
        }
        p.normalized = p.looks_normalized();
    }
    Ok(c)
}

/// Random disjoint partition into `round(train_fraction·M)` training samples
/// and the rest.
pub fn split_dataset<R: Rng + ?Sized>(
    ds: &ChannelDataset,
    train_fraction: f64,
    rng: &mut R,
) -> Result<(ChannelDataset, ChannelDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(rng);
    let n_train = (train_fraction * ds.len() as f64).round() as usize;
    let pick = |idx: &[usize]| ChannelDataset {
        n_antennas: ds.n_antennas,
        samples: idx.iter().map(|&i| ds.samples[i].clone()).collect(),
        normalized: false,
    };
    let mut train = pick(&order[..n_train]);
    let mut test = pick(&order[n_train..]);
    train.normalized = ds.normalized && train.looks_normalized();
    test.normalized = ds.normalized && test.looks_normalized();
    Ok((train, test))
}
