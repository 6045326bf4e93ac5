//! Binary model files.
//!
//! Layout (little-endian): magic `CGMM`, `u32` version, `u32` K, `u32` N,
//! K weights, K·N mean entries, then for each component the upper triangle
//! of its covariance in row-major order. Complex values are `(re, im)` pairs
//! of `f64`.

use std::fs;
use std::path::Path;

use super::GmmModel;
use crate::codec::{Decoder, Encoder};
use crate::linalg::HermitianMatrix;
use crate::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"CGMM";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model(model: &GmmModel) -> Vec<u8> {
    let mut enc = Encoder::default();
    enc.bytes(&MODEL_MAGIC);
    enc.u32(MODEL_VERSION);
    enc.u32(model.n_components() as u32);
    enc.u32(model.dim() as u32);
    model.weights().iter().for_each(|&w| enc.f64(w));
    model.means().iter().flatten().for_each(|&v| enc.complex(v));
    for c in model.covariances() {
        c.upper_triangle().for_each(|v| enc.complex(v));
    }
    enc.into_inner()
}

pub fn decode_model(bytes: &[u8]) -> Result<GmmModel> {
    let mut dec = Decoder::new(bytes);
    if dec.array::<4>()? != MODEL_MAGIC {
        return Err(Error::CorruptFile(
            "not a mixture model file (bad magic)".into(),
        ));
    }
    let version = dec.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::CorruptFile(format!(
            "unsupported model version {version}"
        )));
    }
    let k = dec.u32()? as usize;
    let n = dec.u32()? as usize;
    if k == 0 || n == 0 {
        return Err(Error::CorruptFile(format!(
            "empty model shape K={k}, N={n}"
        )));
    }
    // Reject absurd headers before allocating.
    let upper = n * (n + 1) / 2;
    let needed = (k as u128) * (8 + 16 * n as u128 + 16 * upper as u128);
    if needed != dec.remaining() as u128 {
        return Err(Error::CorruptFile(format!(
            "model body holds {} bytes, header implies {needed}",
            dec.remaining()
        )));
    }
    let weights = (0..k).map(|_| dec.f64()).collect::<Result<Vec<_>>>()?;
    let means = (0..k)
        .map(|_| dec.complex_vec(n))
        .collect::<Result<Vec<_>>>()?;
    let covariances = (0..k)
        .map(|_| HermitianMatrix::from_upper_triangle(n, &dec.complex_vec(upper)?))
        .collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    GmmModel::new(weights, means, covariances)
        .map_err(|e| Error::CorruptFile(format!("invalid model parameters: {e}")))
}

pub fn save_model(model: &GmmModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GmmModel> {
    decode_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ChannelDataset;
    use crate::gmm::log_likelihood;
    use crate::linalg::standard_complex_normal;
    use crate::linalg::testutil::random_psd;
    use crate::rng::seeded_rng;

    fn model() -> GmmModel {
        let mut rng = seeded_rng(7);
        GmmModel::new(
            vec![0.2, 0.3, 0.5],
            (0..3)
                .map(|_| standard_complex_normal(&mut rng, 4))
                .collect(),
            (0..3).map(|_| random_psd(&mut rng, 4)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let m = model();
        let bytes = encode_model(&m);
        assert_eq!(bytes.len(), 16 + 3 * (8 + 16 * 4 + 16 * 10));
        assert_eq!(decode_model(&bytes).unwrap(), m);
    }

    #[test]
    fn reloaded_model_scores_identically() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gmm");
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        let mut rng = seeded_rng(8);
        let ds = ChannelDataset::from_channels(
            4,
            (0..20)
                .map(|_| standard_complex_normal(&mut rng, 4))
                .collect(),
        )
        .unwrap();
        assert_eq!(
            log_likelihood(&m, &ds).unwrap(),
            log_likelihood(&back, &ds).unwrap()
        );
    }

    #[test]
    fn rejects_corruption() {
        let mut bytes = encode_model(&model());
        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 1]),
            Err(Error::CorruptFile(_))
        ));
        bytes.push(0);
        assert!(matches!(decode_model(&bytes), Err(Error::CorruptFile(_))));
        bytes.pop();
        bytes[0] = b'X';
        assert!(matches!(decode_model(&bytes), Err(Error::CorruptFile(_))));
        let mut v = encode_model(&model());
        v[4] = 9;
        assert!(matches!(decode_model(&v), Err(Error::CorruptFile(_))));
    }
}
