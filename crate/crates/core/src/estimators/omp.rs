//! Orthogonal matching pursuit over an oversampled DFT dictionary.

use super::{Estimate, EstimateAux, EstimatorKind};
use crate::channel::steering_vector;
use crate::linalg::{check_dim, distance_sqr, norm_sqr, Complex64, ComplexVector};
use crate::{Error, Result};

/// Squared norm below which a newly orthogonalized atom counts as dependent
/// on the current support.
const DEPENDENT_ATOM_NORM_SQR: f64 = 1e-20;

/// Unit-norm atoms stored column by column.
#[derive(Debug, Clone)]
pub struct Dictionary {
    n_antennas: usize,
    n_atoms: usize,
    atoms: Vec<Complex64>,
}

impl Dictionary {
    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn atom(&self, l: usize) -> &[Complex64] {
        &self.atoms[l * self.n_antennas..(l + 1) * self.n_antennas]
    }
}

/// Steering vectors on the uniform grid `sin θ_l = −1 + 2l/L`, `L = q·N`,
/// scaled to unit norm.
pub fn dft_dictionary(n_antennas: usize, oversampling: usize) -> Result<Dictionary> {
    if n_antennas == 0 || oversampling == 0 {
        return Err(Error::InvalidArgument(
            "dictionary needs positive antenna count and oversampling".into(),
        ));
    }
    let l = n_antennas * oversampling;
    let scale = 1.0 / (n_antennas as f64).sqrt();
    let atoms = (0..l)
        .flat_map(|i| {
            let s = -1.0 + 2.0 * i as f64 / l as f64;
            steering_vector(s.asin(), n_antennas)
                .into_iter()
                .map(move |v| v * scale)
        })
        .collect();
    Ok(Dictionary {
        n_antennas,
        n_atoms: l,
        atoms,
    })
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// OMP iterates `D ŝ_s` for `s = 1, 2, …` up to `max_sparsity`.
///
/// Each iterate is the orthogonal projection of `y` onto the selected atoms,
/// i.e. the least-squares refit. The path ends early once the residual
/// vanishes or the next atom is numerically dependent on the support.
pub fn omp_path(
    y: &[Complex64],
    dict: &Dictionary,
    max_sparsity: usize,
) -> Result<Vec<ComplexVector>> {
    let n = dict.n_antennas;
    check_dim(n, y.len())?;
    if max_sparsity == 0 || max_sparsity > n.min(dict.n_atoms) {
        return Err(Error::InvalidArgument(format!(
            "max sparsity {max_sparsity} outside 1..={}",
            n.min(dict.n_atoms)
        )));
    }
    let y_energy = norm_sqr(y);
    let mut basis: Vec<ComplexVector> = Vec::new();
    let mut selected = vec![false; dict.n_atoms];
    let mut fit = vec![Complex64::new(0.0, 0.0); n];
    let mut residual = y.to_vec();
    let mut path = Vec::with_capacity(max_sparsity);
    while path.len() < max_sparsity {
        let best = (0..dict.n_atoms)
            .filter(|&l| !selected[l])
            .map(|l| (l, inner(dict.atom(l), &residual).norm_sqr()))
            .fold((usize::MAX, -1.0), |a, b| if b.1 > a.1 { b } else { a })
            .0;
        selected[best] = true;

        // Gram-Schmidt twice for orthogonality to working precision.
        let mut q = dict.atom(best).to_vec();
        for _ in 0..2 {
            for b in &basis {
                let p = inner(b, &q);
                q.iter_mut().zip(b).for_each(|(qi, bi)| *qi -= bi * p);
            }
        }
        let q_norm_sqr = norm_sqr(&q);
        if q_norm_sqr < DEPENDENT_ATOM_NORM_SQR {
            if path.is_empty() {
                return Err(Error::RankDeficientSupport);
            }
            break;
        }
        let inv = 1.0 / q_norm_sqr.sqrt();
        q.iter_mut().for_each(|v| *v *= inv);

        let coef = inner(&q, y);
        fit.iter_mut().zip(&q).for_each(|(f, qi)| *f += qi * coef);
        residual
            .iter_mut()
            .zip(y)
            .zip(&fit)
            .for_each(|((r, yi), fi)| *r = yi - fi);
        basis.push(q);
        path.push(fit.clone());
        if norm_sqr(&residual) <= 1e-28 * y_energy {
            break;
        }
    }
    Ok(path)
}

/// Runs OMP on `y` and returns the iterate closest to `h_true`; the lowest
/// sparsity wins ties.
pub fn omp_genie(
    y: &[Complex64],
    dict: &Dictionary,
    h_true: &[Complex64],
    max_sparsity: usize,
) -> Result<Estimate> {
    check_dim(dict.n_antennas, h_true.len())?;
    let path = omp_path(y, dict, max_sparsity)?;
    let (best, _) = path
        .iter()
        .map(|h| distance_sqr(h, h_true))
        .enumerate()
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    Ok(Estimate {
        channel: path.into_iter().nth(best).expect("path is non-empty"),
        estimator: EstimatorKind::GenieOmp,
        aux: Some(EstimateAux::Sparsity(best + 1)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::standard_complex_normal;
    use crate::rng::seeded_rng;
    use std::f64::consts::PI;

    fn gram(d: &Dictionary, a: usize, b: usize) -> Complex64 {
        inner(d.atom(a), d.atom(b))
    }

    #[test]
    fn unit_norm_and_orthogonal_without_oversampling() {
        let d = dft_dictionary(8, 1).unwrap();
        for a in 0..8 {
            for b in 0..8 {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((gram(&d, a, b) - expect).norm() < 1e-12);
            }
        }
        let d4 = dft_dictionary(6, 4).unwrap();
        assert_eq!(d4.n_atoms(), 24);
        assert!((0..24).all(|l| (norm_sqr(d4.atom(l)) - 1.0).abs() < 1e-12));
    }

    #[test]
    fn oversampled_gram_is_dirichlet_kernel() {
        let (n, q) = (8, 4);
        let l = n * q;
        let d = dft_dictionary(n, q).unwrap();
        for a in 0..l {
            for b in 0..l {
                // Phase step between the two atoms is π·(u_b − u_a), u = −1 + 2l/L.
                let delta = PI * 2.0 * (b as f64 - a as f64) / l as f64;
                let e = Complex64::from_polar(1.0, delta);
                let expect = if (delta / (2.0 * PI)).fract().abs() < 1e-15 {
                    Complex64::new(1.0, 0.0)
                } else {
                    (Complex64::new(1.0, 0.0) - e.powu(n as u32))
                        / (Complex64::new(1.0, 0.0) - e)
                        / n as f64
                };
                assert!((gram(&d, a, b) - expect).norm() < 1e-10, "({a},{b})");
            }
        }
    }

    #[test]
    fn recovers_single_atom() {
        let d = dft_dictionary(8, 1).unwrap();
        let y = d.atom(3).to_vec();
        let est = omp_genie(&y, &d, &y, 8).unwrap();
        assert_eq!(est.aux, Some(EstimateAux::Sparsity(1)));
        assert!(distance_sqr(&est.channel, &y) < 1e-28);
    }

    #[test]
    fn recovers_two_atoms_at_sparsity_two() {
        let d = dft_dictionary(8, 1).unwrap();
        let y: Vec<_> = d
            .atom(1)
            .iter()
            .zip(d.atom(2))
            .map(|(a, b)| a * 2.0 + b)
            .collect();
        let est = omp_genie(&y, &d, &y, 8).unwrap();
        assert_eq!(est.aux, Some(EstimateAux::Sparsity(2)));
        assert!(distance_sqr(&est.channel, &y) < 1e-26);
    }

    #[test]
    fn genie_choice_is_path_argmin() {
        let d = dft_dictionary(16, 4).unwrap();
        let mut rng = seeded_rng(1);
        for _ in 0..20 {
            let h = standard_complex_normal(&mut rng, 16);
            let noise = standard_complex_normal(&mut rng, 16);
            let y: Vec<_> = h.iter().zip(&noise).map(|(a, b)| a + b * 0.3).collect();
            let path = omp_path(&y, &d, 16).unwrap();
            let est = omp_genie(&y, &d, &h, 16).unwrap();
            let chosen = distance_sqr(&est.channel, &h);
            assert!(path.iter().all(|p| chosen <= distance_sqr(p, &h)));
            // Residual energy shrinks along the path.
            for w in path.windows(2) {
                assert!(distance_sqr(&w[1], &y) <= distance_sqr(&w[0], &y) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn rejects_bad_sparsity() {
        let d = dft_dictionary(4, 2).unwrap();
        let y = vec![Complex64::new(1.0, 0.0); 4];
        assert!(matches!(
            omp_genie(&y, &d, &y, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            omp_genie(&y, &d, &y, 5),
            Err(Error::InvalidArgument(_))
        ));
        assert!(omp_genie(&y, &d, &y[..3], 2).is_err());
    }
}
