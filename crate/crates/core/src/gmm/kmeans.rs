//! k-means++ seeding followed by Lloyd iterations, used to initialize EM.

use rand::Rng;

use crate::linalg::{distance_sqr, Complex64};
use crate::rng::SimRng;

const MAX_LLOYD_ITERATIONS: usize = 50;

/// Hard cluster labels for the `N`-dimensional rows of `x`.
pub(crate) fn kmeans_labels(x: &[Complex64], n: usize, k: usize, rng: &mut SimRng) -> Vec<usize> {
    let m = x.len() / n;
    let row = |i: usize| &x[i * n..(i + 1) * n];

    let mut centers: Vec<Vec<Complex64>> = vec![row(rng.random_range(0..m)).to_vec()];
    let mut nearest: Vec<f64> = (0..m).map(|i| distance_sqr(row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = m - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..m)
        };
        let c = row(pick).to_vec();
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(distance_sqr(row(i), &c));
        }
        centers.push(c);
    }

    let mut labels = vec![usize::MAX; m];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let best = (0..k)
                .map(|c| (c, distance_sqr(row(i), &centers[c])))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
                .0;
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![Complex64::new(0.0, 0.0); n]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            // Empty clusters keep their previous center.
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    labels
}
