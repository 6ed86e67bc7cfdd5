//! Random distributions and ε-related perturbations of a model.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// Safety margin that keeps mixed rows strictly inside the ε ball despite
/// rounding in the L1 sum.
const MARGIN: f64 = 1.0 - 1e-12;

/// A point drawn uniformly from the simplex over `support`, written into a
/// zeroed vector of length `n`.
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize, support: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let weights: Vec<f64> = support.iter().map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = weights.iter().sum();
    for (&idx, w) in support.iter().zip(weights) {
        out[idx] += w / total;
    }
    out
}

/// Moves every transition row towards an independent random distribution so
/// that its L1 distance from the original is as large as possible while
/// staying at most `eps0`. The result is ε₀-related to `m`.
pub fn perturb<R: Rng + ?Sized>(m: &TabularMdp, eps0: f64, rng: &mut R) -> Result<TabularMdp> {
    if !(eps0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("eps0 must be >= 0, got {eps0}")));
    }
    let ns = m.num_states();
    let all: Vec<usize> = (0..ns).collect();
    TabularMdp::from_fn(
        ns,
        m.num_actions(),
        m.horizon(),
        m.initial_state(),
        |h, s, a, row| {
            let src = m.row(h, s, a);
            let target = random_simplex(rng, ns, &all);
            let dist: f64 = src.iter().zip(&target).map(|(p, q)| (p - q).abs()).sum();
            let lambda = if dist > 0.0 {
                (eps0 * MARGIN / dist).min(1.0)
            } else {
                0.0
            };
            for ((out, p), q) in row.iter_mut().zip(src).zip(&target) {
                *out = (1.0 - lambda) * p + lambda * q;
            }
        },
        |h, s, a| m.reward(h, s, a),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::model_distance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perturbation_stays_within_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = TabularMdp::from_fn(
            3,
            2,
            2,
            0,
            |_, s, _, row| row[s] = 1.0,
            |_, _, _| 0.25,
        )
        .unwrap();
        for eps in [0.0, 0.01, 0.3, 2.5] {
            let p = perturb(&m, eps, &mut rng).unwrap();
            let d = model_distance(&m, &p).unwrap();
            assert!(d <= eps, "{d} > {eps}");
        }
    }

    #[test]
    fn simplex_respects_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_simplex(&mut rng, 5, &[1, 3]);
        assert_eq!(v[0], 0.0);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
