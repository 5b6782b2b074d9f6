//! Seeded random sampling of matrices and rotations for the verifiers.
//!
//! Every sampler takes an explicit RNG. Trial seeds are derived from
//! `(seed, trial)` with a SplitMix64 step so parallel verifier runs are
//! independent of thread count and schedule.

use crate::tensor::Mat;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic per-trial RNG derivation.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(trial)))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Log-uniform sample in `[lo, hi]` (both positive).
pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo > 0.0 && hi >= lo);
    let t: f64 = rng.random();
    (lo.ln() + t * (hi.ln() - lo.ln())).exp()
}

/// Uniform random proper rotation (det = +1).
pub fn random_rotation(rng: &mut impl Rng, dim: usize) -> Mat {
    match dim {
        2 => {
            let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            let (s, c) = theta.sin_cos();
            Mat::from_rows(2, &[c, -s, s, c])
        }
        3 => {
            // Shoemake's uniform quaternion
            let u1: f64 = rng.random();
            let u2: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            let u3: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            let a = (1.0 - u1).sqrt();
            let b = u1.sqrt();
            let (x, y, z, w) = (a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos());
            Mat::from_rows(
                3,
                &[
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - z * w),
                    2.0 * (x * z + y * w),
                    2.0 * (x * y + z * w),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - x * w),
                    2.0 * (x * z - y * w),
                    2.0 * (y * z + x * w),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            )
        }
        _ => unreachable!(),
    }
}

/// Random matrix `Q1 * diag(sigma) * Q2` with proper rotations and
/// log-uniform singular values in `[sigma_lo, sigma_hi]`. The determinant is
/// the product of the sigmas, hence strictly positive.
pub fn random_matrix_log_uniform(rng: &mut impl Rng, dim: usize, sigma_lo: f64, sigma_hi: f64) -> Mat {
    let q1 = random_rotation(rng, dim);
    let q2 = random_rotation(rng, dim);
    let mut sigma = [0.0; 3];
    for s in sigma.iter_mut().take(dim) {
        *s = log_uniform(rng, sigma_lo, sigma_hi);
    }
    q1.matmul(&Mat::diag(&sigma[..dim])).matmul(&q2)
}

/// Like [`random_matrix_log_uniform`] but with a random orientation flip, so
/// both determinant signs occur.
pub fn random_matrix_signed(rng: &mut impl Rng, dim: usize, sigma_lo: f64, sigma_hi: f64) -> Mat {
    let mut f = random_matrix_log_uniform(rng, dim, sigma_lo, sigma_hi);
    if rng.random::<bool>() {
        for i in 0..dim {
            let v = f.get(i, 0);
            f.set(i, 0, -v);
        }
    }
    f
}
