//! Counter-based seeding.
//!
//! Every random stream is keyed by the tuple that identifies it (master
//! seed, iteration, direction, ...) so its contents never depend on the
//! order in which workers ask for it. Streams are ChaCha8 from
//! `rand_chacha` 0.9 with standard normals drawn by `rand_distr` 0.5.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Distribution perturbation directions are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DirectionDistribution {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// Uniform on the sphere of radius sqrt(dim), matching the Gaussian's
    /// expected squared norm.
    Sphere,
}

const TAG_DIRECTION: u64 = 0x6469_7265_6374_696f;
const TAG_ROLLOUT: u64 = 0x726f_6c6c_6f75_7473;
const TAG_POLICY_EVAL: u64 = 0x6576_616c_7561_7465;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a sequence of words into one seed.
pub fn derive_seed(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243f_6a88_85a3_08d3, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

pub fn direction_seed(master_seed: u64, iteration: u64, direction_index: u64) -> u64 {
    derive_seed(&[TAG_DIRECTION, master_seed, iteration, direction_index])
}

/// Seed for one rollout of one perturbation; `positive` selects `θ + νδ`.
pub fn rollout_seed(master_seed: u64, iteration: u64, direction_index: u64, positive: bool, rollout: u64) -> u64 {
    derive_seed(&[
        TAG_ROLLOUT,
        master_seed,
        iteration,
        direction_index,
        positive as u64,
        rollout,
    ])
}

/// Seed for evaluating the unperturbed policy at an iteration.
pub fn policy_eval_seed(master_seed: u64, iteration: u64) -> u64 {
    derive_seed(&[TAG_POLICY_EVAL, master_seed, iteration])
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard-normal direction, a pure function of its arguments.
pub fn sample_direction(master_seed: u64, iteration: u64, direction_index: u64, dim: usize) -> Vec<f64> {
    let mut rng = rng_from_seed(direction_seed(master_seed, iteration, direction_index));
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn sample_direction_with(
    dist: DirectionDistribution,
    master_seed: u64,
    iteration: u64,
    direction_index: u64,
    dim: usize,
) -> Vec<f64> {
    let mut v = sample_direction(master_seed, iteration, direction_index, dim);
    if dist == DirectionDistribution::Sphere {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            let scale = (dim as f64).sqrt() / norm;
            v.iter_mut().for_each(|x| *x *= scale);
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_arguments_same_vector() {
        let a = sample_direction(7, 3, 2, 64);
        let b = sample_direction(7, 3, 2, 64);
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn different_index_different_vector() {
        let a = sample_direction(7, 3, 2, 16);
        assert_ne!(a, sample_direction(7, 3, 3, 16));
        assert_ne!(a, sample_direction(7, 4, 2, 16));
        assert_ne!(a, sample_direction(8, 3, 2, 16));
    }

    #[test]
    fn prefix_stable_across_dimensions() {
        let short = sample_direction(1, 1, 1, 5);
        let long = sample_direction(1, 1, 1, 50);
        assert_eq!(&long[..5], &short[..]);
    }

    #[test]
    fn standard_normal_moments() {
        // 10^5 entries pooled over 100 directions
        let xs: Vec<f64> = (0..100).flat_map(|k| sample_direction(0, 0, k, 1000)).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn sphere_directions_have_fixed_norm() {
        let v = sample_direction_with(DirectionDistribution::Sphere, 3, 1, 4, 30);
        let n2: f64 = v.iter().map(|x| x * x).sum();
        assert!((n2 - 30.0).abs() < 1e-9);
    }

    #[test]
    fn seeds_separate_streams() {
        assert_ne!(rollout_seed(0, 0, 0, true, 0), rollout_seed(0, 0, 0, false, 0));
        assert_ne!(rollout_seed(0, 0, 0, true, 0), rollout_seed(0, 0, 0, true, 1));
        assert_ne!(direction_seed(0, 0, 0), policy_eval_seed(0, 0));
    }
}
