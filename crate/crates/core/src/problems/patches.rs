use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Row-major square patch, pixel values in `[0, 1]`.
pub type Patch = Vec<f64>;

const COMPONENTS: usize = 3;
/// Highest spatial frequency, in cycles per patch width.
const MAX_CYCLES: f64 = 0.5;

/// Seeded batch of smooth synthetic patches: a brightness offset plus a few
/// random low-frequency sinusoids, clamped to `[0, 1]`.
pub fn make_patch_batch(count: usize, patch_size: usize, seed: u64) -> Vec<Patch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let offset = rng.gen_range(-0.15..0.15);
            let waves: Vec<(f64, f64, f64, f64)> = (0..COMPONENTS)
                .map(|_| {
                    (
                        rng.gen_range(0.0..0.25),
                        rng.gen_range(-MAX_CYCLES..MAX_CYCLES),
                        rng.gen_range(-MAX_CYCLES..MAX_CYCLES),
                        rng.gen_range(0.0..2.0 * PI),
                    )
                })
                .collect();
            let n = patch_size as f64;
            let mut patch = Vec::with_capacity(patch_size * patch_size);
            for row in 0..patch_size {
                for col in 0..patch_size {
                    let (y, x) = (row as f64, col as f64);
                    let v = waves
                        .iter()
                        .fold(0.5 + offset, |acc, (amp, fx, fy, phase)| {
                            acc + amp * (2.0 * PI * (fx * x + fy * y) / n + phase).sin()
                        });
                    patch.push(v.clamp(0.0, 1.0));
                }
            }
            patch
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = make_patch_batch(16, 8, 42);
        let b = make_patch_batch(16, 8, 42);
        assert_eq!(a, b);
        assert!(a
            .iter()
            .flatten()
            .zip(b.iter().flatten())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a, make_patch_batch(16, 8, 43));
    }

    #[test]
    fn values_in_unit_range() {
        for seed in 0..20 {
            let batch = make_patch_batch(8, 8, seed);
            assert_eq!(batch.len(), 8);
            assert!(batch.iter().all(|p| p.len() == 64));
            assert!(batch.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn mean_pixel_value_regression_bound() {
        let batch = make_patch_batch(1024, 8, 7);
        let total: f64 = batch.iter().flatten().sum();
        let mean = total / (1024.0 * 64.0);
        assert!(mean > 0.4 && mean < 0.6, "mean {mean}");
    }
}
