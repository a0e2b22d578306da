//! Seeded, chunked Monte-Carlo averaging over the unit hypercube.
//!
//! Samples are split into a fixed number of chunks. Chunk `i` draws from a
//! ChaCha8 stream keyed by `(seed, i)`, and chunk sums are reduced in chunk
//! order, so estimates are bit-identical for any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Number of independent substreams a sample budget is split into.
pub const MC_CHUNKS: u64 = 64;

/// A Monte-Carlo mean together with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: u64,
}

impl McEstimate {
    /// Whether `target` lies within `sigmas` standard errors of the estimate.
    ///
    /// A zero standard error demands exact agreement up to `1e-12`.
    pub fn agrees_with(&self, target: f64, sigmas: f64) -> bool {
        (self.estimate - target).abs() <= sigmas * self.stderr + 1e-12
    }
}

/// The deterministic generator for chunk `chunk` of a run seeded by `seed`.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Averages `f` over `samples` uniform points of `[0,1)^dim`.
pub fn hypercube_mean<F>(dim: usize, samples: u64, seed: u64, f: F) -> McEstimate
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let chunks: Vec<(f64, f64)> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let n = samples / MC_CHUNKS + u64::from(c < samples % MC_CHUNKS);
            let mut rng = chunk_rng(seed, c);
            let mut x = vec![0.0; dim];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                for xi in x.iter_mut() {
                    *xi = rng.random::<f64>();
                }
                let y = f(&x);
                s += y;
                s2 += y * y;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = chunks
        .iter()
        .fold((0.0, 0.0), |(a, b), &(s, s2)| (a + s, b + s2));
    let n = samples as f64;
    let mean = s / n;
    let var = if samples > 1 {
        ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    McEstimate {
        estimate: mean,
        stderr: (var / n).sqrt(),
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_estimate() {
        let f = |x: &[f64]| x[0] * x[1];
        let a = hypercube_mean(2, 10_000, 3, f);
        let b = hypercube_mean(2, 10_000, 3, f);
        assert_eq!(a, b);
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let f = |x: &[f64]| x.iter().sum::<f64>();
        let a = hypercube_mean(3, 5_000, 11, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| hypercube_mean(3, 5_000, 11, f));
        assert_eq!(a, b);
    }

    #[test]
    fn mean_of_coordinate_is_one_half() {
        let e = hypercube_mean(1, 200_000, 1, |x| x[0]);
        assert!(e.agrees_with(0.5, 4.0));
    }
}
