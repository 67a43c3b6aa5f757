//! Data-parallel helpers with a sequential fallback.
//!
//! Every hot loop in the crate (Monte Carlo sampling, quadrature cells,
//! solver slab updates) goes through these functions. Work is split into a
//! fixed number of chunks that does not depend on the thread count, and
//! results are always combined in chunk order, so parallel and sequential
//! runs produce bitwise-identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution policy for data-parallel loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise falls
    /// back to sequential execution.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Evaluates `f(i)` for `i in 0..n` and returns the results in index order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Applies `f(chunk_index, chunk)` to consecutive mutable chunks of `data`.
pub fn for_each_chunk_mut<T, F>(exec: Exec, data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec;
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Pairwise summation in a fixed order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Deterministic random stream for worker `stream` of an experiment seeded
/// with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Splits `total` samples into `chunks` nearly equal counts.
pub fn split_counts(total: usize, chunks: usize) -> Vec<usize> {
    let chunks = chunks.max(1);
    let base = total / chunks;
    let extra = total % chunks;
    (0..chunks).map(|i| base + usize::from(i < extra)).collect()
}

/// Number of chunks used by sampling campaigns. Fixed so that results do not
/// depend on the machine.
pub const SAMPLING_CHUNKS: usize = 64;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let work = |exec| {
            let parts = map_indexed(exec, SAMPLING_CHUNKS, |i| {
                let mut rng = stream_rng(7, i as u64);
                (0..1000).map(|_| rng.random::<f64>().sqrt()).sum::<f64>()
            });
            pairwise_sum(&parts)
        };
        assert_eq!(
            work(Exec::Sequential).to_bits(),
            work(Exec::Parallel).to_bits()
        );
    }

    #[test]
    fn split_counts_covers_total() {
        let c = split_counts(1003, 10);
        assert_eq!(c.iter().sum::<usize>(), 1003);
        assert_eq!(c[0], 101);
        assert_eq!(c[9], 100);
    }

    #[test]
    fn chunked_update_visits_every_element() {
        let mut v = vec![0usize; 37];
        for_each_chunk_mut(Exec::Parallel, &mut v, 8, |ci, c| {
            for (k, x) in c.iter_mut().enumerate() {
                *x = ci * 8 + k;
            }
        });
        assert!(v.iter().enumerate().all(|(i, &x)| i == x));
    }
}
