//! Deterministic reductions, quantiles, and seeded RNG streams.
//!
//! All reductions in this crate that feed scientific results go through
//! [`pairwise_reduce`], a binary-split map/reduce whose association tree
//! depends only on the index range, never on thread scheduling. Results are
//! therefore bitwise reproducible for a fixed config and seed at any thread
//! count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Below this range length the leaf evaluator runs sequentially.
const LEAF_LEN: usize = 64;

/// Map a half-open index range through `leaf` and combine the pieces with a
/// fixed binary tree (split at the midpoint). `leaf` must accumulate its
/// range left to right so the tree is the only source of association.
///
/// Splitting at the midpoint gives a useful algebraic property: reducing a
/// concatenation of two identical halves yields exactly `combine(s, s)`.
pub fn pairwise_reduce<T, L, C>(range: std::ops::Range<usize>, leaf: &L, combine: &C) -> T
where
    T: Send,
    L: Fn(std::ops::Range<usize>) -> T + Sync,
    C: Fn(T, T) -> T + Sync,
{
    let n = range.end - range.start;
    if n <= LEAF_LEN {
        return leaf(range);
    }
    let mid = range.start + n / 2;
    let (a, b) = rayon::join(
        || pairwise_reduce(range.start..mid, leaf, combine),
        || pairwise_reduce(mid..range.end, leaf, combine),
    );
    combine(a, b)
}

/// Deterministic pairwise sum of `f(i)` over an index range.
pub fn pairwise_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    if n == 0 {
        return 0.0;
    }
    pairwise_reduce(
        0..n,
        &|r: std::ops::Range<usize>| r.map(&f).fold(0.0, |a, b| a + b),
        &|a, b| a + b,
    )
}

/// An independent ChaCha stream for item `index` of the stream family `tag`
/// under a master seed. Distinct (seed, tag, index) triples give unrelated
/// streams, which keeps per-point sampling deterministic under parallelism.
pub fn substream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut z =
        seed ^ tag.wrapping_mul(0x9e3779b97f4a7c15) ^ index.wrapping_mul(0xbf58476d1ce4e5b9);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

/// Midpoint-interpolated quantile of already-sorted data (MATLAB convention:
/// sample i sits at probability (i + 0.5) / n).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let n = sorted.len();
    let pos = p * n as f64 - 0.5;
    if pos <= 0.0 {
        return sorted[0];
    }
    if pos >= (n - 1) as f64 {
        return sorted[n - 1];
    }
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Quantile of unsorted data.
pub fn quantile(data: &[f64], p: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    quantile_sorted(&v, p)
}

/// Sample standard deviation (n - 1 normalization).
pub fn sample_std(data: &[f64]) -> f64 {
    let n = data.len();
    if n < 2 {
        return 0.0;
    }
    let mean = data.iter().sum::<f64>() / n as f64;
    let ss = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (ss / (n - 1) as f64).sqrt()
}

/// Number of steps of size `dt` that fit in `horizon`, tolerant of the
/// representation error in ratios like 10.0 / 0.2.
pub fn steps_for(horizon: f64, dt: f64) -> usize {
    (horizon / dt + 1e-9).floor() as usize
}
