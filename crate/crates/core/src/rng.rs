use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random stream for trajectory `index` of an ensemble seeded
/// with `seed`. Streams do not depend on scheduling or chunking.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Trajectories are aggregated in fixed-size chunks, merged in index order,
/// so ensemble statistics are bit-identical for any thread count.
pub(crate) const CHUNK: usize = 64;

pub(crate) fn chunk_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    (0..n).step_by(CHUNK).map(|s| s..(s + CHUNK).min(n)).collect()
}
