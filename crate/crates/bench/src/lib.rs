//! Shared fixtures for the criterion benches.

use metacgnn::{datagen, CeDatabase, Family, PairDataset};

/// One standardized CE-Multi pair with `n` points.
pub fn pair(n: usize, seed: u64) -> PairDataset {
    datagen::generate(Family::Multi, 1, n, seed).expect("generation succeeds").presented().remove(0)
}

/// A CE-Multi training database.
pub fn database(n_pairs: usize, n_points: usize, seed: u64) -> CeDatabase {
    datagen::generate(Family::Multi, n_pairs, n_points, seed).expect("generation succeeds")
}
