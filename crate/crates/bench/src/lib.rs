//! Shared fixtures for the benchmarks.

use fairpost_core::dataset::{generate_synthetic, GroupBias, ScoredDataset, SyntheticConfig};

pub const ATTRIBUTE: &str = "religion";

/// Default-law synthetic data with a visible EO gap.
pub fn fixture(n: usize, seed: u64) -> ScoredDataset {
    let cfg = SyntheticConfig {
        n,
        positive_rate: 0.2,
        group_rate: 0.2,
        group_bias: GroupBias { tpr: -0.1, fpr: 0.1 },
        seed,
        ..Default::default()
    };
    generate_synthetic(&cfg).expect("valid synthetic config")
}
