//! Early-warning pipeline for identifying at-risk students from learning-event logs.

pub mod aggregate;
pub mod calibrate;
pub mod cli;
pub mod features;
pub mod learners;
pub mod matrix;
pub mod synthgen;
pub mod trace;
pub mod transfer;
pub mod tuneval;

/// Independent child seed for `stream` (SplitMix64 finalizer over both inputs).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
