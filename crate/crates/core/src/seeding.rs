//! Expands one user seed into independent per-component seeds.

/// Component labels used throughout the crate.
pub const ENV: &str = "env";
pub const INIT: &str = "init";
pub const EXPLORATION: &str = "exploration";
pub const SAMPLING: &str = "sampling";
pub const MINIBATCH: &str = "minibatch";
pub const PLANNER: &str = "planner";

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic sub-seed for `label`; distinct labels give unrelated streams.
pub fn sub_seed(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ fnv1a(label))
}
