//! Derivation of independent generator seeds from a single master seed.
//!
//! Restarts, penalty-grid points, and replication cells each get their own
//! stream so results stay bit-identical no matter how the work is scheduled.

/// splitmix64 finalizer; full-period bijection on u64.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for substream `tag` of `master`. Nest calls for hierarchies
/// (cell -> restart, and so on).
pub fn stream_seed(master: u64, tag: u64) -> u64 {
    splitmix64(master.wrapping_add(splitmix64(tag)))
}
