/// Derive a component seed from the master experiment seed.
///
/// All randomness in a run flows from one master seed fanned out by
/// component name and index (round number, dispatch number, pair index),
/// which is what makes simulated runs bitwise reproducible. FNV-1a over the
/// component name and index, xor-folded with the master seed.
pub fn derive_seed(master: u64, component: &str, index: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x1000_0000_01b3;
    let mut hash = OFFSET ^ master;
    for byte in component.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(PRIME);
    }
    for byte in index.to_le_bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}
