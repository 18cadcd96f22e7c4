//! Counter-style substreams derived from a master seed, so every trial and
//! symbol block owns an independent generator regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_POSITIONS: u64 = 0x706f_7369_7469_6f6e;
pub const TAG_SYMBOLS: u64 = 0x7379_6d62_6f6c_7321;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator keyed by `seed` and an ordered list of tags.
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(seed);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t.wrapping_add(0x6a09_e667_f3bc_c909)));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
