//! Counter-based random streams.
//!
//! Each replication owns a ChaCha8 stream addressed by
//! `(master seed, grid point, replication)`: the seed fixes the key, the grid
//! point selects the ChaCha stream and the replication index selects a block
//! of 2³² words inside it. Streams never overlap and do not depend on which
//! worker draws them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Each replication gets `2^REP_SHIFT` words of its stream.
const REP_SHIFT: u32 = 32;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn key(seed: u64) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut state = seed;
    for chunk in out.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    out
}

/// The stream for one replication at one grid point.
pub fn stream(seed: u64, grid_point: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key(seed));
    rng.set_stream(grid_point);
    rng.set_word_pos((replication as u128) << REP_SHIFT);
    rng
}
