//! Deterministic random streams.
//!
//! Every agent owns a ChaCha8 stream whose key is derived from
//! `(run seed, agent id, birth step)`. Draws therefore depend only on the
//! agent's identity and how many values it has consumed, never on thread
//! scheduling or on the order agents are processed in. The stream position
//! is a plain counter, so snapshots persist it as a single integer.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream id for world-level draws (source relocation, initial placement).
pub const STREAM_WORLD: u64 = 0xB01D_5EED_0000_0001;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Expand `(seed, id, birth_step)` into a 256-bit ChaCha key.
pub fn derive_key(run_seed: u64, id: u64, birth_step: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = splitmix64(run_seed) ^ splitmix64(id.wrapping_mul(0xA24B_AED4_963E_E407))
        ^ splitmix64(birth_step.wrapping_mul(0x9FB2_1C65_1E98_DF25));
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// A counter-based stream owned by one agent (or by the world).
#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha8Rng,
    run_seed: u64,
    id: u64,
    birth_step: u64,
}

impl Stream {
    pub fn new(run_seed: u64, id: u64, birth_step: u64) -> Self {
        Stream {
            rng: ChaCha8Rng::from_seed(derive_key(run_seed, id, birth_step)),
            run_seed,
            id,
            birth_step,
        }
    }

    /// Rebuild a stream at a previously saved position.
    pub fn restore(run_seed: u64, id: u64, birth_step: u64, word_pos: u128) -> Self {
        let mut s = Stream::new(run_seed, id, birth_step);
        s.rng.set_word_pos(word_pos);
        s
    }

    /// Counter position for snapshots.
    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn key_parts(&self) -> (u64, u64, u64) {
        (self.run_seed, self.id, self.birth_step)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
