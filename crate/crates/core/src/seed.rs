//! Stable seed derivation.
//!
//! Every random stream in the pipeline is keyed by a tuple of labels
//! (global seed, epoch, video id, window, ...), so results never depend on
//! the order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A part of a seed key.
#[derive(Debug, Clone, Copy)]
pub enum Key<'a> {
    U64(u64),
    Str(&'a str),
}

impl From<u64> for Key<'_> {
    fn from(v: u64) -> Self {
        Key::U64(v)
    }
}

impl From<usize> for Key<'_> {
    fn from(v: usize) -> Self {
        Key::U64(v as u64)
    }
}

impl<'a> From<&'a str> for Key<'a> {
    fn from(v: &'a str) -> Self {
        Key::Str(v)
    }
}

/// Mix a sequence of keys into a single 64-bit seed. Platform independent.
pub fn derive(keys: &[Key<'_>]) -> u64 {
    let mut h = FNV_OFFSET;
    for key in keys {
        // tag byte keeps ("ab", "c") distinct from ("a", "bc")
        let (tag, bytes): (u8, Vec<u8>) = match key {
            Key::U64(v) => (1, v.to_le_bytes().to_vec()),
            Key::Str(s) => (2, s.as_bytes().to_vec()),
        };
        for b in std::iter::once(tag)
            .chain((bytes.len() as u64).to_le_bytes())
            .chain(bytes)
        {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    splitmix(h)
}

pub fn rng(keys: &[Key<'_>]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(keys))
}

#[macro_export]
macro_rules! seed_keys {
    ($($k:expr),* $(,)?) => {
        &[$($crate::seed::Key::from($k)),*]
    };
}
