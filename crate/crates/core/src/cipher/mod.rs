//! Block ciphers used as the puzzle primitive.
//!
//! Three profiles are supported: full DES, a parameterizable toy Feistel
//! network small enough to search exhaustively on a workstation, and the
//! Caesar shift used by the letter-compression demo.

pub mod des;
mod feistel;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use feistel::FeistelSchedule;

/// Round count of the canonical toy Feistel profile.
pub const TOY_ROUNDS: u32 = 8;
/// Upper bound on toy Feistel rounds (subkeys live in a fixed array).
pub const MAX_TOY_ROUNDS: u32 = 32;

const ALPHABET: u64 = 26;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CipherError {
    #[error("{what} value {value:#x} does not fit in {bits} bits")]
    InvalidWidth { what: &'static str, value: u64, bits: u32 },
    #[error("invalid symbol {0:?}: expected an uppercase letter A-Z")]
    InvalidSymbol(char),
    #[error("invalid cipher profile: {0}")]
    InvalidProfile(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CipherKind {
    Des,
    ToyFeistel,
    Caesar,
}

impl CipherKind {
    /// Identifier byte used in archive containers.
    pub fn id(self) -> u8 {
        match self {
            CipherKind::Des => 0,
            CipherKind::ToyFeistel => 1,
            CipherKind::Caesar => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(CipherKind::Des),
            1 => Some(CipherKind::ToyFeistel),
            2 => Some(CipherKind::Caesar),
            _ => None,
        }
    }
}

/// Block and key geometry of a cipher.
///
/// Construct through [`CipherProfile::DES`], [`CipherProfile::CAESAR`] or
/// [`CipherProfile::toy_feistel`]; the fields are public for inspection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CipherProfile {
    pub kind: CipherKind,
    pub block_bits: u32,
    pub key_bits: u32,
    pub effective_key_bits: u32,
    pub rounds: u32,
}

impl CipherProfile {
    pub const DES: CipherProfile = CipherProfile {
        kind: CipherKind::Des,
        block_bits: 64,
        key_bits: 64,
        effective_key_bits: 56,
        rounds: 16,
    };

    /// One letter per block, one shift per key. Five bits hold either.
    pub const CAESAR: CipherProfile = CipherProfile {
        kind: CipherKind::Caesar,
        block_bits: 5,
        key_bits: 5,
        effective_key_bits: 5,
        rounds: 1,
    };

    pub fn toy_feistel(block_bits: u32, key_bits: u32, rounds: u32) -> Result<Self, CipherError> {
        if !(2..=64).contains(&block_bits) || !block_bits.is_multiple_of(2) {
            return Err(CipherError::InvalidProfile(format!(
                "toy Feistel block size must be even and in 2..=64, got {block_bits}"
            )));
        }
        if key_bits == 0 || key_bits > 64 {
            return Err(CipherError::InvalidProfile(format!(
                "toy Feistel key size must be in 1..=64, got {key_bits}"
            )));
        }
        if rounds == 0 || rounds > MAX_TOY_ROUNDS {
            return Err(CipherError::InvalidProfile(format!(
                "toy Feistel rounds must be in 1..={MAX_TOY_ROUNDS}, got {rounds}"
            )));
        }
        Ok(CipherProfile {
            kind: CipherKind::ToyFeistel,
            block_bits,
            key_bits,
            effective_key_bits: key_bits,
            rounds,
        })
    }

    /// The 16-bit block, 16-bit key, 8-round toy profile.
    pub fn toy16() -> Self {
        Self::toy_feistel(16, 16, TOY_ROUNDS).expect("toy16 is a valid profile")
    }

    /// Number of distinct effective keys, `2^k_eff`, as `u128` so 64-bit
    /// keyspaces are representable.
    pub fn keyspace(&self) -> u128 {
        1u128 << self.effective_key_bits
    }

    /// Maps an effective-key index onto a full cipher key. DES keys get
    /// zero parity bits; other profiles use the index directly.
    pub fn expand_key(&self, effective: u64) -> CipherKey {
        match self.kind {
            CipherKind::Des => CipherKey(des::expand_key(effective)),
            _ => CipherKey(effective),
        }
    }

    /// Drops parity bits (DES) to recover the effective key.
    pub fn effective_key(&self, key: CipherKey) -> u64 {
        match self.kind {
            CipherKind::Des => des::compress_key(key.0),
            _ => key.0,
        }
    }

    fn block_bound(&self) -> u128 {
        match self.kind {
            CipherKind::Caesar => ALPHABET as u128,
            _ => 1u128 << self.block_bits,
        }
    }

    fn key_bound(&self) -> u128 {
        match self.kind {
            CipherKind::Caesar => ALPHABET as u128,
            _ => 1u128 << self.key_bits,
        }
    }

    pub fn check_block(&self, block: Block) -> Result<(), CipherError> {
        check_width("block", block.0, self.block_bound(), self.block_bits)
    }

    pub fn check_key(&self, key: CipherKey) -> Result<(), CipherError> {
        check_width("key", key.0, self.key_bound(), self.key_bits)
    }

    /// Expands `key` into a reusable schedule.
    pub fn schedule(&self, key: CipherKey) -> Result<Schedule, CipherError> {
        self.check_key(key)?;
        Ok(match self.kind {
            CipherKind::Des => Schedule::Des(des::RoundKeys::new(key.0)),
            CipherKind::ToyFeistel => Schedule::Feistel(FeistelSchedule::new(
                self.block_bits,
                self.key_bits,
                self.rounds,
                key.0,
            )),
            CipherKind::Caesar => Schedule::Caesar(key.0),
        })
    }
}

fn check_width(what: &'static str, value: u64, bound: u128, bits: u32) -> Result<(), CipherError> {
    if (value as u128) < bound {
        Ok(())
    } else {
        Err(CipherError::InvalidWidth { what, value, bits })
    }
}

/// A cipher block of `block_bits` bits, stored as a big-endian integer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Block(pub u64);

/// A full-width cipher key (for DES, including the parity positions).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CipherKey(pub u64);

impl std::fmt::LowerHex for CipherKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::LowerHex::fmt(&self.0, f)
    }
}

/// Per-key expanded state; encrypting many blocks under one key reuses it.
#[derive(Clone, Copy, Debug)]
pub enum Schedule {
    Des(des::RoundKeys),
    Feistel(FeistelSchedule),
    Caesar(u64),
}

impl Schedule {
    /// Encrypts a raw block value. Callers guarantee the width.
    #[inline]
    pub fn encrypt(&self, block: u64) -> u64 {
        match self {
            Schedule::Des(rk) => rk.encrypt(block),
            Schedule::Feistel(fs) => fs.encrypt(block),
            Schedule::Caesar(shift) => (block + shift) % ALPHABET,
        }
    }

    #[inline]
    pub fn decrypt(&self, block: u64) -> u64 {
        match self {
            Schedule::Des(rk) => rk.decrypt(block),
            Schedule::Feistel(fs) => fs.decrypt(block),
            Schedule::Caesar(shift) => (block + ALPHABET - shift) % ALPHABET,
        }
    }
}

pub fn encrypt_block(profile: &CipherProfile, key: CipherKey, plaintext: Block) -> Result<Block, CipherError> {
    profile.check_block(plaintext)?;
    Ok(Block(profile.schedule(key)?.encrypt(plaintext.0)))
}

pub fn decrypt_block(profile: &CipherProfile, key: CipherKey, ciphertext: Block) -> Result<Block, CipherError> {
    profile.check_block(ciphertext)?;
    Ok(Block(profile.schedule(key)?.decrypt(ciphertext.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Encrypt,
    Decrypt,
}

/// Shifts one uppercase letter by `shift` positions around the alphabet.
pub fn caesar_shift(shift: u8, letter: char, direction: Direction) -> Result<char, CipherError> {
    if !letter.is_ascii_uppercase() {
        return Err(CipherError::InvalidSymbol(letter));
    }
    let shift = shift as u64 % ALPHABET;
    let schedule = Schedule::Caesar(shift);
    let index = letter as u64 - b'A' as u64;
    let out = match direction {
        Direction::Encrypt => schedule.encrypt(index),
        Direction::Decrypt => schedule.decrypt(index),
    };
    Ok((b'A' + out as u8) as char)
}
