//! Fixtures for the key-search benchmarks.

use poew_core::puzzle::{DifficultyTarget, HeaderBits, Profile, Puzzle};

/// A puzzle over a fixed pseudo-random header.
pub fn fixed_puzzle(profile: &Profile, zero_bits: u32) -> Puzzle {
    let h = profile.header_bits() as usize;
    let mut bytes: Vec<u8> = (0..h.div_ceil(8)).map(|i| (i as u8).wrapping_mul(0x9d) ^ 0x5a).collect();
    let spare = bytes.len() * 8 - h;
    if let Some(last) = bytes.last_mut() {
        *last &= (0xffu16 << spare) as u8;
    }
    let header = HeaderBits::from_bytes(&bytes, h).expect("padding cleared");
    let target = DifficultyTarget::from_zero_bits(zero_bits, profile.block_bits()).expect("n <= b");
    Puzzle::new(profile, &header, target).expect("widths match")
}
