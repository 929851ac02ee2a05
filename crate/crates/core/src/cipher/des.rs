//! Data Encryption Standard (FIPS 46-3), single block, ECB only.
//!
//! Bit positions in the tables are 1-based and counted from the most
//! significant bit, as in the standard. Blocks and keys are plain
//! big-endian `u64` values.

/// Expanded key: the sixteen 48-bit round keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoundKeys([u64; 16]);

impl RoundKeys {
    pub fn new(key: u64) -> Self {
        let cd = permute(key, 64, &PC1);
        let mut c = (cd >> 28) as u32;
        let mut d = (cd & 0x0FFF_FFFF) as u32;
        let mut out = [0u64; 16];
        for (round, shift) in SHIFTS.iter().enumerate() {
            c = rotl28(c, *shift);
            d = rotl28(d, *shift);
            out[round] = permute(((c as u64) << 28) | d as u64, 56, &PC2);
        }
        RoundKeys(out)
    }

    pub fn encrypt(&self, block: u64) -> u64 {
        crypt(block, self.0.iter().copied())
    }

    pub fn decrypt(&self, block: u64) -> u64 {
        crypt(block, self.0.iter().rev().copied())
    }
}

pub fn encrypt(key: u64, block: u64) -> u64 {
    RoundKeys::new(key).encrypt(block)
}

pub fn decrypt(key: u64, block: u64) -> u64 {
    RoundKeys::new(key).decrypt(block)
}

/// Places 56 effective key bits into the non-parity positions of a 64-bit
/// DES key. Parity bits (the low bit of every byte) are left at zero.
pub fn expand_key(effective: u64) -> u64 {
    let mut key = 0u64;
    for i in 0..8 {
        let seven = (effective >> (49 - 7 * i)) & 0x7F;
        key |= seven << (1 + 8 * (7 - i));
    }
    key
}

/// Inverse of [`expand_key`]; parity bits are discarded.
pub fn compress_key(key: u64) -> u64 {
    let mut effective = 0u64;
    for i in 0..8 {
        let seven = (key >> (1 + 8 * (7 - i))) & 0x7F;
        effective |= seven << (49 - 7 * i);
    }
    effective
}

fn crypt(block: u64, round_keys: impl Iterator<Item = u64>) -> u64 {
    let ip = permute(block, 64, &IP);
    let mut left = (ip >> 32) as u32;
    let mut right = ip as u32;
    for k in round_keys {
        let next = left ^ feistel(right, k);
        left = right;
        right = next;
    }
    // final swap is folded into the pre-output R16 L16
    permute(((right as u64) << 32) | left as u64, 64, &FP)
}

fn feistel(r: u32, k: u64) -> u32 {
    // 34-bit window R32 R1 .. R32 R1; each 6-bit E group is a contiguous slice.
    let window = ((r as u64 & 1) << 33) | ((r as u64) << 1) | (r as u64 >> 31);
    let mut out = 0u32;
    for j in 0..8 {
        let six = ((window >> (28 - 4 * j)) & 0x3F) ^ ((k >> (42 - 6 * j)) & 0x3F);
        out |= SP[j][six as usize];
    }
    out
}

fn rotl28(x: u32, s: u32) -> u32 {
    ((x << s) | (x >> (28 - s))) & 0x0FFF_FFFF
}

const fn permute(input: u64, in_bits: u32, table: &[u8]) -> u64 {
    let mut out = 0u64;
    let mut i = 0;
    while i < table.len() {
        let bit = (input >> (in_bits - table[i] as u32)) & 1;
        out = (out << 1) | bit;
        i += 1;
    }
    out
}

// S-box lookup fused with the P permutation, indexed by the raw 6-bit input.
const SP: [[u32; 64]; 8] = build_sp();

const fn build_sp() -> [[u32; 64]; 8] {
    let mut sp = [[0u32; 64]; 8];
    let mut j = 0;
    while j < 8 {
        let mut six = 0;
        while six < 64 {
            let row = ((six >> 4) & 2) | (six & 1);
            let col = (six >> 1) & 0xF;
            let nibble = SBOX[j][row * 16 + col] as u64;
            sp[j][six] = permute(nibble << (28 - 4 * j), 32, &P) as u32;
            six += 1;
        }
        j += 1;
    }
    sp
}

const IP: [u8; 64] = [
    58, 50, 42, 34, 26, 18, 10, 2, 60, 52, 44, 36, 28, 20, 12, 4, //
    62, 54, 46, 38, 30, 22, 14, 6, 64, 56, 48, 40, 32, 24, 16, 8, //
    57, 49, 41, 33, 25, 17, 9, 1, 59, 51, 43, 35, 27, 19, 11, 3, //
    61, 53, 45, 37, 29, 21, 13, 5, 63, 55, 47, 39, 31, 23, 15, 7,
];

const FP: [u8; 64] = [
    40, 8, 48, 16, 56, 24, 64, 32, 39, 7, 47, 15, 55, 23, 63, 31, //
    38, 6, 46, 14, 54, 22, 62, 30, 37, 5, 45, 13, 53, 21, 61, 29, //
    36, 4, 44, 12, 52, 20, 60, 28, 35, 3, 43, 11, 51, 19, 59, 27, //
    34, 2, 42, 10, 50, 18, 58, 26, 33, 1, 41, 9, 49, 17, 57, 25,
];

const P: [u8; 32] = [
    16, 7, 20, 21, 29, 12, 28, 17, 1, 15, 23, 26, 5, 18, 31, 10, //
    2, 8, 24, 14, 32, 27, 3, 9, 19, 13, 30, 6, 22, 11, 4, 25,
];

const PC1: [u8; 56] = [
    57, 49, 41, 33, 25, 17, 9, 1, 58, 50, 42, 34, 26, 18, //
    10, 2, 59, 51, 43, 35, 27, 19, 11, 3, 60, 52, 44, 36, //
    63, 55, 47, 39, 31, 23, 15, 7, 62, 54, 46, 38, 30, 22, //
    14, 6, 61, 53, 45, 37, 29, 21, 13, 5, 28, 20, 12, 4,
];

const PC2: [u8; 48] = [
    14, 17, 11, 24, 1, 5, 3, 28, 15, 6, 21, 10, //
    23, 19, 12, 4, 26, 8, 16, 7, 27, 20, 13, 2, //
    41, 52, 31, 37, 47, 55, 30, 40, 51, 45, 33, 48, //
    44, 49, 39, 56, 34, 53, 46, 42, 50, 36, 29, 32,
];

const SHIFTS: [u32; 16] = [1, 1, 2, 2, 2, 2, 2, 2, 1, 2, 2, 2, 2, 2, 2, 1];

const SBOX: [[u8; 64]; 8] = [
    [
        14, 4, 13, 1, 2, 15, 11, 8, 3, 10, 6, 12, 5, 9, 0, 7, //
        0, 15, 7, 4, 14, 2, 13, 1, 10, 6, 12, 11, 9, 5, 3, 8, //
        4, 1, 14, 8, 13, 6, 2, 11, 15, 12, 9, 7, 3, 10, 5, 0, //
        15, 12, 8, 2, 4, 9, 1, 7, 5, 11, 3, 14, 10, 0, 6, 13,
    ],
    [
        15, 1, 8, 14, 6, 11, 3, 4, 9, 7, 2, 13, 12, 0, 5, 10, //
        3, 13, 4, 7, 15, 2, 8, 14, 12, 0, 1, 10, 6, 9, 11, 5, //
        0, 14, 7, 11, 10, 4, 13, 1, 5, 8, 12, 6, 9, 3, 2, 15, //
        13, 8, 10, 1, 3, 15, 4, 2, 11, 6, 7, 12, 0, 5, 14, 9,
    ],
    [
        10, 0, 9, 14, 6, 3, 15, 5, 1, 13, 12, 7, 11, 4, 2, 8, //
        13, 7, 0, 9, 3, 4, 6, 10, 2, 8, 5, 14, 12, 11, 15, 1, //
        13, 6, 4, 9, 8, 15, 3, 0, 11, 1, 2, 12, 5, 10, 14, 7, //
        1, 10, 13, 0, 6, 9, 8, 7, 4, 15, 14, 3, 11, 5, 2, 12,
    ],
    [
        7, 13, 14, 3, 0, 6, 9, 10, 1, 2, 8, 5, 11, 12, 4, 15, //
        13, 8, 11, 5, 6, 15, 0, 3, 4, 7, 2, 12, 1, 10, 14, 9, //
        10, 6, 9, 0, 12, 11, 7, 13, 15, 1, 3, 14, 5, 2, 8, 4, //
        3, 15, 0, 6, 10, 1, 13, 8, 9, 4, 5, 11, 12, 7, 2, 14,
    ],
    [
        2, 12, 4, 1, 7, 10, 11, 6, 8, 5, 3, 15, 13, 0, 14, 9, //
        14, 11, 2, 12, 4, 7, 13, 1, 5, 0, 15, 10, 3, 9, 8, 6, //
        4, 2, 1, 11, 10, 13, 7, 8, 15, 9, 12, 5, 6, 3, 0, 14, //
        11, 8, 12, 7, 1, 14, 2, 13, 6, 15, 0, 9, 10, 4, 5, 3,
    ],
    [
        12, 1, 10, 15, 9, 2, 6, 8, 0, 13, 3, 4, 14, 7, 5, 11, //
        10, 15, 4, 2, 7, 12, 9, 5, 6, 1, 13, 14, 0, 11, 3, 8, //
        9, 14, 15, 5, 2, 8, 12, 3, 7, 0, 4, 10, 1, 13, 11, 6, //
        4, 3, 2, 12, 9, 5, 15, 10, 11, 14, 1, 7, 6, 0, 8, 13,
    ],
    [
        4, 11, 2, 14, 15, 0, 8, 13, 3, 12, 9, 7, 5, 10, 6, 1, //
        13, 0, 11, 7, 4, 9, 1, 10, 14, 3, 5, 12, 2, 15, 8, 6, //
        1, 4, 11, 13, 12, 3, 7, 14, 10, 15, 6, 8, 0, 5, 9, 2, //
        6, 11, 13, 8, 1, 4, 10, 7, 9, 5, 0, 15, 14, 2, 3, 12,
    ],
    [
        13, 2, 8, 4, 6, 15, 11, 1, 10, 9, 3, 14, 5, 0, 12, 7, //
        1, 15, 13, 8, 10, 3, 7, 4, 12, 5, 6, 11, 0, 14, 9, 2, //
        7, 11, 4, 1, 9, 12, 14, 2, 0, 6, 10, 13, 15, 3, 5, 8, //
        2, 1, 14, 7, 4, 10, 8, 13, 15, 12, 9, 0, 3, 5, 6, 11,
    ],
];
