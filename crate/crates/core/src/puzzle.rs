//! The key-search puzzle: header layout, header/key segmentation into
//! plaintext blocks, difficulty thresholds and solution checking.

use std::fmt;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cipher::{Block, CipherError, CipherKey, CipherKind, CipherProfile, Schedule};

/// Serialized header length in bytes.
pub const HEADER_BYTES: usize = 80;
pub const HEADER_BITS: u32 = 640;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PuzzleError {
    #[error("header bits ({header}) plus key bits ({key}) are not a multiple of the block size ({block})")]
    NonDivisible { header: u32, key: u32, block: u32 },
    #[error("expected {expected} bits, got {actual}")]
    InvalidWidth { expected: usize, actual: usize },
    #[error("threshold {threshold} outside 1..=2^{block_bits}")]
    InvalidTarget { threshold: u128, block_bits: u32 },
    #[error("zero-bit count {zero_bits} exceeds block size {block_bits}")]
    InvalidZeroBits { zero_bits: u32, block_bits: u32 },
    #[error("puzzle header of {0} bits cannot be derived from an 80-byte block header")]
    HeaderTooLong(u32),
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
    #[error(transparent)]
    Cipher(#[from] CipherError),
}

/// 80-byte block header. The former compact-target and nonce words are
/// merged into one 64-bit threshold field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockHeader {
    pub version: u32,
    pub prev_id: [u8; 32],
    pub merkle_root: [u8; 32],
    pub timestamp: u32,
    /// Threshold `T`; zero encodes `2^64`.
    pub target_field: u64,
}

impl BlockHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_BYTES] {
        let mut out = [0u8; HEADER_BYTES];
        out[0..4].copy_from_slice(&self.version.to_be_bytes());
        out[4..36].copy_from_slice(&self.prev_id);
        out[36..68].copy_from_slice(&self.merkle_root);
        out[68..72].copy_from_slice(&self.timestamp.to_be_bytes());
        out[72..80].copy_from_slice(&self.target_field.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PuzzleError> {
        if bytes.len() != HEADER_BYTES {
            return Err(PuzzleError::InvalidWidth {
                expected: HEADER_BITS as usize,
                actual: bytes.len() * 8,
            });
        }
        Ok(BlockHeader {
            version: u32::from_be_bytes(bytes[0..4].try_into().unwrap()),
            prev_id: bytes[4..36].try_into().unwrap(),
            merkle_root: bytes[36..68].try_into().unwrap(),
            timestamp: u32::from_be_bytes(bytes[68..72].try_into().unwrap()),
            target_field: u64::from_be_bytes(bytes[72..80].try_into().unwrap()),
        })
    }

    /// The threshold carried in the header, with the zero sentinel decoded.
    pub fn threshold(&self) -> u128 {
        decode_target_field(self.target_field)
    }
}

pub fn decode_target_field(field: u64) -> u128 {
    if field == 0 {
        1u128 << 64
    } else {
        field as u128
    }
}

/// Inverse of [`decode_target_field`]. Panics if `threshold` is 0 or above `2^64`.
pub fn encode_target_field(threshold: u128) -> u64 {
    assert!((1..=1u128 << 64).contains(&threshold), "threshold out of range");
    if threshold == 1u128 << 64 {
        0
    } else {
        threshold as u64
    }
}

/// 256-bit block identifier.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockId(pub [u8; 32]);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlockId({self})")
    }
}

/// SHA-256 of the 80-byte header serialization.
pub fn block_id(header: &BlockHeader) -> BlockId {
    BlockId(Sha256::digest(header.to_bytes()).into())
}

/// An MSB-first bit string holding puzzle header bits.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct HeaderBits(BitVec<u8, Msb0>);

impl HeaderBits {
    /// Takes the leading `bits` bits of `bytes`; the remaining bits of the
    /// last byte must be zero.
    pub fn from_bytes(bytes: &[u8], bits: usize) -> Result<Self, PuzzleError> {
        if bytes.len() != bits.div_ceil(8) {
            return Err(PuzzleError::InvalidWidth { expected: bits, actual: bytes.len() * 8 });
        }
        let mut bv = BitVec::<u8, Msb0>::from_slice(bytes);
        if bv[bits..].any() {
            return Err(PuzzleError::InvalidWidth { expected: bits, actual: bytes.len() * 8 });
        }
        bv.truncate(bits);
        Ok(HeaderBits(bv))
    }

    pub fn from_bitslice(bits: &BitSlice<u8, Msb0>) -> Self {
        HeaderBits(bits.to_bitvec())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_bitslice(&self) -> &BitSlice<u8, Msb0> {
        &self.0
    }

    /// Bytes with the final byte zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bv = self.0.clone();
        bv.set_uninitialized(false);
        bv.into_vec()
    }

    /// Reads `width` (≤ 64) bits starting at `offset` as a big-endian integer.
    pub fn read(&self, offset: usize, width: usize) -> u64 {
        if width == 0 {
            0
        } else {
            self.0[offset..offset + width].load_be::<u64>()
        }
    }

    pub fn flip(&mut self, bit: usize) {
        let v = self.0[bit];
        self.0.set(bit, !v);
    }
}

impl fmt::Debug for HeaderBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HeaderBits({} bits, {})", self.len(), hex_bytes(&self.to_bytes()))
    }
}

fn hex_bytes(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub header_bits: u32,
    pub key_bits: u32,
}

/// How header and key bits are spread over the plaintext blocks.
///
/// Key bits are distributed as evenly as possible, with the first
/// `k mod m` blocks carrying one extra bit. In every block the header
/// segment fills the high-order bits and the key segment the low-order
/// bits; both inputs are consumed MSB-first in block order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationPlan {
    pub block_bits: u32,
    pub header_bits: u32,
    pub key_bits: u32,
    pub splits: Vec<Split>,
}

impl SegmentationPlan {
    pub fn blocks(&self) -> usize {
        self.splits.len()
    }

    /// Run-length summary, e.g. `[(9, 58+6), (2, 59+5)]`.
    pub fn runs(&self) -> Vec<(usize, Split)> {
        let mut runs: Vec<(usize, Split)> = Vec::new();
        for s in &self.splits {
            match runs.last_mut() {
                Some((count, last)) if last == s => *count += 1,
                _ => runs.push((1, *s)),
            }
        }
        runs
    }
}

pub fn build_plan(header_bits: u32, key_bits: u32, block_bits: u32) -> Result<SegmentationPlan, PuzzleError> {
    let total = header_bits + key_bits;
    if block_bits == 0 || total == 0 || !total.is_multiple_of(block_bits) {
        return Err(PuzzleError::NonDivisible { header: header_bits, key: key_bits, block: block_bits });
    }
    let m = total / block_bits;
    let (base, extra) = (key_bits / m, key_bits % m);
    let splits = (0..m)
        .map(|i| {
            let key = base + u32::from(i < extra);
            Split { header_bits: block_bits - key, key_bits: key }
        })
        .collect();
    Ok(SegmentationPlan { block_bits, header_bits, key_bits, splits })
}

/// Builds `P_i = header_segment_i ‖ key_segment_i` for every block.
pub fn assemble_plaintexts(
    header: &HeaderBits,
    key: CipherKey,
    plan: &SegmentationPlan,
) -> Result<Vec<Block>, PuzzleError> {
    check_lengths(header, key, plan)?;
    let mut h_off = 0usize;
    let mut k_off = 0u32;
    let mut out = Vec::with_capacity(plan.blocks());
    for s in &plan.splits {
        let h = header.read(h_off, s.header_bits as usize);
        let k = key_segment(key.0, plan.key_bits, k_off, s.key_bits);
        out.push(Block(shl(h, s.key_bits) | k));
        h_off += s.header_bits as usize;
        k_off += s.key_bits;
    }
    Ok(out)
}

/// Splits plaintext blocks back into header bits and key.
pub fn disassemble_plaintexts(
    blocks: &[Block],
    plan: &SegmentationPlan,
) -> Result<(HeaderBits, CipherKey), PuzzleError> {
    if blocks.len() != plan.blocks() {
        return Err(PuzzleError::InvalidWidth {
            expected: plan.blocks() * plan.block_bits as usize,
            actual: blocks.len() * plan.block_bits as usize,
        });
    }
    let mut header = BitVec::<u8, Msb0>::with_capacity(plan.header_bits as usize);
    let mut key = 0u64;
    for (b, s) in blocks.iter().zip(&plan.splits) {
        if plan.block_bits < 64 && b.0 >> plan.block_bits != 0 {
            return Err(PuzzleError::InvalidWidth {
                expected: plan.block_bits as usize,
                actual: 64 - b.0.leading_zeros() as usize,
            });
        }
        let h = shr(b.0, s.key_bits);
        let start = header.len();
        header.resize(start + s.header_bits as usize, false);
        if s.header_bits > 0 {
            header[start..].store_be::<u64>(h);
        }
        key = shl(key, s.key_bits) | (b.0 & mask(s.key_bits));
    }
    Ok((HeaderBits(header), CipherKey(key)))
}

fn check_lengths(header: &HeaderBits, key: CipherKey, plan: &SegmentationPlan) -> Result<(), PuzzleError> {
    if header.len() != plan.header_bits as usize {
        return Err(PuzzleError::InvalidWidth { expected: plan.header_bits as usize, actual: header.len() });
    }
    if plan.key_bits < 64 && key.0 >> plan.key_bits != 0 {
        return Err(PuzzleError::InvalidWidth {
            expected: plan.key_bits as usize,
            actual: 64 - key.0.leading_zeros() as usize,
        });
    }
    Ok(())
}

#[inline]
fn mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[inline]
fn shl(x: u64, s: u32) -> u64 {
    if s >= 64 {
        0
    } else {
        x << s
    }
}

#[inline]
fn shr(x: u64, s: u32) -> u64 {
    if s >= 64 {
        0
    } else {
        x >> s
    }
}

#[inline]
fn key_segment(key: u64, key_bits: u32, offset: u32, width: u32) -> u64 {
    shr(key, key_bits - offset - width) & mask(width)
}

/// Upper bound on ciphertext blocks: `c` satisfies the target iff `c < T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyTarget {
    threshold: u128,
    block_bits: u32,
}

impl DifficultyTarget {
    pub fn new(threshold: u128, block_bits: u32) -> Result<Self, PuzzleError> {
        if threshold == 0 || block_bits > 64 || threshold > 1u128 << block_bits {
            return Err(PuzzleError::InvalidTarget { threshold, block_bits });
        }
        Ok(DifficultyTarget { threshold, block_bits })
    }

    /// `T = 2^{b-n}`: exactly the blocks whose top `n` bits are zero.
    pub fn from_zero_bits(zero_bits: u32, block_bits: u32) -> Result<Self, PuzzleError> {
        if zero_bits > block_bits {
            return Err(PuzzleError::InvalidZeroBits { zero_bits, block_bits });
        }
        Self::new(1u128 << (block_bits - zero_bits), block_bits)
    }

    pub fn from_field(field: u64, block_bits: u32) -> Result<Self, PuzzleError> {
        Self::new(decode_target_field(field), block_bits)
    }

    pub fn threshold(&self) -> u128 {
        self.threshold
    }

    pub fn block_bits(&self) -> u32 {
        self.block_bits
    }

    pub fn to_field(&self) -> u64 {
        encode_target_field(self.threshold)
    }

    /// Number of leading bits guaranteed zero: `b - ceil(log2 T)`.
    pub fn zero_bits(&self) -> u32 {
        self.block_bits - ceil_log2(self.threshold)
    }

    #[inline]
    pub fn is_met_by(&self, ciphertext: u64) -> bool {
        (ciphertext as u128) < self.threshold
    }

    /// Probability that one uniformly random block is below the threshold.
    pub fn block_probability(&self) -> f64 {
        self.threshold as f64 / (1u128 << self.block_bits) as f64
    }
}

pub fn ceil_log2(x: u128) -> u32 {
    assert!(x > 0);
    if x == 1 {
        0
    } else {
        128 - (x - 1).leading_zeros()
    }
}

/// A cipher together with the header length it is paired with. This fixes
/// the segmentation plan.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    pub cipher: CipherProfile,
    pub plan: SegmentationPlan,
}

impl Profile {
    pub fn new(name: impl Into<String>, cipher: CipherProfile, header_bits: u32) -> Result<Self, PuzzleError> {
        let plan = build_plan(header_bits, cipher.key_bits, cipher.block_bits)?;
        Ok(Profile { name: name.into(), cipher, plan })
    }

    /// DES over the full 640-bit header: eleven 64-bit blocks.
    pub fn des640() -> Self {
        Self::new("des640", CipherProfile::DES, HEADER_BITS).expect("valid")
    }

    /// Toy Feistel, 48-bit header, four 16-bit blocks, 16-bit keyspace.
    pub fn toy16() -> Self {
        Self::new("toy16", CipherProfile::toy16(), 48).expect("valid")
    }

    pub fn header_bits(&self) -> u32 {
        self.plan.header_bits
    }

    pub fn blocks(&self) -> usize {
        self.plan.blocks()
    }

    pub fn block_bits(&self) -> u32 {
        self.cipher.block_bits
    }

    /// Derives the puzzle header bits from a full block header.
    ///
    /// A 640-bit profile uses the serialization itself. Shorter profiles use
    /// the leading bits of `SHA-256(i ‖ header)` for `i = 0, 1, ...` so that
    /// every header field still binds the puzzle.
    pub fn puzzle_bits(&self, header: &BlockHeader) -> Result<HeaderBits, PuzzleError> {
        let h = self.header_bits();
        if h == HEADER_BITS {
            return HeaderBits::from_bytes(&header.to_bytes(), HEADER_BITS as usize);
        }
        if h > HEADER_BITS {
            return Err(PuzzleError::HeaderTooLong(h));
        }
        let ser = header.to_bytes();
        let mut bits = BitVec::<u8, Msb0>::with_capacity(h as usize);
        let mut counter = 0u8;
        while bits.len() < h as usize {
            let digest = Sha256::new().chain_update([counter]).chain_update(ser).finalize();
            bits.extend_from_bitslice(digest.view_bits::<Msb0>());
            counter += 1;
        }
        bits.truncate(h as usize);
        Ok(HeaderBits(bits))
    }
}

/// How a profile is named on the command line or in a config file: a preset
/// name, or explicit widths.
///
/// Custom widths select DES when `b = k = 64` and the toy Feistel otherwise.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Named(String),
    Custom {
        header_bits: u32,
        key_bits: u32,
        block_bits: u32,
        #[serde(default)]
        rounds: Option<u32>,
    },
}

impl ProfileSpec {
    pub fn resolve(&self) -> Result<Profile, PuzzleError> {
        match self {
            ProfileSpec::Named(name) => match name.as_str() {
                "des640" => Ok(Profile::des640()),
                "toy16" => Ok(Profile::toy16()),
                other => Err(PuzzleError::UnknownProfile(other.to_string())),
            },
            &ProfileSpec::Custom { header_bits, key_bits, block_bits, rounds } => {
                let cipher = if block_bits == 64 && key_bits == 64 {
                    CipherProfile::DES
                } else {
                    CipherProfile::toy_feistel(block_bits, key_bits, rounds.unwrap_or(crate::cipher::TOY_ROUNDS))?
                };
                Profile::new(self.to_string(), cipher, header_bits)
            }
        }
    }
}

impl fmt::Display for ProfileSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileSpec::Named(name) => f.write_str(name),
            ProfileSpec::Custom { header_bits, key_bits, block_bits, rounds } => {
                write!(f, "h={header_bits},k={key_bits},b={block_bits}")?;
                match rounds {
                    Some(r) => write!(f, ",r={r}"),
                    None => Ok(()),
                }
            }
        }
    }
}

/// Parses `des640`, `toy16` or `h=100,k=28,b=64` (optionally `,r=8`).
impl std::str::FromStr for ProfileSpec {
    type Err = PuzzleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if !s.contains('=') {
            return Ok(ProfileSpec::Named(s.trim().to_string()));
        }
        let bad = || PuzzleError::UnknownProfile(s.to_string());
        let (mut h, mut k, mut b, mut r) = (None, None, None, None);
        for part in s.split(',') {
            let (name, value) = part.split_once('=').ok_or_else(bad)?;
            let value: u32 = value.trim().parse().map_err(|_| bad())?;
            let slot = match name.trim() {
                "h" => &mut h,
                "k" => &mut k,
                "b" => &mut b,
                "r" => &mut r,
                _ => return Err(bad()),
            };
            *slot = Some(value);
        }
        Ok(ProfileSpec::Custom {
            header_bits: h.ok_or_else(bad)?,
            key_bits: k.ok_or_else(bad)?,
            block_bits: b.ok_or_else(bad)?,
            rounds: r,
        })
    }
}

/// A puzzle instance with the header segments pre-positioned, ready for
/// repeated key trials.
#[derive(Clone, Debug)]
pub struct Puzzle {
    cipher: CipherProfile,
    key_bits: u32,
    target: DifficultyTarget,
    // header segment already shifted into the high-order bits
    header_parts: Vec<u64>,
    // (offset from key MSB, width) per block
    key_parts: Vec<(u32, u32)>,
}

impl Puzzle {
    pub fn new(profile: &Profile, header: &HeaderBits, target: DifficultyTarget) -> Result<Self, PuzzleError> {
        let plan = &profile.plan;
        if header.len() != plan.header_bits as usize {
            return Err(PuzzleError::InvalidWidth { expected: plan.header_bits as usize, actual: header.len() });
        }
        if target.block_bits() != profile.cipher.block_bits {
            return Err(PuzzleError::InvalidTarget {
                threshold: target.threshold(),
                block_bits: profile.cipher.block_bits,
            });
        }
        let mut h_off = 0usize;
        let mut k_off = 0u32;
        let mut header_parts = Vec::with_capacity(plan.blocks());
        let mut key_parts = Vec::with_capacity(plan.blocks());
        for s in &plan.splits {
            header_parts.push(shl(header.read(h_off, s.header_bits as usize), s.key_bits));
            key_parts.push((k_off, s.key_bits));
            h_off += s.header_bits as usize;
            k_off += s.key_bits;
        }
        Ok(Puzzle { cipher: profile.cipher, key_bits: plan.key_bits, target, header_parts, key_parts })
    }

    pub fn target(&self) -> DifficultyTarget {
        self.target
    }

    pub fn cipher(&self) -> &CipherProfile {
        &self.cipher
    }

    #[inline]
    fn plaintext(&self, key: u64, i: usize) -> u64 {
        let (off, width) = self.key_parts[i];
        self.header_parts[i] | key_segment(key, self.key_bits, off, width)
    }

    pub fn plaintexts(&self, key: CipherKey) -> Vec<Block> {
        (0..self.header_parts.len()).map(|i| Block(self.plaintext(key.0, i))).collect()
    }

    /// Ciphertext blocks under `key`.
    pub fn ciphertexts(&self, key: CipherKey) -> Result<Vec<Block>, PuzzleError> {
        let schedule = self.cipher.schedule(key)?;
        Ok((0..self.header_parts.len()).map(|i| Block(schedule.encrypt(self.plaintext(key.0, i)))).collect())
    }

    /// True iff every ciphertext block is below the threshold. Stops at
    /// the first block that is not.
    pub fn check(&self, key: CipherKey) -> bool {
        match self.cipher.schedule(key) {
            Ok(schedule) => self.check_with(&schedule, key.0),
            Err(_) => false,
        }
    }

    #[inline]
    pub(crate) fn check_with(&self, schedule: &Schedule, key: u64) -> bool {
        (0..self.header_parts.len()).all(|i| self.target.is_met_by(schedule.encrypt(self.plaintext(key, i))))
    }

    /// Fast path for the miner: trial of one effective-key index.
    #[inline]
    pub(crate) fn try_effective(&self, effective: u64) -> bool {
        let key = match self.cipher.kind {
            CipherKind::Des => crate::cipher::des::expand_key(effective),
            _ => effective,
        };
        match self.cipher.schedule(CipherKey(key)) {
            Ok(s) => self.check_with(&s, key),
            Err(_) => false,
        }
    }
}

/// `true` iff `key` makes every ciphertext block fall below `target`.
/// Malformed inputs are never solutions.
pub fn check_solution(profile: &Profile, header: &HeaderBits, key: CipherKey, target: DifficultyTarget) -> bool {
    Puzzle::new(profile, header, target).map(|p| p.check(key)).unwrap_or(false)
}

/// [`check_solution`] over a full block header.
pub fn check_header(profile: &Profile, header: &BlockHeader, key: CipherKey, target: DifficultyTarget) -> bool {
    profile.puzzle_bits(header).map(|bits| check_solution(profile, &bits, key, target)).unwrap_or(false)
}
