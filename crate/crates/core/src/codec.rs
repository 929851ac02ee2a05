//! Compression by key search.
//!
//! A solved puzzle is stored as the effective key plus, for each ciphertext
//! block, the low `b - n` bits that are not guaranteed zero. Decompression
//! re-prefixes the zeros, decrypts, and splits the plaintexts back into
//! header and key segments; the embedded key segments must reproduce the
//! stored key.
//!
//! Archive layout (all integers big-endian):
//!
//! ```text
//! "PoEW" | 0x01 | cipher id | b | k_eff | m | n | T (8 bytes, 0 = 2^64)
//! payload: key_eff (k_eff bits) then m residues of (b - n) bits, MSB-first,
//!          zero-padded to a byte boundary
//! CRC-32 (IEEE) of every preceding byte, 4 bytes
//! ```

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cipher::{
    caesar_shift, Block, CipherError, CipherKey, CipherKind, CipherProfile, Direction, TOY_ROUNDS,
};
use crate::puzzle::{
    ceil_log2, decode_target_field, disassemble_plaintexts, encode_target_field, BlockHeader, DifficultyTarget,
    HeaderBits, Profile, Puzzle, PuzzleError, HEADER_BITS,
};

pub const MAGIC: &[u8; 4] = b"PoEW";
pub const FORMAT_VERSION: u8 = 0x01;
/// Bytes before the payload.
pub const PREFIX_LEN: usize = 18;
pub const CRC_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("key does not solve the puzzle; only solved puzzles can be compressed")]
    NotASolution,
    #[error("embedded key segments disagree with the stored key")]
    KeyMismatch,
    #[error("malformed archive: {0}")]
    MalformedArchive(String),
    #[error("{0:?} is not three repetitions of one uppercase letter")]
    NotCompressible(String),
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error(transparent)]
    Puzzle(#[from] PuzzleError),
}

fn malformed(msg: impl Into<String>) -> CodecError {
    CodecError::MalformedArchive(msg.into())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressedBlock {
    pub cipher: CipherKind,
    pub block_bits: u32,
    pub effective_key_bits: u32,
    pub blocks: u32,
    pub zero_bits: u32,
    pub threshold: u128,
    pub key_eff: u64,
    pub residues: Vec<u64>,
}

impl CompressedBlock {
    pub fn residue_bits(&self) -> u32 {
        self.block_bits - self.zero_bits
    }

    /// `(b - n) m + k_eff`.
    pub fn payload_bits(&self) -> u64 {
        self.residue_bits() as u64 * self.blocks as u64 + self.effective_key_bits as u64
    }

    /// Total container size including prefix, padding and checksum.
    pub fn archive_len(&self) -> usize {
        PREFIX_LEN + (self.payload_bits() as usize).div_ceil(8) + CRC_LEN
    }

    /// Rebuilds the puzzle profile the archive was produced under.
    pub fn profile(&self) -> Result<Profile, CodecError> {
        let cipher = match self.cipher {
            CipherKind::Des => {
                if self.block_bits != 64 || self.effective_key_bits != 56 {
                    return Err(malformed("DES archive must have b=64 and k_eff=56"));
                }
                CipherProfile::DES
            }
            CipherKind::ToyFeistel => CipherProfile::toy_feistel(self.block_bits, self.effective_key_bits, TOY_ROUNDS)
                .map_err(|e| malformed(e.to_string()))?,
            CipherKind::Caesar => return Err(malformed("Caesar profile has no block archive")),
        };
        let total = self.blocks as u64 * self.block_bits as u64;
        if self.blocks == 0 || total < cipher.key_bits as u64 || total - cipher.key_bits as u64 > HEADER_BITS as u64 {
            return Err(malformed(format!("block count {} does not fit the key size", self.blocks)));
        }
        let header_bits = (total - cipher.key_bits as u64) as u32;
        let profile = Profile::new("archive", cipher, header_bits).map_err(|e| malformed(e.to_string()))?;
        Ok(profile)
    }

    fn check_shape(&self) -> Result<(), CodecError> {
        if self.zero_bits > self.block_bits {
            return Err(malformed("zero-bit count exceeds block size"));
        }
        if self.threshold == 0 || self.threshold > 1u128 << self.block_bits {
            return Err(malformed("threshold out of range"));
        }
        if self.zero_bits != self.block_bits - ceil_log2(self.threshold) {
            return Err(malformed("zero-bit count inconsistent with threshold"));
        }
        if self.residues.len() != self.blocks as usize {
            return Err(malformed("residue count differs from block count"));
        }
        if self.effective_key_bits < 64 && self.key_eff >> self.effective_key_bits != 0 {
            return Err(malformed("stored key wider than the effective key size"));
        }
        for r in &self.residues {
            if (*r as u128) >= self.threshold {
                return Err(malformed(format!("residue {r:#x} not below threshold")));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.archive_len());
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.push(self.cipher.id());
        for v in [self.block_bits, self.effective_key_bits, self.blocks, self.zero_bits] {
            out.push(v as u8);
        }
        out.extend_from_slice(&encode_target_field(self.threshold).to_be_bytes());

        let mut payload = BitVec::<u8, Msb0>::with_capacity(self.payload_bits() as usize);
        push_bits(&mut payload, self.key_eff, self.effective_key_bits);
        for r in &self.residues {
            push_bits(&mut payload, *r, self.residue_bits());
        }
        payload.set_uninitialized(false);
        out.extend_from_slice(payload.as_raw_slice());

        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < PREFIX_LEN + CRC_LEN {
            return Err(malformed(format!("archive too short ({} bytes)", bytes.len())));
        }
        if &bytes[0..4] != MAGIC {
            return Err(malformed("bad magic"));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(malformed(format!("unsupported version {}", bytes[4])));
        }
        let cipher = CipherKind::from_id(bytes[5]).ok_or_else(|| malformed(format!("unknown cipher id {}", bytes[5])))?;
        let (block_bits, effective_key_bits, blocks, zero_bits) =
            (bytes[6] as u32, bytes[7] as u32, bytes[8] as u32, bytes[9] as u32);
        if block_bits == 0 || block_bits > 64 || effective_key_bits == 0 || effective_key_bits > 64 {
            return Err(malformed("block or key size out of range"));
        }
        if zero_bits > block_bits {
            return Err(malformed("zero-bit count exceeds block size"));
        }
        let threshold = decode_target_field(u64::from_be_bytes(bytes[10..18].try_into().unwrap()));

        let payload_bits =
            (block_bits - zero_bits) as usize * blocks as usize + effective_key_bits as usize;
        let expected_len = PREFIX_LEN + payload_bits.div_ceil(8) + CRC_LEN;
        if bytes.len() != expected_len {
            return Err(malformed(format!("expected {expected_len} bytes, got {}", bytes.len())));
        }
        let (body, crc) = bytes.split_at(bytes.len() - CRC_LEN);
        if crc32fast::hash(body) != u32::from_be_bytes(crc.try_into().unwrap()) {
            return Err(malformed("checksum mismatch"));
        }

        let payload = body[PREFIX_LEN..].view_bits::<Msb0>();
        if payload[payload_bits..].any() {
            return Err(malformed("non-zero padding"));
        }
        let mut offset = 0usize;
        let key_eff = read_bits(payload, &mut offset, effective_key_bits);
        let residue_bits = block_bits - zero_bits;
        let residues = (0..blocks).map(|_| read_bits(payload, &mut offset, residue_bits)).collect();

        let archive = CompressedBlock {
            cipher,
            block_bits,
            effective_key_bits,
            blocks,
            zero_bits,
            threshold,
            key_eff,
            residues,
        };
        archive.check_shape()?;
        Ok(archive)
    }
}

fn push_bits(bits: &mut BitVec<u8, Msb0>, value: u64, width: u32) {
    if width == 0 {
        return;
    }
    let start = bits.len();
    bits.resize(start + width as usize, false);
    bits[start..].store_be::<u64>(value);
}

fn read_bits(bits: &BitSlice<u8, Msb0>, offset: &mut usize, width: u32) -> u64 {
    if width == 0 {
        return 0;
    }
    let v = bits[*offset..*offset + width as usize].load_be::<u64>();
    *offset += width as usize;
    v
}

/// Stores a solved puzzle as key plus ciphertext residues.
pub fn compress(
    profile: &Profile,
    header: &HeaderBits,
    key: CipherKey,
    target: DifficultyTarget,
) -> Result<CompressedBlock, CodecError> {
    if profile.cipher.kind == CipherKind::Caesar {
        return Err(malformed("Caesar profile has no block archive"));
    }
    let puzzle = Puzzle::new(profile, header, target)?;
    if !puzzle.check(key) {
        return Err(CodecError::NotASolution);
    }
    // The archive names the cipher only by geometry, so the round count
    // must be the canonical one for it to decompress.
    if profile.cipher.kind == CipherKind::ToyFeistel && profile.cipher.rounds != TOY_ROUNDS {
        return Err(malformed(format!("toy Feistel archives require {TOY_ROUNDS} rounds")));
    }
    let residues = puzzle.ciphertexts(key)?.into_iter().map(|b| b.0).collect();
    Ok(CompressedBlock {
        cipher: profile.cipher.kind,
        block_bits: profile.cipher.block_bits,
        effective_key_bits: profile.cipher.effective_key_bits,
        blocks: profile.blocks() as u32,
        zero_bits: target.zero_bits(),
        threshold: target.threshold(),
        key_eff: profile.cipher.effective_key(key),
        residues,
    })
}

/// Restores the header bits. Costs `m` decryptions, never a search.
pub fn decompress(archive: &CompressedBlock) -> Result<HeaderBits, CodecError> {
    archive.check_shape()?;
    let profile = archive.profile()?;
    let key = profile.cipher.expand_key(archive.key_eff);
    let schedule = profile.cipher.schedule(key)?;
    let plaintexts: Vec<Block> = archive.residues.iter().map(|r| Block(schedule.decrypt(*r))).collect();
    let (header, embedded) = disassemble_plaintexts(&plaintexts, &profile.plan)?;
    if embedded != key {
        return Err(CodecError::KeyMismatch);
    }
    Ok(header)
}

/// [`decompress`] for 640-bit archives, parsed back into a block header.
pub fn decompress_header(archive: &CompressedBlock) -> Result<BlockHeader, CodecError> {
    let bits = decompress(archive)?;
    if bits.len() != HEADER_BITS as usize {
        return Err(malformed(format!("archive holds {} header bits, not {HEADER_BITS}", bits.len())));
    }
    let header = BlockHeader::from_bytes(&bits.to_bytes())?;
    Ok(header)
}

/// Size accounting for one compressed header.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub original_bits: u64,
    pub compressed_bits: u64,
    pub ratio: f64,
    /// Smallest `n` with `(b - n) m + k_eff < h`, if any `n ≤ b` achieves it.
    pub break_even_n: Option<u32>,
}

impl SizeReport {
    pub fn compresses(&self) -> bool {
        self.compressed_bits < self.original_bits
    }
}

pub fn size_report(block_bits: u32, blocks: u32, effective_key_bits: u32, zero_bits: u32, original_bits: u64) -> SizeReport {
    let size = |n: u32| (block_bits - n) as u64 * blocks as u64 + effective_key_bits as u64;
    let compressed_bits = size(zero_bits.min(block_bits));
    SizeReport {
        original_bits,
        compressed_bits,
        ratio: compressed_bits as f64 / original_bits as f64,
        break_even_n: (0..=block_bits).find(|n| size(*n) < original_bits),
    }
}

/// Caesar demo: with the fixed ciphertext `"AAA"`, a run of three equal
/// letters compresses to the letter itself. Found by trying all 26 shifts.
pub fn caesar_compress(text: &str) -> Result<char, CodecError> {
    let letters: Vec<char> = text.chars().collect();
    if letters.len() != 3 || !letters.iter().all(|c| c.is_ascii_uppercase()) {
        return Err(CodecError::NotCompressible(text.to_owned()));
    }
    for shift in 0..26u8 {
        let fixed = letters
            .iter()
            .all(|c| caesar_shift(shift, *c, Direction::Encrypt).is_ok_and(|e| e == 'A'));
        if fixed {
            return Ok(caesar_shift(shift, 'A', Direction::Decrypt)?);
        }
    }
    Err(CodecError::NotCompressible(text.to_owned()))
}

pub fn caesar_decompress(letter: char) -> Result<String, CodecError> {
    if !letter.is_ascii_uppercase() {
        return Err(CipherError::InvalidSymbol(letter).into());
    }
    let shift = (26 - (letter as u8 - b'A')) % 26;
    "AAA".chars().map(|c| Ok(caesar_shift(shift, c, Direction::Decrypt)?)).collect()
}
