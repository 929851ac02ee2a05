//! Independent oracles shared by the integration tests.
//!
//! Nothing here goes through `poew_core::puzzle`: segmentation is redone
//! with plain `Vec<bool>` bit lists, and DES comes from the RustCrypto
//! `des` crate.
#![allow(dead_code)]

use des::cipher::generic_array::GenericArray;
use des::cipher::{BlockDecrypt, BlockEncrypt, KeyInit};
use poew_core::cipher::{encrypt_block, Block, CipherKey, CipherKind, CipherProfile};
use poew_core::chain::{ChainConfig, ChainState, RetargetConfig, SolvedBlock};
use poew_core::miner::{mine, KeyRange, MineOptions, Policy};
use poew_core::puzzle::{BlockHeader, DifficultyTarget, HeaderBits, Profile, Puzzle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// (key, plaintext, ciphertext) from the FIPS 81 / NBS 500-20 tables and
// common DES tutorials.
pub const PUBLISHED: [(u64, u64, u64); 7] = [
    (0x133457799BBCDFF1, 0x0123456789ABCDEF, 0x85E813540F0AB405),
    (0x0123456789ABCDEF, 0x4E6F772069732074, 0x3FA40E8A984D4815),
    (0x0101010101010101, 0x8000000000000000, 0x95F8A5E5DD31D900),
    (0x0101010101010101, 0x0000000000000001, 0x166B40B44ABA4BD6),
    (0x8001010101010101, 0x0000000000000000, 0x95A8D72813DAA94D),
    (0x0E329232EA6D0D73, 0x8787878787878787, 0x0000000000000000),
    (0x10316E028C8F3B4A, 0x0000000000000000, 0x82DCBAFBDEAB6602),
];


pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ref_des_encrypt(key: u64, block: u64) -> u64 {
    let cipher = des::Des::new_from_slice(&key.to_be_bytes()).unwrap();
    let mut b = GenericArray::from(block.to_be_bytes());
    cipher.encrypt_block(&mut b);
    u64::from_be_bytes(b.into())
}

pub fn ref_des_decrypt(key: u64, block: u64) -> u64 {
    let cipher = des::Des::new_from_slice(&key.to_be_bytes()).unwrap();
    let mut b = GenericArray::from(block.to_be_bytes());
    cipher.decrypt_block(&mut b);
    u64::from_be_bytes(b.into())
}

fn bits_of(value: u64, width: u32) -> Vec<bool> {
    (0..width).rev().map(|i| (value >> i) & 1 == 1).collect()
}

fn value_of(bits: &[bool]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
}

pub fn header_bool_bits(header: &HeaderBits) -> Vec<bool> {
    let bytes = header.to_bytes();
    (0..header.len()).map(|i| bytes[i / 8] >> (7 - i % 8) & 1 == 1).collect()
}

/// Plaintext blocks built by walking bit lists: the first `k mod m` blocks
/// take one extra key bit, header bits go high and key bits low.
pub fn ref_plaintexts(h_bits: &[bool], key: u64, k: u32, b: u32) -> Vec<u64> {
    let h = h_bits.len() as u32;
    assert_eq!((h + k) % b, 0);
    let m = (h + k) / b;
    let key_bits = bits_of(key, k);
    let (mut hp, mut kp) = (0usize, 0usize);
    (0..m)
        .map(|i| {
            let kw = (k / m + u32::from(i < k % m)) as usize;
            let hw = b as usize - kw;
            let mut block = h_bits[hp..hp + hw].to_vec();
            block.extend_from_slice(&key_bits[kp..kp + kw]);
            hp += hw;
            kp += kw;
            value_of(&block)
        })
        .collect()
}

pub fn ref_encrypt(cipher: &CipherProfile, key: u64, block: u64) -> u64 {
    match cipher.kind {
        CipherKind::Des => ref_des_encrypt(key, block),
        _ => encrypt_block(cipher, CipherKey(key), Block(block)).unwrap().0,
    }
}

/// Solution predicate recomputed from scratch.
pub fn ref_check(profile: &Profile, header: &HeaderBits, key: u64, threshold: u128) -> bool {
    let c = &profile.cipher;
    ref_plaintexts(&header_bool_bits(header), key, c.key_bits, c.block_bits)
        .into_iter()
        .all(|p| (ref_encrypt(c, key, p) as u128) < threshold)
}

/// Smallest effective key satisfying the puzzle, by trying every key.
pub fn ref_minimal_key(profile: &Profile, header: &HeaderBits, threshold: u128) -> Option<u64> {
    (0..profile.cipher.keyspace() as u64).find(|&eff| {
        let key = profile.cipher.expand_key(eff).0;
        ref_check(profile, header, key, threshold)
    })
}

/// Every effective key satisfying the puzzle.
pub fn ref_all_keys(profile: &Profile, header: &HeaderBits, threshold: u128) -> Vec<u64> {
    (0..profile.cipher.keyspace() as u64)
        .filter(|&eff| ref_check(profile, header, profile.cipher.expand_key(eff).0, threshold))
        .collect()
}

pub fn random_bits(rng: &mut impl Rng, bits: usize) -> HeaderBits {
    poew_core::simnet::random_header_bits(rng, bits)
}

/// A solved toy instance: `(header, key, target)`.
pub fn mined_toy(rng: &mut impl Rng, n: u32) -> (HeaderBits, CipherKey, DifficultyTarget) {
    let profile = Profile::toy16();
    let target = DifficultyTarget::from_zero_bits(n, 16).unwrap();
    loop {
        let header = random_bits(rng, 48);
        let puzzle = Puzzle::new(&profile, &header, target).unwrap();
        let r = mine(&puzzle, KeyRange::full(&profile.cipher), &MineOptions::with_policy(Policy::First)).unwrap();
        if let Some(key) = r.found_key {
            return (header, key, target);
        }
    }
}

pub fn toy_chain_config(zero_bits: u32) -> ChainConfig {
    ChainConfig {
        profile: Profile::toy16(),
        retarget: RetargetConfig { interval: 4, target_spacing: 10, ..Default::default() },
        genesis_threshold: 1 << (16 - zero_bits),
        verify_solutions: true,
    }
}

/// Mines a real child of `parent` on `chain`, bumping the timestamp when a
/// header has no solution.
pub fn mine_child(chain: &ChainState, parent: &poew_core::BlockId, timestamp: u32, tag: u8) -> SolvedBlock {
    let p = chain.get(parent).unwrap();
    let threshold = chain.expected_threshold(parent).unwrap();
    let profile = &chain.config().profile;
    let mut header = BlockHeader {
        version: 1,
        prev_id: parent.0,
        merkle_root: [tag; 32],
        timestamp: timestamp.max(p.header.timestamp + 1),
        target_field: poew_core::puzzle::encode_target_field(threshold),
    };
    let target = DifficultyTarget::new(threshold, profile.block_bits()).unwrap();
    loop {
        let bits = profile.puzzle_bits(&header).unwrap();
        let puzzle = Puzzle::new(profile, &bits, target).unwrap();
        let r = mine(&puzzle, KeyRange::full(&profile.cipher), &MineOptions::default()).unwrap();
        if let Some(key) = r.found_key {
            return SolvedBlock { header, key, height: p.height + 1 };
        }
        header.timestamp += 1;
    }
}
