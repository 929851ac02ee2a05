//! Exhaustive key search and the analytic work estimators.
//!
//! Keys are scanned in ascending effective-key order. Ranges may be split
//! across worker threads; under [`Policy::Minimal`] the merged result is
//! the smallest satisfying key regardless of how the range was split.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cipher::{CipherKey, CipherProfile};
use crate::puzzle::{DifficultyTarget, HeaderBits, Profile, Puzzle, PuzzleError};

// How often workers poll the shared stop state.
const POLL_EVERY: u64 = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinerError {
    #[error("key range [{start}, {end}) exceeds the {bits}-bit effective keyspace")]
    RangeOutOfKeyspace { start: u128, end: u128, bits: u32 },
    #[error("hashrate must be positive, got {0}")]
    DivideByZero(f64),
    #[error(transparent)]
    Puzzle(#[from] PuzzleError),
}

/// Half-open range of effective-key indices `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRange {
    pub start: u128,
    pub end: u128,
}

impl KeyRange {
    pub fn new(start: u128, end: u128) -> Self {
        assert!(start <= end, "inverted key range");
        KeyRange { start, end }
    }

    /// The whole effective keyspace of `cipher`.
    pub fn full(cipher: &CipherProfile) -> Self {
        KeyRange { start: 0, end: cipher.keyspace() }
    }

    pub fn len(&self) -> u128 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Splits `range` into `workers` contiguous, disjoint pieces whose sizes
/// differ by at most one. Earlier pieces take the remainder.
pub fn partition(range: KeyRange, workers: usize) -> Vec<KeyRange> {
    let workers = workers.max(1) as u128;
    let (base, extra) = (range.len() / workers, range.len() % workers);
    let mut start = range.start;
    (0..workers)
        .map(|i| {
            let end = start + base + u128::from(i < extra);
            let piece = KeyRange { start, end };
            start = end;
            piece
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Any satisfying key; all workers stop as soon as one is found.
    First,
    /// The smallest satisfying key in the range.
    #[default]
    Minimal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiningResult {
    pub found_key: Option<CipherKey>,
    /// Effective-key index of `found_key` (parity dropped for DES).
    pub effective_key: Option<u64>,
    pub trials: u64,
    pub elapsed: f64,
    pub trials_per_second: f64,
}

impl MiningResult {
    pub fn found(&self) -> bool {
        self.found_key.is_some()
    }
}

/// Progress hook, called with (trials done by this worker, worker's range).
pub type ProgressFn<'a> = &'a (dyn Fn(u64, KeyRange) + Sync);

pub struct MineOptions<'a> {
    pub policy: Policy,
    pub workers: usize,
    pub progress: Option<ProgressFn<'a>>,
    pub progress_stride: u64,
    /// External stop signal; a cancelled search reports what it found so far.
    pub cancel: Option<&'a AtomicBool>,
}

impl Default for MineOptions<'_> {
    fn default() -> Self {
        MineOptions { policy: Policy::Minimal, workers: 1, progress: None, progress_stride: 1 << 20, cancel: None }
    }
}

impl<'a> MineOptions<'a> {
    pub fn with_policy(policy: Policy) -> Self {
        MineOptions { policy, ..Default::default() }
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }
}

struct Shared<'a> {
    policy: Policy,
    best: AtomicU64,
    any_found: AtomicBool,
    cancel: Option<&'a AtomicBool>,
}

impl Shared<'_> {
    fn should_stop(&self, next: u64) -> bool {
        if self.cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            return true;
        }
        match self.policy {
            Policy::First => self.any_found.load(Ordering::Relaxed),
            // a smaller key is already known
            Policy::Minimal => self.any_found.load(Ordering::Relaxed) && next > self.best.load(Ordering::Relaxed),
        }
    }

    fn record(&self, key: u64) {
        self.best.fetch_min(key, Ordering::Relaxed);
        self.any_found.store(true, Ordering::Release);
    }
}

fn search(puzzle: &Puzzle, range: KeyRange, shared: &Shared, opts: &MineOptions) -> (Option<u64>, u64) {
    if range.is_empty() {
        return (None, 0);
    }
    let start = range.start as u64;
    let last = (range.end - 1) as u64;
    let mut trials = 0u64;
    let mut key = start;
    loop {
        if trials.is_multiple_of(POLL_EVERY) && shared.should_stop(key) {
            return (None, trials);
        }
        trials += 1;
        if puzzle.try_effective(key) {
            shared.record(key);
            return (Some(key), trials);
        }
        if let Some(cb) = opts.progress {
            if opts.progress_stride > 0 && trials.is_multiple_of(opts.progress_stride) {
                cb(trials, range);
            }
        }
        if key == last {
            return (None, trials);
        }
        key += 1;
    }
}

/// Searches `range` for a key solving `puzzle`.
///
/// Unsolvable puzzles are reported as exhaustion (`found_key == None`); the
/// miner never mutates the header.
pub fn mine(puzzle: &Puzzle, range: KeyRange, opts: &MineOptions) -> Result<MiningResult, MinerError> {
    let cipher = puzzle.cipher();
    if range.end > cipher.keyspace() {
        return Err(MinerError::RangeOutOfKeyspace {
            start: range.start,
            end: range.end,
            bits: cipher.effective_key_bits,
        });
    }
    let started = Instant::now();
    let shared = Shared {
        policy: opts.policy,
        best: AtomicU64::new(u64::MAX),
        any_found: AtomicBool::new(false),
        cancel: opts.cancel,
    };
    let pieces = partition(range, opts.workers);
    let outcomes: Vec<(Option<u64>, u64)> = if pieces.len() == 1 {
        vec![search(puzzle, range, &shared, opts)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = pieces
                .iter()
                .map(|piece| {
                    let shared = &shared;
                    scope.spawn(move || search(puzzle, *piece, shared, opts))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("mining worker panicked")).collect()
        })
    };
    let trials = outcomes.iter().map(|(_, t)| t).sum();
    let effective = match opts.policy {
        Policy::Minimal => outcomes.iter().filter_map(|(k, _)| *k).min(),
        Policy::First => outcomes.iter().find_map(|(k, _)| *k),
    };
    let found_key = effective.map(|k| cipher.expand_key(k));
    if let Some(key) = found_key {
        debug_assert!(puzzle.check(key), "miner produced a non-solution");
    }
    let elapsed = started.elapsed().as_secs_f64();
    Ok(MiningResult {
        found_key,
        effective_key: effective,
        trials,
        elapsed,
        trials_per_second: if elapsed > 0.0 { trials as f64 / elapsed } else { 0.0 },
    })
}

/// Single-threaded search over raw header bits.
pub fn mine_bits(
    profile: &Profile,
    header: &HeaderBits,
    target: DifficultyTarget,
    range: KeyRange,
    policy: Policy,
) -> Result<MiningResult, MinerError> {
    let puzzle = Puzzle::new(profile, header, target)?;
    mine(&puzzle, range, &MineOptions::with_policy(policy))
}

/// Closed-form work figures under the ideal-cipher model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkEstimate {
    /// Probability a single key satisfies all `m` blocks, `(T/2^b)^m`.
    pub success_probability: f64,
    pub expected_trials: f64,
    pub expected_solutions: f64,
    /// `1 - exp(-expected_solutions)` (Poisson model).
    pub solvability_probability: f64,
    /// Time to exhaust the whole keyspace at `hashrate`.
    pub worst_case_seconds: f64,
}

pub fn work_estimate(
    effective_key_bits: u32,
    block_bits: u32,
    blocks: u32,
    threshold: u128,
    hashrate: f64,
) -> Result<WorkEstimate, MinerError> {
    if hashrate.is_nan() || hashrate <= 0.0 {
        return Err(MinerError::DivideByZero(hashrate));
    }
    let target = DifficultyTarget::new(threshold, block_bits)?;
    let log2_p = blocks as f64 * target.block_probability().log2();
    let p = log2_p.exp2();
    let expected_solutions = (effective_key_bits as f64 + log2_p).exp2();
    Ok(WorkEstimate {
        success_probability: p,
        expected_trials: (-log2_p).exp2(),
        expected_solutions,
        solvability_probability: -(-expected_solutions).exp_m1(),
        worst_case_seconds: (effective_key_bits as f64).exp2() / hashrate,
    })
}

/// Model probability that a random header has at least one solution with
/// `n` leading zero bits per block: `1 - exp(-2^{k_eff - m n})`.
pub fn solvability_model(effective_key_bits: u32, blocks: u32, zero_bits: u32) -> f64 {
    let expected = (effective_key_bits as f64 - (blocks * zero_bits) as f64).exp2();
    -(-expected).exp_m1()
}

/// One row of a throughput measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub profile: String,
    pub zero_bits: u32,
    pub trials: u64,
    pub trials_per_second: f64,
}

/// Measures raw key-trial throughput on a fixed pseudo-random header.
/// The search always runs `trials` keys: solutions found early are ignored.
pub fn measure_rate(profile: &Profile, zero_bits: u32, trials: u64) -> Result<BenchRow, MinerError> {
    let bytes: Vec<u8> = (0..profile.header_bits().div_ceil(8)).map(|i| (i as u8).wrapping_mul(0x9D) ^ 0x5C).collect();
    let mut header_bytes = bytes;
    let spare = header_bytes.len() * 8 - profile.header_bits() as usize;
    if let Some(last) = header_bytes.last_mut() {
        *last &= (0xFFu16 << spare) as u8;
    }
    let header = HeaderBits::from_bytes(&header_bytes, profile.header_bits() as usize)?;
    let target = DifficultyTarget::from_zero_bits(zero_bits, profile.block_bits())?;
    let puzzle = Puzzle::new(profile, &header, target)?;
    let trials = trials.min(u64::try_from(profile.cipher.keyspace()).unwrap_or(u64::MAX));
    let started = Instant::now();
    let mut hits = 0u64;
    for k in 0..trials {
        hits += u64::from(puzzle.try_effective(k));
    }
    std::hint::black_box(hits);
    let elapsed = started.elapsed().as_secs_f64();
    Ok(BenchRow {
        profile: profile.name.clone(),
        zero_bits,
        trials,
        trials_per_second: if elapsed > 0.0 { trials as f64 / elapsed } else { 0.0 },
    })
}
