//! Seeded discrete-event simulation of competing miners.
//!
//! Every node keeps its own [`ChainState`]. Two event kinds drive the run:
//! a miner finding a block on its current tip, and a node receiving a block
//! after link latency. Whenever a node's tip changes it restarts mining on
//! the new tip.
//!
//! In `sampled` mode the time to the next block is drawn as exponential with
//! rate `hashrate * (T / 2^b)^m` and blocks carry a placeholder key. In
//! `real` mode the miner actually searches the keyspace and the time taken is
//! `trials / hashrate`; exhausted puzzles bump the timestamp and retry.
//!
//! All randomness comes from one `ChaCha8Rng` seeded with `seed` via
//! `SeedableRng::seed_from_u64`, consumed in event order, so a seed fixes
//! the whole run.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainConfig, ChainState, RetargetConfig, SolvedBlock, Submitted};
use crate::cipher::CipherKey;
use crate::codec::size_report;
use crate::miner::{mine, solvability_model, KeyRange, MineOptions, Policy};
use crate::puzzle::{
    encode_target_field, BlockHeader, BlockId, DifficultyTarget, HeaderBits, Profile, ProfileSpec, Puzzle,
};

/// Largest keyspace `real` mode will search, `2^24`.
pub const DESK_SCALE_KEYSPACE: u128 = 1 << 24;
const MAX_RETRIES_PER_BLOCK: u64 = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error("keyspace of 2^{0} keys exceeds the desk-scale limit of 2^24")]
    DeskScaleExceeded(u32),
    #[error("no solvable header after {0} timestamp bumps")]
    Unsolvable(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinerSpec {
    pub id: String,
    /// Key trials per simulated second.
    pub hashrate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LatencyModel {
    Constant { seconds: f64 },
    Uniform { min: f64, max: f64 },
}

impl LatencyModel {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            LatencyModel::Constant { seconds } => seconds,
            LatencyModel::Uniform { min, max } => min + (max - min) * rng.random::<f64>(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Real,
    #[default]
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub miners: Vec<MinerSpec>,
    pub latency: LatencyModel,
    /// Simulated seconds during which miners may find blocks.
    pub duration: f64,
    pub profile: ProfileSpec,
    pub retarget: RetargetConfig,
    pub mode: SimMode,
    /// Leading zero bits required of genesis' children.
    pub genesis_zero_bits: u32,
    /// Worker threads per search in `real` mode.
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl SimConfig {
    pub fn validate(&self) -> Result<Profile, SimError> {
        let invalid = |m: String| Err(SimError::ConfigInvalid(m));
        let profile = self.profile.resolve().map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
        if self.miners.is_empty() {
            return invalid("at least one miner is required".into());
        }
        if let Some(m) = self.miners.iter().find(|m| !(m.hashrate > 0.0 && m.hashrate.is_finite())) {
            return invalid(format!("miner {} has non-positive hashrate {}", m.id, m.hashrate));
        }
        if !(self.duration > 0.0 && self.duration < u32::MAX as f64) {
            return invalid(format!("duration {} outside (0, 2^32)", self.duration));
        }
        match self.latency {
            LatencyModel::Constant { seconds } if !(seconds >= 0.0 && seconds.is_finite()) => {
                return invalid(format!("latency {seconds} must be non-negative"));
            }
            LatencyModel::Uniform { min, max } if !(min >= 0.0 && max >= min && max.is_finite()) => {
                return invalid(format!("uniform latency bounds [{min}, {max}] invalid"));
            }
            _ => {}
        }
        if self.retarget.interval == 0 || self.retarget.target_spacing == 0 || self.retarget.clamp == 0 {
            return invalid("retarget interval, spacing and clamp must be positive".into());
        }
        if self.genesis_zero_bits > profile.block_bits() {
            return invalid(format!("genesis zero bits {} exceed block size", self.genesis_zero_bits));
        }
        if self.mode == SimMode::Real && profile.cipher.keyspace() > DESK_SCALE_KEYSPACE {
            return invalid(format!(
                "real mode needs a keyspace of at most 2^24, profile {} has 2^{}",
                profile.name, profile.cipher.effective_key_bits
            ));
        }
        Ok(profile)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinerShare {
    pub id: String,
    pub blocks: u64,
    pub share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    /// Blocks on the final best chain (genesis excluded).
    pub blocks_accepted: u64,
    pub blocks_mined: u64,
    /// Heights at which more than one block was mined.
    pub forks_observed: u64,
    /// Mined blocks that ended up off the best chain.
    pub stale_blocks: u64,
    pub max_reorg_depth: u64,
    pub shares: Vec<MinerShare>,
    /// Mean seconds between best-chain blocks.
    pub mean_block_spacing: f64,
    /// Mean spacing within each complete retarget window of the best chain.
    pub window_spacings: Vec<f64>,
    /// `(b - n) m + k_eff` for every best-chain block, in height order.
    pub compressed_bits: Vec<u64>,
    pub mean_compressed_bits: f64,
    pub unsolvable_retries: u64,
    pub rejected_blocks: u64,
    /// Every node agrees on the tip once no events remain.
    pub converged: bool,
    pub final_tip: String,
}

impl SimStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    /// One header row and one data row; per-miner shares become columns.
    pub fn to_csv(&self) -> String {
        let mut header: Vec<String> = [
            "blocks_accepted",
            "blocks_mined",
            "forks_observed",
            "stale_blocks",
            "max_reorg_depth",
            "mean_block_spacing",
            "mean_compressed_bits",
            "unsolvable_retries",
            "rejected_blocks",
            "converged",
            "final_tip",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let mut row = vec![
            self.blocks_accepted.to_string(),
            self.blocks_mined.to_string(),
            self.forks_observed.to_string(),
            self.stale_blocks.to_string(),
            self.max_reorg_depth.to_string(),
            self.mean_block_spacing.to_string(),
            self.mean_compressed_bits.to_string(),
            self.unsolvable_retries.to_string(),
            self.rejected_blocks.to_string(),
            self.converged.to_string(),
            self.final_tip.clone(),
        ];
        for s in &self.shares {
            header.push(format!("share_{}", s.id));
            row.push(s.share.to_string());
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header).expect("in-memory write");
        w.write_record(&row).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

#[derive(Clone, Debug)]
enum EventKind {
    Found { miner: usize, generation: u64, block: SolvedBlock },
    Receive { node: usize, block: SolvedBlock, found_at: f64 },
}

#[derive(Clone, Debug)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

// Min-heap order on (time, seq).
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

struct Node {
    chain: ChainState,
    generation: u64,
}

/// One processed event, for inspecting the timeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub time: f64,
    pub node: usize,
    pub kind: String,
    pub block: String,
}

struct Sim<'a> {
    config: &'a SimConfig,
    profile: Profile,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Event>,
    seq: u64,
    nodes: Vec<Node>,
    // global view: every mined block, inserted at its find time
    observer: ChainState,
    miner_of: BTreeMap<BlockId, usize>,
    found_at: BTreeMap<BlockId, f64>,
    counter: u64,
    blocks_mined: u64,
    unsolvable_retries: u64,
    rejected: u64,
    max_reorg: u64,
    trace: Option<Vec<TraceEntry>>,
}

impl Sim<'_> {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event { time, seq: self.seq, kind });
    }

    fn next_header(&mut self, node: usize, now: f64) -> (BlockHeader, u64) {
        let chain = &self.nodes[node].chain;
        let parent = chain.tip();
        let parent_block = chain.get(&parent).expect("tip present");
        let threshold = chain.expected_threshold(&parent).expect("tip present");
        self.counter += 1;
        let mut merkle_root = [0u8; 32];
        merkle_root[..4].copy_from_slice(&(node as u32).to_be_bytes());
        merkle_root[4..12].copy_from_slice(&self.counter.to_be_bytes());
        self.rng.fill(&mut merkle_root[12..]);
        let timestamp = (parent_block.header.timestamp + 1).max(now.floor() as u32);
        let header = BlockHeader {
            version: 1,
            prev_id: parent.0,
            merkle_root,
            timestamp,
            target_field: encode_target_field(threshold),
        };
        (header, parent_block.height + 1)
    }

    fn start_mining(&mut self, node: usize, now: f64) -> Result<(), SimError> {
        self.nodes[node].generation += 1;
        let generation = self.nodes[node].generation;
        let hashrate = self.config.miners[node].hashrate;
        let (mut header, height) = self.next_header(node, now);
        let target = DifficultyTarget::from_field(header.target_field, self.profile.block_bits())
            .expect("retarget keeps T within range");
        let (delay, key) = match self.config.mode {
            SimMode::Sampled => {
                let rate = hashrate * target.block_probability().powi(self.profile.blocks() as i32);
                let u: f64 = self.rng.random();
                (-(1.0 - u).ln() / rate, CipherKey(0))
            }
            SimMode::Real => {
                let mut spent = 0.0;
                let mut retries = 0u64;
                loop {
                    let bits: HeaderBits = self.profile.puzzle_bits(&header).expect("profile validated");
                    let puzzle = Puzzle::new(&self.profile, &bits, target).expect("widths match");
                    let opts = MineOptions::with_policy(Policy::Minimal).workers(self.config.workers);
                    let result = mine(&puzzle, KeyRange::full(&self.profile.cipher), &opts).expect("full range");
                    spent += result.trials as f64 / hashrate;
                    if let Some(key) = result.found_key {
                        break (spent, key);
                    }
                    retries += 1;
                    self.unsolvable_retries += 1;
                    if retries > MAX_RETRIES_PER_BLOCK {
                        return Err(SimError::Unsolvable(retries));
                    }
                    header.timestamp += 1;
                }
            }
        };
        let at = now + delay;
        if self.config.mode == SimMode::Sampled {
            // no puzzle binds the timestamp, so stamp the find time
            header.timestamp = header.timestamp.max(at.min(u32::MAX as f64).floor() as u32);
        }
        if at <= self.config.duration {
            let block = SolvedBlock { header, key, height };
            self.push(at, EventKind::Found { miner: node, generation, block });
        }
        Ok(())
    }

    fn accept(&mut self, node: usize, block: SolvedBlock, found_at: f64, now: f64) -> Result<(), SimError> {
        let old_tip = self.nodes[node].chain.tip();
        match self.nodes[node].chain.submit(block, found_at) {
            Ok(Submitted::Accepted) | Ok(Submitted::Buffered) | Ok(Submitted::AlreadyKnown) => {}
            Err(_) => {
                self.rejected += 1;
                return Ok(());
            }
        }
        let new_tip = self.nodes[node].chain.tip();
        if new_tip != old_tip {
            let depth = self.nodes[node].chain.reorg_depth(&old_tip, &new_tip);
            self.max_reorg = self.max_reorg.max(depth);
            if now <= self.config.duration {
                self.start_mining(node, now)?;
            } else {
                self.nodes[node].generation += 1;
            }
        }
        Ok(())
    }

    fn record(&mut self, time: f64, node: usize, kind: &str, block: &SolvedBlock) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEntry { time, node, kind: kind.into(), block: block.id().to_string() });
        }
    }

    fn run(&mut self) -> Result<(), SimError> {
        for node in 0..self.nodes.len() {
            self.start_mining(node, 0.0)?;
        }
        let mut last_time = 0.0f64;
        while let Some(event) = self.queue.pop() {
            assert!(event.time >= last_time, "event processed out of order");
            last_time = event.time;
            let now = event.time;
            match event.kind {
                EventKind::Found { miner, generation, block } => {
                    if self.nodes[miner].generation != generation {
                        continue;
                    }
                    self.record(now, miner, "found", &block);
                    let id = block.id();
                    self.blocks_mined += 1;
                    self.miner_of.insert(id, miner);
                    self.found_at.insert(id, now);
                    self.observer.submit(block, now).ok();
                    for peer in 0..self.nodes.len() {
                        if peer != miner {
                            let delay = self.config.latency.sample(&mut self.rng);
                            self.push(now + delay, EventKind::Receive { node: peer, block, found_at: now });
                        }
                    }
                    self.accept(miner, block, now, now)?;
                }
                EventKind::Receive { node, block, found_at } => {
                    self.record(now, node, "receive", &block);
                    self.accept(node, block, found_at, now)?;
                }
            }
        }
        Ok(())
    }

    fn stats(&self) -> SimStats {
        let reference = &self.nodes[0].chain;
        let converged = self.nodes.iter().all(|n| n.chain.tip() == reference.tip());
        let main = reference.main_chain();
        let blocks_accepted = main.len() as u64 - 1;

        let mut per_miner = vec![0u64; self.config.miners.len()];
        for id in &main[1..] {
            per_miner[self.miner_of[id]] += 1;
        }
        let shares = self
            .config
            .miners
            .iter()
            .zip(&per_miner)
            .map(|(m, &blocks)| MinerShare {
                id: m.id.clone(),
                blocks,
                share: if blocks_accepted > 0 { blocks as f64 / blocks_accepted as f64 } else { 0.0 },
            })
            .collect();

        let times: Vec<f64> = main.iter().map(|id| self.found_at.get(id).copied().unwrap_or(0.0)).collect();
        let mean_block_spacing =
            if blocks_accepted > 0 { (times[times.len() - 1] - times[0]) / blocks_accepted as f64 } else { 0.0 };
        let r = self.config.retarget.interval as usize;
        let window_spacings = (0..)
            .map(|w| (w * r, (w + 1) * r))
            .take_while(|(_, end)| *end < times.len())
            .map(|(start, end)| (times[end] - times[start]) / r as f64)
            .collect();

        let b = self.profile.block_bits();
        let compressed_bits: Vec<u64> = main[1..]
            .iter()
            .map(|id| {
                let block = reference.get(id).expect("main chain block");
                let n = DifficultyTarget::from_field(block.header.target_field, b).map(|t| t.zero_bits()).unwrap_or(0);
                size_report(
                    b,
                    self.profile.blocks() as u32,
                    self.profile.cipher.effective_key_bits,
                    n,
                    self.profile.header_bits() as u64,
                )
                .compressed_bits
            })
            .collect();
        let mean_compressed_bits = if compressed_bits.is_empty() {
            0.0
        } else {
            compressed_bits.iter().sum::<u64>() as f64 / compressed_bits.len() as f64
        };

        let mut per_height: BTreeMap<u64, u64> = BTreeMap::new();
        for id in self.miner_of.keys() {
            if let Some(b) = self.observer.get(id) {
                *per_height.entry(b.height).or_default() += 1;
            }
        }
        SimStats {
            blocks_accepted,
            blocks_mined: self.blocks_mined,
            forks_observed: per_height.values().filter(|c| **c > 1).count() as u64,
            stale_blocks: self.blocks_mined - blocks_accepted,
            max_reorg_depth: self.max_reorg,
            shares,
            mean_block_spacing,
            window_spacings,
            compressed_bits,
            mean_compressed_bits,
            unsolvable_retries: self.unsolvable_retries,
            rejected_blocks: self.rejected,
            converged,
            final_tip: reference.tip().to_string(),
        }
    }
}

fn build(config: &SimConfig, trace: bool) -> Result<Sim<'_>, SimError> {
    let profile = config.validate()?;
    let chain_config = ChainConfig {
        profile: profile.clone(),
        retarget: config.retarget,
        genesis_threshold: 1u128 << (profile.block_bits() - config.genesis_zero_bits),
        verify_solutions: config.mode == SimMode::Real,
    };
    let nodes = config.miners.iter().map(|_| Node { chain: ChainState::new(chain_config.clone()), generation: 0 }).collect();
    Ok(Sim {
        config,
        profile,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        queue: BinaryHeap::new(),
        seq: 0,
        nodes,
        observer: ChainState::new(chain_config),
        miner_of: BTreeMap::new(),
        found_at: BTreeMap::new(),
        counter: 0,
        blocks_mined: 0,
        unsolvable_retries: 0,
        rejected: 0,
        max_reorg: 0,
        trace: trace.then(Vec::new),
    })
}

/// Runs the simulation to quiescence: mining stops at `duration`, then
/// in-flight blocks are delivered.
pub fn run(config: &SimConfig) -> Result<SimStats, SimError> {
    let mut sim = build(config, false)?;
    sim.run()?;
    Ok(sim.stats())
}

/// [`run`], also returning every processed event in order and each node's
/// final chain.
pub fn run_traced(config: &SimConfig) -> Result<(SimStats, Vec<TraceEntry>, Vec<ChainState>), SimError> {
    let mut sim = build(config, true)?;
    sim.run()?;
    let stats = sim.stats();
    let chains = sim.nodes.into_iter().map(|n| n.chain).collect();
    Ok((stats, sim.trace.unwrap_or_default(), chains))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub zero_bits: u32,
    pub headers: u64,
    pub solvable: u64,
    pub fraction_solvable: f64,
    /// `1 - exp(-2^{k_eff - m n})`.
    pub model: f64,
    /// Binomial standard error of the model at this sample size.
    pub sigma: f64,
}

/// For each `n`, searches the full keyspace for `headers_per_point` random
/// headers and reports the solvable fraction next to the Poisson model.
pub fn sweep_solvability(
    profile: &Profile,
    zero_bits: impl IntoIterator<Item = u32>,
    headers_per_point: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<SweepRow>, SimError> {
    if profile.cipher.keyspace() > DESK_SCALE_KEYSPACE {
        return Err(SimError::DeskScaleExceeded(profile.cipher.effective_key_bits));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = profile.header_bits() as usize;
    let mut rows = Vec::new();
    for n in zero_bits {
        let target = DifficultyTarget::from_zero_bits(n, profile.block_bits())
            .map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
        let mut solvable = 0u64;
        for _ in 0..headers_per_point {
            let bits = random_header_bits(&mut rng, h);
            let puzzle = Puzzle::new(profile, &bits, target).map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
            let opts = MineOptions::with_policy(Policy::First).workers(workers);
            let result = mine(&puzzle, KeyRange::full(&profile.cipher), &opts).expect("full range is in bounds");
            solvable += u64::from(result.found());
        }
        let model = solvability_model(profile.cipher.effective_key_bits, profile.blocks() as u32, n);
        rows.push(SweepRow {
            zero_bits: n,
            headers: headers_per_point,
            solvable,
            fraction_solvable: solvable as f64 / headers_per_point.max(1) as f64,
            model,
            sigma: (model * (1.0 - model) / headers_per_point.max(1) as f64).sqrt(),
        });
    }
    Ok(rows)
}

/// Uniform random `bits`-bit header drawn from `rng`.
pub fn random_header_bits(rng: &mut impl Rng, bits: usize) -> HeaderBits {
    let mut bytes = vec![0u8; bits.div_ceil(8)];
    rng.fill(&mut bytes[..]);
    let spare = bytes.len() * 8 - bits;
    if let Some(last) = bytes.last_mut() {
        *last &= (0xFFu16 << spare) as u8;
    }
    HeaderBits::from_bytes(&bytes, bits).expect("padding cleared")
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}
