//! Minimal chain state: validation, heaviest-work fork choice and a
//! difficulty retarget.
//!
//! The work credited to a block with threshold `T` is `2^{m n(T)}` where
//! `n(T) = b - ceil(log2 T)`, the expected number of key trials for an
//! `n`-zero-bit puzzle over `m` blocks.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cipher::CipherKey;
use crate::puzzle::{
    block_id, ceil_log2, check_header, encode_target_field, BlockHeader, BlockId, DifficultyTarget, Profile,
    HEADER_BYTES,
};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reject {
    #[error("parent block is unknown")]
    UnknownParent,
    #[error("key does not solve the header puzzle")]
    BadSolution,
    #[error("timestamp does not advance past the parent")]
    BadTimestamp,
    #[error("target field differs from the retarget rule")]
    BadTarget,
    #[error("height is not parent height + 1")]
    BadHeight,
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("malformed chain export: {0}")]
    Malformed(String),
    #[error("block {index} rejected on import: {reason}")]
    Rejected { index: usize, reason: Reject },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolvedBlock {
    pub header: BlockHeader,
    pub key: CipherKey,
    pub height: u64,
}

impl SolvedBlock {
    pub fn id(&self) -> BlockId {
        block_id(&self.header)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetargetRule {
    /// `T' = T * actual / expected`.
    Linear,
    /// `T' = T * (actual / expected)^{1/m}`: scales expected work, which
    /// grows as `T^-m`, in proportion to the timespan error.
    #[default]
    WorkScaled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetargetConfig {
    /// Blocks per retarget window, `R ≥ 1`.
    pub interval: u64,
    /// Desired seconds between blocks.
    pub target_spacing: u64,
    pub clamp: u32,
    #[serde(default)]
    pub rule: RetargetRule,
}

impl Default for RetargetConfig {
    fn default() -> Self {
        RetargetConfig { interval: 16, target_spacing: 600, clamp: 4, rule: RetargetRule::WorkScaled }
    }
}

impl RetargetConfig {
    /// Next threshold given the current one and the window's timespan.
    ///
    /// The result is clamped to `[T/clamp, T*clamp]` and to `[1, 2^b]`.
    pub fn adjust(&self, threshold: u128, actual_span: u64, block_bits: u32, blocks: u32) -> u128 {
        let expected_span = self.interval * self.target_spacing;
        let max = 1u128 << block_bits;
        if actual_span == expected_span {
            return threshold;
        }
        let clamp = self.clamp.max(1) as u128;
        let lo = (threshold / clamp).max(1);
        let hi = threshold.saturating_mul(clamp).min(max);
        let next = match self.rule {
            RetargetRule::Linear => {
                // exact integer rounding; T ≤ 2^64 and spans fit in 64 bits
                let num = threshold * actual_span as u128;
                let den = expected_span as u128;
                (num + den / 2) / den
            }
            RetargetRule::WorkScaled => {
                let c = clamp as f64;
                let ratio = (actual_span as f64 / expected_span as f64).clamp(1.0 / c, c);
                (threshold as f64 * ratio.powf(1.0 / blocks.max(1) as f64)).round() as u128
            }
        };
        next.clamp(lo, hi).clamp(1, max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub profile: Profile,
    pub retarget: RetargetConfig,
    pub genesis_threshold: u128,
    /// Sampled-mode simulations carry placeholder keys and skip this check.
    pub verify_solutions: bool,
}

impl ChainConfig {
    pub fn genesis(&self) -> SolvedBlock {
        SolvedBlock {
            header: BlockHeader {
                version: 1,
                prev_id: [0; 32],
                merkle_root: [0; 32],
                timestamp: 0,
                target_field: encode_target_field(self.genesis_threshold),
            },
            key: CipherKey(0),
            height: 0,
        }
    }

    /// Per-block work `2^{m n(T)}`.
    pub fn block_work(&self, threshold: u128) -> BigUint {
        let b = self.profile.block_bits();
        let n = b - ceil_log2(threshold.clamp(1, 1u128 << b));
        BigUint::from(1u8) << (self.profile.blocks() as u64 * n as u64)
    }
}

#[derive(Clone, Debug)]
struct Entry {
    block: SolvedBlock,
    work: BigUint,
    arrival: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Submitted {
    Accepted,
    AlreadyKnown,
    /// Parent not yet known; held until it arrives.
    Buffered,
}

/// Block tree with cached best tip. One writer at a time; clone for a
/// consistent snapshot.
#[derive(Clone, Debug)]
pub struct ChainState {
    config: ChainConfig,
    genesis: BlockId,
    entries: BTreeMap<BlockId, Entry>,
    tip: BlockId,
    orphans: BTreeMap<BlockId, Vec<(SolvedBlock, f64)>>,
}

impl ChainState {
    pub fn new(config: ChainConfig) -> Self {
        let genesis = config.genesis();
        let id = genesis.id();
        let work = config.block_work(genesis.header.threshold());
        let mut entries = BTreeMap::new();
        entries.insert(id, Entry { block: genesis, work, arrival: 0.0 });
        ChainState { config, genesis: id, entries, tip: id, orphans: BTreeMap::new() }
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn genesis_id(&self) -> BlockId {
        self.genesis
    }

    pub fn tip(&self) -> BlockId {
        self.tip
    }

    pub fn tip_block(&self) -> &SolvedBlock {
        &self.entries[&self.tip].block
    }

    pub fn height(&self) -> u64 {
        self.tip_block().height
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn get(&self, id: &BlockId) -> Option<&SolvedBlock> {
        self.entries.get(id).map(|e| &e.block)
    }

    pub fn cumulative_work(&self, id: &BlockId) -> Option<&BigUint> {
        self.entries.get(id).map(|e| &e.work)
    }

    pub fn orphan_count(&self) -> usize {
        self.orphans.values().map(Vec::len).sum()
    }

    fn parent_of(&self, id: &BlockId) -> Option<BlockId> {
        let e = self.entries.get(id)?;
        (e.block.height > 0).then_some(BlockId(e.block.header.prev_id))
    }

    /// Ancestor of `id` at `height` (or `id` itself).
    pub fn ancestor(&self, id: &BlockId, height: u64) -> Option<BlockId> {
        let mut cur = *id;
        loop {
            let e = self.entries.get(&cur)?;
            if e.block.height == height {
                return Some(cur);
            }
            if e.block.height < height {
                return None;
            }
            cur = BlockId(e.block.header.prev_id);
        }
    }

    /// Threshold a child of `parent` must carry.
    pub fn expected_threshold(&self, parent: &BlockId) -> Option<u128> {
        let p = self.entries.get(parent)?;
        let t = p.block.header.threshold().min(1u128 << self.config.profile.block_bits());
        let height = p.block.height + 1;
        let r = self.config.retarget.interval.max(1);
        if height % r != 0 {
            return Some(t);
        }
        // measure R intervals ending at the parent; the first window only has R - 1
        let start_height = (height - r).saturating_sub(1);
        let intervals = height - 1 - start_height;
        let start = self.ancestor(parent, start_height)?;
        let raw = (p.block.header.timestamp as u64).saturating_sub(self.entries[&start].block.header.timestamp as u64);
        let span = if intervals == r { raw } else { (raw * r + intervals / 2) / intervals.max(1) };
        Some(self.config.retarget.adjust(
            t,
            span,
            self.config.profile.block_bits(),
            self.config.profile.blocks() as u32,
        ))
    }

    pub fn validate(&self, candidate: &SolvedBlock) -> Result<(), Reject> {
        let parent_id = BlockId(candidate.header.prev_id);
        let parent = self.entries.get(&parent_id).ok_or(Reject::UnknownParent)?;
        if candidate.height != parent.block.height + 1 {
            return Err(Reject::BadHeight);
        }
        if self.config.verify_solutions {
            let target = DifficultyTarget::from_field(candidate.header.target_field, self.config.profile.block_bits())
                .map_err(|_| Reject::BadSolution)?;
            if !check_header(&self.config.profile, &candidate.header, candidate.key, target) {
                return Err(Reject::BadSolution);
            }
        }
        if candidate.header.timestamp <= parent.block.header.timestamp {
            return Err(Reject::BadTimestamp);
        }
        let expected = self.expected_threshold(&parent_id).ok_or(Reject::UnknownParent)?;
        if candidate.header.threshold() != expected {
            return Err(Reject::BadTarget);
        }
        Ok(())
    }

    /// `a` beats `b`: more work, then earlier arrival, then smaller id.
    fn better(&self, a: &BlockId, b: &BlockId) -> bool {
        let (ea, eb) = (&self.entries[a], &self.entries[b]);
        match ea.work.cmp(&eb.work) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => match ea.arrival.total_cmp(&eb.arrival) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => a < b,
            },
        }
    }

    /// Validates and connects one block whose parent is known.
    pub fn insert(&mut self, block: SolvedBlock, arrival: f64) -> Result<Submitted, Reject> {
        let id = block.id();
        if self.entries.contains_key(&id) {
            return Ok(Submitted::AlreadyKnown);
        }
        self.validate(&block)?;
        let parent = &self.entries[&BlockId(block.header.prev_id)];
        let work = &parent.work + self.config.block_work(block.header.threshold());
        self.entries.insert(id, Entry { block, work, arrival });
        if self.better(&id, &self.tip) {
            self.tip = id;
        }
        Ok(Submitted::Accepted)
    }

    /// Like [`insert`](Self::insert), but blocks with unknown parents are
    /// buffered and connected once the parent arrives.
    pub fn submit(&mut self, block: SolvedBlock, arrival: f64) -> Result<Submitted, Reject> {
        match self.insert(block, arrival) {
            Err(Reject::UnknownParent) => {
                let waiting = self.orphans.entry(BlockId(block.header.prev_id)).or_default();
                if !waiting.iter().any(|(b, _)| b == &block) {
                    waiting.push((block, arrival));
                }
                Ok(Submitted::Buffered)
            }
            Ok(Submitted::Accepted) => {
                let mut ready = vec![block.id()];
                while let Some(parent) = ready.pop() {
                    for (child, at) in self.orphans.remove(&parent).unwrap_or_default() {
                        if let Ok(Submitted::Accepted) = self.insert(child, at) {
                            ready.push(child.id());
                        }
                    }
                }
                Ok(Submitted::Accepted)
            }
            other => other,
        }
    }

    /// Recomputes the best tip from scratch. Always equals [`tip`](Self::tip).
    pub fn fork_choice(&self) -> BlockId {
        let mut best = self.genesis;
        for id in self.entries.keys() {
            if self.better(id, &best) {
                best = *id;
            }
        }
        best
    }

    /// Block ids from genesis to `id`.
    pub fn path_to(&self, id: &BlockId) -> Vec<BlockId> {
        let mut path = vec![*id];
        let mut cur = *id;
        while let Some(p) = self.parent_of(&cur) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn main_chain(&self) -> Vec<BlockId> {
        self.path_to(&self.tip)
    }

    /// Blocks removed from the best chain when switching from `old` to `new`.
    pub fn reorg_depth(&self, old: &BlockId, new: &BlockId) -> u64 {
        let (mut a, mut b) = (*old, *new);
        let height = |id: &BlockId| self.entries[id].block.height;
        let old_height = height(old);
        while height(&a) > height(&b) {
            a = self.parent_of(&a).expect("non-genesis");
        }
        while height(&b) > height(&a) {
            b = self.parent_of(&b).expect("non-genesis");
        }
        while a != b {
            a = self.parent_of(&a).expect("common ancestor");
            b = self.parent_of(&b).expect("common ancestor");
        }
        old_height - height(&a)
    }

    /// Blocks with no children.
    pub fn leaves(&self) -> Vec<BlockId> {
        let parents: std::collections::BTreeSet<BlockId> =
            self.entries.values().filter(|e| e.block.height > 0).map(|e| BlockId(e.block.header.prev_id)).collect();
        self.entries.keys().filter(|id| !parents.contains(id)).copied().collect()
    }

    fn key_bytes(&self) -> usize {
        (self.config.profile.cipher.effective_key_bits as usize).div_ceil(8)
    }

    /// Length-prefixed records of `(80-byte header, effective key)`,
    /// parents before children, genesis omitted.
    pub fn export(&self) -> Vec<u8> {
        let mut blocks: Vec<(&BlockId, &Entry)> = self.entries.iter().filter(|(_, e)| e.block.height > 0).collect();
        blocks.sort_by(|(ia, a), (ib, b)| {
            a.block.height.cmp(&b.block.height).then(a.arrival.total_cmp(&b.arrival)).then(ia.cmp(ib))
        });
        let kb = self.key_bytes();
        let mut out = Vec::with_capacity(4 + blocks.len() * (HEADER_BYTES + kb));
        out.extend_from_slice(&(blocks.len() as u32).to_be_bytes());
        for (_, e) in blocks {
            out.extend_from_slice(&e.block.header.to_bytes());
            let eff = self.config.profile.cipher.effective_key(e.block.key);
            out.extend_from_slice(&eff.to_be_bytes()[8 - kb..]);
        }
        out
    }

    /// Rebuilds and re-validates a chain from [`export`](Self::export)
    /// output. Records arrive in file order.
    pub fn import(config: ChainConfig, bytes: &[u8]) -> Result<Self, ChainError> {
        let mut state = ChainState::new(config);
        let kb = state.key_bytes();
        let count = bytes
            .get(..4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()) as usize)
            .ok_or_else(|| ChainError::Malformed("missing record count".into()))?;
        let record = HEADER_BYTES + kb;
        if bytes.len() != 4 + count * record {
            return Err(ChainError::Malformed(format!(
                "expected {} bytes for {count} records, got {}",
                4 + count * record,
                bytes.len()
            )));
        }
        for (index, rec) in bytes[4..].chunks_exact(record).enumerate() {
            let header = BlockHeader::from_bytes(&rec[..HEADER_BYTES]).expect("80 bytes");
            let mut eff = [0u8; 8];
            eff[8 - kb..].copy_from_slice(&rec[HEADER_BYTES..]);
            let key = state.config.profile.cipher.expand_key(u64::from_be_bytes(eff));
            let height = state
                .get(&BlockId(header.prev_id))
                .map(|p| p.height + 1)
                .ok_or(ChainError::Rejected { index, reason: Reject::UnknownParent })?;
            state
                .insert(SolvedBlock { header, key, height }, index as f64 + 1.0)
                .map_err(|reason| ChainError::Rejected { index, reason })?;
        }
        Ok(state)
    }

    pub fn summary(&self) -> ChainSummary {
        let mut tips: Vec<TipSummary> = self
            .leaves()
            .into_iter()
            .map(|id| TipSummary {
                id: id.to_string(),
                height: self.entries[&id].block.height,
                work: self.entries[&id].work.to_string(),
            })
            .collect();
        tips.sort_by(|a, b| b.height.cmp(&a.height).then(a.id.cmp(&b.id)));
        ChainSummary {
            profile: self.config.profile.name.clone(),
            blocks: self.entries.len(),
            height: self.height(),
            tip: self.tip.to_string(),
            cumulative_work: self.entries[&self.tip].work.to_string(),
            tips,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TipSummary {
    pub id: String,
    pub height: u64,
    pub work: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub profile: String,
    pub blocks: usize,
    pub height: u64,
    pub tip: String,
    pub cumulative_work: String,
    pub tips: Vec<TipSummary>,
}
