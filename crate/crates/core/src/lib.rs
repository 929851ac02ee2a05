//! Proof-of-Encryption-Work.
//!
//! A mining puzzle in which the header and a candidate key are packed into
//! cipher plaintext blocks, and a key is a solution when every ciphertext
//! block falls below a threshold. Because the ciphertexts of a solution are
//! mostly leading zeros, the header can be stored as the key plus the
//! ciphertext residues and recovered by decryption.
//!
//! Modules: [`cipher`] (DES, a toy Feistel, Caesar), [`puzzle`]
//! (segmentation and the solution predicate), [`miner`] (parallel key
//! search and work estimates), [`codec`] (the compressed archive),
//! [`chain`] (validation, fork choice, retargeting) and [`simnet`]
//! (seeded multi-miner simulation).

pub mod cipher;
pub mod puzzle;
pub mod miner;
pub mod codec;
pub mod chain;
pub mod simnet;

pub use cipher::{decrypt_block, encrypt_block, Block, CipherError, CipherKey, CipherKind, CipherProfile};
pub use chain::{ChainConfig, ChainError, ChainState, Reject, RetargetConfig, RetargetRule, SolvedBlock};
pub use codec::{compress, decompress, size_report, CodecError, CompressedBlock, SizeReport};
pub use miner::{mine, work_estimate, KeyRange, MineOptions, MinerError, MiningResult, Policy, WorkEstimate};
pub use puzzle::{
    block_id, check_solution, BlockHeader, BlockId, DifficultyTarget, HeaderBits, Profile, ProfileSpec, Puzzle,
    PuzzleError, SegmentationPlan,
};
pub use simnet::{run as simulate, sweep_solvability, SimConfig, SimError, SimStats};
