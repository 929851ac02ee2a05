mod common;

use common::*;
use poew_core::chain::{ChainState, Reject, SolvedBlock, Submitted};
use poew_core::puzzle::BlockId;
use rand::seq::SliceRandom;

/// A main line of 8 blocks plus a 3-block branch off height 3, each with a
/// fixed arrival time.
fn forked_tree() -> (Vec<(SolvedBlock, f64)>, ChainState) {
    let mut chain = ChainState::new(toy_chain_config(4));
    let mut blocks = Vec::new();
    let mut parent = chain.genesis_id();
    for h in 1..=8u32 {
        let b = mine_child(&chain, &parent, 10 * h, 1);
        let at = h as f64;
        chain.insert(b, at).unwrap();
        blocks.push((b, at));
        parent = b.id();
    }
    let mut parent = chain.main_chain()[3];
    for h in 4..=6u32 {
        let b = mine_child(&chain, &parent, 10 * h + 5, 2);
        let at = 100.0 + h as f64;
        chain.insert(b, at).unwrap();
        blocks.push((b, at));
        parent = b.id();
    }
    (blocks, chain)
}

#[test]
fn replay_order_does_not_change_the_tip() {
    let (blocks, reference) = forked_tree();
    assert_eq!(reference.height(), 8);
    assert_eq!(reference.leaves().len(), 2);
    let mut r = rng(41);
    for _ in 0..20 {
        let mut order = blocks.clone();
        order.shuffle(&mut r);
        let mut chain = ChainState::new(toy_chain_config(4));
        for (b, at) in order {
            chain.submit(b, at).unwrap();
        }
        assert_eq!(chain.orphan_count(), 0);
        assert_eq!(chain.tip(), reference.tip());
        assert_eq!(chain.fork_choice(), chain.tip());
        assert_eq!(chain.main_chain(), reference.main_chain());
    }
}

#[test]
fn longer_branch_wins_and_reports_reorg() {
    let (_, mut chain) = forked_tree();
    let old_tip = chain.tip();
    // extend the branch past the main line
    let mut parent = *chain.leaves().iter().find(|id| **id != old_tip).unwrap();
    for h in 7..=9u32 {
        let b = mine_child(&chain, &parent, 10 * h + 5, 2);
        chain.submit(b, 200.0 + h as f64).unwrap();
        parent = b.id();
    }
    assert_eq!(chain.tip(), parent);
    assert_eq!(chain.height(), 9);
    assert_eq!(chain.reorg_depth(&old_tip, &parent), 5);
}

#[test]
fn tampered_blocks_are_rejected() {
    let chain = ChainState::new(toy_chain_config(4));
    let genesis = chain.genesis_id();
    let good = mine_child(&chain, &genesis, 10, 7);
    assert!(chain.validate(&good).is_ok());

    let mut r = rng(42);
    for bit in 0..640 {
        let mut bytes = good.header.to_bytes();
        bytes[bit / 8] ^= 0x80 >> (bit % 8);
        let header = poew_core::BlockHeader::from_bytes(&bytes).unwrap();
        let bad = SolvedBlock { header, ..good };
        let err = chain.validate(&bad).unwrap_err();
        if (32..288).contains(&bit) {
            assert_eq!(err, Reject::UnknownParent);
        }
    }
    let mut wrong_key = good;
    wrong_key.key.0 ^= 1 << rand::Rng::random_range(&mut r, 0..16);
    assert_eq!(chain.validate(&wrong_key), Err(Reject::BadSolution));
}

#[test]
fn export_import_preserves_everything() {
    let (_, chain) = forked_tree();
    let bytes = chain.export();
    let back = ChainState::import(toy_chain_config(4), &bytes).unwrap();
    assert_eq!(back.tip(), chain.tip());
    assert_eq!(back.len(), chain.len());
    assert_eq!(back.summary().tips, chain.summary().tips);
    assert_eq!(back.export(), bytes);

    let mut corrupt = bytes.clone();
    corrupt[4 + 70] ^= 1;
    assert!(ChainState::import(toy_chain_config(4), &corrupt).is_err());
    assert!(ChainState::import(toy_chain_config(4), &bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn duplicate_and_orphan_submissions() {
    let (blocks, _) = forked_tree();
    let mut chain = ChainState::new(toy_chain_config(4));
    let (b2, at2) = blocks[1];
    assert_eq!(chain.submit(b2, at2), Ok(Submitted::Buffered));
    assert_eq!(chain.orphan_count(), 1);
    let (b1, at1) = blocks[0];
    assert_eq!(chain.submit(b1, at1), Ok(Submitted::Accepted));
    assert_eq!(chain.height(), 2);
    assert_eq!(chain.submit(b1, at1), Ok(Submitted::AlreadyKnown));
    assert_eq!(chain.tip(), b2.id());
    assert!(chain.contains(&BlockId(b2.header.prev_id)));
}
