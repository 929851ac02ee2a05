//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::time::Instant;

use common::*;
use poew_core::chain::RetargetConfig;
use poew_core::cipher::{decrypt_block, des, encrypt_block, Block, CipherKey, CipherProfile};
use poew_core::codec::{caesar_compress, caesar_decompress, compress, decompress, size_report, CompressedBlock};
use poew_core::miner::{mine, work_estimate, KeyRange, MineOptions, Policy};
use poew_core::puzzle::{check_solution, DifficultyTarget, Profile, ProfileSpec, Puzzle};
use poew_core::simnet::{self, LatencyModel, MinerSpec, SimConfig, SimMode};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn size_formula() -> Outcome {
    for n in 0..=64 {
        let r = size_report(64, 11, 56, n, 640);
        ensure(r.compressed_bits == 760 - 11 * n as u64, format!("n={n}: {} bits", r.compressed_bits))?;
    }
    let at11 = size_report(64, 11, 56, 11, 640);
    ensure(at11.compressed_bits == 639 && at11.compresses(), "n=11 should give 639 < 640")?;
    let at10 = size_report(64, 11, 56, 10, 640);
    ensure(at10.compressed_bits == 650 && !at10.compresses(), format!("n=10 gave {}", at10.compressed_bits))?;
    ensure(at11.break_even_n == Some(11), format!("break-even {:?}", at11.break_even_n))?;
    Ok("760-11n exact for n=0..64; n=10 -> 650, n=11 -> 639; break-even n=11".into())
}

fn crack_time() -> Outcome {
    let est = work_estimate(56, 64, 11, 1 << 64, 8.452e23).map_err(|e| e.to_string())?;
    let rel = (est.worst_case_seconds - 8.52e-8).abs() / 8.52e-8;
    ensure(rel < 0.01, format!("{:e} s is {:.2}% off", est.worst_case_seconds, rel * 100.0))?;
    Ok(format!("2^56 / 8.452e23 = {:.4e} s ({:.2}% from 8.52e-8)", est.worst_case_seconds, rel * 100.0))
}

fn caesar() -> Outcome {
    ensure(caesar_compress("BBB") == Ok('B'), "BBB")?;
    ensure(caesar_compress("CCC") == Ok('C'), "CCC")?;
    for letter in 'A'..='Z' {
        let text: String = std::iter::repeat_n(letter, 3).collect();
        let c = caesar_compress(&text).map_err(|e| e.to_string())?;
        ensure(caesar_decompress(c).as_deref() == Ok(text.as_str()), format!("round trip of {text}"))?;
    }
    Ok("BBB -> B, CCC -> C, all 26 letters round trip".into())
}

fn cipher_correctness() -> Outcome {
    for (k, p, c) in PUBLISHED {
        ensure(des::encrypt(k, p) == c, format!("published vector key {k:016x}"))?;
        ensure(ref_des_encrypt(k, p) == c, format!("reference on key {k:016x}"))?;
    }
    let mut r = rng(404);
    for _ in 0..100 {
        let (k, p): (u64, u64) = (r.random(), r.random());
        ensure(des::encrypt(!k, !p) == !des::encrypt(k, p), "complementation")?;
        ensure(des::encrypt(k, p) == ref_des_encrypt(k, p), "reference on random case")?;
    }
    let toy = CipherProfile::toy16();
    let key = CipherKey(0x5A3C);
    for p in 0..1u64 << 16 {
        let c = encrypt_block(&toy, key, Block(p)).map_err(|e| e.to_string())?;
        ensure(decrypt_block(&toy, key, c) == Ok(Block(p)), format!("toy block {p:04x}"))?;
    }
    for _ in 0..10_000 {
        let key = CipherProfile::DES.expand_key(r.random_range(0..1 << 56));
        let p = Block(r.random());
        let c = encrypt_block(&CipherProfile::DES, key, p).map_err(|e| e.to_string())?;
        ensure(decrypt_block(&CipherProfile::DES, key, c) == Ok(p), "DES round trip")?;
    }
    Ok(format!(
        "{} published vectors, 100 complementation + reference cases, toy16 exhaustive, 10^4 DES round trips",
        PUBLISHED.len()
    ))
}

fn mining_oracle() -> Outcome {
    let profile = Profile::toy16();
    let mut r = rng(505);
    let mut found = 0;
    for n in 1..=3 {
        let target = DifficultyTarget::from_zero_bits(n, 16).unwrap();
        for i in 0..50 {
            let header = random_bits(&mut r, 48);
            let expected = ref_minimal_key(&profile, &header, target.threshold());
            found += expected.is_some() as u32;
            let puzzle = Puzzle::new(&profile, &header, target).unwrap();
            for workers in [1, 4, 8] {
                let opts = MineOptions::with_policy(Policy::Minimal).workers(workers);
                let got = mine(&puzzle, KeyRange::full(&profile.cipher), &opts).map_err(|e| e.to_string())?;
                ensure(
                    got.effective_key == expected,
                    format!("n={n} header {i} workers={workers}: {:?} vs oracle {:?}", got.effective_key, expected),
                )?;
            }
        }
    }
    Ok(format!("150 headers x workers {{1,4,8}} match the enumeration oracle ({found} solvable)"))
}

fn codec_round_trip() -> Outcome {
    let profile = Profile::toy16();
    let mut r = rng(606);
    let mut archives = Vec::new();
    for i in 0..120 {
        let (header, key, target) = mined_toy(&mut r, 1 + i % 4);
        let archive = compress(&profile, &header, key, target).map_err(|e| e.to_string())?;
        let bytes = archive.to_bytes();
        let back = CompressedBlock::from_bytes(&bytes).map_err(|e| e.to_string())?;
        ensure(decompress(&back).as_ref() == Ok(&header), format!("instance {i} did not round trip"))?;
        archives.push((bytes, header, target));
    }
    let mut silent = 0;
    for _ in 0..100 {
        let (bytes, header, target) = &archives[r.random_range(0..archives.len())];
        let mut bad = bytes.clone();
        let bit = r.random_range(0..bad.len() * 8);
        bad[bit / 8] ^= 0x80 >> (bit % 8);
        if let Ok(a) = CompressedBlock::from_bytes(&bad) {
            if let Ok(h) = decompress(&a) {
                let key = profile.cipher.expand_key(a.key_eff);
                if &h != header && check_solution(&profile, &h, key, *target) {
                    silent += 1;
                }
                if &h == header && bad != *bytes {
                    silent += 1;
                }
            }
        }
    }
    ensure(silent == 0, format!("{silent} of 100 flips went unnoticed"))?;
    Ok("120 mined toy instances round trip; 100/100 bit flips detected".into())
}

fn solvability() -> Outcome {
    let profile = Profile::toy16();
    let rows = simnet::sweep_solvability(&profile, [0, 4, 8], 400, 707, 1).map_err(|e| e.to_string())?;
    let (r0, r4, r8) = (&rows[0], &rows[1], &rows[2]);
    ensure(r0.fraction_solvable == 1.0, "n=0 not always solvable")?;
    ensure((r4.fraction_solvable - 0.632).abs() <= 0.08, format!("n=4 fraction {}", r4.fraction_solvable))?;
    ensure(
        (r4.fraction_solvable - r4.model).abs() <= 3.0 * r4.sigma,
        format!("n=4 fraction {} outside 3 sigma of {}", r4.fraction_solvable, r4.model),
    )?;
    ensure(r8.fraction_solvable <= 0.01, format!("n=8 fraction {}", r8.fraction_solvable))?;
    Ok(format!(
        "400 headers: n=4 {:.4} (model {:.4}, sigma {:.4}), n=8 {:.4}",
        r4.fraction_solvable, r4.model, r4.sigma, r8.fraction_solvable
    ))
}

fn sim_config(miners: usize, latency: f64, blocks: f64) -> SimConfig {
    // toy16 at n=4 needs 2^16 trials per block on average
    let hashrate = 65536.0 / 600.0 / miners as f64;
    SimConfig {
        seed: 808,
        miners: (0..miners).map(|i| MinerSpec { id: format!("m{i}"), hashrate }).collect(),
        latency: LatencyModel::Constant { seconds: latency },
        duration: 600.0 * blocks,
        profile: ProfileSpec::Named("toy16".into()),
        retarget: RetargetConfig { interval: 32, target_spacing: 600, ..Default::default() },
        mode: SimMode::Sampled,
        genesis_zero_bits: 4,
        workers: 1,
    }
}

fn simnet_properties() -> Outcome {
    let solo = simnet::run(&sim_config(1, 0.0, 300.0)).map_err(|e| e.to_string())?;
    ensure(solo.forks_observed == 0 && solo.shares[0].share == 1.0, "single miner forked")?;

    let five = simnet::run(&sim_config(5, 0.0, 600.0)).map_err(|e| e.to_string())?;
    ensure(five.blocks_accepted >= 500, format!("only {} blocks", five.blocks_accepted))?;
    let sigma = (0.2f64 * 0.8 / five.blocks_accepted as f64).sqrt();
    for s in &five.shares {
        ensure((s.share - 0.2).abs() <= 3.0 * sigma, format!("{} share {:.4} (3 sigma {:.4})", s.id, s.share, 3.0 * sigma))?;
    }

    let laggy = simnet::run(&sim_config(2, 600.0, 300.0)).map_err(|e| e.to_string())?;
    ensure(laggy.forks_observed > 0, "no forks at latency = spacing")?;
    ensure(laggy.converged, "nodes disagree at quiescence")?;

    let again = simnet::run(&sim_config(2, 600.0, 300.0)).map_err(|e| e.to_string())?;
    ensure(again.to_json() == laggy.to_json() && again.to_csv() == laggy.to_csv(), "same seed, different stats")?;

    let shares: Vec<String> = five.shares.iter().map(|s| format!("{:.3}", s.share)).collect();
    Ok(format!(
        "solo 0 forks; 5 miners over {} blocks shares [{}]; latency=spacing {} forks, converged; deterministic",
        five.blocks_accepted,
        shares.join(", "),
        laggy.forks_observed
    ))
}

fn retarget() -> Outcome {
    // hashrate 10x the equilibrium for the genesis threshold
    let mut c = sim_config(1, 0.0, 32.0 * 15.0);
    c.miners[0].hashrate *= 10.0;
    let s = simnet::run(&c).map_err(|e| e.to_string())?;
    ensure(s.window_spacings.len() >= 10, format!("only {} windows", s.window_spacings.len()))?;
    let tail = &s.window_spacings[5..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let rel = mean / 600.0 - 1.0;
    ensure(rel.abs() <= 0.25, format!("mean spacing after window 5 is {mean:.1} s ({:+.1}%)", rel * 100.0))?;
    Ok(format!(
        "first window {:.1} s; mean of windows 6..{} is {mean:.1} s ({:+.1}% of 600 s)",
        s.window_spacings[0],
        s.window_spacings.len(),
        rel * 100.0
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("size formula", size_formula),
        ("crack-time estimate", crack_time),
        ("caesar demo", caesar),
        ("cipher correctness", cipher_correctness),
        ("mining-oracle equivalence", mining_oracle),
        ("codec round trip", codec_round_trip),
        ("solvability law", solvability),
        ("chain/simnet properties", simnet_properties),
        ("retarget stability", retarget),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {}: {tag} {name} [{:.2?}]: {detail}", i + 1, start.elapsed());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
