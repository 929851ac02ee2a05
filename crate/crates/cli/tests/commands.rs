use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn poew(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poew")).args(args).env_remove("POEW_PROFILE").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

// 48-bit toy header
const TOY_HEADER: &str = "a1b2c3d4e5f6";

#[test]
fn plan_presets_and_custom() {
    let des = json(&poew(&["plan", "--profile", "des640"]));
    assert_eq!(des["m"], 11);
    assert_eq!(des["runs"], serde_json::json!(["9x(58+6)", "2x(59+5)"]));
    let toy = json(&poew(&["plan", "--profile", "toy16"]));
    assert_eq!(toy["m"], 4);
    assert_eq!(toy["runs"], serde_json::json!(["4x(12+4)"]));
    assert_eq!(json(&poew(&["plan", "--custom", "h=100,k=28,b=64"]))["m"], 2);
    assert_eq!(code(&poew(&["plan", "--custom", "h=100,k=27,b=64"])), 2);
    assert_eq!(code(&poew(&["plan", "--profile", "des9000"])), 2);
}

#[test]
fn profile_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_poew")).args(["plan"]).env("POEW_PROFILE", "des640").output().unwrap();
    assert_eq!(json(&out)["m"], 11);
}

#[test]
fn mine_open_target_takes_one_trial() {
    let out = poew(&["mine", "--header", TOY_HEADER, "--zero-bits", "0"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["key"], "0000");
    assert_eq!(v["result"]["trials"], 1);
}

#[test]
fn mine_is_worker_invariant() {
    let one = json(&poew(&["mine", "--header", TOY_HEADER, "--zero-bits", "2", "--workers", "1"]));
    let eight = json(&poew(&["mine", "--header", TOY_HEADER, "--zero-bits", "2", "--workers", "8"]));
    assert!(one["key"].is_string());
    assert_eq!(one["key"], eight["key"]);
}

#[test]
fn mine_guards_and_exhaustion() {
    let des_header = "00".repeat(80);
    let out = poew(&["mine", "--profile", "des640", "--header", &des_header, "--zero-bits", "1"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--allow-big"));
    let out = poew(&["mine", "--profile", "des640", "--header", &des_header, "--zero-bits", "0", "--allow-big", "--count", "1"]);
    assert_eq!(code(&out), 0);
    assert_eq!(code(&poew(&["mine", "--header", TOY_HEADER, "--zero-bits", "16"])), 3);
    assert_eq!(code(&poew(&["mine", "--header", "abcd", "--zero-bits", "1"])), 2);
    assert_eq!(code(&poew(&["mine", "--header", TOY_HEADER])), 2);
}

#[test]
fn verify_mined_and_tampered() {
    let dir = tempfile::tempdir().unwrap();
    let header = dir.path().join("h.bin");
    fs::write(&header, hex::decode(TOY_HEADER).unwrap()).unwrap();
    let key_file = dir.path().join("key.txt");
    let out = poew(&["mine", "--header-file", path(&header), "--zero-bits", "3", "--key-out", path(&key_file)]);
    assert_eq!(code(&out), 0);
    let key = fs::read_to_string(&key_file).unwrap().trim().to_string();
    assert_eq!(json(&out)["key"], key.as_str());

    let ok = poew(&["verify", "--header-file", path(&header), "--zero-bits", "3", "--key", &key, "--verbose"]);
    assert_eq!(code(&ok), 0);
    assert_eq!(json(&ok)["ciphertexts"].as_array().unwrap().len(), 4);

    let mut tampered = hex::decode(TOY_HEADER).unwrap();
    tampered[0] ^= 0x80;
    fs::write(&header, &tampered).unwrap();
    let bad = poew(&["verify", "--header-file", path(&header), "--zero-bits", "3", "--key", &key]);
    assert_eq!(code(&bad), 1);
    assert_eq!(json(&bad)["valid"], false);

    assert_eq!(code(&poew(&["verify", "--header", TOY_HEADER, "--zero-bits", "3", "--key", "zz"])), 2);
    assert_eq!(code(&poew(&["verify", "--header", TOY_HEADER, "--zero-bits", "3", "--key", "12345"])), 2);
}

#[test]
fn compress_decompress_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let header = dir.path().join("h.bin");
    fs::write(&header, hex::decode(TOY_HEADER).unwrap()).unwrap();
    let key = json(&poew(&["mine", "--header-file", path(&header), "--zero-bits", "2"]))["key"].as_str().unwrap().to_string();

    let archive = dir.path().join("a.poew");
    let out = poew(&["compress", "--in", path(&header), "--out", path(&archive), "--key", &key, "--zero-bits", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["report"]["compressed_bits"], 72);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));

    let back = dir.path().join("back.bin");
    assert_eq!(code(&poew(&["decompress", "--in", path(&archive), "--out", path(&back)])), 0);
    assert_eq!(fs::read(&back).unwrap(), fs::read(&header).unwrap());

    let bytes = fs::read(&archive).unwrap();
    fs::write(&archive, &bytes[..bytes.len() - 3]).unwrap();
    assert_eq!(code(&poew(&["decompress", "--in", path(&archive), "--out", path(&back)])), 4);

    let wrong = format!("{:04x}", u16::from_str_radix(&key, 16).unwrap() ^ 1);
    let out = poew(&["compress", "--in", path(&header), "--out", path(&archive), "--key", &wrong, "--zero-bits", "16"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn estimate_numbers() {
    let v = json(&poew(&["estimate", "--keyspace-bits", "56", "--hashrate", "8.452e23"]));
    let t = v["worst_case_seconds"].as_f64().unwrap();
    assert!((t - 8.52e-8).abs() / 8.52e-8 < 0.01);
    assert_eq!(v["expected_trials"], 1.0);
    let toy = json(&poew(&[
        "estimate", "--keyspace-bits", "16", "--blocks", "4", "--block-bits", "16", "--zero-bits", "4", "--hashrate", "1",
    ]));
    assert!((toy["solvability_probability"].as_f64().unwrap() - 0.632).abs() < 0.001);
    assert_eq!(code(&poew(&["estimate", "--hashrate", "0"])), 2);
}

#[test]
fn sweep_emits_one_row_per_n() {
    let out = poew(&["sweep", "--profile", "toy16", "--from", "0", "--to", "8", "--headers", "10", "--seed", "3"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 10);
    assert!(lines[0].contains("fraction_solvable") && lines[0].contains("model"));
    assert!(lines[1].starts_with("0,10,10,1"));
    assert_eq!(code(&poew(&["sweep", "--profile", "des640", "--headers", "1"])), 2);
}

fn sim_config(dir: &Path, miners: usize, mode: &str) -> std::path::PathBuf {
    let miners: Vec<Value> =
        (0..miners).map(|i| serde_json::json!({ "id": format!("m{i}"), "hashrate": 100.0 })).collect();
    let config = serde_json::json!({
        "seed": 7,
        "miners": miners,
        "latency": { "kind": "uniform", "min": 0.0, "max": 120.0 },
        "duration": 60000.0,
        "profile": "toy16",
        "retarget": { "interval": 16, "target_spacing": 600, "clamp": 4 },
        "mode": mode,
        "genesis_zero_bits": 4
    });
    let p = dir.join(format!("sim{}-{mode}.json", miners.len()));
    fs::write(&p, serde_json::to_vec_pretty(&config).unwrap()).unwrap();
    p
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let solo = sim_config(dir.path(), 1, "real");
    let v = json(&poew(&["simulate", "--config", path(&solo)]));
    assert_eq!(v["forks_observed"], 0);
    assert_eq!(v["shares"][0]["share"], 1.0);

    let three = sim_config(dir.path(), 3, "sampled");
    let a = poew(&["simulate", "--config", path(&three), "--format", "csv"]);
    let b = poew(&["simulate", "--config", path(&three), "--format", "csv"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = poew(&["simulate", "--config", path(&three), "--format", "csv", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn simulated_chain_can_be_summarized() {
    let dir = tempfile::tempdir().unwrap();
    let config = sim_config(dir.path(), 2, "real");
    let chain = dir.path().join("chain.bin");
    let stats = json(&poew(&["simulate", "--config", path(&config), "--chain-out", path(&chain)]));
    let summary = poew(&["chain-summary", "--config", path(&config), "--in", path(&chain)]);
    assert_eq!(code(&summary), 0);
    let summary = json(&summary);
    assert_eq!(summary["tip"], stats["final_tip"]);
    assert_eq!(summary["height"], stats["blocks_accepted"]);

    let mut bytes = fs::read(&chain).unwrap();
    bytes[10] ^= 1;
    fs::write(&chain, bytes).unwrap();
    assert_eq!(code(&poew(&["chain-summary", "--config", path(&config), "--in", path(&chain)])), 4);
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, br#"{"seed": 1}"#).unwrap();
    assert_eq!(code(&poew(&["simulate", "--config", path(&p)])), 2);
}

#[test]
fn repro_passes() {
    let out = poew(&["repro"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("PASS") && !text.contains("FAIL"));
}
