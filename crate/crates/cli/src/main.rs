//! `poew`: command-line driver for mining, verification, compression,
//! estimates, solvability sweeps and network simulation.
//!
//! stdout carries JSON or CSV; diagnostics go to stderr.
//! Exit codes: 0 ok, 1 verification failure, 2 usage or config error,
//! 3 keyspace exhausted, 4 corrupt data.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use poew_core::chain::{ChainConfig, ChainState};
use poew_core::cipher::CipherKey;
use poew_core::codec::{caesar_compress, caesar_decompress, compress, decompress, size_report, CompressedBlock};
use poew_core::miner::{mine, measure_rate, work_estimate, KeyRange, MineOptions, Policy};
use poew_core::puzzle::{BlockHeader, DifficultyTarget, HeaderBits, Profile, ProfileSpec, Puzzle, HEADER_BYTES};
use poew_core::simnet::{self, SimConfig};
use serde_json::json;
use thiserror::Error;

const DESK_SCALE_BITS: u32 = 24;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("verification failed")]
    Verify,
    #[error("keyspace exhausted without a solution")]
    Exhausted,
    #[error("corrupt data: {0}")]
    Corrupt(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Verify => 1,
            CliError::Usage(_) => 2,
            CliError::Exhausted => 3,
            CliError::Corrupt(_) => 4,
        }
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "poew", version, about = "Proof-of-Encryption-Work toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the segmentation plan of a profile.
    Plan(ProfileArgs),
    /// Search the keyspace for a solution.
    Mine(MineArgs),
    /// Check a (header, key, target) triple.
    Verify(VerifyArgs),
    /// Pack a solved header into an archive.
    Compress(CompressArgs),
    /// Recover the header from an archive.
    Decompress(DecompressArgs),
    /// Closed-form work and solvability estimate.
    Estimate(EstimateArgs),
    /// Measured solvable fraction against the model, as CSV.
    Sweep(SweepArgs),
    /// Run a network simulation from a JSON config.
    Simulate(SimulateArgs),
    /// Summarize an exported chain.
    ChainSummary(ChainSummaryArgs),
    /// Recompute the headline numbers and report pass/fail.
    Repro,
    /// Key trials per second, as CSV.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct ProfileArgs {
    /// `des640`, `toy16` or `h=..,k=..,b=..[,r=..]`.
    #[arg(long, env = "POEW_PROFILE", default_value = "toy16")]
    profile: String,
    /// Custom widths, e.g. `h=100,k=28,b=64`; overrides --profile.
    #[arg(long)]
    custom: Option<String>,
}

impl ProfileArgs {
    fn resolve(&self) -> Result<Profile> {
        let text = self.custom.as_deref().unwrap_or(&self.profile);
        let spec: ProfileSpec = text.parse().map_err(usage)?;
        spec.resolve().map_err(usage)
    }
}

#[derive(Args)]
struct HeaderArgs {
    /// Binary header: the profile's header bits packed MSB-first, or a full
    /// 80-byte block header. Hex text is also accepted.
    #[arg(long, conflicts_with = "header")]
    header_file: Option<PathBuf>,
    /// Header as hex.
    #[arg(long)]
    header: Option<String>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct TargetArgs {
    /// Leading zero bits required in every ciphertext block.
    #[arg(long)]
    zero_bits: Option<u32>,
    /// Explicit threshold T (decimal or 0x-hex); blocks must be < T.
    #[arg(long)]
    target: Option<String>,
}

impl TargetArgs {
    fn resolve(&self, block_bits: u32) -> Result<DifficultyTarget> {
        match (self.zero_bits, &self.target) {
            (Some(n), _) => DifficultyTarget::from_zero_bits(n, block_bits).map_err(usage),
            (None, Some(t)) => DifficultyTarget::new(parse_u128(t)?, block_bits).map_err(usage),
            (None, None) => Err(usage("one of --zero-bits or --target is required")),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    First,
    Minimal,
}

#[derive(Args)]
struct MineArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[command(flatten)]
    header: HeaderArgs,
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value = "minimal")]
    policy: PolicyArg,
    /// First effective key to try.
    #[arg(long, default_value = "0")]
    start: String,
    /// Number of keys to try; defaults to the rest of the keyspace.
    #[arg(long)]
    count: Option<String>,
    /// Allow searches over keyspaces larger than 2^24.
    #[arg(long)]
    allow_big: bool,
    /// Also write the found key (hex) to this file.
    #[arg(long)]
    key_out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[command(flatten)]
    header: HeaderArgs,
    #[command(flatten)]
    target: TargetArgs,
    /// Full cipher key in hex.
    #[arg(long)]
    key: String,
    /// Include per-block ciphertexts.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct CompressArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    key: String,
}

#[derive(Args)]
struct DecompressArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, default_value_t = 56)]
    keyspace_bits: u32,
    #[arg(long)]
    hashrate: f64,
    #[arg(long, default_value_t = 0)]
    zero_bits: u32,
    #[arg(long, default_value_t = 11)]
    blocks: u32,
    #[arg(long, default_value_t = 64)]
    block_bits: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long, default_value_t = 0)]
    from: u32,
    #[arg(long, default_value_t = 8)]
    to: u32,
    #[arg(long, default_value_t = 200)]
    headers: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Export the first node's final chain to this file.
    #[arg(long)]
    chain_out: Option<PathBuf>,
}

#[derive(Args)]
struct ChainSummaryArgs {
    /// Simulation config the chain was produced with.
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long, value_delimiter = ',', default_value = "4")]
    zero_bits: Vec<u32>,
    #[arg(long, default_value_t = 1 << 16)]
    trials: u64,
}

fn parse_u128(text: &str) -> Result<u128> {
    let t = text.trim().replace('_', "");
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u128::from_str_radix(hex, 16),
        None => t.parse(),
    };
    parsed.map_err(|_| usage(format!("not a number: {text:?}")))
}

fn parse_key(profile: &Profile, text: &str) -> Result<CipherKey> {
    let t = text.trim();
    let hex_digits = t.strip_prefix("0x").unwrap_or(t);
    let key = u64::from_str_radix(hex_digits, 16).map_err(|_| usage(format!("malformed key hex {text:?}")))?;
    let key = CipherKey(key);
    profile.cipher.check_key(key).map_err(usage)?;
    Ok(key)
}

fn decode_hex(text: &str) -> Option<Vec<u8>> {
    let clean: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    hex::decode(clean.strip_prefix("0x").unwrap_or(&clean)).ok()
}

/// Interprets raw bytes as the profile's header bits, or as a full 80-byte
/// block header from which the puzzle bits are derived.
fn header_from_bytes(profile: &Profile, bytes: &[u8]) -> Result<HeaderBits> {
    let h = profile.header_bits() as usize;
    if bytes.len() == h.div_ceil(8) {
        return HeaderBits::from_bytes(bytes, h).map_err(usage);
    }
    if bytes.len() == HEADER_BYTES {
        let header = BlockHeader::from_bytes(bytes).map_err(usage)?;
        return profile.puzzle_bits(&header).map_err(usage);
    }
    Err(usage(format!(
        "header is {} bytes; profile {} expects {} bytes or an {HEADER_BYTES}-byte block header",
        bytes.len(),
        profile.name,
        h.div_ceil(8)
    )))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_header_file(profile: &Profile, path: &Path) -> Result<HeaderBits> {
    let bytes = read_file(path)?;
    let h = profile.header_bits() as usize;
    if bytes.len() != h.div_ceil(8) && bytes.len() != HEADER_BYTES {
        if let Some(decoded) = std::str::from_utf8(&bytes).ok().and_then(decode_hex) {
            return header_from_bytes(profile, &decoded);
        }
    }
    header_from_bytes(profile, &bytes)
}

fn read_header(profile: &Profile, args: &HeaderArgs) -> Result<HeaderBits> {
    match (&args.header_file, &args.header) {
        (Some(path), _) => read_header_file(profile, path),
        (None, Some(text)) => {
            let bytes = decode_hex(text).ok_or_else(|| usage("header is not valid hex"))?;
            header_from_bytes(profile, &bytes)
        }
        (None, None) => Err(usage("one of --header-file or --header is required")),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn key_hex(profile: &Profile, key: CipherKey) -> String {
    format!("{:0width$x}", key.0, width = (profile.cipher.key_bits as usize).div_ceil(4))
}

fn plan(args: &ProfileArgs) -> Result<()> {
    let profile = args.resolve()?;
    let runs: Vec<String> =
        profile.plan.runs().iter().map(|(count, s)| format!("{count}x({}+{})", s.header_bits, s.key_bits)).collect();
    eprintln!("{}: m={} {}", profile.name, profile.blocks(), runs.join(", "));
    print_json(&json!({
        "profile": profile.name,
        "block_bits": profile.block_bits(),
        "header_bits": profile.header_bits(),
        "key_bits": profile.cipher.key_bits,
        "effective_key_bits": profile.cipher.effective_key_bits,
        "m": profile.blocks(),
        "runs": runs,
        "splits": profile.plan.splits,
    }));
    Ok(())
}

fn mine_cmd(args: &MineArgs) -> Result<()> {
    let profile = args.profile.resolve()?;
    if profile.cipher.effective_key_bits > DESK_SCALE_BITS && !args.allow_big {
        return Err(usage(format!(
            "profile {} has a 2^{} keyspace, beyond desk scale (2^{DESK_SCALE_BITS}); pass --allow-big to search anyway",
            profile.name, profile.cipher.effective_key_bits
        )));
    }
    let header = read_header(&profile, &args.header)?;
    let target = args.target.resolve(profile.block_bits())?;
    let puzzle = Puzzle::new(&profile, &header, target).map_err(usage)?;
    let start = parse_u128(&args.start)?;
    let end = match &args.count {
        Some(c) => start.saturating_add(parse_u128(c)?),
        None => profile.cipher.keyspace(),
    };
    let policy = match args.policy {
        PolicyArg::First => Policy::First,
        PolicyArg::Minimal => Policy::Minimal,
    };
    let opts = MineOptions::with_policy(policy).workers(args.workers.max(1));
    let result = mine(&puzzle, KeyRange::new(start, end), &opts).map_err(usage)?;
    let key = result.found_key.map(|k| key_hex(&profile, k));
    print_json(&json!({ "key": key, "result": result }));
    match result.found_key {
        Some(k) => {
            if let Some(path) = &args.key_out {
                write_file(path, format!("{}\n", key_hex(&profile, k)).as_bytes())?;
            }
            Ok(())
        }
        None => Err(CliError::Exhausted),
    }
}

fn verify(args: &VerifyArgs) -> Result<()> {
    let profile = args.profile.resolve()?;
    let key = parse_key(&profile, &args.key)?;
    let header = read_header(&profile, &args.header)?;
    let target = args.target.resolve(profile.block_bits())?;
    let puzzle = Puzzle::new(&profile, &header, target).map_err(usage)?;
    let valid = puzzle.check(key);
    if args.verbose {
        let blocks = puzzle.ciphertexts(key).map_err(usage)?;
        let width = (profile.block_bits() as usize).div_ceil(4);
        let cts: Vec<String> = blocks.iter().map(|b| format!("{:0width$x}", b.0)).collect();
        print_json(&json!({ "valid": valid, "threshold": target.threshold().to_string(), "ciphertexts": cts }));
    } else {
        print_json(&json!({ "valid": valid }));
    }
    if valid {
        Ok(())
    } else {
        Err(CliError::Verify)
    }
}

fn compress_cmd(args: &CompressArgs) -> Result<()> {
    let profile = args.profile.resolve()?;
    let key = parse_key(&profile, &args.key)?;
    let header = read_header_file(&profile, &args.input)?;
    let target = args.target.resolve(profile.block_bits())?;
    let archive = compress(&profile, &header, key, target).map_err(|e| match e {
        poew_core::CodecError::NotASolution => CliError::Verify,
        other => usage(other),
    })?;
    let bytes = archive.to_bytes();
    write_file(&args.out, &bytes)?;
    let report = size_report(
        profile.block_bits(),
        profile.blocks() as u32,
        profile.cipher.effective_key_bits,
        target.zero_bits(),
        profile.header_bits() as u64,
    );
    if !report.compresses() {
        eprintln!(
            "warning: payload of {} bits expands the {}-bit header; compression needs n >= {}",
            report.compressed_bits,
            report.original_bits,
            report.break_even_n.map_or("none".into(), |n| n.to_string())
        );
    }
    print_json(&json!({ "report": report, "archive_bytes": bytes.len() }));
    Ok(())
}

fn decompress_cmd(args: &DecompressArgs) -> Result<()> {
    let bytes = read_file(&args.input)?;
    let archive = CompressedBlock::from_bytes(&bytes).map_err(|e| CliError::Corrupt(e.to_string()))?;
    let header = decompress(&archive).map_err(|e| CliError::Corrupt(e.to_string()))?;
    let out = header.to_bytes();
    write_file(&args.out, &out)?;
    print_json(&json!({ "header_bits": header.len(), "bytes": out.len() }));
    Ok(())
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let target = DifficultyTarget::from_zero_bits(args.zero_bits, args.block_bits).map_err(usage)?;
    let est = work_estimate(args.keyspace_bits, args.block_bits, args.blocks, target.threshold(), args.hashrate)
        .map_err(usage)?;
    print_json(&est);
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let profile = args.profile.resolve()?;
    if args.from > args.to {
        return Err(usage("--from must not exceed --to"));
    }
    let rows = simnet::sweep_solvability(&profile, args.from..=args.to, args.headers, args.seed, args.workers.max(1))
        .map_err(usage)?;
    match args.format {
        Format::Csv => print!("{}", simnet::sweep_to_csv(&rows)),
        Format::Json => rows.iter().for_each(print_json),
    }
    Ok(())
}

fn load_sim_config(path: &Path) -> Result<SimConfig> {
    let text = read_file(path)?;
    serde_json::from_slice(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut config = load_sim_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let (stats, _, chains) = simnet::run_traced(&config).map_err(usage)?;
    if let Some(path) = &args.chain_out {
        write_file(path, &chains[0].export())?;
    }
    match args.format {
        Format::Json => print_json(&stats),
        Format::Csv => print!("{}", stats.to_csv()),
    }
    Ok(())
}

fn chain_summary(args: &ChainSummaryArgs) -> Result<()> {
    let sim = load_sim_config(&args.config)?;
    let profile = sim.validate().map_err(usage)?;
    let config = ChainConfig {
        genesis_threshold: 1u128 << (profile.block_bits() - sim.genesis_zero_bits),
        profile,
        retarget: sim.retarget,
        verify_solutions: sim.mode == simnet::SimMode::Real,
    };
    let bytes = read_file(&args.input)?;
    let chain = ChainState::import(config, &bytes).map_err(|e| CliError::Corrupt(e.to_string()))?;
    print_json(&chain.summary());
    Ok(())
}

fn repro() -> Result<()> {
    let mut failures = 0;
    let mut report = |ok: bool, what: String| {
        println!("{} {what}", if ok { "PASS" } else { "FAIL" });
        failures += usize::from(!ok);
    };
    println!("n,compressed_bits,compresses");
    for n in 0..=16 {
        let r = size_report(64, 11, 56, n, 640);
        println!("{n},{},{}", r.compressed_bits, r.compresses());
    }
    let table_ok = (0..=64).all(|n| size_report(64, 11, 56, n, 640).compressed_bits == 760 - 11 * n as u64);
    report(table_ok, "des640 archive size is 760 - 11n for n = 0..64".into());
    let r11 = size_report(64, 11, 56, 11, 640);
    report(r11.compressed_bits == 639 && r11.compresses(), format!("n=11 gives {} bits < 640", r11.compressed_bits));
    report(r11.break_even_n == Some(11), format!("break-even n = {:?}", r11.break_even_n));
    let toy = size_report(16, 4, 16, 0, 48);
    report(toy.break_even_n == Some(9), format!("toy16 break-even n = {:?}", toy.break_even_n));
    let est = work_estimate(56, 64, 11, 1 << 64, 8.452e23).map_err(usage)?;
    let rel = (est.worst_case_seconds - 8.52e-8).abs() / 8.52e-8;
    report(rel < 0.01, format!("2^56 keys at 8.452e23/s take {:.4e} s", est.worst_case_seconds));
    let bbb = caesar_compress("BBB").ok();
    let ccc = caesar_compress("CCC").ok();
    report(bbb == Some('B') && ccc == Some('C'), format!("Caesar: BBB -> {bbb:?}, CCC -> {ccc:?}"));
    let all = ('A'..='Z').all(|c| {
        let text: String = std::iter::repeat_n(c, 3).collect();
        caesar_compress(&text).and_then(caesar_decompress).ok().as_deref() == Some(text.as_str())
    });
    report(all, "Caesar round trip over all 26 letters".into());
    if failures == 0 {
        Ok(())
    } else {
        Err(CliError::Verify)
    }
}

fn bench(args: &BenchArgs) -> Result<()> {
    let profile = args.profile.resolve()?;
    println!("profile,zero_bits,trials,trials_per_second");
    for &n in &args.zero_bits {
        let row = measure_rate(&profile, n, args.trials).map_err(usage)?;
        println!("{},{},{},{:.0}", row.profile, row.zero_bits, row.trials, row.trials_per_second);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Plan(a) => plan(&a),
        Command::Mine(a) => mine_cmd(&a),
        Command::Verify(a) => verify(&a),
        Command::Compress(a) => compress_cmd(&a),
        Command::Decompress(a) => decompress_cmd(&a),
        Command::Estimate(a) => estimate(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Simulate(a) => simulate(&a),
        Command::ChainSummary(a) => chain_summary(&a),
        Command::Repro => repro(),
        Command::Bench(a) => bench(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
