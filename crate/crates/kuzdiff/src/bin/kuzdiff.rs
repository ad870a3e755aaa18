//! Command-line workbench: cipher primitives, exhaustive uniformity tables,
//! and the Monte Carlo analysis matrix.
//!
//! Exit codes: 0 clean, 1 usage/configuration error, 2 when any run raised a
//! critical alert (for scripting).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use kuzdiff::cdiff::{full_spectrum, Orientation};
use kuzdiff::cipher::{
    self, derive_master_key, key_schedule_checked, master_key_from_hex, state_from_hex,
    state_to_hex, MasterKey, SBOX, SBOX_INV,
};
use kuzdiff::report::{alerts, export_results, summary_table, SummaryRow};
use kuzdiff::sampler::{
    broadcast_c, masked_c, run_trials, stream_trials, ExperimentConfig, MaskConfig,
};
use kuzdiff::stats::{
    analyze, expected_probability, sprt, AnalyzeOptions, Anomaly, SprtDecision,
};
use kuzdiff::Error;

const DEFAULT_C_LIST: [u8; 7] = [0x01, 0x02, 0x03, 0x04, 0x91, 0xBE, 0xE1];

#[derive(Parser)]
#[command(
    name = "kuzdiff",
    version,
    about = "Truncated c-differential analysis workbench for Kuznyechik"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encrypt one 16-byte block (hex key, hex block)
    Encrypt(BlockArgs),
    /// Decrypt one 16-byte block (hex key, hex block)
    Decrypt(BlockArgs),
    /// Exhaustive c-differential uniformity spectrum of an 8-bit permutation
    CduTable(CduArgs),
    /// Run the (rounds x c x mask) experiment matrix with full statistics
    Analyze(AnalyzeArgs),
    /// Sequential probability ratio test scan of a single configuration
    SprtScan(SprtArgs),
}

#[derive(Args)]
struct BlockArgs {
    /// 32-byte master key, hex
    key: String,
    /// 16-byte block, hex
    block: String,
    /// Reduced-round variant (1..=9)
    #[arg(long, default_value_t = 9)]
    rounds: u32,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OrientationArg {
    Inner,
    Outer,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableFormat {
    Text,
    Csv,
}

#[derive(Args)]
struct CduArgs {
    /// `sbox`, `sbox-inv`, or a path to a custom 256-entry permutation file
    target: String,
    #[arg(long, value_enum, default_value_t = OrientationArg::Inner)]
    orientation: OrientationArg,
    #[arg(long, value_enum, default_value_t = TableFormat::Text)]
    format: TableFormat,
    /// Write to a file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SummaryFormat {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Round counts to test (repeatable), default 9
    #[arg(long = "rounds")]
    rounds: Vec<u32>,
    /// c constants as hex bytes (repeatable), default 01 02 03 04 91 be e1
    #[arg(long = "c")]
    c: Vec<String>,
    /// Mask configurations: `byte_8_in->byte_8_out` or `in=16,17;out=16,17`
    /// (repeatable), default is the standard 12-configuration set
    #[arg(long = "mask")]
    masks: Vec<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Explicit 32-byte master key (hex); default is derived from the seed
    #[arg(long)]
    key: Option<String>,
    /// Sampling threads; env KUZDIFF_WORKERS overrides the default
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long = "alpha-base")]
    alpha_base: Option<f64>,
    /// Dispersion weight in the adaptive threshold
    #[arg(long)]
    eta: Option<f64>,
    /// Output directory for report/JSON/CSV triples
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON run-plan file; command-line flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Put c only at the mask's active input bytes (identity elsewhere)
    /// instead of broadcasting it to all 16 bytes
    #[arg(long)]
    masked_c: bool,
    /// Additionally run an SPRT on each configuration's top pair
    #[arg(long)]
    sprt: bool,
    /// Rendering of the final summary on stdout
    #[arg(long, value_enum, default_value_t = SummaryFormat::Text)]
    format: SummaryFormat,
}

#[derive(Args)]
struct SprtArgs {
    #[arg(long, default_value_t = 9)]
    rounds: u32,
    /// c constant, hex byte
    #[arg(long, default_value = "04")]
    c: String,
    #[arg(long, default_value = "byte_8_in->byte_8_out")]
    mask: String,
    /// Trial budget (pilot + sequential phase)
    #[arg(long, default_value_t = 5_000_000)]
    max_trials: u64,
    /// Boundary-check granularity
    #[arg(long, default_value_t = 100_000)]
    batch: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    key: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    /// Alternative rate as a multiple of the null rate
    #[arg(long, default_value_t = 1.5)]
    theta1_factor: f64,
}

/// JSON run-plan file schema; every field optional, flags win.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    rounds: Option<Vec<u32>>,
    c: Option<Vec<String>>,
    masks: Option<Vec<String>>,
    trials: Option<u64>,
    seed: Option<u64>,
    key: Option<String>,
    workers: Option<usize>,
    alpha_base: Option<f64>,
    eta: Option<f64>,
    out: Option<PathBuf>,
    masked_c: Option<bool>,
}

struct RunPlan {
    rounds_list: Vec<u32>,
    c_list: Vec<u8>,
    mask_list: Vec<MaskConfig>,
    trials: u64,
    seed: u64,
    master_key: MasterKey,
    workers: usize,
    alpha_base: f64,
    eta: f64,
    output_dir: PathBuf,
    masked_c: bool,
}

fn parse_c_byte(s: &str) -> Result<u8, Error> {
    let trimmed = s.trim_start_matches("0x");
    u8::from_str_radix(trimmed, 16)
        .map_err(|e| Error::InvalidHex(format!("c constant `{s}`: {e}")))
        .and_then(|v| {
            if v == 0 {
                Err(Error::InvalidConfig("c = 0x00 is degenerate".into()))
            } else {
                Ok(v)
            }
        })
}

fn default_workers() -> usize {
    if let Ok(v) = std::env::var("KUZDIFF_WORKERS") {
        if let Ok(n) = v.parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn build_plan(args: &AnalyzeArgs) -> Result<RunPlan, Error> {
    let file: PlanFile = match &args.config {
        Some(path) => {
            let data = std::fs::read_to_string(path).map_err(|e| Error::Io {
                context: format!("reading config {}", path.display()),
                source: e,
            })?;
            serde_json::from_str(&data)
                .map_err(|e| Error::InvalidConfig(format!("config {}: {e}", path.display())))?
        }
        None => PlanFile::default(),
    };

    let rounds_list = if !args.rounds.is_empty() {
        args.rounds.clone()
    } else {
        file.rounds.unwrap_or_else(|| vec![9])
    };
    for &r in &rounds_list {
        if !(1..=9).contains(&r) {
            return Err(Error::InvalidRounds(r));
        }
    }

    let c_strings = if !args.c.is_empty() {
        args.c.clone()
    } else if let Some(c) = file.c {
        c
    } else {
        DEFAULT_C_LIST.iter().map(|c| format!("{c:02x}")).collect()
    };
    let c_list: Vec<u8> = c_strings
        .iter()
        .map(|s| parse_c_byte(s))
        .collect::<Result<_, _>>()?;

    let mask_strings = if !args.masks.is_empty() {
        Some(args.masks.clone())
    } else {
        file.masks
    };
    let mask_list = match mask_strings {
        Some(list) => list
            .iter()
            .map(|s| MaskConfig::parse(s))
            .collect::<Result<Vec<_>, _>>()?,
        None => MaskConfig::default_set(),
    };

    if rounds_list.is_empty() || c_list.is_empty() || mask_list.is_empty() {
        return Err(Error::InvalidConfig(
            "rounds, c, and mask lists must be non-empty".into(),
        ));
    }

    let trials = args.trials.or(file.trials).unwrap_or(5_000_000);
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    let seed = args.seed.or(file.seed).unwrap_or(1);
    let master_key = match args.key.as_ref().or(file.key.as_ref()) {
        Some(hex_key) => master_key_from_hex(hex_key)?,
        None => derive_master_key(seed),
    };
    let alpha_base = args.alpha_base.or(file.alpha_base).unwrap_or(0.05);
    if !(0.0..1.0).contains(&alpha_base) || alpha_base <= 0.0 {
        return Err(Error::InvalidConfig("alpha-base must be in (0,1)".into()));
    }

    Ok(RunPlan {
        rounds_list,
        c_list,
        mask_list,
        trials,
        seed,
        master_key,
        workers: args.workers.or(file.workers).unwrap_or_else(default_workers),
        alpha_base,
        eta: args.eta.or(file.eta).unwrap_or(0.1),
        output_dir: args
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("out")),
        masked_c: args.masked_c || file.masked_c.unwrap_or(false),
    })
}

fn run_block_op(args: &BlockArgs, decrypt: bool) -> Result<(), Error> {
    let rk = key_schedule_checked(&hex::decode(&args.key).map_err(|e| {
        Error::InvalidHex(format!("key: {e}"))
    })?)?;
    let block = state_from_hex(&args.block)?;
    let out = if decrypt {
        cipher::decrypt(&block, &rk, args.rounds)?
    } else {
        cipher::encrypt(&block, &rk, args.rounds)?
    };
    println!("{}", state_to_hex(&out));
    Ok(())
}

fn load_permutation(target: &str) -> Result<[u8; 256], Error> {
    match target {
        "sbox" => Ok(SBOX),
        "sbox-inv" => Ok(SBOX_INV),
        path => {
            let data = std::fs::read_to_string(path).map_err(|e| Error::Io {
                context: format!("reading permutation {path}"),
                source: e,
            })?;
            let tokens: Vec<&str> = data.split_whitespace().flat_map(|t| t.split(',')).filter(|t| !t.is_empty()).collect();
            let values: Result<Vec<u8>, _> = tokens
                .iter()
                .map(|t| {
                    let t = t.trim();
                    if let Some(hex_part) = t.strip_prefix("0x") {
                        u8::from_str_radix(hex_part, 16)
                    } else {
                        t.parse::<u8>()
                    }
                })
                .collect();
            let values =
                values.map_err(|e| Error::InvalidConfig(format!("permutation {path}: {e}")))?;
            values
                .as_slice()
                .try_into()
                .map_err(|_| Error::InvalidConfig(format!(
                    "permutation {path}: expected 256 entries, got {}",
                    values.len()
                )))
        }
    }
}

fn run_cdu_table(args: &CduArgs) -> Result<(), Error> {
    let table = load_permutation(&args.target)?;
    let orientation = match args.orientation {
        OrientationArg::Inner => Orientation::Inner,
        OrientationArg::Outer => Orientation::Outer,
    };
    let spectrum = full_spectrum(&table, orientation)?;
    let rendered = match args.format {
        TableFormat::Text => spectrum.to_text(),
        TableFormat::Csv => spectrum.to_csv(),
    };
    match &args.out {
        Some(path) => std::fs::write(path, rendered).map_err(|e| Error::Io {
            context: format!("writing {}", path.display()),
            source: e,
        })?,
        None => print!("{rendered}"),
    }
    Ok(())
}

/// Run the SPRT for a single (a, b) target pair over a fresh trial stream
/// starting after `skip_batches`.
fn sprt_for_pair(
    cfg: &ExperimentConfig,
    target: (kuzdiff::cipher::State, kuzdiff::cipher::State),
    skip_batches: u64,
    max_trials: u64,
    batch: u64,
    alpha: f64,
    beta: f64,
    theta1_factor: f64,
) -> Result<kuzdiff::stats::SprtOutcome, Error> {
    let k_a = cfg.mask.input_nibbles.nibble_count();
    let k_b = cfg.mask.output_nibbles.nibble_count();
    let p0 = expected_probability(k_a, k_b)?;
    let p1 = (p0 * theta1_factor).min(0.999_999);
    let mut hits: Vec<bool> = Vec::new();
    stream_trials(cfg, skip_batches, max_trials, |a, b| {
        hits.push((*a, *b) == target);
        true
    })?;
    sprt(hits, p0, p1, alpha, beta, batch)
}

fn run_analyze(args: &AnalyzeArgs) -> Result<ExitCode, Error> {
    let plan = build_plan(args)?;
    let opts = AnalyzeOptions {
        alpha_base: plan.alpha_base,
        eta: plan.eta,
        ..AnalyzeOptions::default()
    };

    let total = plan.rounds_list.len() * plan.c_list.len() * plan.mask_list.len();
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut failures: Vec<(String, Error)> = Vec::new();
    let mut critical = false;
    let mut done = 0usize;

    for &rounds in &plan.rounds_list {
        for &c in &plan.c_list {
            for mask in &plan.mask_list {
                done += 1;
                let cfg = ExperimentConfig {
                    rounds,
                    c_vector: if plan.masked_c {
                        masked_c(c, mask)
                    } else {
                        broadcast_c(c)
                    },
                    mask: mask.clone(),
                    trials: plan.trials,
                    seed: plan.seed,
                    master_key: plan.master_key,
                };
                let label = format!("{rounds}r c=0x{c:02x} {}", mask.name);
                log::info!("[{done}/{total}] sampling {label} ({} trials)", plan.trials);
                let outcome = run_trials(&cfg, plan.workers)
                    .and_then(|map| analyze(&map, &cfg, &opts))
                    .and_then(|mut result| {
                        if args.sprt {
                            if let Some(best) = result
                                .pair_stats
                                .iter()
                                .min_by(|x, y| x.fdr_p.partial_cmp(&y.fdr_p).unwrap())
                            {
                                let skip = plan.trials.div_ceil(kuzdiff::sampler::BATCH_SIZE);
                                result.sprt_outcome = Some(sprt_for_pair(
                                    &cfg,
                                    (best.a, best.b),
                                    skip,
                                    plan.trials,
                                    100_000,
                                    0.05,
                                    0.2,
                                    1.5,
                                )?);
                            }
                        }
                        let paths = export_results(&result, &cfg, &plan.output_dir)?;
                        log::info!("wrote {}", paths.text.display());
                        Ok((cfg.clone(), result))
                    });
                match outcome {
                    Ok((cfg, result)) => {
                        if result.anomalies.contains(&Anomaly::CriticalAlert) {
                            critical = true;
                            for block in alerts(&result, &cfg) {
                                eprintln!("{block}");
                            }
                        }
                        rows.push(SummaryRow::from_result(&result, &cfg, c));
                    }
                    Err(e) => {
                        log::error!("{label} failed: {e}");
                        failures.push((label, e));
                    }
                }
            }
        }
    }

    match args.format {
        SummaryFormat::Text => print!("{}", summary_table(&rows)),
        SummaryFormat::Json => println!("{}", serde_json::to_string_pretty(&rows).unwrap()),
        SummaryFormat::Csv => {
            println!("marker,c,config,max_bias,fdr_sig_count,min_fdr_p");
            for r in &rows {
                println!(
                    "{:?},{:#04x},{},{},{},{}",
                    r.marker, r.c, r.config_name, r.max_bias, r.fdr_sig_count, r.min_fdr_p
                );
            }
        }
    }
    std::fs::create_dir_all(&plan.output_dir).map_err(|e| Error::Io {
        context: format!("creating {}", plan.output_dir.display()),
        source: e,
    })?;
    let summary_path = plan.output_dir.join("summary.txt");
    std::fs::write(&summary_path, summary_table(&rows)).map_err(|e| Error::Io {
        context: format!("writing {}", summary_path.display()),
        source: e,
    })?;

    if !failures.is_empty() {
        eprintln!("{} of {total} configurations failed:", failures.len());
        for (label, e) in &failures {
            eprintln!("  {label}: {e}");
        }
        return Ok(ExitCode::from(1));
    }
    Ok(if critical {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn run_sprt_scan(args: &SprtArgs) -> Result<(), Error> {
    let c = parse_c_byte(&args.c)?;
    let mask = MaskConfig::parse(&args.mask)?;
    let master_key = match &args.key {
        Some(hex_key) => master_key_from_hex(hex_key)?,
        None => derive_master_key(args.seed),
    };
    let cfg = ExperimentConfig {
        rounds: args.rounds,
        c_vector: broadcast_c(c),
        mask,
        trials: args.max_trials,
        seed: args.seed,
        master_key,
    };
    cfg.validate()?;

    // Pilot phase: one batch window to pick the strongest pair as the SPRT
    // target, then the sequential phase runs on fresh trials.
    let pilot_trials = args.batch.clamp(10_000, args.max_trials);
    let mut pilot = std::collections::HashMap::new();
    stream_trials(&cfg, 0, pilot_trials, |a, b| {
        *pilot.entry((*a, *b)).or_insert(0u64) += 1;
        true
    })?;
    let (&target, &count) = pilot
        .iter()
        .max_by_key(|&(k, v)| (*v, std::cmp::Reverse(*k)))
        .ok_or_else(|| Error::InvalidConfig("pilot phase produced no pairs".into()))?;
    println!(
        "pilot: {} trials, target pair {} -> {} (count {})",
        pilot_trials,
        state_to_hex(&target.0),
        state_to_hex(&target.1),
        count
    );

    let skip_batches = pilot_trials.div_ceil(kuzdiff::sampler::BATCH_SIZE);
    let remaining = args.max_trials.saturating_sub(pilot_trials);
    let outcome = sprt_for_pair(
        &cfg,
        target,
        skip_batches,
        remaining,
        args.batch,
        args.alpha,
        args.beta,
        args.theta1_factor,
    )?;
    println!(
        "boundaries: A={:.4} (accept H1), B={:.4} (accept H0)",
        outcome.boundary_a, outcome.boundary_b
    );
    let decision = match outcome.decision {
        SprtDecision::AcceptH1 => "H1 accepted: differential rate exceeds the uniform null",
        SprtDecision::AcceptH0 => "H0 accepted: consistent with the uniform null",
        SprtDecision::Undecided => "undecided within the trial budget",
    };
    println!(
        "decision after {} sequential trials: {decision}",
        outcome.n_at_decision
    );
    if let Some(last) = outcome.llr_trace.last() {
        println!("final LLR {last:.4} ({} checkpoints)", outcome.llr_trace.len());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Encrypt(args) => run_block_op(&args, false).map(|_| ExitCode::SUCCESS),
        Command::Decrypt(args) => run_block_op(&args, true).map(|_| ExitCode::SUCCESS),
        Command::CduTable(args) => run_cdu_table(&args).map(|_| ExitCode::SUCCESS),
        Command::Analyze(args) => run_analyze(&args),
        Command::SprtScan(args) => run_sprt_scan(&args).map(|_| ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are clean exits; real usage errors are 1
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
