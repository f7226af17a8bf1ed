//! `aiwasm`: store and run name-service contracts on a local chain, simulate
//! validator sets, benchmark the toy model and pack model files.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage or parse error, 3 out of
//! gas.

mod config;
mod local;
mod model_spec;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use aiwasm_core::consensus::{run_scenario, ReplicationReport, Scenario};
use aiwasm_core::engine::{decode, DecodeMode, DecodeParams, Model};
use aiwasm_core::hash::Digest;
use aiwasm_core::nn::{is_valid_model_id, DirCache, ModelCache};
use aiwasm_core::runtime::{Address, CodeId, ExecError, ExecuteMsg};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use config::{parse_json, CliConfig, Overrides};
use local::LocalChain;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(String),
    OutOfGas,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) => 2,
            CliError::OutOfGas => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "aiwasm", version, about = "Deterministic AI inference for smart contracts, on a desk")]
struct Cli {
    /// JSON config file.
    #[arg(long, global = true, env = "AIWASM_CONFIG")]
    config: Option<PathBuf>,
    /// Directory holding `<model_id>.wicm` files.
    #[arg(long, global = true, env = "AIWASM_CACHE_ROOT")]
    cache_root: Option<PathBuf>,
    /// Local chain state directory.
    #[arg(long, global = true, env = "AIWASM_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "AIWASM_CHAIN_ID")]
    chain_id: Option<String>,
    /// Default model for `bench`.
    #[arg(long, global = true, env = "AIWASM_MODEL_ID")]
    model_id: Option<String>,
    #[arg(long, global = true, env = "AIWASM_TX_GAS_LIMIT")]
    tx_gas_limit: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Store contract code and print its code id.
    Store { file: PathBuf },
    /// Create a contract instance; `nameservice` names the built-in code.
    Instantiate { code_id: String },
    /// Execute a message (a JSON file or inline JSON) at the next height.
    Execute { addr: String, msg: String },
    /// Run a multi-validator scenario.
    Simulate {
        scenario: PathBuf,
        /// Output directory for chain logs and the consensus report.
        #[arg(long, default_value = "sim-out")]
        out: PathBuf,
    },
    /// Measure decode throughput.
    Bench {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        max_tokens: u32,
        #[arg(long)]
        repeats: u32,
        #[arg(long, value_enum, default_value_t = Mode::Greedy)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Model file tools.
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Write a `.wicm` file from a JSON spec.
    Pack {
        spec: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Validate a `.wicm` file and print its header.
    Inspect { file: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Greedy,
    Sampled,
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json values serialize"));
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn cmd_store(cfg: &CliConfig, file: &Path) -> Result<(), CliError> {
    let code = read(file)?;
    let mut chain = LocalChain::open(cfg)?;
    let id = chain.runtime.store_code(&code).map_err(|e| CliError::Domain(e.to_string()))?;
    chain.save()?;
    println!("{id}");
    Ok(())
}

fn cmd_instantiate(cfg: &CliConfig, code_id: &str) -> Result<(), CliError> {
    let id = if code_id == "nameservice" {
        CodeId::NAMESERVICE
    } else {
        Digest::from_hex(code_id)
            .map(CodeId)
            .map_err(|e| CliError::Usage(format!("invalid code id {code_id:?}: {e}")))?
    };
    let mut chain = LocalChain::open(cfg)?;
    let addr = chain.runtime.instantiate(id).map_err(|e| CliError::Domain(e.to_string()))?;
    chain.save()?;
    println!("{addr}");
    Ok(())
}

fn cmd_execute(cfg: &CliConfig, addr: &str, msg: &str) -> Result<(), CliError> {
    let addr = Address::from_hex(addr).map_err(|e| CliError::Usage(format!("invalid address {addr:?}: {e}")))?;
    let (source, text) = if msg.trim_start().starts_with('{') {
        (PathBuf::from("<msg>"), msg.to_string())
    } else {
        let path = PathBuf::from(msg);
        let text = String::from_utf8(read(&path)?).map_err(|e| CliError::Usage(format!("{msg}: {e}")))?;
        (path, text)
    };
    let msg: ExecuteMsg = parse_json(&source, &text)?;

    let mut chain = LocalChain::open(cfg)?;
    let (height, block, result) = chain.execute(&addr, &msg)?;
    let app_hash = chain.runtime.app_hash();
    match result {
        Ok(r) => {
            let inference = r.inference.as_ref().map(|inf| {
                json!({
                    "output": String::from_utf8_lossy(&inf.output),
                    "output_hex": hex::encode(&inf.output),
                    "digest": inf.digest,
                    "tokens_generated": inf.tokens_generated,
                })
            });
            print_json(&json!({
                "ok": true,
                "height": height,
                "tx_hash": block.tx_hash,
                "events": r.events,
                "gas": r.gas,
                "inference": inference,
                "state_writes": r.state_writes,
                "app_hash": app_hash,
            }));
            Ok(())
        }
        Err(f) => {
            print_json(&json!({
                "ok": false,
                "height": height,
                "tx_hash": block.tx_hash,
                "error": f.error.to_string(),
                "gas": f.gas,
                "app_hash": app_hash,
            }));
            match f.error {
                ExecError::OutOfGas { .. } => Err(CliError::OutOfGas),
                e => Err(CliError::Domain(e.to_string())),
            }
        }
    }
}

fn safe_file_name(id: &str) -> bool {
    !id.starts_with('.') && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

fn cmd_simulate(cfg: &CliConfig, path: &Path, out: &Path) -> Result<(), CliError> {
    let text = String::from_utf8(read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let scenario: Scenario = parse_json(path, &text)?;
    if let Some(v) = scenario.validators.iter().find(|v| !safe_file_name(&v.id)) {
        return Err(CliError::Usage(format!("validator id {:?} must match [A-Za-z0-9._-]+", v.id)));
    }
    let cache = DirCache::new(&cfg.cache_root);
    match cache.fetch(&scenario.model_id) {
        Ok(Some(_)) => {}
        Ok(None) => {
            return Err(CliError::Domain(format!(
                "model {:?} not found under {}",
                scenario.model_id,
                cfg.cache_root.display()
            )))
        }
        Err(e) => return Err(CliError::Domain(e.to_string())),
    }

    let sim = run_scenario(&scenario, Arc::new(cache)).map_err(|e| CliError::Domain(e.to_string()))?;

    let logs_dir = out.join("logs");
    fs::create_dir_all(&logs_dir).map_err(|e| CliError::Domain(format!("cannot create {}: {e}", logs_dir.display())))?;
    for id in sim.logs.keys() {
        let file = logs_dir.join(format!("{id}.jsonl"));
        let bytes = sim.log_bytes(id).expect("id comes from the log map");
        fs::write(&file, bytes).map_err(|e| CliError::Domain(format!("cannot write {}: {e}", file.display())))?;
    }
    let report = out.join("report.json");
    fs::write(&report, sim.report.to_json())
        .map_err(|e| CliError::Domain(format!("cannot write {}: {e}", report.display())))?;

    for tx in &sim.report.txs {
        let agreed = tx.outcome.agreed_digest.map(|d| d.to_hex()[..16].to_string()).unwrap_or_else(|| "-".into());
        println!(
            "height={} decided={} agreed={} divergence={}",
            tx.height, tx.outcome.decided, agreed, tx.outcome.divergence_detected
        );
    }
    match &sim.report.replication {
        ReplicationReport::Replicated { .. } => println!("replication: replicated"),
        ReplicationReport::Diverged { first, validators } => println!(
            "replication: diverged at height {} tx {} ({})",
            first.height,
            first.tx_index,
            validators.iter().cloned().collect::<Vec<_>>().join(", ")
        ),
        ReplicationReport::MissingHeights { missing, .. } => println!(
            "replication: missing heights ({})",
            missing.keys().cloned().collect::<Vec<_>>().join(", ")
        ),
    }
    println!("wrote {} logs and {}", sim.logs.len(), report.display());
    Ok(())
}

fn load_model(cfg: &CliConfig, model_id: &str) -> Result<Model, CliError> {
    if !is_valid_model_id(model_id) {
        return Err(CliError::Usage(format!("invalid model id {model_id:?}")));
    }
    let bytes = DirCache::new(&cfg.cache_root)
        .fetch(model_id)
        .map_err(|e| CliError::Domain(e.to_string()))?
        .ok_or_else(|| CliError::Domain(format!("model {model_id:?} not found under {}", cfg.cache_root.display())))?;
    Model::load(&bytes).map_err(|e| CliError::Domain(format!("{model_id}: {e}")))
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    cfg: &CliConfig,
    model_id: Option<&str>,
    prompt: &str,
    max_tokens: u32,
    repeats: u32,
    mode: Mode,
    seed: u64,
    as_json: bool,
) -> Result<(), CliError> {
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let params = match mode {
        Mode::Greedy => DecodeParams { mode: DecodeMode::Greedy, max_tokens, temperature: 1.0 },
        Mode::Sampled => DecodeParams { mode: DecodeMode::Sampled, max_tokens, temperature: 1.0 },
    };
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let model_id = model_id.unwrap_or(&cfg.model_id);
    let model = load_model(cfg, model_id)?;

    let mut rates = Vec::with_capacity(repeats as usize);
    let mut digests = Vec::with_capacity(repeats as usize);
    let mut tokens = 0;
    for _ in 0..repeats {
        let start = Instant::now();
        let r = decode(&model, prompt.as_bytes(), &params, seed).map_err(|e| CliError::Domain(e.to_string()))?;
        let secs = start.elapsed().as_secs_f64().max(1e-9);
        rates.push(r.tokens_generated as f64 / secs);
        digests.push(r.digest);
        tokens = r.tokens_generated;
    }
    rates.sort_by(f64::total_cmp);
    let n = rates.len();
    let median = if n % 2 == 1 { rates[n / 2] } else { (rates[n / 2 - 1] + rates[n / 2]) / 2.0 };
    let stable = digests.iter().all(|d| *d == digests[0]);

    if as_json {
        print_json(&json!({
            "model_id": model_id,
            "hidden_dim": model.hidden_dim(),
            "repeats": repeats,
            "tokens_generated": tokens,
            "digest": digests[0],
            "digests_identical": stable,
            "median_tokens_per_sec": median,
        }));
    } else {
        println!("model {model_id} D={} size={} bytes", model.hidden_dim(), model.size_bytes());
        println!("tokens_generated {tokens}");
        println!("digest {}", digests[0]);
        println!("digests_identical {stable} over {repeats} repeats");
        println!("median {median:.0} tokens/s");
    }
    Ok(())
}

fn cmd_pack(spec: &Path, out: &Path) -> Result<(), CliError> {
    let text = String::from_utf8(read(spec)?).map_err(|e| CliError::Usage(format!("{}: {e}", spec.display())))?;
    let spec: model_spec::ModelSpec = parse_json(spec, &text)?;
    let model = spec.build().map_err(CliError::Domain)?;
    let bytes = model.to_bytes();
    fs::write(out, &bytes).map_err(|e| CliError::Domain(format!("cannot write {}: {e}", out.display())))?;
    println!("wrote {} ({} bytes)", out.display(), bytes.len());
    Ok(())
}

fn cmd_inspect(file: &Path) -> Result<(), CliError> {
    let bytes = read(file)?;
    let model = Model::load(&bytes).map_err(|e| CliError::Domain(format!("{}: {e}", file.display())))?;
    let h = model.header();
    println!("V={} D={} max_context={} size={}", h.vocab_size, h.hidden_dim, h.max_context, model.size_bytes());
    println!("sha256 {}", Digest::of(&bytes));
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let over = Overrides {
        cache_root: cli.cache_root,
        data_dir: cli.data_dir,
        chain_id: cli.chain_id,
        model_id: cli.model_id,
        tx_gas_limit: cli.tx_gas_limit,
    };
    let cfg = CliConfig::load(cli.config.as_deref(), over)?;
    match cli.command {
        Command::Store { file } => cmd_store(&cfg, &file),
        Command::Instantiate { code_id } => cmd_instantiate(&cfg, &code_id),
        Command::Execute { addr, msg } => cmd_execute(&cfg, &addr, &msg),
        Command::Simulate { scenario, out } => cmd_simulate(&cfg, &scenario, &out),
        Command::Bench { model, prompt, max_tokens, repeats, mode, seed, json } => {
            cmd_bench(&cfg, model.as_deref(), &prompt, max_tokens, repeats, mode, seed, json)
        }
        Command::Model { command: ModelCommand::Pack { spec, out } } => cmd_pack(&spec, &out),
        Command::Model { command: ModelCommand::Inspect { file } } => cmd_inspect(&file),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(m) | CliError::Domain(m) => eprintln!("error: {m}"),
                CliError::OutOfGas => eprintln!("error: out of gas"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
