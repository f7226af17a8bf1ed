//! Single-node chain persisted under the data directory.

use std::fs::{self, OpenOptions};
use std::io::ErrorKind;
use std::path::PathBuf;
use std::sync::Arc;

use aiwasm_core::chain::{log, BlockContext, BlockRecord, TxRecord};
use aiwasm_core::consensus::outcome_digest;
use aiwasm_core::nn::{DirCache, NnFacade};
use aiwasm_core::runtime::{tx_hash, Address, ExecFailure, ExecResult, ExecuteMsg, Runtime, RuntimeSnapshot};

use crate::config::CliConfig;
use crate::CliError;

const SNAPSHOT: &str = "runtime.json";
const LOG: &str = "chain.jsonl";

pub struct LocalChain {
    pub runtime: Runtime,
    dir: PathBuf,
}

fn io_err(what: &str, path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Domain(format!("{what} {}: {e}", path.display()))
}

impl LocalChain {
    pub fn open(cfg: &CliConfig) -> Result<Self, CliError> {
        let dir = cfg.data_dir.clone();
        fs::create_dir_all(&dir).map_err(|e| io_err("cannot create", &dir, e))?;
        let facade = NnFacade::new(Arc::new(DirCache::new(&cfg.cache_root)));
        let path = dir.join(SNAPSHOT);
        let snapshot = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice::<RuntimeSnapshot>(&bytes)
                .map_err(|e| CliError::Domain(format!("corrupt {}: {e}", path.display())))?,
            Err(e) if e.kind() == ErrorKind::NotFound => RuntimeSnapshot::default(),
            Err(e) => return Err(io_err("cannot read", &path, e)),
        };
        let runtime = Runtime::restore(&cfg.chain_id, cfg.gas, facade, snapshot)
            .map_err(|e| CliError::Domain(format!("corrupt {}: {e}", path.display())))?;
        Ok(LocalChain { runtime, dir })
    }

    pub fn save(&self) -> Result<(), CliError> {
        let path = self.dir.join(SNAPSHOT);
        let tmp = self.dir.join(format!("{SNAPSHOT}.tmp"));
        let bytes = serde_json::to_vec(&self.runtime.snapshot()).expect("snapshot serializes");
        fs::write(&tmp, bytes).map_err(|e| io_err("cannot write", &tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| io_err("cannot write", &path, e))
    }

    /// Runs `msg` as the only transaction of the next block and persists
    /// the result, failed or not.
    pub fn execute(&mut self, addr: &Address, msg: &ExecuteMsg) -> Result<(u64, BlockContext, Result<ExecResult, ExecFailure>), CliError> {
        let height = self.runtime.state().height + 1;
        self.runtime.set_height(height);
        let block = BlockContext {
            chain_id: self.runtime.chain_id().to_string(),
            height,
            tx_hash: tx_hash(addr, height, msg),
        };
        let result = self.runtime.execute(addr, msg, &block);
        let (ok, gas_total) = match &result {
            Ok(r) => (true, r.gas.total),
            Err(f) => (false, f.gas.total),
        };
        let record = BlockRecord {
            height,
            txs: vec![TxRecord {
                tx_hash: block.tx_hash,
                msg: serde_json::to_value(msg).expect("messages serialize"),
                ok,
                gas_total,
                vote_digest: outcome_digest(&result),
            }],
            app_hash: self.runtime.app_hash(),
            agreed_digests: vec![None],
        };
        let path = self.dir.join(LOG);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err("cannot open", &path, e))?;
        log::append_block(file, &record).map_err(|e| io_err("cannot append to", &path, e))?;
        self.save()?;
        Ok((height, block, result))
    }
}
