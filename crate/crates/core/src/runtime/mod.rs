//! Contract runtime: code store, instances, and transaction execution
//! against a [`HostEnv`].

mod host;
pub mod nameservice;
#[cfg(feature = "wasm-adapter")]
pub mod wasm;

pub use host::{HostEnv, HostError, HostOutcome};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::chain::{BlockContext, ChainState, OutOfGas, GasReceipt, GasSchedule};
use crate::engine::DecodeMode;
use crate::hash::{canonical_json, hex_bytes, Digest};
use crate::nn::{ModelCache, NnFacade};

pub const WASM_MAGIC: [u8; 4] = *b"\0asm";

/// Content address of stored code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CodeId(pub Digest);

impl CodeId {
    /// Reserved id of the built-in name service.
    pub const NAMESERVICE: CodeId = CodeId(Digest({
        let mut id = [0u8; 32];
        id[31] = 1;
        id
    }));
}

impl fmt::Display for CodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 20];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Address(out))
    }

    /// `c/<hex address>/`
    pub fn storage_prefix(&self) -> Vec<u8> {
        format!("c/{}/", self.to_hex()).into_bytes()
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Address::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ExecuteMsg {
    Register { name: String, value: String },
    Resolve { name: String },
    InferFromName { name: String, max_tokens: u32, mode: DecodeMode, model_id: String },
}

pub type Event = (String, String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceRecord {
    #[serde(with = "hex_bytes")]
    pub output: Vec<u8>,
    pub digest: Digest,
    pub tokens_generated: u32,
}

/// A committed write, key relative to the contract's storage prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateWrite {
    #[serde(with = "hex_bytes")]
    pub key: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub value: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecResult {
    pub events: Vec<Event>,
    pub gas: GasReceipt,
    pub inference: Option<InferenceRecord>,
    pub state_writes: Vec<StateWrite>,
}

/// Errors raised by contract logic. The serialized form is shared with
/// WASM guests.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContractError {
    #[error("name {name:?} not found")]
    NameNotFound { name: String },
    #[error("invalid name {name:?}")]
    InvalidName { name: String },
    #[error("max_tokens {max_tokens} outside 1..=256")]
    InvalidMaxTokens { max_tokens: u32 },
    #[error("inference call {op} failed with status {status}")]
    Nn { op: String, status: i32 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error("out of gas: needed {needed}, remaining {remaining}")]
    OutOfGas { needed: u64, remaining: u64 },
    #[error("unknown contract {0}")]
    UnknownContract(Address),
    #[error("missing import {0}")]
    MissingImport(String),
    #[error("missing export {0}")]
    MissingExport(String),
    #[error("invalid wasm module: {0}")]
    InvalidModule(String),
    #[error("guest trapped: {0}")]
    GuestTrap(String),
    #[error("invalid guest output: {0}")]
    InvalidGuestOutput(String),
    #[error("wasm contracts are not supported in this build")]
    WasmUnsupported,
}

impl From<OutOfGas> for ExecError {
    fn from(e: OutOfGas) -> Self {
        ExecError::OutOfGas { needed: e.needed, remaining: e.remaining }
    }
}

/// A failed transaction: state untouched, gas still accounted.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{error}")]
pub struct ExecFailure {
    pub error: ExecError,
    pub gas: GasReceipt,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("invalid wasm magic")]
    InvalidWasmMagic,
    #[error("unknown code id {0}")]
    UnknownCodeId(CodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Code {
    NameService,
    Wasm(Arc<Vec<u8>>),
}

/// `SHA-256(canonical {"contract", "height", "msg"})`
pub fn tx_hash(contract: &Address, height: u64, msg: &ExecuteMsg) -> Digest {
    #[derive(Serialize)]
    struct TxEnvelope<'a> {
        contract: &'a Address,
        height: u64,
        msg: &'a ExecuteMsg,
    }
    Digest::of(&canonical_json(&TxEnvelope { contract, height, msg }))
}

/// Persistable runtime state (everything except the facade).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeSnapshot {
    pub state: ChainState,
    /// Stored WASM codes, hex encoded.
    pub codes: BTreeMap<CodeId, String>,
    pub contracts: BTreeMap<Address, CodeId>,
    pub instance_counter: u64,
}

/// One validator's contract runtime.
pub struct Runtime {
    chain_id: String,
    schedule: GasSchedule,
    state: Arc<ChainState>,
    codes: BTreeMap<CodeId, Code>,
    contracts: BTreeMap<Address, CodeId>,
    instance_counter: u64,
    // Moved into the host environment while a transaction runs.
    facade: Option<NnFacade>,
}

impl fmt::Debug for Runtime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Runtime")
            .field("chain_id", &self.chain_id)
            .field("height", &self.state.height)
            .field("contracts", &self.contracts.len())
            .finish()
    }
}

impl Runtime {
    pub fn new(chain_id: impl Into<String>, schedule: GasSchedule, facade: NnFacade) -> Self {
        let mut codes = BTreeMap::new();
        codes.insert(CodeId::NAMESERVICE, Code::NameService);
        Runtime {
            chain_id: chain_id.into(),
            schedule,
            state: Arc::new(ChainState::new()),
            codes,
            contracts: BTreeMap::new(),
            instance_counter: 0,
            facade: Some(facade),
        }
    }

    pub fn with_cache(chain_id: impl Into<String>, schedule: GasSchedule, cache: Arc<dyn ModelCache>) -> Self {
        Runtime::new(chain_id, schedule, NnFacade::new(cache))
    }

    pub fn restore(chain_id: impl Into<String>, schedule: GasSchedule, facade: NnFacade, snapshot: RuntimeSnapshot) -> Result<Self, hex::FromHexError> {
        let mut rt = Runtime::new(chain_id, schedule, facade);
        for (id, code) in snapshot.codes {
            rt.codes.insert(id, Code::Wasm(Arc::new(hex::decode(code)?)));
        }
        rt.state = Arc::new(snapshot.state);
        rt.contracts = snapshot.contracts;
        rt.instance_counter = snapshot.instance_counter;
        Ok(rt)
    }

    pub fn snapshot(&self) -> RuntimeSnapshot {
        RuntimeSnapshot {
            state: self.state.as_ref().clone(),
            codes: self
                .codes
                .iter()
                .filter_map(|(id, code)| match code {
                    Code::Wasm(bytes) => Some((*id, hex::encode(bytes.as_slice()))),
                    Code::NameService => None,
                })
                .collect(),
            contracts: self.contracts.clone(),
            instance_counter: self.instance_counter,
        }
    }

    pub fn chain_id(&self) -> &str {
        &self.chain_id
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.schedule
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn set_height(&mut self, height: u64) {
        Arc::make_mut(&mut self.state).height = height;
    }

    pub fn app_hash(&self) -> Digest {
        self.state.app_hash()
    }

    /// Content-addressed; storing the same bytes twice is a no-op.
    pub fn store_code(&mut self, code: &[u8]) -> Result<CodeId, RuntimeError> {
        if code.len() < 4 || code[..4] != WASM_MAGIC {
            return Err(RuntimeError::InvalidWasmMagic);
        }
        let id = CodeId(Digest::of(code));
        self.codes.entry(id).or_insert_with(|| Code::Wasm(Arc::new(code.to_vec())));
        Ok(id)
    }

    pub fn code_exists(&self, id: &CodeId) -> bool {
        self.codes.contains_key(id)
    }

    /// Address = first 20 bytes of `SHA-256(code_id || counter_le)`.
    pub fn instantiate(&mut self, code_id: CodeId) -> Result<Address, RuntimeError> {
        if !self.codes.contains_key(&code_id) {
            return Err(RuntimeError::UnknownCodeId(code_id));
        }
        let digest = Digest::of_parts(&[code_id.0.as_bytes(), &self.instance_counter.to_le_bytes()]);
        let mut addr = [0u8; 20];
        addr.copy_from_slice(&digest.0[..20]);
        self.instance_counter += 1;
        let addr = Address(addr);
        self.contracts.insert(addr, code_id);
        Ok(addr)
    }

    pub fn contract_code(&self, addr: &Address) -> Option<CodeId> {
        self.contracts.get(addr).copied()
    }

    /// Executes one transaction. On failure nothing is written; the
    /// receipt reflects the charges made before the failure.
    pub fn execute(&mut self, addr: &Address, msg: &ExecuteMsg, block: &BlockContext) -> Result<ExecResult, ExecFailure> {
        let fail = |error| ExecFailure { error, gas: GasReceipt::default() };
        let code_id = self.contracts.get(addr).ok_or_else(|| fail(ExecError::UnknownContract(*addr)))?;
        let code = self.codes.get(code_id).cloned().ok_or_else(|| fail(ExecError::UnknownContract(*addr)))?;

        let mut facade = self.facade.take().expect("facade is returned after every transaction");
        facade.reset_session();
        let prefix = addr.storage_prefix();
        let env = HostEnv::new(Arc::clone(&self.state), prefix.clone(), self.schedule, facade, block.clone());
        let (result, env) = match &code {
            Code::NameService => {
                let mut env = env;
                (nameservice::execute(&mut env, msg), env)
            }
            #[cfg(feature = "wasm-adapter")]
            Code::Wasm(bytes) => wasm::execute(bytes, msg, env),
            #[cfg(not(feature = "wasm-adapter"))]
            Code::Wasm(_) => (Err(ExecError::WasmUnsupported), env),
        };
        let state_writes = env.writes();
        let HostOutcome { writes, gas, inference, facade } = env.finish();
        self.facade = Some(facade);
        match result {
            Ok(events) => {
                let state = Arc::make_mut(&mut self.state);
                for (k, v) in writes {
                    let mut key = prefix.clone();
                    key.extend_from_slice(&k);
                    state.kv.insert(key, v);
                }
                Ok(ExecResult { events, gas, inference, state_writes })
            }
            Err(error) => Err(ExecFailure { error, gas }),
        }
    }
}
