//! Loads contracts compiled to WebAssembly and runs them against the same
//! [`HostEnv`] as built-in contracts.
//!
//! Guest contract:
//! - imports only functions from [`HOST_IMPORTS`] under module `env`;
//! - exports `memory`, `alloc(len) -> ptr` and `execute(ptr, len) -> ptr`;
//! - receives `{"env": {chain_id, height, seed, tx_hash}, "msg": ...}` as
//!   canonical JSON;
//! - returns a pointer to a u32-LE length followed by `{"ok": {"events":
//!   [[k, v], ...]}}` or `{"err": <contract error>}`.
//!
//! Pointers and lengths are i32 offsets into guest memory. Handle-returning
//! calls return a negative status code on failure.

use serde::{Deserialize, Serialize};
use wasmi::{Caller, Engine, Extern, Linker, Memory, Module, Store};

use super::host::{HostEnv, HostError};
use super::{ContractError, Event, ExecError, ExecuteMsg};
use crate::engine::DecodeMode;
use crate::hash::{canonical_json, Digest};
use crate::nn::{ContextId, NnError, NnStatus};

pub const HOST_MODULE: &str = "env";

pub const HOST_IMPORTS: &[&str] = &[
    "storage_get",
    "storage_set",
    "gas_consume",
    "nn_build_from_cache",
    "nn_init_ctx",
    "nn_set_input",
    "nn_compute",
    "nn_get_output",
];

pub const REQUIRED_EXPORTS: &[&str] = &["memory", "alloc", "execute"];

/// Largest buffer the host will copy across the boundary.
const MAX_TRANSFER: u32 = 16 << 20;

#[derive(Serialize)]
struct Envelope<'a> {
    env: EnvData<'a>,
    msg: &'a ExecuteMsg,
}

#[derive(Serialize)]
struct EnvData<'a> {
    chain_id: &'a str,
    height: u64,
    seed: u64,
    tx_hash: Digest,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum GuestReply {
    Ok { events: Vec<Event> },
    Err(ContractError),
}

struct GuestState {
    env: HostEnv,
    /// Set when a host call aborts the transaction.
    fatal: Option<ExecError>,
}

type HostResult<T> = Result<T, wasmi::Error>;

fn abort(caller: &mut Caller<'_, GuestState>, error: ExecError) -> wasmi::Error {
    let message = error.to_string();
    caller.data_mut().fatal = Some(error);
    wasmi::Error::new(message)
}

fn memory(caller: &Caller<'_, GuestState>) -> HostResult<Memory> {
    caller
        .get_export("memory")
        .and_then(Extern::into_memory)
        .ok_or_else(|| wasmi::Error::new("guest memory not exported"))
}

fn read_guest(caller: &Caller<'_, GuestState>, ptr: i32, len: i32) -> HostResult<Vec<u8>> {
    let len = len as u32;
    if len > MAX_TRANSFER {
        return Err(wasmi::Error::new("guest buffer too large"));
    }
    let mut buf = vec![0u8; len as usize];
    memory(caller)?
        .read(caller, ptr as u32 as usize, &mut buf)
        .map_err(|e| wasmi::Error::new(e.to_string()))?;
    Ok(buf)
}

fn write_guest(caller: &mut Caller<'_, GuestState>, ptr: i32, data: &[u8]) -> HostResult<()> {
    let mem = memory(caller)?;
    mem.write(caller, ptr as u32 as usize, data)
        .map_err(|e| wasmi::Error::new(e.to_string()))
}

fn split_u64(lo: i32, hi: i32) -> u64 {
    ((hi as u32 as u64) << 32) | lo as u32 as u64
}

fn status(e: &NnError) -> i32 {
    e.status().code()
}

fn link(engine: &Engine) -> Result<Linker<GuestState>, wasmi::Error> {
    let mut linker = Linker::<GuestState>::new(engine);
    linker.func_wrap(
        HOST_MODULE,
        "storage_get",
        |caller: Caller<'_, GuestState>, kptr: i32, klen: i32, vptr: i32, vcap: i32| -> HostResult<i32> {
            let key = read_guest(&caller, kptr, klen)?;
            let mut caller = caller;
            match caller.data().env.storage_get(&key) {
                None => Ok(-1),
                Some(value) => {
                    // Returns the full length; only `vcap` bytes are copied.
                    let n = value.len().min(vcap.max(0) as usize);
                    write_guest(&mut caller, vptr, &value[..n])?;
                    Ok(value.len() as i32)
                }
            }
        },
    )?;
    linker.func_wrap(
        HOST_MODULE,
        "storage_set",
        |mut caller: Caller<'_, GuestState>, kptr: i32, klen: i32, vptr: i32, vlen: i32| -> HostResult<()> {
            let key = read_guest(&caller, kptr, klen)?;
            let value = read_guest(&caller, vptr, vlen)?;
            match caller.data_mut().env.storage_set(&key, &value) {
                Ok(()) => Ok(()),
                Err(e) => Err(abort(&mut caller, e.into())),
            }
        },
    )?;
    linker.func_wrap(
        HOST_MODULE,
        "gas_consume",
        |mut caller: Caller<'_, GuestState>, lo: i32, hi: i32| -> HostResult<()> {
            let amount = split_u64(lo, hi);
            match caller.data_mut().env.gas_consume(amount) {
                Ok(()) => Ok(()),
                Err(e) => Err(abort(&mut caller, e.into())),
            }
        },
    )?;
    linker.func_wrap(
        HOST_MODULE,
        "nn_build_from_cache",
        |mut caller: Caller<'_, GuestState>, ptr: i32, len: i32| -> HostResult<i32> {
            let id = read_guest(&caller, ptr, len)?;
            let id = String::from_utf8_lossy(&id);
            Ok(match caller.data_mut().env.nn_build(&id) {
                Ok(graph) => graph as i32,
                Err(e) => -status(&e),
            })
        },
    )?;
    linker.func_wrap(
        HOST_MODULE,
        "nn_init_ctx",
        |mut caller: Caller<'_, GuestState>, graph: i32, seed_lo: i32, seed_hi: i32, mode: i32, max_tokens: i32| -> HostResult<i32> {
            let mode = match mode {
                0 => DecodeMode::Greedy,
                1 => DecodeMode::Sampled,
                _ => return Ok(-NnStatus::EngineFailure.code()),
            };
            if graph < 0 {
                return Ok(-NnStatus::InvalidState.code());
            }
            let seed = split_u64(seed_lo, seed_hi);
            Ok(match caller.data_mut().env.nn_init(graph as u64, seed, mode, max_tokens as u32) {
                Ok(ctx) => ctx.0 as i32,
                Err(e) => -status(&e),
            })
        },
    )?;
    linker.func_wrap(
        HOST_MODULE,
        "nn_set_input",
        |mut caller: Caller<'_, GuestState>, ctx: i32, idx: i32, ptr: i32, len: i32| -> HostResult<i32> {
            let prompt = read_guest(&caller, ptr, len)?;
            Ok(match caller.data_mut().env.nn_set_input(ContextId(ctx as u32 as u64), idx as u32, &prompt) {
                Ok(()) => 0,
                Err(e) => status(&e),
            })
        },
    )?;
    linker.func_wrap(
        HOST_MODULE,
        "nn_compute",
        |mut caller: Caller<'_, GuestState>, ctx: i32| -> HostResult<i32> {
            match caller.data_mut().env.nn_compute(ContextId(ctx as u32 as u64)) {
                Ok(()) => Ok(0),
                Err(HostError::Nn(e)) => Ok(status(&e)),
                Err(HostError::Gas(e)) => Err(abort(&mut caller, e.into())),
            }
        },
    )?;
    linker.func_wrap(
        HOST_MODULE,
        "nn_get_output",
        |mut caller: Caller<'_, GuestState>, ctx: i32, idx: i32, ptr: i32, cap: i32| -> HostResult<i32> {
            let capacity = cap.max(0) as usize;
            match caller.data_mut().env.nn_get_output(ContextId(ctx as u32 as u64), idx as u32, capacity) {
                Ok(output) => {
                    write_guest(&mut caller, ptr, &output)?;
                    Ok(output.len() as i32)
                }
                Err(e) => Ok(-status(&e)),
            }
        },
    )?;
    Ok(linker)
}

/// Checks the module's imports and exports against the host ABI.
pub fn validate_module(engine: &Engine, code: &[u8]) -> Result<Module, ExecError> {
    let module = Module::new(engine, code).map_err(|e| ExecError::InvalidModule(e.to_string()))?;
    for import in module.imports() {
        if import.module() != HOST_MODULE || !HOST_IMPORTS.contains(&import.name()) {
            return Err(ExecError::MissingImport(format!("{}.{}", import.module(), import.name())));
        }
    }
    for required in REQUIRED_EXPORTS {
        if !module.exports().any(|e| e.name() == *required) {
            return Err(ExecError::MissingExport((*required).to_string()));
        }
    }
    Ok(module)
}

/// Runs `msg` through a WASM contract. The host environment is returned so
/// the caller can commit or discard its writes.
pub fn execute(code: &[u8], msg: &ExecuteMsg, env: HostEnv) -> (Result<Vec<Event>, ExecError>, HostEnv) {
    let engine = Engine::default();
    let mut store = Store::new(&engine, GuestState { env, fatal: None });
    let result = run(&engine, &mut store, code, msg);
    (result, store.into_data().env)
}

fn run(engine: &Engine, store: &mut Store<GuestState>, code: &[u8], msg: &ExecuteMsg) -> Result<Vec<Event>, ExecError> {
    let module = validate_module(engine, code)?;
    let linker = link(engine).map_err(|e| ExecError::InvalidModule(e.to_string()))?;
    let instance = linker
        .instantiate_and_start(&mut *store, &module)
        .map_err(|e| ExecError::InvalidModule(e.to_string()))?;
    let alloc = instance
        .get_typed_func::<i32, i32>(&*store, "alloc")
        .map_err(|_| ExecError::MissingExport("alloc".into()))?;
    let execute = instance
        .get_typed_func::<(i32, i32), i32>(&*store, "execute")
        .map_err(|_| ExecError::MissingExport("execute".into()))?;
    let memory = instance
        .get_memory(&*store, "memory")
        .ok_or_else(|| ExecError::MissingExport("memory".into()))?;

    let block = store.data().env.block().clone();
    let payload = canonical_json(&Envelope {
        env: EnvData {
            chain_id: &block.chain_id,
            height: block.height,
            seed: block.seed().0,
            tx_hash: block.tx_hash,
        },
        msg,
    });

    let trap = |store: &mut Store<GuestState>, e: wasmi::Error| {
        store.data_mut().fatal.take().unwrap_or_else(|| ExecError::GuestTrap(e.to_string()))
    };
    let ptr = match alloc.call(&mut *store, payload.len() as i32) {
        Ok(ptr) => ptr,
        Err(e) => return Err(trap(store, e)),
    };
    memory
        .write(&mut *store, ptr as u32 as usize, &payload)
        .map_err(|e| ExecError::GuestTrap(e.to_string()))?;
    let out = match execute.call(&mut *store, (ptr, payload.len() as i32)) {
        Ok(out) => out,
        Err(e) => return Err(trap(store, e)),
    };

    let mut len = [0u8; 4];
    memory
        .read(&*store, out as u32 as usize, &mut len)
        .map_err(|e| ExecError::InvalidGuestOutput(e.to_string()))?;
    let len = u32::from_le_bytes(len);
    if len > MAX_TRANSFER {
        return Err(ExecError::InvalidGuestOutput(format!("reply of {len} bytes")));
    }
    let mut reply = vec![0u8; len as usize];
    memory
        .read(&*store, out as u32 as usize + 4, &mut reply)
        .map_err(|e| ExecError::InvalidGuestOutput(e.to_string()))?;
    match serde_json::from_slice::<GuestReply>(&reply) {
        Ok(GuestReply::Ok { events }) => Ok(events),
        Ok(GuestReply::Err(e)) => Err(ExecError::Contract(e)),
        Err(e) => Err(ExecError::InvalidGuestOutput(e.to_string())),
    }
}
