//! Name-service contract for the WASM adapter.
//!
//! Build with `./build.sh`; the output is checked in as
//! `contracts/nameservice.wasm`.

use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

mod host {
    #[link(wasm_import_module = "env")]
    extern "C" {
        pub fn storage_get(kptr: *const u8, klen: i32, vptr: *mut u8, vcap: i32) -> i32;
        pub fn storage_set(kptr: *const u8, klen: i32, vptr: *const u8, vlen: i32);
        pub fn nn_build_from_cache(idptr: *const u8, idlen: i32) -> i32;
        pub fn nn_init_ctx(graph: i32, seed_lo: i32, seed_hi: i32, mode: i32, max_tokens: i32) -> i32;
        pub fn nn_set_input(ctx: i32, idx: i32, ptr: *const u8, len: i32) -> i32;
        pub fn nn_compute(ctx: i32) -> i32;
        pub fn nn_get_output(ctx: i32, idx: i32, ptr: *mut u8, cap: i32) -> i32;
    }
}

const MAX_TOKENS_LIMIT: u32 = 256;
const OUTPUT_CAPACITY: usize = 1000;

#[derive(Deserialize)]
struct Envelope {
    env: Env,
    msg: Msg,
}

#[derive(Deserialize)]
struct Env {
    seed: u64,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum Msg {
    Register { name: String, value: String },
    Resolve { name: String },
    InferFromName { name: String, max_tokens: u32, mode: String, model_id: String },
}

type Events = Vec<(String, String)>;

fn get(key: &[u8]) -> Option<Vec<u8>> {
    let mut buf = vec![0u8; 64];
    loop {
        let n = unsafe { host::storage_get(key.as_ptr(), key.len() as i32, buf.as_mut_ptr(), buf.len() as i32) };
        if n < 0 {
            return None;
        }
        let n = n as usize;
        if n <= buf.len() {
            buf.truncate(n);
            return Some(buf);
        }
        buf = vec![0u8; n];
    }
}

fn set(key: &[u8], value: &[u8]) {
    unsafe { host::storage_set(key.as_ptr(), key.len() as i32, value.as_ptr(), value.len() as i32) }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.len() <= 64 && name.bytes().all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'-'))
}

fn ev(k: &str, v: &str) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn nn_err(op: &str, status: i32) -> Value {
    json!({"kind": "nn", "op": op, "status": status})
}

fn lookup(name: &str) -> Result<Vec<u8>, Value> {
    if !valid_name(name) {
        return Err(json!({"kind": "invalid_name", "name": name}));
    }
    get(name.as_bytes()).ok_or_else(|| json!({"kind": "name_not_found", "name": name}))
}

fn infer(name: &str, max_tokens: u32, mode: &str, model_id: &str, seed: u64) -> Result<Events, Value> {
    if !valid_name(name) {
        return Err(json!({"kind": "invalid_name", "name": name}));
    }
    if max_tokens == 0 || max_tokens > MAX_TOKENS_LIMIT {
        return Err(json!({"kind": "invalid_max_tokens", "max_tokens": max_tokens}));
    }
    let value = lookup(name)?;
    let mut prompt = format!("name:{name} value:").into_bytes();
    prompt.extend_from_slice(&value);

    let mode = if mode == "sampled" { 1 } else { 0 };
    let graph = unsafe { host::nn_build_from_cache(model_id.as_ptr(), model_id.len() as i32) };
    if graph < 0 {
        return Err(nn_err("build_from_cache", -graph));
    }
    let ctx = unsafe { host::nn_init_ctx(graph, seed as u32 as i32, (seed >> 32) as u32 as i32, mode, max_tokens as i32) };
    if ctx < 0 {
        return Err(nn_err("init_execution_context", -ctx));
    }
    let status = unsafe { host::nn_set_input(ctx, 0, prompt.as_ptr(), prompt.len() as i32) };
    if status != 0 {
        return Err(nn_err("set_input", status));
    }
    let status = unsafe { host::nn_compute(ctx) };
    if status != 0 {
        return Err(nn_err("compute", status));
    }
    let mut out = vec![0u8; OUTPUT_CAPACITY];
    let n = unsafe { host::nn_get_output(ctx, 0, out.as_mut_ptr(), out.len() as i32) };
    if n < 0 {
        return Err(nn_err("get_output", -n));
    }
    out.truncate(n as usize);

    let digest: [u8; 32] = Sha256::digest(&out).into();
    set(format!("infer/{name}").as_bytes(), &digest);
    Ok(vec![ev("action", "infer_from_name"), ev("name", name), ev("digest", &hex::encode(digest))])
}

fn handle(envelope: Envelope) -> Result<Events, Value> {
    match envelope.msg {
        Msg::Register { name, value } => {
            if !valid_name(&name) {
                return Err(json!({"kind": "invalid_name", "name": name}));
            }
            set(name.as_bytes(), value.as_bytes());
            Ok(vec![ev("action", "register"), ev("name", &name)])
        }
        Msg::Resolve { name } => {
            let value = lookup(&name)?;
            Ok(vec![ev("action", "resolve"), ev("name", &name), ev("value", &String::from_utf8_lossy(&value))])
        }
        Msg::InferFromName { name, max_tokens, mode, model_id } => {
            infer(&name, max_tokens, &mode, &model_id, envelope.env.seed)
        }
    }
}

#[no_mangle]
pub extern "C" fn alloc(len: i32) -> *mut u8 {
    let mut buf = Vec::<u8>::with_capacity(len.max(0) as usize);
    let ptr = buf.as_mut_ptr();
    std::mem::forget(buf);
    ptr
}

/// # Safety
/// `ptr` must point to `len` bytes written by the host into memory
/// returned from `alloc`.
#[no_mangle]
pub unsafe extern "C" fn execute(ptr: *const u8, len: i32) -> *const u8 {
    let input = std::slice::from_raw_parts(ptr, len as usize);
    let envelope: Envelope = serde_json::from_slice(input).expect("host sends a valid envelope");
    let reply = match handle(envelope) {
        Ok(events) => json!({"ok": {"events": events}}),
        Err(e) => json!({"err": e}),
    };
    let body = serde_json::to_vec(&reply).expect("json values serialize");
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    let ptr = out.as_ptr();
    std::mem::forget(out);
    ptr
}
