//! Built-in name-service contract. Names map to values; a lookup can be
//! turned into an inference prompt whose output digest is stored on chain.

use super::host::{HostEnv, HostError};
use super::{ContractError, Event, ExecError, ExecuteMsg};
use crate::hash::Digest;
use crate::nn::NnError;

pub const MAX_TOKENS_LIMIT: u32 = 256;
/// Output buffer handed to `get_output`.
pub const OUTPUT_CAPACITY: usize = 1000;

/// `[a-z0-9-]{1,64}`
pub fn is_valid_name(name: &str) -> bool {
    (1..=64).contains(&name.len()) && name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

/// The exact prompt fed to the model for a resolved name.
pub fn prompt_for(name: &str, value: &[u8]) -> Vec<u8> {
    let mut prompt = Vec::with_capacity(12 + name.len() + value.len());
    prompt.extend_from_slice(b"name:");
    prompt.extend_from_slice(name.as_bytes());
    prompt.extend_from_slice(b" value:");
    prompt.extend_from_slice(value);
    prompt
}

pub fn infer_key(name: &str) -> Vec<u8> {
    format!("infer/{name}").into_bytes()
}

fn event(key: &str, value: impl Into<String>) -> Event {
    (key.to_string(), value.into())
}

fn check_name(name: &str) -> Result<(), ContractError> {
    if is_valid_name(name) {
        Ok(())
    } else {
        Err(ContractError::InvalidName { name: name.into() })
    }
}

fn nn(op: &'static str) -> impl Fn(NnError) -> ExecError {
    move |e| ContractError::Nn { op: op.into(), status: e.status().code() }.into()
}

fn host(op: &'static str) -> impl Fn(HostError) -> ExecError {
    move |e| match e {
        HostError::Nn(e) => nn(op)(e),
        HostError::Gas(g) => g.into(),
    }
}

pub fn execute(env: &mut HostEnv, msg: &ExecuteMsg) -> Result<Vec<Event>, ExecError> {
    match msg {
        ExecuteMsg::Register { name, value } => {
            check_name(name)?;
            env.storage_set(name.as_bytes(), value.as_bytes())?;
            Ok(vec![event("action", "register"), event("name", name.as_str())])
        }
        ExecuteMsg::Resolve { name } => {
            check_name(name)?;
            let value = env
                .storage_get(name.as_bytes())
                .ok_or_else(|| ContractError::NameNotFound { name: name.clone() })?;
            Ok(vec![
                event("action", "resolve"),
                event("name", name.as_str()),
                event("value", String::from_utf8_lossy(&value)),
            ])
        }
        ExecuteMsg::InferFromName { name, max_tokens, mode, model_id } => {
            check_name(name)?;
            if *max_tokens == 0 || *max_tokens > MAX_TOKENS_LIMIT {
                return Err(ContractError::InvalidMaxTokens { max_tokens: *max_tokens }.into());
            }
            let value = env
                .storage_get(name.as_bytes())
                .ok_or_else(|| ContractError::NameNotFound { name: name.clone() })?;
            let prompt = prompt_for(name, &value);
            let seed = env.block().seed().0;

            let graph = env.nn_build(model_id).map_err(nn("build_from_cache"))?;
            let ctx = env.nn_init(graph, seed, *mode, *max_tokens).map_err(nn("init_execution_context"))?;
            env.nn_set_input(ctx, 0, &prompt).map_err(nn("set_input"))?;
            env.nn_compute(ctx).map_err(host("compute"))?;
            let output = env.nn_get_output(ctx, 0, OUTPUT_CAPACITY).map_err(nn("get_output"))?;

            let digest = Digest::of(&output);
            env.storage_set(&infer_key(name), digest.as_bytes())?;
            Ok(vec![
                event("action", "infer_from_name"),
                event("name", name.as_str()),
                event("digest", digest.to_hex()),
            ])
        }
    }
}
