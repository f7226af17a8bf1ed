//! Browser bindings over the inference engine, the consensus policies and
//! the gas schedule. Every entry point returns a JSON string.

use std::collections::BTreeMap;

use aiwasm_core::chain::{derive_seed, gas_for_inference, GasSchedule};
use aiwasm_core::consensus::{select_result, Behavior, ConsensusPolicy, ValidatorSpec, Vote};
use aiwasm_core::engine::{decode, decode_traced, softmax, DecodeParams, Model};
use aiwasm_core::hash::Digest;
use serde::Deserialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

const CHAIN_ID: &str = "demo-1";

fn params(sampled: bool, max_tokens: u32, temperature: f64) -> DecodeParams {
    if sampled {
        DecodeParams::sampled(max_tokens, temperature)
    } else {
        DecodeParams::greedy(max_tokens)
    }
}

/// Seed the chain would hand to a transaction carrying `prompt` at height 1.
fn beacon(prompt: &str) -> u64 {
    derive_seed(CHAIN_ID, 1, Digest::of(prompt.as_bytes()).as_bytes()).0
}

/// Decodes `prompt` on a generated model and reports every step: the chosen
/// token, its probability under the step's softmax and the uniform draw.
#[wasm_bindgen]
pub fn decode_explorer(
    hidden_dim: u32,
    model_seed: u64,
    prompt: &str,
    max_tokens: u32,
    sampled: bool,
    temperature: f64,
) -> Result<String, String> {
    let model = Model::generate(hidden_dim, 512, model_seed).map_err(|e| e.to_string())?;
    let params = params(sampled, max_tokens, temperature);
    let seed = beacon(prompt);
    let mut steps = Vec::new();
    let result = decode_traced(&model, prompt.as_bytes(), &params, seed, |s| {
        let t = if sampled { temperature } else { 1.0 };
        let probs = softmax(s.logits, t);
        steps.push(json!({
            "step": s.step,
            "token": s.token,
            "char": char::from_u32(s.token).filter(|c| !c.is_control()).map(String::from),
            "prob": probs[s.token as usize],
            "draw": s.draw,
        }));
    })
    .map_err(|e| e.to_string())?;
    Ok(json!({
        "seed": format!("{seed:016x}"),
        "output": String::from_utf8_lossy(&result.output),
        "digest": result.digest.to_hex(),
        "tokens_generated": result.tokens_generated,
        "context_overflow": result.context_overflow,
        "model_bytes": model.size_bytes(),
        "steps": steps,
    })
    .to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TallyRequest {
    validators: Vec<ValidatorSpec>,
    policy: ConsensusPolicy,
    prompt: String,
    #[serde(default)]
    sampled: bool,
}

/// Runs one inference for a validator set: honest nodes vote the real
/// digest, divergent nodes the digest of their masked output, offline nodes
/// abstain. Returns the selected result and the per-digest tally.
#[wasm_bindgen]
pub fn consensus_tally(request: &str) -> Result<String, String> {
    let req: TallyRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let model = Model::generate(8, 512, 1).map_err(|e| e.to_string())?;
    let params = params(req.sampled, 32, 1.0);
    let output = decode(&model, req.prompt.as_bytes(), &params, beacon(&req.prompt))
        .map_err(|e| e.to_string())?
        .output;
    let stakes: BTreeMap<String, u64> = req.validators.iter().map(|v| (v.id.clone(), v.stake)).collect();
    let votes: Vec<Vote> = req
        .validators
        .iter()
        .filter(|v| v.behavior != Behavior::Offline)
        .map(|v| {
            let mask = v.behavior.output_mask().unwrap_or(0);
            let bytes: Vec<u8> = output.iter().map(|b| b ^ mask).collect();
            Vote { validator: v.id.clone(), digest: Digest::of(&bytes), app_hash: Digest::default() }
        })
        .collect();
    let outcome = select_result(&votes, req.policy, &stakes).map_err(|e| e.to_string())?;
    let honest = Digest::of(&output);
    let tally: Vec<_> = outcome
        .vote_tally
        .iter()
        .map(|(d, t)| {
            let voters: Vec<&str> =
                votes.iter().filter(|v| v.digest == *d).map(|v| v.validator.as_str()).collect();
            json!({"digest": d.to_hex(), "count": t.count, "stake": t.stake, "honest": *d == honest, "voters": voters})
        })
        .collect();
    Ok(json!({
        "output": String::from_utf8_lossy(&output),
        "agreed": outcome.agreed_digest.map(|d| d.to_hex()),
        "agreed_is_honest": outcome.agreed_digest == Some(honest),
        "decided": outcome.decided,
        "divergence_detected": outcome.divergence_detected,
        "tally": tally,
    })
    .to_string())
}

/// Gas charged for an inference of `0..=max_tokens` tokens on a model of
/// `hidden_dim`, with the point where the transaction limit is crossed.
#[wasm_bindgen]
pub fn gas_curve(hidden_dim: u32, max_tokens: u32, tx_gas_limit: u64) -> Result<String, String> {
    if hidden_dim == 0 {
        return Err("hidden_dim must be at least 1".into());
    }
    let schedule = GasSchedule { tx_gas_limit, ..GasSchedule::default() };
    let d = hidden_dim as u64;
    let size = 24 + 8 * (256 * d + d * d + 256 * d + 256);
    let points: Vec<u64> = (0..=max_tokens as u64).map(|n| gas_for_inference(&schedule, size, n)).collect();
    let first_over = points.iter().position(|&g| g > tx_gas_limit);
    Ok(json!({
        "model_bytes": size,
        "schedule": schedule,
        "points": points,
        "first_over_limit": first_over,
    })
    .to_string())
}
