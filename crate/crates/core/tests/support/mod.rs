//! Workload generators shared by integration and acceptance tests.

#![allow(dead_code)]

use aiwasm_core::engine::{DecodeMode, Model};
use aiwasm_core::runtime::ExecuteMsg;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::oracle::RawModel;

/// One-hot bias at token 65 (`A`), everything else zero.
pub fn one_hot() -> Vec<u8> {
    let mut bias = vec![0.0; 256];
    bias[65] = 1.0;
    Model::new(4, 512, vec![0.0; 1024], vec![0.0; 16], vec![0.0; 1024], bias).unwrap().to_bytes()
}

/// A random name-service workload: registrations followed by a mix of
/// resolves and inferences in both decode modes.
pub fn random_txs(rng: &mut ChaCha8Rng, model_id: &str) -> Vec<ExecuteMsg> {
    const NAME_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789-";
    let names: Vec<String> = (0..rng.random_range(1..=3))
        .map(|_| {
            let len = rng.random_range(1..=12);
            (0..len).map(|_| NAME_CHARS[rng.random_range(0..NAME_CHARS.len())] as char).collect()
        })
        .collect();
    let mut txs = Vec::new();
    for name in &names {
        let len = rng.random_range(0..=48);
        let value: String = (0..len).map(|_| rng.random_range(' '..='~')).collect();
        txs.push(ExecuteMsg::Register { name: name.clone(), value });
    }
    for _ in 0..rng.random_range(1..=4) {
        let name = names[rng.random_range(0..names.len())].clone();
        if rng.random_bool(0.2) {
            txs.push(ExecuteMsg::Resolve { name });
        } else {
            let mode = if rng.random_bool(0.5) { DecodeMode::Greedy } else { DecodeMode::Sampled };
            txs.push(ExecuteMsg::InferFromName {
                name,
                max_tokens: rng.random_range(1..=64),
                mode,
                model_id: model_id.into(),
            });
        }
    }
    txs
}

/// A random model with `D <= max_d`, context large enough for any prompt
/// [`random_txs`] builds.
pub fn random_model_bytes(rng: &mut ChaCha8Rng, max_d: usize) -> Vec<u8> {
    let d = rng.random_range(1..=max_d);
    let scale = [0.5, 1.0, 2.0][rng.random_range(0..3)];
    RawModel::random(rng, d, 256, scale).to_bytes()
}

/// Mixed valid and invalid name-service messages.
pub fn corpus(n: usize) -> Vec<ExecuteMsg> {
    let mut rng = super::oracle::rng(0xD1FF);
    let names = ["alice", "bob", "carol-9", "x", "unregistered", "Bad", "", "a/b", &"z".repeat(65)];
    let models = ["one-hot", "rand8", "rand16", "tiny-ctx", "corrupt", "missing", "bad id!"];
    let mut out = Vec::new();
    for name in ["alice", "bob", "carol-9", "x"] {
        out.push(ExecuteMsg::Register { name: name.into(), value: format!("value of {name}") });
    }
    while out.len() < n {
        let name = names[rng.random_range(0..names.len())].to_string();
        let msg = match rng.random_range(0..10) {
            0..=1 => {
                let len = rng.random_range(0..40);
                let value: String = (0..len).map(|_| rng.random_range(' '..='\u{3ff}')).collect();
                ExecuteMsg::Register { name, value }
            }
            2..=3 => ExecuteMsg::Resolve { name },
            _ => ExecuteMsg::InferFromName {
                name,
                max_tokens: [0, 1, 5, 17, 64, 256, 257][rng.random_range(0..7)],
                mode: if rng.random_bool(0.5) { DecodeMode::Greedy } else { DecodeMode::Sampled },
                model_id: models[rng.random_range(0..models.len())].into(),
            },
        };
        out.push(msg);
    }
    out
}
