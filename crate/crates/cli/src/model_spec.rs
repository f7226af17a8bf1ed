//! `model pack` input: either explicit weights or a generator seed.

use aiwasm_core::engine::{Model, VOCAB_SIZE};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub e: Vec<f64>,
    pub a: Vec<f64>,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "default_vocab")]
    pub vocab_size: u32,
    pub hidden_dim: u32,
    pub max_context: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub weights: Option<Weights>,
}

fn default_vocab() -> u32 {
    VOCAB_SIZE
}

impl ModelSpec {
    pub fn build(self) -> Result<Model, String> {
        if self.vocab_size != VOCAB_SIZE {
            return Err(format!("vocab_size must be {VOCAB_SIZE}, got {}", self.vocab_size));
        }
        let model = match (self.seed, self.weights) {
            (Some(seed), None) => Model::generate(self.hidden_dim, self.max_context, seed),
            (None, Some(w)) => Model::new(self.hidden_dim, self.max_context, w.e, w.a, w.w, w.b),
            _ => return Err("exactly one of `seed` or `weights` is required".into()),
        };
        model.map_err(|e| e.to_string())
    }
}
