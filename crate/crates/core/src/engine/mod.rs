//! Deterministic byte-level causal language model.
//!
//! The model is a single tanh recurrence over byte tokens:
//! `h <- tanh(A·h + E[x])` per input token, then `logits = W·h + b`.
//! All arithmetic is binary64 and every dot product is accumulated left to
//! right in index order, starting from `0.0`, so results are bit-exact for a
//! given libm `tanh`/`exp`.

mod model;
mod rng;

pub use model::{Model, ModelHeader, FORMAT_VERSION, HEADER_LEN, MAGIC, VOCAB_SIZE};
pub use rng::{splitmix64_next, SplitMix64, GOLDEN_GAMMA};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::Digest;

/// Token ids are byte values; kept wider than `u8` so out-of-range input is
/// representable and rejected.
pub type TokenId = u32;

/// End-of-sequence token.
pub const EOS_TOKEN: TokenId = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("bad magic {0:?}, expected \"WICM\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },
    #[error("file has trailing bytes: expected {expected} bytes, found {actual}")]
    TrailingBytes { expected: u64, actual: u64 },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("{array} has {actual} weights, expected {expected}")]
    DimensionMismatch { array: &'static str, expected: usize, actual: usize },
    #[error("weight {index} is not finite")]
    NonFiniteWeight { index: u64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("empty input sequence")]
    EmptyInput,
    #[error("token {token} outside vocabulary of {vocab}")]
    TokenOutOfRange { token: TokenId, vocab: usize },
    #[error("sequence of {len} tokens exceeds max context {max}")]
    ContextOverflow { len: usize, max: usize },
    #[error("invalid decode parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub mode: DecodeMode,
    pub max_tokens: u32,
    /// Only read in `Sampled` mode.
    pub temperature: f64,
}

impl DecodeParams {
    pub fn greedy(max_tokens: u32) -> Self {
        DecodeParams { mode: DecodeMode::Greedy, max_tokens, temperature: 1.0 }
    }

    pub fn sampled(max_tokens: u32, temperature: f64) -> Self {
        DecodeParams { mode: DecodeMode::Sampled, max_tokens, temperature }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.max_tokens == 0 {
            return Err(EngineError::InvalidParams("max_tokens must be at least 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(EngineError::InvalidParams("temperature must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeResult {
    /// Generated bytes, EOS excluded.
    pub output: Vec<u8>,
    /// Tokens produced, EOS included when emitted.
    pub tokens_generated: u32,
    pub digest: Digest,
    /// Decoding stopped because the sequence filled the model context.
    pub context_overflow: bool,
}

/// One decoding step, reported to [`decode_traced`] observers.
#[derive(Debug)]
pub struct StepTrace<'a> {
    pub step: u32,
    pub logits: &'a [f64],
    pub token: TokenId,
    /// The uniform draw, in `Sampled` mode.
    pub draw: Option<f64>,
}

/// Left-to-right dot product starting from `0.0`.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Hidden state of the recurrence after consuming some prefix.
#[derive(Debug, Clone)]
struct Hidden {
    h: Vec<f64>,
    scratch: Vec<f64>,
}

impl Hidden {
    fn new(dim: usize) -> Self {
        Hidden { h: vec![0.0; dim], scratch: vec![0.0; dim] }
    }

    fn step(&mut self, model: &Model, token: usize) {
        let e = model.embedding_row(token);
        for (i, slot) in self.scratch.iter_mut().enumerate() {
            *slot = (dot(model.recurrence_row(i), &self.h) + e[i]).tanh();
        }
        std::mem::swap(&mut self.h, &mut self.scratch);
    }

    fn logits_into(&self, model: &Model, out: &mut [f64]) {
        let bias = model.bias();
        for (v, slot) in out.iter_mut().enumerate() {
            *slot = dot(model.output_row(v), &self.h) + bias[v];
        }
    }
}

fn check_token(model: &Model, token: TokenId) -> Result<usize, EngineError> {
    if (token as usize) < model.vocab_size() {
        Ok(token as usize)
    } else {
        Err(EngineError::TokenOutOfRange { token, vocab: model.vocab_size() })
    }
}

/// Next-token logits for `tokens`, recomputing the recurrence from a zero
/// state.
pub fn forward(model: &Model, tokens: &[TokenId]) -> Result<Vec<f64>, EngineError> {
    if tokens.is_empty() {
        return Err(EngineError::EmptyInput);
    }
    if tokens.len() > model.max_context() {
        return Err(EngineError::ContextOverflow { len: tokens.len(), max: model.max_context() });
    }
    let mut hidden = Hidden::new(model.hidden_dim());
    for &t in tokens {
        hidden.step(model, check_token(model, t)?);
    }
    let mut logits = vec![0.0; model.vocab_size()];
    hidden.logits_into(model, &mut logits);
    Ok(logits)
}

/// Argmax with ties resolved to the lowest token id.
pub fn argmax(logits: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate().skip(1) {
        if l > logits[best] {
            best = i;
        }
    }
    best as TokenId
}

/// Softmax probabilities `exp((l_i - max) / T) / sum`, sum accumulated left
/// to right.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|&l| ((l - max) / temperature).exp()).collect();
    let mut total = 0.0;
    for w in &weights {
        total += w;
    }
    weights.into_iter().map(|w| w / total).collect()
}

/// Smallest `k` whose running CDF reaches `u`. When rounding leaves the final
/// CDF below `u`, the last token with non-zero probability is returned.
pub fn invert_cdf(probs: &[f64], u: f64) -> TokenId {
    let mut cdf = 0.0;
    for (k, p) in probs.iter().enumerate() {
        cdf += p;
        if cdf >= u {
            return k as TokenId;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1) as TokenId
}

/// Autoregressive decoding. Greedy mode never touches the PRNG; sampled mode
/// draws exactly once per generated token from splitmix64 seeded with `seed`.
pub fn decode(
    model: &Model,
    prompt: &[u8],
    params: &DecodeParams,
    seed: u64,
) -> Result<DecodeResult, EngineError> {
    decode_traced(model, prompt, params, seed, |_| {})
}

/// [`decode`] with a callback per generated token.
pub fn decode_traced<F>(
    model: &Model,
    prompt: &[u8],
    params: &DecodeParams,
    seed: u64,
    mut observe: F,
) -> Result<DecodeResult, EngineError>
where
    F: FnMut(&StepTrace<'_>),
{
    params.validate()?;
    if prompt.is_empty() {
        return Err(EngineError::EmptyInput);
    }
    if prompt.len() > model.max_context() {
        return Err(EngineError::ContextOverflow { len: prompt.len(), max: model.max_context() });
    }

    let mut hidden = Hidden::new(model.hidden_dim());
    for &b in prompt {
        hidden.step(model, b as usize);
    }
    let mut seq_len = prompt.len();
    let mut rng = SplitMix64::new(seed);
    let mut logits = vec![0.0; model.vocab_size()];
    let mut output = Vec::new();
    let mut generated = 0u32;
    let mut context_overflow = false;

    while generated < params.max_tokens {
        hidden.logits_into(model, &mut logits);
        let (token, draw) = match params.mode {
            DecodeMode::Greedy => (argmax(&logits), None),
            DecodeMode::Sampled => {
                let u = rng.next_unit();
                (invert_cdf(&softmax(&logits, params.temperature), u), Some(u))
            }
        };
        observe(&StepTrace { step: generated, logits: &logits, token, draw });
        generated += 1;
        if token == EOS_TOKEN {
            break;
        }
        output.push(token as u8);
        if seq_len == model.max_context() {
            context_overflow = generated < params.max_tokens;
            break;
        }
        hidden.step(model, token as usize);
        seq_len += 1;
    }

    let digest = Digest::of(&output);
    Ok(DecodeResult { output, tokens_generated: generated, digest, context_overflow })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_bias(token: usize) -> Model {
        let mut bias = vec![0.0; 256];
        bias[token] = 1.0;
        Model::new(4, 64, vec![0.0; 1024], vec![0.0; 16], vec![0.0; 1024], bias).unwrap()
    }

    fn zeros() -> Model {
        Model::new(4, 64, vec![0.0; 1024], vec![0.0; 16], vec![0.0; 1024], vec![0.0; 256]).unwrap()
    }

    #[test]
    fn one_hot_logits() {
        let logits = forward(&one_hot_bias(65), &[b'q' as u32, 3]).unwrap();
        for (i, l) in logits.iter().enumerate() {
            assert_eq!(*l, if i == 65 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn zero_model_logits() {
        assert!(forward(&zeros(), &[1, 2, 3]).unwrap().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn forward_errors() {
        let m = zeros();
        assert_eq!(forward(&m, &[]), Err(EngineError::EmptyInput));
        assert!(matches!(forward(&m, &[256]), Err(EngineError::TokenOutOfRange { token: 256, .. })));
        assert!(matches!(
            forward(&m, &[1; 65]),
            Err(EngineError::ContextOverflow { len: 65, max: 64 })
        ));
    }

    #[test]
    fn greedy_one_hot() {
        let r = decode(&one_hot_bias(65), b"x", &DecodeParams::greedy(5), 0).unwrap();
        assert_eq!(r.output, b"AAAAA");
        assert_eq!(r.tokens_generated, 5);
        assert_eq!(r.digest, Digest::of(b"AAAAA"));
        assert!(!r.context_overflow);
    }

    #[test]
    fn greedy_tie_is_eos() {
        let r = decode(&zeros(), b"x", &DecodeParams::greedy(5), 0).unwrap();
        assert_eq!(r.output, b"");
        assert_eq!(r.tokens_generated, 1);
    }

    #[test]
    fn argmax_lowest_tie() {
        assert_eq!(argmax(&[0.0, 2.0, 1.0, 2.0]), 1);
        assert_eq!(argmax(&[3.0, 3.0]), 0);
    }

    #[test]
    fn cdf_inversion_edges() {
        let p = [0.25, 0.25, 0.5, 0.0];
        assert_eq!(invert_cdf(&p, 0.0), 0);
        assert_eq!(invert_cdf(&p, 0.25), 0);
        assert_eq!(invert_cdf(&p, 0.2500001), 1);
        assert_eq!(invert_cdf(&p, 1.0), 2);
        // Rounded CDF below u falls back to the last positive entry.
        assert_eq!(invert_cdf(&[0.3, 0.3, 0.3, 0.0], 1.0), 2);
    }

    #[test]
    fn context_overflow_keeps_output() {
        let mut bias = vec![0.0; 256];
        bias[66] = 1.0;
        let m = Model::new(1, 4, vec![0.0; 256], vec![0.0], vec![0.0; 256], bias).unwrap();
        let r = decode(&m, b"ab", &DecodeParams::greedy(10), 0).unwrap();
        // Two tokens fill the context, the third is emitted from a full one.
        assert_eq!(r.output, b"BBB");
        assert_eq!(r.tokens_generated, 3);
        assert!(r.context_overflow);
        // Exactly enough budget is not an overflow.
        let r = decode(&m, b"ab", &DecodeParams::greedy(3), 0).unwrap();
        assert!(!r.context_overflow);
        assert!(matches!(
            decode(&m, b"abcde", &DecodeParams::greedy(1), 0),
            Err(EngineError::ContextOverflow { .. })
        ));
    }

    #[test]
    fn params_validation() {
        let m = zeros();
        assert!(decode(&m, b"x", &DecodeParams::greedy(0), 0).is_err());
        assert!(decode(&m, b"x", &DecodeParams::sampled(1, 0.0), 0).is_err());
        assert!(decode(&m, b"x", &DecodeParams::sampled(1, f64::NAN), 0).is_err());
        assert_eq!(decode(&m, b"", &DecodeParams::greedy(1), 0), Err(EngineError::EmptyInput));
    }

    #[test]
    fn incremental_state_matches_forward() {
        let m = Model::generate(6, 64, 3).unwrap();
        let params = DecodeParams::sampled(20, 0.7);
        let prompt = b"hello".to_vec();
        let mut seq: Vec<TokenId> = prompt.iter().map(|&b| b as TokenId).collect();
        decode_traced(&m, &prompt, &params, 11, |step| {
            let full = forward(&m, &seq).unwrap();
            assert_eq!(
                full.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                step.logits.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
            seq.push(step.token);
        })
        .unwrap();
    }
}
