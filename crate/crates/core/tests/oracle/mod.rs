//! Reference implementations used as test oracles. They are written
//! separately from the library: raw byte parsing, index loops, no shared
//! helpers.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const V: usize = 256;

/// Weights parsed straight out of a WICM file.
pub struct RawModel {
    pub d: usize,
    pub max_ctx: usize,
    pub e: Vec<f64>,
    pub a: Vec<f64>,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

fn u32_at(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]])
}

fn f64s(bytes: &[u8], off: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut raw = [0u8; 8];
        raw.copy_from_slice(&bytes[off + 8 * i..off + 8 * i + 8]);
        out.push(f64::from_le_bytes(raw));
    }
    out
}

impl RawModel {
    pub fn parse(bytes: &[u8]) -> RawModel {
        assert_eq!(&bytes[0..4], b"WICM");
        assert_eq!(u32_at(bytes, 4), 1);
        assert_eq!(u32_at(bytes, 8) as usize, V);
        let d = u32_at(bytes, 12) as usize;
        let max_ctx = u32_at(bytes, 16) as usize;
        let mut off = 24;
        let e = f64s(bytes, off, V * d);
        off += 8 * V * d;
        let a = f64s(bytes, off, d * d);
        off += 8 * d * d;
        let w = f64s(bytes, off, V * d);
        off += 8 * V * d;
        let b = f64s(bytes, off, V);
        off += 8 * V;
        assert_eq!(off, bytes.len());
        RawModel { d, max_ctx, e, a, w, b }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"WICM");
        for x in [1u32, V as u32, self.d as u32, self.max_ctx as u32, 0] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for arr in [&self.e, &self.a, &self.w, &self.b] {
            for x in arr.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Weights uniform in `[-scale, scale]`.
    pub fn random(rng: &mut ChaCha8Rng, d: usize, max_ctx: usize, scale: f64) -> RawModel {
        let mut fill = |n: usize| (0..n).map(|_| rng.random_range(-scale..=scale)).collect::<Vec<f64>>();
        RawModel { d, max_ctx, e: fill(V * d), a: fill(d * d), w: fill(V * d), b: fill(V) }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Straight-line evaluation of the recurrence over the whole sequence.
pub fn scalar_forward(m: &RawModel, tokens: &[u32]) -> Vec<f64> {
    let d = m.d;
    let mut h = vec![0.0f64; d];
    for &x in tokens {
        let x = x as usize;
        let mut next = vec![0.0f64; d];
        for i in 0..d {
            let mut s = 0.0f64;
            for j in 0..d {
                s += m.a[i * d + j] * h[j];
            }
            s += m.e[x * d + i];
            next[i] = s.tanh();
        }
        h = next;
    }
    let mut logits = vec![0.0f64; V];
    for v in 0..V {
        let mut s = 0.0f64;
        for j in 0..d {
            s += m.w[v * d + j] * h[j];
        }
        logits[v] = s + m.b[v];
    }
    logits
}

pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleDecode {
    pub output: Vec<u8>,
    pub tokens_generated: u32,
    pub context_overflow: bool,
}

/// Step-by-step decoding: full forward pass each step, explicit softmax and
/// CDF walk. `temperature == None` means greedy.
pub fn oracle_decode(m: &RawModel, prompt: &[u8], max_tokens: u32, temperature: Option<f64>, seed: u64) -> OracleDecode {
    let mut seq: Vec<u32> = prompt.iter().map(|&b| b as u32).collect();
    let mut state = seed;
    let mut output = Vec::new();
    let mut n = 0u32;
    let mut overflow = false;
    while n < max_tokens {
        let logits = scalar_forward(m, &seq);
        let token = match temperature {
            None => {
                let mut best = 0usize;
                for k in 1..V {
                    if logits[k] > logits[best] {
                        best = k;
                    }
                }
                best
            }
            Some(t) => {
                let mut max = f64::NEG_INFINITY;
                for &l in &logits {
                    if l > max {
                        max = l;
                    }
                }
                let mut weights = [0.0f64; V];
                let mut total = 0.0f64;
                for k in 0..V {
                    weights[k] = ((logits[k] - max) / t).exp();
                }
                for k in 0..V {
                    total += weights[k];
                }
                let u = splitmix64(&mut state) as f64 / 2f64.powi(64);
                let mut cdf = 0.0f64;
                let mut pick = None;
                for k in 0..V {
                    cdf += weights[k] / total;
                    if cdf >= u {
                        pick = Some(k);
                        break;
                    }
                }
                match pick {
                    Some(k) => k,
                    None => (0..V).rev().find(|&k| weights[k] / total > 0.0).unwrap(),
                }
            }
        };
        n += 1;
        if token == 0 {
            break;
        }
        output.push(token as u8);
        if seq.len() == m.max_ctx {
            overflow = n < max_tokens;
            break;
        }
        seq.push(token as u32);
    }
    OracleDecode { output, tokens_generated: n, context_overflow: overflow }
}

/// Mode of a multiset of digest labels; ties go to the smallest label.
pub fn brute_majority<T: Ord + Copy>(votes: &[T]) -> T {
    let mut best: Option<(T, usize)> = None;
    for &candidate in votes {
        let count = votes.iter().filter(|&&v| v == candidate).count();
        best = match best {
            None => Some((candidate, count)),
            Some((b, c)) if count > c || (count == c && candidate < b) => Some((candidate, count)),
            keep => keep,
        };
    }
    best.unwrap().0
}

/// Digest with the largest stake sum; ties go to the smallest label.
pub fn brute_stake<T: Ord + Copy>(votes: &[(T, u64)]) -> T {
    let mut best: Option<(T, u128)> = None;
    for &(candidate, _) in votes {
        let sum: u128 = votes.iter().filter(|(v, _)| *v == candidate).map(|(_, s)| *s as u128).sum();
        best = match best {
            None => Some((candidate, sum)),
            Some((b, s)) if sum > s || (sum == s && candidate < b) => Some((candidate, sum)),
            keep => keep,
        };
    }
    best.unwrap().0
}
