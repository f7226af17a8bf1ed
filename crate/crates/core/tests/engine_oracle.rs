mod oracle;

use aiwasm_core::engine::{decode, forward, DecodeParams, Model, SplitMix64};
use oracle::{oracle_decode, scalar_forward, RawModel};
use rand::Rng;

#[test]
fn forward_matches_scalar_oracle() {
    let mut rng = oracle::rng(0xF0);
    for case in 0..100 {
        let d = rng.random_range(1..=8);
        let raw = RawModel::random(&mut rng, d, 64, 1.5);
        let model = Model::load(&raw.to_bytes()).unwrap();
        let len = rng.random_range(1..=32);
        let prompt: Vec<u32> = (0..len).map(|_| rng.random_range(0..256)).collect();
        let got = forward(&model, &prompt).unwrap();
        let want = scalar_forward(&raw, &prompt);
        for (k, (g, w)) in got.iter().zip(&want).enumerate() {
            assert_eq!(g.to_bits(), w.to_bits(), "case {case}, logit {k}");
        }
    }
}

#[test]
fn forward_random_d4_hi() {
    let raw = RawModel::random(&mut oracle::rng(4), 4, 16, 1.0);
    let model = Model::load(&raw.to_bytes()).unwrap();
    let got = forward(&model, &[b'h' as u32, b'i' as u32]).unwrap();
    let want = scalar_forward(&raw, &[b'h' as u32, b'i' as u32]);
    assert!(got.iter().zip(&want).all(|(g, w)| g.to_bits() == w.to_bits()));
}

#[test]
fn sampled_decode_matches_oracle() {
    let mut rng = oracle::rng(0x5A);
    for case in 0..100 {
        let d = rng.random_range(1..=8);
        let scale = [0.5, 1.0, 3.0][case % 3];
        let max_ctx = rng.random_range(8..=48);
        let raw = RawModel::random(&mut rng, d, max_ctx, scale);
        let model = Model::load(&raw.to_bytes()).unwrap();
        let len = rng.random_range(1..=8);
        let prompt: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let seed: u64 = rng.random();
        let max_tokens = rng.random_range(1..=48);
        let temperature = [0.5, 1.0, 2.0][case % 3];

        let got = decode(&model, &prompt, &DecodeParams::sampled(max_tokens, temperature), seed).unwrap();
        let want = oracle_decode(&raw, &prompt, max_tokens, Some(temperature), seed);
        assert_eq!(got.output, want.output, "case {case}");
        assert_eq!(got.tokens_generated, want.tokens_generated, "case {case}");
        assert_eq!(got.context_overflow, want.context_overflow, "case {case}");
    }
}

#[test]
fn greedy_decode_matches_oracle() {
    let mut rng = oracle::rng(0x6B);
    for case in 0..50 {
        let d = rng.random_range(1..=16);
        let raw = RawModel::random(&mut rng, d, 40, 2.0);
        let model = Model::load(&raw.to_bytes()).unwrap();
        let prompt: Vec<u8> = (0..rng.random_range(1..=16)).map(|_| rng.random()).collect();
        let got = decode(&model, &prompt, &DecodeParams::greedy(32), case).unwrap();
        let want = oracle_decode(&raw, &prompt, 32, None, 0);
        assert_eq!((got.output, got.tokens_generated), (want.output, want.tokens_generated), "case {case}");
    }
}

#[test]
fn sampled_d4_seed_42_is_stable() {
    let raw = RawModel::random(&mut oracle::rng(42), 4, 64, 1.0);
    let model = Model::load(&raw.to_bytes()).unwrap();
    let params = DecodeParams::sampled(8, 1.0);
    let first = decode(&model, b"hi", &params, 42).unwrap();
    let want = oracle_decode(&raw, b"hi", 8, Some(1.0), 42);
    assert_eq!(first.output, want.output);
    assert_eq!(first.tokens_generated, want.tokens_generated);
    for _ in 0..1000 {
        assert_eq!(decode(&model, b"hi", &params, 42).unwrap(), first);
    }
}

#[test]
fn greedy_ignores_seed() {
    let model = Model::generate(8, 64, 3).unwrap();
    let a = decode(&model, b"seed", &DecodeParams::greedy(20), 1).unwrap();
    for seed in [0, 2, u64::MAX] {
        assert_eq!(decode(&model, b"seed", &DecodeParams::greedy(20), seed).unwrap(), a);
    }
}

#[test]
fn splitmix_matches_oracle() {
    for seed in [0u64, 1, 2, 42, u64::MAX] {
        let mut state = seed;
        let mut rng = SplitMix64::new(seed);
        for _ in 0..100 {
            assert_eq!(rng.next_u64(), oracle::splitmix64(&mut state));
        }
    }
}

#[test]
fn generated_model_round_trips_through_raw_parser() {
    let model = Model::generate(4, 32, 7).unwrap();
    let bytes = model.to_bytes();
    let raw = RawModel::parse(&bytes);
    assert_eq!(raw.to_bytes(), bytes);
    assert!(raw.e.iter().chain(&raw.a).chain(&raw.w).chain(&raw.b).all(|x| (-1.0..1.0).contains(x)));
    assert_eq!(bytes.len() as u64, model.size_bytes());
}
