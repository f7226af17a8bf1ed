mod oracle;
mod support;

use std::sync::Arc;

use aiwasm_core::chain::{gas_for_inference, BlockContext, GasSchedule};
use aiwasm_core::nn::MemoryCache;
use aiwasm_core::runtime::{tx_hash, CodeId, ExecuteMsg, Runtime};
use proptest::prelude::*;

/// Closed form written out independently of the library.
fn closed_form(s: &GasSchedule, size: u64, tokens: u64) -> u64 {
    s.g_base + s.g_per_kib_model * size.div_ceil(1024) + s.g_per_token * tokens
}

#[test]
fn every_inference_receipt_matches_closed_form() {
    let mut rng = oracle::rng(0x9A5);
    let schedule = GasSchedule::default();
    let mut inferences = 0;
    for _ in 0..40 {
        let model = support::random_model_bytes(&mut rng, 16);
        let size = model.len() as u64;
        let mut rt = Runtime::with_cache("gas-1", schedule, Arc::new(MemoryCache::new().with("m", model)));
        let addr = rt.instantiate(CodeId::NAMESERVICE).unwrap();
        for (i, msg) in support::random_txs(&mut rng, "m").into_iter().enumerate() {
            let h = i as u64 + 1;
            rt.set_height(h);
            let block = BlockContext { chain_id: "gas-1".into(), height: h, tx_hash: tx_hash(&addr, h, &msg) };
            let before = rt.app_hash();
            match rt.execute(&addr, &msg, &block) {
                Ok(r) => {
                    let g = r.gas;
                    assert_eq!(g.total, g.base + g.model_component + g.token_component + g.storage_component);
                    assert_eq!(g.storage_component, 50 * r.state_writes.len() as u64);
                    if let Some(inf) = &r.inference {
                        let tokens = inf.tokens_generated as u64;
                        assert_eq!(g.base + g.model_component + g.token_component, closed_form(&schedule, size, tokens));
                        assert_eq!(g.total, gas_for_inference(&schedule, size, tokens) + 50);
                        inferences += 1;
                    }
                    if matches!(msg, ExecuteMsg::Resolve { .. }) {
                        assert_eq!(g.total, 0);
                    }
                }
                Err(_) => assert_eq!(rt.app_hash(), before),
            }
        }
    }
    assert!(inferences > 20, "only {inferences} inferences ran");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn strictly_monotone_in_tokens(size in 0u64..1 << 30, a in 0u64..1 << 20, b in 0u64..1 << 20) {
        prop_assume!(a != b);
        let s = GasSchedule::default();
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(gas_for_inference(&s, size, lo) < gas_for_inference(&s, size, hi));
        prop_assert_eq!(gas_for_inference(&s, size, a), closed_form(&s, size, a));
    }
}
