use aiwasm_core::chain::derive_seed;
use aiwasm_core::hash::Digest;
use serde::Deserialize;

#[derive(Deserialize)]
struct Golden {
    vectors: Vec<Vector>,
}

#[derive(Deserialize)]
struct Vector {
    chain_id: String,
    height: u64,
    tx_hash: String,
    seed: u64,
}

#[test]
fn beacon_golden_vectors() {
    let golden: Golden = serde_json::from_str(include_str!("fixtures/beacon_golden.json")).unwrap();
    assert!(!golden.vectors.is_empty());
    for v in golden.vectors {
        let tx = Digest::from_hex(&v.tx_hash).unwrap();
        assert_eq!(derive_seed(&v.chain_id, v.height, &tx.0).0, v.seed, "{} @ {}", v.chain_id, v.height);
    }
}
