use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chain::BlockRecord;
use crate::hash::Digest;

/// The first point where validators' app hashes disagree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub height: u64,
    pub tx_index: usize,
    /// App hash held by most validators at that height.
    pub reference: Digest,
    pub mismatched: BTreeMap<String, Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ReplicationReport {
    Replicated {
        heights: u64,
    },
    Diverged {
        first: Divergence,
        /// Every validator that disagreed with the reference at any height.
        validators: BTreeSet<String>,
    },
    MissingHeights {
        expected: Vec<u64>,
        missing: BTreeMap<String, Vec<u64>>,
    },
}

impl ReplicationReport {
    pub fn is_replicated(&self) -> bool {
        matches!(self, ReplicationReport::Replicated { .. })
    }
}

fn reference_hash<'a>(hashes: impl Iterator<Item = &'a Digest>) -> Digest {
    let mut counts: BTreeMap<Digest, usize> = BTreeMap::new();
    for h in hashes {
        *counts.entry(*h).or_default() += 1;
    }
    let mut best: Option<(Digest, usize)> = None;
    for (h, n) in counts {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((h, n));
        }
    }
    best.map(|(h, _)| h).unwrap_or_default()
}

/// Compares per-validator chain logs height by height. The reference at
/// each height is the most common app hash (smallest on ties).
pub fn verify_replication(logs: &BTreeMap<String, Vec<BlockRecord>>) -> ReplicationReport {
    let expected: BTreeSet<u64> = logs.values().flatten().map(|b| b.height).collect();
    let mut missing = BTreeMap::new();
    for (id, log) in logs {
        let have: BTreeSet<u64> = log.iter().map(|b| b.height).collect();
        let gaps: Vec<u64> = expected.difference(&have).copied().collect();
        if !gaps.is_empty() {
            missing.insert(id.clone(), gaps);
        }
    }
    if !missing.is_empty() {
        return ReplicationReport::MissingHeights { expected: expected.into_iter().collect(), missing };
    }

    let by_height: BTreeMap<&String, BTreeMap<u64, &BlockRecord>> = logs
        .iter()
        .map(|(id, log)| (id, log.iter().map(|b| (b.height, b)).collect()))
        .collect();

    let mut first = None;
    let mut validators = BTreeSet::new();
    for &height in &expected {
        let blocks: BTreeMap<&String, &BlockRecord> =
            by_height.iter().map(|(id, m)| (*id, m[&height])).collect();
        let reference = reference_hash(blocks.values().map(|b| &b.app_hash));
        let mismatched: BTreeMap<String, Digest> = blocks
            .iter()
            .filter(|(_, b)| b.app_hash != reference)
            .map(|(id, b)| ((*id).clone(), b.app_hash))
            .collect();
        if mismatched.is_empty() {
            continue;
        }
        validators.extend(mismatched.keys().cloned());
        if first.is_none() {
            let ref_block = blocks.values().find(|b| b.app_hash == reference).expect("reference comes from a block");
            let tx_index = blocks
                .iter()
                .filter(|(id, _)| mismatched.contains_key(id.as_str()))
                .filter_map(|(_, b)| {
                    b.txs
                        .iter()
                        .zip(&ref_block.txs)
                        .position(|(a, r)| a != r)
                })
                .min()
                .unwrap_or(0);
            first = Some(Divergence { height, tx_index, reference, mismatched });
        }
    }
    match first {
        None => ReplicationReport::Replicated { heights: expected.len() as u64 },
        Some(first) => ReplicationReport::Diverged { first, validators },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(height: u64, hash: u8) -> BlockRecord {
        BlockRecord { height, txs: vec![], app_hash: Digest([hash; 32]), agreed_digests: vec![] }
    }

    fn logs(entries: &[(&str, Vec<BlockRecord>)]) -> BTreeMap<String, Vec<BlockRecord>> {
        entries.iter().map(|(id, l)| (id.to_string(), l.clone())).collect()
    }

    #[test]
    fn replicated() {
        let l = logs(&[("a", vec![block(1, 1), block(2, 2)]), ("b", vec![block(1, 1), block(2, 2)])]);
        assert_eq!(verify_replication(&l), ReplicationReport::Replicated { heights: 2 });
    }

    #[test]
    fn flags_only_the_odd_node() {
        let l = logs(&[
            ("a", vec![block(1, 1), block(2, 2)]),
            ("b", vec![block(1, 1), block(2, 2)]),
            ("c", vec![block(1, 1), block(2, 9)]),
        ]);
        match verify_replication(&l) {
            ReplicationReport::Diverged { first, validators } => {
                assert_eq!(first.height, 2);
                assert_eq!(first.reference, Digest([2; 32]));
                assert_eq!(first.mismatched.keys().collect::<Vec<_>>(), ["c"]);
                assert_eq!(validators.into_iter().collect::<Vec<_>>(), ["c"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unequal_lengths() {
        let l = logs(&[("a", vec![block(1, 1), block(2, 2)]), ("b", vec![block(1, 1)])]);
        match verify_replication(&l) {
            ReplicationReport::MissingHeights { expected, missing } => {
                assert_eq!(expected, [1, 2]);
                assert_eq!(missing["b"], [2]);
            }
            other => panic!("{other:?}"),
        }
    }
}
