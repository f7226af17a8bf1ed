use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::hash::Digest;

/// Replicated key-value state. Keys iterate in bytewise order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChainState {
    pub kv: BTreeMap<Vec<u8>, Vec<u8>>,
    pub height: u64,
}

impl ChainState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &[u8]) -> Option<&[u8]> {
        self.kv.get(key).map(Vec::as_slice)
    }

    pub fn insert(&mut self, key: impl Into<Vec<u8>>, value: impl Into<Vec<u8>>) {
        self.kv.insert(key.into(), value.into());
    }

    pub fn app_hash(&self) -> Digest {
        app_hash(self)
    }
}

/// SHA-256 over entries sorted by key, each encoded as
/// `len(key) u32le || key || len(value) u32le || value`.
pub fn app_hash(state: &ChainState) -> Digest {
    let mut hasher = Sha256::new();
    for (k, v) in &state.kv {
        hasher.update((k.len() as u32).to_le_bytes());
        hasher.update(k);
        hasher.update((v.len() as u32).to_le_bytes());
        hasher.update(v);
    }
    Digest(hasher.finalize().into())
}

// On disk the map is a list of hex pairs so non-UTF-8 keys survive JSON.
#[derive(Serialize, Deserialize)]
struct StateRepr {
    height: u64,
    kv: Vec<(String, String)>,
}

impl Serialize for ChainState {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        StateRepr {
            height: self.height,
            kv: self.kv.iter().map(|(k, v)| (hex::encode(k), hex::encode(v))).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ChainState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = StateRepr::deserialize(deserializer)?;
        let mut kv = BTreeMap::new();
        for (k, v) in repr.kv {
            let k = hex::decode(k).map_err(serde::de::Error::custom)?;
            let v = hex::decode(v).map_err(serde::de::Error::custom)?;
            kv.insert(k, v);
        }
        Ok(ChainState { kv, height: repr.height })
    }
}
