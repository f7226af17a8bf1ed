use serde::{Deserialize, Serialize};

use crate::hash::Digest;

/// Shared randomness for one transaction, derived from public chain data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BeaconSeed(pub u64);

/// First 8 bytes (LE) of `SHA-256(chain_id || height_le || tx_hash)`.
pub fn derive_seed(chain_id: &str, height: u64, tx_hash: &[u8; 32]) -> BeaconSeed {
    let digest = Digest::of_parts(&[chain_id.as_bytes(), &height.to_le_bytes(), tx_hash]);
    BeaconSeed(u64::from_le_bytes(digest.0[..8].try_into().unwrap()))
}
