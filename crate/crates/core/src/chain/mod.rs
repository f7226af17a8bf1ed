//! Chain primitives shared by every validator: gas, beacon seeds, the
//! key-value state with its app hash, and the block log.

mod beacon;
mod gas;
pub mod log;
mod state;

pub use beacon::{derive_seed, BeaconSeed};
pub use gas::{gas_for_inference, GasCategory, GasMeter, InvalidSchedule, OutOfGas, GasReceipt, GasSchedule};
pub use log::{BlockRecord, TxRecord};
pub use state::{app_hash, ChainState};

use serde::{Deserialize, Serialize};

use crate::hash::Digest;

/// Public data of the block a transaction executes in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockContext {
    pub chain_id: String,
    pub height: u64,
    pub tx_hash: Digest,
}

impl BlockContext {
    pub fn seed(&self) -> BeaconSeed {
        derive_seed(&self.chain_id, self.height, &self.tx_hash.0)
    }
}
