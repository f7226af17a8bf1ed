//! The host environment a contract sees during one transaction.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::chain::{BlockContext, ChainState, GasCategory, OutOfGas, GasMeter, GasReceipt, GasSchedule};
use crate::engine::{DecodeMode, DecodeParams};
use crate::hash::Digest;
use crate::nn::{ContextId, NnError, NnFacade, Tensor};

use super::{InferenceRecord, StateWrite};

/// Errors a host call can return to the contract.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HostError {
    /// Recoverable: the contract decides what to do with it.
    #[error(transparent)]
    Nn(#[from] NnError),
    /// Fatal: the transaction aborts.
    #[error(transparent)]
    Gas(#[from] OutOfGas),
}

/// Storage, gas, inference and block data for one transaction. Writes go to
/// an overlay that is only committed when the contract succeeds.
///
/// The environment owns the facade for the duration of the transaction and
/// hands it back from [`HostEnv::finish`].
pub struct HostEnv {
    state: Arc<ChainState>,
    prefix: Vec<u8>,
    overlay: BTreeMap<Vec<u8>, Vec<u8>>,
    meter: GasMeter,
    schedule: GasSchedule,
    facade: NnFacade,
    block: BlockContext,
    inference: Option<InferenceRecord>,
}

/// What a finished transaction leaves behind.
pub struct HostOutcome {
    pub writes: BTreeMap<Vec<u8>, Vec<u8>>,
    pub gas: GasReceipt,
    pub inference: Option<InferenceRecord>,
    pub facade: NnFacade,
}

impl HostEnv {
    pub fn new(
        state: Arc<ChainState>,
        prefix: Vec<u8>,
        schedule: GasSchedule,
        facade: NnFacade,
        block: BlockContext,
    ) -> Self {
        HostEnv {
            state,
            prefix,
            overlay: BTreeMap::new(),
            meter: GasMeter::new(schedule.tx_gas_limit),
            schedule,
            facade,
            block,
            inference: None,
        }
    }

    pub fn block(&self) -> &BlockContext {
        &self.block
    }

    pub fn receipt(&self) -> GasReceipt {
        self.meter.receipt()
    }

    pub fn inference(&self) -> Option<&InferenceRecord> {
        self.inference.as_ref()
    }

    /// Contract-relative key lookup; reads are free.
    pub fn storage_get(&self, key: &[u8]) -> Option<Vec<u8>> {
        if let Some(v) = self.overlay.get(key) {
            return Some(v.clone());
        }
        let mut full = self.prefix.clone();
        full.extend_from_slice(key);
        self.state.get(&full).map(<[u8]>::to_vec)
    }

    /// Charges one storage op, then buffers the write.
    pub fn storage_set(&mut self, key: &[u8], value: &[u8]) -> Result<(), OutOfGas> {
        self.meter.charge(GasCategory::Storage, self.schedule.g_per_storage_op)?;
        self.overlay.insert(key.to_vec(), value.to_vec());
        Ok(())
    }

    pub fn gas_consume(&mut self, amount: u64) -> Result<(), OutOfGas> {
        self.meter.charge(GasCategory::Base, amount)
    }

    pub fn nn_build(&mut self, model_id: &str) -> Result<u64, NnError> {
        self.facade.build_from_cache(model_id).map(|g| g.id)
    }

    /// Contracts cannot choose a temperature; sampled decoding runs at 1.0.
    pub fn nn_init(&mut self, graph: u64, seed: u64, mode: DecodeMode, max_tokens: u32) -> Result<ContextId, NnError> {
        let params = DecodeParams { mode, max_tokens, temperature: 1.0 };
        self.facade.init_execution_context(graph, seed, params)
    }

    pub fn nn_set_input(&mut self, ctx: ContextId, index: u32, prompt: &[u8]) -> Result<(), NnError> {
        self.facade.set_input(ctx, index, Tensor::text(prompt))
    }

    /// Runs the decode and charges inference gas for the tokens it produced.
    pub fn nn_compute(&mut self, ctx: ContextId) -> Result<(), HostError> {
        let summary = self.facade.compute(ctx)?;
        self.meter.charge_inference(
            &self.schedule,
            summary.model_size_bytes,
            summary.tokens_generated as u64,
        )?;
        Ok(())
    }

    /// Reads the output and records it as this transaction's inference.
    pub fn nn_get_output(&mut self, ctx: ContextId, index: u32, capacity: usize) -> Result<Vec<u8>, NnError> {
        let output = self.facade.get_output(ctx, index, capacity)?;
        let tokens_generated = self.facade.tokens_generated(ctx)?;
        self.inference = Some(InferenceRecord {
            digest: Digest::of(&output),
            output: output.clone(),
            tokens_generated,
        });
        Ok(output)
    }

    /// Buffered writes, sorted by key.
    pub fn writes(&self) -> Vec<StateWrite> {
        self.overlay
            .iter()
            .map(|(k, v)| StateWrite { key: k.clone(), value: v.clone() })
            .collect()
    }

    pub fn finish(self) -> HostOutcome {
        HostOutcome {
            writes: self.overlay,
            gas: self.meter.receipt(),
            inference: self.inference,
            facade: self.facade,
        }
    }
}
