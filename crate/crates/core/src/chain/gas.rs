use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Flat gas schedule. Inference cost depends on model size and tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasSchedule {
    pub g_base: u64,
    pub g_per_kib_model: u64,
    pub g_per_token: u64,
    pub g_per_storage_op: u64,
    pub tx_gas_limit: u64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        GasSchedule {
            g_base: 1000,
            g_per_kib_model: 10,
            g_per_token: 100,
            g_per_storage_op: 50,
            tx_gas_limit: 1_000_000,
        }
    }
}

/// A charge exceeded the remaining gas.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("out of gas: needed {needed}, remaining {remaining}")]
pub struct OutOfGas {
    pub needed: u64,
    pub remaining: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid gas schedule: {0}")]
pub struct InvalidSchedule(pub &'static str);

impl GasSchedule {
    pub fn validate(&self) -> Result<(), InvalidSchedule> {
        if self.g_base == 0 || self.g_per_kib_model == 0 || self.g_per_token == 0 || self.g_per_storage_op == 0 {
            return Err(InvalidSchedule("all gas constants must be at least 1"));
        }
        if self.tx_gas_limit <= self.g_base {
            return Err(InvalidSchedule("tx_gas_limit must exceed g_base"));
        }
        Ok(())
    }

    /// `(base, model, token)` components of an inference charge, or `None`
    /// on u64 overflow.
    pub fn inference_components(&self, model_size_bytes: u64, tokens: u64) -> Option<(u64, u64, u64)> {
        let kib = model_size_bytes.div_ceil(1024);
        Some((
            self.g_base,
            self.g_per_kib_model.checked_mul(kib)?,
            self.g_per_token.checked_mul(tokens)?,
        ))
    }
}

/// `g_base + g_per_kib_model * ceil(size / 1024) + g_per_token * tokens`,
/// saturating at `u64::MAX`.
pub fn gas_for_inference(schedule: &GasSchedule, model_size_bytes: u64, tokens_generated: u64) -> u64 {
    schedule
        .inference_components(model_size_bytes, tokens_generated)
        .and_then(|(b, m, t)| b.checked_add(m)?.checked_add(t))
        .unwrap_or(u64::MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GasReceipt {
    pub base: u64,
    pub model_component: u64,
    pub token_component: u64,
    pub storage_component: u64,
    pub total: u64,
}

/// Charge categories of a [`GasReceipt`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GasCategory {
    Base,
    Model,
    Token,
    Storage,
}

/// Per-transaction meter. A failed charge leaves the meter untouched.
#[derive(Debug, Clone)]
pub struct GasMeter {
    limit: u64,
    receipt: GasReceipt,
}

impl GasMeter {
    pub fn new(limit: u64) -> Self {
        GasMeter { limit, receipt: GasReceipt::default() }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn remaining(&self) -> u64 {
        self.limit - self.receipt.total
    }

    pub fn receipt(&self) -> GasReceipt {
        self.receipt
    }

    pub fn charge(&mut self, category: GasCategory, amount: u64) -> Result<(), OutOfGas> {
        self.charge_many(&[(category, amount)])
    }

    /// Applies all charges or none.
    pub fn charge_many(&mut self, charges: &[(GasCategory, u64)]) -> Result<(), OutOfGas> {
        let needed = charges
            .iter()
            .try_fold(0u64, |acc, (_, a)| acc.checked_add(*a))
            .unwrap_or(u64::MAX);
        let remaining = self.remaining();
        if needed > remaining {
            return Err(OutOfGas { needed, remaining });
        }
        for &(category, amount) in charges {
            let slot = match category {
                GasCategory::Base => &mut self.receipt.base,
                GasCategory::Model => &mut self.receipt.model_component,
                GasCategory::Token => &mut self.receipt.token_component,
                GasCategory::Storage => &mut self.receipt.storage_component,
            };
            *slot += amount;
        }
        self.receipt.total += needed;
        Ok(())
    }

    pub fn charge_inference(
        &mut self,
        schedule: &GasSchedule,
        model_size_bytes: u64,
        tokens: u64,
    ) -> Result<(), OutOfGas> {
        let remaining = self.remaining();
        let (b, m, t) = schedule
            .inference_components(model_size_bytes, tokens)
            .ok_or(OutOfGas { needed: u64::MAX, remaining })?;
        self.charge_many(&[(GasCategory::Base, b), (GasCategory::Model, m), (GasCategory::Token, t)])
    }
}
