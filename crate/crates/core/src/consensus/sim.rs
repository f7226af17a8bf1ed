use std::collections::BTreeMap;
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::policy::{select_result, Behavior, ConsensusOutcome, ConsensusPolicy, SelectError, ValidatorSpec, Vote};
use super::replication::{verify_replication, ReplicationReport};
use crate::chain::{BlockContext, BlockRecord, GasSchedule, InvalidSchedule, TxRecord};
use crate::engine::{DecodeMode, SplitMix64};
use crate::hash::{canonical_json, Digest};
use crate::nn::{ModelCache, NnFacade};
use crate::runtime::{tx_hash, CodeId, ExecFailure, ExecResult, ExecuteMsg, Runtime};

/// A transaction in a scenario file. `model_id` may be left out of
/// inference messages and defaults to the scenario's model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioMsg {
    Register {
        name: String,
        value: String,
    },
    Resolve {
        name: String,
    },
    InferFromName {
        name: String,
        max_tokens: u32,
        mode: DecodeMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model_id: Option<String>,
    },
}

impl ScenarioMsg {
    pub fn resolve_model(&self, default_model: &str) -> ExecuteMsg {
        match self.clone() {
            ScenarioMsg::Register { name, value } => ExecuteMsg::Register { name, value },
            ScenarioMsg::Resolve { name } => ExecuteMsg::Resolve { name },
            ScenarioMsg::InferFromName { name, max_tokens, mode, model_id } => ExecuteMsg::InferFromName {
                name,
                max_tokens,
                mode,
                model_id: model_id.unwrap_or_else(|| default_model.to_string()),
            },
        }
    }
}

impl From<ExecuteMsg> for ScenarioMsg {
    fn from(msg: ExecuteMsg) -> Self {
        match msg {
            ExecuteMsg::Register { name, value } => ScenarioMsg::Register { name, value },
            ExecuteMsg::Resolve { name } => ScenarioMsg::Resolve { name },
            ExecuteMsg::InferFromName { name, max_tokens, mode, model_id } => {
                ScenarioMsg::InferFromName { name, max_tokens, mode, model_id: Some(model_id) }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub chain_id: String,
    pub validators: Vec<ValidatorSpec>,
    pub policy: ConsensusPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gas_schedule: Option<GasSchedule>,
    pub model_id: String,
    pub txs: Vec<ScenarioMsg>,
    pub scenario_seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("scenario has no honest validator")]
    NoHonestValidator,
    #[error("chain_id must not be empty")]
    EmptyChainId,
    #[error("validator ids must not be empty")]
    EmptyValidatorId,
    #[error("duplicate validator id {0:?}")]
    DuplicateValidator(String),
    #[error(transparent)]
    Policy(#[from] SelectError),
    #[error(transparent)]
    Schedule(#[from] InvalidSchedule),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxReport {
    pub height: u64,
    pub tx_index: usize,
    pub tx_hash: Digest,
    pub outcome: ConsensusOutcome,
    /// Sorted by validator id.
    pub votes: Vec<Vote>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub chain_id: String,
    pub policy: ConsensusPolicy,
    pub scenario_seed: u64,
    pub txs: Vec<TxReport>,
    pub replication: ReplicationReport,
}

impl ConsensusReport {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = canonical_json(self);
        out.push(b'\n');
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    /// One chain log per validator that was online.
    pub logs: BTreeMap<String, Vec<BlockRecord>>,
    pub report: ConsensusReport,
}

impl SimOutput {
    /// The JSONL bytes of one validator's log.
    pub fn log_bytes(&self, validator: &str) -> Option<Vec<u8>> {
        self.logs.get(validator).map(|blocks| blocks.iter().flat_map(BlockRecord::to_line).collect())
    }
}

/// What a validator votes for a transaction: the inference digest when the
/// transaction ran inference, otherwise the hash of its outcome summary.
pub fn outcome_digest(result: &Result<ExecResult, ExecFailure>) -> Digest {
    match result {
        Ok(ExecResult { inference: Some(inf), .. }) => inf.digest,
        Ok(r) => Digest::of(&canonical_json(&json!({
            "ok": true,
            "events": r.events,
            "gas": r.gas.total,
        }))),
        Err(f) => Digest::of(&canonical_json(&json!({
            "ok": false,
            "error": f.error.to_string(),
            "gas": f.gas.total,
        }))),
    }
}

struct NodeRun {
    votes: Vec<(Digest, Digest)>,
    blocks: Vec<BlockRecord>,
}

fn run_node(
    chain_id: &str,
    schedule: GasSchedule,
    behavior: Behavior,
    msgs: &[ExecuteMsg],
    cache: Arc<dyn ModelCache>,
) -> NodeRun {
    let facade = NnFacade::new(cache).with_output_mask(behavior.output_mask());
    let mut rt = Runtime::new(chain_id, schedule, facade);
    let addr = rt.instantiate(CodeId::NAMESERVICE).expect("built-in code is always registered");
    let mut votes = Vec::with_capacity(msgs.len());
    let mut blocks = Vec::with_capacity(msgs.len());
    for (i, msg) in msgs.iter().enumerate() {
        let height = i as u64 + 1;
        rt.set_height(height);
        let block = BlockContext { chain_id: chain_id.to_string(), height, tx_hash: tx_hash(&addr, height, msg) };
        let result = rt.execute(&addr, msg, &block);
        let vote = outcome_digest(&result);
        let app_hash = rt.app_hash();
        let (ok, gas_total) = match &result {
            Ok(r) => (true, r.gas.total),
            Err(f) => (false, f.gas.total),
        };
        votes.push((vote, app_hash));
        blocks.push(BlockRecord {
            height,
            txs: vec![TxRecord {
                tx_hash: block.tx_hash,
                msg: serde_json::to_value(msg).expect("messages serialize"),
                ok,
                gas_total,
                vote_digest: vote,
            }],
            app_hash,
            agreed_digests: Vec::new(),
        });
    }
    NodeRun { votes, blocks }
}

fn check(scenario: &Scenario) -> Result<GasSchedule, SimError> {
    if scenario.chain_id.is_empty() {
        return Err(SimError::EmptyChainId);
    }
    let mut ids = BTreeMap::new();
    for v in &scenario.validators {
        if v.id.is_empty() {
            return Err(SimError::EmptyValidatorId);
        }
        if ids.insert(v.id.as_str(), ()).is_some() {
            return Err(SimError::DuplicateValidator(v.id.clone()));
        }
    }
    if !scenario.validators.iter().any(|v| v.behavior == Behavior::Honest) {
        return Err(SimError::NoHonestValidator);
    }
    scenario.policy.validate()?;
    let schedule = scenario.gas_schedule.unwrap_or_default();
    schedule.validate()?;
    Ok(schedule)
}

/// Fisher-Yates driven by the scenario seed.
fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = SplitMix64::new(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    order
}

/// Runs every transaction on every online validator, one transaction per
/// block, then tallies the votes per transaction.
///
/// Validators run on separate threads, started in an order derived from
/// `scenario_seed`; nothing they compute depends on that order.
pub fn run_scenario(scenario: &Scenario, cache: Arc<dyn ModelCache>) -> Result<SimOutput, SimError> {
    let schedule = check(scenario)?;
    let msgs: Vec<ExecuteMsg> = scenario.txs.iter().map(|m| m.resolve_model(&scenario.model_id)).collect();
    let online: Vec<&ValidatorSpec> =
        scenario.validators.iter().filter(|v| v.behavior != Behavior::Offline).collect();

    let mut runs: BTreeMap<String, NodeRun> = thread::scope(|s| {
        let handles: Vec<_> = permutation(online.len(), scenario.scenario_seed)
            .into_iter()
            .map(|i| {
                let spec = online[i];
                let cache = Arc::clone(&cache);
                let msgs = &msgs;
                let chain_id = scenario.chain_id.as_str();
                (spec.id.clone(), s.spawn(move || run_node(chain_id, schedule, spec.behavior, msgs, cache)))
            })
            .collect();
        handles
            .into_iter()
            .map(|(id, h)| (id, h.join().expect("validator thread panicked")))
            .collect()
    });

    let stakes: BTreeMap<String, u64> = scenario.validators.iter().map(|v| (v.id.clone(), v.stake)).collect();
    let mut txs = Vec::with_capacity(msgs.len());
    for i in 0..msgs.len() {
        let votes: Vec<Vote> = runs
            .iter()
            .map(|(id, run)| Vote { validator: id.clone(), digest: run.votes[i].0, app_hash: run.votes[i].1 })
            .collect();
        let outcome = select_result(&votes, scenario.policy, &stakes)?;
        let tx_hash = runs.values().next().expect("at least one honest validator runs").blocks[i].txs[0].tx_hash;
        for run in runs.values_mut() {
            run.blocks[i].agreed_digests = vec![outcome.agreed_digest];
        }
        txs.push(TxReport { height: i as u64 + 1, tx_index: 0, tx_hash, outcome, votes });
    }

    let logs: BTreeMap<String, Vec<BlockRecord>> = runs.into_iter().map(|(id, run)| (id, run.blocks)).collect();
    let replication = verify_replication(&logs);
    Ok(SimOutput {
        logs,
        report: ConsensusReport {
            chain_id: scenario.chain_id.clone(),
            policy: scenario.policy,
            scenario_seed: scenario.scenario_seed,
            txs,
            replication,
        },
    })
}
