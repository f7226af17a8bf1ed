//! Multi-validator simulation and result selection.

mod policy;
mod replication;
mod sim;

pub use policy::{select_result, Behavior, ConsensusOutcome, ConsensusPolicy, SelectError, Tally, ValidatorSpec, Vote};
pub use replication::{verify_replication, Divergence, ReplicationReport};
pub use sim::{
    outcome_digest, run_scenario, ConsensusReport, Scenario, ScenarioMsg, SimError, SimOutput, TxReport,
};
