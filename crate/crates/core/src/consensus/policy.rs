use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::Digest;

/// How a simulated validator behaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Honest,
    /// XORs every output byte with the mask before voting.
    Divergent { xor_mask: u8 },
    Offline,
}

impl Behavior {
    pub fn output_mask(self) -> Option<u8> {
        match self {
            Behavior::Divergent { xor_mask } => Some(xor_mask),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawValidator", into = "RawValidator")]
pub struct ValidatorSpec {
    pub id: String,
    pub stake: u64,
    pub behavior: Behavior,
}

impl ValidatorSpec {
    pub fn new(id: impl Into<String>, stake: u64, behavior: Behavior) -> Self {
        ValidatorSpec { id: id.into(), stake, behavior }
    }

    pub fn honest(id: impl Into<String>, stake: u64) -> Self {
        Self::new(id, stake, Behavior::Honest)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum BehaviorTag {
    Honest,
    Divergent,
    Offline,
}

/// `{"id", "stake", "behavior": "honest" | "divergent" | "offline", "mask"?}`
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValidator {
    id: String,
    stake: u64,
    behavior: BehaviorTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<u8>,
}

impl TryFrom<RawValidator> for ValidatorSpec {
    type Error = String;

    fn try_from(raw: RawValidator) -> Result<Self, String> {
        let behavior = match (raw.behavior, raw.mask) {
            (BehaviorTag::Honest, None) => Behavior::Honest,
            (BehaviorTag::Offline, None) => Behavior::Offline,
            (BehaviorTag::Divergent, Some(0)) => return Err("divergent mask must be non-zero".into()),
            (BehaviorTag::Divergent, Some(xor_mask)) => Behavior::Divergent { xor_mask },
            (BehaviorTag::Divergent, None) => return Err("divergent validator needs a mask".into()),
            (_, Some(_)) => return Err("mask is only allowed for divergent validators".into()),
        };
        if raw.stake == 0 {
            return Err("stake must be at least 1".into());
        }
        Ok(ValidatorSpec { id: raw.id, stake: raw.stake, behavior })
    }
}

impl From<ValidatorSpec> for RawValidator {
    fn from(v: ValidatorSpec) -> Self {
        let (behavior, mask) = match v.behavior {
            Behavior::Honest => (BehaviorTag::Honest, None),
            Behavior::Divergent { xor_mask } => (BehaviorTag::Divergent, Some(xor_mask)),
            Behavior::Offline => (BehaviorTag::Offline, None),
        };
        RawValidator { id: v.id, stake: v.stake, behavior, mask }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub validator: String,
    pub digest: Digest,
    pub app_hash: Digest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusPolicy {
    /// Decided when one digest holds at least `num/den` of the total stake.
    ExactQuorum { threshold_num: u64, threshold_den: u64 },
    Majority,
    StakeWeighted,
}

impl ConsensusPolicy {
    pub const TWO_THIRDS: ConsensusPolicy = ConsensusPolicy::ExactQuorum { threshold_num: 2, threshold_den: 3 };

    /// Quorum thresholds must lie in (1/2, 1].
    pub fn validate(&self) -> Result<(), SelectError> {
        if let ConsensusPolicy::ExactQuorum { threshold_num: n, threshold_den: d } = *self {
            if d == 0 || n > d || 2 * (n as u128) <= d as u128 {
                return Err(SelectError::InvalidThreshold { num: n, den: d });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub count: u64,
    pub stake: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusOutcome {
    pub agreed_digest: Option<Digest>,
    pub vote_tally: BTreeMap<Digest, Tally>,
    pub decided: bool,
    pub divergence_detected: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SelectError {
    #[error("empty vote set")]
    EmptyVoteSet,
    #[error("validator {0:?} has no stake entry")]
    UnknownValidator(String),
    #[error("validator {0:?} voted twice")]
    DuplicateVote(String),
    #[error("quorum threshold {num}/{den} outside (1/2, 1]")]
    InvalidThreshold { num: u64, den: u64 },
}

/// Picks the agreed digest. `stakes` lists every validator in the set; for
/// quorum policies its total is the voting power, whether or not each
/// validator voted.
pub fn select_result(
    votes: &[Vote],
    policy: ConsensusPolicy,
    stakes: &BTreeMap<String, u64>,
) -> Result<ConsensusOutcome, SelectError> {
    policy.validate()?;
    if votes.is_empty() {
        return Err(SelectError::EmptyVoteSet);
    }
    let mut seen = BTreeMap::new();
    let mut tally: BTreeMap<Digest, Tally> = BTreeMap::new();
    for vote in votes {
        let stake = *stakes
            .get(&vote.validator)
            .ok_or_else(|| SelectError::UnknownValidator(vote.validator.clone()))?;
        if seen.insert(vote.validator.as_str(), ()).is_some() {
            return Err(SelectError::DuplicateVote(vote.validator.clone()));
        }
        let t = tally.entry(vote.digest).or_default();
        t.count += 1;
        t.stake = t.stake.saturating_add(stake);
    }

    // Iteration is in ascending digest order, so a strict `>` keeps the
    // smallest digest on ties.
    let best_by = |key: fn(&Tally) -> u64| {
        let mut best: Option<(Digest, u64)> = None;
        for (digest, t) in &tally {
            if best.is_none_or(|(_, k)| key(t) > k) {
                best = Some((*digest, key(t)));
            }
        }
        best.map(|(d, _)| d)
    };

    let agreed = match policy {
        ConsensusPolicy::Majority => best_by(|t| t.count),
        ConsensusPolicy::StakeWeighted => best_by(|t| t.stake),
        ConsensusPolicy::ExactQuorum { threshold_num, threshold_den } => {
            let power: u128 = stakes.values().map(|&s| s as u128).sum();
            let needed = (threshold_num as u128 * power).div_ceil(threshold_den as u128);
            tally
                .iter()
                .find(|(_, t)| t.stake as u128 >= needed)
                .map(|(d, _)| *d)
        }
    };
    Ok(ConsensusOutcome {
        agreed_digest: agreed,
        decided: agreed.is_some(),
        divergence_detected: tally.len() >= 2,
        vote_tally: tally,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(b: u8) -> Digest {
        Digest([b; 32])
    }

    fn vote(id: &str, digest: Digest) -> Vote {
        Vote { validator: id.into(), digest, app_hash: Digest::default() }
    }

    fn stakes(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn majority_mode() {
        let s = stakes(&[("a", 1), ("b", 1), ("c", 1), ("d", 1)]);
        let votes = [vote("a", d(1)), vote("b", d(1)), vote("c", d(2)), vote("d", d(1))];
        let out = select_result(&votes, ConsensusPolicy::Majority, &s).unwrap();
        assert_eq!(out.agreed_digest, Some(d(1)));
        assert!(out.decided);
        assert!(out.divergence_detected);
        assert_eq!(out.vote_tally[&d(1)], Tally { count: 3, stake: 3 });
    }

    #[test]
    fn majority_tie_takes_smallest() {
        let s = stakes(&[("a", 1), ("b", 1)]);
        let votes = [vote("a", d(9)), vote("b", d(3))];
        let out = select_result(&votes, ConsensusPolicy::Majority, &s).unwrap();
        assert_eq!(out.agreed_digest, Some(d(3)));
        assert!(out.decided);
    }

    #[test]
    fn stake_weighted() {
        let s = stakes(&[("a", 10), ("b", 1), ("c", 1)]);
        let votes = [vote("a", d(1)), vote("b", d(2)), vote("c", d(2))];
        let out = select_result(&votes, ConsensusPolicy::StakeWeighted, &s).unwrap();
        assert_eq!(out.agreed_digest, Some(d(1)));
        let out = select_result(&votes, ConsensusPolicy::Majority, &s).unwrap();
        assert_eq!(out.agreed_digest, Some(d(2)));
    }

    #[test]
    fn quorum_counts_offline_stake() {
        let s = stakes(&[("a", 1), ("b", 1), ("c", 1), ("d", 1), ("e", 1), ("f", 1), ("g", 1)]);
        let mut votes: Vec<Vote> = ["a", "b", "c", "d", "e"].iter().map(|v| vote(v, d(1))).collect();
        votes.push(vote("f", d(2)));
        votes.push(vote("g", d(3)));
        let out = select_result(&votes, ConsensusPolicy::TWO_THIRDS, &s).unwrap();
        assert_eq!(out.agreed_digest, Some(d(1)));
        assert!(out.divergence_detected);

        // 4 of 7 agree, 3 offline: 4 < ceil(14/3) = 5.
        let out = select_result(&votes[..4], ConsensusPolicy::TWO_THIRDS, &s).unwrap();
        assert!(!out.decided);
        assert_eq!(out.agreed_digest, None);
        assert!(!out.divergence_detected);
    }

    #[test]
    fn quorum_boundary_is_inclusive() {
        let s = stakes(&[("a", 2), ("b", 1)]);
        let votes = [vote("a", d(1)), vote("b", d(2))];
        assert!(select_result(&votes, ConsensusPolicy::TWO_THIRDS, &s).unwrap().decided);
        let s = stakes(&[("a", 2), ("b", 2)]);
        assert!(!select_result(&votes, ConsensusPolicy::TWO_THIRDS, &s).unwrap().decided);
    }

    #[test]
    fn errors() {
        let s = stakes(&[("a", 1)]);
        assert_eq!(select_result(&[], ConsensusPolicy::Majority, &s), Err(SelectError::EmptyVoteSet));
        assert_eq!(
            select_result(&[vote("z", d(1))], ConsensusPolicy::Majority, &s),
            Err(SelectError::UnknownValidator("z".into()))
        );
        assert_eq!(
            select_result(&[vote("a", d(1)), vote("a", d(1))], ConsensusPolicy::Majority, &s),
            Err(SelectError::DuplicateVote("a".into()))
        );
        for (n, d_) in [(1, 2), (0, 3), (4, 3), (1, 0)] {
            let p = ConsensusPolicy::ExactQuorum { threshold_num: n, threshold_den: d_ };
            assert!(matches!(p.validate(), Err(SelectError::InvalidThreshold { .. })));
        }
        assert!(ConsensusPolicy::ExactQuorum { threshold_num: 1, threshold_den: 1 }.validate().is_ok());
    }

    #[test]
    fn validator_json() {
        let v: ValidatorSpec = serde_json::from_str(r#"{"id":"v1","stake":3,"behavior":"divergent","mask":7}"#).unwrap();
        assert_eq!(v.behavior, Behavior::Divergent { xor_mask: 7 });
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"id":"v1","stake":3,"behavior":"divergent","mask":7}"#
        );
        for bad in [
            r#"{"id":"v","stake":1,"behavior":"divergent"}"#,
            r#"{"id":"v","stake":1,"behavior":"divergent","mask":0}"#,
            r#"{"id":"v","stake":1,"behavior":"honest","mask":1}"#,
            r#"{"id":"v","stake":0,"behavior":"honest"}"#,
        ] {
            assert!(serde_json::from_str::<ValidatorSpec>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn policy_json() {
        let p: ConsensusPolicy = serde_json::from_str(r#""majority""#).unwrap();
        assert_eq!(p, ConsensusPolicy::Majority);
        let p: ConsensusPolicy =
            serde_json::from_str(r#"{"exact_quorum":{"threshold_num":2,"threshold_den":3}}"#).unwrap();
        assert_eq!(p, ConsensusPolicy::TWO_THIRDS);
    }
}
