//! Flags environment change from transition-model prediction failures.
//!
//! Two consecutive-failure heuristics, applied while the model is frozen
//! after pre-change convergence:
//!
//! 1. a single rule's prediction mismatches the observed outcome on `n`
//!    consecutive applications of that rule;
//! 2. a single state accumulates more than `n` consecutive visits whose
//!    predictions fail (mismatch or no matching rule at all).
//!
//! Counters reset whenever the tracked rule or state predicts correctly.
//! Once fired the flag latches until explicitly reset by the controller.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::features::{Delta, StateVec};
use crate::rules::RuleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    pub n: u32,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams { n: 2 }
    }
}

/// What the model claimed would happen at one real transition.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedOutcome {
    pub delta: Delta,
    pub terminal: bool,
}

/// One real transition as seen by the detector.
#[derive(Debug, Clone)]
pub struct Observation {
    /// Rule whose preconditions matched, if any.
    pub rule_hit: Option<RuleId>,
    /// The matched rule's claim; absent when no rule matched.
    pub predicted: Option<PredictedOutcome>,
    /// What actually happened.
    pub actual: PredictedOutcome,
    /// Feature projection of the state the transition started from.
    pub state: StateVec,
}

/// Details of the observation that tripped the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FireEvent {
    pub case: FireCase,
    pub rule: Option<u64>,
    pub state_key: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FireCase {
    ConsecutiveRuleViolations,
    ConsecutiveStateFailures,
}

#[derive(Debug, Clone)]
pub struct Detector {
    params: DetectorParams,
    rule_violations: HashMap<RuleId, u32>,
    state_failures: HashMap<StateVec, u32>,
    fired: bool,
    fire_event: Option<FireEvent>,
}

impl Detector {
    pub fn new(params: DetectorParams) -> Self {
        assert!(params.n >= 1, "detector sensitivity must be at least 1");
        Detector {
            params,
            rule_violations: HashMap::new(),
            state_failures: HashMap::new(),
            fired: false,
            fire_event: None,
        }
    }

    pub fn fired(&self) -> bool {
        self.fired
    }

    pub fn fire_event(&self) -> Option<&FireEvent> {
        self.fire_event.as_ref()
    }

    /// Clears all counters and the latched flag.
    pub fn reset(&mut self) {
        self.rule_violations.clear();
        self.state_failures.clear();
        self.fired = false;
        self.fire_event = None;
    }

    /// Feeds one real transition. Returns the latched fired flag.
    pub fn observe(&mut self, obs: &Observation) -> bool {
        let success = obs.predicted.as_ref() == Some(&obs.actual);
        if success {
            if let Some(rule) = obs.rule_hit {
                self.rule_violations.insert(rule, 0);
            }
            self.state_failures.insert(obs.state.clone(), 0);
            return self.fired;
        }

        // A matched rule whose claim missed is a violation of that rule; a
        // prediction that was absent only counts against the state.
        if let (Some(rule), Some(_)) = (obs.rule_hit, obs.predicted.as_ref()) {
            let count = self.rule_violations.entry(rule).or_insert(0);
            *count += 1;
            if *count >= self.params.n && !self.fired {
                self.fired = true;
                self.fire_event = Some(FireEvent {
                    case: FireCase::ConsecutiveRuleViolations,
                    rule: Some(rule.0),
                    state_key: obs.state.key(),
                });
            }
        }

        let count = self.state_failures.entry(obs.state.clone()).or_insert(0);
        *count += 1;
        if *count > self.params.n && !self.fired {
            self.fired = true;
            self.fire_event = Some(FireEvent {
                case: FireCase::ConsecutiveStateFailures,
                rule: obs.rule_hit.map(|r| r.0),
                state_key: obs.state.key(),
            });
        }
        self.fired
    }
}
