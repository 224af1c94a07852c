//! Feature-vector view of environment states.
//!
//! The rule model, the novelty detector, and the tabular agents all consume
//! states through the same flat feature projection: a fixed schema of ordered
//! (integer) and categorical features. The projection deliberately excludes
//! bookkeeping fields such as the step counter, so that table keys and rule
//! preconditions describe the world configuration rather than episode time.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("feature vectors have mismatched schemas ({left} vs {right} features)")]
    Mismatch { left: usize, right: usize },
    #[error("feature {index} mixes ordered and categorical values")]
    KindMismatch { index: usize },
}

/// Whether a feature carries integer (ordered) or categorical values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Ordered,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
}

/// Ordered list of named features shared by every state in one environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDef>) -> Self {
        Self { features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn kind(&self, index: usize) -> FeatureKind {
        self.features[index].kind
    }

    pub fn name(&self, index: usize) -> &str {
        &self.features[index].name
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureValue {
    Int(i64),
    Cat(u32),
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Int(v) => write!(f, "{v}"),
            FeatureValue::Cat(v) => write!(f, "#{v}"),
        }
    }
}

/// Flat feature vector for one state, aligned with a [`FeatureSchema`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateVec(pub Vec<FeatureValue>);

impl StateVec {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Compact canonical key, stable across runs. Used for log lines and dumps.
    pub fn key(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        parts.join(",")
    }

    fn check_same_len(&self, other: &StateVec) -> Result<(), SchemaError> {
        if self.len() != other.len() {
            return Err(SchemaError::Mismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(())
    }
}

/// Per-feature change between two states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureDelta {
    /// Ordered feature: signed shift (never zero).
    Shift(i64),
    /// Categorical feature: old value replaced by new value.
    Swap { from: u32, to: u32 },
}

/// Sparse state difference: only features that changed appear.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Delta(pub BTreeMap<usize, FeatureDelta>);

impl Delta {
    /// Componentwise difference `next - prev`.
    pub fn between(prev: &StateVec, next: &StateVec) -> Result<Delta, SchemaError> {
        prev.check_same_len(next)?;
        let mut changes = BTreeMap::new();
        for (i, (p, n)) in prev.0.iter().zip(next.0.iter()).enumerate() {
            match (p, n) {
                (FeatureValue::Int(a), FeatureValue::Int(b)) => {
                    if a != b {
                        changes.insert(i, FeatureDelta::Shift(b - a));
                    }
                }
                (FeatureValue::Cat(a), FeatureValue::Cat(b)) => {
                    if a != b {
                        changes.insert(i, FeatureDelta::Swap { from: *a, to: *b });
                    }
                }
                _ => return Err(SchemaError::KindMismatch { index: i }),
            }
        }
        Ok(Delta(changes))
    }

    /// Applies the delta to a state. Returns `None` when a categorical change
    /// does not match the state's current value.
    pub fn apply(&self, state: &StateVec) -> Option<StateVec> {
        let mut out = state.clone();
        for (&i, change) in &self.0 {
            if i >= out.0.len() {
                return None;
            }
            match (out.0[i], change) {
                (FeatureValue::Int(v), FeatureDelta::Shift(d)) => {
                    out.0[i] = FeatureValue::Int(v + d);
                }
                (FeatureValue::Cat(v), FeatureDelta::Swap { from, to }) => {
                    if v != *from {
                        return None;
                    }
                    out.0[i] = FeatureValue::Cat(*to);
                }
                _ => return None,
            }
        }
        Some(out)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "none");
        }
        let mut first = true;
        for (i, change) in &self.0 {
            if !first {
                write!(f, ", ")?;
            }
            first = false;
            match change {
                FeatureDelta::Shift(d) => write!(f, "[{i}] {d:+}")?,
                FeatureDelta::Swap { from, to } => write!(f, "[{i}] #{from}->#{to}")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(vals: &[FeatureValue]) -> StateVec {
        StateVec(vals.to_vec())
    }

    #[test]
    fn delta_roundtrip() {
        let a = sv(&[FeatureValue::Int(3), FeatureValue::Cat(0), FeatureValue::Int(7)]);
        let b = sv(&[FeatureValue::Int(5), FeatureValue::Cat(2), FeatureValue::Int(7)]);
        let d = Delta::between(&a, &b).unwrap();
        assert_eq!(d.0.len(), 2);
        assert_eq!(d.apply(&a), Some(b));
    }

    #[test]
    fn delta_empty_for_equal_states() {
        let a = sv(&[FeatureValue::Int(1), FeatureValue::Cat(4)]);
        let d = Delta::between(&a, &a).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.apply(&a), Some(a));
    }

    #[test]
    fn categorical_apply_requires_matching_old_value() {
        let a = sv(&[FeatureValue::Cat(1)]);
        let b = sv(&[FeatureValue::Cat(2)]);
        let d = Delta::between(&a, &b).unwrap();
        let other = sv(&[FeatureValue::Cat(3)]);
        assert_eq!(d.apply(&other), None);
    }

    #[test]
    fn mismatched_lengths_error() {
        let a = sv(&[FeatureValue::Int(1)]);
        let b = sv(&[FeatureValue::Int(1), FeatureValue::Int(2)]);
        assert!(Delta::between(&a, &b).is_err());
    }
}
