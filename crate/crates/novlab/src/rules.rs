//! Interval-based symbolic transition model.
//!
//! The model is a set of rules `<state precondition, action precondition,
//! effect>`. State preconditions are axis-aligned bounding intervals (AABIs):
//! per-feature integer min/max bounds for ordered features and value sets for
//! categorical features. Rules are learned online, one observed transition at
//! a time, through four update cases:
//!
//! - *no change*: a rule with matching action and effect already covers the
//!   prior state;
//! - *creation*: no rule matches the action/effect, so a new point rule is
//!   added that exactly describes the prior state;
//! - *relaxation*: a rule matches action and effect but not the prior state,
//!   so its AABI expands (componentwise min/max, set union) to cover it;
//! - *collision resolution*: a rule covers the prior state but predicts a
//!   different effect, so its AABI is min-cut split along its widest ordered
//!   axis, carving out the colliding coordinate, and the observation is then
//!   re-accommodated.
//!
//! Membership and interval overlap both reduce to the separating-hyperplane
//! test: a point (or box) lies apart from a box exactly when some feature
//! axis separates them.
//!
//! Every update guarantees that replaying the observed transition through
//! [`RuleModel::predict`] reproduces the observed effect (for rules that have
//! accumulated a stochastic effect distribution, the observed effect is in
//! the sampled support).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Delta, FeatureKind, FeatureSchema, FeatureValue, StateVec};
use crate::gridworld::{Action, GridWorld, SymbolicState};

#[derive(Debug, Error, PartialEq)]
pub enum RuleError {
    #[error("state has {got} features but the schema expects {want}")]
    SchemaMismatch { got: usize, want: usize },
    #[error("feature {index} value kind does not match the schema")]
    KindMismatch { index: usize },
    #[error("colliding state lies outside the rule's preconditions")]
    StateOutsideRule,
}

/// Per-feature bound of an AABI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    /// Ordered feature: inclusive integer interval.
    Interval { min: i64, max: i64 },
    /// Categorical feature: exact set of matching values.
    ValueSet(BTreeSet<u32>),
}

/// Axis-aligned bounding interval over the feature schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aabi {
    pub bounds: Vec<Bound>,
}

impl Aabi {
    /// Point AABI that exactly describes one state.
    pub fn point(state: &StateVec) -> Aabi {
        let bounds = state
            .0
            .iter()
            .map(|v| match v {
                FeatureValue::Int(x) => Bound::Interval { min: *x, max: *x },
                FeatureValue::Cat(c) => Bound::ValueSet(BTreeSet::from([*c])),
            })
            .collect();
        Aabi { bounds }
    }

    fn check_state(&self, state: &StateVec) -> Result<(), RuleError> {
        if state.len() != self.bounds.len() {
            return Err(RuleError::SchemaMismatch {
                got: state.len(),
                want: self.bounds.len(),
            });
        }
        Ok(())
    }

    /// Separating-hyperplane membership test: the state is outside exactly
    /// when some feature exceeds the interval or misses the value set.
    pub fn contains(&self, state: &StateVec) -> Result<bool, RuleError> {
        self.check_state(state)?;
        for (i, (bound, value)) in self.bounds.iter().zip(state.0.iter()).enumerate() {
            match (bound, value) {
                (Bound::Interval { min, max }, FeatureValue::Int(v)) => {
                    if v < min || v > max {
                        return Ok(false);
                    }
                }
                (Bound::ValueSet(set), FeatureValue::Cat(c)) => {
                    if !set.contains(c) {
                        return Ok(false);
                    }
                }
                _ => return Err(RuleError::KindMismatch { index: i }),
            }
        }
        Ok(true)
    }

    /// Interval-interval separating-hyperplane test.
    pub fn intersects(&self, other: &Aabi) -> Result<bool, RuleError> {
        if self.bounds.len() != other.bounds.len() {
            return Err(RuleError::SchemaMismatch {
                got: other.bounds.len(),
                want: self.bounds.len(),
            });
        }
        for (i, (a, b)) in self.bounds.iter().zip(other.bounds.iter()).enumerate() {
            match (a, b) {
                (
                    Bound::Interval { min: amin, max: amax },
                    Bound::Interval { min: bmin, max: bmax },
                ) => {
                    if amin > bmax || bmin > amax {
                        return Ok(false);
                    }
                }
                (Bound::ValueSet(sa), Bound::ValueSet(sb)) => {
                    if sa.is_disjoint(sb) {
                        return Ok(false);
                    }
                }
                _ => return Err(RuleError::KindMismatch { index: i }),
            }
        }
        Ok(true)
    }

    /// Componentwise min/max expansion (set union on categorical features)
    /// to cover `state`.
    pub fn hull_with(&self, state: &StateVec) -> Result<Aabi, RuleError> {
        self.check_state(state)?;
        let bounds = self
            .bounds
            .iter()
            .zip(state.0.iter())
            .map(|(bound, value)| match (bound, value) {
                (Bound::Interval { min, max }, FeatureValue::Int(v)) => Bound::Interval {
                    min: (*min).min(*v),
                    max: (*max).max(*v),
                },
                (Bound::ValueSet(set), FeatureValue::Cat(c)) => {
                    let mut s = set.clone();
                    s.insert(*c);
                    Bound::ValueSet(s)
                }
                _ => Bound::Interval { min: 0, max: -1 },
            })
            .collect();
        let out = Aabi { bounds };
        debug_assert!(out.contains(state).unwrap_or(false));
        Ok(out)
    }

    fn hull_with_aabi(&self, other: &Aabi) -> Aabi {
        let bounds = self
            .bounds
            .iter()
            .zip(other.bounds.iter())
            .map(|(a, b)| match (a, b) {
                (
                    Bound::Interval { min: amin, max: amax },
                    Bound::Interval { min: bmin, max: bmax },
                ) => Bound::Interval {
                    min: (*amin).min(*bmin),
                    max: (*amax).max(*bmax),
                },
                (Bound::ValueSet(sa), Bound::ValueSet(sb)) => {
                    Bound::ValueSet(sa.union(sb).copied().collect())
                }
                _ => unreachable!("schemas match"),
            })
            .collect();
        Aabi { bounds }
    }

    /// Number of states covered, saturating.
    pub fn volume(&self) -> u128 {
        let mut v: u128 = 1;
        for bound in &self.bounds {
            let width = match bound {
                Bound::Interval { min, max } => (max - min + 1).max(0) as u128,
                Bound::ValueSet(set) => set.len() as u128,
            };
            v = v.saturating_mul(width);
        }
        v
    }

    /// True when the AABI covers exactly the single given state.
    pub fn is_point_at(&self, state: &StateVec) -> bool {
        self.bounds
            .iter()
            .zip(state.0.iter())
            .all(|(bound, value)| match (bound, value) {
                (Bound::Interval { min, max }, FeatureValue::Int(v)) => min == v && max == v,
                (Bound::ValueSet(set), FeatureValue::Cat(c)) => {
                    set.len() == 1 && set.contains(c)
                }
                _ => false,
            })
    }

    /// Min-cut split about a contained state: the widest ordered axis is cut
    /// into `[min, s-1]` and `[s+1, max]`, so the colliding coordinate leaves
    /// both halves. Inverted ("empty") halves are discarded. When every
    /// ordered axis is a point, the state's value is removed from the widest
    /// categorical set instead; with nothing left to cut, nothing survives.
    pub fn split_about(&self, schema: &FeatureSchema, state: &StateVec) -> Vec<Aabi> {
        debug_assert_eq!(schema.len(), self.bounds.len());
        let mut widest: Option<(usize, i64)> = None;
        for (i, bound) in self.bounds.iter().enumerate() {
            if schema.kind(i) != FeatureKind::Ordered {
                continue;
            }
            if let Bound::Interval { min, max } = bound {
                let width = max - min;
                if width > 0 && widest.map_or(true, |(_, w)| width > w) {
                    widest = Some((i, width));
                }
            }
        }
        if let Some((axis, _)) = widest {
            let s = match state.0[axis] {
                FeatureValue::Int(v) => v,
                _ => unreachable!("ordered axis holds an Int"),
            };
            let (min, max) = match self.bounds[axis] {
                Bound::Interval { min, max } => (min, max),
                _ => unreachable!(),
            };
            let mut halves = Vec::new();
            if min <= s - 1 {
                let mut low = self.clone();
                low.bounds[axis] = Bound::Interval { min, max: s - 1 };
                halves.push(low);
            }
            if s + 1 <= max {
                let mut high = self.clone();
                high.bounds[axis] = Bound::Interval { min: s + 1, max };
                halves.push(high);
            }
            return halves;
        }
        // Categorical fallback: drop the colliding value from the widest set.
        let mut widest_set: Option<(usize, usize)> = None;
        for (i, bound) in self.bounds.iter().enumerate() {
            if let Bound::ValueSet(set) = bound {
                if set.len() > 1 && widest_set.map_or(true, |(_, n)| set.len() > n) {
                    widest_set = Some((i, set.len()));
                }
            }
        }
        if let Some((axis, _)) = widest_set {
            let c = match state.0[axis] {
                FeatureValue::Cat(v) => v,
                _ => unreachable!(),
            };
            let mut trimmed = self.clone();
            if let Bound::ValueSet(set) = &mut trimmed.bounds[axis] {
                set.remove(&c);
            }
            return vec![trimmed];
        }
        Vec::new()
    }
}

/// One observed effect: the state delta, whether the transition ended the
/// episode, and running reward statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCase {
    pub delta: Delta,
    pub terminal: bool,
    pub reward_sum: f64,
    pub count: u64,
}

impl EffectCase {
    fn new(delta: Delta, terminal: bool, reward: f64) -> Self {
        EffectCase {
            delta,
            terminal,
            reward_sum: reward,
            count: 1,
        }
    }

    pub fn mean_reward(&self) -> f64 {
        self.reward_sum / self.count as f64
    }

    fn matches(&self, delta: &Delta, terminal: bool) -> bool {
        self.terminal == terminal && &self.delta == delta
    }
}

/// `<state preconditions, action precondition, effect(s)>`. Preconditions are
/// a disjoint union of AABIs. A rule usually carries one effect; rules whose
/// point region has produced conflicting effects repeatedly accumulate an
/// empirical effect distribution instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub preconditions: Vec<Aabi>,
    pub action: Action,
    pub effects: Vec<EffectCase>,
    flips: u32,
}

impl Rule {
    pub fn new(preconditions: Vec<Aabi>, action: Action, effects: Vec<EffectCase>) -> Self {
        Rule {
            preconditions,
            action,
            effects,
            flips: 0,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.effects.len() == 1
    }

    pub fn contains(&self, state: &StateVec) -> Result<bool, RuleError> {
        for aabi in &self.preconditions {
            if aabi.contains(state)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Pure relaxation: expands the precondition AABI whose hull with the
    /// state grows the least; a covered state leaves the rule unchanged. The
    /// model-level update additionally collision-checks the result.
    pub fn relaxed(&self, state: &StateVec) -> Result<Rule, RuleError> {
        if self.contains(state)? {
            return Ok(self.clone());
        }
        let idx = self.cheapest_hull_index(state)?;
        let mut out = self.clone();
        out.preconditions[idx] = out.preconditions[idx].hull_with(state)?;
        Ok(out)
    }

    fn cheapest_hull_index(&self, state: &StateVec) -> Result<usize, RuleError> {
        let mut best = 0usize;
        let mut best_cost = u128::MAX;
        for (i, aabi) in self.preconditions.iter().enumerate() {
            let grown = aabi.hull_with(state)?.volume();
            let cost = grown.saturating_sub(aabi.volume());
            if cost < best_cost {
                best_cost = cost;
                best = i;
            }
        }
        Ok(best)
    }
}

/// Min-cut split of the precondition AABI containing `state`, returned as
/// one rule per surviving half. An empty result means the rule dissolves.
pub fn split_min_cut(
    rule: &Rule,
    schema: &FeatureSchema,
    state: &StateVec,
) -> Result<Vec<Rule>, RuleError> {
    let idx = rule
        .preconditions
        .iter()
        .position(|a| a.contains(state).unwrap_or(false));
    let Some(idx) = idx else {
        return Err(RuleError::StateOutsideRule);
    };
    let halves = rule.preconditions[idx].split_about(schema, state);
    Ok(halves
        .into_iter()
        .map(|aabi| Rule {
            preconditions: vec![aabi],
            action: rule.action,
            effects: rule.effects.clone(),
            flips: rule.flips,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuleId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    NoChange,
    Created,
    Relaxed,
    SplitAndCreated,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelStats {
    pub creations: u64,
    pub relaxations: u64,
    pub splits: u64,
    pub hits: u64,
    pub deletions: u64,
    /// Relaxations that fell back to adding a point interval because the
    /// expanded hull would have collided with another rule.
    pub conservative_relaxations: u64,
    /// Conflicting observations resolved at point-sized regions.
    pub point_conflicts: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub rule: RuleId,
    pub next: StateVec,
    pub reward: f64,
    pub terminal: bool,
}

/// Number of conflicting observations at a point region after which the rule
/// keeps an effect distribution instead of replacing the effect. The first
/// conflict is read as the environment having changed (old effect out, new
/// effect in); oscillation marks genuine stochasticity.
const FLIPS_FOR_DISTRIBUTION: u32 = 2;

/// The learned rule set for one environment schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleModel {
    schema: FeatureSchema,
    rules: BTreeMap<RuleId, Rule>,
    next_id: u64,
    pub stats: ModelStats,
}

impl RuleModel {
    pub fn new(schema: FeatureSchema) -> Self {
        RuleModel {
            schema,
            rules: BTreeMap::new(),
            next_id: 0,
            stats: ModelStats::default(),
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> impl Iterator<Item = (RuleId, &Rule)> {
        self.rules.iter().map(|(id, r)| (*id, r))
    }

    pub fn rule(&self, id: RuleId) -> Option<&Rule> {
        self.rules.get(&id)
    }

    fn check_schema(&self, state: &StateVec) -> Result<(), RuleError> {
        if state.len() != self.schema.len() {
            return Err(RuleError::SchemaMismatch {
                got: state.len(),
                want: self.schema.len(),
            });
        }
        Ok(())
    }

    /// First rule whose action and state preconditions match.
    pub fn matching_rule(&self, state: &StateVec, action: Action) -> Option<RuleId> {
        for (id, rule) in &self.rules {
            if rule.action == action && rule.contains(state).unwrap_or(false) {
                return Some(*id);
            }
        }
        None
    }

    /// Applies the matched rule's effect to the state. Rules carrying an
    /// effect distribution are sampled proportionally to observed counts.
    pub fn predict<R: Rng + ?Sized>(
        &self,
        state: &StateVec,
        action: Action,
        rng: &mut R,
    ) -> Option<Prediction> {
        let id = self.matching_rule(state, action)?;
        let rule = &self.rules[&id];
        let case = if rule.effects.len() == 1 {
            &rule.effects[0]
        } else {
            let total: u64 = rule.effects.iter().map(|c| c.count).sum();
            let mut draw = rng.gen_range(0..total);
            let mut chosen = &rule.effects[0];
            for case in &rule.effects {
                if draw < case.count {
                    chosen = case;
                    break;
                }
                draw -= case.count;
            }
            chosen
        };
        let next = case.delta.apply(state)?;
        Some(Prediction {
            rule: id,
            next,
            reward: case.mean_reward(),
            terminal: case.terminal,
        })
    }

    /// All effect cases of the matching rule, for callers that need the full
    /// support rather than a sample.
    pub fn predict_cases(
        &self,
        state: &StateVec,
        action: Action,
    ) -> Option<(RuleId, &[EffectCase])> {
        let id = self.matching_rule(state, action)?;
        Some((id, self.rules[&id].effects.as_slice()))
    }

    /// Folds one observed transition into the model.
    pub fn update(
        &mut self,
        prev: &StateVec,
        action: Action,
        next: &StateVec,
        reward: f64,
        terminal: bool,
    ) -> Result<UpdateOutcome, RuleError> {
        self.check_schema(prev)?;
        self.check_schema(next)?;
        let delta = Delta::between(prev, next).map_err(|_| RuleError::SchemaMismatch {
            got: next.len(),
            want: prev.len(),
        })?;

        if let Some(id) = self.matching_rule(prev, action) {
            let rule = self.rules.get_mut(&id).expect("id from matching_rule");
            if let Some(case) = rule
                .effects
                .iter_mut()
                .find(|c| c.matches(&delta, terminal))
            {
                case.count += 1;
                case.reward_sum += reward;
                self.stats.hits += 1;
                return Ok(UpdateOutcome::NoChange);
            }
            // Collision: the covering rule predicts a different effect.
            let aabi_idx = rule
                .preconditions
                .iter()
                .position(|a| a.contains(prev).unwrap_or(false))
                .expect("matching_rule guarantees containment");
            if rule.preconditions[aabi_idx].is_point_at(prev) {
                rule.flips += 1;
                self.stats.point_conflicts += 1;
                let case = EffectCase::new(delta, terminal, reward);
                if rule.flips >= FLIPS_FOR_DISTRIBUTION {
                    rule.effects.push(case);
                } else {
                    rule.effects = vec![case];
                }
                return Ok(UpdateOutcome::SplitAndCreated);
            }
            let halves = rule.preconditions[aabi_idx].split_about(&self.schema, prev);
            rule.preconditions.remove(aabi_idx);
            rule.preconditions.extend(halves);
            self.stats.splits += 1;
            if rule.preconditions.is_empty() {
                self.rules.remove(&id);
                self.stats.deletions += 1;
            }
            self.accommodate(prev, action, delta, reward, terminal)?;
            return Ok(UpdateOutcome::SplitAndCreated);
        }

        // No covering rule: relax a rule with the same action and effect if
        // one exists, otherwise create a point rule.
        match self.accommodate(prev, action, delta, reward, terminal)? {
            Accommodation::Relaxed => Ok(UpdateOutcome::Relaxed),
            Accommodation::Created => Ok(UpdateOutcome::Created),
        }
    }

    fn accommodate(
        &mut self,
        state: &StateVec,
        action: Action,
        delta: Delta,
        reward: f64,
        terminal: bool,
    ) -> Result<Accommodation, RuleError> {
        let candidate = self
            .rules
            .iter()
            .find(|(_, r)| {
                r.action == action
                    && r.is_deterministic()
                    && r.effects[0].matches(&delta, terminal)
            })
            .map(|(id, _)| *id);

        let Some(id) = candidate else {
            let rule = Rule::new(
                vec![Aabi::point(state)],
                action,
                vec![EffectCase::new(delta, terminal, reward)],
            );
            self.rules.insert(RuleId(self.next_id), rule);
            self.next_id += 1;
            self.stats.creations += 1;
            return Ok(Accommodation::Created);
        };

        // Expand the cheapest AABI, then check the hull against every other
        // rule with the same action. A collision there would claim states for
        // which this rule has no evidence, so the expansion rolls back to a
        // point interval instead.
        let rule = &self.rules[&id];
        let idx = rule.cheapest_hull_index(state)?;
        let mut hull = rule.preconditions[idx].hull_with(state)?;
        let mut absorbed: Vec<usize> = vec![idx];
        let committed = loop {
            let mut conflict = false;
            'outer: for (other_id, other) in &self.rules {
                if *other_id == id || other.action != action {
                    continue;
                }
                for aabi in &other.preconditions {
                    if hull.intersects(aabi)? {
                        conflict = true;
                        break 'outer;
                    }
                }
            }
            if conflict {
                break false;
            }
            // Absorb sibling intervals the hull now touches.
            let rule = &self.rules[&id];
            let touched = rule
                .preconditions
                .iter()
                .enumerate()
                .find(|(i, aabi)| !absorbed.contains(i) && hull.intersects(aabi).unwrap_or(false));
            match touched {
                Some((i, aabi)) => {
                    hull = hull.hull_with_aabi(aabi);
                    absorbed.push(i);
                }
                None => break true,
            }
        };

        let rule = self.rules.get_mut(&id).expect("candidate id");
        if committed {
            absorbed.sort_unstable();
            for &i in absorbed.iter().rev() {
                rule.preconditions.remove(i);
            }
            rule.preconditions.push(hull);
        } else {
            rule.preconditions.push(Aabi::point(state));
            self.stats.conservative_relaxations += 1;
        }
        rule.effects[0].count += 1;
        rule.effects[0].reward_sum += reward;
        self.stats.relaxations += 1;
        Ok(Accommodation::Relaxed)
    }

    /// Human-readable dump, one rule per record.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, rule) in &self.rules {
            let _ = writeln!(out, "rule {}", id.0);
            let _ = writeln!(out, "  action: {:?}", rule.action);
            for aabi in &rule.preconditions {
                let mut parts = Vec::new();
                for (i, bound) in aabi.bounds.iter().enumerate() {
                    match bound {
                        Bound::Interval { min, max } => {
                            if min == max {
                                parts.push(format!("{}={}", self.schema.name(i), min));
                            } else {
                                parts.push(format!("{}=[{},{}]", self.schema.name(i), min, max));
                            }
                        }
                        Bound::ValueSet(set) => {
                            let vals: Vec<String> = set.iter().map(|v| format!("#{v}")).collect();
                            parts.push(format!("{}={{{}}}", self.schema.name(i), vals.join(" ")));
                        }
                    }
                }
                let _ = writeln!(out, "  where: {}", parts.join(", "));
            }
            for case in &rule.effects {
                let _ = writeln!(
                    out,
                    "  effect: {} (terminal={}, reward={:.4}, seen={})",
                    describe_delta(&self.schema, &case.delta),
                    case.terminal,
                    case.mean_reward(),
                    case.count
                );
            }
        }
        out
    }
}

enum Accommodation {
    Relaxed,
    Created,
}

fn describe_delta(schema: &FeatureSchema, delta: &Delta) -> String {
    if delta.is_empty() {
        return "none".to_string();
    }
    let parts: Vec<String> = delta
        .0
        .iter()
        .map(|(i, change)| match change {
            crate::features::FeatureDelta::Shift(d) => format!("{} {:+}", schema.name(*i), d),
            crate::features::FeatureDelta::Swap { from, to } => {
                format!("{} #{from}->#{to}", schema.name(*i))
            }
        })
        .collect();
    parts.join(", ")
}

/// Fraction of validation transitions whose predicted next state equals the
/// actual next state. Absent predictions count as errors. Episodes restart on
/// termination.
pub fn prediction_accuracy<R, P>(
    model: &RuleModel,
    env: &GridWorld,
    mut policy: P,
    steps: u32,
    rng: &mut R,
) -> f64
where
    R: Rng + ?Sized,
    P: FnMut(&SymbolicState, &mut R) -> Action,
{
    assert!(steps >= 1);
    let mut state = env.reset(0);
    let mut correct = 0u32;
    for _ in 0..steps {
        let action = policy(&state, rng);
        let step = env.step(&state, action, rng).expect("non-terminal state");
        if let Some(p) = model.predict(&state.features(), action, rng) {
            if p.next == step.state.features() {
                correct += 1;
            }
        }
        state = if step.terminal { env.reset(0) } else { step.state };
    }
    correct as f64 / steps as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureDef, FeatureDelta};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ordered(name: &str) -> FeatureDef {
        FeatureDef {
            name: name.into(),
            kind: FeatureKind::Ordered,
        }
    }

    fn categorical(name: &str) -> FeatureDef {
        FeatureDef {
            name: name.into(),
            kind: FeatureKind::Categorical,
        }
    }

    fn xy(x: i64, y: i64) -> StateVec {
        StateVec(vec![FeatureValue::Int(x), FeatureValue::Int(y)])
    }

    fn box2(x0: i64, x1: i64, y0: i64, y1: i64) -> Aabi {
        Aabi {
            bounds: vec![
                Bound::Interval { min: x0, max: x1 },
                Bound::Interval { min: y0, max: y1 },
            ],
        }
    }

    #[test]
    fn contains_rejects_out_of_interval_state() {
        // Bounds min=(1,1) max=(5,2) do not cover (3,4): y exceeds the max.
        let aabi = box2(1, 5, 1, 2);
        assert!(!aabi.contains(&xy(3, 4)).unwrap());
        assert!(aabi.contains(&xy(3, 2)).unwrap());
    }

    #[test]
    fn point_membership() {
        let aabi = Aabi::point(&xy(3, 5));
        assert!(aabi.contains(&xy(3, 5)).unwrap());
        assert!(!aabi.contains(&xy(3, 6)).unwrap());
        assert!(aabi.is_point_at(&xy(3, 5)));
    }

    #[test]
    fn contains_agrees_with_per_feature_check_everywhere() {
        // Exhaustive oracle over all cells of an 8x8 grid.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x0 = rng.gen_range(0..8);
            let x1 = rng.gen_range(x0..8);
            let y0 = rng.gen_range(0..8);
            let y1 = rng.gen_range(y0..8);
            let aabi = box2(x0, x1, y0, y1);
            for cx in 0..8 {
                for cy in 0..8 {
                    let expected = cx >= x0 && cx <= x1 && cy >= y0 && cy <= y1;
                    assert_eq!(aabi.contains(&xy(cx, cy)).unwrap(), expected);
                }
            }
        }
    }

    #[test]
    fn intersects_matches_brute_force_cell_enumeration() {
        let a = box2(1, 5, 1, 2);
        let b = box2(3, 8, 2, 4);
        assert!(a.intersects(&b).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..300 {
            let mk = |rng: &mut ChaCha8Rng| {
                let x0 = rng.gen_range(0..8);
                let x1 = rng.gen_range(x0..8);
                let y0 = rng.gen_range(0..8);
                let y1 = rng.gen_range(y0..8);
                box2(x0, x1, y0, y1)
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let mut brute = false;
            for cx in 0..8 {
                for cy in 0..8 {
                    if a.contains(&xy(cx, cy)).unwrap() && b.contains(&xy(cx, cy)).unwrap() {
                        brute = true;
                    }
                }
            }
            assert_eq!(a.intersects(&b).unwrap(), brute);
        }
    }

    #[test]
    fn separated_axis_means_no_intersection() {
        let a = box2(1, 2, 0, 7);
        let b = box2(3, 4, 0, 7);
        assert!(!a.intersects(&b).unwrap());
        assert!(a.intersects(&a).unwrap());
    }

    #[test]
    fn schema_mismatch_is_a_usage_error() {
        let aabi = box2(0, 1, 0, 1);
        let bad = StateVec(vec![FeatureValue::Int(0)]);
        assert!(matches!(
            aabi.contains(&bad),
            Err(RuleError::SchemaMismatch { .. })
        ));
    }

    /// Schema for the door-unlock scenario: agent position, facing,
    /// inventory, door state, door position.
    fn door_schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            ordered("agent_x"),
            ordered("agent_y"),
            categorical("agent_facing"),
            categorical("inventory"),
            categorical("door_state"),
            ordered("door_x"),
            ordered("door_y"),
        ])
    }

    // inventory codes: 0 = none, 1 = yellow key. door_state: 0 locked, 1 closed.
    fn door_state_vec(inv: u32, door: u32) -> StateVec {
        StateVec(vec![
            FeatureValue::Int(3),
            FeatureValue::Int(5),
            FeatureValue::Cat(1),
            FeatureValue::Cat(inv),
            FeatureValue::Cat(door),
            FeatureValue::Int(3),
            FeatureValue::Int(6),
        ])
    }

    #[test]
    fn creation_builds_a_point_rule_from_one_transition() {
        // Unlocking a door from an empty model: the new rule pins the agent
        // location to (3,5), swaps the door to closed, and empties the
        // inventory.
        let mut model = RuleModel::new(door_schema());
        let prev = door_state_vec(1, 0);
        let next = door_state_vec(0, 1);
        let outcome = model
            .update(&prev, Action::Toggle, &next, 0.0, false)
            .unwrap();
        assert_eq!(outcome, UpdateOutcome::Created);
        assert_eq!(model.len(), 1);
        let (_, rule) = model.rules().next().unwrap();
        assert!(rule.preconditions[0].is_point_at(&prev));
        assert_eq!(
            rule.effects[0].delta.0.get(&3),
            Some(&FeatureDelta::Swap { from: 1, to: 0 })
        );
        assert_eq!(
            rule.effects[0].delta.0.get(&4),
            Some(&FeatureDelta::Swap { from: 0, to: 1 })
        );
        // Single-example fix: the trained transition replays exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = model.predict(&prev, Action::Toggle, &mut rng).unwrap();
        assert_eq!(p.next, next);
    }

    /// Movement schema from the relaxation scenario: agent position plus a
    /// wall position.
    fn move_schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            ordered("agent_x"),
            ordered("agent_y"),
            ordered("wall_x"),
            ordered("wall_y"),
        ])
    }

    fn move_state(x: i64, y: i64) -> StateVec {
        StateVec(vec![
            FeatureValue::Int(x),
            FeatureValue::Int(y),
            FeatureValue::Int(3),
            FeatureValue::Int(6),
        ])
    }

    fn forward_rule(x0: i64, x1: i64, y0: i64, y1: i64) -> Rule {
        // Effect: agent_y += 1.
        let mut delta = Delta::default();
        delta.0.insert(1, FeatureDelta::Shift(1));
        Rule::new(
            vec![Aabi {
                bounds: vec![
                    Bound::Interval { min: x0, max: x1 },
                    Bound::Interval { min: y0, max: y1 },
                    Bound::Interval { min: 3, max: 3 },
                    Bound::Interval { min: 6, max: 6 },
                ],
            }],
            Action::Forward,
            vec![EffectCase::new(delta, false, 0.0)],
        )
    }

    fn seed_model(rule: Rule) -> RuleModel {
        let mut model = RuleModel::new(move_schema());
        model.rules.insert(RuleId(0), rule);
        model.next_id = 1;
        model
    }

    #[test]
    fn relaxation_expands_the_interval_max() {
        // Rule covers agent in [1,5]x[1,2]; observing the same move from
        // (3,4) relaxes the box max to (5,4).
        let mut model = seed_model(forward_rule(1, 5, 1, 2));
        let prev = move_state(3, 4);
        let next = move_state(3, 5);
        let outcome = model
            .update(&prev, Action::Forward, &next, 0.0, false)
            .unwrap();
        assert_eq!(outcome, UpdateOutcome::Relaxed);
        let rule = model.rule(RuleId(0)).unwrap();
        assert_eq!(rule.preconditions.len(), 1);
        assert_eq!(
            rule.preconditions[0].bounds[0],
            Bound::Interval { min: 1, max: 5 }
        );
        assert_eq!(
            rule.preconditions[0].bounds[1],
            Bound::Interval { min: 1, max: 4 }
        );
    }

    #[test]
    fn relax_is_idempotent_for_covered_states() {
        let rule = forward_rule(1, 5, 1, 2);
        let relaxed = rule.relaxed(&move_state(3, 2)).unwrap();
        assert_eq!(relaxed, rule);
    }

    #[test]
    fn relaxed_hull_contains_old_box_and_new_state() {
        // Brute-force membership check over the full grid: the covered set
        // never shrinks.
        let rule = forward_rule(2, 4, 3, 5);
        let state = move_state(6, 1);
        let relaxed = rule.relaxed(&state).unwrap();
        assert!(relaxed.contains(&state).unwrap());
        for x in 0..8 {
            for y in 0..8 {
                let s = move_state(x, y);
                if rule.contains(&s).unwrap() {
                    assert!(relaxed.contains(&s).unwrap(), "hull must not shrink");
                }
            }
        }
    }

    #[test]
    fn collision_splits_and_creates_a_point_rule() {
        // Rule covers [1,8]x[1,8]; forward at (3,5) observed to change
        // nothing. Both axes tie at width 7, so the split runs along the
        // lowest-index axis (x), carving out x = 3.
        let mut model = seed_model(forward_rule(1, 8, 1, 8));
        let prev = move_state(3, 5);
        let outcome = model
            .update(&prev, Action::Forward, &prev, 0.0, false)
            .unwrap();
        assert_eq!(outcome, UpdateOutcome::SplitAndCreated);
        let old = model.rule(RuleId(0)).unwrap();
        assert_eq!(old.preconditions.len(), 2);
        assert_eq!(
            old.preconditions[0].bounds[0],
            Bound::Interval { min: 1, max: 2 }
        );
        assert_eq!(
            old.preconditions[1].bounds[0],
            Bound::Interval { min: 4, max: 8 }
        );
        assert!(!old.contains(&prev).unwrap());

        // The no-change observation landed in a fresh point rule.
        let created = model.rule(RuleId(1)).unwrap();
        assert!(created.preconditions[0].is_point_at(&prev));
        assert!(created.effects[0].delta.is_empty());

        // The colliding transition now replays correctly.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = model.predict(&prev, Action::Forward, &mut rng).unwrap();
        assert_eq!(p.next, prev);
    }

    #[test]
    fn split_prefers_the_strictly_widest_axis() {
        let mut rule = forward_rule(2, 3, 1, 8);
        let halves = split_min_cut(&rule, &move_schema(), &move_state(2, 5)).unwrap();
        assert_eq!(halves.len(), 2);
        assert_eq!(
            halves[0].preconditions[0].bounds[1],
            Bound::Interval { min: 1, max: 4 }
        );
        assert_eq!(
            halves[1].preconditions[0].bounds[1],
            Bound::Interval { min: 6, max: 8 }
        );
        // Wider x than y flips the axis.
        rule = forward_rule(1, 8, 4, 5);
        let halves = split_min_cut(&rule, &move_schema(), &move_state(3, 5)).unwrap();
        assert_eq!(
            halves[0].preconditions[0].bounds[0],
            Bound::Interval { min: 1, max: 2 }
        );
    }

    #[test]
    fn split_partitions_minus_the_cut_slab() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let schema = move_schema();
        for _ in 0..200 {
            let x0 = rng.gen_range(0..6);
            let x1 = rng.gen_range(x0 + 1..8);
            let y0 = rng.gen_range(0..6);
            let y1 = rng.gen_range(y0 + 1..8);
            let rule = forward_rule(x0, x1, y0, y1);
            let sx = rng.gen_range(x0..=x1);
            let sy = rng.gen_range(y0..=y1);
            let state = move_state(sx, sy);
            let halves = split_min_cut(&rule, &schema, &state).unwrap();
            let wide_x = (x1 - x0) >= (y1 - y0);
            for x in 0..8 {
                for y in 0..8 {
                    let s = move_state(x, y);
                    let inside_original = rule.contains(&s).unwrap();
                    let in_slab = if wide_x { x == sx } else { y == sy };
                    let in_halves =
                        halves.iter().filter(|h| h.contains(&s).unwrap()).count();
                    assert!(in_halves <= 1, "halves must be disjoint");
                    let expected = inside_original && !in_slab;
                    assert_eq!(in_halves == 1, expected);
                }
            }
            assert!(!halves.iter().any(|h| h.contains(&state).unwrap()));
        }
    }

    #[test]
    fn degenerate_point_split_dissolves_the_rule() {
        let mut delta = Delta::default();
        delta.0.insert(1, FeatureDelta::Shift(1));
        let rule = Rule::new(
            vec![Aabi::point(&move_state(3, 5))],
            Action::Forward,
            vec![EffectCase::new(delta, false, 0.0)],
        );
        let halves = split_min_cut(&rule, &move_schema(), &move_state(3, 5)).unwrap();
        assert!(halves.is_empty());
    }

    #[test]
    fn split_outside_rule_is_usage_error() {
        let rule = forward_rule(1, 2, 1, 2);
        assert_eq!(
            split_min_cut(&rule, &move_schema(), &move_state(5, 5)).unwrap_err(),
            RuleError::StateOutsideRule
        );
    }

    #[test]
    fn categorical_collision_removes_the_value_from_the_set() {
        let schema = FeatureSchema::new(vec![categorical("facing")]);
        let mut model = RuleModel::new(schema);
        // Build a rule over facings {0,1} with an empty effect via updates.
        let s0 = StateVec(vec![FeatureValue::Cat(0)]);
        let s1 = StateVec(vec![FeatureValue::Cat(1)]);
        model.update(&s0, Action::Toggle, &s0, 0.0, false).unwrap();
        model.update(&s1, Action::Toggle, &s1, 0.0, false).unwrap();
        // Now facing 1 toggles to facing 0: conflicting effect at a region
        // that is a point on every ordered axis.
        let outcome = model.update(&s1, Action::Toggle, &s0, 0.0, false).unwrap();
        assert_eq!(outcome, UpdateOutcome::SplitAndCreated);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = model.predict(&s1, Action::Toggle, &mut rng).unwrap();
        assert_eq!(p.next, s0, "the colliding observation wins");
        let p0 = model.predict(&s0, Action::Toggle, &mut rng).unwrap();
        assert_eq!(p0.next, s0, "the untouched facing still predicts no change");
    }

    #[test]
    fn repeated_point_conflicts_become_an_effect_distribution() {
        let mut model = seed_model(forward_rule(1, 8, 1, 8));
        let at = move_state(3, 5);
        let moved = move_state(3, 6);
        // First conflict at the point replaces the effect; oscillation keeps
        // both effects and samples by frequency.
        model.update(&at, Action::Forward, &at, 0.0, false).unwrap();
        let outcome = model
            .update(&at, Action::Forward, &moved, 0.0, false)
            .unwrap();
        assert_eq!(outcome, UpdateOutcome::SplitAndCreated);
        let outcome = model.update(&at, Action::Forward, &at, 0.0, false).unwrap();
        assert_eq!(outcome, UpdateOutcome::SplitAndCreated);
        let (_, cases) = model.predict_cases(&at, Action::Forward).unwrap();
        assert_eq!(cases.len(), 2);
        for _ in 0..10 {
            model
                .update(&at, Action::Forward, &moved, 0.0, false)
                .unwrap();
        }
        let (_, cases) = model.predict_cases(&at, Action::Forward).unwrap();
        assert_eq!(cases.len(), 2, "family accumulates counts, not cases");
    }

    #[test]
    fn unseen_state_yields_no_prediction() {
        let model = RuleModel::new(move_schema());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(model
            .predict(&move_state(0, 0), Action::Forward, &mut rng)
            .is_none());
    }

    #[test]
    fn disjointness_holds_after_random_training() {
        use crate::gridworld::{
            Color, DoorState, Facing, GridConfig, GridWorld, Layout, Placement,
        };
        let cfg = GridConfig::new(
            8,
            8,
            Layout {
                agent_start: (1, 3),
                agent_facing: Facing::East,
                objects: vec![
                    Placement::key(Color::Yellow, 2, 1),
                    Placement::door(Color::Yellow, 4, 3, DoorState::Locked),
                    Placement::goal(6, 3),
                    Placement::wall(4, 1),
                    Placement::wall(4, 5),
                ],
            },
        );
        let env = GridWorld::new(cfg).unwrap();
        let mut model = RuleModel::new(env.schema().clone());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = env.reset(0);
        for _ in 0..4000 {
            let action = Action::ALL[rng.gen_range(0..Action::ALL.len())];
            let step = env.step(&state, action, &mut rng).unwrap();
            model
                .update(
                    &state.features(),
                    action,
                    &step.state.features(),
                    step.reward,
                    step.terminal && !step.timed_out,
                )
                .unwrap();
            state = if step.terminal { env.reset(0) } else { step.state };
        }
        let rules: Vec<_> = model.rules().collect();
        for (i, (_, a)) in rules.iter().enumerate() {
            for (_, b) in rules.iter().skip(i + 1) {
                if a.action != b.action {
                    continue;
                }
                for pa in &a.preconditions {
                    for pb in &b.preconditions {
                        assert!(
                            !pa.intersects(pb).unwrap(),
                            "rules with the same action must not overlap"
                        );
                    }
                }
            }
        }
        // Every rule's own preconditions stay pairwise disjoint too.
        for (_, rule) in &rules {
            for (i, pa) in rule.preconditions.iter().enumerate() {
                for pb in rule.preconditions.iter().skip(i + 1) {
                    assert!(!pa.intersects(pb).unwrap());
                }
            }
        }
    }

    #[test]
    fn single_example_fix_across_random_transitions() {
        use crate::gridworld::{Facing, GridConfig, GridWorld, Layout, Placement};
        let cfg = GridConfig::new(
            8,
            8,
            Layout {
                agent_start: (0, 0),
                agent_facing: Facing::East,
                objects: vec![Placement::goal(7, 7)],
            },
        );
        let env = GridWorld::new(cfg).unwrap();
        let mut model = RuleModel::new(env.schema().clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut state = env.reset(0);
        for _ in 0..1500 {
            let action = Action::ALL[rng.gen_range(0..Action::ALL.len())];
            let step = env.step(&state, action, &mut rng).unwrap();
            let prev = state.features();
            let next = step.state.features();
            model
                .update(
                    &prev,
                    action,
                    &next,
                    step.reward,
                    step.terminal && !step.timed_out,
                )
                .unwrap();
            let p = model
                .predict(&prev, action, &mut rng)
                .expect("just trained");
            assert_eq!(p.next, next, "update must fix the observed transition");
            state = if step.terminal { env.reset(0) } else { step.state };
        }
    }

    #[test]
    fn accuracy_is_zero_untrained_and_one_after_memorizing_the_trajectory() {
        use crate::gridworld::{Facing, GridConfig, GridWorld, Layout, Placement};
        let cfg = GridConfig::new(
            8,
            8,
            Layout {
                agent_start: (0, 0),
                agent_facing: Facing::East,
                objects: vec![Placement::goal(7, 7)],
            },
        );
        let env = GridWorld::new(cfg).unwrap();
        let model = RuleModel::new(env.schema().clone());
        let policy = |_s: &SymbolicState, rng: &mut ChaCha8Rng| {
            Action::ALL[rng.gen_range(0..Action::ALL.len())]
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        assert_eq!(prediction_accuracy(&model, &env, policy, 100, &mut rng), 0.0);

        // Train on exactly the trajectory the validation pass replays.
        let mut trained = RuleModel::new(env.schema().clone());
        let mut train_rng = ChaCha8Rng::seed_from_u64(33);
        let mut state = env.reset(0);
        for _ in 0..500 {
            let action = policy(&state, &mut train_rng);
            let step = env.step(&state, action, &mut train_rng).unwrap();
            trained
                .update(
                    &state.features(),
                    action,
                    &step.state.features(),
                    step.reward,
                    step.terminal && !step.timed_out,
                )
                .unwrap();
            state = if step.terminal { env.reset(0) } else { step.state };
        }
        let mut eval_rng = ChaCha8Rng::seed_from_u64(33);
        let acc = prediction_accuracy(&trained, &env, policy, 500, &mut eval_rng);
        assert_eq!(acc, 1.0);
    }
}
