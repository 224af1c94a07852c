//! Prioritized-sampling library: sum-tree storage, count-plus-loss replay
//! priorities, thresholded TD priorities and their inverse, Huber loss,
//! lambda-returns, and dual-objective min-k/max-k subsampling.
//!
//! The pieces compose into two samplers. World-model-style sampling blends a
//! uniform fraction with count/loss ("curious") priorities over a sum tree.
//! Behavior-style sampling sorts a batch by thresholded TD priority and
//! hands the lowest-priority fraction `k = 1/(2-W)` to the actor and the
//! highest to the critic, so the two sub-batches overlap by exactly
//! `2*round(k*N) - N` items when that is positive.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("operation needs a non-empty input")]
    EmptyInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("sum tree index {index} out of capacity {capacity}")]
    IndexOutOfRange { index: usize, capacity: usize },
    #[error("priority must be finite and non-negative, got {0}")]
    BadPriority(f64),
    #[error("sample point {u} outside [0, {total})")]
    BadSamplePoint { u: f64, total: f64 },
}

/// Binary indexed sum tree with O(log n) update and prefix-sum descent.
/// Parents are recomputed from their children on every update, so the root
/// never drifts from the true leaf sum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SumTree {
    capacity: usize,
    leaves: usize,
    tree: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "sum tree capacity must be positive");
        let leaves = capacity.next_power_of_two();
        SumTree {
            capacity,
            leaves,
            tree: vec![0.0; 2 * leaves],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.tree[1]
    }

    pub fn get(&self, index: usize) -> f64 {
        self.tree[self.leaves + index]
    }

    pub fn update(&mut self, index: usize, priority: f64) -> Result<(), ReplayError> {
        if index >= self.capacity {
            return Err(ReplayError::IndexOutOfRange {
                index,
                capacity: self.capacity,
            });
        }
        if !priority.is_finite() || priority < 0.0 {
            return Err(ReplayError::BadPriority(priority));
        }
        let mut node = self.leaves + index;
        self.tree[node] = priority;
        while node > 1 {
            node /= 2;
            self.tree[node] = self.tree[2 * node] + self.tree[2 * node + 1];
        }
        Ok(())
    }

    /// Returns the unique leaf whose cumulative-priority interval contains
    /// `u`.
    pub fn sample(&self, u: f64) -> Result<usize, ReplayError> {
        let total = self.total();
        if total <= 0.0 || !(0.0..total).contains(&u) {
            return Err(ReplayError::BadSamplePoint { u, total });
        }
        let mut node = 1;
        let mut rest = u;
        while node < self.leaves {
            let left = 2 * node;
            if rest < self.tree[left] {
                node = left;
            } else {
                rest -= self.tree[left];
                node = left + 1;
            }
        }
        Ok(node - self.leaves)
    }

    #[cfg(test)]
    fn nodes(&self) -> &[f64] {
        &self.tree
    }
}

/// Parameters of the count-plus-loss ("curious") replay priority
/// `c * beta^visits + (|loss| + eps)^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrParams {
    pub c: f64,
    pub beta: f64,
    pub eps: f64,
    pub alpha: f64,
}

impl Default for CrParams {
    fn default() -> Self {
        // The constants only scale priorities; these defaults keep the count
        // term dominant for fresh items.
        CrParams {
            c: 1e4,
            beta: 0.7,
            eps: 0.1,
            alpha: 0.7,
        }
    }
}

/// Count-plus-loss priority: high for rarely trained items and for items the
/// model still predicts poorly.
pub fn cr_priority(visits: u32, loss: f64, p: &CrParams) -> f64 {
    p.c * p.beta.powi(visits as i32) + (loss.abs() + p.eps).powf(p.alpha)
}

/// Thresholded TD priority weights `max(|d|^alpha, 1)`, normalized to one.
/// The threshold saturates every |d| <= 1 to the same weight.
pub fn per_priority(deltas: &[f64], alpha: f64) -> Result<Vec<f64>, ReplayError> {
    if deltas.is_empty() {
        return Err(ReplayError::EmptyInput);
    }
    let raw: Vec<f64> = deltas
        .iter()
        .map(|d| d.abs().powf(alpha).max(1.0))
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Inverse thresholded TD priority: weights proportional to
/// `1 / max(|d|^alpha, 1)`, normalized.
pub fn iper_priority(deltas: &[f64], alpha: f64) -> Vec<f64> {
    let raw: Vec<f64> = deltas
        .iter()
        .map(|d| 1.0 / d.abs().powf(alpha).max(1.0))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Huber loss: quadratic inside the unit interval, linear outside, with
/// derivative magnitude at most one everywhere.
pub fn huber(delta: f64) -> f64 {
    if delta.abs() <= 1.0 {
        delta * delta / 2.0
    } else {
        delta.abs() - 0.5
    }
}

/// Lambda-returns by backward recursion:
/// `V_t = r_t + g_t * ((1-lambda) * v(s_{t+1}) + lambda * V_{t+1})`
/// with the tail pinned to the bootstrap value `v(s_H)`. `rewards` and
/// `discounts` cover steps `0..H`; `values` covers states `0..=H`.
pub fn lambda_return(
    rewards: &[f64],
    values: &[f64],
    discounts: &[f64],
    lambda: f64,
) -> Result<Vec<f64>, ReplayError> {
    let horizon = rewards.len();
    if horizon == 0 {
        return Err(ReplayError::EmptyInput);
    }
    if values.len() != horizon + 1 {
        return Err(ReplayError::LengthMismatch {
            left: values.len(),
            right: horizon + 1,
        });
    }
    if discounts.len() != horizon {
        return Err(ReplayError::LengthMismatch {
            left: discounts.len(),
            right: horizon,
        });
    }
    let mut returns = vec![0.0; horizon];
    let mut tail = values[horizon];
    for t in (0..horizon).rev() {
        let mixed = (1.0 - lambda) * values[t + 1] + lambda * tail;
        returns[t] = rewards[t] + discounts[t] * mixed;
        tail = returns[t];
    }
    Ok(returns)
}

/// Elementwise TD errors `v(s_t) - V_t^lambda`.
pub fn td_errors(returns: &[f64], values: &[f64]) -> Result<Vec<f64>, ReplayError> {
    if returns.len() != values.len() {
        return Err(ReplayError::LengthMismatch {
            left: returns.len(),
            right: values.len(),
        });
    }
    Ok(values
        .iter()
        .zip(returns.iter())
        .map(|(v, r)| v - r)
        .collect())
}

/// Result of dual-objective subsampling: index sets for the actor (lowest
/// thresholded TD priorities) and the critic (highest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DopsSplit {
    pub actor: Vec<usize>,
    pub critic: Vec<usize>,
}

impl DopsSplit {
    pub fn overlap(&self) -> usize {
        self.actor
            .iter()
            .filter(|i| self.critic.contains(i))
            .count()
    }
}

/// Splits a batch by thresholded TD priority. Both sub-batches have size
/// `round(N / (2 - W))` (round half up); ties order by original index. The
/// actor set takes the lowest-priority items, the critic set the highest,
/// so the sets overlap by `2*size - N` items when that is positive.
pub fn dops_subsample(tds: &[f64], alpha: f64, w: f64) -> Result<DopsSplit, ReplayError> {
    if tds.is_empty() {
        return Err(ReplayError::EmptyInput);
    }
    assert!((0.0..=1.0).contains(&w), "overlap W must lie in [0,1]");
    let n = tds.len();
    let k = 1.0 / (2.0 - w);
    let size = (k * n as f64 + 0.5).floor() as usize;
    let size = size.clamp(1, n);

    let mut order: Vec<usize> = (0..n).collect();
    let priority = |i: usize| tds[i].abs().powf(alpha).max(1.0);
    order.sort_by(|&a, &b| {
        priority(a)
            .partial_cmp(&priority(b))
            .expect("priorities are finite")
            .then(a.cmp(&b))
    });

    let mut actor: Vec<usize> = order[..size].to_vec();
    let mut critic: Vec<usize> = order[n - size..].to_vec();
    actor.sort_unstable();
    critic.sort_unstable();
    Ok(DopsSplit { actor, critic })
}

/// Whether freshly pushed items enter the buffer at the maximum priority
/// seen so far or at their computed count/loss priority. With zero visits
/// the count term already dominates, so the two behaviors differ only in
/// scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NewItemPriority {
    PMax,
    Computed,
}

/// Ring buffer with count/loss prioritization over a sum tree, plus blended
/// uniform sampling.
#[derive(Debug, Clone)]
pub struct CuriousBuffer {
    params: CrParams,
    new_item: NewItemPriority,
    tree: SumTree,
    visits: Vec<u32>,
    losses: Vec<f64>,
    len: usize,
    next: usize,
    p_max: f64,
}

impl CuriousBuffer {
    pub fn new(capacity: usize, params: CrParams, new_item: NewItemPriority) -> Self {
        CuriousBuffer {
            params,
            new_item,
            tree: SumTree::new(capacity),
            visits: vec![0; capacity],
            losses: vec![0.0; capacity],
            len: 0,
            next: 0,
            p_max: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Inserts a new item and returns its slot.
    pub fn push(&mut self) -> usize {
        let slot = self.next;
        self.next = (self.next + 1) % self.tree.capacity();
        self.len = (self.len + 1).min(self.tree.capacity());
        self.visits[slot] = 0;
        self.losses[slot] = 0.0;
        let computed = cr_priority(0, 0.0, &self.params);
        let priority = match self.new_item {
            NewItemPriority::PMax => self.p_max.max(computed),
            NewItemPriority::Computed => computed,
        };
        self.p_max = self.p_max.max(priority);
        self.tree.update(slot, priority).expect("slot in range");
        slot
    }

    /// Records a training pass over `slot` with the observed model loss.
    pub fn mark_trained(&mut self, slot: usize, loss: f64) {
        self.visits[slot] = self.visits[slot].saturating_add(1);
        self.losses[slot] = loss;
        let priority = cr_priority(self.visits[slot], loss, &self.params);
        self.p_max = self.p_max.max(priority);
        self.tree.update(slot, priority).expect("slot in range");
    }

    /// Draws one slot: uniform with probability `uniform_mix`, otherwise
    /// proportional to the count/loss priorities.
    pub fn sample_blended<R: Rng + ?Sized>(
        &self,
        uniform_mix: f64,
        rng: &mut R,
    ) -> Result<usize, ReplayError> {
        if self.len == 0 {
            return Err(ReplayError::EmptyInput);
        }
        if rng.gen::<f64>() < uniform_mix {
            return Ok(rng.gen_range(0..self.len));
        }
        let u = rng.gen::<f64>() * self.tree.total();
        self.tree.sample(u)
    }

    pub fn priority(&self, slot: usize) -> f64 {
        self.tree.get(slot)
    }

    pub fn total_priority(&self) -> f64 {
        self.tree.total()
    }
}
