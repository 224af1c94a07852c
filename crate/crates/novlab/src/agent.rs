//! Tabular agents over the symbolic feature projection: epsilon-greedy
//! Q-learning and a softmax actor-critic. Both consume real and imagined
//! transitions through the same batch interface.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::StateVec;
use crate::gridworld::{Action, N_ACTIONS};

/// One transition record, tagged by origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVec,
    pub action: Action,
    pub reward: f64,
    pub next: StateVec,
    pub terminal: bool,
    pub imagined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_floor: f64,
    /// Environment steps over which epsilon decays linearly to the floor.
    pub epsilon_decay_steps: u64,
    /// Initial value of unseen table entries. A value below the discounted
    /// return of reachable goals turns greedy ties into systematic frontier
    /// exploration, which sparse-reward tabular learning needs.
    pub optimistic_init: f64,
}

impl Default for QParams {
    fn default() -> Self {
        QParams {
            alpha: 1.0,
            gamma: 0.995,
            epsilon_start: 1.0,
            epsilon_floor: 0.05,
            epsilon_decay_steps: 60_000,
            optimistic_init: 0.4,
        }
    }
}

/// Epsilon-greedy tabular Q-learning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QTable {
    pub params: QParams,
    values: HashMap<StateVec, [f64; N_ACTIONS]>,
    pub epsilon: f64,
    pre_steps: u64,
}

impl QTable {
    pub fn new(params: QParams) -> Self {
        let epsilon = params.epsilon_start;
        QTable {
            params,
            values: HashMap::new(),
            epsilon,
            pre_steps: 0,
        }
    }

    pub fn q(&self, state: &StateVec) -> [f64; N_ACTIONS] {
        self.values
            .get(state)
            .copied()
            .unwrap_or([self.params.optimistic_init; N_ACTIONS])
    }

    /// Greedy argmax; ties resolve to the lowest action index.
    pub fn greedy(&self, state: &StateVec) -> Action {
        let q = self.q(state);
        let mut best = 0;
        for (i, v) in q.iter().enumerate().skip(1) {
            if *v > q[best] {
                best = i;
            }
        }
        Action::from_index(best).unwrap()
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &StateVec, rng: &mut R) -> Action {
        if self.epsilon > 0.0 && rng.gen::<f64>() < self.epsilon {
            Action::from_index(rng.gen_range(0..N_ACTIONS)).unwrap()
        } else {
            self.greedy(state)
        }
    }

    pub fn learn(&mut self, tr: &Transition) {
        let bootstrap = if tr.terminal {
            0.0
        } else {
            let next = self.q(&tr.next);
            next.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
        };
        let init = self.params.optimistic_init;
        let entry = self
            .values
            .entry(tr.state.clone())
            .or_insert([init; N_ACTIONS]);
        let q = &mut entry[tr.action.index()];
        let td_error = tr.reward + self.params.gamma * bootstrap - *q;
        *q += self.params.alpha * td_error;
    }

    /// Linear epsilon decay, driven once per pre-change environment step.
    /// Post-change epsilon stays pinned at the floor.
    pub fn decay_step(&mut self) {
        self.pre_steps += 1;
        let span = (self.params.epsilon_start - self.params.epsilon_floor).max(0.0);
        let frac = (self.pre_steps as f64 / self.params.epsilon_decay_steps as f64).min(1.0);
        self.epsilon = self.params.epsilon_start - span * frac;
    }

    pub fn pin_epsilon_to_floor(&mut self) {
        self.epsilon = self.params.epsilon_floor;
    }

    pub fn table_len(&self) -> usize {
        self.values.len()
    }

    /// Sorted-entry checkpoint form.
    pub fn to_json(&self) -> String {
        let mut entries: Vec<(&StateVec, &[f64; N_ACTIONS])> = self.values.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        serde_json::to_string(&(&self.params, self.epsilon, self.pre_steps, entries))
            .expect("serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let (params, epsilon, pre_steps, entries): (
            QParams,
            f64,
            u64,
            Vec<(StateVec, [f64; N_ACTIONS])>,
        ) = serde_json::from_str(text)?;
        Ok(QTable {
            params,
            values: entries.into_iter().collect(),
            epsilon,
            pre_steps,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcParams {
    pub alpha_value: f64,
    pub alpha_policy: f64,
    pub gamma: f64,
    pub entropy_coef: f64,
    /// Initial value-table entry for unseen states. A positive baseline
    /// makes unvisited regions look promising, the critic-side analogue of
    /// optimistic Q initialization.
    pub optimistic_init: f64,
}

impl Default for AcParams {
    fn default() -> Self {
        AcParams {
            alpha_value: 0.3,
            alpha_policy: 0.5,
            gamma: 0.995,
            entropy_coef: 0.01,
            optimistic_init: 0.4,
        }
    }
}

/// Tabular softmax actor-critic: per-state policy logits and a TD(0) value
/// baseline, updated with advantage-weighted score gradients plus an entropy
/// bonus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActorCriticTables {
    pub params: AcParams,
    logits: HashMap<StateVec, [f64; N_ACTIONS]>,
    values: HashMap<StateVec, f64>,
}

pub fn softmax(logits: &[f64; N_ACTIONS]) -> [f64; N_ACTIONS] {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mut out = [0.0; N_ACTIONS];
    let mut total = 0.0;
    for (o, l) in out.iter_mut().zip(logits.iter()) {
        *o = (l - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    out
}

impl ActorCriticTables {
    pub fn new(params: AcParams) -> Self {
        ActorCriticTables {
            params,
            logits: HashMap::new(),
            values: HashMap::new(),
        }
    }

    pub fn policy(&self, state: &StateVec) -> [f64; N_ACTIONS] {
        let logits = self.logits.get(state).copied().unwrap_or([0.0; N_ACTIONS]);
        softmax(&logits)
    }

    pub fn value(&self, state: &StateVec) -> f64 {
        self.values
            .get(state)
            .copied()
            .unwrap_or(self.params.optimistic_init)
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &StateVec, rng: &mut R) -> Action {
        let probs = self.policy(state);
        let draw: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                return Action::from_index(i).unwrap();
            }
        }
        Action::from_index(N_ACTIONS - 1).unwrap()
    }

    pub fn learn(&mut self, batch: &[Transition]) {
        assert!(!batch.is_empty(), "actor-critic updates need a batch");
        for tr in batch {
            let bootstrap = if tr.terminal { 0.0 } else { self.value(&tr.next) };
            let advantage = tr.reward + self.params.gamma * bootstrap - self.value(&tr.state);
            let init = self.params.optimistic_init;
            let v = self.values.entry(tr.state.clone()).or_insert(init);
            *v += self.params.alpha_value * advantage;

            let logits = self
                .logits
                .entry(tr.state.clone())
                .or_insert([0.0; N_ACTIONS]);
            let probs = softmax(logits);
            let entropy: f64 = probs
                .iter()
                .filter(|p| **p > 0.0)
                .map(|p| -p * p.ln())
                .sum();
            for (i, (logit, p)) in logits.iter_mut().zip(probs.iter()).enumerate() {
                let indicator = if i == tr.action.index() { 1.0 } else { 0.0 };
                let score = advantage * (indicator - p);
                let entropy_grad = -p * (p.ln() + entropy);
                *logit +=
                    self.params.alpha_policy * (score + self.params.entropy_coef * entropy_grad);
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut logit_entries: Vec<(&StateVec, &[f64; N_ACTIONS])> = self.logits.iter().collect();
        logit_entries.sort_by(|a, b| a.0.cmp(b.0));
        let mut value_entries: Vec<(&StateVec, &f64)> = self.values.iter().collect();
        value_entries.sort_by(|a, b| a.0.cmp(b.0));
        serde_json::to_string(&(&self.params, logit_entries, value_entries))
            .expect("serialization cannot fail")
    }
}

/// Agent kind selected by experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Q,
    Ac,
}

#[derive(Debug, Clone)]
pub enum AnyAgent {
    Q(QTable),
    Ac(ActorCriticTables),
}

impl AnyAgent {
    pub fn act<R: Rng + ?Sized>(&self, state: &StateVec, rng: &mut R) -> Action {
        match self {
            AnyAgent::Q(q) => q.act(state, rng),
            AnyAgent::Ac(ac) => ac.act(state, rng),
        }
    }

    pub fn learn_batch(&mut self, batch: &[Transition]) {
        match self {
            AnyAgent::Q(q) => {
                for tr in batch {
                    q.learn(tr);
                }
            }
            AnyAgent::Ac(ac) => ac.learn(batch),
        }
    }

    pub fn pre_step(&mut self) {
        if let AnyAgent::Q(q) = self {
            q.decay_step();
        }
    }

    pub fn finish_pre_training(&mut self) {
        if let AnyAgent::Q(q) = self {
            q.pin_epsilon_to_floor();
        }
    }

    pub fn checkpoint_json(&self) -> String {
        match self {
            AnyAgent::Q(q) => q.to_json(),
            AnyAgent::Ac(ac) => ac.to_json(),
        }
    }
}
