//! Adaptation controller: once the change detector fires, rule-model and
//! agent learning unfreeze and the agent's update buffer is fed a mixture of
//! real and model-simulated transitions.
//!
//! The imagined share of the buffer is a fraction `f`: for every real
//! transition appended, `f / (1 - f)` imagined transitions are owed, drawn
//! from rollouts of the current policy through the rule model. Rollouts seed
//! from a pool of recently visited real states and truncate as soon as the
//! model has no applicable rule, so imagination never fabricates transitions
//! the model has no evidence for. Imagined steps consume no environment
//! interactions.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AnyAgent, Transition};
use crate::detect::{Detector, Observation, PredictedOutcome};
use crate::features::{Delta, StateVec};
use crate::gridworld::Action;
use crate::rules::RuleModel;

fn default_fraction() -> f64 {
    0.4
}
fn default_horizon() -> u32 {
    20
}
fn default_pool() -> usize {
    256
}
fn default_update_period() -> u32 {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixParams {
    /// Imagined fraction f of the update buffer, in [0, 1).
    #[serde(default = "default_fraction")]
    pub imagined_fraction: f64,
    /// Maximum length of one imagined rollout.
    #[serde(default = "default_horizon")]
    pub imagination_horizon: u32,
    /// Number of recent real states retained as rollout seeds.
    #[serde(default = "default_pool")]
    pub imagination_start_pool: usize,
    /// Agent update cadence, in buffer appends.
    #[serde(default = "default_update_period")]
    pub update_period: u32,
}

impl Default for MixParams {
    fn default() -> Self {
        MixParams {
            imagined_fraction: default_fraction(),
            imagination_horizon: default_horizon(),
            imagination_start_pool: default_pool(),
            update_period: default_update_period(),
        }
    }
}

impl MixParams {
    pub fn baseline() -> Self {
        MixParams {
            imagined_fraction: 0.0,
            ..MixParams::default()
        }
    }

    fn validate(&self) {
        assert!(
            (0.0..1.0).contains(&self.imagined_fraction),
            "imagined fraction must lie in [0, 1)"
        );
        assert!(self.imagination_horizon >= 1);
        assert!(self.update_period >= 1);
    }
}

/// Bounded FIFO of transitions tagged real/imagined.
#[derive(Debug, Clone)]
pub struct UpdateBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    pub real_appended: u64,
    pub imagined_appended: u64,
}

impl UpdateBuffer {
    pub fn new(capacity: usize) -> Self {
        UpdateBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity),
            real_appended: 0,
            imagined_appended: 0,
        }
    }

    pub fn push(&mut self, tr: Transition) {
        if tr.imagined {
            self.imagined_appended += 1;
        } else {
            self.real_appended += 1;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(tr);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Imagined share over the most recent `window` entries.
    pub fn imagined_share(&self, window: usize) -> f64 {
        let take = window.min(self.items.len());
        if take == 0 {
            return 0.0;
        }
        let imagined = self
            .items
            .iter()
            .rev()
            .take(take)
            .filter(|t| t.imagined)
            .count();
        imagined as f64 / take as f64
    }
}

/// Rolls the agent's policy through the rule model for up to `horizon`
/// steps, truncating when no rule applies or the model predicts termination.
pub fn imagine_rollout<R: Rng + ?Sized>(
    model: &RuleModel,
    agent: &AnyAgent,
    start: &StateVec,
    horizon: u32,
    rng: &mut R,
) -> Vec<Transition> {
    assert!(horizon >= 1);
    let mut out = Vec::new();
    let mut state = start.clone();
    for _ in 0..horizon {
        let action = agent.act(&state, rng);
        let Some(p) = model.predict(&state, action, rng) else {
            break;
        };
        let terminal = p.terminal;
        out.push(Transition {
            state,
            action,
            reward: p.reward,
            next: p.next.clone(),
            terminal,
            imagined: true,
        });
        if terminal {
            break;
        }
        state = p.next;
    }
    out
}

/// Per-tick report from the controller.
#[derive(Debug, Clone, Copy, Default)]
pub struct TickReport {
    pub fired_now: bool,
    pub policy_updated: bool,
    pub imagined_added: u32,
}

/// Drives detection and post-change learning over real transitions.
///
/// Before the detector fires both the model and the agent stay frozen. After
/// the fire (and once the harness enables adaptation) every real transition
/// updates the rule model and lands in the update buffer together with
/// enough imagined transitions to hold the configured mixture; the agent
/// trains on the newest batch every `update_period` appends.
#[derive(Debug)]
pub struct AdaptController {
    pub mix: MixParams,
    pub buffer: UpdateBuffer,
    pool: VecDeque<StateVec>,
    rollout_queue: VecDeque<Transition>,
    pending: Vec<Transition>,
    imagination_debt: f64,
    /// Gate held closed by the harness during the frozen post-change window
    /// used to measure resilience.
    pub adaptation_enabled: bool,
    pub policy_updates: u64,
}

const BUFFER_CAPACITY: usize = 4096;

impl AdaptController {
    pub fn new(mix: MixParams) -> Self {
        mix.validate();
        AdaptController {
            mix,
            buffer: UpdateBuffer::new(BUFFER_CAPACITY),
            pool: VecDeque::with_capacity(mix.imagination_start_pool),
            rollout_queue: VecDeque::new(),
            pending: Vec::new(),
            imagination_debt: 0.0,
            adaptation_enabled: true,
            policy_updates: 0,
        }
    }

    fn remember_state(&mut self, state: &StateVec) {
        if self.pool.len() == self.mix.imagination_start_pool.max(1) {
            self.pool.pop_front();
        }
        self.pool.push_back(state.clone());
    }

    fn next_imagined<R: Rng + ?Sized>(
        &mut self,
        model: &RuleModel,
        agent: &AnyAgent,
        rng: &mut R,
    ) -> Option<Transition> {
        if let Some(tr) = self.rollout_queue.pop_front() {
            return Some(tr);
        }
        for _ in 0..8 {
            if self.pool.is_empty() {
                return None;
            }
            let seed = &self.pool[rng.gen_range(0..self.pool.len())];
            let rollout =
                imagine_rollout(model, agent, seed, self.mix.imagination_horizon, rng);
            if !rollout.is_empty() {
                self.rollout_queue.extend(rollout);
                return self.rollout_queue.pop_front();
            }
        }
        None
    }

    fn append(&mut self, tr: Transition, agent: &mut AnyAgent) -> bool {
        self.pending.push(tr.clone());
        self.buffer.push(tr);
        if self.pending.len() as u32 >= self.mix.update_period {
            // Newest-first application carries terminal rewards backward
            // through trajectory segments within the batch.
            self.pending.reverse();
            agent.learn_batch(&self.pending);
            self.pending.clear();
            self.policy_updates += 1;
            return true;
        }
        false
    }

    /// Processes one real environment transition: lets the detector compare
    /// the model's claim against what happened, then (post-fire, adaptation
    /// enabled) updates the model, mixes the buffer, and trains the agent.
    #[allow(clippy::too_many_arguments)]
    pub fn tick<R: Rng + ?Sized>(
        &mut self,
        prev: &StateVec,
        action: Action,
        next: &StateVec,
        reward: f64,
        terminal: bool,
        model: &mut RuleModel,
        agent: &mut AnyAgent,
        detector: &mut Detector,
        rng: &mut R,
    ) -> TickReport {
        let mut report = TickReport::default();
        let actual = PredictedOutcome {
            delta: Delta::between(prev, next).expect("same schema"),
            terminal,
        };
        // The detector sees the matched rule's dominant claim.
        let (rule_hit, predicted) = match model.predict_cases(prev, action) {
            Some((id, cases)) => {
                let best = cases
                    .iter()
                    .max_by_key(|c| c.count)
                    .expect("rules carry at least one effect");
                (
                    Some(id),
                    Some(PredictedOutcome {
                        delta: best.delta.clone(),
                        terminal: best.terminal,
                    }),
                )
            }
            None => (None, None),
        };
        let was_fired = detector.fired();
        let fired = detector.observe(&Observation {
            rule_hit,
            predicted,
            actual,
            state: prev.clone(),
        });
        report.fired_now = fired && !was_fired;

        self.remember_state(prev);
        if terminal {
            self.remember_state(next);
        }

        if !fired || !self.adaptation_enabled {
            return report;
        }

        model
            .update(prev, action, next, reward, terminal)
            .expect("schemas match");
        let real = Transition {
            state: prev.clone(),
            action,
            reward,
            next: next.clone(),
            terminal,
            imagined: false,
        };
        report.policy_updated |= self.append(real, agent);

        let f = self.mix.imagined_fraction;
        if f > 0.0 {
            self.imagination_debt += f / (1.0 - f);
            // Keep a runaway backlog from dumping into one step when the
            // model regains coverage.
            self.imagination_debt = self.imagination_debt.min(8.0);
            while self.imagination_debt >= 1.0 {
                match self.next_imagined(model, agent, rng) {
                    Some(tr) => {
                        report.policy_updated |= self.append(tr, agent);
                        report.imagined_added += 1;
                        self.imagination_debt -= 1.0;
                    }
                    None => {
                        self.imagination_debt = 0.0;
                        break;
                    }
                }
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{QParams, QTable};
    use crate::detect::DetectorParams;
    use crate::gridworld::{Facing, GridConfig, GridWorld, Layout, Placement};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn empty_env() -> GridWorld {
        GridWorld::new(GridConfig::new(
            8,
            8,
            Layout {
                agent_start: (0, 0),
                agent_facing: Facing::East,
                objects: vec![Placement::goal(7, 7)],
            },
        ))
        .unwrap()
    }

    /// Feeds every reachable transition to the model once.
    fn fully_learned_model(env: &GridWorld) -> RuleModel {
        let mut model = RuleModel::new(env.schema().clone());
        let mut frontier = vec![env.reset(0)];
        let mut seen = std::collections::HashSet::new();
        let strip =
            |mut s: crate::gridworld::SymbolicState| {
                s.step_count = 0;
                s
            };
        seen.insert(strip(frontier[0].clone()));
        while let Some(state) = frontier.pop() {
            for action in Action::ALL {
                let outs = env.outcomes(&state, action).unwrap();
                let step = &outs[0].1;
                model
                    .update(
                        &state.features(),
                        action,
                        &step.state.features(),
                        step.reward,
                        step.terminal && !step.timed_out,
                    )
                    .unwrap();
                if !step.terminal && seen.insert(strip(step.state.clone())) {
                    frontier.push(strip(step.state.clone()));
                }
            }
        }
        model
    }

    fn q_agent() -> AnyAgent {
        let mut table = QTable::new(QParams::default());
        table.epsilon = 0.05;
        AnyAgent::Q(table)
    }

    #[test]
    fn rollout_on_empty_model_is_empty() {
        let env = empty_env();
        let model = RuleModel::new(env.schema().clone());
        let agent = q_agent();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let start = env.reset(0).features();
        assert!(imagine_rollout(&model, &agent, &start, 20, &mut rng).is_empty());
    }

    #[test]
    fn rollout_never_exceeds_the_horizon() {
        let env = empty_env();
        let model = fully_learned_model(&env);
        let agent = q_agent();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let start = env.reset(0).features();
        for horizon in [1u32, 5, 20] {
            let rollout = imagine_rollout(&model, &agent, &start, horizon, &mut rng);
            assert!(rollout.len() <= horizon as usize);
            assert!(rollout.iter().all(|t| t.imagined));
        }
    }

    #[test]
    fn fully_learned_rollout_matches_the_real_environment() {
        // Same seeded agent, same start: the imagined trace and the real
        // trace are identical step for step.
        let env = empty_env();
        let model = fully_learned_model(&env);
        let agent = q_agent();
        let start = env.reset(0);

        let mut env_rng = ChaCha8Rng::seed_from_u64(42);
        let mut real = Vec::new();
        let mut state = start.clone();
        for _ in 0..50 {
            let action = agent.act(&state.features(), &mut env_rng);
            let step = env.step(&state, action, &mut env_rng).unwrap();
            real.push((state.features(), action, step.state.features(), step.terminal));
            if step.terminal {
                break;
            }
            state = step.state;
        }

        let mut im_rng = ChaCha8Rng::seed_from_u64(42);
        let rollout = imagine_rollout(&model, &agent, &start.features(), 50, &mut im_rng);
        assert_eq!(rollout.len(), real.len());
        for (tr, (s, a, n, term)) in rollout.iter().zip(real.iter()) {
            assert_eq!(&tr.state, s);
            assert_eq!(tr.action, *a);
            assert_eq!(&tr.next, n);
            assert_eq!(tr.terminal, *term);
        }
    }

    fn run_controller(fraction: f64, steps: u32) -> (AdaptController, AnyAgent) {
        let env = empty_env();
        let mut model = RuleModel::new(env.schema().clone());
        let mut agent = q_agent();
        let mut detector = Detector::new(DetectorParams { n: 1 });
        let mut controller = AdaptController::new(MixParams {
            imagined_fraction: fraction,
            ..MixParams::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = env.reset(0);
        for _ in 0..steps {
            let action = agent.act(&state.features(), &mut rng);
            let step = env.step(&state, action, &mut rng).unwrap();
            controller.tick(
                &state.features(),
                action,
                &step.state.features(),
                step.reward,
                step.terminal && !step.timed_out,
                &mut model,
                &mut agent,
                &mut detector,
                &mut rng,
            );
            state = if step.terminal { env.reset(0) } else { step.state };
        }
        (controller, agent)
    }

    #[test]
    fn zero_fraction_never_imagines() {
        let (controller, _) = run_controller(0.0, 2000);
        assert_eq!(controller.buffer.imagined_appended, 0);
        assert!(controller.buffer.real_appended > 0);
    }

    #[test]
    fn mixture_fraction_holds_within_two_percent() {
        // f = 0.4 means two imagined transitions for every three real ones.
        let (controller, _) = run_controller(0.4, 4000);
        let share = controller.buffer.imagined_share(1000);
        assert!(
            (share - 0.4).abs() <= 0.02,
            "imagined share {share} strays from 0.4"
        );
        let ratio =
            controller.buffer.imagined_appended as f64 / controller.buffer.real_appended as f64;
        assert!((ratio - 2.0 / 3.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn nothing_reaches_the_buffer_before_the_detector_fires() {
        let env = empty_env();
        // A perfect model never mispredicts, so the detector stays quiet and
        // the buffer stays empty.
        let mut model = fully_learned_model(&env);
        let mut agent = q_agent();
        let mut detector = Detector::new(DetectorParams::default());
        let mut controller = AdaptController::new(MixParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut state = env.reset(0);
        for _ in 0..3000 {
            let action = agent.act(&state.features(), &mut rng);
            let step = env.step(&state, action, &mut rng).unwrap();
            let report = controller.tick(
                &state.features(),
                action,
                &step.state.features(),
                step.reward,
                step.terminal && !step.timed_out,
                &mut model,
                &mut agent,
                &mut detector,
                &mut rng,
            );
            assert!(!report.fired_now);
            state = if step.terminal { env.reset(0) } else { step.state };
        }
        assert!(controller.buffer.is_empty());
        assert_eq!(controller.policy_updates, 0);
    }

    #[test]
    fn update_cadence_follows_the_period() {
        let (controller, _) = run_controller(0.0, 1000);
        let appends = controller.buffer.real_appended + controller.buffer.imagined_appended;
        assert_eq!(
            controller.policy_updates,
            appends / MixParams::default().update_period as u64
        );
    }

    #[test]
    fn imagination_consumes_no_environment_steps() {
        // Identical real-step budgets with and without imagination: the
        // environment sees the same number of interactions either way.
        let (with_imagination, _) = run_controller(0.4, 1500);
        let (without, _) = run_controller(0.0, 1500);
        assert_eq!(
            with_imagination.buffer.real_appended,
            without.buffer.real_appended
        );
        assert!(with_imagination.buffer.imagined_appended > 0);
    }

    #[test]
    fn adaptation_gate_defers_learning() {
        let env = empty_env();
        let mut model = RuleModel::new(env.schema().clone());
        let mut agent = q_agent();
        let mut detector = Detector::new(DetectorParams { n: 1 });
        let mut controller = AdaptController::new(MixParams::default());
        controller.adaptation_enabled = false;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = env.reset(0);
        for _ in 0..500 {
            let action = agent.act(&state.features(), &mut rng);
            let step = env.step(&state, action, &mut rng).unwrap();
            controller.tick(
                &state.features(),
                action,
                &step.state.features(),
                step.reward,
                step.terminal && !step.timed_out,
                &mut model,
                &mut agent,
                &mut detector,
                &mut rng,
            );
            state = if step.terminal { env.reset(0) } else { step.state };
        }
        assert!(detector.fired(), "empty model cannot predict anything");
        assert!(controller.buffer.is_empty(), "gate holds the buffer closed");
        assert!(model.is_empty(), "model learning is deferred too");
    }
}
