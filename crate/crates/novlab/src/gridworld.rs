//! Deterministic-by-default discrete gridworld with keys, doors, lava, walls,
//! and a goal.
//!
//! The environment exposes a feature-structured symbolic state and a sparse
//! reward: entering the goal cell ends the episode with reward
//! `1 - t / (h*w*10)`, everything else pays zero. Grid bounds act as implicit
//! walls; explicit `Wall` objects are for interior structure.
//!
//! A handful of dynamics knobs on [`GridConfig`] (forward step size, action
//! repetition, pickup radius, color restriction, burdening, stochastic
//! forward) exist so that environment transformations can be expressed as
//! plain config swaps.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureDef, FeatureKind, FeatureSchema, FeatureValue, StateVec};

pub const N_ACTIONS: usize = 6;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid configuration: {0}")]
    Config(String),
    #[error("step called on a terminal state")]
    StepOnTerminal,
    #[error("state does not belong to this environment: {0}")]
    ForeignState(String),
    #[error("state parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    TurnLeft,
    TurnRight,
    Forward,
    Pickup,
    Drop,
    Toggle,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [
        Action::TurnLeft,
        Action::TurnRight,
        Action::Forward,
        Action::Pickup,
        Action::Drop,
        Action::Toggle,
    ];

    pub fn index(self) -> usize {
        match self {
            Action::TurnLeft => 0,
            Action::TurnRight => 1,
            Action::Forward => 2,
            Action::Pickup => 3,
            Action::Drop => 4,
            Action::Toggle => 5,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Facing {
    North,
    East,
    South,
    West,
}

impl Facing {
    pub fn delta(self) -> (i32, i32) {
        match self {
            Facing::North => (0, -1),
            Facing::East => (1, 0),
            Facing::South => (0, 1),
            Facing::West => (-1, 0),
        }
    }

    pub fn left(self) -> Facing {
        match self {
            Facing::North => Facing::West,
            Facing::West => Facing::South,
            Facing::South => Facing::East,
            Facing::East => Facing::North,
        }
    }

    pub fn right(self) -> Facing {
        match self {
            Facing::North => Facing::East,
            Facing::East => Facing::South,
            Facing::South => Facing::West,
            Facing::West => Facing::North,
        }
    }

    fn code(self) -> u32 {
        match self {
            Facing::North => 0,
            Facing::East => 1,
            Facing::South => 2,
            Facing::West => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    Red,
    Green,
    Blue,
    Purple,
    Yellow,
    Grey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectKind {
    Key,
    Door,
    Wall,
    Lava,
    Goal,
    Ball,
    Box,
}

impl ObjectKind {
    fn has_color(self) -> bool {
        matches!(
            self,
            ObjectKind::Key | ObjectKind::Door | ObjectKind::Ball | ObjectKind::Box
        )
    }

    fn portable(self) -> bool {
        matches!(self, ObjectKind::Key | ObjectKind::Ball | ObjectKind::Box)
    }

    /// Goal and lava permit agent overlap; everything else blocks movement.
    fn overlap_permitted(self) -> bool {
        matches!(self, ObjectKind::Goal | ObjectKind::Lava)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DoorState {
    Locked,
    Closed,
    Open,
}

impl DoorState {
    fn code(self) -> u32 {
        match self {
            DoorState::Locked => 0,
            DoorState::Closed => 1,
            DoorState::Open => 2,
        }
    }
}

/// One object in the world. `location` is `None` while the object is held
/// (or consumed); doors carry a `door_state` and a remaining-unlock count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub kind: ObjectKind,
    pub color: Option<Color>,
    pub location: Option<(i32, i32)>,
    pub door_state: Option<DoorState>,
    pub keys_remaining: Option<u32>,
}

/// Object placement in a layout description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub kind: ObjectKind,
    #[serde(default)]
    pub color: Option<Color>,
    pub x: i32,
    pub y: i32,
    /// Doors only: initial state (defaults to Locked).
    #[serde(default)]
    pub door_state: Option<DoorState>,
    /// Doors only: key color that unlocks (defaults to the door's color).
    #[serde(default)]
    pub lock_color: Option<Color>,
    /// Doors only: number of keys needed to unlock (defaults to 1).
    #[serde(default)]
    pub keys_required: Option<u32>,
}

impl Placement {
    pub fn new(kind: ObjectKind, color: Option<Color>, x: i32, y: i32) -> Self {
        Self {
            kind,
            color,
            x,
            y,
            door_state: None,
            lock_color: None,
            keys_required: None,
        }
    }

    pub fn wall(x: i32, y: i32) -> Self {
        Self::new(ObjectKind::Wall, None, x, y)
    }

    pub fn lava(x: i32, y: i32) -> Self {
        Self::new(ObjectKind::Lava, None, x, y)
    }

    pub fn goal(x: i32, y: i32) -> Self {
        Self::new(ObjectKind::Goal, None, x, y)
    }

    pub fn key(color: Color, x: i32, y: i32) -> Self {
        Self::new(ObjectKind::Key, Some(color), x, y)
    }

    pub fn door(color: Color, x: i32, y: i32, state: DoorState) -> Self {
        let mut p = Self::new(ObjectKind::Door, Some(color), x, y);
        p.door_state = Some(state);
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub agent_start: (i32, i32),
    pub agent_facing: Facing,
    pub objects: Vec<Placement>,
}

fn default_forward_p() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: i32,
    pub height: i32,
    pub layout: Layout,
    /// Episode step limit. Defaults to `h*w*10` when absent.
    #[serde(default)]
    pub max_steps: Option<u32>,
    /// Probability that Forward acts as commanded; with probability `1-p`
    /// the move is replaced by a uniformly random turn.
    #[serde(default = "default_forward_p")]
    pub stochastic_forward_p: f64,
    /// Entering lava ends the episode with zero reward when true.
    #[serde(default = "default_true")]
    pub lava_harmful: bool,
    /// Cells traveled per effective Forward.
    #[serde(default = "default_one")]
    pub forward_step: u32,
    /// Consecutive issues of the same action required before it takes effect.
    #[serde(default = "default_one")]
    pub action_repetition: u32,
    /// Pickup reach along the faced direction, in cells.
    #[serde(default = "default_one")]
    pub action_radius: u32,
    /// When set, only objects of this color can be picked up or toggled.
    #[serde(default)]
    pub color_restriction: Option<Color>,
    /// Inventory-dependent speed: empty inventory doubles Forward distance,
    /// a held item halves it (two Forward issues per cell).
    #[serde(default)]
    pub burdening: bool,
}

impl GridConfig {
    pub fn new(width: i32, height: i32, layout: Layout) -> Self {
        Self {
            width,
            height,
            layout,
            max_steps: None,
            stochastic_forward_p: 1.0,
            lava_harmful: true,
            forward_step: 1,
            action_repetition: 1,
            action_radius: 1,
            color_restriction: None,
            burdening: false,
        }
    }

    pub fn max_steps(&self) -> u32 {
        self.max_steps
            .unwrap_or((self.height * self.width * 10) as u32)
    }

    /// Reward horizon used by the goal reward `1 - t / (h*w*10)`.
    pub fn reward_horizon(&self) -> f64 {
        (self.height * self.width * 10) as f64
    }
}

/// Full symbolic environment state. `step_count`, `last_action`, and
/// `action_run` are episode bookkeeping; the feature projection used by the
/// rule model and the agents omits them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolicState {
    pub agent_location: (i32, i32),
    pub agent_facing: Facing,
    /// Index into `objects` of the held object, if any.
    pub inventory: Option<usize>,
    pub objects: Vec<ObjectRecord>,
    pub step_count: u32,
    pub last_action: Option<Action>,
    pub action_run: u32,
}

impl SymbolicState {
    /// Feature projection shared by the rule model, detector, and agents.
    /// Held or consumed objects report location (-1, -1).
    pub fn features(&self) -> StateVec {
        let mut v = Vec::with_capacity(4 + self.objects.len() * 2);
        v.push(FeatureValue::Int(self.agent_location.0 as i64));
        v.push(FeatureValue::Int(self.agent_location.1 as i64));
        v.push(FeatureValue::Cat(self.agent_facing.code()));
        let inv = match self.inventory {
            None => 0,
            Some(i) => (i + 1) as u32,
        };
        v.push(FeatureValue::Cat(inv));
        for obj in &self.objects {
            let (x, y) = obj.location.unwrap_or((-1, -1));
            v.push(FeatureValue::Int(x as i64));
            v.push(FeatureValue::Int(y as i64));
            if let Some(ds) = obj.door_state {
                v.push(FeatureValue::Cat(ds.code()));
            }
        }
        StateVec(v)
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: SymbolicState,
    pub reward: f64,
    pub terminal: bool,
    /// True when the episode ended by hitting the step limit rather than by
    /// reaching a terminal cell. Consumers that bootstrap values or learn
    /// transition rules should treat such endings as truncation.
    pub timed_out: bool,
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    config: GridConfig,
    schema: FeatureSchema,
}

impl GridWorld {
    pub fn new(config: GridConfig) -> Result<Self, GridError> {
        validate_config(&config)?;
        let schema = build_schema(&config);
        Ok(Self { config, schema })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    /// Initial state for an episode. Layouts are fully specified, so reset is
    /// deterministic; the seed parameter exists for interface symmetry with
    /// generators that randomize placement.
    pub fn reset(&self, _seed: u64) -> SymbolicState {
        let objects = self
            .config
            .layout
            .objects
            .iter()
            .map(|p| ObjectRecord {
                kind: p.kind,
                color: if p.kind.has_color() { p.color } else { None },
                location: Some((p.x, p.y)),
                door_state: if p.kind == ObjectKind::Door {
                    Some(p.door_state.unwrap_or(DoorState::Locked))
                } else {
                    None
                },
                keys_remaining: if p.kind == ObjectKind::Door {
                    Some(p.keys_required.unwrap_or(1))
                } else {
                    None
                },
            })
            .collect();
        SymbolicState {
            agent_location: self.config.layout.agent_start,
            agent_facing: self.config.layout.agent_facing,
            inventory: None,
            objects,
            step_count: 0,
            last_action: None,
            action_run: 0,
        }
    }

    pub fn is_terminal(&self, state: &SymbolicState) -> bool {
        if state.step_count >= self.config.max_steps() {
            return true;
        }
        self.cell_ends_episode(state, state.agent_location)
    }

    fn cell_ends_episode(&self, state: &SymbolicState, cell: (i32, i32)) -> bool {
        state.objects.iter().any(|o| {
            o.location == Some(cell)
                && match o.kind {
                    ObjectKind::Goal => true,
                    ObjectKind::Lava => self.config.lava_harmful,
                    _ => false,
                }
        })
    }

    fn goal_at(&self, state: &SymbolicState, cell: (i32, i32)) -> bool {
        state
            .objects
            .iter()
            .any(|o| o.kind == ObjectKind::Goal && o.location == Some(cell))
    }

    fn in_bounds(&self, (x, y): (i32, i32)) -> bool {
        x >= 0 && x < self.config.width && y >= 0 && y < self.config.height
    }

    fn blocking_object(&self, state: &SymbolicState, cell: (i32, i32)) -> Option<usize> {
        state.objects.iter().position(|o| {
            o.location == Some(cell)
                && !o.kind.overlap_permitted()
                && !(o.kind == ObjectKind::Door && o.door_state == Some(DoorState::Open))
        })
    }

    fn passable(&self, state: &SymbolicState, cell: (i32, i32)) -> bool {
        self.in_bounds(cell) && self.blocking_object(state, cell).is_none()
    }

    fn color_allowed(&self, color: Option<Color>) -> bool {
        match (self.config.color_restriction, color) {
            (Some(allowed), Some(c)) => allowed == c,
            (Some(_), None) => false,
            (None, _) => true,
        }
    }

    /// Enumerates the distribution over next steps for `(state, action)`.
    /// Deterministic configurations yield a single outcome with probability 1.
    pub fn outcomes(
        &self,
        state: &SymbolicState,
        action: Action,
    ) -> Result<Vec<(f64, Step)>, GridError> {
        if self.is_terminal(state) {
            return Err(GridError::StepOnTerminal);
        }
        let mut base = state.clone();
        base.step_count += 1;

        // Action-repetition gate: the action is effective only once it has
        // been issued on `needed` consecutive steps.
        let run = if state.last_action == Some(action) {
            state.action_run + 1
        } else {
            1
        };
        let mut needed = self.config.action_repetition.max(1);
        if self.config.burdening && action == Action::Forward && state.inventory.is_some() {
            needed = needed.max(2);
        }
        let fires = run >= needed;
        base.last_action = Some(action);
        base.action_run = if fires { 0 } else { run };

        if !fires {
            return Ok(vec![(1.0, self.finish(base, 0.0))]);
        }

        let p = self.config.stochastic_forward_p;
        if action == Action::Forward && p < 1.0 {
            let mut outs = Vec::with_capacity(3);
            if p > 0.0 {
                outs.push((p, self.forward(base.clone())));
            }
            let q = (1.0 - p) / 2.0;
            let mut left = base.clone();
            left.agent_facing = left.agent_facing.left();
            outs.push((q, self.finish(left, 0.0)));
            let mut right = base;
            right.agent_facing = right.agent_facing.right();
            outs.push((q, self.finish(right, 0.0)));
            return Ok(outs);
        }

        let step = match action {
            Action::TurnLeft => {
                base.agent_facing = base.agent_facing.left();
                self.finish(base, 0.0)
            }
            Action::TurnRight => {
                base.agent_facing = base.agent_facing.right();
                self.finish(base, 0.0)
            }
            Action::Forward => self.forward(base),
            Action::Pickup => {
                self.pickup(&mut base);
                self.finish(base, 0.0)
            }
            Action::Drop => {
                self.drop_held(&mut base);
                self.finish(base, 0.0)
            }
            Action::Toggle => {
                self.toggle(&mut base);
                self.finish(base, 0.0)
            }
        };
        Ok(vec![(1.0, step)])
    }

    /// Samples one step. Consumes randomness only when the configuration is
    /// stochastic, so deterministic runs stay bit-reproducible.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &SymbolicState,
        action: Action,
        rng: &mut R,
    ) -> Result<Step, GridError> {
        let outs = self.outcomes(state, action)?;
        if outs.len() == 1 {
            return Ok(outs.into_iter().next().unwrap().1);
        }
        let draw: f64 = rng.gen();
        let mut acc = 0.0;
        for (p, step) in &outs {
            acc += p;
            if draw < acc {
                return Ok(step.clone());
            }
        }
        Ok(outs.into_iter().last().unwrap().1)
    }

    fn forward(&self, mut state: SymbolicState) -> Step {
        let mut distance = self.config.forward_step.max(1);
        if self.config.burdening && state.inventory.is_none() {
            distance = distance.max(2);
        }
        let (dx, dy) = state.agent_facing.delta();
        let mut reward = 0.0;
        let mut terminal = false;
        for _ in 0..distance {
            let target = (state.agent_location.0 + dx, state.agent_location.1 + dy);
            if !self.passable(&state, target) {
                break;
            }
            state.agent_location = target;
            if self.goal_at(&state, target) {
                reward = 1.0 - state.step_count as f64 / self.config.reward_horizon();
                terminal = true;
                break;
            }
            if self.config.lava_harmful && self.cell_ends_episode(&state, target) {
                terminal = true;
                break;
            }
        }
        let mut step = self.finish(state, reward);
        step.terminal = step.terminal || terminal;
        step
    }

    fn pickup(&self, state: &mut SymbolicState) {
        if state.inventory.is_some() {
            return;
        }
        let (dx, dy) = state.agent_facing.delta();
        for dist in 1..=self.config.action_radius.max(1) {
            let cell = (
                state.agent_location.0 + dx * dist as i32,
                state.agent_location.1 + dy * dist as i32,
            );
            if !self.in_bounds(cell) {
                return;
            }
            let hit = state
                .objects
                .iter()
                .position(|o| o.location == Some(cell) && o.kind.portable());
            if let Some(idx) = hit {
                if self.color_allowed(state.objects[idx].color) {
                    state.objects[idx].location = None;
                    state.inventory = Some(idx);
                }
                return;
            }
        }
    }

    fn drop_held(&self, state: &mut SymbolicState) {
        let Some(held) = state.inventory else {
            return;
        };
        let (dx, dy) = state.agent_facing.delta();
        let cell = (state.agent_location.0 + dx, state.agent_location.1 + dy);
        if !self.in_bounds(cell) {
            return;
        }
        let occupied = state.objects.iter().any(|o| o.location == Some(cell));
        if occupied {
            return;
        }
        state.objects[held].location = Some(cell);
        state.inventory = None;
    }

    fn toggle(&self, state: &mut SymbolicState) {
        let (dx, dy) = state.agent_facing.delta();
        let cell = (state.agent_location.0 + dx, state.agent_location.1 + dy);
        let Some(door_idx) = state
            .objects
            .iter()
            .position(|o| o.kind == ObjectKind::Door && o.location == Some(cell))
        else {
            return;
        };
        if !self.color_allowed(state.objects[door_idx].color) {
            return;
        }
        match state.objects[door_idx].door_state {
            Some(DoorState::Locked) => {
                let Some(held) = state.inventory else {
                    return;
                };
                let lock_color = self.lock_color(door_idx);
                let key = &state.objects[held];
                if key.kind != ObjectKind::Key || key.color != lock_color {
                    return;
                }
                if !self.color_allowed(key.color) {
                    return;
                }
                // Unlocking consumes the key; the door opens to Closed.
                state.inventory = None;
                let remaining = state.objects[door_idx].keys_remaining.unwrap_or(1);
                let remaining = remaining.saturating_sub(1);
                state.objects[door_idx].keys_remaining = Some(remaining);
                if remaining == 0 {
                    state.objects[door_idx].door_state = Some(DoorState::Closed);
                }
            }
            Some(DoorState::Closed) => {
                state.objects[door_idx].door_state = Some(DoorState::Open);
            }
            Some(DoorState::Open) => {
                state.objects[door_idx].door_state = Some(DoorState::Closed);
            }
            None => {}
        }
    }

    fn lock_color(&self, door_idx: usize) -> Option<Color> {
        let placement = &self.config.layout.objects[door_idx];
        placement.lock_color.or(placement.color)
    }

    fn finish(&self, state: SymbolicState, reward: f64) -> Step {
        let timed_out = state.step_count >= self.config.max_steps();
        let terminal = timed_out || self.cell_ends_episode(&state, state.agent_location);
        Step {
            state,
            reward,
            terminal,
            timed_out: timed_out && reward == 0.0,
        }
    }
}

fn validate_config(config: &GridConfig) -> Result<(), GridError> {
    if config.width < 3 || config.height < 3 {
        return Err(GridError::Config(format!(
            "grid must be at least 3x3, got {}x{}",
            config.width, config.height
        )));
    }
    if config.max_steps() == 0 {
        return Err(GridError::Config("max_steps must be positive".into()));
    }
    if !(0.0..=1.0).contains(&config.stochastic_forward_p) {
        return Err(GridError::Config(
            "stochastic_forward_p must lie in [0,1]".into(),
        ));
    }
    let in_bounds = |x: i32, y: i32| x >= 0 && x < config.width && y >= 0 && y < config.height;
    let (ax, ay) = config.layout.agent_start;
    if !in_bounds(ax, ay) {
        return Err(GridError::Config("agent start out of bounds".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for p in &config.layout.objects {
        if !in_bounds(p.x, p.y) {
            return Err(GridError::Config(format!(
                "object at ({}, {}) out of bounds",
                p.x, p.y
            )));
        }
        if p.kind.has_color() && p.color.is_none() {
            return Err(GridError::Config(format!(
                "{:?} at ({}, {}) needs a color",
                p.kind, p.x, p.y
            )));
        }
        if !p.kind.overlap_permitted() && !seen.insert((p.x, p.y)) {
            return Err(GridError::Config(format!(
                "overlapping solid objects at ({}, {})",
                p.x, p.y
            )));
        }
        if !p.kind.overlap_permitted() && (p.x, p.y) == config.layout.agent_start {
            return Err(GridError::Config(
                "solid object placed on the agent start cell".into(),
            ));
        }
    }
    Ok(())
}

fn build_schema(config: &GridConfig) -> FeatureSchema {
    let mut features = vec![
        FeatureDef {
            name: "agent_x".into(),
            kind: FeatureKind::Ordered,
        },
        FeatureDef {
            name: "agent_y".into(),
            kind: FeatureKind::Ordered,
        },
        FeatureDef {
            name: "agent_facing".into(),
            kind: FeatureKind::Categorical,
        },
        FeatureDef {
            name: "inventory".into(),
            kind: FeatureKind::Categorical,
        },
    ];
    for (i, p) in config.layout.objects.iter().enumerate() {
        let tag = match p.color {
            Some(c) => format!("{:?}_{:?}{}", p.kind, c, i).to_lowercase(),
            None => format!("{:?}{}", p.kind, i).to_lowercase(),
        };
        features.push(FeatureDef {
            name: format!("{tag}_x"),
            kind: FeatureKind::Ordered,
        });
        features.push(FeatureDef {
            name: format!("{tag}_y"),
            kind: FeatureKind::Ordered,
        });
        if p.kind == ObjectKind::Door {
            features.push(FeatureDef {
                name: format!("{tag}_state"),
                kind: FeatureKind::Categorical,
            });
        }
    }
    FeatureSchema::new(features)
}

/// Canonical byte representation of a state: injective over distinct states
/// and stable across runs and platforms.
pub fn serialize_state(state: &SymbolicState) -> String {
    serde_json::to_string(state).expect("state serialization cannot fail")
}

/// Inverse of [`serialize_state`].
pub fn parse_state(text: &str) -> Result<SymbolicState, GridError> {
    Ok(serde_json::from_str(text)?)
}
