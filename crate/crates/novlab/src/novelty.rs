//! Novelty injection: transforms the environment generator at a configured
//! episode and catalogs eleven exemplar transformations.
//!
//! A novelty is a pair of grid configurations plus an ontology tag placing it
//! along three axes: what it targets (objects vs. actions), whether it is a
//! unary property change or a relational one, and how it shifts the optimal
//! solution length (barrier: longer, delta: unchanged, shortcut: shorter).
//! The wrapped environment switches configs between episodes; nothing in the
//! observation signals the switch to the agent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{
    Color, DoorState, Facing, GridConfig, GridError, GridWorld, Layout, Placement, SymbolicState,
};

#[derive(Debug, Error)]
pub enum NoveltyError {
    #[error("unknown novelty name: {0}")]
    UnknownName(String),
    #[error("pre/post configs are incompatible: {0}")]
    SchemaMismatch(String),
    #[error("injection episode must be at least 1")]
    BadInjectionEpisode,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoveltyTarget {
    Object,
    Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoveltyArity {
    Unary,
    NonUnary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolutionShift {
    /// Optimal solutions are longer post-novelty.
    Barrier,
    /// Optimal solution length is unchanged.
    Delta,
    /// Optimal solutions are shorter post-novelty.
    Shortcut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyTag {
    pub target: NoveltyTarget,
    pub arity: NoveltyArity,
    pub solution_shift: SolutionShift,
}

/// Declarative description of one environment transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltySpec {
    pub name: String,
    /// First episode (1-indexed) that uses the post configuration.
    pub injection_episode: u32,
    pub pre_config: GridConfig,
    pub post_config: GridConfig,
    pub ontology: OntologyTag,
}

impl NoveltySpec {
    pub fn with_injection_episode(mut self, episode: u32) -> Self {
        self.injection_episode = episode;
        self
    }

    /// An identity novelty: pre and post configs are the same.
    pub fn identity(name: &str, config: GridConfig, injection_episode: u32) -> Self {
        NoveltySpec {
            name: name.to_string(),
            injection_episode,
            pre_config: config.clone(),
            post_config: config,
            ontology: OntologyTag {
                target: NoveltyTarget::Object,
                arity: NoveltyArity::Unary,
                solution_shift: SolutionShift::Delta,
            },
        }
    }
}

/// Classification is declared on the spec, not inferred.
pub fn classify(spec: &NoveltySpec) -> OntologyTag {
    spec.ontology
}

/// Environment wrapper that swaps grid generation at the injection episode.
#[derive(Debug, Clone)]
pub struct NoveltyEnv {
    spec: NoveltySpec,
    pre: GridWorld,
    post: GridWorld,
    episode: u32,
}

impl NoveltyEnv {
    pub fn wrap(spec: NoveltySpec) -> Result<NoveltyEnv, NoveltyError> {
        if spec.injection_episode < 1 {
            return Err(NoveltyError::BadInjectionEpisode);
        }
        let pre = GridWorld::new(spec.pre_config.clone())?;
        let post = GridWorld::new(spec.post_config.clone())?;
        if spec.pre_config.width != spec.post_config.width
            || spec.pre_config.height != spec.post_config.height
        {
            return Err(NoveltyError::SchemaMismatch(
                "grid dimensions differ".into(),
            ));
        }
        if pre.schema() != post.schema() {
            return Err(NoveltyError::SchemaMismatch(
                "state feature schemas differ".into(),
            ));
        }
        Ok(NoveltyEnv {
            spec,
            pre,
            post,
            episode: 0,
        })
    }

    pub fn spec(&self) -> &NoveltySpec {
        &self.spec
    }

    /// Starts the next episode and returns its initial state.
    pub fn begin_episode(&mut self, seed: u64) -> SymbolicState {
        self.episode += 1;
        self.active().reset(seed)
    }

    /// Environment for the current episode.
    pub fn active(&self) -> &GridWorld {
        if self.episode >= self.spec.injection_episode {
            &self.post
        } else {
            &self.pre
        }
    }

    pub fn pre_env(&self) -> &GridWorld {
        &self.pre
    }

    pub fn post_env(&self) -> &GridWorld {
        &self.post
    }

    pub fn episode(&self) -> u32 {
        self.episode
    }

    pub fn is_post(&self) -> bool {
        self.episode >= self.spec.injection_episode
    }
}

pub const EXEMPLAR_NAMES: [&str; 11] = [
    "GoalLocationChange",
    "DoorLockToggle",
    "DoorKeyChange",
    "DoorNumKeys",
    "ImperviousToLava",
    "ActionRepetition",
    "ForwardMovementSpeed",
    "ActionRadius",
    "ColorRestriction",
    "Burdening",
    "TransitionDeterminism",
];

const DEFAULT_INJECTION: u32 = 100;

fn tag(target: NoveltyTarget, arity: NoveltyArity, shift: SolutionShift) -> OntologyTag {
    OntologyTag {
        target,
        arity,
        solution_shift: shift,
    }
}

/// Full column of walls at `x` with openings at the listed rows.
fn wall_column(x: i32, height: i32, gaps: &[i32]) -> Vec<Placement> {
    (0..height)
        .filter(|y| !gaps.contains(y))
        .map(|y| Placement::wall(x, y))
        .collect()
}

fn empty_grid(start: (i32, i32), facing: Facing, goal: (i32, i32)) -> GridConfig {
    GridConfig::new(
        8,
        8,
        Layout {
            agent_start: start,
            agent_facing: facing,
            objects: vec![Placement::goal(goal.0, goal.1)],
        },
    )
}

/// Standard 8x8 DoorKey room: a locked door in a wall column, keys on the
/// near side, the goal behind. Keys are placed symmetrically about the door
/// row so that the two key routes cost the same number of actions.
fn doorkey_8x8(keys: Vec<Placement>, door: Placement) -> GridConfig {
    let mut objects = keys;
    let door_x = door.x;
    let door_y = door.y;
    objects.push(door);
    objects.push(Placement::goal(6, 3));
    objects.extend(wall_column(door_x, 8, &[door_y]));
    GridConfig::new(
        8,
        8,
        Layout {
            agent_start: (1, 3),
            agent_facing: Facing::East,
            objects,
        },
    )
}

/// 8x8 maze with a wall row near the start and a lava pool lining the side
/// nearest the goal. Pre-novelty the lava is deadly and the only safe route
/// snakes through both gaps; harmless lava opens a straight crossing.
fn lava_shortcut_maze_8x8() -> GridConfig {
    let mut objects = vec![Placement::goal(7, 7)];
    for x in 0..7 {
        objects.push(Placement::wall(x, 2));
    }
    for x in 1..8 {
        objects.push(Placement::lava(x, 5));
    }
    GridConfig::new(
        8,
        8,
        Layout {
            agent_start: (0, 0),
            agent_facing: Facing::South,
            objects,
        },
    )
}

/// Looks up one of the eleven cataloged exemplar novelties by name.
pub fn exemplar(name: &str) -> Result<NoveltySpec, NoveltyError> {
    let spec = match name {
        "GoalLocationChange" => {
            // Goal moves between two positions the same number of actions
            // away from the start (one turn each).
            let pre = empty_grid((0, 0), Facing::East, (5, 2));
            let post = empty_grid((0, 0), Facing::East, (2, 5));
            NoveltySpec {
                name: name.into(),
                injection_episode: DEFAULT_INJECTION,
                pre_config: pre,
                post_config: post,
                ontology: tag(
                    NoveltyTarget::Object,
                    NoveltyArity::Unary,
                    SolutionShift::Delta,
                ),
            }
        }
        "DoorLockToggle" => {
            // An always-unlocked door becomes locked; the key detour makes
            // the post-novelty solution longer.
            let keys = vec![Placement::key(Color::Yellow, 2, 1)];
            let pre = doorkey_8x8(
                keys.clone(),
                Placement::door(Color::Yellow, 4, 3, DoorState::Closed),
            );
            let post = doorkey_8x8(keys, Placement::door(Color::Yellow, 4, 3, DoorState::Locked));
            NoveltySpec {
                name: name.into(),
                injection_episode: DEFAULT_INJECTION,
                pre_config: pre,
                post_config: post,
                ontology: tag(
                    NoveltyTarget::Object,
                    NoveltyArity::Unary,
                    SolutionShift::Barrier,
                ),
            }
        }
        "DoorKeyChange" => {
            // The door is re-keyed from the yellow key to the blue key; the
            // keys sit at mirror positions so solution length is unchanged.
            let keys = vec![
                Placement::key(Color::Yellow, 2, 1),
                Placement::key(Color::Blue, 2, 5),
            ];
            let mut door = Placement::door(Color::Yellow, 4, 3, DoorState::Locked);
            door.lock_color = Some(Color::Yellow);
            let pre = doorkey_8x8(keys.clone(), door.clone());
            door.lock_color = Some(Color::Blue);
            let post = doorkey_8x8(keys, door);
            NoveltySpec {
                name: name.into(),
                injection_episode: DEFAULT_INJECTION,
                pre_config: pre,
                post_config: post,
                ontology: tag(
                    NoveltyTarget::Object,
                    NoveltyArity::NonUnary,
                    SolutionShift::Delta,
                ),
            }
        }
        "DoorNumKeys" => {
            // Unlocking takes two keys instead of one.
            let keys = vec![
                Placement::key(Color::Yellow, 2, 1),
                Placement::key(Color::Yellow, 2, 5),
            ];
            let mut door = Placement::door(Color::Yellow, 4, 3, DoorState::Locked);
            door.keys_required = Some(1);
            let pre = doorkey_8x8(keys.clone(), door.clone());
            door.keys_required = Some(2);
            let post = doorkey_8x8(keys, door);
            NoveltySpec {
                name: name.into(),
                injection_episode: DEFAULT_INJECTION,
                pre_config: pre,
                post_config: post,
                ontology: tag(
                    NoveltyTarget::Object,
                    NoveltyArity::NonUnary,
                    SolutionShift::Barrier,
                ),
            }
        }
        "ImperviousToLava" => {
            let pre = lava_shortcut_maze_8x8();
            let mut post = lava_shortcut_maze_8x8();
            post.lava_harmful = false;
            NoveltySpec {
                name: name.into(),
                injection_episode: DEFAULT_INJECTION,
                pre_config: pre,
                post_config: post,
                ontology: tag(
                    NoveltyTarget::Object,
                    NoveltyArity::NonUnary,
                    SolutionShift::Shortcut,
                ),
            }
        }
        "ActionRepetition" => {
            // Every action must be issued on two consecutive steps to fire.
            let keys = vec![Placement::key(Color::Yellow, 2, 1)];
            let door = Placement::door(Color::Yellow, 4, 3, DoorState::Locked);
            let pre = doorkey_8x8(keys, door);
            let mut post = pre.clone();
            post.action_repetition = 2;
            NoveltySpec {
                name: name.into(),
                injection_episode: DEFAULT_INJECTION,
                pre_config: pre,
                post_config: post,
                ontology: tag(
                    NoveltyTarget::Action,
                    NoveltyArity::Unary,
                    SolutionShift::Barrier,
                ),
            }
        }
        "ForwardMovementSpeed" | "ForwardMoveSpeed" => {
            // Forward covers two cells instead of one.
            let pre = empty_grid((0, 0), Facing::East, (6, 0));
            let mut post = pre.clone();
            post.forward_step = 2;
            NoveltySpec {
                name: "ForwardMovementSpeed".into(),
                injection_episode: DEFAULT_INJECTION,
                pre_config: pre,
                post_config: post,
                ontology: tag(
                    NoveltyTarget::Action,
                    NoveltyArity::NonUnary,
                    SolutionShift::Shortcut,
                ),
            }
        }
        "ActionRadius" => {
            // Pickup reach grows from one to two cells along the faced
            // direction; the key sits in a walled alcove that is reachable
            // at distance two straight from the main corridor.
            let mut objects = vec![
                Placement::key(Color::Yellow, 3, 5),
                Placement::wall(3, 4),
                Placement::wall(2, 5),
                Placement::wall(3, 6),
                Placement::goal(7, 3),
            ];
            objects.push(Placement::door(Color::Yellow, 6, 3, DoorState::Locked));
            objects.extend(wall_column(6, 8, &[3]));
            let pre = GridConfig::new(
                8,
                8,
                Layout {
                    agent_start: (0, 3),
                    agent_facing: Facing::East,
                    objects,
                },
            );
            let mut post = pre.clone();
            post.action_radius = 2;
            NoveltySpec {
                name: name.into(),
                injection_episode: DEFAULT_INJECTION,
                pre_config: pre,
                post_config: post,
                ontology: tag(
                    NoveltyTarget::Action,
                    NoveltyArity::Unary,
                    SolutionShift::Shortcut,
                ),
            }
        }
        "ColorRestriction" => {
            // Only yellow objects are interactable pre-novelty, only blue
            // post-novelty. Twin key/door routes mirror each other.
            let mut objects = vec![
                Placement::key(Color::Yellow, 2, 1),
                Placement::key(Color::Blue, 2, 5),
                Placement::door(Color::Yellow, 4, 1, DoorState::Locked),
                Placement::door(Color::Blue, 4, 5, DoorState::Locked),
                Placement::goal(7, 3),
            ];
            objects.extend(wall_column(4, 8, &[1, 5]));
            let mut pre = GridConfig::new(
                8,
                8,
                Layout {
                    agent_start: (0, 3),
                    agent_facing: Facing::East,
                    objects,
                },
            );
            pre.color_restriction = Some(Color::Yellow);
            let mut post = pre.clone();
            post.color_restriction = Some(Color::Blue);
            NoveltySpec {
                name: name.into(),
                injection_episode: DEFAULT_INJECTION,
                pre_config: pre,
                post_config: post,
                ontology: tag(
                    NoveltyTarget::Action,
                    NoveltyArity::Unary,
                    SolutionShift::Delta,
                ),
            }
        }
        "Burdening" => {
            // Inventory-dependent speed. The carry leg and the empty legs of
            // the default layout are balanced so the optimum stays equal.
            let mut objects = vec![
                Placement::key(Color::Yellow, 3, 3),
                Placement::door(Color::Yellow, 5, 3, DoorState::Locked),
                Placement::goal(7, 3),
            ];
            objects.extend(wall_column(5, 8, &[3]));
            let pre = GridConfig::new(
                8,
                8,
                Layout {
                    agent_start: (0, 3),
                    agent_facing: Facing::East,
                    objects,
                },
            );
            let mut post = pre.clone();
            post.burdening = true;
            NoveltySpec {
                name: name.into(),
                injection_episode: DEFAULT_INJECTION,
                pre_config: pre,
                post_config: post,
                ontology: tag(
                    NoveltyTarget::Action,
                    NoveltyArity::NonUnary,
                    SolutionShift::Delta,
                ),
            }
        }
        "TransitionDeterminism" => {
            // Forward becomes unreliable: with probability 0.25 it turns.
            let pre = empty_grid((0, 0), Facing::East, (5, 0));
            let mut post = pre.clone();
            post.stochastic_forward_p = 0.75;
            NoveltySpec {
                name: name.into(),
                injection_episode: DEFAULT_INJECTION,
                pre_config: pre,
                post_config: post,
                ontology: tag(
                    NoveltyTarget::Action,
                    NoveltyArity::NonUnary,
                    SolutionShift::Barrier,
                ),
            }
        }
        other => return Err(NoveltyError::UnknownName(other.to_string())),
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::Action;
    use crate::search::{expected_solution_steps, shortest_solution};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unknown_name_is_lookup_error() {
        assert!(matches!(
            exemplar("NoSuchNovelty"),
            Err(NoveltyError::UnknownName(_))
        ));
    }

    #[test]
    fn exemplar_tags_match_the_ontology_grid() {
        let cases = [
            ("GoalLocationChange", NoveltyTarget::Object, NoveltyArity::Unary, SolutionShift::Delta),
            ("DoorLockToggle", NoveltyTarget::Object, NoveltyArity::Unary, SolutionShift::Barrier),
            ("DoorKeyChange", NoveltyTarget::Object, NoveltyArity::NonUnary, SolutionShift::Delta),
            ("DoorNumKeys", NoveltyTarget::Object, NoveltyArity::NonUnary, SolutionShift::Barrier),
            ("ImperviousToLava", NoveltyTarget::Object, NoveltyArity::NonUnary, SolutionShift::Shortcut),
            ("ActionRepetition", NoveltyTarget::Action, NoveltyArity::Unary, SolutionShift::Barrier),
            ("ColorRestriction", NoveltyTarget::Action, NoveltyArity::Unary, SolutionShift::Delta),
            ("ActionRadius", NoveltyTarget::Action, NoveltyArity::Unary, SolutionShift::Shortcut),
            ("TransitionDeterminism", NoveltyTarget::Action, NoveltyArity::NonUnary, SolutionShift::Barrier),
            ("Burdening", NoveltyTarget::Action, NoveltyArity::NonUnary, SolutionShift::Delta),
            ("ForwardMovementSpeed", NoveltyTarget::Action, NoveltyArity::NonUnary, SolutionShift::Shortcut),
        ];
        for (name, target, arity, shift) in cases {
            let spec = exemplar(name).unwrap();
            let tag = classify(&spec);
            assert_eq!(tag.target, target, "{name}");
            assert_eq!(tag.arity, arity, "{name}");
            assert_eq!(tag.solution_shift, shift, "{name}");
        }
    }

    #[test]
    fn forward_move_speed_alias_resolves() {
        let spec = exemplar("ForwardMoveSpeed").unwrap();
        assert_eq!(spec.name, "ForwardMovementSpeed");
        assert_eq!(spec.ontology.solution_shift, SolutionShift::Shortcut);
    }

    #[test]
    fn all_exemplars_wrap_cleanly() {
        for name in EXEMPLAR_NAMES {
            let spec = exemplar(name).unwrap();
            NoveltyEnv::wrap(spec).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn wrapper_switches_at_injection_episode() {
        // DoorKeyChange with injection at episode 5: the yellow key unlocks
        // the door for episodes 1-4, the blue key from episode 5 on.
        let spec = exemplar("DoorKeyChange").unwrap().with_injection_episode(5);
        let mut env = NoveltyEnv::wrap(spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for episode in 1..=6 {
            let mut s = env.begin_episode(0);
            assert_eq!(env.episode(), episode);
            // Hand the agent the yellow key and stand it before the door.
            s.objects[0].location = None;
            s.inventory = Some(0);
            s.agent_location = (3, 3);
            s.agent_facing = Facing::East;
            let out = env.active().step(&s, Action::Toggle, &mut rng).unwrap();
            let unlocked = out.state.objects[2].door_state == Some(DoorState::Closed);
            if episode < 5 {
                assert!(unlocked, "yellow key works before injection");
            } else {
                assert!(!unlocked, "yellow key fails after injection");
            }
        }
    }

    #[test]
    fn injection_at_episode_one_is_post_from_the_start() {
        let spec = exemplar("GoalLocationChange")
            .unwrap()
            .with_injection_episode(1);
        let mut env = NoveltyEnv::wrap(spec.clone()).unwrap();
        env.begin_episode(0);
        assert!(env.is_post());
        assert_eq!(env.active().config(), &spec.post_config);
    }

    #[test]
    fn identity_novelty_is_behaviorally_inert() {
        let base = exemplar("GoalLocationChange").unwrap().pre_config;
        let spec = NoveltySpec::identity("Identity", base.clone(), 3);
        let mut env = NoveltyEnv::wrap(spec).unwrap();
        let plain = GridWorld::new(base).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let mut s = env.begin_episode(0);
            let mut p = plain.reset(0);
            assert_eq!(s, p);
            for _ in 0..20 {
                let action = Action::ALL[rng.gen_range(0..Action::ALL.len())];
                let a = env.active().step(&s, action, &mut rng).unwrap();
                let b = plain.step(&p, action, &mut rng).unwrap();
                assert_eq!(a, b);
                if a.terminal {
                    break;
                }
                s = a.state;
                p = b.state;
            }
        }
    }

    #[test]
    fn wrapper_rejects_mismatched_dimensions() {
        let mut spec = exemplar("GoalLocationChange").unwrap();
        spec.post_config.width = 10;
        assert!(matches!(
            NoveltyEnv::wrap(spec),
            Err(NoveltyError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn doorkeychange_routes_have_equal_length() {
        let spec = exemplar("DoorKeyChange").unwrap();
        let pre = GridWorld::new(spec.pre_config).unwrap();
        let post = GridWorld::new(spec.post_config).unwrap();
        let a = shortest_solution(&pre).expect("pre solvable");
        let b = shortest_solution(&post).expect("post solvable");
        assert_eq!(a, b);
    }

    #[test]
    fn impervious_to_lava_opens_a_shortcut() {
        let spec = exemplar("ImperviousToLava").unwrap();
        let pre = GridWorld::new(spec.pre_config).unwrap();
        let post = GridWorld::new(spec.post_config).unwrap();
        let a = shortest_solution(&pre).expect("pre solvable");
        let b = shortest_solution(&post).expect("post solvable");
        assert!(b < a, "post {b} should beat pre {a}");
    }

    #[test]
    fn transition_determinism_raises_expected_steps() {
        let spec = exemplar("TransitionDeterminism").unwrap();
        let pre = GridWorld::new(spec.pre_config).unwrap();
        let post = GridWorld::new(spec.post_config).unwrap();
        let a = expected_solution_steps(&pre).expect("pre solvable");
        let b = expected_solution_steps(&post).expect("post solvable");
        assert!(b > a + 0.5, "stochastic forward must cost more: {a} vs {b}");
    }
}
