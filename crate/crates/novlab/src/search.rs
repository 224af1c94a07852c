//! Brute-force solution-cost oracles over the full environment state graph.
//!
//! [`shortest_solution`] runs breadth-first search over deterministic
//! dynamics and returns the minimum number of actions from reset to the goal.
//! [`expected_solution_steps`] handles stochastic configurations by solving
//! the stochastic-shortest-path Bellman equation with value iteration over
//! the reachable state closure.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::gridworld::{Action, GridWorld, SymbolicState};

/// State identity for search purposes: everything except the step counter.
/// Time only matters for the timeout, which the searches bound separately.
fn search_key(state: &SymbolicState) -> SymbolicState {
    let mut s = state.clone();
    s.step_count = 0;
    s
}

fn timeless(state: &SymbolicState) -> SymbolicState {
    // Pin the step counter mid-horizon so multi-cell moves cannot trip the
    // timeout while expanding; depth is bounded by the caller instead.
    let mut s = state.clone();
    s.step_count = 0;
    s
}

/// Minimum number of actions needed to reach the goal (a terminal transition
/// with positive reward) from reset, or `None` when the goal is unreachable
/// within the episode step limit. Panics if the environment is stochastic.
pub fn shortest_solution(env: &GridWorld) -> Option<u32> {
    assert!(
        env.config().stochastic_forward_p >= 1.0,
        "BFS requires deterministic dynamics; use expected_solution_steps"
    );
    let depth_cap = env.config().max_steps();
    let start = timeless(&env.reset(0));
    let mut seen: HashSet<SymbolicState> = HashSet::new();
    seen.insert(search_key(&start));
    let mut frontier = VecDeque::new();
    frontier.push_back((start, 0u32));
    while let Some((state, depth)) = frontier.pop_front() {
        if depth >= depth_cap {
            continue;
        }
        for action in Action::ALL {
            let outs = env
                .outcomes(&state, action)
                .expect("expansion from non-terminal state");
            debug_assert_eq!(outs.len(), 1);
            let step = &outs[0].1;
            if step.terminal {
                if step.reward > 0.0 {
                    return Some(depth + 1);
                }
                continue;
            }
            let key = search_key(&step.state);
            if seen.insert(key) {
                frontier.push_back((timeless(&step.state), depth + 1));
            }
        }
    }
    None
}

/// Expected number of actions to reach the goal under the optimal policy,
/// solved by value iteration over the reachable state closure. Dead ends
/// (harmful lava) are treated as absorbing with infinite cost; the optimal
/// policy routes around them. Returns `None` when no policy reaches the goal.
pub fn expected_solution_steps(env: &GridWorld) -> Option<f64> {
    const BIG: f64 = 1e12;
    let start = timeless(&env.reset(0));

    // Reachable closure over all action outcomes.
    let mut index: HashMap<SymbolicState, usize> = HashMap::new();
    let mut states: Vec<SymbolicState> = Vec::new();
    index.insert(search_key(&start), 0);
    states.push(start);
    // (state, action) -> list of (prob, successor index or goal/dead marker)
    #[derive(Clone, Copy)]
    enum Succ {
        Goal,
        Dead,
        State(usize),
    }
    let mut transitions: Vec<Vec<Vec<(f64, Succ)>>> = Vec::new();
    let mut cursor = 0;
    while cursor < states.len() {
        let state = states[cursor].clone();
        let mut per_action = Vec::with_capacity(Action::ALL.len());
        for action in Action::ALL {
            let outs = env
                .outcomes(&state, action)
                .expect("expansion from non-terminal state");
            let mut row = Vec::with_capacity(outs.len());
            for (p, step) in outs {
                if step.terminal {
                    let marker = if step.reward > 0.0 { Succ::Goal } else { Succ::Dead };
                    row.push((p, marker));
                } else {
                    let key = search_key(&step.state);
                    let next = *index.entry(key).or_insert_with(|| {
                        states.push(timeless(&step.state));
                        states.len() - 1
                    });
                    row.push((p, Succ::State(next)));
                }
            }
            per_action.push(row);
        }
        transitions.push(per_action);
        cursor += 1;
    }

    let n = states.len();
    let mut value = vec![BIG; n];
    for _ in 0..100_000 {
        let mut max_change = 0.0f64;
        for i in 0..n {
            let mut best = BIG;
            for row in &transitions[i] {
                let mut cost = 1.0;
                for &(p, succ) in row {
                    cost += p * match succ {
                        Succ::Goal => 0.0,
                        Succ::Dead => BIG,
                        Succ::State(j) => value[j],
                    };
                }
                best = best.min(cost.min(BIG));
            }
            max_change = max_change.max((value[i] - best).abs());
            value[i] = best;
        }
        if max_change < 1e-9 {
            break;
        }
    }
    if value[0] >= BIG * 0.5 {
        None
    } else {
        Some(value[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{Facing, GridConfig, GridWorld, Layout, Placement};

    fn straight_line(goal_x: i32) -> GridConfig {
        GridConfig::new(
            8,
            8,
            Layout {
                agent_start: (0, 0),
                agent_facing: Facing::East,
                objects: vec![Placement::goal(goal_x, 0)],
            },
        )
    }

    #[test]
    fn straight_corridor_cost_matches_distance() {
        let env = GridWorld::new(straight_line(5)).unwrap();
        assert_eq!(shortest_solution(&env), Some(5));
    }

    #[test]
    fn turn_costs_one_action() {
        let cfg = GridConfig::new(
            8,
            8,
            Layout {
                agent_start: (0, 0),
                agent_facing: Facing::East,
                objects: vec![Placement::goal(2, 3)],
            },
        );
        let env = GridWorld::new(cfg).unwrap();
        // 2 east + turn + 3 south.
        assert_eq!(shortest_solution(&env), Some(6));
    }

    #[test]
    fn unreachable_goal_returns_none() {
        let mut cfg = straight_line(7);
        for y in 0..8 {
            cfg.layout.objects.push(Placement::wall(4, y));
        }
        let env = GridWorld::new(cfg).unwrap();
        assert_eq!(shortest_solution(&env), None);
    }

    #[test]
    fn deterministic_expected_steps_equal_bfs() {
        let env = GridWorld::new(straight_line(5)).unwrap();
        let expected = expected_solution_steps(&env).unwrap();
        assert!((expected - 5.0).abs() < 1e-6);
    }

    #[test]
    fn stochastic_forward_strictly_increases_expected_steps() {
        let mut cfg = straight_line(5);
        cfg.stochastic_forward_p = 0.75;
        let env = GridWorld::new(cfg).unwrap();
        let expected = expected_solution_steps(&env).unwrap();
        assert!(expected > 5.5, "expected {expected} to exceed 5.5");
    }
}
