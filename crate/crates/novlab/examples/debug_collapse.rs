//! Temporary diagnostic: replicate a lava-shortcut run and watch the
//! Q-values of the ridge entry (forward into lava at (7,4) facing south)
//! and the start state across the post-change phase.

use novlab::agent::{AnyAgent, QParams, QTable, Transition};
use novlab::detect::{Detector, DetectorParams};
use novlab::gridworld::{Action, GridWorld};
use novlab::imagine::{AdaptController, MixParams};
use novlab::novelty::{exemplar, NoveltyEnv};
use novlab::rules::RuleModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let spec = exemplar("ImperviousToLava").unwrap();
    let pre_env = GridWorld::new(spec.pre_config.clone()).unwrap();
    let seed = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = AnyAgent::Q(QTable::new(QParams {
        alpha: 0.5,
        ..QParams::default()
    }));
    let mut model = RuleModel::new(pre_env.schema().clone());
    let mut detector = Detector::new(DetectorParams::default());
    let mut controller = AdaptController::new(MixParams::baseline());

    // Pre-change training identical to the harness.
    let mut recent: Vec<f64> = Vec::new();
    let mut env_steps: u64 = 0;
    let mut converged = false;
    while env_steps < 600_000 && !converged {
        let mut state = pre_env.reset(seed);
        let mut ret = 0.0;
        let mut traj = Vec::new();
        loop {
            let f = state.features();
            let a = agent.act(&f, &mut rng);
            let step = pre_env.step(&state, a, &mut rng).unwrap();
            let term = step.terminal && !step.timed_out;
            let nf = step.state.features();
            model.update(&f, a, &nf, step.reward, term).unwrap();
            let tr = Transition {
                state: f,
                action: a,
                reward: step.reward,
                next: nf,
                terminal: term,
                imagined: false,
            };
            agent.learn_batch(std::slice::from_ref(&tr));
            traj.push(tr);
            agent.pre_step();
            env_steps += 1;
            ret += step.reward;
            if step.terminal || env_steps >= 600_000 {
                break;
            }
            state = step.state;
        }
        traj.reverse();
        agent.learn_batch(&traj);
        recent.push(ret);
        if recent.len() > 20 {
            recent.remove(0);
        }
        if recent.len() == 20 && recent.iter().sum::<f64>() / 20.0 >= 0.9 {
            converged = true;
        }
    }
    println!("converged after {env_steps} steps");
    agent.finish_pre_training();

    let mut wrapped = NoveltyEnv::wrap(spec.with_injection_episode(21)).unwrap();
    controller.adaptation_enabled = false;
    let mut resilience_left = 10u32;
    let mut post_ep = 0u32;
    let mut post_steps = 0u64;

    loop {
        let mut state = wrapped.begin_episode(seed);
        let env = wrapped.active().clone();
        let polish = wrapped.episode() <= 10;
        let is_post = wrapped.is_post();
        if is_post && resilience_left == 0 {
            controller.adaptation_enabled = true;
        }
        if is_post {
            post_ep += 1;
        }
        let mut ret = 0.0;
        let mut steps = 0u32;
        loop {
            let f = state.features();
            let a = agent.act(&f, &mut rng);
            let step = env.step(&state, a, &mut rng).unwrap();
            let term = step.terminal && !step.timed_out;
            let nf = step.state.features();
            steps += 1;
            if is_post {
                post_steps += 1;
            }
            ret += step.reward;
            if polish {
                model.update(&f, a, &nf, step.reward, term).unwrap();
            } else {
                controller.tick(
                    &f, a, &nf, step.reward, term, &mut model, &mut agent, &mut detector,
                    &mut rng,
                );
            }
            if step.terminal {
                break;
            }
            state = step.state;
        }
        if is_post && resilience_left > 0 {
            resilience_left -= 1;
        }

        if is_post {
            // Spy on key table entries.
            let start = env.reset(seed);
            let start_q = match &agent {
                AnyAgent::Q(q) => q.q(&start.features()),
                _ => unreachable!(),
            };
            // The lava-entry ridge state: agent at (7,4) facing south.
            let mut ridge = env.reset(seed);
            ridge.agent_location = (7, 4);
            ridge.agent_facing = novlab::gridworld::Facing::South;
            let ridge_q = match &agent {
                AnyAgent::Q(q) => q.q(&ridge.features()),
                _ => unreachable!(),
            };
            let table_len = match &agent {
                AnyAgent::Q(q) => q.table_len(),
                _ => 0,
            };
            if post_ep % 25 == 0 || (1190..1260).contains(&post_ep) {
                println!(
                    "ep {post_ep:5} ret {ret:5.3} len {steps:4} fired {} | start_q {:?} | ridge_fwd {:.3} | table {table_len}",
                    detector.fired(),
                    start_q.map(|v| (v * 1000.0).round() / 1000.0),
                    ridge_q[Action::Forward.index()],
                );
            }
        }
        if post_steps >= 900_000 {
            break;
        }
    }
}
