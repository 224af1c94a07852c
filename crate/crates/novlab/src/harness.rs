//! Experiment runner: seeded multi-arm runs over cataloged novelties,
//! structured JSONL logging, the rule-learner convergence assay, and metric
//! aggregation.
//!
//! One run trains an agent on the pre-change environment until its recent
//! returns clear a convergence bar, freezes learning, lets the rule model
//! absorb the frozen policy's trajectory, injects the configured novelty,
//! measures a frozen resilience window, and then hands control to the
//! adaptation controller until the post-change step budget runs out. Arms
//! share seeds: given the same seed, every arm reproduces the same
//! pre-change history bit for bit, so post-change comparisons are paired.
//!
//! Every random draw in a run flows from one seeded generator, which makes
//! logs byte-for-byte reproducible.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AcParams, ActorCriticTables, AgentKind, AnyAgent, QParams, QTable, Transition};
use crate::detect::{Detector, DetectorParams};
use crate::exec;
use crate::gridworld::{Action, GridConfig, GridError, GridWorld};
use crate::imagine::{AdaptController, MixParams};
use crate::metrics::{
    bootstrap_ci, tr_auc, CiSummary, MetricsError, Recovery, RunCurve, EFFICIENCY_THRESHOLD,
};
use crate::novelty::{exemplar, NoveltyEnv, NoveltyError};
use crate::rules::{prediction_accuracy, RuleModel};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("could not read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("could not parse config {path}: {source}")]
    TomlParse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{path}:{line}: bad log line: {source}")]
    LogParse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Novelty(#[from] NoveltyError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pre,
    Post,
}

/// One row of a run's JSONL log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub episode: u32,
    pub phase: Phase,
    #[serde(rename = "return")]
    pub ret: f64,
    pub env_steps_cum: u64,
    pub policy_updates_cum: u64,
    pub detector_fired: bool,
}

/// Detector fire event row for the events stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FireEventLog {
    pub episode: u32,
    pub step_in_episode: u32,
    pub env_steps_cum: u64,
    pub case: String,
    pub rule: Option<u64>,
    pub state_key: String,
}

/// One experiment arm: a named controller parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub name: String,
    #[serde(default)]
    pub mix: MixParams,
}

fn default_arms() -> Vec<ArmConfig> {
    vec![
        ArmConfig {
            name: "baseline".into(),
            mix: MixParams::baseline(),
        },
        ArmConfig {
            name: "worldcloner".into(),
            mix: MixParams::default(),
        },
    ]
}

fn default_agent() -> AgentKind {
    AgentKind::Q
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}
fn default_pre_budget() -> u64 {
    600_000
}
fn default_post_budget() -> u64 {
    150_000
}
fn default_convergence_return() -> f64 {
    0.9
}
fn default_convergence_window() -> u32 {
    20
}
fn default_polish_episodes() -> u32 {
    10
}
fn default_frozen_pre_episodes() -> u32 {
    10
}
fn default_resilience_episodes() -> u32 {
    10
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Catalog name of the injected novelty.
    pub novelty: String,
    #[serde(default = "default_agent")]
    pub agent: AgentKind,
    #[serde(default = "default_arms")]
    pub arms: Vec<ArmConfig>,
    #[serde(default)]
    pub detector: DetectorParams,
    #[serde(default)]
    pub q: QParams,
    #[serde(default)]
    pub ac: AcParams,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_pre_budget")]
    pub pre_novelty_step_budget: u64,
    #[serde(default = "default_post_budget")]
    pub post_novelty_step_budget: u64,
    /// Mean return over the convergence window that ends pre-change training.
    #[serde(default = "default_convergence_return")]
    pub convergence_return: f64,
    #[serde(default = "default_convergence_window")]
    pub convergence_window: u32,
    /// Frozen-policy episodes that let the rule model absorb the converged
    /// trajectory before the detector arms.
    #[serde(default = "default_polish_episodes")]
    pub polish_episodes: u32,
    /// Frozen episodes with the detector armed, before injection.
    #[serde(default = "default_frozen_pre_episodes")]
    pub frozen_pre_episodes: u32,
    /// Frozen post-change episodes measured for resilience before adaptation
    /// is allowed to start.
    #[serde(default = "default_resilience_episodes")]
    pub resilience_episodes: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|source| HarnessError::TomlParse {
                path: path.to_path_buf(),
                source,
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed required".into()));
        }
        if self.pre_novelty_step_budget == 0 || self.post_novelty_step_budget == 0 {
            return Err(HarnessError::Config("step budgets must be positive".into()));
        }
        if self.arms.is_empty() {
            return Err(HarnessError::Config("at least one arm required".into()));
        }
        exemplar(&self.novelty)?;
        Ok(())
    }

    fn build_agent(&self) -> AnyAgent {
        match self.agent {
            AgentKind::Q => AnyAgent::Q(QTable::new(self.q)),
            AgentKind::Ac => AnyAgent::Ac(ActorCriticTables::new(self.ac)),
        }
    }
}

/// Everything produced by one (arm, seed) run.
#[derive(Debug, Clone)]
pub struct SingleRun {
    pub arm: String,
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    pub events: Vec<FireEventLog>,
    pub converged: bool,
    pub rule_model_dump: String,
}

/// Executes one seeded run of one arm.
pub fn run_single(
    config: &ExperimentConfig,
    arm: &ArmConfig,
    seed: u64,
) -> Result<SingleRun, HarnessError> {
    let spec = exemplar(&config.novelty)?;
    let pre_env = GridWorld::new(spec.pre_config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = config.build_agent();
    let mut model = RuleModel::new(pre_env.schema().clone());
    let mut detector = Detector::new(config.detector);
    let mut controller = AdaptController::new(arm.mix);

    let mut records: Vec<EpisodeRecord> = Vec::new();
    let mut events: Vec<FireEventLog> = Vec::new();
    let mut episode: u32 = 0;
    let mut env_steps: u64 = 0;
    let mut policy_updates: u64 = 0;

    // Pre-change training: online learning for both the agent and the rule
    // model, exploration decaying. At episode end the episode's transitions
    // are replayed newest-first, which carries sparse terminal rewards back
    // down the trajectory in a single pass.
    let mut recent: Vec<f64> = Vec::new();
    let mut converged = false;
    while env_steps < config.pre_novelty_step_budget {
        episode += 1;
        let mut state = pre_env.reset(seed);
        let mut episode_return = 0.0;
        let mut trajectory: Vec<Transition> = Vec::new();
        loop {
            let features = state.features();
            let action = agent.act(&features, &mut rng);
            let step = pre_env
                .step(&state, action, &mut rng)
                .expect("episode loop stops on terminal states");
            let effective_terminal = step.terminal && !step.timed_out;
            let next_features = step.state.features();
            model
                .update(
                    &features,
                    action,
                    &next_features,
                    step.reward,
                    effective_terminal,
                )
                .expect("schemas match");
            let transition = Transition {
                state: features,
                action,
                reward: step.reward,
                next: next_features,
                terminal: effective_terminal,
                imagined: false,
            };
            agent.learn_batch(std::slice::from_ref(&transition));
            trajectory.push(transition);
            policy_updates += 1;
            agent.pre_step();
            env_steps += 1;
            episode_return += step.reward;
            if step.terminal || env_steps >= config.pre_novelty_step_budget {
                break;
            }
            state = step.state;
        }
        trajectory.reverse();
        agent.learn_batch(&trajectory);
        policy_updates += trajectory.len() as u64;
        records.push(EpisodeRecord {
            seed,
            episode,
            phase: Phase::Pre,
            ret: episode_return,
            env_steps_cum: env_steps,
            policy_updates_cum: policy_updates,
            detector_fired: false,
        });
        recent.push(episode_return);
        if recent.len() > config.convergence_window as usize {
            recent.remove(0);
        }
        if recent.len() == config.convergence_window as usize {
            let mean: f64 = recent.iter().sum::<f64>() / recent.len() as f64;
            if mean >= config.convergence_return {
                converged = true;
                break;
            }
        }
    }

    if !converged {
        // Excluded from metrics; the log carries only the pre phase.
        return Ok(SingleRun {
            arm: arm.name.clone(),
            seed,
            records,
            events,
            converged: false,
            rule_model_dump: model.to_text(),
        });
    }

    agent.finish_pre_training();

    // From here on the novelty wrapper owns episode generation. Injection
    // lands right after the polish and armed-frozen windows.
    let injection_episode = config.polish_episodes + config.frozen_pre_episodes + 1;
    let mut wrapped = NoveltyEnv::wrap(spec.with_injection_episode(injection_episode))?;
    let mut post_steps: u64 = 0;
    controller.adaptation_enabled = false;
    let mut resilience_left = config.resilience_episodes;

    loop {
        let grid = {
            let state = wrapped.begin_episode(seed);
            (wrapped.active().clone(), state)
        };
        let (active_env, mut state) = grid;
        let wrapper_episode = wrapped.episode();
        let polish = wrapper_episode <= config.polish_episodes;
        let is_post = wrapped.is_post();
        if is_post && resilience_left == 0 {
            controller.adaptation_enabled = true;
        }
        episode += 1;
        let mut episode_return = 0.0;
        let mut step_in_episode: u32 = 0;
        loop {
            let features = state.features();
            let action = agent.act(&features, &mut rng);
            let step = active_env
                .step(&state, action, &mut rng)
                .expect("episode loop stops on terminal states");
            let effective_terminal = step.terminal && !step.timed_out;
            let next_features = step.state.features();
            step_in_episode += 1;
            env_steps += 1;
            if is_post {
                post_steps += 1;
            }
            episode_return += step.reward;

            if polish {
                model
                    .update(
                        &features,
                        action,
                        &next_features,
                        step.reward,
                        effective_terminal,
                    )
                    .expect("schemas match");
            } else {
                let report = controller.tick(
                    &features,
                    action,
                    &next_features,
                    step.reward,
                    effective_terminal,
                    &mut model,
                    &mut agent,
                    &mut detector,
                    &mut rng,
                );
                if report.fired_now {
                    let event = detector.fire_event().expect("fired");
                    events.push(FireEventLog {
                        episode,
                        step_in_episode,
                        env_steps_cum: env_steps,
                        case: format!("{:?}", event.case),
                        rule: event.rule,
                        state_key: event.state_key.clone(),
                    });
                }
            }

            if step.terminal {
                break;
            }
            state = step.state;
        }
        records.push(EpisodeRecord {
            seed,
            episode,
            phase: if is_post { Phase::Post } else { Phase::Pre },
            ret: episode_return,
            env_steps_cum: env_steps,
            policy_updates_cum: policy_updates + controller.policy_updates,
            detector_fired: detector.fired(),
        });
        if is_post && resilience_left > 0 {
            resilience_left -= 1;
        }
        if post_steps >= config.post_novelty_step_budget {
            break;
        }
    }

    Ok(SingleRun {
        arm: arm.name.clone(),
        seed,
        records,
        events,
        converged: true,
        rule_model_dump: model.to_text(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub novelty: String,
    pub arms: Vec<ArmConfig>,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunStatus>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunStatus {
    pub arm: String,
    pub seed: u64,
    pub converged: bool,
    pub episodes: u32,
    pub env_steps: u64,
    pub detector_fired: bool,
    pub log: String,
}

/// Runs every (arm, seed) pair and writes one JSONL log per run, one events
/// stream per run, a rule-model text dump, and a run summary.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    config.validate()?;
    let out_dir = config.output_dir.join(&config.novelty);
    fs::create_dir_all(&out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.clone(),
        source,
    })?;

    let mut jobs = Vec::new();
    for arm in &config.arms {
        for &seed in &config.seeds {
            jobs.push((arm.clone(), seed));
        }
    }
    let results: Vec<Result<SingleRun, HarnessError>> = exec::map_jobs(jobs, |(arm, seed)| {
        run_single(config, &arm, seed)
    });

    let mut statuses = Vec::new();
    for result in results {
        let run = result?;
        let stem = format!("{}_seed{}", run.arm, run.seed);
        let log_path = out_dir.join(format!("{stem}.jsonl"));
        write_jsonl(&log_path, &run.records)?;
        if !run.events.is_empty() {
            write_jsonl(&out_dir.join(format!("{stem}.events.jsonl")), &run.events)?;
        }
        fs::write(out_dir.join(format!("{stem}.rules.txt")), &run.rule_model_dump).map_err(
            |source| HarnessError::Io {
                path: out_dir.clone(),
                source,
            },
        )?;
        statuses.push(RunStatus {
            arm: run.arm.clone(),
            seed: run.seed,
            converged: run.converged,
            episodes: run.records.len() as u32,
            env_steps: run.records.last().map(|r| r.env_steps_cum).unwrap_or(0),
            detector_fired: run.records.iter().any(|r| r.detector_fired),
            log: log_path.to_string_lossy().into_owned(),
        });
    }
    let summary = RunSummary {
        novelty: config.novelty.clone(),
        arms: config.arms.clone(),
        seeds: config.seeds.clone(),
        runs: statuses,
    };
    let summary_json =
        serde_json::to_string_pretty(&summary).expect("summary serialization cannot fail");
    fs::write(out_dir.join("run_summary.json"), summary_json).map_err(|source| {
        HarnessError::Io {
            path: out_dir.clone(),
            source,
        }
    })?;
    Ok(summary)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row).expect("row serialization cannot fail");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(&out).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Trains a rule model under a random policy, measuring 1-step prediction
/// accuracy on fresh random rollouts every `eval_every` steps.
pub fn assay_rule_convergence(
    grid: &GridConfig,
    total_steps: u32,
    eval_every: u32,
    eval_len: u32,
    seed: u64,
) -> Result<Vec<(u64, f64)>, HarnessError> {
    let env = GridWorld::new(grid.clone())?;
    let mut model = RuleModel::new(env.schema().clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_policy = |_s: &crate::gridworld::SymbolicState, r: &mut ChaCha8Rng| {
        Action::ALL[r.gen_range(0..Action::ALL.len())]
    };

    let mut curve = Vec::new();
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0E7A);
    curve.push((
        0,
        prediction_accuracy(&model, &env, random_policy, eval_len, &mut eval_rng),
    ));
    let mut state = env.reset(seed);
    for step in 1..=total_steps {
        let action = random_policy(&state, &mut rng);
        let out = env.step(&state, action, &mut rng).expect("non-terminal");
        model
            .update(
                &state.features(),
                action,
                &out.state.features(),
                out.reward,
                out.terminal && !out.timed_out,
            )
            .expect("schemas match");
        state = if out.terminal {
            env.reset(seed)
        } else {
            out.state
        };
        if step % eval_every == 0 {
            let mut eval_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0E7A ^ (step as u64));
            let acc = prediction_accuracy(&model, &env, random_policy, eval_len, &mut eval_rng);
            curve.push((step as u64, acc));
        }
    }
    Ok(curve)
}

/// Per-seed metric values for one run.
#[derive(Debug, Clone, Serialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub resilience: f64,
    pub asymptotic_adaptive_performance: f64,
    pub adaptive_efficiency: Recovery,
    pub one_shot_adaptive_performance: f64,
    pub update_efficiency: Recovery,
    pub tr_auc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryAggregate {
    pub median: Option<f64>,
    pub mean_of_adapted: Option<f64>,
    pub failed_to_adapt: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmMetrics {
    pub arm: String,
    pub converged_runs: usize,
    pub excluded_unconverged: usize,
    pub seeds: Vec<SeedMetrics>,
    pub resilience: CiSummary,
    pub asymptotic_adaptive_performance: CiSummary,
    pub one_shot_adaptive_performance: CiSummary,
    pub tr_auc: CiSummary,
    pub adaptive_efficiency: RecoveryAggregate,
    pub update_efficiency: RecoveryAggregate,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoveltyMetrics {
    pub novelty: String,
    pub arms: Vec<ArmMetrics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsDocument {
    pub experiments: Vec<NoveltyMetrics>,
}

/// Median over recoveries with failures ranked above every finite value;
/// `None` when the median itself lands on a failure.
fn recovery_aggregate(values: &[Recovery]) -> RecoveryAggregate {
    let adapted: Vec<f64> = values
        .iter()
        .filter_map(|r| r.steps())
        .map(|s| s as f64)
        .collect();
    let failed = values.len() - adapted.len();
    let mean_of_adapted = if adapted.is_empty() {
        None
    } else {
        Some(adapted.iter().sum::<f64>() / adapted.len() as f64)
    };
    let mut all: Vec<f64> = adapted;
    all.extend(std::iter::repeat(f64::INFINITY).take(failed));
    all.sort_by(|a, b| a.partial_cmp(b).expect("ordered"));
    let n = all.len();
    let median = if n == 0 {
        None
    } else {
        let m = if n % 2 == 1 {
            all[n / 2]
        } else if all[n / 2].is_finite() {
            0.5 * (all[n / 2 - 1] + all[n / 2])
        } else {
            all[n / 2 - 1]
        };
        m.is_finite().then_some(m)
    };
    RecoveryAggregate {
        median,
        mean_of_adapted,
        failed_to_adapt: failed,
    }
}

/// Reads one JSONL log into episode records, reporting the line number of
/// any corrupt row.
pub fn read_log(path: &Path) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EpisodeRecord =
            serde_json::from_str(line).map_err(|source| HarnessError::LogParse {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Computes all six metrics for one run curve.
pub fn seed_metrics(curve: &RunCurve, seed: u64) -> Result<SeedMetrics, HarnessError> {
    Ok(SeedMetrics {
        seed,
        resilience: curve.resilience(crate::metrics::RESILIENCE_EPISODES)?,
        asymptotic_adaptive_performance: curve.asymptotic_adaptive_performance()?,
        adaptive_efficiency: curve.adaptive_efficiency(EFFICIENCY_THRESHOLD)?,
        one_shot_adaptive_performance: curve.one_shot_adaptive_performance()?,
        update_efficiency: curve.update_efficiency(EFFICIENCY_THRESHOLD)?,
        tr_auc: tr_auc(&curve.pre_returns(), &curve.post_returns())?,
    })
}

/// Walks an output directory and aggregates metrics per novelty and arm.
/// Runs whose log never reaches the post phase (unconverged) are excluded
/// and counted.
pub fn compute_metrics(dir: &Path) -> Result<MetricsDocument, HarnessError> {
    let mut logs: Vec<PathBuf> = Vec::new();
    collect_logs(dir, &mut logs)?;
    logs.sort();

    // (novelty, arm) -> (seed metric rows, excluded count)
    let mut grouped: BTreeMap<(String, String), (Vec<SeedMetrics>, usize)> = BTreeMap::new();
    for log in &logs {
        let Some((novelty, arm, seed)) = identify_log(log) else {
            continue;
        };
        let records = read_log(log)?;
        if records.is_empty() {
            continue;
        }
        let entry = grouped.entry((novelty, arm)).or_default();
        // Unconverged runs never transition to the post phase.
        if !records.iter().any(|r| matches!(r.phase, Phase::Post)) {
            entry.1 += 1;
            continue;
        }
        let curve = RunCurve::new(records)?;
        entry.0.push(seed_metrics(&curve, seed)?);
    }

    let mut by_novelty: BTreeMap<String, Vec<ArmMetrics>> = BTreeMap::new();
    for ((novelty, arm), (seeds, excluded)) in grouped {
        let summarize = |extract: fn(&SeedMetrics) -> f64| -> CiSummary {
            let values: Vec<f64> = seeds.iter().map(extract).collect();
            bootstrap_ci(&values, 1000, 0xB007).unwrap_or(CiSummary {
                mean: f64::NAN,
                ci_low: f64::NAN,
                ci_high: f64::NAN,
            })
        };
        let adaptive: Vec<Recovery> = seeds.iter().map(|s| s.adaptive_efficiency).collect();
        let updates: Vec<Recovery> = seeds.iter().map(|s| s.update_efficiency).collect();
        let metrics = ArmMetrics {
            arm: arm.clone(),
            converged_runs: seeds.len(),
            excluded_unconverged: excluded,
            resilience: summarize(|s| s.resilience),
            asymptotic_adaptive_performance: summarize(|s| s.asymptotic_adaptive_performance),
            one_shot_adaptive_performance: summarize(|s| s.one_shot_adaptive_performance),
            tr_auc: summarize(|s| s.tr_auc),
            adaptive_efficiency: recovery_aggregate(&adaptive),
            update_efficiency: recovery_aggregate(&updates),
            seeds,
        };
        by_novelty.entry(novelty).or_default().push(metrics);
    }

    Ok(MetricsDocument {
        experiments: by_novelty
            .into_iter()
            .map(|(novelty, arms)| NoveltyMetrics { novelty, arms })
            .collect(),
    })
}

fn collect_logs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let entries = fs::read_dir(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| HarnessError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_dir() {
            collect_logs(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "jsonl")
            && !path
                .file_name()
                .is_some_and(|n| n.to_string_lossy().ends_with(".events.jsonl"))
        {
            out.push(path);
        }
    }
    Ok(())
}

/// Parses `<out>/<novelty>/<arm>_seed<seed>.jsonl`.
fn identify_log(path: &Path) -> Option<(String, String, u64)> {
    let stem = path.file_stem()?.to_string_lossy().into_owned();
    let (arm, seed_part) = stem.rsplit_once("_seed")?;
    let seed: u64 = seed_part.parse().ok()?;
    let novelty = path.parent()?.file_name()?.to_string_lossy().into_owned();
    Some((novelty, arm.to_string(), seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_parse_from_minimal_toml() {
        let config: ExperimentConfig = toml::from_str("novelty = \"DoorKeyChange\"").unwrap();
        assert_eq!(config.agent, AgentKind::Q);
        assert_eq!(config.arms.len(), 2);
        assert_eq!(config.arms[0].mix.imagined_fraction, 0.0);
        assert_eq!(config.arms[1].mix.imagined_fraction, 0.4);
        assert_eq!(config.detector.n, 2);
        assert_eq!(config.seeds.len(), 5);
        config.validate().unwrap();
    }

    #[test]
    fn unknown_novelty_fails_validation() {
        let config: ExperimentConfig = toml::from_str("novelty = \"NoSuchNovelty\"").unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn episode_record_serializes_with_the_return_field_name() {
        let record = EpisodeRecord {
            seed: 3,
            episode: 7,
            phase: Phase::Post,
            ret: 0.5,
            env_steps_cum: 100,
            policy_updates_cum: 10,
            detector_fired: true,
        };
        let json = serde_json::to_string(&record).unwrap();
        assert!(json.contains("\"return\":0.5"));
        assert!(json.contains("\"phase\":\"post\""));
        let parsed: EpisodeRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, record);
    }

    #[test]
    fn log_parse_errors_carry_line_numbers() {
        let dir = std::env::temp_dir().join(format!("novlab-log-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.jsonl");
        fs::write(&path, "{\"seed\":0,\"episode\":1,\"phase\":\"pre\",\"return\":0.1,\"env_steps_cum\":1,\"policy_updates_cum\":1,\"detector_fired\":false}\nnot json\n").unwrap();
        let err = read_log(&path).unwrap_err();
        match err {
            HarnessError::LogParse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn assay_starts_at_zero_accuracy() {
        let spec = exemplar("GoalLocationChange").unwrap();
        let curve = assay_rule_convergence(&spec.pre_config, 200, 100, 50, 7).unwrap();
        assert_eq!(curve[0], (0, 0.0));
        assert_eq!(curve.len(), 3);
        assert!(curve[2].1 > 0.0, "some transitions learned by step 200");
    }

    #[test]
    fn identify_log_parses_the_layout() {
        let path = Path::new("runs/DoorKeyChange/worldcloner_seed42.jsonl");
        let (novelty, arm, seed) = identify_log(path).unwrap();
        assert_eq!(novelty, "DoorKeyChange");
        assert_eq!(arm, "worldcloner");
        assert_eq!(seed, 42);
    }
}
