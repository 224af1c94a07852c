//! Adaptation metrics over per-episode logs.
//!
//! A run's log is an ordered list of episode records split into a pre-change
//! phase and a post-change phase. The metric suite reads:
//!
//! - *resilience*: maximum smoothed pre-change return minus the mean return
//!   over the first `k` post-change episodes played with adaptation held off;
//! - *asymptotic adaptive performance*: the final smoothed post-change
//!   return;
//! - *adaptive efficiency*: real environment steps from injection until the
//!   smoothed post-change return first reaches a threshold fraction of the
//!   asymptote (a run that never gets there reports `FailedToAdapt`);
//! - *one-shot adaptive performance*: the first post-change episode return;
//! - *update efficiency*: policy updates spent over the adaptive-efficiency
//!   span;
//! - *transfer AUC*: `((max source return) + (mean target return)) / 2`.
//!
//! Returns are smoothed with a trailing 10-episode moving average throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{EpisodeRecord, Phase};

/// Episodes in every moving-average window.
pub const SMOOTHING_WINDOW: usize = 10;

/// Default number of frozen post-change episodes feeding resilience.
pub const RESILIENCE_EPISODES: usize = 10;

/// Default threshold fraction of the asymptote for adaptive efficiency.
pub const EFFICIENCY_THRESHOLD: f64 = 0.95;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("the run log is empty")]
    EmptyLog,
    #[error("episodes out of order at index {0}")]
    EpisodeOrder(usize),
    #[error("cumulative counters decrease at index {0}")]
    CounterOrder(usize),
    #[error("phase flips back to pre at index {0}")]
    PhaseOrder(usize),
    #[error("metric needs at least one {0} episode")]
    MissingPhase(&'static str),
    #[error("metric inputs must be non-empty")]
    EmptyInput,
}

/// Validated episode curve for one run.
#[derive(Debug, Clone)]
pub struct RunCurve {
    records: Vec<EpisodeRecord>,
    post_start: usize,
}

/// Steps-to-recovery outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "value")]
pub enum Recovery {
    Steps(u64),
    FailedToAdapt,
}

impl Recovery {
    pub fn steps(&self) -> Option<u64> {
        match self {
            Recovery::Steps(s) => Some(*s),
            Recovery::FailedToAdapt => None,
        }
    }
}

/// Trailing moving average with partial leading windows.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= window {
            sum -= xs[i - window];
        }
        let n = (i + 1).min(window);
        out.push(sum / n as f64);
    }
    out
}

impl RunCurve {
    pub fn new(records: Vec<EpisodeRecord>) -> Result<Self, MetricsError> {
        if records.is_empty() {
            return Err(MetricsError::EmptyLog);
        }
        let mut post_start = records.len();
        for i in 0..records.len() {
            if i > 0 {
                if records[i].episode <= records[i - 1].episode {
                    return Err(MetricsError::EpisodeOrder(i));
                }
                if records[i].env_steps_cum < records[i - 1].env_steps_cum
                    || records[i].policy_updates_cum < records[i - 1].policy_updates_cum
                {
                    return Err(MetricsError::CounterOrder(i));
                }
            }
            match records[i].phase {
                Phase::Post => {
                    if post_start == records.len() {
                        post_start = i;
                    }
                }
                Phase::Pre => {
                    if post_start != records.len() {
                        return Err(MetricsError::PhaseOrder(i));
                    }
                }
            }
        }
        Ok(RunCurve {
            records,
            post_start,
        })
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    pub fn pre(&self) -> &[EpisodeRecord] {
        &self.records[..self.post_start]
    }

    pub fn post(&self) -> &[EpisodeRecord] {
        &self.records[self.post_start..]
    }

    pub fn pre_returns(&self) -> Vec<f64> {
        self.pre().iter().map(|r| r.ret).collect()
    }

    pub fn post_returns(&self) -> Vec<f64> {
        self.post().iter().map(|r| r.ret).collect()
    }

    fn require_pre(&self) -> Result<(), MetricsError> {
        if self.pre().is_empty() {
            return Err(MetricsError::MissingPhase("pre-change"));
        }
        Ok(())
    }

    fn require_post(&self) -> Result<(), MetricsError> {
        if self.post().is_empty() {
            return Err(MetricsError::MissingPhase("post-change"));
        }
        Ok(())
    }

    /// Counter values at the moment of injection (end of the last
    /// pre-change episode).
    fn injection_marks(&self) -> (u64, u64) {
        let last_pre = &self.records[self.post_start - 1];
        (last_pre.env_steps_cum, last_pre.policy_updates_cum)
    }

    /// Maximum smoothed pre-change return minus the mean return of the
    /// first `k` post-change episodes (played frozen).
    pub fn resilience(&self, k: usize) -> Result<f64, MetricsError> {
        self.require_pre()?;
        self.require_post()?;
        let smoothed = moving_average(&self.pre_returns(), SMOOTHING_WINDOW);
        let pre_max = smoothed.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let post = self.post_returns();
        let take = k.min(post.len());
        let frozen_mean: f64 = post[..take].iter().sum::<f64>() / take as f64;
        Ok(pre_max - frozen_mean)
    }

    /// Mean of the final smoothing window post-change.
    pub fn asymptotic_adaptive_performance(&self) -> Result<f64, MetricsError> {
        self.require_post()?;
        let post = self.post_returns();
        let take = SMOOTHING_WINDOW.min(post.len());
        Ok(post[post.len() - take..].iter().sum::<f64>() / take as f64)
    }

    /// Index of the first post-change episode whose smoothed return reaches
    /// `threshold * asymptote`.
    fn recovery_index(&self, threshold: f64) -> Result<Option<usize>, MetricsError> {
        let asymptote = self.asymptotic_adaptive_performance()?;
        let target = threshold * asymptote;
        let smoothed = moving_average(&self.post_returns(), SMOOTHING_WINDOW);
        Ok(smoothed.iter().position(|v| *v >= target))
    }

    /// Real environment steps from injection until recovery begins: the
    /// cumulative step counter at the start of the first qualifying episode,
    /// relative to injection. An already-converged run reports zero.
    pub fn adaptive_efficiency(&self, threshold: f64) -> Result<Recovery, MetricsError> {
        self.require_pre()?;
        let Some(idx) = self.recovery_index(threshold)? else {
            return Ok(Recovery::FailedToAdapt);
        };
        let (steps_at_injection, _) = self.injection_marks();
        let steps_before = if idx == 0 {
            steps_at_injection
        } else {
            self.post()[idx - 1].env_steps_cum
        };
        Ok(Recovery::Steps(steps_before - steps_at_injection))
    }

    /// First post-change episode return.
    pub fn one_shot_adaptive_performance(&self) -> Result<f64, MetricsError> {
        self.require_post()?;
        Ok(self.post()[0].ret)
    }

    /// Policy updates spent between injection and the adaptive-efficiency
    /// point.
    pub fn update_efficiency(&self, threshold: f64) -> Result<Recovery, MetricsError> {
        self.require_pre()?;
        let Some(idx) = self.recovery_index(threshold)? else {
            return Ok(Recovery::FailedToAdapt);
        };
        let (_, updates_at_injection) = self.injection_marks();
        let updates_before = if idx == 0 {
            updates_at_injection
        } else {
            self.post()[idx - 1].policy_updates_cum
        };
        Ok(Recovery::Steps(updates_before - updates_at_injection))
    }
}

/// Transfer AUC: `(max(source) + mean(target)) / 2`.
pub fn tr_auc(source_returns: &[f64], target_returns: &[f64]) -> Result<f64, MetricsError> {
    if source_returns.is_empty() || target_returns.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let source_max = source_returns
        .iter()
        .fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let target_mean: f64 = target_returns.iter().sum::<f64>() / target_returns.len() as f64;
    Ok(0.5 * (source_max + target_mean))
}

/// Mean and bootstrapped 95% percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Percentile bootstrap over per-seed values.
pub fn bootstrap_ci(values: &[f64], resamples: u32, seed: u64) -> Result<CiSummary, MetricsError> {
    use rand::{Rng, SeedableRng};
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let total: f64 = (0..values.len())
                .map(|_| values[rng.gen_range(0..values.len())])
                .sum();
            total / values.len() as f64
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
    let pick = |q: f64| {
        let idx = ((means.len() - 1) as f64 * q).round() as usize;
        means[idx]
    };
    Ok(CiSummary {
        mean,
        ci_low: pick(0.025),
        ci_high: pick(0.975),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(episode: u32, phase: Phase, ret: f64, steps: u64, updates: u64) -> EpisodeRecord {
        EpisodeRecord {
            seed: 0,
            episode,
            phase,
            ret,
            env_steps_cum: steps,
            policy_updates_cum: updates,
            detector_fired: matches!(phase, Phase::Post),
        }
    }

    /// Pre phase at a given plateau, then post-change returns as listed,
    /// with a fixed number of env steps and updates per episode.
    fn curve(pre: &[f64], post: &[f64]) -> RunCurve {
        let mut records = Vec::new();
        let mut steps = 0;
        let mut updates = 0;
        let mut episode = 0;
        for r in pre {
            episode += 1;
            steps += 100;
            updates += 10;
            records.push(record(episode, Phase::Pre, *r, steps, updates));
        }
        for r in post {
            episode += 1;
            steps += 100;
            updates += 10;
            records.push(record(episode, Phase::Post, *r, steps, updates));
        }
        RunCurve::new(records).unwrap()
    }

    #[test]
    fn flat_curve_has_zero_resilience() {
        let c = curve(&[1.0; 20], &[1.0; 20]);
        assert!(c.resilience(10).unwrap().abs() < 1e-12);
    }

    #[test]
    fn resilience_measures_the_drop() {
        // Pre-change max smoothed return 1.0, frozen post mean 0.2.
        let c = curve(&[1.0; 20], &[0.2; 20]);
        assert!((c.resilience(10).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn missing_phases_are_usage_errors() {
        let pre_only = RunCurve::new(vec![record(1, Phase::Pre, 1.0, 100, 1)]).unwrap();
        assert_eq!(
            pre_only.resilience(10).unwrap_err(),
            MetricsError::MissingPhase("post-change")
        );
        assert!(pre_only.asymptotic_adaptive_performance().is_err());
        let post_only = RunCurve::new(vec![record(1, Phase::Post, 1.0, 100, 1)]).unwrap();
        assert_eq!(
            post_only.resilience(10).unwrap_err(),
            MetricsError::MissingPhase("pre-change")
        );
    }

    #[test]
    fn asymptote_is_the_final_window_mean() {
        let mut post = vec![0.2; 30];
        post.extend(vec![0.97; 10]);
        let c = curve(&[1.0; 20], &post);
        assert!((c.asymptotic_adaptive_performance().unwrap() - 0.97).abs() < 1e-12);
    }

    #[test]
    fn step_function_recovery_counts_steps_to_the_jump() {
        // Ten frozen episodes at 0.0 (1000 env steps), then recovery at 1.0.
        let mut post = vec![0.0; 10];
        post.extend(vec![1.0; 30]);
        let c = curve(&[1.0; 20], &post);
        // Smoothed return first reaches 0.95 * asymptote some episodes into
        // the plateau; the step count is the cumulative steps before that
        // episode. Asymptote = 1.0, so the window needs 10 plateau episodes
        // minus rounding: smoothed[i] = mean of trailing 10.
        let result = c.adaptive_efficiency(0.95).unwrap();
        // smoothed hits 0.95 once 10 of the last 10 episodes are >= 0.95;
        // episodes 10..19 ramp the average 0.1, 0.2, ..., 1.0. It crosses
        // 0.95 at the 20th post episode (index 19), whose start is at
        // post-step 1900... with a strict step function the first qualifying
        // index is 19, steps before it = 1900.
        assert_eq!(result, Recovery::Steps(1900));
    }

    #[test]
    fn immediate_recovery_costs_zero_steps() {
        let c = curve(&[1.0; 20], &[1.0; 20]);
        assert_eq!(c.adaptive_efficiency(0.95).unwrap(), Recovery::Steps(0));
        assert_eq!(c.update_efficiency(0.95).unwrap(), Recovery::Steps(0));
    }

    #[test]
    fn never_recovering_runs_report_failure() {
        // Post returns keep falling, so the smoothed curve never reaches
        // 95% of the final window from below... make the curve strictly
        // decreasing with a final window clearly above earlier smoothing.
        let mut post = vec![0.0; 15];
        post.extend(vec![0.5; 3]);
        // Asymptote is the mean of the last 10: (7*0 + 3*0.5)/10 = 0.15;
        // smoothed maxima: trailing windows peak at 0.15 at the very end.
        let c = curve(&[1.0; 20], &post);
        let asym = c.asymptotic_adaptive_performance().unwrap();
        assert!((asym - 0.15).abs() < 1e-12);
        // Threshold above the reachable smoothed maximum fails.
        assert_eq!(
            c.adaptive_efficiency(1.01).unwrap(),
            Recovery::FailedToAdapt
        );
        assert_eq!(c.update_efficiency(1.01).unwrap(), Recovery::FailedToAdapt);
    }

    #[test]
    fn lowering_the_threshold_never_slows_recovery() {
        let mut post = vec![0.0; 5];
        for i in 0..30 {
            post.push((i as f64 / 30.0).min(1.0));
        }
        post.extend(vec![1.0; 10]);
        let c = curve(&[1.0; 20], &post);
        let mut last = u64::MAX;
        for threshold in [0.95, 0.8, 0.6, 0.4, 0.2] {
            let steps = c
                .adaptive_efficiency(threshold)
                .unwrap()
                .steps()
                .expect("monotone curve recovers");
            assert!(steps <= last);
            last = steps;
        }
    }

    #[test]
    fn update_efficiency_tracks_the_update_counter() {
        // 10 updates per episode; recovery at the first post episode after
        // ten frozen zeros takes the same episodes as the step metric.
        let mut post = vec![0.0; 10];
        post.extend(vec![1.0; 30]);
        let c = curve(&[1.0; 20], &post);
        let steps = c.adaptive_efficiency(0.95).unwrap().steps().unwrap();
        let updates = c.update_efficiency(0.95).unwrap().steps().unwrap();
        assert_eq!(updates, steps / 10);
    }

    #[test]
    fn metrics_ignore_prepended_converged_episodes() {
        let short = curve(&[1.0; 15], &[0.5; 20]);
        let long = curve(&[1.0; 80], &[0.5; 20]);
        assert_eq!(short.resilience(10).unwrap(), long.resilience(10).unwrap());
        assert_eq!(
            short.asymptotic_adaptive_performance().unwrap(),
            long.asymptotic_adaptive_performance().unwrap()
        );
        assert_eq!(
            short.adaptive_efficiency(0.95).unwrap(),
            long.adaptive_efficiency(0.95).unwrap()
        );
    }

    #[test]
    fn tr_auc_examples() {
        assert!((tr_auc(&[1.0, 0.9], &[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        let v = tr_auc(&[0.8, 0.2], &[0.0, 0.4, 0.8, 0.8]).unwrap();
        assert!((v - 0.65).abs() < 1e-12);
        let v = tr_auc(&[0.8], &[0.0, 0.0]).unwrap();
        assert!((v - 0.4).abs() < 1e-12);
        assert!(tr_auc(&[], &[1.0]).is_err());
        assert!(tr_auc(&[1.0], &[]).is_err());
    }

    #[test]
    fn tr_auc_stays_in_unit_interval_for_unit_returns() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let source: Vec<f64> = (0..rng.gen_range(1..20))
                .map(|_| rng.gen_range(0.0..=1.0))
                .collect();
            let target: Vec<f64> = (0..rng.gen_range(1..20))
                .map(|_| rng.gen_range(0.0..=1.0))
                .collect();
            let v = tr_auc(&source, &target).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn bootstrap_over_identical_values_has_zero_width() {
        let ci = bootstrap_ci(&[0.7, 0.7, 0.7], 500, 0).unwrap();
        assert!((ci.mean - 0.7).abs() < 1e-12);
        assert_eq!(ci.ci_low, ci.ci_high);
        assert_eq!(ci.ci_low, ci.mean);
    }

    #[test]
    fn bootstrap_brackets_the_mean() {
        let ci = bootstrap_ci(&[0.1, 0.5, 0.9, 0.3, 0.7], 2000, 1).unwrap();
        assert!(ci.ci_low <= ci.mean && ci.mean <= ci.ci_high);
        assert!(ci.ci_low < ci.ci_high);
    }

    #[test]
    fn curve_validation_rejects_disorder() {
        let a = record(2, Phase::Pre, 1.0, 100, 1);
        let b = record(1, Phase::Pre, 1.0, 200, 2);
        assert_eq!(
            RunCurve::new(vec![a.clone(), b]).unwrap_err(),
            MetricsError::EpisodeOrder(1)
        );
        let c = record(3, Phase::Post, 1.0, 50, 2);
        assert_eq!(
            RunCurve::new(vec![a.clone(), c]).unwrap_err(),
            MetricsError::CounterOrder(1)
        );
        let d = record(3, Phase::Post, 1.0, 200, 2);
        let e = record(4, Phase::Pre, 1.0, 300, 3);
        assert_eq!(
            RunCurve::new(vec![a, d, e]).unwrap_err(),
            MetricsError::PhaseOrder(2)
        );
    }
}
