//! Single runs and seeded campaigns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ssbcs_core::config::big_to_f64;
use ssbcs_core::scenario::Scenario;
use ssbcs_core::sim::trace::Trace;
use ssbcs_core::sim::{resync_points, SimError, World};

use crate::stats::{Distribution, Proportion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Stop as soon as stabilization is confirmed.
    UntilStable,
    /// Always simulate the whole horizon.
    FullHorizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub strategy: String,
    pub stabilization_window: Option<u64>,
    pub windows: u64,
    pub max_precision_after_stb: Option<u64>,
    pub max_spread: u64,
    pub precision_violations: u64,
    pub accuracy_violations: u64,
    pub resync_point_count: u64,
    /// Windows holding at least one resynchronization point.
    pub resync_windows: u64,
    pub stb_disagreements: u64,
    pub clamp_warnings: u64,
    pub events: u64,
}

/// Simulates one seed of `sc` for at most its horizon.
pub fn run_once(sc: &Scenario, seed: u64, trace: Trace, mode: RunMode) -> Result<(RunResult, Trace), SimError> {
    let mut w = World::new(sc.sim_config(), seed, trace)?;
    w.run_windows(sc.horizon_windows(), mode == RunMode::UntilStable)?;
    let window = sc.params.derived.window_sim;
    let mut rw: Vec<i64> = resync_points(w.tosses(), w.honest_planes())
        .into_iter()
        .map(|t| t / window)
        .collect();
    rw.dedup();
    let (s, trace) = w.finish()?;
    let r = RunResult {
        seed,
        strategy: sc.strategy().name().to_string(),
        stabilization_window: s.stabilization_window,
        windows: s.windows,
        max_precision_after_stb: s.max_spread_since_stb,
        max_spread: s.max_spread,
        precision_violations: s.precision_violations,
        accuracy_violations: s.accuracy_violations,
        resync_point_count: s.resync_points,
        resync_windows: rw.len() as u64,
        stb_disagreements: s.stb_disagreements,
        clamp_warnings: s.clamp_warnings,
        events: s.events,
    };
    Ok((r, trace))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aborted {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsSummary {
    pub strategy: String,
    pub runs: usize,
    pub incomplete: bool,
    pub stabilized: usize,
    pub all_stabilized: bool,
    /// Windows per stabilization attempt (`g0 + 1`).
    pub attempt_windows: u64,
    pub per_attempt: Proportion,
    pub q1_bound: f64,
    pub q1_closed_form: f64,
    pub per_attempt_pass: bool,
    pub stabilization: Option<Distribution>,
    /// `2/q1 + g0` windows.
    pub expected_bound: f64,
    pub mean_slack: f64,
    pub mean_pass: bool,
    pub resync: Proportion,
    pub resync_bound: f64,
    pub max_precision_after_stb: Option<u64>,
    /// `(1 - q1)^horizon`.
    pub horizon_failure_bound: f64,
}

pub const ALPHA: f64 = 0.01;
pub const MEAN_SLACK: f64 = 0.2;

/// Aggregates results; the input order does not matter.
pub fn summarize(sc: &Scenario, results: &[RunResult], aborted: usize) -> StatsSummary {
    let mut rs: Vec<&RunResult> = results.iter().collect();
    rs.sort_by_key(|r| r.seed);
    let d = &sc.params.derived;
    let attempt = d.g0 as u64 + 1;
    let stabilized: Vec<u64> = rs.iter().filter_map(|r| r.stabilization_window).collect();
    let trials: u64 = rs
        .iter()
        .map(|r| match r.stabilization_window {
            Some(w) => w / attempt + 1,
            None => r.windows / attempt,
        })
        .sum();
    let per_attempt = Proportion::new(stabilized.len() as u64, trials, ALPHA);
    let q1 = big_to_f64(&d.q1_bound);
    let expected_bound = 2.0 / q1 + d.g0 as f64;
    let stabilization = Distribution::of(&stabilized);
    let mean_pass = stabilization
        .as_ref()
        .is_some_and(|s| s.mean <= expected_bound * (1.0 + MEAN_SLACK));
    let resync = Proportion::new(
        rs.iter().map(|r| r.resync_windows).sum(),
        rs.iter().map(|r| r.windows).sum(),
        ALPHA,
    );
    StatsSummary {
        strategy: sc.strategy().name().to_string(),
        runs: rs.len(),
        incomplete: aborted > 0,
        stabilized: stabilized.len(),
        all_stabilized: aborted == 0 && !rs.is_empty() && stabilized.len() == rs.len(),
        attempt_windows: attempt,
        per_attempt_pass: per_attempt.clears(q1),
        per_attempt,
        q1_bound: q1,
        q1_closed_form: d.q1_closed_form,
        stabilization,
        expected_bound,
        mean_slack: MEAN_SLACK,
        mean_pass,
        resync,
        resync_bound: d.resync_bound(),
        max_precision_after_stb: rs.iter().filter_map(|r| r.max_precision_after_stb).max(),
        horizon_failure_bound: (1.0 - q1).powf(sc.horizon_windows() as f64),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Campaign {
    pub runs: Vec<RunResult>,
    pub aborted: Vec<Aborted>,
    pub summary: StatsSummary,
}

/// Runs every seed in parallel; results come back in seed-list order.
pub fn run_monte_carlo(sc: &Scenario, seeds: &[u64], mode: RunMode) -> Campaign {
    let out: Vec<Result<RunResult, Aborted>> = seeds
        .par_iter()
        .map(|&seed| {
            run_once(sc, seed, Trace::Off, mode).map(|(r, _)| r).map_err(|e| Aborted {
                seed,
                error: e.to_string(),
            })
        })
        .collect();
    let mut runs = Vec::new();
    let mut aborted = Vec::new();
    for r in out {
        match r {
            Ok(r) => runs.push(r),
            Err(a) => aborted.push(a),
        }
    }
    if seeds.len() < 30 {
        log::warn!("campaign with {} seeds; statistics need at least 30", seeds.len());
    }
    let summary = summarize(sc, &runs, aborted.len());
    Campaign { runs, aborted, summary }
}
