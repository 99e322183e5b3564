//! Goal satisfaction, trade-off scoring and the design-space sweep.

use crate::engine::{run_abss, Trace};
use crate::iotsim::{simulate, ArchitectureModel, Configuration, EnergyModel, IoTResult, DEFAULT_WINDOW};
use crate::population::{sample_population, ScenarioSpec};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::space::FloorPlan;
use crate::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("goal must be > 0, got {0}")]
    NonPositiveGoal(f64),
    #[error("energy must be >= 0, got {0}")]
    NegativeEnergy(f64),
    #[error("no capture windows to score")]
    NoWindows,
    #[error("weights must each lie in [0, 1]")]
    WeightRange,
    #[error("weights sum to {0}, not 1")]
    WeightSum(f64),
    #[error("satisfaction values must lie in [0, 1]")]
    SatisfactionRange,
    #[error("no rows for scenario `{0}`")]
    NoRows(String),
    #[error("no goals declared for scenario `{0}`")]
    MissingGoals(String),
    #[error("window must be > 0 seconds")]
    InvalidWindow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights<T> {
    pub qos: T,
    pub qoe: T,
}

impl<T: Scalar> Weights<T> {
    pub fn new(qos: T, qoe: T) -> Result<Self, AnalysisError> {
        let unit = |w: T| w >= T::zero() && w <= T::one();
        if !unit(qos) || !unit(qoe) {
            return Err(AnalysisError::WeightRange);
        }
        let sum = qos + qoe;
        let slack = if sum > T::one() { sum - T::one() } else { T::one() - sum };
        if slack > T::weight_tolerance() {
            return Err(AnalysisError::WeightSum(sum.to_f64()));
        }
        Ok(Weights { qos, qoe })
    }

    /// Normalizes two non-negative raw weights so they sum to one.
    pub fn from_raw(qos: T, qoe: T) -> Result<Self, AnalysisError> {
        let total = qos + qoe;
        if !(qos >= T::zero() && qoe >= T::zero() && total > T::zero()) {
            return Err(AnalysisError::WeightRange);
        }
        Ok(Weights {
            qos: qos / total,
            qoe: qoe / total,
        })
    }
}

/// QoS satisfaction from energy use: full up to the budget, falling linearly
/// to zero at twice the budget.
pub fn qos_satisfaction<T: Scalar>(energy: T, budget: T) -> Result<T, AnalysisError> {
    if !(budget > T::zero()) {
        return Err(AnalysisError::NonPositiveGoal(budget.to_f64()));
    }
    if !(energy >= T::zero()) {
        return Err(AnalysisError::NegativeEnergy(energy.to_f64()));
    }
    if energy <= budget {
        return Ok(T::one());
    }
    Ok((T::one() - (energy - budget) / budget).max_of(T::zero()))
}

/// QoE satisfaction: mean over windows of the capped ratio `captures / goal`.
pub fn qoe_satisfaction<T: Scalar>(captures_per_window: &[u64], goal: T) -> Result<T, AnalysisError> {
    if !(goal > T::zero()) {
        return Err(AnalysisError::NonPositiveGoal(goal.to_f64()));
    }
    if captures_per_window.is_empty() {
        return Err(AnalysisError::NoWindows);
    }
    let total = captures_per_window
        .iter()
        .fold(T::zero(), |acc, &c| acc + (T::from_count(c) / goal).min_of(T::one()));
    Ok(total / T::from_count(captures_per_window.len() as u64))
}

pub fn tradeoff_score<T: Scalar>(qos: T, qoe: T, weights: &Weights<T>) -> Result<T, AnalysisError> {
    let unit = |q: T| q >= T::zero() && q <= T::one();
    if !unit(qos) || !unit(qoe) {
        return Err(AnalysisError::SatisfactionRange);
    }
    Ok(weights.qos * qos + weights.qoe * qoe)
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Goals {
    /// Joules over the whole run.
    pub energy_budget: f64,
    /// Captured movements wanted per window.
    pub capture_goal: f64,
    #[serde(default = "default_window")]
    pub window: f64,
    pub w_s: f64,
    pub w_e: f64,
    /// False when the weights are local defaults rather than published values.
    #[serde(default)]
    pub weights_published: bool,
}

impl Goals {
    pub fn weights(&self) -> Result<Weights<f64>, AnalysisError> {
        Weights::new(self.w_s, self.w_e)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.energy_budget > 0.0) {
            return Err(AnalysisError::NonPositiveGoal(self.energy_budget));
        }
        if !(self.capture_goal > 0.0) {
            return Err(AnalysisError::NonPositiveGoal(self.capture_goal));
        }
        if !(self.window > 0.0) {
            return Err(AnalysisError::InvalidWindow);
        }
        self.weights().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub model: String,
    pub configuration: String,
    pub scenario: String,
    pub seed: u64,
    pub total_energy: f64,
    pub min_window_captures: u64,
    pub mean_window_captures: f64,
    pub q_s: f64,
    pub q_e: f64,
    pub t_s: f64,
    pub crossings: u64,
    pub entered: u32,
    pub exited: u32,
    pub remaining: u32,
    /// Crossing-weighted mean portal queue time, seconds (diagnostic only).
    pub mean_wait: f64,
}

pub const CSV_HEADER: &str = "model,configuration,scenario,seed,total_energy,min_window_captures,mean_window_captures,q_s,q_e,t_s,crossings,entered,exited,remaining,mean_wait";

impl TradeoffRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.model,
            self.configuration,
            self.scenario,
            self.seed,
            self.total_energy,
            self.min_window_captures,
            self.mean_window_captures,
            self.q_s,
            self.q_e,
            self.t_s,
            self.crossings,
            self.entered,
            self.exited,
            self.remaining,
            self.mean_wait
        )
    }
}

pub fn rows_csv(rows: &[TradeoffRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Scores one simulated run against the scenario's goals.
pub fn score_run(
    trace: &Trace,
    result: &IoTResult,
    goals: &Goals,
    names: (&str, &str, &str),
    seed: u64,
) -> Result<TradeoffRow, AnalysisError> {
    goals.validate()?;
    let weights = goals.weights()?;
    let q_s = qos_satisfaction(result.total_energy, goals.energy_budget)?;
    let q_e = qoe_satisfaction(&result.captures_per_window, goals.capture_goal)?;
    let t_s = tradeoff_score(q_s, q_e, &weights)?;
    let windows = &result.captures_per_window;
    let waited: u64 = trace.wait_stats.iter().map(|w| w.crossings).sum();
    let mean_wait = if waited > 0 {
        trace
            .wait_stats
            .iter()
            .map(|w| w.mean_wait * w.crossings as f64)
            .sum::<f64>()
            / waited as f64
    } else {
        0.0
    };
    Ok(TradeoffRow {
        model: names.0.to_string(),
        configuration: names.1.to_string(),
        scenario: names.2.to_string(),
        seed,
        total_energy: result.total_energy,
        min_window_captures: windows.iter().copied().min().unwrap_or(0),
        mean_window_captures: windows.iter().sum::<u64>() as f64 / windows.len() as f64,
        q_s,
        q_e,
        t_s,
        crossings: trace.crossings.len() as u64,
        entered: trace.entered,
        exited: trace.exited,
        remaining: trace.remaining,
        mean_wait,
    })
}

fn rank(a: &TradeoffRow, b: &TradeoffRow) -> Ordering {
    b.t_s
        .total_cmp(&a.t_s)
        .then(a.total_energy.total_cmp(&b.total_energy))
        .then_with(|| a.model.cmp(&b.model))
        .then_with(|| a.configuration.cmp(&b.configuration))
}

/// Rows of one scenario, best first.
pub fn ranked<'a>(rows: &'a [TradeoffRow], scenario: &str) -> Vec<&'a TradeoffRow> {
    let mut out: Vec<_> = rows.iter().filter(|r| r.scenario == scenario).collect();
    out.sort_by(|a, b| rank(a, b));
    out
}

/// Highest trade-off score; ties go to lower energy, then model and
/// configuration name.
pub fn select_optimal<'a>(rows: &'a [TradeoffRow], scenario: &str) -> Result<&'a TradeoffRow, AnalysisError> {
    rows.iter()
        .filter(|r| r.scenario == scenario)
        .min_by(|a, b| rank(a, b))
        .ok_or_else(|| AnalysisError::NoRows(scenario.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub dt: f64,
    /// Overrides every scenario's own horizon when set.
    pub horizon: Option<f64>,
    pub root_seed: u64,
    /// Worker threads; `None` uses the available parallelism.
    pub jobs: Option<usize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            dt: crate::engine::DEFAULT_DT,
            horizon: None,
            root_seed: 0,
            jobs: None,
        }
    }
}

pub struct SweepInputs<'a> {
    pub plan: &'a FloorPlan,
    pub models: &'a [ArchitectureModel],
    pub configurations: &'a [Configuration],
    pub scenarios: &'a [ScenarioSpec],
    pub goals: &'a BTreeMap<String, Goals>,
    pub energy: &'a EnergyModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointFailure {
    pub model: String,
    pub configuration: String,
    pub scenario: String,
    pub error: Error,
}

impl std::fmt::Display for PointFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} / {} / {}: {}",
            self.model, self.configuration, self.scenario, self.error
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<TradeoffRow>,
    pub failures: Vec<PointFailure>,
}

/// Seed recorded for one sweep point, independent of catalog order.
pub fn point_seed(root: u64, model: &str, configuration: &str, scenario: &str) -> u64 {
    derive_seed(root, &["point", model, configuration, scenario])
}

/// Seed of the crowd a scenario is simulated with. Every point of the same
/// scenario shares it, so models and configurations face the same visitors.
pub fn crowd_seed(root: u64, scenario: &ScenarioSpec) -> u64 {
    derive_seed(root, &["crowd", &scenario.name, &scenario.seed.to_string()])
}

/// Population and crowd trace for one scenario under the sweep settings.
pub fn scenario_trace(plan: &FloorPlan, scenario: &ScenarioSpec, settings: &SweepSettings) -> Result<Trace, Error> {
    let mut spec = scenario.clone();
    if let Some(h) = settings.horizon {
        spec.horizon = h;
    }
    spec.seed = crowd_seed(settings.root_seed, scenario);
    let population = sample_population(&spec, plan)?;
    Ok(run_abss(plan, &population, settings.dt, spec.horizon)?)
}

/// Full pipeline for one (model, configuration, scenario) point.
#[allow(clippy::too_many_arguments)]
pub fn run_point(
    plan: &FloorPlan,
    trace: &Trace,
    model: &ArchitectureModel,
    configuration: &Configuration,
    scenario: &str,
    goals: &Goals,
    energy: &EnergyModel,
    root_seed: u64,
) -> Result<(IoTResult, TradeoffRow), Error> {
    goals.validate()?;
    let result = simulate(plan, trace, model, configuration, energy, goals.window)?;
    let seed = point_seed(root_seed, &model.name, &configuration.name, scenario);
    let row = score_run(trace, &result, goals, (&model.name, &configuration.name, scenario), seed)?;
    Ok((result, row))
}

fn with_pool<R: Send>(jobs: Option<usize>, work: impl FnOnce() -> R + Send) -> R {
    let threads = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    }
}

/// Runs every model × configuration × scenario point.
///
/// Rows come back in catalog order (scenario, then model, then
/// configuration) whatever the degree of parallelism; failed points are
/// collected separately and do not stop the sweep.
#[allow(clippy::result_large_err)]
pub fn sweep(inputs: &SweepInputs<'_>, settings: &SweepSettings) -> SweepOutcome {
    with_pool(settings.jobs, || {
        let traces: Vec<Result<Trace, Error>> = inputs
            .scenarios
            .par_iter()
            .map(|s| scenario_trace(inputs.plan, s, settings))
            .collect();

        let mut points = Vec::new();
        for (si, s) in inputs.scenarios.iter().enumerate() {
            for m in inputs.models {
                for c in inputs.configurations {
                    points.push((si, s, m, c));
                }
            }
        }
        let results: Vec<Result<TradeoffRow, PointFailure>> = points
            .par_iter()
            .map(|&(si, s, m, c)| {
                let fail = |error: Error| PointFailure {
                    model: m.name.clone(),
                    configuration: c.name.clone(),
                    scenario: s.name.clone(),
                    error,
                };
                let trace = traces[si].as_ref().map_err(|e| fail(e.clone()))?;
                let goals = inputs
                    .goals
                    .get(&s.name)
                    .ok_or_else(|| fail(AnalysisError::MissingGoals(s.name.clone()).into()))?;
                run_point(inputs.plan, trace, m, c, &s.name, goals, inputs.energy, settings.root_seed)
                    .map(|(_, row)| row)
                    .map_err(fail)
            })
            .collect();

        let mut outcome = SweepOutcome {
            rows: Vec::new(),
            failures: Vec::new(),
        };
        for r in results {
            match r {
                Ok(row) => outcome.rows.push(row),
                Err(f) => outcome.failures.push(f),
            }
        }
        outcome
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub name: String,
    pub crowd_seed: u64,
    pub goals: Goals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsMeta {
    pub root_seed: u64,
    pub dt: f64,
    pub scenarios: Vec<ScenarioMeta>,
}

#[derive(Serialize)]
struct ResultsDocument<'a> {
    metadata: &'a ResultsMeta,
    rows: &'a [TradeoffRow],
}

pub fn results_meta(inputs: &SweepInputs<'_>, settings: &SweepSettings) -> ResultsMeta {
    ResultsMeta {
        root_seed: settings.root_seed,
        dt: settings.dt,
        scenarios: inputs
            .scenarios
            .iter()
            .filter_map(|s| {
                inputs.goals.get(&s.name).map(|g| ScenarioMeta {
                    name: s.name.clone(),
                    crowd_seed: crowd_seed(settings.root_seed, s),
                    goals: g.clone(),
                })
            })
            .collect(),
    }
}

pub fn results_json(meta: &ResultsMeta, rows: &[TradeoffRow]) -> String {
    serde_json::to_string_pretty(&ResultsDocument { metadata: meta, rows }).expect("rows serialize")
}

/// Human-readable ranking with one `optimal` line per scenario.
pub fn report(meta: &ResultsMeta, rows: &[TradeoffRow]) -> String {
    let mut out = String::new();
    for s in &meta.scenarios {
        let ranking = ranked(rows, &s.name);
        let Some(best) = ranking.first() else {
            continue;
        };
        let _ = writeln!(
            out,
            "scenario {}: energy budget {} J, capture goal {} per {} s, weights w_s={} w_e={}{}",
            s.name,
            s.goals.energy_budget,
            s.goals.capture_goal,
            s.goals.window,
            s.goals.w_s,
            s.goals.w_e,
            if s.goals.weights_published { "" } else { " (local default weights)" }
        );
        for (i, r) in ranking.iter().enumerate() {
            let _ = writeln!(
                out,
                "  {:>2}. {:<14} {:<4} t_s={:.4} Q_s={:.4} Q_e={:.4} energy={:.2} J min/mean captures={}/{:.1}",
                i + 1,
                r.model,
                r.configuration,
                r.t_s,
                r.q_s,
                r.q_e,
                r.total_energy,
                r.min_window_captures,
                r.mean_window_captures
            );
        }
        let _ = writeln!(
            out,
            "optimal {}: model {} configuration {} t_s={:.4}",
            s.name, best.model, best.configuration, best.t_s
        );
    }
    out
}
