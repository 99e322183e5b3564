//! Synthetic visitor populations.
//!
//! Arrivals form a non-homogeneous Poisson process obtained by thinning a
//! homogeneous process at the peak rate. Each arrival is a party; its size
//! comes from the scenario's group-size distribution and the party arrival
//! rate is `λ(t) / E[size]`, so `λ(t)` stays a rate of persons.

use crate::rng::{exponential, substream};
use crate::space::{FloorPlan, ZoneKind};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const MIN_SPEED: f64 = 0.3;
pub const MAX_SPEED: f64 = 2.5;
pub const MAX_GROUP_SIZE: usize = 6;
const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeClass {
    Child,
    Adult,
    Senior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    Unspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicalCondition {
    Unimpaired,
    Impaired,
}

/// Free-flow walking speed, m/s, from the shipped calibration table.
pub fn desired_speed(age: AgeClass, condition: PhysicalCondition) -> f64 {
    let base = match age {
        AgeClass::Child => 0.9,
        AgeClass::Adult => 1.34,
        AgeClass::Senior => 1.0,
    };
    let modifier = match condition {
        PhysicalCondition::Unimpaired => 1.0,
        PhysicalCondition::Impaired => 0.6,
    };
    base * modifier
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub id: u32,
    pub age_class: AgeClass,
    pub gender: Gender,
    pub origin: String,
    pub physical_condition: PhysicalCondition,
    pub desired_speed: f64,
    pub group_id: Option<u32>,
    pub arrival_time: f64,
    pub entrance: String,
    pub exit: String,
    /// Seconds spent in each zone after walking through it.
    pub zone_dwell: BTreeMap<String, f64>,
}

/// Visitors who arrive together and regroup at every portal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub id: u32,
    pub member_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demographics {
    pub age_class: BTreeMap<AgeClass, f64>,
    pub gender: BTreeMap<Gender, f64>,
    pub origin: BTreeMap<String, f64>,
    pub physical_condition: BTreeMap<PhysicalCondition, f64>,
}

/// One piece of the piecewise-constant arrival rate, in effect from `start`
/// until the next segment's start (or the horizon).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSegment {
    pub start: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DwellRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub demographics: Demographics,
    pub arrival_rate: Vec<RateSegment>,
    /// P(size = 1), ..., P(size = 6).
    pub group_size: Vec<f64>,
    /// Uniform dwell range per zone kind; missing kinds dwell zero seconds.
    #[serde(default)]
    pub dwell: BTreeMap<ZoneKind, DwellRange>,
    pub horizon: f64,
    pub seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid scenario field `{field}`: {reason}")]
pub struct ScenarioError {
    pub field: String,
    pub reason: String,
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError {
        field: field.into(),
        reason: reason.into(),
    }
}

fn check_distribution<K>(field: &str, dist: &BTreeMap<K, f64>) -> Result<(), ScenarioError> {
    if dist.is_empty() {
        return Err(invalid(field, "distribution is empty"));
    }
    if dist.values().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(invalid(field, "probabilities must be finite and >= 0"));
    }
    let sum: f64 = dist.values().sum();
    if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(invalid(field, format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let spec: ScenarioSpec =
            serde_json::from_str(text).map_err(|e| invalid("<document>", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(invalid("horizon", "must be > 0"));
        }
        check_distribution("demographics.age_class", &self.demographics.age_class)?;
        check_distribution("demographics.gender", &self.demographics.gender)?;
        check_distribution("demographics.origin", &self.demographics.origin)?;
        check_distribution(
            "demographics.physical_condition",
            &self.demographics.physical_condition,
        )?;

        if self.group_size.is_empty() || self.group_size.len() > MAX_GROUP_SIZE {
            return Err(invalid("group_size", "expects 1 to 6 probabilities"));
        }
        let sizes: BTreeMap<usize, f64> = self.group_size.iter().copied().enumerate().collect();
        check_distribution("group_size", &sizes)?;

        if self.arrival_rate.is_empty() {
            return Err(invalid("arrival_rate", "needs at least one segment"));
        }
        if self.arrival_rate[0].start != 0.0 {
            return Err(invalid("arrival_rate", "first segment must start at 0"));
        }
        for (i, seg) in self.arrival_rate.iter().enumerate() {
            if !(seg.rate >= 0.0) || !seg.rate.is_finite() {
                return Err(invalid(format!("arrival_rate[{i}].rate"), "must be >= 0"));
            }
            if i > 0 && !(seg.start > self.arrival_rate[i - 1].start) {
                return Err(invalid(
                    format!("arrival_rate[{i}].start"),
                    "segment starts must increase",
                ));
            }
        }
        for (kind, range) in &self.dwell {
            if !(range.min >= 0.0) || !(range.max >= range.min) {
                return Err(invalid(
                    format!("dwell.{}", kind.as_str()),
                    "requires 0 <= min <= max",
                ));
            }
        }
        Ok(())
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        self.arrival_rate
            .iter()
            .rev()
            .find(|seg| seg.start <= t)
            .map_or(0.0, |seg| seg.rate)
    }

    fn peak_rate(&self) -> f64 {
        self.arrival_rate.iter().map(|s| s.rate).fold(0.0, f64::max)
    }

    pub fn mean_group_size(&self) -> f64 {
        self.group_size
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    /// Expected number of persons arriving before the horizon.
    pub fn expected_arrivals(&self) -> f64 {
        let mut total = 0.0;
        for (i, seg) in self.arrival_rate.iter().enumerate() {
            let end = self
                .arrival_rate
                .get(i + 1)
                .map_or(self.horizon, |s| s.start)
                .min(self.horizon);
            if end > seg.start {
                total += seg.rate * (end - seg.start);
            }
        }
        total
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub agents: Vec<AgentProfile>,
    pub groups: Vec<Group>,
}

fn categorical<'a, K: Clone, R: Rng>(
    dist: &'a BTreeMap<K, f64>,
) -> impl FnMut(&mut R) -> K + 'a {
    let keys: Vec<K> = dist.keys().cloned().collect();
    let index = WeightedIndex::new(dist.values().copied()).expect("validated distribution");
    move |rng| keys[index.sample(rng)].clone()
}

/// Draws a population for `spec` over the zones of `plan`.
///
/// Output is a pure function of the spec: arrivals, demographics, party
/// sizes, dwell times and entrance/exit choice each read their own
/// substream of `spec.seed`.
pub fn sample_population(spec: &ScenarioSpec, plan: &FloorPlan) -> Result<Population, ScenarioError> {
    spec.validate()?;
    let mut arrivals = substream(spec.seed, "arrivals");
    let mut thinning = substream(spec.seed, "thinning");
    let mut demo_rng = substream(spec.seed, "demographics");
    let mut size_rng = substream(spec.seed, "group_size");
    let mut dwell_rng = substream(spec.seed, "dwell");
    let mut route_rng = substream(spec.seed, "route");

    let mut age = categorical(&spec.demographics.age_class);
    let mut gender = categorical(&spec.demographics.gender);
    let mut origin = categorical(&spec.demographics.origin);
    let mut condition = categorical(&spec.demographics.physical_condition);
    let sizes: BTreeMap<usize, f64> = spec
        .group_size
        .iter()
        .copied()
        .enumerate()
        .map(|(i, p)| (i + 1, p))
        .collect();
    let mut party_size = categorical(&sizes);

    let mut population = Population::default();
    let peak = spec.peak_rate();
    if peak <= 0.0 {
        return Ok(population);
    }
    let party_peak = peak / spec.mean_group_size();

    let mut t = 0.0;
    loop {
        t += exponential(&mut arrivals, party_peak);
        if t >= spec.horizon {
            break;
        }
        let accept: f64 = thinning.random();
        if accept * peak >= spec.rate_at(t) {
            continue;
        }

        let size = party_size(&mut size_rng);
        let entrance = &plan.zones()[plan.entrances()[route_rng.random_range(0..plan.entrances().len())]];
        let exit = &plan.zones()[plan.exits()[route_rng.random_range(0..plan.exits().len())]];
        let zone_dwell: BTreeMap<String, f64> = plan
            .zones()
            .iter()
            .map(|z| {
                let secs = spec.dwell.get(&z.kind).map_or(0.0, |r| {
                    let u: f64 = dwell_rng.random();
                    r.min + u * (r.max - r.min)
                });
                (z.id.clone(), secs)
            })
            .collect();

        let group_id = (size > 1).then_some(population.groups.len() as u32);
        let mut members = Vec::with_capacity(size);
        for _ in 0..size {
            let id = population.agents.len() as u32;
            let age_class = age(&mut demo_rng);
            let physical_condition = condition(&mut demo_rng);
            population.agents.push(AgentProfile {
                id,
                age_class,
                gender: gender(&mut demo_rng),
                origin: origin(&mut demo_rng),
                physical_condition,
                desired_speed: desired_speed(age_class, physical_condition),
                group_id,
                arrival_time: t,
                entrance: entrance.id.clone(),
                exit: exit.id.clone(),
                zone_dwell: zone_dwell.clone(),
            });
            members.push(id);
        }
        if let Some(id) = group_id {
            population.groups.push(Group {
                id,
                member_ids: members,
            });
        }
    }
    Ok(population)
}
