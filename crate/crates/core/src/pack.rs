//! The shipped pack: a synthetic museum floor plan, two crowd scenarios,
//! six architecture models, three configurations, the default energy
//! calibration and per-scenario goals.
//!
//! The files live in `crates/core/pack/` and are embedded at build time so
//! tests and tools can use them without touching the filesystem.

use crate::analysis::Goals;
use crate::iotsim::{ArchitectureModel, Configuration, EnergyModel};
use crate::population::ScenarioSpec;
use crate::space::{load_floor_plan, FloorPlan};
use crate::Error;
use std::collections::BTreeMap;

pub const PLAN: &str = include_str!("../pack/uffizi_like.plan");
pub const SCENARIO_CONGESTION: &str = include_str!("../pack/scenario1_congestion.json");
pub const SCENARIO_GROUPING: &str = include_str!("../pack/scenario2_grouping.json");
pub const MODELS: &str = include_str!("../pack/models.json");
pub const CONFIGURATIONS: &str = include_str!("../pack/configurations.json");
pub const ENERGY: &str = include_str!("../pack/energy.json");
pub const GOALS: &str = include_str!("../pack/goals.json");
pub const MANIFEST: &str = include_str!("../pack/manifest.json");

/// Root seed of the shipped manifest.
pub const ROOT_SEED: u64 = 20240601;

pub fn models_from_json(text: &str) -> serde_json::Result<Vec<ArchitectureModel>> {
    serde_json::from_str(text)
}

pub fn configurations_from_json(text: &str) -> serde_json::Result<Vec<Configuration>> {
    serde_json::from_str(text)
}

pub fn energy_from_json(text: &str) -> serde_json::Result<EnergyModel> {
    serde_json::from_str(text)
}

pub fn goals_from_json(text: &str) -> serde_json::Result<BTreeMap<String, Goals>> {
    serde_json::from_str(text)
}

/// Every shipped input, parsed and validated.
#[derive(Debug, Clone)]
pub struct Pack {
    pub plan: FloorPlan,
    pub scenarios: Vec<ScenarioSpec>,
    pub models: Vec<ArchitectureModel>,
    pub configurations: Vec<Configuration>,
    pub energy: EnergyModel,
    pub goals: BTreeMap<String, Goals>,
}

impl Pack {
    pub fn load() -> Result<Self, Error> {
        Self::parse(|name| {
            Ok(match name {
                "uffizi_like.plan" => PLAN,
                "scenario1_congestion.json" => SCENARIO_CONGESTION,
                "scenario2_grouping.json" => SCENARIO_GROUPING,
                "models.json" => MODELS,
                "configurations.json" => CONFIGURATIONS,
                "energy.json" => ENERGY,
                "goals.json" => GOALS,
                _ => unreachable!("not a pack file: {name}"),
            }
            .to_string())
        })
    }

    /// Reads a directory laid out like the shipped pack.
    pub fn from_dir(dir: &std::path::Path) -> Result<Self, Error> {
        Self::parse(|name| std::fs::read_to_string(dir.join(name)).map_err(|e| Error::catalog(name, e)))
    }

    fn parse(read: impl Fn(&str) -> Result<String, Error>) -> Result<Self, Error> {
        let plan = load_floor_plan(&read("uffizi_like.plan")?)?;
        let scenarios = vec![
            ScenarioSpec::from_json(&read("scenario1_congestion.json")?)?,
            ScenarioSpec::from_json(&read("scenario2_grouping.json")?)?,
        ];
        let models = models_from_json(&read("models.json")?).map_err(|e| Error::catalog("models.json", e))?;
        let configurations = configurations_from_json(&read("configurations.json")?)
            .map_err(|e| Error::catalog("configurations.json", e))?;
        let energy = energy_from_json(&read("energy.json")?).map_err(|e| Error::catalog("energy.json", e))?;
        let goals = goals_from_json(&read("goals.json")?).map_err(|e| Error::catalog("goals.json", e))?;
        for m in &models {
            m.validate(&plan)?;
        }
        for c in &configurations {
            c.validate()?;
        }
        energy.validate()?;
        for g in goals.values() {
            g.validate()?;
        }
        Ok(Pack {
            plan,
            scenarios,
            models,
            configurations,
            energy,
            goals,
        })
    }

    pub fn model(&self, name: &str) -> Option<&ArchitectureModel> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn configuration(&self, name: &str) -> Option<&Configuration> {
        self.configurations.iter().find(|c| c.name == name)
    }

    pub fn scenario(&self, name: &str) -> Option<&ScenarioSpec> {
        self.scenarios.iter().find(|s| s.name == name)
    }
}
