//! Run manifests and the lenient loader behind every subcommand.

use crowdsense::analysis::Goals;
use crowdsense::engine::step_count;
use crowdsense::iotsim::{ArchitectureModel, Configuration, EnergyModel, IotError};
use crowdsense::population::ScenarioSpec;
use crowdsense::space::{load_floor_plan, FloorPlan};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

fn default_dt() -> f64 {
    crowdsense::engine::DEFAULT_DT
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Input files and run settings. Relative paths resolve against the
/// directory holding the manifest.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub plan: PathBuf,
    pub scenarios: Vec<PathBuf>,
    pub models: PathBuf,
    pub configurations: PathBuf,
    pub energy: PathBuf,
    pub goals: PathBuf,
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Overrides every scenario horizon when set.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

/// One machine-readable finding, printed as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub level: &'static str,
    pub kind: &'static str,
    pub file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl Diagnostic {
    pub fn error(kind: &'static str, file: impl Into<String>, field: Option<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            level: "error",
            kind,
            file: file.into(),
            field,
            message: message.into(),
        }
    }

    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("diagnostic serializes")
    }
}

/// Everything a manifest points at. Catalog entries that parse but break
/// an invariant are kept so a sweep can report their points as failures;
/// `diagnostics` lists every problem found, fatal or not.
#[derive(Debug, Default)]
pub struct Inputs {
    pub plan: Option<FloorPlan>,
    pub scenarios: Vec<ScenarioSpec>,
    pub models: Vec<ArchitectureModel>,
    pub configurations: Vec<Configuration>,
    pub energy: Option<EnergyModel>,
    pub goals: BTreeMap<String, Goals>,
    pub diagnostics: Vec<Diagnostic>,
    /// Set when the inputs cannot be run at all.
    pub fatal: bool,
}

impl Inputs {
    fn fatal(&mut self, d: Diagnostic) {
        self.fatal = true;
        self.diagnostics.push(d);
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn read(path: &Path, inputs: &mut Inputs) -> Option<String> {
    match std::fs::read_to_string(path) {
        Ok(text) => Some(text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            inputs.fatal(Diagnostic::error("file_not_found", display(path), None, format!("file not found: {}", display(path))));
            None
        }
        Err(e) => {
            inputs.fatal(Diagnostic::error("io", display(path), None, e.to_string()));
            None
        }
    }
}

fn json_array(path: &Path, inputs: &mut Inputs) -> Vec<Value> {
    let Some(text) = read(path, inputs) else {
        return Vec::new();
    };
    match serde_json::from_str::<Vec<Value>>(&text) {
        Ok(items) => items,
        Err(e) => {
            inputs.fatal(Diagnostic::error("parse", display(path), None, e.to_string()));
            Vec::new()
        }
    }
}

fn entry_name(item: &Value, i: usize) -> String {
    match item.get("name").and_then(Value::as_str) {
        Some(name) => format!("[{i}] {name}"),
        None => format!("[{i}]"),
    }
}

/// Parses each catalog entry on its own so one bad entry does not hide
/// the rest.
fn catalog<T: serde::de::DeserializeOwned>(path: &Path, inputs: &mut Inputs) -> Vec<(String, T)> {
    let mut out = Vec::new();
    for (i, item) in json_array(path, inputs).into_iter().enumerate() {
        let field = entry_name(&item, i);
        match serde_json::from_value::<T>(item) {
            Ok(v) => out.push((field, v)),
            Err(e) => inputs.fatal(Diagnostic::error("parse", display(path), Some(field), e.to_string())),
        }
    }
    out
}

impl RunManifest {
    /// Reads a manifest and makes its paths absolute.
    pub fn load(path: &Path) -> Result<Self, Diagnostic> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            let kind = if e.kind() == std::io::ErrorKind::NotFound { "file_not_found" } else { "io" };
            Diagnostic::error(kind, display(path), None, format!("cannot read manifest: {e}"))
        })?;
        let mut m: RunManifest =
            serde_json::from_str(&text).map_err(|e| Diagnostic::error("parse", display(path), None, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut m.plan, &mut m.models, &mut m.configurations, &mut m.energy, &mut m.goals, &mut m.out] {
            *p = base.join(&*p);
        }
        for s in &mut m.scenarios {
            *s = base.join(&*s);
        }
        Ok(m)
    }

    /// Loads and validates every input, collecting all problems.
    pub fn inputs(&self, manifest_path: &Path) -> Inputs {
        let mut inputs = Inputs::default();
        let manifest = display(manifest_path);

        if let Some(h) = self.horizon {
            if h.is_nan() || h <= 0.0 {
                inputs.fatal(Diagnostic::error("invariant", &manifest, Some("horizon".into()), "horizon must be > 0"));
            }
        }
        if self.scenarios.is_empty() {
            inputs.fatal(Diagnostic::error("invariant", &manifest, Some("scenarios".into()), "lists no scenario"));
        }

        if let Some(text) = read(&self.plan, &mut inputs) {
            match load_floor_plan(&text) {
                Ok(plan) => inputs.plan = Some(plan),
                Err(e) => inputs.fatal(Diagnostic::error("invariant", display(&self.plan), None, e.to_string())),
            }
        }

        for path in &self.scenarios {
            let Some(text) = read(path, &mut inputs) else {
                continue;
            };
            match ScenarioSpec::from_json(&text) {
                Ok(spec) => {
                    let horizon = self.horizon.unwrap_or(spec.horizon);
                    if let Err(e) = step_count(self.dt, horizon) {
                        inputs.fatal(Diagnostic::error("invariant", &manifest, Some("dt".into()), format!("{}: {e}", spec.name)));
                    }
                    if inputs.scenarios.iter().any(|s| s.name == spec.name) {
                        inputs.fatal(Diagnostic::error("duplicate", display(path), Some("name".into()), format!("scenario `{}` listed twice", spec.name)));
                    }
                    inputs.scenarios.push(spec);
                }
                Err(e) => inputs.fatal(Diagnostic::error("invariant", display(path), Some(e.field.clone()), e.to_string())),
            }
        }

        let configurations: Vec<(String, Configuration)> = catalog(&self.configurations, &mut inputs);
        for (field, c) in &configurations {
            if let Err(e) = c.validate() {
                let field = match &e {
                    IotError::InvalidMode { device, .. } => format!("{field}.devices.{device}"),
                    _ => field.clone(),
                };
                inputs.diagnostics.push(Diagnostic::error("invariant", display(&self.configurations), Some(field), e.to_string()));
            }
        }
        inputs.configurations = configurations.into_iter().map(|(_, c)| c).collect();

        let models: Vec<(String, ArchitectureModel)> = catalog(&self.models, &mut inputs);
        if let Some(plan) = &inputs.plan {
            for (field, m) in &models {
                if let Err(e) = m.validate(plan) {
                    inputs.diagnostics.push(Diagnostic::error("invariant", display(&self.models), Some(field.clone()), e.to_string()));
                }
            }
        }
        for (field, m) in &models {
            for c in &inputs.configurations {
                if let Err(e) = c.covers(m) {
                    inputs.diagnostics.push(Diagnostic::error("coverage", display(&self.configurations), Some(field.clone()), e.to_string()));
                }
            }
        }
        inputs.models = models.into_iter().map(|(_, m)| m).collect();
        let names = inputs.models.iter().map(|m| m.name.clone()).collect();
        duplicates(&mut inputs, &self.models, names);
        let names = inputs.configurations.iter().map(|c| c.name.clone()).collect();
        duplicates(&mut inputs, &self.configurations, names);

        if let Some(text) = read(&self.energy, &mut inputs) {
            match crowdsense::pack::energy_from_json(&text) {
                Ok(energy) => {
                    if let Err(e) = energy.validate() {
                        inputs.fatal(Diagnostic::error("invariant", display(&self.energy), None, e.to_string()));
                    }
                    let mut used: Vec<_> = inputs.configurations.iter().flat_map(|c| c.devices.keys().copied()).collect();
                    used.sort();
                    used.dedup();
                    for d in used {
                        if let Err(e) = energy.get(d) {
                            inputs.fatal(Diagnostic::error("coverage", display(&self.energy), Some(d.as_str().into()), e.to_string()));
                        }
                    }
                    inputs.energy = Some(energy);
                }
                Err(e) => inputs.fatal(Diagnostic::error("parse", display(&self.energy), None, e.to_string())),
            }
        }

        if let Some(text) = read(&self.goals, &mut inputs) {
            match crowdsense::pack::goals_from_json(&text) {
                Ok(goals) => {
                    for (name, g) in &goals {
                        if let Err(e) = g.validate() {
                            inputs.fatal(Diagnostic::error("invariant", display(&self.goals), Some(name.clone()), e.to_string()));
                        }
                    }
                    let names: Vec<String> = inputs.scenarios.iter().map(|s| s.name.clone()).collect();
                    for name in names.into_iter().filter(|n| !goals.contains_key(n)) {
                        let message = format!("no goals for scenario `{name}`");
                        inputs.fatal(Diagnostic::error("coverage", display(&self.goals), Some(name), message));
                    }
                    inputs.goals = goals;
                }
                Err(e) => inputs.fatal(Diagnostic::error("parse", display(&self.goals), None, e.to_string())),
            }
        }
        inputs
    }
}

fn duplicates(inputs: &mut Inputs, file: &Path, mut names: Vec<String>) {
    names.sort();
    for w in names.windows(2) {
        if w[0] == w[1] {
            inputs.fatal(Diagnostic::error("duplicate", display(file), Some(w[0].clone()), format!("`{}` is defined twice", w[0])));
        }
    }
}
