//! Run configuration: one TOML file describing the model, the simulation,
//! the truncation box and the estimation, analysis and ranking settings.
//!
//! ```toml
//! schema = "qrhawkes-model/1"
//!
//! [model]
//! preset = { name = "default-queue-reactive" }
//!
//! [simulation]
//! initial = { q1 = 2, q2 = 2, spread = 1 }
//! events = 100000
//! seed = 7
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{AgentId, OrderBookState};
use crate::estimate::ingest::IngestionConfig;
use crate::estimate::EstimateConfig;
use crate::intensity::stability::StabilityConfig;
use crate::intensity::{ClassSpec, Family, IntensityModel, KernelSpec};
use crate::model::{MarketModel, ModelError};
use crate::presets;
use crate::rank::{RankConfig, ShareBasis};
use crate::replenish::Replenishment;
use crate::sim::{Horizon, SimConfig};
use crate::steady::{AnalysisConfig, Truncation};

pub const CONFIG_SCHEMA: &str = "qrhawkes-model/1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported schema {found:?}; expected {CONFIG_SCHEMA:?}")]
    Schema { found: String },
    #[error("configuration has no [model] section")]
    NoModel,
    #[error("[model]: {0}")]
    Incomplete(String),
    #[error("[model]: {0}")]
    Model(#[from] ModelError),
    #[error("[simulation]: {0}")]
    Simulation(String),
}

/// Named models with their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name", deny_unknown_fields)]
pub enum Preset {
    DefaultQueueReactive,
    DefaultHawkes { alpha: f64, beta: f64 },
    BirthDeath { insert: f64, consume: f64 },
    BirthDeathAgents { agents: Vec<(AgentId, f64, f64)> },
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::DefaultQueueReactive => "default-queue-reactive",
            Preset::DefaultHawkes { .. } => "default-hawkes",
            Preset::BirthDeath { .. } => "birth-death",
            Preset::BirthDeathAgents { .. } => "birth-death-agents",
        }
    }

    pub fn build(&self) -> MarketModel {
        match self {
            Preset::DefaultQueueReactive => presets::default_queue_reactive(),
            Preset::DefaultHawkes { alpha, beta } => presets::default_hawkes(*alpha, *beta),
            Preset::BirthDeath { insert, consume } => presets::birth_death(*insert, *consume),
            Preset::BirthDeathAgents { agents } => presets::birth_death_agents(agents),
        }
    }
}

/// Either a preset or an explicit class list; explicit fields override the
/// preset's.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Option<Preset>,
    pub family: Option<Family>,
    pub classes: Option<Vec<ClassSpec>>,
    pub kernel: Option<KernelSpec>,
    pub tick_size: Option<f64>,
    pub units_per_aes: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub initial: OrderBookState,
    /// Number of events; exclusive with `time_s`.
    pub events: Option<usize>,
    /// Horizon in seconds.
    pub time_s: Option<f64>,
    pub seed: u64,
    pub rate_cap: f64,
    pub headroom: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            initial: OrderBookState {
                q1: 2,
                q2: 2,
                spread: 1,
            },
            events: None,
            time_s: None,
            seed: 1,
            rate_cap: 1e7,
            headroom: 2.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSection {
    pub share: ShareBasis,
    /// Agents to rank; empty ranks every attributed agent.
    pub agents: Vec<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub model: Option<ModelSection>,
    pub replenishment: Option<Replenishment>,
    pub simulation: SimulationSection,
    pub truncation: Truncation,
    pub analysis: AnalysisConfig,
    pub stability: StabilityConfig,
    pub ingest: IngestionConfig,
    pub estimate: EstimateConfig,
    pub rank: RankSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: CONFIG_SCHEMA.to_string(),
            model: None,
            replenishment: None,
            simulation: SimulationSection::default(),
            truncation: Truncation::default(),
            analysis: AnalysisConfig::default(),
            stability: StabilityConfig::default(),
            ingest: IngestionConfig::default(),
            estimate: EstimateConfig::default(),
            rank: RankSection::default(),
        }
    }
}

impl RunConfig {
    /// The default queue-reactive market simulated for `events` events.
    pub fn default_preset(events: usize, seed: u64) -> Self {
        RunConfig {
            model: Some(ModelSection {
                preset: Some(Preset::DefaultQueueReactive),
                ..Default::default()
            }),
            simulation: SimulationSection {
                events: Some(events),
                seed,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(ConfigError::Schema { found: cfg.schema });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn market_model(&self) -> Result<MarketModel, ConfigError> {
        let section = self.model.as_ref().ok_or(ConfigError::NoModel)?;
        let mut model = match (&section.preset, &section.classes) {
            (Some(p), _) => p.build(),
            (None, Some(classes)) => {
                let replenishment = self
                    .replenishment
                    .clone()
                    .ok_or_else(|| ConfigError::Incomplete("explicit classes need a [replenishment] table".into()))?;
                MarketModel {
                    intensity: IntensityModel {
                        family: section.family.unwrap_or(Family::QueueReactive),
                        classes: classes.clone(),
                        kernel: KernelSpec::Zero,
                    },
                    replenishment,
                    tick_size: 0.01,
                    units_per_aes: 1,
                }
            }
            (None, None) => return Err(ConfigError::Incomplete("set either `preset` or `classes`".into())),
        };
        if let Some(c) = &section.classes {
            model.intensity.classes = c.clone();
        }
        if let Some(f) = section.family {
            model.intensity.family = f;
        }
        if let Some(k) = &section.kernel {
            model.intensity.kernel = k.clone();
        }
        if let Some(r) = &self.replenishment {
            model.replenishment = r.clone();
        }
        if let Some(t) = section.tick_size {
            model.tick_size = t;
        }
        if let Some(u) = section.units_per_aes {
            model.units_per_aes = u;
        }
        model.validate()?;
        Ok(model)
    }

    /// Label written into simulated logs.
    pub fn model_id(&self) -> String {
        match self.model.as_ref().and_then(|m| m.preset.as_ref()) {
            Some(p) => p.name().to_string(),
            None => "explicit".to_string(),
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let s = &self.simulation;
        let horizon = match (s.events, s.time_s) {
            (Some(n), None) => Horizon::Events(n),
            (None, Some(t)) => Horizon::Time(t),
            (None, None) => return Err(ConfigError::Simulation("set `events` or `time_s`".into())),
            (Some(_), Some(_)) => return Err(ConfigError::Simulation("`events` and `time_s` are exclusive".into())),
        };
        Ok(SimConfig {
            initial: s.initial,
            horizon,
            seed: s.seed,
            rate_cap: s.rate_cap,
            headroom: s.headroom,
            model_id: self.model_id(),
        })
    }

    /// Analysis settings with the model's tick size when one is configured.
    pub fn analysis_config(&self) -> AnalysisConfig {
        let mut a = self.analysis;
        if a.tick_size.is_none() {
            a.tick_size = self.market_model().ok().map(|m| m.tick_size);
        }
        a
    }

    pub fn rank_config(&self) -> RankConfig {
        RankConfig {
            analysis: self.analysis_config(),
            truncation: Some(self.truncation),
            share: self.rank.share,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_round_trip() {
        let cfg = RunConfig::default_preset(1000, 3);
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.market_model().unwrap(), presets::default_queue_reactive());
        assert_eq!(back.sim_config().unwrap().horizon, Horizon::Events(1000));
    }

    #[test]
    fn explicit_model() {
        let text = r#"
schema = "qrhawkes-model/1"

[model]
family = "hawkes-qr"
tick_size = 0.5

[[model.classes]]
kind = "insert"
side = "bid"
size = 1
agent = 1
base = { type = "constant", rate = 1.0 }

[[model.classes]]
kind = "consume"
side = "bid"
size = 1
agent = 1
base = { type = "queue", rates = [0.0, 1.0, 2.0] }

[model.kernel]
type = "separable"
shape = { type = "exponential", beta = 1.0 }
alpha = [[0.1, 0.0], [0.0, 0.1]]

[replenishment]
type = "depleted-side"
queue = [1.0]
spread = [1.0]

[simulation]
time_s = 10.0
"#;
        let cfg = RunConfig::from_toml(text).unwrap();
        let m = cfg.market_model().unwrap();
        assert_eq!(m.intensity.family, Family::HawkesQr);
        assert_eq!(m.intensity.n_classes(), 2);
        assert_eq!(m.tick_size, 0.5);
        assert!(!m.intensity.kernel.is_zero());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            RunConfig::from_toml("schema = \"qrhawkes-model/1\"\nbogus = 1\n"),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(RunConfig::from_toml("schema = \"other/2\"\n"), Err(ConfigError::Schema { .. })));
        let no_kernel = "schema = \"qrhawkes-model/1\"\n[model]\npreset = { name = \"default-queue-reactive\" }\nfamily = \"hawkes-qr\"\n";
        let cfg = RunConfig::from_toml(no_kernel).unwrap();
        assert!(matches!(cfg.market_model(), Err(ConfigError::Model(_))));
        assert!(matches!(RunConfig::default().market_model(), Err(ConfigError::NoModel)));
    }
}
