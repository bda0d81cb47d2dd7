//! Experiment configuration. One TOML file describes the market, the agents,
//! the oracle, and the batch parameters; command-line flags override single
//! values on top.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{DataAgent, InfoSetting, TaskAgent};
use crate::learner::LearnerParams;
use crate::market::{CostKind, CostModel, MarketError, QuotedPrice, TaskEconomics, Tolerances};
use crate::strategy::QuoteRanges;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which buyer/seller pairing runs. The two reference agents each replace
/// one side while the other stays strategic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Strategic,
    IncreasePrice,
    RandomBundle,
}

impl AgentKind {
    pub fn parties(self, growth: f64) -> (TaskAgent, DataAgent) {
        match self {
            AgentKind::Strategic => (TaskAgent::Strategic, DataAgent::Strategic),
            AgentKind::IncreasePrice => (TaskAgent::IncreasePrice { growth }, DataAgent::Strategic),
            AgentKind::RandomBundle => (TaskAgent::Strategic, DataAgent::RandomBundle),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Strategic => "strategic",
            AgentKind::IncreasePrice => "increase_price",
            AgentKind::RandomBundle => "random_bundle",
        }
    }
}

fn default_repetitions() -> usize {
    100
}
fn default_seed_base() -> u64 {
    1000
}
fn default_growth() -> f64 {
    1.1
}
fn default_agent() -> AgentKind {
    AgentKind::Strategic
}
fn default_setting() -> InfoSetting {
    InfoSetting::Perfect
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_seed_base")]
    pub seed_base: u64,
    #[serde(default = "default_agent")]
    pub agent: AgentKind,
    /// Escalation factor for the increase-price reference buyer.
    #[serde(default = "default_growth")]
    pub growth: f64,
    #[serde(default = "default_setting")]
    pub setting: InfoSetting,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            repetitions: default_repetitions(),
            seed_base: default_seed_base(),
            agent: default_agent(),
            growth: default_growth(),
            setting: default_setting(),
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomicsSection {
    pub unit_value: f64,
    pub budget: f64,
}

fn default_max_rounds() -> u32 {
    500
}
fn default_explore_rounds() -> u32 {
    100
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSection {
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u32,
    #[serde(default = "default_explore_rounds")]
    pub explore_rounds: u32,
    #[serde(default)]
    pub sample_count: Option<usize>,
}

impl Default for SessionSection {
    fn default() -> Self {
        Self {
            max_rounds: default_max_rounds(),
            explore_rounds: default_explore_rounds(),
            sample_count: None,
        }
    }
}

/// Acceptance slacks; unset slots fall back to `eps`, and `eps` falls back
/// to the setting- and dataset-appropriate default.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesSection {
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps_d: Option<f64>,
    #[serde(default)]
    pub eps_t: Option<f64>,
    #[serde(default)]
    pub eps_dc: Option<f64>,
    #[serde(default)]
    pub eps_tc: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuoteSection {
    pub p: f64,
    pub base: f64,
    pub cap: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangesSection {
    pub p: (f64, f64),
    pub base: (f64, f64),
}

/// Known dataset tags carrying published tolerance defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    Titanic,
    Credit,
    Adult,
}

impl DatasetName {
    /// Published default gain slack for each dataset.
    pub fn default_eps(self) -> f64 {
        match self {
            DatasetName::Titanic => 1e-3,
            DatasetName::Credit => 1e-5,
            DatasetName::Adult => 5e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSection {
    /// Fixed gain per bundle id.
    Table { gains: BTreeMap<String, f64> },
    /// Gain from per-feature weights with diminishing returns.
    Parametric { gmax: f64, weights: BTreeMap<String, f64> },
    /// Gains measured by training the built-in learner on a vertically
    /// split CSV.
    Dataset {
        csv: PathBuf,
        schema: PathBuf,
        #[serde(default)]
        name: Option<DatasetName>,
        #[serde(default)]
        params: LearnerParams,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleSection {
    pub id: String,
    pub features: Vec<String>,
    pub p: f64,
    pub base: f64,
}

fn default_bundle_count() -> usize {
    32
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CatalogSection {
    Explicit { bundles: Vec<BundleSection> },
    /// Seeded random bundles over the data party's feature names; reserved
    /// prices scale with bundle size as p = alpha·|F|, base = beta·|F|.
    Sampled {
        #[serde(default = "default_bundle_count")]
        count: usize,
        alpha: f64,
        beta: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSection {
    None,
    Constant {
        c: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    Linear {
        a: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    Exponential {
        a: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

impl CostSection {
    pub fn model(&self) -> Result<CostModel, MarketError> {
        match *self {
            CostSection::None => Ok(CostModel::free()),
            CostSection::Constant { c, scale } => CostModel::new(CostKind::Constant { c }, scale),
            CostSection::Linear { a, scale } => CostModel::new(CostKind::Linear { a }, scale),
            CostSection::Exponential { a, scale } => {
                CostModel::new(CostKind::Exponential { a }, scale)
            }
        }
    }

    /// Directory- and CSV-safe tag, unique within a sweep.
    pub fn label(&self) -> String {
        let tag = |a: f64, scale: f64| {
            if scale == 1.0 {
                format!("{a}")
            } else {
                format!("{a}_x{scale}")
            }
        };
        match *self {
            CostSection::None => "none".into(),
            CostSection::Constant { c, scale } => format!("const_{}", tag(c, scale)),
            CostSection::Linear { a, scale } => format!("linear_{}", tag(a, scale)),
            CostSection::Exponential { a, scale } => format!("exp_{}", tag(a, scale)),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub agent: Option<AgentKind>,
    pub setting: Option<InfoSetting>,
    pub out_dir: Option<PathBuf>,
    pub repetitions: Option<usize>,
    pub costs: Option<Vec<CostSection>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub economics: EconomicsSection,
    pub target_gain: f64,
    #[serde(default)]
    pub tolerances: TolerancesSection,
    #[serde(default)]
    pub session: SessionSection,
    #[serde(default)]
    pub initial_quote: Option<QuoteSection>,
    #[serde(default)]
    pub quote_ranges: Option<RangesSection>,
    pub oracle: OracleSection,
    pub catalog: CatalogSection,
    #[serde(default)]
    pub costs: Vec<CostSection>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.experiment.seed_base = seed;
        }
        if let Some(agent) = o.agent {
            self.experiment.agent = agent;
        }
        if let Some(setting) = o.setting {
            self.experiment.setting = setting;
        }
        if let Some(dir) = &o.out_dir {
            self.experiment.out_dir = Some(dir.clone());
        }
        if let Some(reps) = o.repetitions {
            self.experiment.repetitions = reps;
        }
        if let Some(costs) = &o.costs {
            self.costs = costs.clone();
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.experiment.repetitions == 0 {
            return Err(ConfigError::Invalid("repetitions must be at least 1".into()));
        }
        if !(self.target_gain.is_finite() && self.target_gain > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "target gain {} must be finite and positive",
                self.target_gain
            )));
        }
        if !(self.experiment.growth.is_finite() && self.experiment.growth > 1.0) {
            return Err(ConfigError::Invalid(format!(
                "increase-price growth {} must exceed 1",
                self.experiment.growth
            )));
        }
        self.economics()?;
        for cost in &self.costs {
            cost.model()?;
        }
        match &self.catalog {
            CatalogSection::Explicit { bundles } => {
                if bundles.is_empty() {
                    return Err(ConfigError::Invalid("the catalog has no bundles".into()));
                }
                if let OracleSection::Table { gains } = &self.oracle {
                    for b in bundles {
                        if !gains.contains_key(&b.id) {
                            return Err(ConfigError::Invalid(format!(
                                "bundle {} has no entry in the gain table",
                                b.id
                            )));
                        }
                    }
                }
                if let OracleSection::Parametric { weights, .. } = &self.oracle {
                    for b in bundles {
                        for f in &b.features {
                            if !weights.contains_key(f) {
                                return Err(ConfigError::Invalid(format!(
                                    "feature {f} of bundle {} has no weight",
                                    b.id
                                )));
                            }
                        }
                    }
                }
            }
            CatalogSection::Sampled { count, alpha, beta, .. } => {
                if *count == 0 {
                    return Err(ConfigError::Invalid("sampled catalogs need count ≥ 1".into()));
                }
                if !(*alpha > 0.0 && *beta > 0.0) {
                    return Err(ConfigError::Invalid(
                        "reserved-price factors alpha and beta must be positive".into(),
                    ));
                }
                if matches!(self.oracle, OracleSection::Table { .. }) {
                    return Err(ConfigError::Invalid(
                        "a fixed gain table cannot price sampled bundles; list them explicitly"
                            .into(),
                    ));
                }
            }
        }
        if self.experiment.setting == InfoSetting::Imperfect
            && self.experiment.agent != AgentKind::Strategic
        {
            return Err(ConfigError::Invalid(
                "reference agents only run under full information".into(),
            ));
        }
        Ok(())
    }

    pub fn economics(&self) -> Result<TaskEconomics, MarketError> {
        TaskEconomics::new(self.economics.unit_value, self.economics.budget)
    }

    /// Slacks after applying fallbacks: explicit value, then `eps`, then the
    /// dataset default (perfect) or the published estimated-gain default
    /// (imperfect).
    pub fn resolved_tolerances(&self) -> Result<Tolerances, MarketError> {
        let base = match (&self.oracle, self.experiment.setting) {
            (_, InfoSetting::Imperfect) => 5e-2,
            (OracleSection::Dataset { name: Some(n), .. }, _) => n.default_eps(),
            _ => 1e-3,
        };
        let t = &self.tolerances;
        let eps = t.eps.unwrap_or(base);
        Tolerances::new(
            t.eps_d.unwrap_or(eps),
            t.eps_t.unwrap_or(eps),
            t.eps_dc.unwrap_or(eps),
            t.eps_tc.unwrap_or(eps),
        )
    }

    pub fn initial_quote(&self) -> Result<Option<QuotedPrice>, MarketError> {
        self.initial_quote.map(|q| QuotedPrice::new(q.p, q.base, q.cap)).transpose()
    }

    pub fn quote_ranges(&self) -> Option<QuoteRanges> {
        self.quote_ranges.map(|r| QuoteRanges { p: r.p, base: r.base })
    }

    /// Cost list actually swept; an empty list means one free run.
    pub fn cost_list(&self) -> Vec<CostSection> {
        if self.costs.is_empty() {
            vec![CostSection::None]
        } else {
            self.costs.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        target_gain = 0.1

        [economics]
        unit_value = 50.0
        budget = 10.0

        [oracle]
        kind = "table"
        [oracle.gains]
        F1 = 0.05
        F2 = 0.1

        [catalog]
        kind = "explicit"
        [[catalog.bundles]]
        id = "F1"
        features = ["a"]
        p = 5.0
        base = 0.5
        [[catalog.bundles]]
        id = "F2"
        features = ["b", "c"]
        p = 8.0
        base = 1.0
    "#;

    #[test]
    fn minimal_file_fills_in_documented_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.experiment.repetitions, 100);
        assert_eq!(cfg.experiment.seed_base, 1000);
        assert_eq!(cfg.experiment.agent, AgentKind::Strategic);
        assert_eq!(cfg.session.max_rounds, 500);
        assert_eq!(cfg.cost_list(), vec![CostSection::None]);
        let tol = cfg.resolved_tolerances().unwrap();
        assert_eq!(tol.eps_d, 1e-3);
        assert_eq!(tol.eps_tc, 1e-3);
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.apply(&Overrides {
            seed: Some(7),
            agent: Some(AgentKind::IncreasePrice),
            repetitions: Some(3),
            ..Overrides::default()
        });
        assert_eq!(cfg.experiment.seed_base, 7);
        assert_eq!(cfg.experiment.agent, AgentKind::IncreasePrice);
        assert_eq!(cfg.experiment.repetitions, 3);
    }

    #[test]
    fn dataset_tags_set_published_tolerance_defaults() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.oracle = OracleSection::Dataset {
            csv: "x.csv".into(),
            schema: "x.toml".into(),
            name: Some(DatasetName::Credit),
            params: LearnerParams::default(),
        };
        assert_eq!(cfg.resolved_tolerances().unwrap().eps_t, 1e-5);

        cfg.experiment.setting = InfoSetting::Imperfect;
        assert_eq!(cfg.resolved_tolerances().unwrap().eps_d, 5e-2);

        cfg.tolerances.eps_t = Some(2e-4);
        assert_eq!(cfg.resolved_tolerances().unwrap().eps_t, 2e-4);
        assert_eq!(cfg.resolved_tolerances().unwrap().eps_d, 5e-2);
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.experiment.repetitions = 0;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));

        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.catalog = CatalogSection::Sampled { count: 8, alpha: 0.5, beta: 0.1, seed: None };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("gain table"), "{err}");

        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.experiment.setting = InfoSetting::Imperfect;
        cfg.experiment.agent = AgentKind::RandomBundle;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.oracle = OracleSection::Table { gains: BTreeMap::from([("F1".into(), 0.05)]) };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("F2"), "{err}");
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        let text = format!("{MINIMAL}\n[session]\nmax_runds = 3\n");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&text),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn cost_labels_are_stable() {
        assert_eq!(CostSection::None.label(), "none");
        assert_eq!(CostSection::Linear { a: 0.1, scale: 1.0 }.label(), "linear_0.1");
        assert_eq!(CostSection::Exponential { a: 1.01, scale: 1.0 }.label(), "exp_1.01");
        assert_eq!(CostSection::Constant { c: 0.5, scale: 10.0 }.label(), "const_0.5_x10");
    }
}
