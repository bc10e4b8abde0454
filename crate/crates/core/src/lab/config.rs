//! Experiment configuration (TOML), with every default materialized on load.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit_laws::Regime;
use crate::offspring::{OffspringKind, OffspringLaw, DEFAULT_COUNT_CAP, DEFAULT_POPULATION_CAP};
use crate::oracle::GridOptions;
use crate::steplaw::StepLaw;

use super::scenario::ScenarioId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub r: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { r: 0.5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierOverrides {
    pub delta: Option<f64>,
    pub t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Grid spacing for the walk law.
    pub h: f64,
    pub cell_cap: usize,
    pub direct_limit: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let g = GridOptions::default();
        Self { h: 1.0 / 16.0, cell_cap: g.cell_cap, direct_limit: g.direct_limit }
    }
}

impl OracleConfig {
    pub fn options(&self) -> GridOptions {
        GridOptions { cell_cap: self.cell_cap, direct_limit: self.direct_limit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WPoolConfig {
    pub n_w: u32,
    pub count: usize,
    pub cap: u64,
}

impl Default for WPoolConfig {
    fn default() -> Self {
        Self { n_w: 30, count: 10_000, cap: DEFAULT_COUNT_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioId,
    #[serde(default = "defaults::seed")]
    pub master_seed: u64,
    #[serde(default = "defaults::replicates")]
    pub replicates: u64,
    #[serde(default = "defaults::n_grid")]
    pub n_grid: Vec<u32>,
    #[serde(default = "defaults::top_k")]
    pub top_k: usize,
    #[serde(default = "defaults::population_cap")]
    pub population_cap: u64,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub step: StepConfig,
    #[serde(default = "defaults::offspring")]
    pub offspring: OffspringKind,
    #[serde(default)]
    pub classifier: ClassifierOverrides,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub w_pool: WPoolConfig,
}

mod defaults {
    use super::*;

    pub fn seed() -> u64 {
        20_240_601
    }
    pub fn replicates() -> u64 {
        2000
    }
    pub fn n_grid() -> Vec<u32> {
        vec![8, 12, 16, 20]
    }
    pub fn top_k() -> usize {
        64
    }
    pub fn population_cap() -> u64 {
        DEFAULT_POPULATION_CAP
    }
    pub fn output_dir() -> PathBuf {
        PathBuf::from("brw-out")
    }
    pub fn offspring() -> OffspringKind {
        OffspringKind::Deterministic { b: 2 }
    }
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(scenario: ScenarioId) -> Self {
        Self {
            scenario,
            master_seed: defaults::seed(),
            replicates: defaults::replicates(),
            n_grid: defaults::n_grid(),
            top_k: defaults::top_k(),
            population_cap: defaults::population_cap(),
            output_dir: defaults::output_dir(),
            step: StepConfig::default(),
            offspring: defaults::offspring(),
            classifier: ClassifierOverrides::default(),
            oracle: OracleConfig::default(),
            w_pool: WPoolConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn horizon(&self) -> u32 {
        self.n_grid.iter().copied().max().unwrap_or(0)
    }

    pub fn step_law(&self) -> Result<StepLaw> {
        StepLaw::symmetric_weibull(self.step.r).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn offspring_law(&self) -> Result<OffspringLaw> {
        OffspringLaw::new(self.offspring.clone()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.n_grid.is_empty() {
            return bad("n_grid must not be empty".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_grid must be strictly increasing".into());
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if !(self.oracle.h > 0.0) {
            return bad("oracle.h must be positive".into());
        }
        if self.w_pool.count == 0 {
            return bad("w_pool.count must be at least 1".into());
        }
        self.step_law()?;
        let law = self.offspring_law()?;
        let r = self.step.r;
        let regime = Regime::of(r);
        match self.scenario.required_regime() {
            Some(Regime::Crit) if regime != Regime::Crit => {
                return bad(format!("scenario {} requires r = 2/3, got {r}", self.scenario));
            }
            Some(Regime::Super) if regime != Regime::Super => {
                return bad(format!("scenario {} requires r > 2/3, got {r}", self.scenario));
            }
            Some(Regime::Sub) if regime != Regime::Sub => {
                return bad(format!("scenario {} requires r < 2/3, got {r}", self.scenario));
            }
            _ => {}
        }
        if self.scenario == ScenarioId::IndepLaw && regime == Regime::Super {
            return bad("indep-law needs r ≤ 2/3".into());
        }
        if self.scenario == ScenarioId::Envelope && self.n_grid[0] < 3 {
            return bad("envelope needs n ≥ 3 throughout n_grid".into());
        }
        if law.q() >= 1.0 {
            return bad("offspring law dies out almost surely".into());
        }
        let constants = self.step_law()?.derive_constants(law.mean()).map_err(|e| Error::Config(e.to_string()))?;
        crate::engine::ClassifierConfig::new(&constants, self.horizon(), self.classifier.delta, self.classifier.t)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}
