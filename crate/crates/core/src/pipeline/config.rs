use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::Hyper;
use crate::data::Recipe;
use crate::dp::PrivacyBudget;
use crate::error::{Error, Result};
use crate::synth::{SynthSettings, REGISTERED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    RealTest,
    SyntheticTest,
}

/// Where the synthetic test set comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticTestSource {
    /// A second sample from the model fitted for the synthetic train set.
    SameFit,
    /// A separately fitted model (a second ε release).
    SeparateFit,
}

fn default_split() -> f64 {
    0.8
}

fn default_delta() -> f64 {
    PrivacyBudget::DEFAULT_DELTA
}

fn default_modes() -> Vec<EvalMode> {
    vec![EvalMode::RealTest, EvalMode::SyntheticTest]
}

fn default_source() -> SyntheticTestSource {
    SyntheticTestSource::SameFit
}

/// One benchmark grid, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in recipe id or path to a recipe file.
    pub dataset: String,
    /// Input CSV. Relative paths resolve against the config file's directory.
    pub data: PathBuf,
    pub synthesizers: Vec<String>,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub rounds: usize,
    pub seed: u64,
    #[serde(default = "default_split")]
    pub split_fraction: f64,
    #[serde(default = "default_modes")]
    pub modes: Vec<EvalMode>,
    #[serde(default = "default_source")]
    pub synthetic_test_source: SyntheticTestSource,
    #[serde(default)]
    pub classifier: Hyper,
    #[serde(default)]
    pub synth: SynthSettings,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))
    }

    /// Parses and validates a config file, resolving `data` against the
    /// file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if cfg.data.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data = dir.join(&cfg.data);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if let Err(e) = Recipe::resolve(&self.dataset) {
            errs.push(format!("dataset: {e}"));
        }
        if self.synthesizers.is_empty() {
            errs.push("synthesizers: list is empty".into());
        }
        for s in &self.synthesizers {
            if !REGISTERED.contains(&s.as_str()) {
                errs.push(format!("synthesizers: unknown `{s}` (registered: {})", REGISTERED.join(", ")));
            }
        }
        for (i, s) in self.synthesizers.iter().enumerate() {
            if self.synthesizers[..i].contains(s) {
                errs.push(format!("synthesizers: `{s}` listed twice"));
            }
        }
        if self.epsilons.is_empty() {
            errs.push("epsilons: list is empty".into());
        }
        for &e in &self.epsilons {
            if !(e > 0.0 && e.is_finite()) {
                errs.push(format!("epsilons: {e} is not > 0"));
            }
        }
        for (i, e) in self.epsilons.iter().enumerate() {
            if self.epsilons[..i].contains(e) {
                errs.push(format!("epsilons: {e} listed twice"));
            }
        }
        if !(0.0..1.0).contains(&self.delta) {
            errs.push(format!("delta: {} is not in [0,1)", self.delta));
        }
        if self.rounds == 0 {
            errs.push("rounds: must be >= 1".into());
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            errs.push(format!("split_fraction: {} is not in (0,1)", self.split_fraction));
        }
        if self.modes.is_empty() {
            errs.push("modes: list is empty".into());
        }
        if let Err(e) = self.classifier.validate() {
            errs.push(format!("classifier: {e}"));
        }
        if let Err(e) = self.synth.mwem.validate() {
            errs.push(format!("synth.mwem: {e}"));
        }
        if self.synth.privbayes.k == 0 {
            errs.push("synth.privbayes.k: must be >= 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn wants(&self, mode: EvalMode) -> bool {
        self.modes.contains(&mode)
    }

    /// Number of synthesizer cells in the grid (the baseline is extra).
    pub fn cell_count(&self) -> usize {
        self.synthesizers.len() * self.epsilons.len() * self.rounds
    }
}
