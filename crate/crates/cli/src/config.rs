//! Experiment configuration: one TOML file, every section optional, flags
//! applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ssal_core::bench::BenchConfig;
use ssal_core::data::{load_dataset, synth_drift_generate, Dataset, DriftGeneratorConfig};
use ssal_core::experiment::split_months;
use ssal_core::selection::{SelectorConfig, SelectorKind};
use ssal_core::stream::{StreamConfig, StreamSetup};
use ssal_core::trainer::TrainConfig;
use ssal_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_months: usize,
    /// Months after the training period left out of everything.
    pub validation_months: usize,
    /// Stream length; all remaining months when absent.
    pub stream_months: Option<usize>,
    pub label_ratio: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_months: 12,
            validation_months: 0,
            stream_months: None,
            label_ratio: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub selectors: Vec<SelectorKind>,
    pub budgets: Vec<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            selectors: SelectorKind::ALL.to_vec(),
            budgets: vec![50, 100, 200, 400],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Label noise of the initial labeled set for `train` and `stream`.
    pub rate: f64,
    /// Rates swept by `noise`.
    pub rates: Vec<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            rate: 0.0,
            rates: (0..10).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory written by `synth` (or any dataset in that format).
    pub dataset: Option<PathBuf>,
    pub generator: Option<DriftGeneratorConfig>,
    pub split: SplitConfig,
    pub hidden: Vec<usize>,
    /// Initial training.
    pub train: TrainConfig,
    pub stream: StreamConfig,
    pub ablation: AblationConfig,
    pub noise: NoiseConfig,
    pub bench: BenchConfig,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            generator: None,
            split: SplitConfig::default(),
            hidden: vec![64, 32],
            train: TrainConfig::default(),
            stream: StreamConfig::default(),
            ablation: AblationConfig::default(),
            noise: NoiseConfig::default(),
            bench: BenchConfig::default(),
            seeds: vec![0],
            out: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub selector: Option<SelectorKind>,
    pub label_ratio: Option<f64>,
    pub out: Option<PathBuf>,
}

fn check_prob(path: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config {
            path: path.into(),
            message: format!("{v} outside [0, 1]"),
        })
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            path: e.span().map(|s| format!("byte {}..{}", s.start, s.end)).unwrap_or_else(|| "config".into()),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    /// Applies flag values; `--seed` sets the run seeds and every generator
    /// seed.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
            self.bench.seed = seed;
            if let Some(g) = &mut self.generator {
                g.seed = seed;
            }
        }
        if let Some(k) = o.budget {
            self.stream.budget = k;
            self.bench.budget = k;
            self.ablation.budgets = vec![k];
        }
        if let Some(kind) = o.selector {
            self.stream.selector = SelectorConfig {
                kind,
                ..self.stream.selector
            };
            self.ablation.selectors = vec![kind];
        }
        if let Some(r) = o.label_ratio {
            self.split.label_ratio = r;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        self.stream.seeds = self.seeds.clone();
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_some() && self.generator.is_some() {
            return Err(Error::Config {
                path: "dataset".into(),
                message: "set either `dataset` or `[generator]`, not both".into(),
            });
        }
        if self.seeds.is_empty() {
            return Err(Error::Config {
                path: "seeds".into(),
                message: "at least one seed is required".into(),
            });
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config {
                path: "hidden".into(),
                message: "needs at least one layer, all widths >= 1".into(),
            });
        }
        if self.split.train_months == 0 {
            return Err(Error::Config {
                path: "split.train_months".into(),
                message: "must be >= 1".into(),
            });
        }
        check_prob("split.label_ratio", self.split.label_ratio)?;
        check_prob("noise.rate", self.noise.rate)?;
        for r in &self.noise.rates {
            check_prob("noise.rates", *r)?;
        }
        if let Some(g) = &self.generator {
            g.validate()?;
        }
        self.train.validate()?;
        self.stream.validate()
    }

    pub fn generator_or_default(&self) -> DriftGeneratorConfig {
        self.generator.clone().unwrap_or_else(|| DriftGeneratorConfig {
            seed: self.seeds[0],
            ..Default::default()
        })
    }

    /// The configured dataset, or a generated one.
    pub fn dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            Some(dir) => Ok(load_dataset(dir)?.1),
            None => Ok(synth_drift_generate(&self.generator_or_default())?.dataset),
        }
    }

    pub fn stream_setup(&self) -> Result<StreamSetup> {
        let data = self.dataset()?;
        let (train, months) = split_months(
            &data,
            self.split.train_months,
            self.split.validation_months,
            self.split.stream_months,
        )?;
        Ok(StreamSetup {
            train,
            months,
            label_ratio: self.split.label_ratio,
            noise_rate: self.noise.rate,
            hidden: self.hidden.clone(),
            initial: self.train,
        })
    }
}
