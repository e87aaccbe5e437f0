use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use speechprint::classical_ml::{AlgoKind, AlgoSpec, Scenario};
use speechprint::crnn::{CrnnConfig, TrainConfig};
use speechprint::features::{FeatureConfig, FeatureSubset};

use crate::error::{CliError, Result};

/// Clip trimming applied before feature extraction, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimPolicy {
    pub min_secs: f64,
    pub max_secs: f64,
}

impl Default for TrimPolicy {
    fn default() -> Self {
        Self {
            min_secs: 4.0,
            max_secs: 5.0,
        }
    }
}

/// Everything a run depends on. Missing keys in a config file take their
/// default values; command-line flags override the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub features: FeatureConfig,
    /// `null` keeps clips whole.
    pub trim: Option<TrimPolicy>,
    pub scenario: Scenario,
    /// Feature columns used by classical models.
    pub subset: FeatureSubset,
    pub seed: u64,
    pub classifier: AlgoSpec,
    pub kfold: usize,
    /// Per-class cap on training rows.
    pub balance: Option<usize>,
    pub crnn: CrnnConfig,
    pub training: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            trim: Some(TrimPolicy::default()),
            scenario: Scenario::Binary,
            subset: FeatureSubset::All,
            seed: 0,
            classifier: AlgoSpec::default_for(AlgoKind::RusBoostedTrees, 0),
            kfold: 5,
            balance: None,
            crnn: CrnnConfig::default(),
            training: TrainConfig::default(),
        }
    }
}

/// Flag values that override a loaded config.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub scenario: Option<Scenario>,
    pub algo: Option<AlgoKind>,
    pub balance: Option<usize>,
    pub kfold: Option<usize>,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<PipelineConfig> {
        match path {
            None => Ok(PipelineConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("invalid config {}: {e}", p.display())))
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.set_seed(seed);
        }
        if let Some(s) = o.scenario {
            self.scenario = s;
        }
        if let Some(kind) = o.algo {
            self.classifier = AlgoSpec::default_for(kind, self.seed);
        }
        if o.balance.is_some() {
            self.balance = o.balance;
        }
        if let Some(k) = o.kfold {
            self.kfold = k;
        }
    }

    /// One seed drives every stochastic stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.training.seed = seed;
        self.crnn.init_seed = seed;
        match &mut self.classifier {
            AlgoSpec::BaggedTrees { seed: s, .. } | AlgoSpec::RusBoostedTrees { seed: s, .. } => *s = seed,
            _ => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.classifier.validate()?;
        self.training.validate()?;
        if self.kfold == 1 {
            return Err(CliError::Config("kfold must be 0 (no cross-validation) or at least 2".into()));
        }
        if self.balance == Some(0) {
            return Err(CliError::Config("balance must be positive".into()));
        }
        if let Some(t) = self.trim {
            if !(t.min_secs > 0.0 && t.min_secs <= t.max_secs) {
                return Err(CliError::Config(format!("invalid trim range [{}, {}]", t.min_secs, t.max_secs)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"seed": 4, "kfold": 3}"#).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.kfold, 3);
        assert_eq!(cfg.features, FeatureConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sede": 4}"#).is_err());
    }

    #[test]
    fn seed_reaches_every_stage() {
        let mut cfg = PipelineConfig::default();
        cfg.apply(&Overrides {
            seed: Some(9),
            algo: Some(AlgoKind::BaggedTrees),
            ..Overrides::default()
        });
        assert_eq!(cfg.classifier.seed(), Some(9));
        assert_eq!(cfg.training.seed, 9);
        assert_eq!(cfg.crnn.init_seed, 9);
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = PipelineConfig::default();
        let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
