use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::ClassifierModel;
use super::{MlError, Result};
use crate::features::FeatureConfig;

pub const CLASSIFIER_FORMAT: &str = "speechprint-classifier";
pub const CLASSIFIER_VERSION: u32 = 1;

/// On-disk envelope for a trained classifier. Carries the feature
/// configuration it was trained under so a mismatch can be refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierFile {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub feature_config: FeatureConfig,
    pub model: ClassifierModel,
}

impl ClassifierFile {
    pub fn new(model: ClassifierModel, feature_config: FeatureConfig) -> Self {
        Self {
            format: CLASSIFIER_FORMAT.into(),
            version: CLASSIFIER_VERSION,
            config_hash: feature_config.fingerprint(),
            feature_config,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ClassifierFile = serde_json::from_str(text)?;
        if file.format != CLASSIFIER_FORMAT {
            return Err(MlError::Format(format!("not a classifier file (`{}`)", file.format)));
        }
        if file.version != CLASSIFIER_VERSION {
            return Err(MlError::Format(format!("unsupported version {}", file.version)));
        }
        if file.feature_config.fingerprint() != file.config_hash {
            return Err(MlError::Format("stored config hash does not match its config".into()));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Refuses to proceed unless `expected` matches the training config.
    pub fn check_config(&self, expected: &FeatureConfig) -> Result<()> {
        let hash = expected.fingerprint();
        if hash != self.config_hash {
            return Err(MlError::Config(format!(
                "feature config hash {hash} differs from the model's {}",
                self.config_hash
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::ClassLabel;
    use crate::classical_ml::{train_classifier, AlgoKind, AlgoSpec, Scenario};
    use crate::features::{FeatureTable, FeatureVector};

    #[test]
    fn json_round_trip_preserves_predictions() {
        let rows: Vec<FeatureVector> = (0..30)
            .map(|i| {
                let mut v = [0.0; 14];
                for (j, x) in v.iter_mut().enumerate() {
                    *x = ((i * 7 + j * 3) % 11) as f64 / 11.0 + (i % 3) as f64;
                }
                FeatureVector::from_values(v, ClassLabel::ALL[i % 3])
            })
            .collect();
        let table = FeatureTable::new(rows);
        let cfg = FeatureConfig::default();
        for kind in AlgoKind::ALL {
            let model = train_classifier(&table, &AlgoSpec::default_for(kind, 5), Scenario::Multi).unwrap();
            let file = ClassifierFile::new(model, cfg.clone());
            let back = ClassifierFile::from_json(&file.to_json().unwrap()).unwrap();
            assert_eq!(back, file, "{kind}");
            for row in &table.rows {
                let a = file.model.predict_vector(row).unwrap();
                let b = back.model.predict_vector(row).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn config_mismatch_is_refused() {
        let rows: Vec<FeatureVector> = (0..10)
            .map(|i| FeatureVector::from_values([i as f64; 14], ClassLabel::ALL[i % 2]))
            .collect();
        let model = train_classifier(&FeatureTable::new(rows), &AlgoSpec::GaussianNb, Scenario::Binary).unwrap();
        let file = ClassifierFile::new(model, FeatureConfig::default());
        let mut other = FeatureConfig::default();
        other.n_filters = 40;
        assert!(file.check_config(&FeatureConfig::default()).is_ok());
        assert!(matches!(file.check_config(&other), Err(MlError::Config(_))));
        let mut tampered = file.clone();
        tampered.config_hash = "00".into();
        assert!(ClassifierFile::from_json(&tampered.to_json().unwrap()).is_err());
    }
}
