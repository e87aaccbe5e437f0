use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use speechprint::classical_ml::{metrics, ConfusionMatrix, MetricsReport};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub const REPORT_FORMAT: &str = "speechprint-report";
pub const REPORT_VERSION: u32 = 1;

/// How the reported metrics were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evaluation {
    CrossValidation { k: usize },
    /// Resubstitution on the training rows.
    TrainingSet,
    HeldOutTest { rows: usize },
    External { source: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub version: u32,
    pub command: String,
    pub model: String,
    pub config: PipelineConfig,
    pub config_hash: String,
    pub rows: usize,
    pub evaluation: Evaluation,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub elapsed_secs: f64,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn new(
        command: &str,
        model: &str,
        config: &PipelineConfig,
        rows: usize,
        evaluation: Evaluation,
        confusion: ConfusionMatrix,
    ) -> RunReport {
        RunReport {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            command: command.into(),
            model: model.into(),
            config: config.clone(),
            config_hash: config.features.fingerprint(),
            rows,
            evaluation,
            metrics: metrics(&confusion),
            confusion,
            elapsed_secs: 0.0,
            artifacts: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Loads a report and checks that its metrics follow from its
    /// confusion matrix.
    pub fn load(path: &Path) -> Result<RunReport> {
        let report: RunReport = serde_json::from_str(&fs::read_to_string(path)?)?;
        if report.format != REPORT_FORMAT || report.version != REPORT_VERSION {
            return Err(CliError::Failed(format!("{} is not a version {REPORT_VERSION} report", path.display())));
        }
        if report.config_hash != report.config.features.fingerprint() {
            return Err(CliError::Failed("report config hash does not match its config".into()));
        }
        let recomputed = metrics(&report.confusion);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        let consistent = close(recomputed.accuracy, report.metrics.accuracy)
            && recomputed.per_class.len() == report.metrics.per_class.len()
            && recomputed.per_class.iter().zip(&report.metrics.per_class).all(|(a, b)| {
                a.class == b.class
                    && a.support == b.support
                    && close(a.precision, b.precision)
                    && close(a.recall, b.recall)
                    && close(a.f1, b.f1)
            });
        if !consistent {
            return Err(CliError::Failed("report metrics disagree with its confusion matrix".into()));
        }
        Ok(report)
    }
}
