//! Preprocessing, labeling, σ fitting and judge profiling chained together.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bias::{estimate_by_group, BiasError, BiasEstimate, CovarianceKind, Scope, StageFilter};
use crate::ingest::{label_marks, preprocess, IngestError, LabeledMark, MarkRecord, PreprocessConfig, Preprocessed};
use crate::variability::{fit_all, profile_all, FitError, GroupKey, ProfileTable, SigmaModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub min_median: f64,
    pub min_panel: usize,
    pub exclude_sn_from_profiles: bool,
    pub covariance: CovarianceKind,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let p = PreprocessConfig::default();
        AnalysisConfig {
            min_median: p.min_median,
            min_panel: p.min_panel,
            exclude_sn_from_profiles: false,
            covariance: CovarianceKind::ModelBased,
        }
    }
}

impl AnalysisConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, IngestError> {
        toml::from_str(s).map_err(|e| IngestError::Config(e.to_string()))
    }

    pub fn preprocess_config(&self) -> PreprocessConfig {
        PreprocessConfig { min_median: self.min_median, min_panel: self.min_panel }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub preprocessed: Preprocessed,
    /// Labeled marks of groups with a fitted σ model.
    pub marks: Vec<LabeledMark>,
    pub models: BTreeMap<GroupKey, SigmaModel>,
    pub fit_failures: BTreeMap<GroupKey, FitError>,
    pub profiles: ProfileTable,
    pub config: AnalysisConfig,
}

pub fn analyze(records: &[MarkRecord], config: &AnalysisConfig) -> Result<Analysis, IngestError> {
    let preprocessed = preprocess(records, &config.preprocess_config())?;
    let labeled = label_marks(&preprocessed.performances);
    let mut models = BTreeMap::new();
    let mut fit_failures = BTreeMap::new();
    for (key, fit) in fit_all(&labeled) {
        match fit {
            Ok(m) => {
                models.insert(key, m);
            }
            Err(e) => {
                log::warn!("{key}: {e}; its marks are left out");
                fit_failures.insert(key, e);
            }
        }
    }
    let marks: Vec<LabeledMark> = labeled.into_iter().filter(|m| models.contains_key(&GroupKey::for_record(&m.base))).collect();
    let profiles = profile_all(&marks, &models, config.exclude_sn_from_profiles);
    Ok(Analysis { preprocessed, marks, models, fit_failures, profiles, config: config.clone() })
}

impl Analysis {
    pub fn estimates(&self, scope: Scope, stage_filter: StageFilter) -> Result<Vec<BiasEstimate>, BiasError> {
        estimate_by_group(&self.marks, &self.models, &self.profiles, scope, stage_filter, self.config.covariance)
    }
}
