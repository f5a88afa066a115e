//! Pipeline configuration file (TOML).
//!
//! Every section is optional and falls back to defaults. The fingerprint is a
//! digest of the resolved settings, so two files that differ only in layout or
//! comments share a fingerprint.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::{Attribution, ProportionWeighting};
use crate::annotation::{ActionClass, SplitMode};
use crate::evaluation::Averaging;
use crate::features::{default_stopwords, parse_stopwords, FeatureConfig, FeatureError, Weighting};
use crate::fingerprint::short_digest;
use crate::models::{CnbOptions, ModelKind, SgdOptions};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: stopwords file {path}: {source}")]
    Stopwords { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Features(#[from] FeatureError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub lowercase: bool,
    pub min_token_len: usize,
    pub weighting: Weighting,
    /// "default", "none", or a path to a one-word-per-line file.
    pub stopwords: String,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        let base = FeatureConfig::default();
        FeaturesSection {
            ngram_min: base.ngram_min,
            ngram_max: base.ngram_max,
            lowercase: base.lowercase,
            min_token_len: base.min_token_len,
            weighting: base.weighting,
            stopwords: "default".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub cnb: CnbOptions,
    pub sgd: SgdOptions,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: ModelKind::Cnb,
            cnb: CnbOptions::default(),
            sgd: SgdOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub test_fraction: f64,
    pub mode: SplitMode,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            test_fraction: 0.2,
            mode: SplitMode::Fragment,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub averaging: Averaging,
    pub decimals: usize,
    pub exclude: BTreeSet<ActionClass>,
    pub attribution: Attribution,
    pub proportions: ProportionWeighting,
    pub archives: Vec<String>,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            averaging: Averaging::Weighted,
            decimals: 1,
            exclude: BTreeSet::from([ActionClass::NonCuration]),
            attribution: Attribution::Fragment,
            proportions: ProportionWeighting::Fragments,
            archives: crate::corpus::DEFAULT_ARCHIVES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// Inclusive creation-date window, `YYYY-MM-DD`.
    pub created_from: Option<String>,
    pub created_to: Option<String>,
    pub require_worklog: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub features: FeaturesSection,
    pub model: ModelSection,
    pub split: SplitSection,
    pub report: ReportSection,
    pub corpus: CorpusSection,
    /// Directory relative paths in the file are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Config::from_toml(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..1.0).contains(&self.split.test_fraction) {
            return Err(ConfigError::Invalid(format!(
                "split.test_fraction must be in [0, 1), got {}",
                self.split.test_fraction
            )));
        }
        if self.model.cnb.alpha <= 0.0 {
            return Err(ConfigError::Invalid("model.cnb.alpha must be positive".into()));
        }
        Ok(())
    }

    fn stopwords(&self) -> Result<BTreeSet<String>, ConfigError> {
        match self.features.stopwords.as_str() {
            "default" => Ok(default_stopwords()),
            "none" => Ok(BTreeSet::new()),
            file => {
                let path = match &self.base_dir {
                    Some(dir) => dir.join(file),
                    None => PathBuf::from(file),
                };
                let text =
                    std::fs::read_to_string(&path).map_err(|source| ConfigError::Stopwords { path, source })?;
                Ok(parse_stopwords(&text))
            }
        }
    }

    pub fn feature_config(&self) -> Result<FeatureConfig, ConfigError> {
        let f = &self.features;
        let config = FeatureConfig {
            ngram_min: f.ngram_min,
            ngram_max: f.ngram_max,
            lowercase: f.lowercase,
            stopwords: self.stopwords()?,
            weighting: f.weighting,
            min_token_len: f.min_token_len,
        };
        config.validate()?;
        Ok(config)
    }

    /// Digest of the resolved configuration, stopword list included.
    pub fn fingerprint(&self) -> Result<String, ConfigError> {
        let resolved = serde_json::json!({
            "seed": self.seed,
            "features": self.feature_config()?,
            "model": self.model,
            "split": self.split,
            "report": self.report,
            "corpus": self.corpus,
        });
        Ok(short_digest(resolved.to_string().as_bytes()))
    }
}
