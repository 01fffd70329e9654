//! Run configuration file (`[arch]`, `[train]`, `[data]`) and its resolution.

use std::fs;
use std::path::{Path, PathBuf};

use microexp_core::dataio::TemporalMode;
use microexp_core::trainer::TrainConfig;
use microexp_core::{ArchKind, ArchSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ArchKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_hw: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_dropout_enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
}

impl ArchConfig {
    pub fn from_spec(s: &ArchSpec) -> Self {
        ArchConfig {
            kind: Some(s.kind),
            depth: Some(s.depth),
            input_hw: Some(s.input_hw),
            kernel: Some([s.kernel.0, s.kernel.1, s.kernel.2]),
            filters: Some(s.filters),
            pool: Some([s.pool.0, s.pool.1, s.pool.2]),
            num_classes: Some(s.num_classes),
            dropout_rate: Some(s.dropout_rate),
            final_dropout_enabled: Some(s.final_dropout_enabled),
            hidden: Some(s.hidden.clone()),
        }
    }

    /// Fills unset keys from the defaults of `kind`. `data_classes` supplies
    /// the class count when the config leaves it open.
    pub fn resolve(&self, data_classes: Option<usize>) -> Result<ArchSpec, CliError> {
        let kind = self.kind.unwrap_or(ArchKind::Stcnn);
        let mut s = ArchSpec::casme2(kind);
        if let Some(d) = self.depth {
            s.depth = d;
        }
        if let Some(v) = self.input_hw {
            s.input_hw = v;
        }
        if let Some([a, b, c]) = self.kernel {
            s.kernel = (a, b, c);
        }
        if let Some(v) = self.filters {
            s.filters = v;
        }
        if let Some([a, b, c]) = self.pool {
            s.pool = (a, b, c);
        }
        if let Some(v) = self.dropout_rate {
            s.dropout_rate = v;
        }
        if let Some(v) = self.final_dropout_enabled {
            s.final_dropout_enabled = v;
        }
        if let Some(v) = &self.hidden {
            s.hidden = v.clone();
        }
        match (self.num_classes, data_classes) {
            (Some(c), Some(d)) if c != d => {
                return Err(CliError::Runtime(format!(
                    "config sets {c} classes but the dataset has {d}"
                )))
            }
            (Some(c), _) | (None, Some(c)) => s.num_classes = c,
            (None, None) => {}
        }
        s.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    pub split_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temporal: Option<TemporalMode>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            manifest: None,
            split_fraction: 0.8,
            split_seed: None,
            temporal: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Runtime(format!("config: {e}")))
    }
}

/// Writes a serializable provenance record as `config.toml` in `dir`.
pub fn echo_config<S: Serialize>(dir: &Path, value: &S) -> Result<(), CliError> {
    let text = toml::to_string(value).map_err(|e| CliError::Runtime(format!("config: {e}")))?;
    let path = dir.join("config.toml");
    fs::write(&path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_named() {
        let err = RunConfig::parse("[train]\nepochz = 3\n").unwrap_err();
        assert!(matches!(&err, CliError::Usage(m) if m.contains("epochz")), "{err:?}");
        let err = RunConfig::parse("[mystery]\n").unwrap_err();
        assert!(matches!(&err, CliError::Usage(m) if m.contains("mystery")), "{err:?}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = RunConfig::parse("[arch]\nkind = \"fuse_late\"\ndepth = 18\n[train]\nepochs = 3\n").unwrap();
        let spec = cfg.arch.resolve(None).unwrap();
        assert_eq!((spec.kind, spec.depth, spec.input_hw), (ArchKind::FuseLate, 18, 32));
        cfg.arch = ArchConfig::from_spec(&spec);
        let back = RunConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.arch.resolve(None).unwrap(), spec);
    }

    #[test]
    fn class_count_conflict() {
        let cfg = RunConfig::parse("[arch]\nnum_classes = 5\n").unwrap();
        assert!(matches!(cfg.arch.resolve(Some(3)), Err(CliError::Runtime(_))));
        assert_eq!(cfg.arch.resolve(Some(5)).unwrap().num_classes, 5);
    }
}
