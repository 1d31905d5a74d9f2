//! Run configuration: every tunable of an experiment in one JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cnn::TrainConfig;
use crate::conv::{DeapBounds, DeapConfig};
use crate::error::{Error, Result};
use crate::mrr::MrrParams;
use crate::perf::PerfConfig;
use crate::pwb::WeightPath;
use crate::quant::QuantSpec;

pub const FORMAT_VERSION: u32 = 1;

/// Input files. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub mnist_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub deepbench: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    pub device: MrrParams,
    pub bounds: DeapBounds,
    pub quant: QuantSpec,
    pub weight_path: WeightPath,
    pub field_scale_e0: f64,
    pub responsivity_r0: f64,
    pub perf: PerfConfig,
    pub train: TrainConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        let deap = DeapConfig::default();
        RunConfig {
            format_version: FORMAT_VERSION,
            device: deap.device,
            bounds: deap.bounds,
            quant: deap.quant,
            weight_path: deap.path,
            field_scale_e0: deap.field_scale_e0,
            responsivity_r0: deap.responsivity_r0,
            perf: PerfConfig::default(),
            train: TrainConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    /// Numeric checks only; see [`RunConfig::check_paths`] for files.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::schema(
                "format_version",
                format!("expected {FORMAT_VERSION}, found {}", self.format_version),
            ));
        }
        self.device.validate()?;
        self.bounds.validate()?;
        self.quant.validate()?;
        self.perf.validate()?;
        self.train.validate()?;
        for (name, v) in [("field_scale_e0", self.field_scale_e0), ("responsivity_r0", self.responsivity_r0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    /// Every configured path must exist.
    pub fn check_paths(&self) -> Result<()> {
        let Paths { mnist_dir, model, deepbench } = &self.paths;
        for (field, path) in [("paths.mnist_dir", mnist_dir), ("paths.model", model), ("paths.deepbench", deepbench)] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::schema(field, format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn deap_config(&self) -> DeapConfig {
        DeapConfig {
            bounds: self.bounds,
            quant: self.quant,
            device: self.device,
            path: self.weight_path,
            field_scale_e0: self.field_scale_e0,
            responsivity_r0: self.responsivity_r0,
        }
    }

    /// Parse, resolve relative paths against `base`, and validate.
    pub fn from_str_in(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text)?;
        for p in [&mut cfg.paths.mnist_dir, &mut cfg.paths.model, &mut cfg.paths.deepbench]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        cfg.check_paths()?;
        Ok(cfg)
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_str_in(&text, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let cfg = RunConfig::from_str_in("{}", Path::new(".")).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.deap_config(), DeapConfig::default());
    }

    #[test]
    fn roundtrip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_str_in(&text, Path::new(".")).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values_and_unknown_fields() {
        let base = Path::new(".");
        assert!(RunConfig::from_str_in(r#"{"quant":{"bits":0}}"#, base).is_err());
        assert!(RunConfig::from_str_in(r#"{"bounds":{"r_m":11}}"#, base).is_err());
        assert!(RunConfig::from_str_in(r#"{"perf":{"dac_w":-1}}"#, base).is_err());
        assert!(RunConfig::from_str_in(r#"{"device":{"r":1.5}}"#, base).is_err());
        assert!(RunConfig::from_str_in(r#"{"colour":"red"}"#, base).is_err());
    }

    #[test]
    fn referenced_files_must_exist() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bench.csv"), "").unwrap();
        let ok = r#"{"paths":{"deepbench":"bench.csv"}}"#;
        let cfg = RunConfig::from_str_in(ok, dir.path()).unwrap();
        assert_eq!(cfg.paths.deepbench.unwrap(), dir.path().join("bench.csv"));
        let missing = r#"{"paths":{"model":"nope.json"}}"#;
        assert!(matches!(
            RunConfig::from_str_in(missing, dir.path()),
            Err(Error::Schema { field, .. }) if field == "paths.model"
        ));
    }
}
