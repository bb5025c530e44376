//! Optional run configuration file for the command-line tool.
//!
//! Precedence, highest first: command-line flags, this file, built-in
//! defaults. Relative paths in the file are resolved against the file's
//! own directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::closed_loop::ClosedLoopConfig;
use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: Option<u32>,
    pub anchors: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub render: bool,
    pub pipeline: PipelineConfig,
    pub closed_loop: ClosedLoopConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, context: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::parse(context, e))?;
        if let Some(v) = cfg.format_version {
            if v != CONFIG_FORMAT_VERSION {
                return Err(Error::invalid(format!("{context}: format_version"), format!("unsupported version {v}")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.anchors, &mut cfg.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.closed_loop.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_tables_keep_defaults() {
        let cfg = RunConfig::from_toml("[pipeline.selection]\ntop_k = 16\n[closed_loop]\nexec_steps = 2\n", "t").unwrap();
        assert_eq!(cfg.pipeline.selection.top_k, 16);
        assert_eq!(cfg.pipeline.selection.epsilon, PipelineConfig::default().selection.epsilon);
        assert_eq!(cfg.closed_loop.exec_steps, 2);
        assert_eq!(cfg.pipeline.metrics, PipelineConfig::default().metrics);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let e = RunConfig::from_toml("[pipeline.selection]\ntop_kk = 16\n", "t").unwrap_err();
        assert!(e.is_invalid_input());
        let e = RunConfig::from_toml("[pipeline.selection]\ntop_k = 0\n", "t").unwrap_err();
        assert!(matches!(e, Error::Validation { .. }), "{e}");
        assert!(RunConfig::from_toml("format_version = 2\n", "t").is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("cfg");
        std::fs::create_dir(&sub).unwrap();
        let file = sub.join("run.toml");
        std::fs::write(&file, "anchors = \"a.txt\"\nout_dir = \"/abs/out\"\n").unwrap();
        let cfg = RunConfig::load(&file).unwrap();
        assert_eq!(cfg.anchors.unwrap(), sub.join("a.txt"));
        assert_eq!(cfg.out_dir.unwrap(), PathBuf::from("/abs/out"));
    }
}
