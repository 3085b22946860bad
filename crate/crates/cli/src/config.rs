//! Run configuration: one JSON document mirroring the generator and
//! training configs plus input paths, with explicit defaults printable
//! via `gen-data --print-defaults`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ordmil::datamodel::ShiftConfig;
use ordmil::training::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Stage-1 checkpoint consumed by `adapt`.
    pub checkpoint: Option<PathBuf>,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub shift: ShiftConfig,
    pub train: TrainConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    /// Override both seeds from the command line.
    pub fn set_seed(&mut self, seed: u64) {
        self.shift.seed = seed;
        self.train.seed = seed;
    }
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let bytes = std::fs::read(p)
                .map_err(|e| CliError::Run(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Run(format!("malformed config {}: {e}", p.display())))
        }
    }
}

/// Parse `--seed`: either one integer or an inclusive range `a..b`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, CliError> {
    if let Some((a, b)) = spec.split_once("..") {
        let lo: u64 = a
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad seed range start '{a}'")))?;
        let hi: u64 = b
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad seed range end '{b}'")))?;
        if hi < lo {
            return Err(CliError::Usage(format!("empty seed range {lo}..{hi}")));
        }
        Ok((lo..=hi).collect())
    } else {
        spec.trim()
            .parse()
            .map(|s| vec![s])
            .map_err(|_| CliError::Usage(format!("bad seed '{spec}'")))
    }
}

/// Commands other than `ablate` accept exactly one seed.
pub fn single_seed(spec: Option<&str>) -> Result<Option<u64>, CliError> {
    match spec {
        None => Ok(None),
        Some(s) => {
            let seeds = parse_seeds(s)?;
            if seeds.len() != 1 {
                return Err(CliError::Usage(
                    "seed ranges are only supported by the ablate command".into(),
                ));
            }
            Ok(Some(seeds[0]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert_eq!(parse_seeds("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert!(parse_seeds("5..1").is_err());
        assert!(parse_seeds("x").is_err());
        assert!(single_seed(Some("1..5")).is_err());
        assert_eq!(single_seed(Some("3")).unwrap(), Some(3));
    }

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig::default();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&cfg).unwrap());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = serde_json::from_str::<RunConfig>("{\"shift\":{\"spacng\":2.0}}").unwrap_err();
        assert!(err.to_string().contains("spacng"));
    }
}
