use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::Matching;
use crate::hypgen::HypgenConfig;
use crate::scenegen::NoiseConfig;
use crate::scoring::{FeatureParams, GbrtParams, DEFAULT_K};
use crate::select::{ConflictParams, Solver};
use crate::{Error, Result};

/// Every tunable of the pipeline. Read from TOML; missing keys take their
/// defaults and unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Recall acceptance fraction `k_l` (also anchors the score transform).
    pub k: f64,
    pub solver: Solver,
    pub matching: Matching,
    pub noise: NoiseConfig,
    pub hypgen: HypgenConfig,
    pub features: FeatureParams,
    pub gbrt: GbrtParams,
    pub conflicts: ConflictParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: DEFAULT_K,
            solver: Solver::Exact,
            matching: Matching::Greedy,
            noise: NoiseConfig::default(),
            hypgen: HypgenConfig::default(),
            features: FeatureParams::default(),
            gbrt: GbrtParams::default(),
            conflicts: ConflictParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse("<config>", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_toml(path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let c = PipelineConfig::default();
        let text = c.to_toml();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), c);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn partial_sections_override() {
        let c = PipelineConfig::from_toml("k = 0.2\nsolver = \"greedy\"\n[hypgen]\ngamma = 1.0\nmax_path = 40\n").unwrap();
        assert_eq!(c.k, 0.2);
        assert_eq!(c.solver, Solver::Greedy);
        assert_eq!(c.hypgen.gamma, 1.0);
        assert_eq!(c.hypgen.max_path, Some(40));
        assert_eq!(c.hypgen.bases_per_class, HypgenConfig::default().bases_per_class);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("gama = 1.0").is_err());
        assert!(PipelineConfig::from_toml("[hypgen]\ngama = 1.0").is_err());
    }
}
