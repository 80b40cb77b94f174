//! Run configuration, read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{file_err, IoError};
use crate::baselines::{BaselineId, BaselineModel};
use crate::fitting::SearchSpace;
use crate::forecasting::RollingOptions;
use crate::model::{HiveParams, ModelConfig};
use crate::segmentation::{LikelihoodSpec, SegmentationOptions};
use crate::series::HiveType;
use crate::synthgen::ScenarioSpec;

/// Overrides of the default search box; unset fields keep the defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub s_c_range: Option<(f64, f64)>,
    pub s_h_range: Option<(f64, f64)>,
    pub theta_ideal_range: Option<(f64, f64)>,
    pub multistart_grid: Option<Vec<HiveParams>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub search: SearchSection,
    pub likelihood: LikelihoodSpec,
    pub segmentation: SegmentationOptions,
    pub forecasting: RollingOptions,
    pub baselines: Vec<BaselineId>,
    pub output_dir: PathBuf,
    /// Fixed offset of local time from UTC; days start at local midnight.
    pub utc_offset_hours: i32,
    pub plots: bool,
    pub hive_types: BTreeMap<String, HiveType>,
    pub scenarios: Vec<ScenarioSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            search: SearchSection::default(),
            likelihood: LikelihoodSpec::default(),
            segmentation: SegmentationOptions::default(),
            forecasting: RollingOptions::default(),
            baselines: BaselineId::ALL.to_vec(),
            output_dir: PathBuf::from("out"),
            utc_offset_hours: 0,
            plots: true,
            hive_types: BTreeMap::new(),
            scenarios: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, IoError> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| IoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(file_err(path))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, IoError> {
        toml::to_string(self).map_err(|e| IoError::Config(e.to_string()))
    }

    pub fn search_space(&self) -> SearchSpace {
        let mut space = SearchSpace::from_config(&self.model);
        let s = &self.search;
        if let Some(r) = s.s_c_range {
            space.s_c_range = r;
        }
        if let Some(r) = s.s_h_range {
            space.s_h_range = r;
        }
        if let Some(r) = s.theta_ideal_range {
            space.theta_ideal_range = r;
        }
        match &s.multistart_grid {
            Some(g) => space.multistart_grid = g.clone(),
            None => {
                // keep the default seeds inside a narrowed box
                for p in &mut space.multistart_grid {
                    p.s_c = p.s_c.clamp(space.s_c_range.0, space.s_c_range.1);
                    p.s_h = p.s_h.clamp(space.s_h_range.0, space.s_h_range.1);
                    p.theta_ideal = p.theta_ideal.clamp(space.theta_ideal_range.0, space.theta_ideal_range.1);
                }
            }
        }
        space
    }

    pub fn baseline_models(&self) -> Vec<BaselineModel> {
        self.baselines.iter().map(|b| b.default_model()).collect()
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let cfg = |e: &dyn std::fmt::Display| IoError::Config(e.to_string());
        self.model.validate().map_err(|e| cfg(&e))?;
        self.search_space().validate(&self.model).map_err(|e| cfg(&e))?;
        self.likelihood.validate().map_err(|e| cfg(&e))?;
        self.segmentation.validate().map_err(|e| cfg(&e))?;
        if self.forecasting.fit_days == 0 || self.forecasting.horizon_days == 0 {
            return Err(IoError::Config("forecasting windows must be at least one day".into()));
        }
        if !(-12..=14).contains(&self.utc_offset_hours) {
            return Err(IoError::Config(format!("utc_offset_hours {} out of range", self.utc_offset_hours)));
        }
        for s in &self.scenarios {
            s.validate(&self.model).map_err(|e| cfg(&e))?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.search_space(), SearchSpace::from_config(&ModelConfig::default()));
    }

    #[test]
    fn parses_a_full_file_and_round_trips() {
        let text = r#"
            baselines = ["persistence", "arx"]
            utc_offset_hours = 2

            [model]
            s_inf = 80.0

            [search]
            s_c_range = [0.0, 60.0]

            [likelihood.sigma_policy]
            policy = "fixed"
            sigma = 0.3

            [segmentation]
            relaxation = 0.05
            strategy = { kind = "exhaustive" }

            [hive_types]
            h1 = "treated"

            [[scenarios]]
            hive_id = "s1"
            num_days = 12
            noise_sigma = 0.2
            start = "2021-07-01T00:00:00Z"
            regimes = [
                { start_day = 0, params = { s_c = 10.0, s_h = 5.0, theta_ideal = 34.5 } },
                { start_day = 6, params = { s_c = 3.0, s_h = 5.0, theta_ideal = 34.5 } },
            ]
            [scenarios.ext_profile]
            mean = 31.0
            heatwaves = [{ day = 3, peak = 42.0 }]
        "#;
        let c = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(c.model.s_inf, 80.0);
        assert_eq!(c.search_space().s_c_range, (0.0, 60.0));
        assert!(c.search_space().multistart_grid.iter().all(|p| p.s_c <= 60.0 && p.s_h <= 80.0));
        assert_eq!(c.likelihood, LikelihoodSpec::fixed(0.3));
        assert_eq!(c.hive_types["h1"], HiveType::Treated);
        assert_eq!(c.scenarios[0].regimes.len(), 2);
        assert_eq!(c.baselines, vec![BaselineId::Persistence, BaselineId::Arx]);
        let again = RunConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
        assert_ne!(c.hash(), RunConfig::default().hash());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml_str("[model]\ns_inf = 40.0").is_err());
        assert!(RunConfig::from_toml_str("[search]\ntheta_ideal_range = [20.0, 40.0]").is_err());
        assert!(RunConfig::from_toml_str("unknown_key = 1").is_err());
        assert!(RunConfig::from_toml_str("baselines = [\"deepar\"]").is_err());
    }
}
