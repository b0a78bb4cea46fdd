//! Versioned JSON experiment configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::approximation::BoundarySpec;
use crate::error::{Error, Result};
use crate::fields::{DriftSpec, MatrixSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub domain: DomainConfig,
    pub coefficients: CoefficientConfig,
    /// Mollification schedule (strictly decreasing); empty runs a direct
    /// solve on the raw coefficients.
    #[serde(default)]
    pub schedule: Vec<f64>,
    #[serde(default)]
    pub batteries: Vec<BatteryConfig>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub dimension: usize,
    pub half_extent: f64,
    pub resolution: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub drift: DriftSpec,
    pub matrix: MatrixSpec,
    pub boundary: BoundarySpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative eigenvalue tolerance of the pencil solver.
    pub eigen_rel: f64,
    pub eigen_max_iterations: usize,
    /// Relative residual of linear solves.
    pub linear_rel: f64,
    pub linear_max_iterations: usize,
    /// Coarse eps-grid size for multiplicative bound sweeps.
    pub mf_eps_points: usize,
    /// Companion constant sweep for the formbound battery.
    pub companion_sweep: Vec<f64>,
    /// Slack in the mollification preservation check.
    pub delta_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eigen_rel: 1e-8,
            eigen_max_iterations: 10_000,
            linear_rel: 1e-10,
            linear_max_iterations: 10_000,
            mf_eps_points: 9,
            companion_sweep: vec![0.0, 0.25, 1.0, 4.0],
            delta_slack: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryName {
    Caccioppoli,
    Harnack,
    Holder,
    Gradlp,
    Logbmo,
    Crossprod,
    Lemmas,
    All,
}

impl BatteryName {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "caccioppoli" => Ok(BatteryName::Caccioppoli),
            "harnack" => Ok(BatteryName::Harnack),
            "holder" => Ok(BatteryName::Holder),
            "gradlp" => Ok(BatteryName::Gradlp),
            "logbmo" => Ok(BatteryName::Logbmo),
            "crossprod" => Ok(BatteryName::Crossprod),
            "lemmas" => Ok(BatteryName::Lemmas),
            "all" => Ok(BatteryName::All),
            other => Err(Error::Config(format!(
                "unknown battery '{other}' (expected caccioppoli|harnack|holder|gradlp|logbmo|crossprod|lemmas|all)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BatteryName::Caccioppoli => "caccioppoli",
            BatteryName::Harnack => "harnack",
            BatteryName::Holder => "holder",
            BatteryName::Gradlp => "gradlp",
            BatteryName::Logbmo => "logbmo",
            BatteryName::Crossprod => "crossprod",
            BatteryName::Lemmas => "lemmas",
            BatteryName::All => "all",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    pub name: BatteryName,
    #[serde(default)]
    pub params: BatteryParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryParams {
    /// Ball centers; empty means the origin.
    pub centers: Vec<Vec<f64>>,
    /// Outer radii `R`; empty picks `0.8 * half_extent`.
    pub big_r: Vec<f64>,
    /// Inner-to-outer ratio for Caccioppoli radii.
    pub r_ratio: f64,
    pub theta: f64,
    pub q: f64,
    /// Truncation level for the Caccioppoli ratio.
    pub c: f64,
    /// Gradient profile exponents.
    pub p_list: Vec<f64>,
    /// Random samples for the lemmas battery.
    pub lemma_samples: usize,
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryParams {
            centers: Vec::new(),
            big_r: Vec::new(),
            r_ratio: 0.5,
            theta: 1.2,
            q: 0.5,
            c: 0.0,
            p_list: vec![2.0, 2.5, 3.0, 4.0],
            lemma_samples: 100,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!(
                "config parse error at line {}, column {}: {e}",
                e.line(),
                e.column()
            ))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "field 'schema_version': expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if self.domain.dimension < 2 {
            return Err(Error::Config("field 'domain.dimension': must be >= 2".into()));
        }
        if self.domain.resolution < 2 {
            return Err(Error::Config("field 'domain.resolution': must be >= 2".into()));
        }
        if !(self.domain.half_extent > 0.0) {
            return Err(Error::Config("field 'domain.half_extent': must be positive".into()));
        }
        if self.schedule.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Config(
                "field 'schedule': must be strictly decreasing".into(),
            ));
        }
        let h = 2.0 * self.domain.half_extent / (self.domain.resolution as f64 - 1.0);
        if self.schedule.iter().any(|&e| e < 2.0 * h) {
            return Err(Error::Config(format!(
                "field 'schedule': entries must stay >= 2h = {}",
                2.0 * h
            )));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("field 'output_dir': must be nonempty".into()));
        }
        Ok(())
    }

    /// Canonical serialization hash (config identity for the manifest).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canon = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&canon);
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "schema_version": 1,
            "domain": {"dimension": 2, "half_extent": 1.0, "resolution": 9},
            "coefficients": {
                "drift": {"kind": "zero"},
                "matrix": {"kind": "identity"},
                "boundary": {"kind": "constant", "value": 1.0}
            },
            "output_dir": "/tmp/kolmolab-test"
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::from_json(&minimal_json()).unwrap();
        assert_eq!(c.schema_version, 1);
        assert!(c.schedule.is_empty());
        assert_eq!(c.tolerances.mf_eps_points, 9);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn parse_errors_carry_line_information() {
        let bad = minimal_json().replace("\"resolution\": 9", "\"resolution\": \"lots\"");
        let err = ExperimentConfig::from_json(&bad).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("line"), "{text}");
    }

    #[test]
    fn semantic_validation_names_the_field() {
        let bad = minimal_json().replace("\"schema_version\": 1", "\"schema_version\": 3");
        let err = ExperimentConfig::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("schema_version"), "{err}");

        let mut c = ExperimentConfig::from_json(&minimal_json()).unwrap();
        c.schedule = vec![0.5, 0.6];
        assert!(c.validate().unwrap_err().to_string().contains("schedule"));
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = ExperimentConfig::from_json(&minimal_json()).unwrap();
        let b = ExperimentConfig::from_json(&minimal_json()).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        let mut c = ExperimentConfig::from_json(&minimal_json()).unwrap();
        c.seed = 7;
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn battery_names_round_trip() {
        for name in [
            "caccioppoli",
            "harnack",
            "holder",
            "gradlp",
            "logbmo",
            "crossprod",
            "lemmas",
            "all",
        ] {
            assert_eq!(BatteryName::parse(name).unwrap().as_str(), name);
        }
        assert!(BatteryName::parse("nope").is_err());
    }
}
