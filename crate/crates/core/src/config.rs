//! Scenario files: a sectioned TOML document describing one run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::ControllerConfig;
use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::params::RobotParams;
use crate::scenario::{Policy, ScenarioConfig, StopCondition};

const REFERENCE_LIMIT_CASE: &str = include_str!("../configs/reference-limit-case.toml");
const REFERENCE_CONTINUOUS: &str = include_str!("../configs/reference-continuous.toml");

/// Names of the configurations shipped with the library.
pub const BUNDLED: [&str; 2] = ["reference-limit-case", "reference-continuous"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_sample_period")]
    pub sample_period: f64,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

fn default_sample_period() -> f64 {
    1e-3
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            sample_period: default_sample_period(),
            path: None,
        }
    }
}

/// On-disk layout of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub policy: Policy,
    pub x0: [f64; 4],
    pub params: RobotParams,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub stop: StopCondition,
    #[serde(default)]
    pub output: OutputSection,
}

impl ScenarioFile {
    /// Parses without validating values.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }

    /// Loads a bundled configuration by name, or else a file from disk.
    pub fn load(name_or_path: &str) -> Result<Self> {
        match bundled(name_or_path) {
            Some(text) => Self::parse(text),
            None => {
                let text = std::fs::read_to_string(Path::new(name_or_path))
                    .map_err(|e| Error::Config(format!("cannot read `{name_or_path}`: {e}")))?;
                Self::parse(&text)
            }
        }
    }

    /// Builds the run description and validates every section.
    pub fn into_scenario(self) -> Result<(ScenarioConfig, Option<PathBuf>)> {
        let config = ScenarioConfig {
            params: self.params,
            controller: self.controller,
            integrator: self.integrator,
            policy: self.policy,
            x0: State::from(self.x0),
            stop: self.stop,
            sample_period: self.output.sample_period,
        };
        config.validate()?;
        Ok((config, self.output.path))
    }
}

/// Text of a bundled configuration.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "reference-limit-case" => Some(REFERENCE_LIMIT_CASE),
        "reference-continuous" => Some(REFERENCE_CONTINUOUS),
        _ => None,
    }
}

impl From<&ScenarioConfig> for ScenarioFile {
    fn from(c: &ScenarioConfig) -> Self {
        ScenarioFile {
            policy: c.policy,
            x0: c.x0.to_array(),
            params: c.params.clone(),
            controller: c.controller.clone(),
            integrator: c.integrator.clone(),
            stop: c.stop.clone(),
            output: OutputSection {
                sample_period: c.sample_period,
                path: None,
            },
        }
    }
}
