use std::path::Path;

use pemfc_prognostics::prognosis::PrognosisConfig;
use pemfc_prognostics::synthdata::GroundTruth;
use pemfc_prognostics::{Error, Result};
use serde::{Deserialize, Serialize};

/// Run configuration document. Every field is optional; unknown keys are rejected.
///
/// The scenario seed (`prognosis.scenario.seed`) also seeds database generation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Planted truth used by `synth`.
    pub synth: GroundTruth,
    /// Learning and prediction settings used by the other commands.
    pub prognosis: PrognosisConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?;
                serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("config {}: {e}", p.display())))
            }
            None => Ok(Self::default()),
        }
    }

    pub fn seed(&self) -> u64 {
        self.prognosis.scenario.seed
    }
}
