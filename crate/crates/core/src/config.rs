//! Whole-run configuration: gas, problem, numerics and output settings.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::control::{ControlProblem, Numerics};
use crate::pde::GasModel;
use crate::{Error, Result};

/// Which artefacts a run writes besides its JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Plot data (`xi` samples, trajectories, snapshots).
    pub csv: bool,
    /// Binary field histories.
    pub lcns: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            csv: true,
            lcns: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gas: GasModel,
    pub problem: ControlProblem,
    pub numerics: Numerics,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        GasModel::new(self.gas.c, self.gas.gamma).map_err(|e| match e {
            Error::OutOfRange { what, value, range } => Error::InvalidConfig {
                field: if what.starts_with("sound") {
                    "gas.c"
                } else {
                    "gas.gamma"
                }
                .into(),
                reason: format!("{value} is outside {range}"),
            },
            other => other,
        })?;
        self.problem.validate()?;
        self.numerics.validate()?;
        if self.output.directory.as_os_str().is_empty() {
            return Err(Error::InvalidConfig {
                field: "output.directory".into(),
                reason: "must not be empty".into(),
            });
        }
        Ok(())
    }
}
