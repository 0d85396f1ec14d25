//! TOML run configuration. Every table is optional; flags override file values.

use std::path::Path;

use planeseg::{Interpolation, NdtRansacConfig, NmsConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    seed: Option<u64>,
    jobs: Option<usize>,
    ndt: Option<toml::Table>,
    nms: Option<toml::Table>,
    eval: Option<toml::Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// `"all-point"` or the number of sampled recall points.
    pub interpolation: String,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            interpolation: "all-point".into(),
        }
    }
}

/// Resolved configuration before flag overrides.
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub ndt: NdtRansacConfig<f64>,
    pub nms: NmsConfig<f64>,
    pub interpolation: Interpolation,
}

/// Deserializes `table` over the defaults of `T`, rejecting keys `T` does not have.
fn section<T>(name: &str, table: Option<toml::Table>) -> Result<T, CliError>
where
    T: Default + Serialize + DeserializeOwned,
{
    let Some(table) = table else {
        return Ok(T::default());
    };
    let known =
        toml::Table::try_from(T::default()).map_err(|e| CliError::internal(e.to_string()))?;
    if let Some(bad) = table.keys().find(|k| !known.contains_key(*k)) {
        return Err(CliError::config(format!("unknown key `{bad}` in [{name}]")));
    }
    T::deserialize(toml::Value::Table(table))
        .map_err(|e| CliError::config(format!("[{name}]: {e}")))
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let raw: RawFile = match path {
        None => RawFile::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
    };
    let eval: EvalSettings = section("eval", raw.eval)?;
    let interpolation = Interpolation::parse(&eval.interpolation)
        .ok_or_else(|| CliError::config(format!("bad interpolation `{}`", eval.interpolation)))?;
    Ok(FileConfig {
        seed: raw.seed,
        jobs: raw.jobs,
        ndt: section("ndt", raw.ndt)?,
        nms: section("nms", raw.nms)?,
        interpolation,
    })
}
