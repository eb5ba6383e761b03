//! Experiment configuration (`"schema": 1`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twinforge_core::train::TrainConfig;
use twinforge_core::twin::Scheme;
use twinforge_core::{build_grid, ControlField, FluxKind, GrayBoxCase, Grid, InitialCondition};

use crate::error::{CliError, CliResult};
use crate::io;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub flux: FluxKind,
    pub ic: InitialCondition,
    pub grid: GridSpec,
    pub cfl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    Scalar { value: f64 },
    /// Full `M x N` control read from a field file.
    Field { path: PathBuf },
}

impl Default for ControlSpec {
    fn default() -> Self {
        ControlSpec::Scalar { value: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// `int (u(T, x) - target)^2 dx`.
    Terminal { target: f64 },
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec::Terminal { target: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub case: CaseSpec,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// A parsed config with relative paths resolved against its directory.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub path: PathBuf,
    pub config: ExperimentConfig,
    pub case: GrayBoxCase,
    pub output_dir: PathBuf,
}

impl Loaded {
    pub fn grid(&self) -> &Grid {
        &self.case.grid
    }

    pub fn control(&self) -> CliResult<ControlField> {
        let c = match &self.config.control {
            ControlSpec::Scalar { value } => ControlField::scalar(*value),
            ControlSpec::Field { path } => {
                let p = self.resolve(path);
                let f = io::read_field(&p)?;
                if f.grid() != self.grid() || f.k() != 1 {
                    return Err(CliError::config(
                        &self.path,
                        Some("control.path".into()),
                        "control field must be a single variable on the case grid",
                    ));
                }
                ControlField::Grid {
                    values: f.values().to_vec(),
                }
            }
        };
        c.validate(self.grid())?;
        Ok(c)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        resolve(&self.path, p)
    }

    /// Training config with the experiment seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.config.seed,
            ..self.config.train.clone()
        }
    }
}

fn resolve(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new("")).join(p)
    }
}

pub fn parse(path: &Path, text: &str) -> CliResult<Loaded> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        let msg = format!("line {} column {}: {}", inner.line(), inner.column(), inner);
        CliError::config(path, (field != ".").then_some(field), msg)
    })?;
    if config.schema != SCHEMA {
        return Err(CliError::config(
            path,
            Some("schema".into()),
            format!("unsupported schema {}, expected {SCHEMA}", config.schema),
        ));
    }
    let named = |field: &str, e: twinforge_core::Error| CliError::config(path, Some(field.into()), e.to_string());
    let g = &config.case.grid;
    let grid = build_grid(g.m, g.n, g.t, (g.x_lo, g.x_hi)).map_err(|e| named("case.grid", e))?;
    let case = GrayBoxCase::new(config.case.flux, config.case.ic, grid, config.case.cfl).map_err(|e| {
        let field = match &e {
            twinforge_core::Error::InvalidArgument { name, .. } => format!("case.{name}"),
            _ => "case".into(),
        };
        named(&field, e)
    })?;
    config.train.validate().map_err(|e| {
        let field = match &e {
            twinforge_core::Error::InvalidArgument { name, .. } => format!("train.{name}"),
            _ => "train".into(),
        };
        named(&field, e)
    })?;
    let output_dir = resolve(path, &config.output_dir);
    Ok(Loaded {
        path: path.to_path_buf(),
        config,
        case,
        output_dir,
    })
}

pub fn load(path: &Path) -> CliResult<Loaded> {
    parse(path, &io::read_text(path)?)
}
