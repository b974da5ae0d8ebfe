//! Domain model: time grids, system definitions, dichotomy data, numerics
//! configuration, and the JSON configuration schema.

mod config;
mod grid;
mod system;

pub use config::{
    build, load_config, load_config_str, ConfigFile, DichotomyConfig, GridConfig, Loaded,
    NonlinearConfig, SystemConfig, SystemModel, UniformGridConfig,
};
pub use grid::TimeGrid;
pub use system::{
    BlockSystem, DepcagSystem, DichotomySpec, LinearDepcag, MatrixExpr, MatrixFn, NonlinearTerm,
    NumericsConfig, RhsFn, VarPrefix,
};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    /// A named hypothesis of the theory is violated by the configuration.
    #[error("{name} violated: {message}")]
    Condition { name: &'static str, message: String },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("time {t} outside working window [{}, {}]", window.0, window.1)]
    OutsideWindow { t: f64, window: (f64, f64) },
    #[error("io error: {0}")]
    Io(String),
}

impl ModelError {
    pub fn condition(name: &'static str, message: String) -> Self {
        ModelError::Condition { name, message }
    }

    /// The violated condition name (`A1`..`A4`, `B1`, `B2`, `frakB1`..`frakB3`,
    /// `Def3`) when this is a condition error.
    pub fn condition_name(&self) -> Option<&'static str> {
        match self {
            ModelError::Condition { name, .. } => Some(name),
            _ => None,
        }
    }
}
