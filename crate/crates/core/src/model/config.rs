//! JSON configuration schema and loading.
//!
//! Schema sketch (see the repository README for a full description):
//!
//! ```json
//! {
//!   "grid": {"uniform": {"step": 1.0, "anchor": 0.0, "window": [0, 10]}},
//!   "system": {"kind": "depcag", "M": [["-1"]], "M0": [["0"]],
//!              "h": {"expr": ["0.3"], "r": 0.0, "mu": 0.3, "l": 0.0}},
//!   "dichotomy": {"P": [[1.0]], "K": 1.0, "alpha": 1.0},
//!   "numerics": {"ode_step": 0.01}
//! }
//! ```
//!
//! Grids are given either as explicit `knots` + `anchors` lists or through the
//! `uniform` shorthand (`anchor` is the in-interval fraction, alias
//! `anchor_fraction`). Matrix entries and nonlinear terms are expression
//! strings in the `expr`-module grammar.

use super::{
    BlockSystem, DepcagSystem, DichotomySpec, MatrixExpr, ModelError, NonlinearTerm,
    NumericsConfig, TimeGrid, VarPrefix,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub grid: GridConfig,
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dichotomy: Option<DichotomyConfig>,
    #[serde(default)]
    pub numerics: NumericsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<UniformGridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformGridConfig {
    pub step: f64,
    #[serde(alias = "anchor_fraction")]
    pub anchor: f64,
    pub window: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemConfig {
    Depcag {
        #[serde(rename = "M")]
        m: Vec<Vec<String>>,
        #[serde(rename = "M0")]
        m0: Vec<Vec<String>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h: Option<NonlinearConfig>,
    },
    Block {
        #[serde(rename = "A")]
        a: Vec<Vec<String>>,
        #[serde(rename = "A0")]
        a0: Vec<Vec<String>>,
        #[serde(rename = "B")]
        b: Vec<Vec<String>>,
        #[serde(rename = "B0")]
        b0: Vec<Vec<String>>,
        f: Vec<String>,
        g: Vec<String>,
        phi: Vec<String>,
        psi: Vec<String>,
        lambda: f64,
        delta: f64,
        omega: f64,
        beta: f64,
        beta0: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearConfig {
    pub expr: Vec<String>,
    pub r: f64,
    pub mu: f64,
    pub l: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DichotomyConfig {
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<f64>>>,
    #[serde(rename = "K")]
    pub k: f64,
    pub alpha: f64,
}

/// Either flavor of system model.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemModel {
    Depcag(DepcagSystem),
    Block(BlockSystem),
}

impl SystemModel {
    pub fn grid(&self) -> &TimeGrid {
        match self {
            SystemModel::Depcag(s) => &s.grid,
            SystemModel::Block(s) => &s.grid,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SystemModel::Depcag(s) => s.dim,
            SystemModel::Block(s) => s.dim(),
        }
    }
}

/// A fully validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub system: SystemModel,
    pub dichotomy: Option<DichotomySpec>,
    pub numerics: NumericsConfig,
}

pub fn load_config(path: &Path) -> Result<Loaded, ModelError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    load_config_str(&text)
}

pub fn load_config_str(text: &str) -> Result<Loaded, ModelError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ConfigFile = serde_path_to_error::deserialize(de)
        .map_err(|e| ModelError::Schema(format!("at {}: {}", e.path(), e.inner())))?;
    build(file)
}

fn build_grid(cfg: &GridConfig) -> Result<TimeGrid, ModelError> {
    match (&cfg.knots, &cfg.uniform) {
        (Some(knots), None) => {
            let anchors = cfg.anchors.clone().ok_or_else(|| {
                ModelError::Schema("grid.anchors required with grid.knots".into())
            })?;
            TimeGrid::new(knots.clone(), anchors, cfg.theta)
        }
        (None, Some(u)) => TimeGrid::uniform(u.window, u.step, u.anchor),
        _ => Err(ModelError::Schema(
            "grid must specify exactly one of `knots` or `uniform`".into(),
        )),
    }
}

pub fn build(file: ConfigFile) -> Result<Loaded, ModelError> {
    file.numerics.validate()?;
    let grid = build_grid(&file.grid)?;
    let system = match &file.system {
        SystemConfig::Depcag { m, m0, h } => {
            let m = MatrixExpr::parse(m, "system.M")?;
            let m0 = MatrixExpr::parse(m0, "system.M0")?;
            let dim = m.dim();
            let h = h
                .as_ref()
                .map(|cfg| {
                    NonlinearTerm::parse(&cfg.expr, VarPrefix::Z, dim, cfg.r, cfg.mu, cfg.l, "system.h")
                })
                .transpose()?;
            SystemModel::Depcag(DepcagSystem::new(grid, m, m0, h)?)
        }
        SystemConfig::Block {
            a,
            a0,
            b,
            b0,
            f,
            g,
            phi,
            psi,
            lambda,
            delta,
            omega,
            beta,
            beta0,
        } => {
            let a = MatrixExpr::parse(a, "system.A")?;
            let a0 = MatrixExpr::parse(a0, "system.A0")?;
            let b = MatrixExpr::parse(b, "system.B")?;
            let b0 = MatrixExpr::parse(b0, "system.B0")?;
            let (n1, n2) = (a.dim(), b.dim());
            let f = NonlinearTerm::parse(f, VarPrefix::X, n1, *lambda, 0.0, *omega, "system.f")?;
            let g = NonlinearTerm::parse(g, VarPrefix::X, n1, *lambda, 0.0, *omega, "system.g")?;
            let phi = NonlinearTerm::parse(phi, VarPrefix::Y, n2, 0.0, *delta, *omega, "system.phi")?;
            let psi = NonlinearTerm::parse(psi, VarPrefix::Y, n2, 0.0, *delta, *omega, "system.psi")?;
            SystemModel::Block(BlockSystem::new(
                grid, a, a0, b, b0, f, g, phi, psi, *lambda, *delta, *omega, *beta, *beta0,
            )?)
        }
    };
    let dichotomy = file
        .dichotomy
        .as_ref()
        .map(|cfg| {
            let p = match (&cfg.p, &system) {
                (Some(rows), _) => parse_projection(rows, system.dim())?,
                (None, SystemModel::Block(b)) => b.default_projection(),
                (None, SystemModel::Depcag(_)) => {
                    return Err(ModelError::Schema(
                        "dichotomy.P is required for depcag systems".into(),
                    ))
                }
            };
            DichotomySpec::new(p, cfg.k, cfg.alpha)
        })
        .transpose()?;
    Ok(Loaded {
        system,
        dichotomy,
        numerics: file.numerics,
    })
}

fn parse_projection(rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>, ModelError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(ModelError::Schema(format!(
            "dichotomy.P must be {dim}x{dim}"
        )));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

impl Loaded {
    /// Serializes back to the explicit (expanded-grid) configuration form.
    pub fn to_config(&self) -> ConfigFile {
        let grid = self.system.grid();
        let grid_cfg = GridConfig {
            knots: Some(grid.knots().to_vec()),
            anchors: Some(grid.anchors().to_vec()),
            uniform: None,
            theta: Some(grid.theta()),
        };
        let system = match &self.system {
            SystemModel::Depcag(s) => SystemConfig::Depcag {
                m: s.m.to_strings(),
                m0: s.m0.to_strings(),
                h: s.h.as_ref().map(|h| NonlinearConfig {
                    expr: h.to_strings(),
                    r: h.growth_r,
                    mu: h.offset_mu,
                    l: h.lipschitz_l,
                }),
            },
            SystemModel::Block(s) => SystemConfig::Block {
                a: s.a.to_strings(),
                a0: s.a0.to_strings(),
                b: s.b.to_strings(),
                b0: s.b0.to_strings(),
                f: s.f.to_strings(),
                g: s.g.to_strings(),
                phi: s.phi.to_strings(),
                psi: s.psi.to_strings(),
                lambda: s.lambda,
                delta: s.delta,
                omega: s.omega,
                beta: s.beta,
                beta0: s.beta0,
            },
        };
        let dichotomy = self.dichotomy.as_ref().map(|d| DichotomyConfig {
            p: Some(
                (0..d.projection.nrows())
                    .map(|i| (0..d.projection.ncols()).map(|j| d.projection[(i, j)]).collect())
                    .collect(),
            ),
            k: d.big_k,
            alpha: d.alpha,
        });
        ConfigFile {
            grid: grid_cfg,
            system,
            dichotomy,
            numerics: self.numerics.clone(),
        }
    }
}
