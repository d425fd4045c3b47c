//! Experiment configuration, one TOML document per run.
//!
//! ```toml
//! [model]
//! N = 10
//! p = 2.0
//! lambda = -1
//!
//! [potential]
//! kind = "inverse_power"
//! C = 1.0
//! sigma = 9.0
//!
//! [grid]
//! r_max = 30.0
//! n = 4096
//!
//! [evolve]
//! dt = 1e-3
//! t_end = 5.0
//! amplitude = 0.5
//!
//! [scan]
//! amplitudes = [0.25, 0.5, 0.75]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::evolution::{EvolveConfig, DT_FLOOR_HALVINGS};
use crate::groundstate::SolverOptions;
use crate::model::{ModelParams, Nonlinearity, Potential, PotentialSpec};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(rename = "N")]
    pub dim: usize,
    pub p: f64,
    #[serde(default = "focusing")]
    pub lambda: i32,
}

fn focusing() -> i32 {
    -1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub r_max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    SolverOptions::default().tol
}

fn default_max_iter() -> usize {
    SolverOptions::default().max_iter
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { tol: default_tol(), max_iter: default_max_iter() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default = "yes")]
    pub adaptive: bool,
    pub dt_min: Option<f64>,
    /// Initial datum `amplitude * Q`.
    #[serde(default = "one_f")]
    pub amplitude: f64,
    /// Initial datum read from a field CSV instead of `amplitude * Q`.
    pub initial: Option<String>,
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// `R` is either one radius or a list; the first entry drives the main table.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Radii {
    One(f64),
    Many(Vec<f64>),
}

impl Radii {
    pub fn as_vec(&self) -> Vec<f64> {
        match self {
            Radii::One(r) => vec![*r],
            Radii::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirialSection {
    #[serde(rename = "R")]
    pub radius: Radii,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub evolve: Option<EvolveSection>,
    pub virial: Option<VirialSection>,
    pub scan: Option<ScanSection>,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.base = path.parent().map(Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        match &self.base {
            Some(b) if path.is_relative() => b.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// Checks ranges and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if !(self.grid.r_max > 0.0) || self.grid.n < crate::grid::MIN_NODES {
            return Err(Error::InvalidParameter(format!(
                "grid needs r_max > 0 and n >= {}, got r_max={}, n={}",
                crate::grid::MIN_NODES,
                self.grid.r_max,
                self.grid.n
            )));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(Error::InvalidParameter("solver needs tol > 0 and max_iter >= 1".into()));
        }
        if let PotentialSpec::Tabulated { table } = &self.potential {
            let path = self.resolve(table);
            if !path.is_file() {
                return Err(Error::InvalidParameter(format!("potential table {} not found", path.display())));
            }
        }
        if let Some(ev) = &self.evolve {
            self.evolve_config_of(ev)?;
            if let Some(init) = &ev.initial {
                let path = self.resolve(init);
                if !path.is_file() {
                    return Err(Error::InvalidParameter(format!("initial field {} not found", path.display())));
                }
            }
        }
        if let Some(v) = &self.virial {
            let radii = v.radius.as_vec();
            if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0)) {
                return Err(Error::InvalidParameter("virial.R must be positive".into()));
            }
        }
        if let Some(s) = &self.scan {
            if s.amplitudes.is_empty() {
                return Err(Error::InvalidParameter("scan.amplitudes is empty".into()));
            }
            if s.amplitudes.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter("scan.amplitudes must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::intercritical(self.model.dim, self.model.p, Nonlinearity::from_sign(self.model.lambda)?)
    }

    pub fn potential(&self) -> Result<Potential> {
        self.potential.build(self.base.as_deref())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { tol: self.solver.tol, max_iter: self.solver.max_iter, ..SolverOptions::default() }
    }

    fn evolve_config_of(&self, ev: &EvolveSection) -> Result<EvolveConfig> {
        let cfg = EvolveConfig {
            dt: ev.dt,
            t_end: ev.t_end,
            record_every: ev.record_every,
            dt_min: ev.dt_min.unwrap_or(ev.dt * 2f64.powi(-DT_FLOOR_HALVINGS)),
            adaptive: ev.adaptive,
            keep_snapshots: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn evolve_section(&self) -> Result<&EvolveSection> {
        self.evolve.as_ref().ok_or_else(|| Error::InvalidParameter("missing [evolve] section".into()))
    }

    pub fn evolve_config(&self) -> Result<EvolveConfig> {
        self.evolve_config_of(self.evolve_section()?)
    }

    pub fn initial_path(&self) -> Option<PathBuf> {
        self.evolve.as_ref().and_then(|e| e.initial.as_deref()).map(|p| self.resolve(p))
    }

    pub fn radii(&self) -> Result<Vec<f64>> {
        self.virial
            .as_ref()
            .map(|v| v.radius.as_vec())
            .ok_or_else(|| Error::InvalidParameter("missing [virial] section".into()))
    }

    pub fn amplitudes(&self) -> Result<&[f64]> {
        self.scan
            .as_ref()
            .map(|s| s.amplitudes.as_slice())
            .ok_or_else(|| Error::InvalidParameter("missing [scan] section".into()))
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.output.dir.as_deref().map(|d| self.resolve(d))
    }
}
