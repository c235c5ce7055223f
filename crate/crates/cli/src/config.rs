//! JSON experiment configuration.

use std::collections::BTreeMap;
use std::path::Path;

use niq_core::battery::InputBattery;
use niq_core::feedback::ImpulseConfig;
use niq_core::iqc::{XiConstraint, DEFAULT_TAU_GRID};
use niq_core::linalg::CMatrix;
use niq_core::ni_analysis::BandConfig;
use niq_core::signal::{nyquist, FreqGrid};
use niq_core::sysmodel::{builtin, builtin_names, NonlinearStateSpace, RationalTF, SystemModel};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::exit::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemDef {
    Builtin(String),
    Tf { num: Vec<f64>, den: Vec<f64> },
    Nonlinear { nx: usize, n: usize, f: Vec<String>, h: Vec<String> },
    Scaled { tau: f64, inner: Box<SystemDef> },
    Parallel { left: Box<SystemDef>, right: Box<SystemDef> },
}

impl SystemDef {
    pub fn build(&self, systems: &BTreeMap<String, SystemDef>, depth: usize) -> Result<SystemModel, CliError> {
        if depth > 16 {
            return Err(CliError::config("system definitions nest too deeply or refer to each other"));
        }
        let model = match self {
            SystemDef::Builtin(name) => return resolve(name, systems, depth + 1),
            SystemDef::Tf { num, den } => RationalTF::new(num, den).and_then(|tf| SystemModel::from_tf(&tf)),
            SystemDef::Nonlinear { nx, n, f, h } => {
                let f: Vec<&str> = f.iter().map(String::as_str).collect();
                let h: Vec<&str> = h.iter().map(String::as_str).collect();
                NonlinearStateSpace::parse(*nx, *n, &f, &h).map(SystemModel::from)
            }
            SystemDef::Scaled { tau, inner } => SystemModel::scaled(*tau, inner.build(systems, depth + 1)?),
            SystemDef::Parallel { left, right } => {
                SystemModel::parallel(left.build(systems, depth + 1)?, right.build(systems, depth + 1)?)
            }
        };
        model.map_err(CliError::from_core_config)
    }
}

/// Config systems first, then builtins.
pub fn resolve(name: &str, systems: &BTreeMap<String, SystemDef>, depth: usize) -> Result<SystemModel, CliError> {
    if let Some(def) = systems.get(name) {
        return def.build(systems, depth);
    }
    builtin(name).map_err(|_| {
        let mut known: Vec<String> = systems.keys().cloned().collect();
        known.extend(builtin_names().iter().map(|s| s.to_string()));
        CliError::config(format!("unknown system `{name}` (known: {})", known.join(", ")))
    })
}

/// A Hermitian matrix given by preset name, real rows, or real and imaginary rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixDef {
    Preset(String),
    Real(Vec<Vec<f64>>),
    Complex { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiDef {
    pub matrix: MatrixDef,
    #[serde(default)]
    pub epsilon: f64,
}

impl XiDef {
    pub fn preset(name: &str, epsilon: f64) -> Self {
        XiDef { matrix: MatrixDef::Preset(name.into()), epsilon }
    }

    pub fn build(&self) -> Result<XiConstraint, CliError> {
        let rows_ok = |rows: &Vec<Vec<f64>>| rows.iter().all(|r| r.len() == rows.len());
        let m = match &self.matrix {
            MatrixDef::Preset(name) => {
                let rows: [[f64; 2]; 2] = match name.as_str() {
                    "xi1" => [[0.0, 1.0], [1.0, 0.0]],
                    "xi2" => [[1.0, 0.0], [0.0, -1.0]],
                    other => return Err(CliError::config(format!("unknown Ξ preset `{other}` (use xi1 or xi2)"))),
                };
                CMatrix::from_fn(2, 2, |i, j| Complex64::new(rows[i][j], 0.0))
            }
            MatrixDef::Real(rows) => {
                if !rows_ok(rows) {
                    return Err(CliError::config("Ξ must be square"));
                }
                CMatrix::from_fn(rows.len(), rows.len(), |i, j| Complex64::new(rows[i][j], 0.0))
            }
            MatrixDef::Complex { re, im } => {
                if !rows_ok(re) || !rows_ok(im) || re.len() != im.len() {
                    return Err(CliError::config("Ξ real and imaginary parts must be square and of equal size"));
                }
                CMatrix::from_fn(re.len(), re.len(), |i, j| Complex64::new(re[i][j], im[i][j]))
            }
        };
        XiConstraint::new(m, self.epsilon).map_err(CliError::from_core_config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryDef {
    pub seed: u64,
    pub count: usize,
}

impl Default for BatteryDef {
    fn default() -> Self {
        BatteryDef { seed: 0, count: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Numerics {
    pub dt: f64,
    pub horizon: f64,
    pub omega_grid: Option<FreqGrid>,
    pub bands: BandConfig,
    pub tau_grid: Vec<f64>,
    pub impulse: ImpulseConfig,
    /// Weight `α` of the high-frequency multiplier.
    pub alpha: f64,
    pub eps_inf: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            dt: 1e-3,
            horizon: 40.0,
            omega_grid: None,
            bands: BandConfig::default(),
            tau_grid: DEFAULT_TAU_GRID.to_vec(),
            impulse: ImpulseConfig::default(),
            alpha: 1.0,
            eps_inf: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub systems: BTreeMap<String, SystemDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<XiDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_inf: Option<XiDef>,
    #[serde(default)]
    pub battery: BatteryDef,
    #[serde(default)]
    pub numerics: Numerics,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            systems: BTreeMap::new(),
            xi: None,
            xi_inf: None,
            battery: BatteryDef::default(),
            numerics: Numerics::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let nm = &self.numerics;
        if !(nm.dt > 0.0 && nm.dt.is_finite()) {
            return Err(CliError::config(format!("dt must be positive, got {}", nm.dt)));
        }
        self.input_battery().validate().map_err(CliError::from_core_config)?;
        nm.bands.validate().map_err(CliError::from_core_config)?;
        let nyq = nyquist(nm.dt);
        if nm.bands.max_hi() > nyq || nm.bands.omega_hi_star > nyq {
            return Err(CliError::config(format!("band edges exceed the Nyquist frequency {nyq}")));
        }
        if let Some(g) = nm.omega_grid {
            FreqGrid::new(g.omega_max, g.count).map_err(CliError::from_core_config)?;
            if g.omega_max > nyq {
                return Err(CliError::config(format!("omega grid exceeds the Nyquist frequency {nyq}")));
            }
        }
        niq_core::iqc::tau_hull(&nm.tau_grid).map_err(CliError::from_core_config)?;
        if !(nm.alpha > 0.0 && nm.eps_inf > 0.0) {
            return Err(CliError::config("alpha and eps_inf must be positive"));
        }
        for name in self.systems.keys() {
            resolve(name, &self.systems, 0)?;
        }
        for xi in [&self.xi, &self.xi_inf].into_iter().flatten() {
            xi.build()?;
        }
        Ok(())
    }

    pub fn input_battery(&self) -> InputBattery {
        InputBattery {
            seed: self.battery.seed,
            count: self.battery.count,
            dt: self.numerics.dt,
            horizon: self.numerics.horizon,
        }
    }

    pub fn system(&self, name: &str) -> Result<SystemModel, CliError> {
        resolve(name, &self.systems, 0)
    }

    pub fn freq_grid(&self) -> FreqGrid {
        self.numerics.omega_grid.unwrap_or_else(|| FreqGrid::default_for(self.numerics.dt))
    }
}
