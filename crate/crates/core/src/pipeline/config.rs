use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::ShootingOptions;
use crate::edmd::EdmdPath;
use crate::error::{Error, Result};
use crate::polybasis::{BasisFamily, BasisSpec};
use crate::sdpsolver::{PolishSettings, SolverSettings};

/// Which dynamical system produces the data or the exact Lie matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SystemConfig {
    /// `x -> 2x^2 - 1` on `[-1, 1]`.
    Logistic,
    /// `x -> 2x - x^2` on `[0, 1]`.
    TwoFixedPoint,
    DoubleWell {
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    Rossler {
        #[serde(default = "default_rossler_a")]
        a: f64,
        #[serde(default = "default_rossler_a")]
        b: f64,
        #[serde(default = "default_rossler_c")]
        c: f64,
    },
}

fn default_sigma() -> f64 {
    0.75
}
fn default_rossler_a() -> f64 {
    0.1
}
fn default_rossler_c() -> f64 {
    18.0
}

impl SystemConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SystemConfig::Logistic => "logistic",
            SystemConfig::TwoFixedPoint => "two-fixed-point",
            SystemConfig::DoubleWell { .. } => "double-well",
            SystemConfig::Rossler { .. } => "rossler",
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            SystemConfig::Logistic | SystemConfig::TwoFixedPoint => 1,
            SystemConfig::DoubleWell { .. } => 2,
            SystemConfig::Rossler { .. } => 3,
        }
    }

    pub fn default_domain(&self) -> Vec<(f64, f64)> {
        match self {
            SystemConfig::Logistic => vec![(-1.0, 1.0)],
            SystemConfig::TwoFixedPoint => vec![(0.0, 1.0)],
            SystemConfig::DoubleWell { .. } => vec![(-1.0, 1.0); 2],
            SystemConfig::Rossler { .. } => vec![(-30.0, 30.0), (-30.0, 30.0), (0.0, 60.0)],
        }
    }
}

/// How snapshot pairs are obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataConfig {
    /// `m` consecutive iterates of a map.
    Orbit { x0: Vec<f64>, m: usize },
    /// Euler–Maruyama realizations started uniformly in `init_box`.
    Sde {
        realizations: usize,
        steps: usize,
        tau: f64,
        seed: u64,
        init_box: Vec<(f64, f64)>,
    },
    /// Samples every `tau` of one RK4 trajectory.
    Ode { x0: Vec<f64>, t_end: f64, tau: f64, h: f64 },
    /// Return-map data on the section `x[coordinate] = level` (upward),
    /// recording `x[observed]`.
    Section {
        x0: Vec<f64>,
        t_end: f64,
        tau: f64,
        h: f64,
        coordinate: usize,
        level: f64,
        observed: usize,
        #[serde(default)]
        range: Option<(f64, f64)>,
    },
    /// A previously saved snapshot file.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    #[serde(default = "default_family")]
    pub family: BasisFamily,
    pub k: u32,
    pub l: u32,
    /// Defaults to the system's box (or the section range).
    #[serde(default)]
    pub domain: Option<Vec<(f64, f64)>>,
}

fn default_family() -> BasisFamily {
    BasisFamily::Chebyshev
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdmdConfig {
    pub path: EdmdPath,
    /// Use the exact Lie matrix of the configured system instead of data.
    pub exact: bool,
    /// Relative cut of the sparsifying refinement; off when absent.
    pub threshold: Option<f64>,
    pub max_rounds: usize,
}

impl Default for EdmdConfig {
    fn default() -> Self {
        EdmdConfig {
            path: EdmdPath::Auto,
            exact: false,
            threshold: None,
            max_rounds: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    Linear,
    Fit,
    RelativeFit,
}

/// Objective over dictionary elements named by exponent vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    pub moments: Vec<Vec<u32>>,
    /// Linear coefficients, aligned with `moments`.
    #[serde(default)]
    pub coefficients: Vec<f64>,
    /// Fit targets; empirical data moments when absent.
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Defaults to [`SolverSettings::for_dimension`] of the state dimension.
    pub settings: Option<SolverSettings>,
    pub polish: bool,
    pub polish_settings: PolishSettings,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            settings: None,
            polish: false,
            polish_settings: PolishSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    /// Density degree; defaults to `k`.
    pub degree: Option<u32>,
    pub density: bool,
    pub atoms: bool,
    pub rank_tol: f64,
    /// Points per axis of the exported density grid.
    pub grid: Option<usize>,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            degree: None,
            density: true,
            atoms: false,
            rank_tol: crate::recovery::DEFAULT_RANK_TOL,
            grid: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpoConfig {
    pub objectives: usize,
    pub seed: u64,
    pub period_cap: usize,
    pub shooting: ShootingConfig,
}

impl Default for UpoConfig {
    fn default() -> Self {
        UpoConfig {
            objectives: 200,
            seed: 7,
            period_cap: 8,
            shooting: ShootingConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShootingConfig {
    pub h_max: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub max_flight: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        let o = ShootingOptions::default();
        ShootingConfig {
            h_max: o.h_max,
            tol: o.tol,
            max_iter: o.max_iter,
            max_flight: o.max_flight,
        }
    }
}

impl From<&ShootingConfig> for ShootingOptions {
    fn from(c: &ShootingConfig) -> Self {
        ShootingOptions {
            h_max: c.h_max,
            tol: c.tol,
            max_iter: c.max_iter,
            max_flight: c.max_flight,
            ..ShootingOptions::default()
        }
    }
}

/// Everything needed to run the pipeline end to end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub system: SystemConfig,
    #[serde(default)]
    pub data: Option<DataConfig>,
    pub basis: BasisConfig,
    #[serde(default)]
    pub edmd: EdmdConfig,
    #[serde(default)]
    pub objective: Option<ObjectiveConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub recovery: RecoveryConfig,
    #[serde(default)]
    pub upo: Option<UpoConfig>,
    /// Output directory, relative to the output root unless absolute.
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// Domain box of the dictionary, when it is known before any data exists.
    pub fn domain(&self) -> Option<Vec<(f64, f64)>> {
        if let Some(d) = &self.basis.domain {
            return Some(d.clone());
        }
        match &self.data {
            Some(DataConfig::Section { range, .. }) => range.map(|r| vec![r]),
            Some(DataConfig::File { .. }) => None,
            _ => Some(self.system.default_domain()),
        }
    }

    /// Dimension of the state the dictionary lives on.
    pub fn state_dimension(&self) -> usize {
        match &self.data {
            Some(DataConfig::Section { .. }) => 1,
            _ => self.system.dimension(),
        }
    }

    pub fn solver_settings(&self) -> SolverSettings {
        self.solver
            .settings
            .clone()
            .unwrap_or_else(|| SolverSettings::for_dimension(self.state_dimension()))
    }

    pub fn spec_for(&self, domain: Vec<(f64, f64)>) -> Result<BasisSpec> {
        BasisSpec::new(self.basis.family, self.state_dimension(), self.basis.l, domain)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.basis.l < self.basis.k {
            return bad(format!("l = {} must be at least k = {}", self.basis.l, self.basis.k));
        }
        if self.name.is_empty() {
            return bad("name must not be empty".into());
        }
        let n = self.state_dimension();
        if let Some(d) = &self.basis.domain {
            if d.len() != n || d.iter().any(|&(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
                return bad("basis.domain must list one finite interval per state coordinate".into());
            }
        }
        match &self.data {
            None if !self.edmd.exact => return bad("data is required unless edmd.exact is set".into()),
            Some(DataConfig::Orbit { x0, m }) => {
                if !matches!(self.system, SystemConfig::Logistic | SystemConfig::TwoFixedPoint) {
                    return bad("orbit data needs a map system".into());
                }
                if x0.len() != n || *m == 0 {
                    return bad("orbit needs x0 of the state dimension and m > 0".into());
                }
            }
            Some(DataConfig::Sde {
                realizations,
                steps,
                tau,
                init_box,
                ..
            }) => {
                if !matches!(self.system, SystemConfig::DoubleWell { .. }) {
                    return bad("sde data needs the double-well system".into());
                }
                if *realizations == 0 || *steps == 0 || !(*tau > 0.0) || init_box.len() != n {
                    return bad("sde needs realizations, steps, tau > 0 and an init box".into());
                }
            }
            Some(DataConfig::Ode { x0, t_end, tau, h }) | Some(DataConfig::Section { x0, t_end, tau, h, .. }) => {
                if !matches!(self.system, SystemConfig::Rossler { .. }) {
                    return bad("ode data needs a vector field system".into());
                }
                if x0.len() != self.system.dimension() || !(*t_end > 0.0 && *tau > 0.0 && *h > 0.0) {
                    return bad("ode needs x0 and positive t_end, tau, h".into());
                }
            }
            _ => {}
        }
        if let Some(DataConfig::Section {
            coordinate, observed, ..
        }) = &self.data
        {
            let d = self.system.dimension();
            if *coordinate >= d || *observed >= d {
                return bad("section coordinates out of range".into());
            }
        }
        if let Some(o) = &self.objective {
            if o.moments.iter().any(|e| e.len() != n) {
                return bad("objective exponent vectors must match the state dimension".into());
            }
            if o.moments.iter().any(|e| e.iter().sum::<u32>() > self.basis.k) {
                return bad("objective moments must have degree <= k".into());
            }
            match o.kind {
                ObjectiveKind::Linear if o.coefficients.len() != o.moments.len() => {
                    return bad("linear objective needs one coefficient per moment".into())
                }
                ObjectiveKind::Fit | ObjectiveKind::RelativeFit => {
                    if let Some(v) = &o.values {
                        if v.len() != o.moments.len() {
                            return bad("fit objective needs one value per moment".into());
                        }
                    } else if self.data.is_none() {
                        return bad("empirical fit targets need data".into());
                    }
                }
                _ => {}
            }
        }
        if self.recovery.atoms && !(self.recovery.rank_tol > 0.0) {
            return bad("recovery.rank_tol must be positive".into());
        }
        if let Some(r) = self.recovery.degree {
            if r > self.basis.l {
                return bad("recovery.degree must not exceed l".into());
            }
        }
        if let Some(u) = &self.upo {
            if u.objectives == 0 {
                return bad("upo.objectives must be positive".into());
            }
            if self.state_dimension() != 1 {
                return bad("upo hunts need one-dimensional section data".into());
            }
        }
        Ok(())
    }
}
