//! Flat `key = value` run configuration with `#` comments, scientific
//! notation for numbers, and rejection of unknown keys. The canonical
//! echo of a configuration is embedded in every output file; it excludes
//! execution-only settings (worker count, output paths) so that results
//! are byte-identical across worker counts.

use std::fmt::Write as _;
use std::sync::Arc;

use tsm_core::dynamics::ays::{AysControl, AysParams, AysTransformed};
use tsm_core::dynamics::{ControlledSystem, Decay1D, Drift1D};
use tsm_core::geometry::{CompactMap, Homogenized};
use tsm_core::grid::Grid;
use tsm_core::viability::{estimate_lipschitz, Expansion, SuccessorConfig, DEFAULT_CACHE_LIMIT};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ays,
    Decay1D,
    Drift1D,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::Ays => "ays",
            ModelKind::Decay1D => "decay1d",
            ModelKind::Drift1D => "drift1d",
        }
    }

    fn parse(s: &str) -> Option<ModelKind> {
        match s {
            "ays" => Some(ModelKind::Ays),
            "decay1d" => Some(ModelKind::Decay1D),
            "drift1d" => Some(ModelKind::Drift1D),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LipschitzSetting {
    Value(f64),
    /// Finite-difference estimate over the grid at build time.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionMode {
    Guaranteed,
    Strict,
}

/// Everything a run needs apart from output paths and worker count.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub resolution: usize,
    pub controls: Vec<AysControl>,
    /// Absolute time step; when absent, `dt_factor` times the axis spacing.
    pub dt: Option<f64>,
    pub dt_factor: f64,
    /// Homogenization regularizer.
    pub epsilon: f64,
    pub expansion: ExpansionMode,
    pub rhs_bound: f64,
    pub lipschitz: LipschitzSetting,
    pub seed: u64,
    pub params: AysParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::Ays,
            resolution: 80,
            controls: AysControl::ALL.to_vec(),
            dt: None,
            dt_factor: 1.5,
            epsilon: 1e-4,
            expansion: ExpansionMode::Guaranteed,
            rhs_bound: 1.0,
            lipschitz: LipschitzSetting::Value(10.0),
            seed: 0,
            params: AysParams::default(),
        }
    }
}

fn bad(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("config line {line}: {msg}"))
}

impl RunConfig {
    /// Parses `key = value` text; errors carry the offending line number.
    pub fn parse(text: &str) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        let mut dt_factor_explicit = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(line_no, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(bad(line_no, format!("empty value for `{key}`")));
            }
            if seen.iter().any(|k| k == key) {
                return Err(bad(line_no, format!("duplicate key `{key}`")));
            }
            seen.push(key.to_string());
            let float = |v: &str| -> CliResult<f64> {
                v.parse::<f64>()
                    .map_err(|_| bad(line_no, format!("`{v}` is not a number")))
            };
            match key {
                "model" => {
                    cfg.model = ModelKind::parse(value)
                        .ok_or_else(|| bad(line_no, format!("unknown model `{value}`")))?;
                }
                "resolution" => {
                    cfg.resolution = value
                        .parse::<usize>()
                        .ok()
                        .filter(|&r| (2..=4096).contains(&r))
                        .ok_or_else(|| bad(line_no, "resolution must be an integer in 2..=4096"))?;
                }
                "controls" => {
                    let mut controls = Vec::new();
                    for name in value.split(',') {
                        let name = name.trim();
                        let c = AysControl::parse(name)
                            .ok_or_else(|| bad(line_no, format!("unknown control `{name}`")))?;
                        controls.push(c);
                    }
                    cfg.controls = controls;
                }
                "dt" => {
                    let v = float(value)?;
                    if v <= 0.0 {
                        return Err(bad(line_no, "dt must be positive"));
                    }
                    cfg.dt = Some(v);
                }
                "dt_factor" => {
                    let v = float(value)?;
                    if v <= 0.0 {
                        return Err(bad(line_no, "dt_factor must be positive"));
                    }
                    cfg.dt_factor = v;
                    dt_factor_explicit = true;
                }
                "epsilon" => {
                    let v = float(value)?;
                    if v <= 0.0 {
                        return Err(bad(line_no, "epsilon must be positive"));
                    }
                    cfg.epsilon = v;
                }
                "expansion" => {
                    cfg.expansion = match value {
                        "guaranteed" => ExpansionMode::Guaranteed,
                        "strict" => ExpansionMode::Strict,
                        _ => {
                            return Err(bad(line_no, "expansion must be `guaranteed` or `strict`"))
                        }
                    };
                }
                "rhs_bound" => cfg.rhs_bound = float(value)?,
                "lipschitz" => {
                    cfg.lipschitz = if value == "auto" {
                        LipschitzSetting::Auto
                    } else {
                        LipschitzSetting::Value(float(value)?)
                    };
                }
                "seed" => {
                    cfg.seed = value
                        .parse::<u64>()
                        .map_err(|_| bad(line_no, "seed must be a nonnegative integer"))?;
                }
                "tau_a" => cfg.params.tau_a = float(value)?,
                "tau_s" => cfg.params.tau_s = float(value)?,
                "beta" => cfg.params.beta = float(value)?,
                "beta_lg" => cfg.params.beta_lg = float(value)?,
                "theta" => cfg.params.theta = float(value)?,
                "epsilon_energy" => cfg.params.epsilon_energy = float(value)?,
                "phi" => cfg.params.phi = float(value)?,
                "sigma" => cfg.params.sigma = float(value)?,
                "sigma_et" => cfg.params.sigma_et = float(value)?,
                "rho" => cfg.params.rho = float(value)?,
                "a_mid" => cfg.params.a_mid = float(value)?,
                "y_mid" => cfg.params.y_mid = float(value)?,
                "s_mid" => cfg.params.s_mid = float(value)?,
                "a_pb" => cfg.params.a_pb = float(value)?,
                "y_sf" => cfg.params.y_sf = float(value)?,
                _ => return Err(bad(line_no, format!("unknown key `{key}`"))),
            }
        }
        if cfg.dt.is_some() && dt_factor_explicit {
            return Err(CliError::Config(
                "config: set either `dt` or `dt_factor`, not both".to_string(),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.params
            .validate()
            .map_err(|e| CliError::Config(format!("config: {e}")))?;
        if self.controls.is_empty() {
            return Err(CliError::Config("config: controls must be nonempty".into()));
        }
        if self.controls[0] != AysControl::Default {
            return Err(CliError::Config(
                "config: the default control must come first in `controls`".into(),
            ));
        }
        Ok(())
    }

    /// Canonical text form: fixed key order, shortest round-trip floats.
    /// Re-parsing the echo reproduces the configuration exactly.
    pub fn canonical_echo(&self) -> String {
        let mut out = String::new();
        let p = &self.params;
        let _ = writeln!(out, "model = {}", self.model.name());
        let _ = writeln!(out, "resolution = {}", self.resolution);
        let names: Vec<&str> = self.controls.iter().map(|c| c.name()).collect();
        let _ = writeln!(out, "controls = {}", names.join(","));
        match self.dt {
            Some(dt) => {
                let _ = writeln!(out, "dt = {dt:?}");
            }
            None => {
                let _ = writeln!(out, "dt_factor = {:?}", self.dt_factor);
            }
        }
        let _ = writeln!(out, "epsilon = {:?}", self.epsilon);
        let mode = match self.expansion {
            ExpansionMode::Guaranteed => "guaranteed",
            ExpansionMode::Strict => "strict",
        };
        let _ = writeln!(out, "expansion = {mode}");
        let _ = writeln!(out, "rhs_bound = {:?}", self.rhs_bound);
        match self.lipschitz {
            LipschitzSetting::Auto => {
                let _ = writeln!(out, "lipschitz = auto");
            }
            LipschitzSetting::Value(v) => {
                let _ = writeln!(out, "lipschitz = {v:?}");
            }
        }
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "tau_a = {:?}", p.tau_a);
        let _ = writeln!(out, "tau_s = {:?}", p.tau_s);
        let _ = writeln!(out, "beta = {:?}", p.beta);
        let _ = writeln!(out, "beta_lg = {:?}", p.beta_lg);
        let _ = writeln!(out, "theta = {:?}", p.theta);
        let _ = writeln!(out, "epsilon_energy = {:?}", p.epsilon_energy);
        let _ = writeln!(out, "phi = {:?}", p.phi);
        let _ = writeln!(out, "sigma = {:?}", p.sigma);
        let _ = writeln!(out, "sigma_et = {:?}", p.sigma_et);
        let _ = writeln!(out, "rho = {:?}", p.rho);
        let _ = writeln!(out, "a_mid = {:?}", p.a_mid);
        let _ = writeln!(out, "y_mid = {:?}", p.y_mid);
        let _ = writeln!(out, "s_mid = {:?}", p.s_mid);
        let _ = writeln!(out, "a_pb = {:?}", p.a_pb);
        let _ = writeln!(out, "y_sf = {:?}", p.y_sf);
        out
    }

    pub fn config_hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical_echo().as_bytes()))
    }

    pub fn dim(&self) -> usize {
        match self.model {
            ModelKind::Ays => 3,
            _ => 1,
        }
    }

    pub fn grid(&self) -> CliResult<Arc<Grid>> {
        Grid::unit_box(self.dim(), self.resolution).map_err(CliError::from)
    }

    /// Resolved time step and expansion radius for `grid`. The Lipschitz
    /// estimate in `auto` mode samples the built system.
    pub fn successor_config(
        &self,
        grid: &Arc<Grid>,
        sys: &(dyn ControlledSystem + Send + Sync),
    ) -> CliResult<SuccessorConfig> {
        let dt = self.dt.unwrap_or(self.dt_factor * grid.max_spacing());
        let expansion = match self.expansion {
            ExpansionMode::Strict => Expansion::Strict,
            ExpansionMode::Guaranteed => {
                let lipschitz = match self.lipschitz {
                    LipschitzSetting::Value(v) => v,
                    LipschitzSetting::Auto => {
                        estimate_lipschitz(&sys, grid, &sys.controls(), 2000, self.seed)?
                    }
                };
                Expansion::Guaranteed {
                    rhs_bound: self.rhs_bound,
                    lipschitz,
                }
            }
        };
        Ok(SuccessorConfig {
            dt,
            expansion,
            cache_limit: DEFAULT_CACHE_LIMIT,
        })
    }

    /// Builds the configured model: homogenized system, desirable
    /// predicate and (for the bundled model) the compactification.
    pub fn build(&self) -> CliResult<BuiltModel> {
        match self.model {
            ModelKind::Ays => {
                let params = self.params.clone();
                let sys = AysTransformed::with_controls(params.clone(), &self.controls)?;
                let sys = Homogenized::new(sys, self.epsilon)?;
                let desirable: DesirablePredicate = {
                    let p = params.clone();
                    Box::new(move |y: &[f64]| p.desirable_transformed(y))
                };
                Ok(BuiltModel {
                    system: Box::new(sys),
                    desirable,
                    map: Some(params.compact_map()),
                })
            }
            ModelKind::Decay1D => Ok(BuiltModel {
                system: Box::new(Homogenized::new(Decay1D, self.epsilon)?),
                desirable: Box::new(|_x| true),
                map: None,
            }),
            ModelKind::Drift1D => Ok(BuiltModel {
                system: Box::new(Homogenized::new(Drift1D, self.epsilon)?),
                desirable: Box::new(|_x| true),
                map: None,
            }),
        }
    }
}

pub type DesirablePredicate = Box<dyn Fn(&[f64]) -> bool + Send + Sync>;

pub struct BuiltModel {
    pub system: Box<dyn ControlledSystem + Send + Sync>,
    pub desirable: DesirablePredicate,
    pub map: Option<CompactMap>,
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
