//! Run configuration: TOML (or JSON) with dotted `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::CapSpec;
use crate::experiments::{ScenarioConfig, Setup};
use crate::fgr::EpsSchedule;
use crate::grid_spectral::{PotentialSpec, RadialGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub r_max: f64,
    /// Interior nodes; alternatively give `dr`.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub dr: Option<f64>,
}

impl GridConfig {
    pub fn build(&self) -> Result<RadialGrid> {
        match (self.n, self.dr) {
            (Some(n), None) => RadialGrid::new(self.r_max, n),
            (None, Some(dr)) if dr > 0.0 => RadialGrid::with_spacing(self.r_max, dr),
            _ => Err(Error::Config("grid needs exactly one of n or a positive dr".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearizationConfig {
    /// Radius of the inner grid used for the linearization (same spacing as `grid`).
    pub r_max: f64,
}

impl Default for LinearizationConfig {
    fn default() -> Self {
        Self { r_max: 60.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FgrConfig {
    pub eps_factors: [f64; 3],
    pub eps_base: f64,
    /// `s` values at which `gamma(s)` of the linear problem is also reported.
    pub s_sweep: Vec<f64>,
}

impl Default for FgrConfig {
    fn default() -> Self {
        let d = EpsSchedule::default();
        Self { eps_factors: d.factors, eps_base: d.base, s_sweep: vec![] }
    }
}

impl FgrConfig {
    pub fn schedule(&self) -> EpsSchedule {
        EpsSchedule { factors: self.eps_factors, base: self.eps_base }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub e_min: f64,
    pub e_max: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
    #[serde(default)]
    pub cap: Option<CapSpec>,
    /// Initial perturbation `psi0 = Q (1 + perturbation)`.
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default)]
    pub checkpoint: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self { dt: 1e-3, t_end: 10.0, stride: 100, cap: None, perturbation: 0.0, checkpoint: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NfConfig {
    pub gamma: f64,
    pub eps: f64,
    pub eps0: f64,
    /// Forcing bound `C1` for the comparison bracket.
    pub c1: f64,
    pub sigma: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Settings of the scalar model `r' = -Gamma r^3 - eps (1+t)^-3`.
    pub example_eps: f64,
    pub example_t_end: f64,
}

impl Default for NfConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            eps: 0.1,
            eps0: 0.1,
            c1: 0.3,
            sigma: 0.1,
            t_end: 1e4,
            dt: 1.0,
            example_eps: 0.1,
            example_t_end: 1e5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub potential: PotentialSpec,
    pub grid: GridConfig,
    pub lambda: f64,
    /// Target `||Q||^2`; used unless `energy` is given.
    #[serde(default)]
    pub mass: Option<f64>,
    #[serde(default)]
    pub energy: Option<f64>,
    #[serde(default)]
    pub linearization: LinearizationConfig,
    #[serde(default)]
    pub fgr: FgrConfig,
    #[serde(default)]
    pub branch: Option<BranchConfig>,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub nf: NfConfig,
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.potential.validate()?;
        self.grid.build()?;
        if !(self.lambda.is_finite() && self.lambda != 0.0) {
            return Err(Error::Config(format!("lambda must be finite and nonzero, got {}", self.lambda)));
        }
        if self.mass.is_none() && self.energy.is_none() {
            return Err(Error::Config("one of mass or energy is required".into()));
        }
        if let Some(s) = &self.scenario {
            s.validate()?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<RadialGrid> {
        self.grid.build()
    }

    pub fn lin_grid(&self) -> Result<RadialGrid> {
        let g = self.grid()?;
        let r = self.linearization.r_max.min(g.r_max);
        RadialGrid::with_spacing(r, g.dr)
    }

    pub fn setup(&self) -> Result<Setup> {
        let mass = self
            .mass
            .ok_or_else(|| Error::Config("experiments need a target mass".into()))?;
        Ok(Setup {
            potential: self.potential,
            lambda: self.lambda,
            mass,
            grid: self.grid()?,
            lin_grid: self.lin_grid()?,
            cap: self.evolution.cap,
        })
    }

    /// Parses TOML, or JSON when the path ends in `.json`, then applies overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        Self::parse(&text, is_json, overrides)
    }

    pub fn parse(text: &str, is_json: bool, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value = if is_json {
            let mut j: serde_json::Value =
                serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
            drop_nulls(&mut j);
            toml::Value::try_from(j).map_err(|e| Error::Config(format!("unsupported JSON value: {e}")))?
        } else {
            text.parse::<toml::Table>()
                .map(toml::Value::Table)
                .map_err(|e| Error::Config(format!("invalid TOML: {e}")))?
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// TOML has no null; absent and null mean the same for every optional field.
fn drop_nulls(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.retain(|_, x| !x.is_null());
            map.values_mut().for_each(drop_nulls);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(drop_nulls),
        _ => {}
    }
}

/// `a.b.c=value`; the value is parsed as TOML, falling back to a bare string.
pub fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{}` is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(Error::Config(format!("empty override key in `{spec}`")))
}
