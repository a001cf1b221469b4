//! Run configuration: an optional TOML file, overridden field by field by
//! command-line flags.

use std::path::Path;

use boltzmann::orbits::{BetaBarOptions, OrbitOptions};
use boltzmann::Params;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub arc: ArcConfig,
    #[serde(default)]
    pub orbit: OrbitConfig,
    #[serde(default)]
    pub beta_bar: BetaBarConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub h: Option<f64>,
    pub l: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub x: Option<f64>,
    pub angle: Option<f64>,
    pub word: Option<String>,
    pub bounces: Option<usize>,
    pub samples: Option<usize>,
    pub out: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcConfig {
    pub x0: Option<f64>,
    pub x1: Option<f64>,
    pub k: Option<i64>,
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub word: Option<String>,
    pub n_pad: Option<usize>,
    pub window: Option<usize>,
    pub half_width: Option<f64>,
    pub nodes: Option<usize>,
    pub grad_tol: Option<f64>,
    pub residual_tol: Option<f64>,
    pub closure_tol: Option<f64>,
    pub samples: Option<usize>,
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaBarConfig {
    pub c_points: Option<usize>,
    pub phi_points: Option<usize>,
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub h: Option<Vec<f64>>,
    pub l: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub word_length: Option<usize>,
    pub symbols: Option<Vec<i64>>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

/// Physical parameters from flags, then the config file, then `h = L = 1`,
/// `beta = 0.01`. At `beta = 0` no arc winds around the centre.
pub fn params(flags: &ParamsConfig, cfg: &ParamsConfig) -> Result<Params, CliError> {
    let h = flags.h.or(cfg.h).unwrap_or(1.0);
    let l = flags.l.or(cfg.l).unwrap_or(1.0);
    let beta = flags.beta.or(cfg.beta).unwrap_or(0.01);
    Params::new(h, l, beta).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{name} must be positive, got {v}")))
    }
}

pub fn orbit_options(flags: &OrbitConfig, cfg: &OrbitConfig) -> Result<OrbitOptions, CliError> {
    let mut o = OrbitOptions::default();
    if let Some(v) = flags.half_width.or(cfg.half_width) {
        o.half_width = positive("half-width", v)?;
    }
    if let Some(v) = flags.nodes.or(cfg.nodes) {
        if v < 8 {
            return Err(CliError::Usage(format!("nodes must be at least 8, got {v}")));
        }
        o.arc.nodes = v;
        o.arc.geodesic_nodes = 2 * v;
    }
    if let Some(v) = flags.grad_tol.or(cfg.grad_tol) {
        o.grad_tol = positive("grad-tol", v)?;
    }
    if let Some(v) = flags.residual_tol.or(cfg.residual_tol) {
        o.residual_tol = positive("residual-tol", v)?;
    }
    if let Some(v) = flags.closure_tol.or(cfg.closure_tol) {
        o.closure_tol = positive("closure-tol", v)?;
    }
    if let Some(v) = flags.samples.or(cfg.samples) {
        o.arc.samples = v.max(2);
    }
    Ok(o)
}

pub fn beta_bar_options(flags: &BetaBarConfig, cfg: &BetaBarConfig) -> Result<BetaBarOptions, CliError> {
    let mut o = BetaBarOptions::default();
    if let Some(v) = flags.c_points.or(cfg.c_points) {
        o.c_points = v.max(2);
    }
    if let Some(v) = flags.phi_points.or(cfg.phi_points) {
        o.phi_points = v.max(2);
    }
    if let Some(v) = flags.rel_tol.or(cfg.rel_tol) {
        o.rel_tol = positive("rel-tol", v)?;
    }
    Ok(o)
}

/// Parse a word like `1,-2,3`. Zero and malformed symbols are usage errors.
pub fn parse_word(s: &str) -> Result<Vec<i64>, CliError> {
    let word: Vec<i64> = s
        .split(',')
        .map(|t| t.trim().parse::<i64>().map_err(|e| CliError::Usage(format!("bad symbol {t:?}: {e}"))))
        .collect::<Result<_, _>>()?;
    if word.contains(&0) {
        return Err(CliError::Usage("winding 0 is not a symbol".into()));
    }
    Ok(word)
}
