//! Run configuration: strict JSON with baseline defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use viraldyn::{validate_params, IntegrationOptions, ModelParams, ModelVariant, State};

/// Default grid for the neutralization sweep: the baseline b = 0.52 and
/// factor-of-two neighbours.
pub const DEFAULT_B_GRID: [f64; 4] = [0.13, 0.26, 0.52, 1.04];
/// Default grid for the enhancement sweep.
pub const DEFAULT_BETA1_GRID: [f64; 4] = [0.0, 1e-8, 1e-7, 1e-6];

/// A configuration problem, located by its JSON path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config at {}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn at(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

/// Initial state overrides; omitted entries fall back to `T = Λ/μ` and the
/// calibrated `I(0), V(0), A(0)`, with `L(0) = 0` for the latent variant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(rename = "T")]
    pub target: Option<f64>,
    #[serde(rename = "I")]
    pub infected: Option<f64>,
    #[serde(rename = "V")]
    pub virus: Option<f64>,
    #[serde(rename = "A")]
    pub antibody: Option<f64>,
    #[serde(rename = "L")]
    pub latent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_axis")]
    pub axis: String,
    /// Defaults to the shipped grid for `b` and `beta1`.
    pub values: Option<Vec<f64>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            axis: default_axis(),
            values: None,
        }
    }
}

fn default_axis() -> String {
    "beta1".into()
}

/// A resolved, validated sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub axis: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    /// Daily samples on `0..=days`.
    #[serde(default = "default_days")]
    pub days: u32,
    #[serde(default)]
    pub noise_sd_log10: f64,
    #[serde(default)]
    pub with_antibody: bool,
}

fn default_days() -> u32 {
    21
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// CSV with header `t,V[,A]`, relative to the config file.
    pub data: Option<PathBuf>,
    /// Observations generated from `params` instead of a data file.
    pub synthetic: Option<SyntheticData>,
    #[serde(default = "default_free")]
    pub free: Vec<String>,
    /// Half-width in decades of the default bounds around the start values.
    #[serde(default = "default_decades")]
    pub decades: f64,
    /// Explicit log₁₀ bounds, overriding `decades` per name.
    #[serde(default)]
    pub bounds: BTreeMap<String, (f64, f64)>,
    #[serde(default = "default_starts")]
    pub n_starts: usize,
    #[serde(default = "default_max_evals")]
    pub max_evals: usize,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            data: None,
            synthetic: None,
            free: default_free(),
            decades: default_decades(),
            bounds: BTreeMap::new(),
            n_starts: default_starts(),
            max_evals: default_max_evals(),
            weight: default_weight(),
        }
    }
}

fn default_free() -> Vec<String> {
    ["beta0", "delta", "c", "omega"].map(String::from).to_vec()
}
fn default_decades() -> f64 {
    1.0
}
fn default_starts() -> usize {
    8
}
fn default_max_evals() -> usize {
    2000
}
fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    params: ModelParams,
    #[serde(default)]
    variant: ModelVariant,
    #[serde(default)]
    init: InitConfig,
    #[serde(default)]
    integration: IntegrationOptions,
    #[serde(default)]
    sweep: SweepConfig,
    fit: Option<FitConfig>,
    out: Option<PathBuf>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub variant: ModelVariant,
    pub init: State,
    pub integration: IntegrationOptions,
    pub sweep: SweepGrid,
    pub fit: FitConfig,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Directory relative paths in the config resolve against.
    pub base_dir: PathBuf,
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        at(path, e.into_inner().to_string())
    })?;
    resolve(raw)
}

/// Reads a configuration file; relative paths inside it resolve against
/// its directory.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| at("", format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}

fn resolve(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let p = raw.params;
    let report = validate_params(&p, raw.variant).map_err(|e| at("params", e.to_string()))?;
    if let Some(c) = report.failures().next() {
        let path = if c.name == "variant" {
            "params.eta".to_string()
        } else {
            format!("params.{}", c.name)
        };
        return Err(at(path, c.message.clone()));
    }

    let i = raw.init;
    let base = State::baseline_initial(&p);
    let init = State {
        t: raw.integration.t_span.0,
        target: i.target.unwrap_or(base.target),
        infected: i.infected.unwrap_or(base.infected),
        virus: i.virus.unwrap_or(base.virus),
        antibody: i.antibody.unwrap_or(base.antibody),
        latent: match raw.variant {
            ModelVariant::Basic => {
                if i.latent.is_some() {
                    return Err(at("init.L", "only the latent variant has an L compartment"));
                }
                None
            }
            ModelVariant::Latent => Some(i.latent.unwrap_or(0.0)),
        },
    };
    let fields = [
        ("T", init.target),
        ("I", init.infected),
        ("V", init.virus),
        ("A", init.antibody),
        ("L", init.latent.unwrap_or(0.0)),
    ];
    for (name, v) in fields {
        if !(v.is_finite() && v >= 0.0) {
            return Err(at(
                format!("init.{name}"),
                format!("must be finite and non-negative, got {v}"),
            ));
        }
    }

    raw.integration
        .validate()
        .map_err(|e| at("integration", e.to_string()))?;

    let sweep = resolve_sweep(&p, raw.variant, &raw.sweep)?;
    let fit = raw.fit.unwrap_or_default();
    resolve_fit(&fit)?;

    Ok(RunConfig {
        params: p,
        variant: raw.variant,
        init,
        integration: raw.integration,
        sweep,
        fit,
        out: raw.out,
        seed: raw.seed,
        base_dir: PathBuf::new(),
    })
}

fn resolve_sweep(
    p: &ModelParams,
    variant: ModelVariant,
    s: &SweepConfig,
) -> Result<SweepGrid, ConfigError> {
    if !ModelParams::NAMES.contains(&s.axis.as_str()) {
        return Err(at("sweep.axis", format!("unknown parameter `{}`", s.axis)));
    }
    let values = match (&s.values, s.axis.as_str()) {
        (Some(v), _) => v.clone(),
        (None, "b") => DEFAULT_B_GRID.to_vec(),
        (None, "beta1") => DEFAULT_BETA1_GRID.to_vec(),
        (None, axis) => {
            return Err(at(
                "sweep.values",
                format!("no default grid for `{axis}`; list values"),
            ))
        }
    };
    if values.is_empty() {
        return Err(at("sweep.values", "must not be empty"));
    }
    for (k, &v) in values.iter().enumerate() {
        if values[..k].contains(&v) {
            return Err(at(
                format!("sweep.values[{k}]"),
                format!("{v} is listed twice"),
            ));
        }
        let mut q = *p;
        q.set(&s.axis, v);
        let ok = validate_params(&q, variant).is_ok_and(|r| r.is_ok());
        if !ok {
            return Err(at(
                format!("sweep.values[{k}]"),
                format!("{v} is not admissible for {}", s.axis),
            ));
        }
    }
    Ok(SweepGrid {
        axis: s.axis.clone(),
        values,
    })
}

fn resolve_fit(f: &FitConfig) -> Result<(), ConfigError> {
    if f.data.is_some() && f.synthetic.is_some() {
        return Err(at("fit", "give either `data` or `synthetic`, not both"));
    }
    if !(f.decades > 0.0 && f.decades.is_finite()) {
        return Err(at(
            "fit.decades",
            format!("must be positive, got {}", f.decades),
        ));
    }
    if f.n_starts == 0 {
        return Err(at("fit.n_starts", "must be at least 1"));
    }
    for (k, name) in f.free.iter().enumerate() {
        let known = ModelParams::NAMES.contains(&name.as_str())
            || viraldyn::fitting::INITIAL_CONDITION_NAMES.contains(&name.as_str());
        if !known {
            return Err(at(
                format!("fit.free[{k}]"),
                format!("unknown parameter `{name}`"),
            ));
        }
    }
    for name in f.bounds.keys() {
        if !f.free.contains(name) {
            return Err(at(
                format!("fit.bounds.{name}"),
                "bounds given for a parameter that is not free",
            ));
        }
    }
    if let Some(s) = &f.synthetic {
        if !(s.noise_sd_log10 >= 0.0 && s.noise_sd_log10.is_finite()) {
            return Err(at(
                "fit.synthetic.noise_sd_log10",
                "must be finite and non-negative",
            ));
        }
    }
    Ok(())
}
