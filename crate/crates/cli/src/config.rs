//! Plain-text `key = value` model configuration files.
//!
//! Keys mirror the parameter field names; `#` starts a comment. The
//! minimal file names a model kind plus mass, stiffness, rest length and
//! hip width; everything else falls back to the baseline defaults for
//! that kind.

use latstab_core::params::{Joint, ModelKind, ModelParams, PdGains};

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    MissingKey(&'static str),
    UnknownKey(String),
    BadValue(String, String),
    BadLine(usize, String),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::MissingKey(k) => write!(f, "missing config key: {k}"),
            ConfigError::UnknownKey(k) => write!(f, "unknown config key: {k}"),
            ConfigError::BadValue(k, v) => write!(f, "bad value for {k}: {v}"),
            ConfigError::BadLine(n, l) => write!(f, "line {n} is not `key = value`: {l}"),
            ConfigError::Invalid(msg) => write!(f, "invalid parameters: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// A parsed configuration: the model plus any PD controllers it enables.
#[derive(Debug, Clone)]
pub struct Config {
    pub params: ModelParams,
    pub gains: Vec<PdGains>,
    /// Optional default stride frequency [rad/s] for commands that need one.
    pub stride_frequency: Option<f64>,
}

pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let mut kind = None;
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::BadLine(lineno + 1, raw.to_string()))?;
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        if key == "kind" {
            kind = Some(match value.as_str() {
                "fixed_hip" => ModelKind::FixedHip,
                "fixed_ankle" => ModelKind::FixedAnkle,
                "extended" => ModelKind::Extended,
                _ => return Err(ConfigError::BadValue(key, value)),
            });
        } else {
            pairs.push((key, value));
        }
    }
    let kind = kind.ok_or(ConfigError::MissingKey("kind"))?;

    let mut required = RequiredFields::default();
    let mut overrides: Vec<(String, String)> = Vec::new();
    for (key, value) in pairs {
        match key.as_str() {
            "total_mass" => required.total_mass = Some(parse_f64(&key, &value)?),
            "leg_stiffness" => required.leg_stiffness = Some(parse_f64(&key, &value)?),
            "rest_length_max" => required.rest_length_max = Some(parse_f64(&key, &value)?),
            "hip_width" => required.hip_width = Some(parse_f64(&key, &value)?),
            _ => overrides.push((key, value)),
        }
    }
    let total_mass = required.total_mass.ok_or(ConfigError::MissingKey("total_mass"))?;
    let leg_stiffness = required.leg_stiffness.ok_or(ConfigError::MissingKey("leg_stiffness"))?;
    let l0 = required.rest_length_max.ok_or(ConfigError::MissingKey("rest_length_max"))?;
    let hip_width = required.hip_width.ok_or(ConfigError::MissingKey("hip_width"))?;

    let mut params = match kind {
        ModelKind::Extended => ModelParams::extended(total_mass, leg_stiffness, l0, hip_width),
        _ => ModelParams::simplified(kind, total_mass, leg_stiffness, l0, hip_width),
    };
    let mut pd: Vec<(Joint, f64)> = Vec::new();
    let mut stride_frequency = None;
    for (key, value) in overrides {
        match key.as_str() {
            "damping_ratio" => params.damping_ratio = parse_f64(&key, &value)?,
            "retraction_fraction" => params.retraction_fraction = parse_f64(&key, &value)?,
            "torso_offset" => params.torso_offset = parse_f64(&key, &value)?,
            "torso_radius_of_gyration" => {
                params.torso_radius_of_gyration = if value == "none" {
                    None
                } else {
                    Some(parse_f64(&key, &value)?)
                }
            }
            "leg_mass_fraction" => params.leg_mass_fraction = parse_f64(&key, &value)?,
            "leg_mass_offset" => params.leg_mass_offset = parse_f64(&key, &value)?,
            "gravity" => params.gravity = parse_f64(&key, &value)?,
            "stride_frequency" => stride_frequency = Some(parse_f64(&key, &value)?),
            "pd_stance_ankle_kp" => pd.push((Joint::StanceAnkle, parse_f64(&key, &value)?)),
            "pd_stance_hip_kp" => pd.push((Joint::StanceHip, parse_f64(&key, &value)?)),
            "pd_swing_hip_kp" => pd.push((Joint::SwingHip, parse_f64(&key, &value)?)),
            _ => return Err(ConfigError::UnknownKey(key)),
        }
    }
    params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let gains = pd
        .into_iter()
        .map(|(joint, kp)| {
            PdGains::with_damping_ratio(kp, 0.1, joint, &params)
                .map_err(|e| ConfigError::Invalid(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Config {
        params,
        gains,
        stride_frequency,
    })
}

#[derive(Default)]
struct RequiredFields {
    total_mass: Option<f64>,
    leg_stiffness: Option<f64>,
    rest_length_max: Option<f64>,
    hip_width: Option<f64>,
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::BadValue(key.to_string(), value.to_string()))
}

pub fn load_config(path: &std::path::Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}
