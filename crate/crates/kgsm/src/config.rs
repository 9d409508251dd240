//! JSON experiment configuration.
//!
//! A config document pins everything a run needs: the system, the methods,
//! the budgets, and the seed. Serialization round-trips exactly, unknown
//! fields are rejected, and the smoothing parameter accepts either a number
//! or the string "auto" (resolve against the system's smallest spectral
//! ratio at run time).

use std::fmt;
use std::path::PathBuf;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::solvers::{Method, MomentumParams, SolverError};
use crate::stochastics::RngStream;
use crate::systems::{
    generate_gaussian_system, generate_preset_system, generate_spectrum_system, LinearSystem,
    SpectrumPreset, SystemError,
};
use crate::theory;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown spectrum preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// How to synthesize the linear system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemSpec {
    /// Named spectral profile expanded to `cols` values.
    Preset { name: String, rows: usize, cols: usize },
    /// Dense standard-normal entries; the spectrum falls out of the draw.
    Gaussian { rows: usize, cols: usize },
    /// Fully explicit singular values; `cols` equals their count.
    Explicit { sigma: Vec<f64>, rows: usize },
}

pub fn preset_by_name(name: &str) -> Result<SpectrumPreset, ConfigError> {
    match name {
        "one-small" => Ok(SpectrumPreset::OneSmall),
        "two-small" => Ok(SpectrumPreset::TwoSmall),
        "many-small" => Ok(SpectrumPreset::ManySmall),
        "linear" => Ok(SpectrumPreset::Linear),
        "convex-poly" => Ok(SpectrumPreset::ConvexPoly),
        "concave-poly" => Ok(SpectrumPreset::ConcavePoly),
        other => Err(ConfigError::UnknownPreset(other.to_string())),
    }
}

impl SystemSpec {
    pub fn preset(name: &str, rows: usize, cols: usize) -> Self {
        SystemSpec::Preset { name: name.to_string(), rows, cols }
    }

    pub fn cols(&self) -> usize {
        match self {
            SystemSpec::Preset { cols, .. } | SystemSpec::Gaussian { cols, .. } => *cols,
            SystemSpec::Explicit { sigma, .. } => sigma.len(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let (rows, cols) = match self {
            SystemSpec::Preset { name, rows, cols } => {
                preset_by_name(name)?;
                (*rows, *cols)
            }
            SystemSpec::Gaussian { rows, cols } => (*rows, *cols),
            SystemSpec::Explicit { sigma, rows } => {
                if sigma.is_empty() {
                    return Err(ConfigError::Invalid("explicit sigma is empty".to_string()));
                }
                if let Some(bad) = sigma.iter().find(|s| !s.is_finite() || **s <= 0.0) {
                    return Err(ConfigError::Invalid(format!(
                        "explicit sigma holds a non-positive value {bad}"
                    )));
                }
                (*rows, sigma.len())
            }
        };
        if cols == 0 || rows < cols {
            return Err(ConfigError::Invalid(format!(
                "system needs rows >= cols >= 1, got {rows} x {cols}"
            )));
        }
        Ok(())
    }

    pub fn build(&self, stream: &mut RngStream) -> Result<LinearSystem, ConfigError> {
        self.validate()?;
        let system = match self {
            SystemSpec::Preset { name, rows, cols } => {
                generate_preset_system(&preset_by_name(name)?, *rows, *cols, stream)?
            }
            SystemSpec::Gaussian { rows, cols } => generate_gaussian_system(*rows, *cols, stream)?,
            SystemSpec::Explicit { sigma, rows } => {
                generate_spectrum_system(sigma, *rows, sigma.len(), stream)?
            }
        };
        Ok(system)
    }
}

/// Smoothing parameter: a number, or "auto" for the boundary value of the
/// system's smallest direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaSpec {
    Auto,
    Value(f64),
}

impl BetaSpec {
    pub fn resolve(&self, eta_min: f64, mass: f64) -> f64 {
        match self {
            BetaSpec::Auto => theory::optimal_beta(eta_min, mass),
            BetaSpec::Value(v) => *v,
        }
    }
}

impl Serialize for BetaSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            BetaSpec::Auto => serializer.serialize_str("auto"),
            BetaSpec::Value(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for BetaSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct BetaVisitor;

        impl<'de> Visitor<'de> for BetaVisitor {
            type Value = BetaSpec;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or the string \"auto\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<BetaSpec, E> {
                Ok(BetaSpec::Value(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<BetaSpec, E> {
                Ok(BetaSpec::Value(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<BetaSpec, E> {
                Ok(BetaSpec::Value(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<BetaSpec, E> {
                if v == "auto" {
                    Ok(BetaSpec::Auto)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        deserializer.deserialize_any(BetaVisitor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodSpec {
    Kaczmarz,
    Kgsm { mass: f64, beta: BetaSpec },
    HeavyBall { mass: f64 },
}

impl MethodSpec {
    pub fn label(&self) -> &'static str {
        match self {
            MethodSpec::Kaczmarz => "kaczmarz",
            MethodSpec::Kgsm { .. } => "kgsm",
            MethodSpec::HeavyBall { .. } => "heavy-ball",
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            MethodSpec::Kaczmarz => Ok(()),
            MethodSpec::Kgsm { mass, beta } => {
                if !(0.0..=1.0).contains(mass) || !mass.is_finite() {
                    return Err(ConfigError::Invalid(format!(
                        "kgsm mass must lie in [0, 1], got {mass}"
                    )));
                }
                if let BetaSpec::Value(b) = beta {
                    if !(0.0..1.0).contains(b) || !b.is_finite() {
                        return Err(ConfigError::Invalid(format!(
                            "kgsm beta must lie in [0, 1), got {b}"
                        )));
                    }
                }
                Ok(())
            }
            MethodSpec::HeavyBall { mass } => {
                if !(0.0..=1.0).contains(mass) || !mass.is_finite() {
                    return Err(ConfigError::Invalid(format!(
                        "heavy-ball mass must lie in [0, 1], got {mass}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Resolves "auto" smoothing against the system's smallest ratio.
    pub fn to_method(&self, eta_min: f64) -> Result<Method, ConfigError> {
        self.validate()?;
        match self {
            MethodSpec::Kaczmarz => Ok(Method::Kaczmarz),
            MethodSpec::Kgsm { mass, beta } => {
                let beta = beta.resolve(eta_min, *mass);
                Ok(Method::Kgsm(MomentumParams::new(*mass, beta)?))
            }
            MethodSpec::HeavyBall { mass } => Ok(Method::HeavyBall { mass: *mass }),
        }
    }
}

fn default_trials() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub methods: Vec<MethodSpec>,
    pub iters: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub tracked_dirs: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.system.validate()?;
        if self.methods.is_empty() {
            return Err(ConfigError::Invalid("no methods listed".to_string()));
        }
        for m in &self.methods {
            m.validate()?;
        }
        if self.iters == 0 {
            return Err(ConfigError::Invalid("iters must be positive".to_string()));
        }
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be positive".to_string()));
        }
        if self.stride == Some(0) {
            return Err(ConfigError::Invalid("stride must be positive".to_string()));
        }
        let cols = self.system.cols();
        if let Some(&d) = self.tracked_dirs.iter().find(|&&d| d >= cols) {
            return Err(ConfigError::Invalid(format!(
                "tracked direction {d} out of range for {cols} columns"
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }
}
