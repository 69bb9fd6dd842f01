//! Experiment configuration and the built-in model registry.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::econ::PriceSheet;
use crate::error::{Error, Result};
use crate::faas::{ExecutorConfig, PlatformLimits};
use crate::store::TransferModel;
use crate::topology::{ClientSource, TopologyKind};

/// Environment variable that overrides the output directory.
pub const OUTPUT_DIR_ENV: &str = "GRADSIM_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Model {
    pub name: &'static str,
    pub gradient_mb: f64,
    /// Nominal parameter count as usually quoted for the model.
    pub nominal_params: u64,
}

pub const MODELS: [Model; 5] = [
    Model {
        name: "resnet18",
        gradient_mb: 42.7,
        nominal_params: 11_200_000,
    },
    Model {
        name: "vgg16",
        gradient_mb: 512.3,
        nominal_params: 134_000_000,
    },
    Model {
        name: "gpt2-medium",
        gradient_mb: 1354.0,
        nominal_params: 355_000_000,
    },
    Model {
        name: "gpt2-large",
        gradient_mb: 2953.0,
        nominal_params: 774_000_000,
    },
    Model {
        name: "synthetic-5gb",
        gradient_mb: 5120.0,
        nominal_params: 1_340_000_000,
    },
];

pub fn lookup_model(name: &str) -> Option<&'static Model> {
    MODELS.iter().find(|m| m.name == name)
}

/// A model name from the registry or a bare size in MB.
pub fn resolve_model(spec: &str) -> Result<(String, f64)> {
    if let Some(m) = lookup_model(spec) {
        return Ok((m.name.to_string(), m.gradient_mb));
    }
    match spec.parse::<f64>() {
        Ok(mb) if mb > 0.0 && mb.is_finite() => Ok((format!("{mb}MB"), mb)),
        _ => Err(Error::Config(format!(
            "model: {spec:?} is neither a known model ({}) nor a positive size in MB",
            MODELS.map(|m| m.name).join(", ")
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub topology: String,
    pub n: u32,
    pub m: u64,
    pub model: Option<String>,
    pub gradient_mb: Option<f64>,
    pub repetitions: u32,
    pub seed: u64,
    pub materialize_max_mb: f64,
    pub output_dir: Option<PathBuf>,
    pub transfer: TransferModel,
    pub limits: PlatformLimits,
    pub executor: ExecutorConfig,
    pub prices: PriceSheet,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            topology: "gradsharding".into(),
            n: 20,
            m: 4,
            model: None,
            gradient_mb: None,
            repetitions: 1,
            seed: 0,
            materialize_max_mb: ClientSource::default().materialize_max_mb,
            output_dir: None,
            transfer: TransferModel::default(),
            limits: PlatformLimits::default(),
            executor: ExecutorConfig::default(),
            prices: PriceSheet::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn kind(&self) -> Result<TopologyKind> {
        TopologyKind::parse(&self.topology, self.m)
            .map_err(|e| Error::Config(format!("topology: {e}")))
    }

    /// Model name and gradient size; an explicit size wins over a model name.
    pub fn resolved_model(&self) -> Result<(String, f64)> {
        match (self.gradient_mb, &self.model) {
            (Some(mb), _) => {
                if mb > 0.0 && mb.is_finite() {
                    Ok((format!("{mb}MB"), mb))
                } else {
                    Err(Error::Config(format!(
                        "gradient_mb must be positive, got {mb}"
                    )))
                }
            }
            (None, Some(name)) => resolve_model(name),
            (None, None) => resolve_model("vgg16"),
        }
    }

    pub fn client_source(&self) -> ClientSource {
        ClientSource {
            materialize_max_mb: self.materialize_max_mb,
            seed: self.seed,
        }
    }

    /// Effective output directory: environment first, then config.
    pub fn output_dir(&self) -> Option<PathBuf> {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .or_else(|| self.output_dir.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.kind()?;
        self.resolved_model()?;
        if self.n < 1 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.m < 1 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if self.repetitions < 1 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if !(self.materialize_max_mb >= 0.0) {
            return Err(Error::Config("materialize_max_mb must be >= 0".into()));
        }
        self.transfer.validate()?;
        self.limits.validate()?;
        self.executor.validate(&self.limits)?;
        self.prices.validate()?;
        Ok(())
    }
}
