use rflow_core::catalog::{InstanceParams, INSTANCE_KEYS};
use serde::Deserialize;
use std::fmt;
use std::path::{Path, PathBuf};

/// A configuration problem, always naming the key at fault.
#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.key, self.message)
    }
}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { key: key.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSection {
    pub key: String,
    pub a: Option<f64>,
    pub z: Option<f64>,
    pub length: Option<f64>,
    pub radius: Option<f64>,
    pub knots: Option<Vec<(f64, f64)>>,
    pub r_cap: Option<f64>,
    pub amp: Option<f64>,
    pub width: Option<f64>,
    /// start point for `simulate`
    pub x0: Option<Vec<f64>>,
}

impl InstanceSection {
    pub fn params(&self) -> InstanceParams {
        InstanceParams {
            a: self.a,
            z: self.z,
            length: self.length,
            radius: self.radius,
            knots: self.knots.clone(),
            r_cap: self.r_cap,
            amp: self.amp,
            width: self.width,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
    pub n_steps: Option<usize>,
    pub horizons: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub instance: Option<InstanceSection>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            // toml reports unknown keys as "unknown field `name`, expected ..."
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field"))
                .map(str::to_string)
                .unwrap_or_else(|| "<file>".into());
            bad(&key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        positive_count("n_paths", self.n_paths)?;
        positive_count("n_steps", self.n_steps)?;
        positive_count("workers", self.workers)?;
        positive("dt", self.dt)?;
        if let Some(h) = &self.horizons {
            if h.is_empty() {
                return Err(bad("horizons", "must not be empty"));
            }
            for &v in h {
                positive("horizons", Some(v))?;
            }
        }
        if let Some(inst) = &self.instance {
            if !INSTANCE_KEYS.contains(&inst.key.as_str()) {
                return Err(bad("instance.key", format!("unknown instance '{}', expected one of {INSTANCE_KEYS:?}", inst.key)));
            }
            positive("instance.length", inst.length)?;
            positive("instance.radius", inst.radius)?;
            positive("instance.r_cap", inst.r_cap)?;
            positive("instance.width", inst.width)?;
            // curvature rate, drift and bump amplitude are signed
            for (k, v) in [("instance.a", inst.a), ("instance.z", inst.z), ("instance.amp", inst.amp)] {
                if v.is_some_and(|v| !v.is_finite()) {
                    return Err(bad(k, "must be finite"));
                }
            }
            if let Some(knots) = &inst.knots {
                for &(t, c) in knots {
                    if !(t >= 0.0 && t.is_finite()) {
                        return Err(bad("instance.knots", "knot times must be finite and nonnegative"));
                    }
                    positive("instance.knots", Some(c))?;
                }
            }
            if let Some(x0) = &inst.x0 {
                if x0.iter().any(|v| !v.is_finite()) {
                    return Err(bad("instance.x0", "must be finite"));
                }
            }
        }
        Ok(())
    }
}

fn positive(key: &str, v: Option<f64>) -> Result<(), ConfigError> {
    match v {
        Some(v) if !(v > 0.0 && v.is_finite()) => Err(bad(key, format!("must be positive, got {v}"))),
        _ => Ok(()),
    }
}

fn positive_count(key: &str, v: Option<usize>) -> Result<(), ConfigError> {
    match v {
        Some(0) => Err(bad(key, "must be positive, got 0")),
        _ => Ok(()),
    }
}
