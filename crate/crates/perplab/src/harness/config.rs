//! Config file parsing, defaults resolution, and the stable config digest.

use crate::models::PairModel;
use crate::perpetuity::TruncationControl;
use crate::schedules::ScheduleKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Syntax or unknown-key errors; the message carries line/column.
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    Slln,
    Clt,
    CltFidi,
    CltTrunc,
    Vervaat,
    Lil,
    Limitproc,
    Schedule,
}

impl std::fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentName::Slln => "slln",
            ExperimentName::Clt => "clt",
            ExperimentName::CltFidi => "clt-fidi",
            ExperimentName::CltTrunc => "clt-trunc",
            ExperimentName::Vervaat => "vervaat",
            ExperimentName::Lil => "lil",
            ExperimentName::Limitproc => "limitproc",
            ExperimentName::Schedule => "schedule",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub n_max: u64,
}

/// On-disk experiment configuration. All fields except `experiment` are
/// optional in the file; `resolve` applies defaults and validates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentName>,
    pub seed: Option<u64>,
    pub paths: Option<u64>,
    /// 0 = auto (one worker per CPU).
    pub workers: Option<usize>,
    pub model: Option<PairModel>,
    pub b: Option<f64>,
    pub u: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    /// Truncation index of the self-normalized statistic; default N2(b).
    pub m_trunc: Option<u64>,
    pub u_grid: Option<Vec<f64>>,
    pub n_samples: Option<u64>,
    pub schedule: Option<ScheduleConfig>,
    pub truncation: Option<TruncationControl>,
    pub out: Option<PathBuf>,
}

/// Fully resolved configuration: every field relevant to the experiment is
/// explicit, and this exact form is echoed into reports and hashed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub experiment: ExperimentName,
    pub seed: u64,
    pub paths: u64,
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PairModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_trunc: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleConfig>,
    pub truncation: TruncationControl,
    pub out: PathBuf,
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message: message.into() }
}

/// Parses the TOML text without resolving defaults.
pub fn parse_config_raw(text: &str) -> Result<ExperimentConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Parses and fully resolves a config file.
pub fn parse_config(text: &str) -> Result<ResolvedConfig, ConfigError> {
    resolve(parse_config_raw(text)?)
}

fn needs_model(exp: ExperimentName) -> bool {
    !matches!(exp, ExperimentName::Limitproc | ExperimentName::Schedule)
}

/// Applies defaults and validates domains. The resolved form leaves no
/// experiment-relevant default implicit.
pub fn resolve(cfg: ExperimentConfig) -> Result<ResolvedConfig, ConfigError> {
    let experiment = cfg
        .experiment
        .ok_or_else(|| invalid("experiment", "experiment kind required"))?;

    let model = match (needs_model(experiment), cfg.model) {
        (true, None) => return Err(invalid("model", "model block required for this experiment")),
        (_, m) => m
            .map(|m| m.validated().map_err(|e| invalid("model", e.to_string())))
            .transpose()?,
    };

    if let Some(b) = cfg.b {
        if !(b > 0.0 && b < 1.0) {
            return Err(invalid("b", format!("must lie in the open interval (0,1), got {b}")));
        }
    }
    for (key, list) in [("u", &cfg.u), ("u_grid", &cfg.u_grid), ("alpha", &cfg.alpha)] {
        if let Some(xs) = list {
            if xs.is_empty() {
                return Err(invalid(key, "list must be nonempty"));
            }
            if xs.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(invalid(key, format!("entries must be positive, got {xs:?}")));
            }
        }
    }
    let truncation = cfg.truncation.unwrap_or_default();
    if !(truncation.tol > 0.0) || truncation.k_max < truncation.k_min {
        return Err(invalid("truncation", "need tol > 0 and k_max >= k_min"));
    }
    if matches!(experiment, ExperimentName::Lil | ExperimentName::Schedule)
        && cfg.schedule.is_none()
    {
        return Err(invalid("schedule", "schedule block required for this experiment"));
    }

    let resolved = ResolvedConfig {
        experiment,
        seed: cfg.seed.unwrap_or(0),
        paths: cfg.paths.unwrap_or(1000),
        workers: cfg.workers.unwrap_or(0),
        model,
        b: match experiment {
            ExperimentName::Slln
            | ExperimentName::Clt
            | ExperimentName::CltFidi
            | ExperimentName::CltTrunc => Some(cfg.b.unwrap_or(0.99)),
            _ => cfg.b,
        },
        u: match experiment {
            ExperimentName::Clt => Some(cfg.u.unwrap_or_else(|| vec![1.0])),
            ExperimentName::CltFidi => Some(cfg.u.unwrap_or_else(|| vec![1.0, 2.0])),
            _ => cfg.u,
        },
        alpha: match experiment {
            ExperimentName::Vervaat => Some(cfg.alpha.unwrap_or_else(|| vec![0.005])),
            _ => cfg.alpha,
        },
        m_trunc: cfg.m_trunc,
        u_grid: match experiment {
            ExperimentName::Limitproc => Some(cfg.u_grid.unwrap_or_else(|| vec![0.5, 1.0, 2.0])),
            _ => cfg.u_grid,
        },
        n_samples: match experiment {
            ExperimentName::Limitproc => Some(cfg.n_samples.unwrap_or(100_000)),
            _ => cfg.n_samples,
        },
        schedule: cfg.schedule,
        truncation,
        out: cfg.out.unwrap_or_else(|| PathBuf::from("out")),
    };
    Ok(resolved)
}

impl ResolvedConfig {
    /// Canonical TOML echo of the resolved config.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("resolved config serializes")
    }

    /// Stable hash of the resolved configuration. Worker count and output
    /// location are excluded: they must not change any statistic.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = 0;
        canonical.out = PathBuf::new();
        let bytes = toml::to_string(&canonical).expect("resolved config serializes");
        let mut hasher = Sha256::new();
        hasher.update(bytes.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLT_TOML: &str = r#"
experiment = "clt"
seed = 42
paths = 100
b = 0.99
u = [1.0]

[model]
family = "independent"
[model.xi]
dist = "exponential"
rate = 1.0
[model.eta]
dist = "normal"
mean = 0.0
sd = 1.0
"#;

    #[test]
    fn empty_text_requires_experiment() {
        let e = parse_config("").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { ref key, .. } if key == "experiment"), "{e}");
    }

    #[test]
    fn b_must_be_in_open_interval() {
        let text = CLT_TOML.replace("b = 0.99", "b = 1.0");
        let e = parse_config(&text).unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { ref key, .. } if key == "b"), "{e}");
    }

    #[test]
    fn unknown_key_is_parse_error_with_location() {
        let text = format!("bogus_key = 3\n{CLT_TOML}");
        let e = parse_config(&text).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("bogus_key") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn round_trip_resolved_config() {
        let resolved = parse_config(CLT_TOML).unwrap();
        let echoed = resolved.echo();
        let again = parse_config(&echoed).unwrap();
        assert_eq!(resolved, again);
        assert_eq!(resolved.digest(), again.digest());
    }

    #[test]
    fn digest_ignores_workers_and_out() {
        let a = parse_config(CLT_TOML).unwrap();
        let mut b = a.clone();
        b.workers = 8;
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.digest(), b.digest());
        let mut c = a.clone();
        c.seed = 43;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn defaults_are_materialized() {
        let r = parse_config(CLT_TOML).unwrap();
        assert_eq!(r.truncation.tol, 1e-9);
        assert_eq!(r.workers, 0);
        let echoed = r.echo();
        assert!(echoed.contains("tol"), "{echoed}");
        assert!(echoed.contains("k_max"), "{echoed}");
    }

    #[test]
    fn lil_requires_schedule_block() {
        let text = CLT_TOML.replace("experiment = \"clt\"", "experiment = \"lil\"");
        let e = parse_config(&text).unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { ref key, .. } if key == "schedule"), "{e}");
    }
}
