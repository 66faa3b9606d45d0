use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use chroma::params::r_star;

pub const SEED_ENV: &str = "CHROMA_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Shrink as a fraction of the critical coefficient, in `(0, 1]`. At 1
    /// the margins touch the unit distance and the certificate refuses.
    #[serde(default = "default_fraction")]
    pub lambda_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_rotations")]
    pub rotations: usize,
    #[serde(default)]
    pub ball: bool,
    pub out_dir: PathBuf,
}

fn default_eps() -> f64 {
    0.01
}

fn default_fraction() -> f64 {
    0.95
}

fn default_samples() -> usize {
    100_000
}

fn default_rotations() -> usize {
    256
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            config.seed = seed.parse().with_context(|| format!("{SEED_ENV}={seed} is not a u64"))?;
        }
        Ok(config)
    }

    /// Checks every field against the preconditions of the stages it feeds.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            bail!("n must be at least 2, got {}", self.n);
        }
        if !(self.radius > 0.5 && self.radius.is_finite()) {
            bail!("R must exceed 1/2, got {}", self.radius);
        }
        if !(self.lambda_fraction > 0.0 && self.lambda_fraction <= 1.0) {
            bail!("lambda_fraction must lie in (0, 1], got {}", self.lambda_fraction);
        }
        if self.ball {
            r_star(self.eps).context("eps")?;
        }
        if self.samples == 0 {
            bail!("samples must be positive");
        }
        if self.rotations == 0 {
            bail!("rotations must be positive");
        }
        if self.out_dir.as_os_str().is_empty() {
            bail!("out_dir must be set");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        serde_json::from_str(r#"{"n": 2, "R": 2.0, "out_dir": "out"}"#).unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let c = base();
        assert_eq!(c.samples, 100_000);
        assert_eq!(c.lambda_fraction, 0.95);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_fields() {
        for bad in [
            ExperimentConfig { n: 1, ..base() },
            ExperimentConfig { radius: 0.5, ..base() },
            ExperimentConfig { lambda_fraction: 1.5, ..base() },
            ExperimentConfig { ball: true, eps: 0.7, ..base() },
            ExperimentConfig { samples: 0, ..base() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(ExperimentConfig { lambda_fraction: 1.0, ..base() }.validate().is_ok());
    }
}
