//! Experiment configuration: one JSON document per experiment. Optional
//! fields are filled in by [`ExperimentConfig::resolve`], and the resolved
//! form is what every output echoes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::model::{classify_zone, Covariance, HyperParams, NoiseSpec, Zone};
use crate::penalty::{PenaltyConfig, DEFAULT_NU};
use crate::simulate::{SignalKind, SignalSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySection {
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    /// Defaults to the noise covariance's upper bound.
    #[serde(default)]
    pub xi1: Option<f64>,
    #[serde(default = "default_one")]
    pub jeps_scale: f64,
}

impl Default for PenaltySection {
    fn default() -> Self {
        Self { zeta: default_zeta(), nu: default_nu(), xi1: None, jeps_scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSection {
    #[serde(default = "default_covariance")]
    pub covariance: Covariance,
    /// Default to the exact spectrum bounds of the covariance family.
    #[serde(default)]
    pub xi0: Option<f64>,
    #[serde(default)]
    pub xi1: Option<f64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { covariance: default_covariance(), xi0: None, xi1: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSection {
    pub kind: SignalKind,
    #[serde(default = "default_j0")]
    pub j0: usize,
    #[serde(default)]
    pub rho1: Option<f64>,
    #[serde(default)]
    pub rho2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckSection {
    /// Random instances per vector length in the exhaustive comparison.
    #[serde(default = "default_instances")]
    pub instances_per_n: usize,
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    /// Signal kinds for the Monte Carlo oracle-inequality table.
    #[serde(default = "default_kinds")]
    pub signal_kinds: Vec<SignalKind>,
}

impl Default for OracleCheckSection {
    fn default() -> Self {
        Self {
            instances_per_n: default_instances(),
            max_n: default_max_n(),
            betas: default_betas(),
            signal_kinds: default_kinds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub gamma: HyperParams,
    pub radius: f64,
    pub signal: SignalSection,
    #[serde(default)]
    pub penalty: PenaltySection,
    #[serde(default)]
    pub noise: NoiseSection,
    pub epsilon_grid: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Finest level; `None` uses the per-epsilon default.
    #[serde(default)]
    pub jmax: Option<usize>,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub oracle_check: OracleCheckSection,
    /// Relative tolerance on the fitted rate exponent reported by a sweep.
    #[serde(default)]
    pub rate_tolerance: Option<f64>,
}

fn default_schema() -> u32 {
    crate::SCHEMA_VERSION
}
fn default_zeta() -> f64 {
    2.0
}
fn default_nu() -> f64 {
    DEFAULT_NU
}
fn default_one() -> f64 {
    1.0
}
fn default_covariance() -> Covariance {
    Covariance::Identity
}
fn default_j0() -> usize {
    1
}
fn default_replicates() -> usize {
    100
}
fn default_instances() -> usize {
    1000
}
fn default_max_n() -> usize {
    12
}
fn default_betas() -> Vec<f64> {
    vec![0.0, 0.5]
}
fn default_kinds() -> Vec<SignalKind> {
    vec![SignalKind::Zero, SignalKind::ShellDense]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.resolve()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fills defaulted bounds and checks cross-field consistency.
    pub fn resolve(mut self) -> Result<Self> {
        let (lo, hi) = match self.noise.covariance {
            Covariance::Identity => (1.0, 1.0),
            Covariance::Tridiagonal { rho } => (1.0 - 2.0 * rho.abs(), 1.0 + 2.0 * rho.abs()),
        };
        self.noise.xi0.get_or_insert(lo);
        let noise_hi = *self.noise.xi1.get_or_insert(hi);
        self.penalty.xi1.get_or_insert(noise_hi);
        let probe = SignalSpec::new(self.signal.kind, self.gamma, self.radius, f64::NAN);
        self.signal.rho1.get_or_insert(probe.rho1);
        self.signal.rho2.get_or_insert(probe.rho2);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != crate::SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {})",
                self.schema_version,
                crate::SCHEMA_VERSION
            )));
        }
        self.gamma.validate()?;
        let zone = classify_zone(&self.gamma);
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(validation(format!("radius must be > 0, got {}", self.radius)));
        }
        self.penalty()?.validate()?;
        if self.epsilon_grid.is_empty() {
            return Err(validation("epsilon_grid is empty"));
        }
        for &e in &self.epsilon_grid {
            if !(e > 0.0 && e < self.radius) {
                return Err(validation(format!("epsilon {e} is outside (0, C = {})", self.radius)));
            }
            self.noise(e).validate()?;
        }
        if self.replicates < 2 {
            return Err(validation(format!("replicates must be >= 2, got {}", self.replicates)));
        }
        let compatible = match self.signal.kind {
            SignalKind::Zero | SignalKind::ShellDense | SignalKind::BesovSpread => true,
            SignalKind::ShellSparse => matches!(zone, Zone::Sparse | Zone::Critical),
            SignalKind::CriticalPrior => zone == Zone::Critical,
        };
        if !compatible {
            return Err(Error::Config(format!(
                "signal kind {:?} does not fit the {zone} zone",
                self.signal.kind
            )));
        }
        if let Some(t) = self.rate_tolerance {
            if !(t > 0.0) {
                return Err(validation("rate_tolerance must be > 0"));
            }
        }
        if self.oracle_check.max_n > crate::estimator::SUBSET_ORACLE_MAX_N {
            return Err(Error::Size(format!(
                "oracle_check.max_n = {} exceeds {}",
                self.oracle_check.max_n,
                crate::estimator::SUBSET_ORACLE_MAX_N
            )));
        }
        Ok(())
    }

    /// Penalty with `beta` taken from `gamma`.
    pub fn penalty(&self) -> Result<PenaltyConfig> {
        let cfg = PenaltyConfig {
            zeta: self.penalty.zeta,
            nu: self.penalty.nu,
            beta: self.gamma.beta,
            xi1: self.penalty.xi1.unwrap_or(1.0),
            jeps_scale: self.penalty.jeps_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noise(&self, epsilon: f64) -> NoiseSpec {
        NoiseSpec {
            epsilon,
            beta: self.gamma.beta,
            covariance: self.noise.covariance,
            xi0: self.noise.xi0.unwrap_or(1.0),
            xi1: self.noise.xi1.unwrap_or(1.0),
        }
    }

    pub fn signal(&self, epsilon: f64) -> SignalSpec {
        let base = SignalSpec::new(self.signal.kind, self.gamma, self.radius, epsilon);
        SignalSpec {
            j0: self.signal.j0,
            jmax: self.jmax,
            rho1: self.signal.rho1.unwrap_or(base.rho1),
            rho2: self.signal.rho2.unwrap_or(base.rho2),
            xi0: self.noise.xi0.unwrap_or(1.0),
            ..base
        }
    }
}
