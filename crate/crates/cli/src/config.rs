use std::path::{Path, PathBuf};

use kspl_core::metrics::{AuditConfig, ErrorMetric};
use kspl_core::optim::OptimizerConfig;
use kspl_core::oracles::{PicardConfig, TriangleConfig};
use kspl_core::splitting::{SolveConfig, SplittingMode};
use kspl_core::{NetworkArchitecture, ProblemSpec, TrainingPlan};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Kolmogorov,
    Splitting,
    Rate,
    Audit,
    OracleCheck,
}

/// Training settings as written in a config; missing fields take the
/// defaults of `TrainingPlan::default_for`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub hidden: Option<Vec<usize>>,
    pub batch_size: Option<usize>,
    pub total_steps: Option<usize>,
    pub optimizer: Option<OptimizerConfig>,
    pub eval_every: Option<usize>,
}

impl PlanSpec {
    pub fn resolve(&self, d: usize, seed: u64) -> kspl_core::Result<TrainingPlan> {
        let mut plan = TrainingPlan::default_for(d, seed);
        if let Some(hidden) = &self.hidden {
            plan.architecture = NetworkArchitecture::scalar(d, hidden)?;
        }
        if let Some(b) = self.batch_size {
            plan.batch_size = b;
        }
        if let Some(steps) = self.total_steps {
            plan.total_steps = steps;
            plan.optimizer = OptimizerConfig::default_for(steps);
        }
        if let Some(opt) = &self.optimizer {
            plan.optimizer = opt.clone();
        }
        if let Some(e) = self.eval_every {
            plan.eval_every = e;
        }
        plan.validate(d)?;
        Ok(plan)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplittingSection {
    pub steps: usize,
    pub mode: SplittingMode,
    #[serde(default)]
    pub solve: SolveConfig,
    /// Points where the terminal value is reported; defaults to the cube centre.
    #[serde(default)]
    pub query_points: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub n_list: Vec<usize>,
    pub mode: SplittingMode,
    #[serde(default)]
    pub solve: SolveConfig,
    pub metric: ErrorMetric,
    #[serde(default)]
    pub picard: PicardConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    /// Master seed; every stream and training seed derives from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub problem: Option<ProblemSpec>,
    #[serde(default)]
    pub plan: Option<PlanSpec>,
    /// Points used for L2 error reports.
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    #[serde(default)]
    pub splitting: Option<SplittingSection>,
    #[serde(default)]
    pub rate: Option<RateSection>,
    #[serde(default)]
    pub audit: Option<AuditConfig>,
    #[serde(default)]
    pub oracle_check: Option<TriangleConfig>,
}

fn default_eval_points() -> usize {
    10_000
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError(format!("invalid config at `{path}`: {}", e.inner()))
        })?;
        cfg.check_sections()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn check_sections(&self) -> Result<(), ConfigError> {
        let need = |present: bool, what: &str| {
            if present {
                Ok(())
            } else {
                Err(ConfigError(format!(
                    "invalid config at `{what}`: required for kind {:?}",
                    self.kind
                )))
            }
        };
        match self.kind {
            Kind::Kolmogorov => need(self.problem.is_some(), "problem"),
            Kind::Splitting => {
                need(self.problem.is_some(), "problem")?;
                need(self.splitting.is_some(), "splitting")
            }
            Kind::Rate => {
                need(self.problem.is_some(), "problem")?;
                need(self.rate.is_some(), "rate")
            }
            Kind::Audit | Kind::OracleCheck => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_report_their_path() {
        let err = ExperimentConfig::parse(
            r#"{"kind": "kolmogorov", "problem": {"d": 2, "T": 1, "phi": {"name": "sqnorm", "bogus": 1}}}"#,
        )
        .unwrap_err();
        assert!(err.0.contains("problem.phi"), "{}", err.0);
        let err = ExperimentConfig::parse(r#"{"kind": "rate", "problem": {"d": 1, "T": 1, "phi": {"name": "sqnorm"}}}"#)
            .unwrap_err();
        assert!(err.0.contains("`rate`"), "{}", err.0);
        assert!(ExperimentConfig::parse(r#"{"kind": "audit", "extra": 0}"#).is_err());
        assert!(ExperimentConfig::parse("{not json").is_err());
    }

    #[test]
    fn plan_defaults_and_overrides() {
        let spec = PlanSpec {
            hidden: Some(vec![8, 8]),
            total_steps: Some(100),
            ..PlanSpec::default()
        };
        let plan = spec.resolve(3, 7).unwrap();
        assert_eq!(plan.architecture.layer_sizes(), &[3, 8, 8, 1]);
        assert_eq!(plan.optimizer.decay[0].at_step, 60);
        assert_eq!(plan.batch_size, 256);
        assert_eq!(plan.seed, 7);
        let bad = PlanSpec {
            batch_size: Some(0),
            ..PlanSpec::default()
        };
        assert!(bad.resolve(3, 0).is_err());
    }
}
