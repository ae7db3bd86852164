//! Heat and semilinear heat problem instances.

use serde::{Deserialize, Serialize};

use crate::catalog::{Nonlinearity, NonlinearitySpec, Phi, PhiSpec};
use crate::error::{Error, Result};
use crate::rng::CubeDomain;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub a: f64,
    pub b: f64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self { a: 0.0, b: 1.0 }
    }
}

/// Serializable description of a problem; `f` is ignored by linear solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub d: usize,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub domain: DomainSpec,
    pub phi: PhiSpec,
    #[serde(default)]
    pub f: Option<NonlinearitySpec>,
}

fn default_rho() -> f64 {
    1.0
}

/// `du/dt = rho * Laplacian(u)`, `u(0, .) = phi`, solved at time `T` on `[a, b]^d`.
#[derive(Clone, Debug)]
pub struct HeatProblem {
    pub d: usize,
    pub t_final: f64,
    pub rho: f64,
    pub domain: CubeDomain,
    pub phi: Phi,
    spec: ProblemSpec,
}

impl HeatProblem {
    pub fn from_spec(spec: &ProblemSpec) -> Result<Self> {
        if spec.d == 0 {
            return Err(Error::InvalidArgument("d must be >= 1".into()));
        }
        if !(spec.t_final > 0.0 && spec.t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "T must be positive, got {}",
                spec.t_final
            )));
        }
        if !(spec.rho > 0.0 && spec.rho.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rho must be positive, got {}",
                spec.rho
            )));
        }
        let domain = CubeDomain::new(spec.domain.a, spec.domain.b, spec.d)?;
        let phi = Phi::from_spec(&spec.phi, spec.d)?;
        Ok(Self {
            d: spec.d,
            t_final: spec.t_final,
            rho: spec.rho,
            domain,
            phi,
            spec: ProblemSpec {
                f: None,
                ..spec.clone()
            },
        })
    }

    /// Convenience constructor on `[a, b]^d`.
    pub fn new(d: usize, t_final: f64, rho: f64, a: f64, b: f64, phi: PhiSpec) -> Result<Self> {
        Self::from_spec(&ProblemSpec {
            d,
            t_final,
            rho,
            domain: DomainSpec { a, b },
            phi,
            f: None,
        })
    }

    /// Standard deviation scale `sqrt(2 rho T)` of the diffusion at time `T`.
    pub fn varrho(&self) -> f64 {
        (2.0 * self.rho * self.t_final).sqrt()
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    /// Stable identifier of the problem definition.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(&self.spec).expect("problem spec serializes")
    }
}

/// `du/dt = Laplacian(u) + f(u)`: the heat problem with `rho = 1` plus `f`.
#[derive(Clone, Debug)]
pub struct SemilinearProblem {
    pub base: HeatProblem,
    pub f: Nonlinearity,
    spec: ProblemSpec,
}

impl SemilinearProblem {
    pub fn from_spec(spec: &ProblemSpec) -> Result<Self> {
        if spec.rho != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "semilinear problems use the plain Laplacian (rho = 1), got rho = {}",
                spec.rho
            )));
        }
        let base = HeatProblem::from_spec(spec)?;
        let f_spec = spec.f.clone().unwrap_or(NonlinearitySpec::Zero {});
        let f = Nonlinearity::from_spec(&f_spec)?;
        Ok(Self {
            base,
            f,
            spec: ProblemSpec {
                f: Some(f_spec),
                ..spec.clone()
            },
        })
    }

    pub fn new(
        d: usize,
        t_final: f64,
        a: f64,
        b: f64,
        phi: PhiSpec,
        f: NonlinearitySpec,
    ) -> Result<Self> {
        Self::from_spec(&ProblemSpec {
            d,
            t_final,
            rho: 1.0,
            domain: DomainSpec { a, b },
            phi,
            f: Some(f),
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn fingerprint(&self) -> String {
        serde_json::to_string(&self.spec).expect("problem spec serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn varrho_value() {
        let p = HeatProblem::new(1, 0.5, 1.0, 0.0, 1.0, PhiSpec::Sqnorm {}).unwrap();
        assert_eq!(p.varrho(), 1.0);
    }

    #[test]
    fn validation() {
        assert!(HeatProblem::new(0, 1.0, 1.0, 0.0, 1.0, PhiSpec::Sqnorm {}).is_err());
        assert!(HeatProblem::new(2, 0.0, 1.0, 0.0, 1.0, PhiSpec::Sqnorm {}).is_err());
        assert!(HeatProblem::new(2, 1.0, -1.0, 0.0, 1.0, PhiSpec::Sqnorm {}).is_err());
        assert!(HeatProblem::new(2, 1.0, 1.0, 1.0, 0.0, PhiSpec::Sqnorm {}).is_err());
        let spec = ProblemSpec {
            d: 2,
            t_final: 1.0,
            rho: 2.0,
            domain: DomainSpec::default(),
            phi: PhiSpec::Sqnorm {},
            f: None,
        };
        assert!(SemilinearProblem::from_spec(&spec).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec: ProblemSpec = serde_json::from_str(
            r#"{"d": 3, "T": 0.5, "phi": {"name": "sqnorm"}, "f": {"name": "linear", "lambda": 1}}"#,
        )
        .unwrap();
        assert_eq!(spec.rho, 1.0);
        assert_eq!(spec.domain, DomainSpec { a: 0.0, b: 1.0 });
        let p = SemilinearProblem::from_spec(&spec).unwrap();
        assert_eq!(p.f, Nonlinearity::Linear(1.0));
        assert!(serde_json::from_str::<ProblemSpec>(r#"{"d": 3, "T": 1, "phi": {"name": "sqnorm"}, "x": 1}"#).is_err());
    }
}
