//! Built-in initial conditions and nonlinearities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

/// A coefficient vector given either in full or as one value for every
/// coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coeffs {
    Uniform(f64),
    Each(Vec<f64>),
}

impl Coeffs {
    pub fn resolve(&self, d: usize) -> Result<Vec<f64>> {
        let v = match self {
            Coeffs::Uniform(c) => vec![*c; d],
            Coeffs::Each(v) if v.len() == d => v.clone(),
            Coeffs::Each(v) => {
                return Err(Error::Dimension {
                    expected: d,
                    actual: v.len(),
                    context: "coefficient vector",
                })
            }
        };
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("coefficients must be finite".into()));
        }
        Ok(v)
    }
}

/// Initial condition as written in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiSpec {
    /// `phi(x) = value`
    Constant { value: f64 },
    /// `phi(x) = <c, x>`
    Linear { coeffs: Coeffs },
    /// `phi(x) = |x|^2`
    Sqnorm {},
    /// `phi(x) = exp(<c, x>)`
    ExpInner { coeffs: Coeffs },
    /// Expression over `x1..xd`.
    Expr { source: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Phi {
    Constant(f64),
    Linear(Vec<f64>),
    Sqnorm,
    ExpInner(Vec<f64>),
    Expr(Expr),
}

impl Phi {
    pub fn from_spec(spec: &PhiSpec, d: usize) -> Result<Self> {
        Ok(match spec {
            PhiSpec::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidArgument("constant must be finite".into()));
                }
                Phi::Constant(*value)
            }
            PhiSpec::Linear { coeffs } => Phi::Linear(coeffs.resolve(d)?),
            PhiSpec::Sqnorm {} => Phi::Sqnorm,
            PhiSpec::ExpInner { coeffs } => Phi::ExpInner(coeffs.resolve(d)?),
            PhiSpec::Expr { source } => {
                let e = Expr::parse(source)?;
                if e.uses_u() {
                    return Err(Error::InvalidArgument(
                        "initial condition may not reference u".into(),
                    ));
                }
                if let Some(k) = e.max_coord() {
                    if k >= d {
                        return Err(Error::InvalidArgument(format!(
                            "x{} referenced but d = {d}",
                            k + 1
                        )));
                    }
                }
                Phi::Expr(e)
            }
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Phi::Constant(c) => *c,
            Phi::Linear(c) => dot(c, x),
            Phi::Sqnorm => x.iter().map(|v| v * v).sum(),
            Phi::ExpInner(c) => dot(c, x).exp(),
            Phi::Expr(e) => e.eval(x, 0.0),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nonlinearity `f` as written in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    /// `f(u) = 0`
    Zero {},
    /// `f(u) = lambda u`
    Linear { lambda: f64 },
    /// `f(u) = amplitude sin(u)`
    Sine {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `f(v) = v - v^3` with `v = clamp(u, -clip, clip)`
    CubicClipped {
        #[serde(default = "one")]
        clip: f64,
    },
    /// Expression in `u` with a declared Lipschitz constant.
    Expr { source: String, lipschitz: f64 },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq)]
pub enum Nonlinearity {
    Zero,
    Linear(f64),
    Sine(f64),
    CubicClipped(f64),
    Expr { expr: Expr, lipschitz: f64 },
}

impl Nonlinearity {
    pub fn from_spec(spec: &NonlinearitySpec) -> Result<Self> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::InvalidArgument(format!("{name} must be finite")))
            }
        };
        Ok(match spec {
            NonlinearitySpec::Zero {} => Nonlinearity::Zero,
            NonlinearitySpec::Linear { lambda } => Nonlinearity::Linear(finite("lambda", *lambda)?),
            NonlinearitySpec::Sine { amplitude } => {
                Nonlinearity::Sine(finite("amplitude", *amplitude)?)
            }
            NonlinearitySpec::CubicClipped { clip } => {
                if !(*clip > 0.0 && clip.is_finite()) {
                    return Err(Error::InvalidArgument("clip must be positive".into()));
                }
                Nonlinearity::CubicClipped(*clip)
            }
            NonlinearitySpec::Expr { source, lipschitz } => {
                let expr = Expr::parse(source)?;
                if expr.uses_coords() {
                    return Err(Error::InvalidArgument(
                        "nonlinearity may only reference u".into(),
                    ));
                }
                if !(*lipschitz > 0.0 && lipschitz.is_finite()) {
                    return Err(Error::InvalidArgument(
                        "declared Lipschitz constant must be positive".into(),
                    ));
                }
                Nonlinearity::Expr {
                    expr,
                    lipschitz: *lipschitz,
                }
            }
        })
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear(l) => l * u,
            Nonlinearity::Sine(a) => a * u.sin(),
            Nonlinearity::CubicClipped(c) => {
                let v = u.clamp(-c, *c);
                v - v * v * v
            }
            Nonlinearity::Expr { expr, .. } => expr.eval(&[], u),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Linear(l) => l.abs(),
            Nonlinearity::Sine(a) => a.abs(),
            Nonlinearity::CubicClipped(c) => (3.0 * c * c - 1.0).max(1.0),
            Nonlinearity::Expr { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero) || matches!(self, Nonlinearity::Linear(l) if *l == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CatalogEntry {
    pub kind: &'static str,
    pub name: &'static str,
    pub params: &'static str,
    pub formula: &'static str,
    /// A config fragment that parses into this entry.
    pub example: &'static str,
}

pub fn list_catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            kind: "phi",
            name: "constant",
            params: "value: number",
            formula: "phi(x) = value",
            example: r#"{"name": "constant", "value": 5.0}"#,
        },
        CatalogEntry {
            kind: "phi",
            name: "linear",
            params: "coeffs: number | [number; d]",
            formula: "phi(x) = <c, x>",
            example: r#"{"name": "linear", "coeffs": 1.0}"#,
        },
        CatalogEntry {
            kind: "phi",
            name: "sqnorm",
            params: "(none)",
            formula: "phi(x) = |x|^2",
            example: r#"{"name": "sqnorm"}"#,
        },
        CatalogEntry {
            kind: "phi",
            name: "exp_inner",
            params: "coeffs: number | [number; d]",
            formula: "phi(x) = exp(<c, x>)",
            example: r#"{"name": "exp_inner", "coeffs": [0.5]}"#,
        },
        CatalogEntry {
            kind: "phi",
            name: "expr",
            params: "source: string over x1..xd",
            formula: "user expression",
            example: r#"{"name": "expr", "source": "max(x1, 0) + sum()"}"#,
        },
        CatalogEntry {
            kind: "f",
            name: "zero",
            params: "(none)",
            formula: "f(u) = 0",
            example: r#"{"name": "zero"}"#,
        },
        CatalogEntry {
            kind: "f",
            name: "linear",
            params: "lambda: number",
            formula: "f(u) = lambda u",
            example: r#"{"name": "linear", "lambda": 1.0}"#,
        },
        CatalogEntry {
            kind: "f",
            name: "sine",
            params: "amplitude: number (default 1)",
            formula: "f(u) = amplitude sin(u)",
            example: r#"{"name": "sine"}"#,
        },
        CatalogEntry {
            kind: "f",
            name: "cubic_clipped",
            params: "clip: number > 0 (default 1)",
            formula: "f(u) = v - v^3, v = clamp(u, -clip, clip)",
            example: r#"{"name": "cubic_clipped", "clip": 1.0}"#,
        },
        CatalogEntry {
            kind: "f",
            name: "expr",
            params: "source: string over u; lipschitz: number > 0",
            formula: "user expression",
            example: r#"{"name": "expr", "source": "0.5*sin(u)", "lipschitz": 0.5}"#,
        },
    ]
}
