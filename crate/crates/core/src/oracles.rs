//! Reference values: closed-form solutions, plain Feynman-Kac Monte Carlo and
//! a Picard fixed-point iteration with nested Monte Carlo.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{dot, Nonlinearity, Phi};
use crate::error::{Error, Result};
use crate::problem::{HeatProblem, SemilinearProblem};
use crate::rng::{CubeDomain, RandomStream};
use crate::stats::{bootstrap_ci95, parallel_mean, Estimate, MeanAcc};

/// Exact `u(t, x)` for catalog initial conditions under `du/dt = rho Lap u + lambda u`.
#[derive(Clone, Debug)]
pub struct ClosedFormSolution {
    pub fingerprint: String,
    pub note: String,
    phi: Phi,
    rho: f64,
    lambda: f64,
    d: usize,
}

impl ClosedFormSolution {
    fn build(phi: &Phi, rho: f64, lambda: f64, d: usize, fingerprint: String) -> Result<Self> {
        let base = match phi {
            Phi::Constant(_) => "constant: u = c",
            Phi::Linear(_) => "linear: u = <c, x>",
            Phi::Sqnorm => "sqnorm: u = |x|^2 + 2 rho t d",
            Phi::ExpInner(_) => "exp_inner: u = exp(<c, x> + rho t |c|^2)",
            Phi::Expr(e) => {
                return Err(Error::NotAvailable(format!("initial condition expression {e}")))
            }
        };
        let note = if lambda == 0.0 {
            base.to_string()
        } else {
            format!("{base}, times exp(lambda t)")
        };
        Ok(Self {
            fingerprint,
            note,
            phi: phi.clone(),
            rho,
            lambda,
            d,
        })
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let heat = match &self.phi {
            Phi::Constant(c) => *c,
            Phi::Linear(c) => dot(c, x),
            Phi::Sqnorm => x.iter().map(|v| v * v).sum::<f64>() + 2.0 * self.rho * t * self.d as f64,
            Phi::ExpInner(c) => {
                let norm2: f64 = c.iter().map(|v| v * v).sum();
                (dot(c, x) + self.rho * t * norm2).exp()
            }
            Phi::Expr(_) => unreachable!("rejected at construction"),
        };
        if self.lambda == 0.0 {
            heat
        } else {
            (self.lambda * t).exp() * heat
        }
    }

    /// Largest scaled finite-difference residual of
    /// `du/dt - rho Lap u - lambda u` over `probes` random points in
    /// `[0, 1] x [-1, 1]^d`, scaled by `max(1, |u|)`.
    pub fn pde_residual(&self, probes: usize, stream: RandomStream) -> f64 {
        let (ht, hx) = (1e-4, 1e-3);
        let space = CubeDomain {
            a: -1.0,
            b: 1.0,
            d: self.d,
        };
        let mut worst: f64 = 0.0;
        let mut s = stream;
        for _ in 0..probes {
            let t = 0.1 + 0.9 * s.next_open01();
            let x = s.sample_uniform_cube(&space);
            let u = self.eval(t, &x);
            let dt = (self.eval(t + ht, &x) - self.eval(t - ht, &x)) / (2.0 * ht);
            let mut lap = 0.0;
            let mut y = x.clone();
            for i in 0..self.d {
                y[i] = x[i] + hx;
                let up = self.eval(t, &y);
                y[i] = x[i] - hx;
                let dn = self.eval(t, &y);
                y[i] = x[i];
                lap += (up - 2.0 * u + dn) / (hx * hx);
            }
            let r = (dt - self.rho * lap - self.lambda * u).abs() / u.abs().max(1.0);
            worst = worst.max(r);
        }
        worst
    }
}

/// Closed form for the linear heat problem.
pub fn closed_form_heat(problem: &HeatProblem) -> Result<ClosedFormSolution> {
    ClosedFormSolution::build(&problem.phi, problem.rho, 0.0, problem.d, problem.fingerprint())
}

/// Closed form for a semilinear problem; only `f = 0` and `f(u) = lambda u`.
pub fn closed_form(problem: &SemilinearProblem) -> Result<ClosedFormSolution> {
    let lambda = match problem.f {
        Nonlinearity::Zero => 0.0,
        Nonlinearity::Linear(l) => l,
        ref other => {
            return Err(Error::NotAvailable(format!("nonlinearity {other:?}")));
        }
    };
    ClosedFormSolution::build(
        &problem.base.phi,
        problem.base.rho,
        lambda,
        problem.base.d,
        problem.fingerprint(),
    )
}

/// `E[phi(x + sqrt(2 rho t) W)]` by plain Monte Carlo; draw `i` reads words
/// `i d .. (i + 1) d` of `stream`.
pub fn fk_mc(
    problem: &HeatProblem,
    t: f64,
    x: &[f64],
    n_samples: usize,
    stream: RandomStream,
) -> Result<Estimate> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("fk_mc needs n_samples >= 2".into()));
    }
    check_point(problem.d, x)?;
    let d = problem.d;
    let scale = (2.0 * problem.rho * t).sqrt();
    let acc = parallel_mean(n_samples, |i| {
        let w = stream.at((i * d) as u64).sample_normal(d);
        let y: Vec<f64> = x.iter().zip(&w).map(|(a, z)| a + scale * z).collect();
        problem.phi.eval(&y)
    });
    Ok(acc.estimate())
}

fn check_point(d: usize, x: &[f64]) -> Result<()> {
    if x.len() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: x.len(),
            context: "evaluation point",
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeQuadrature {
    Midpoint,
    GaussLegendre,
}

/// Nodes and weights of an `m`-point rule on `[0, t]`.
pub fn time_nodes(rule: TimeQuadrature, m: usize, t: f64) -> Vec<(f64, f64)> {
    match rule {
        TimeQuadrature::Midpoint => (0..m)
            .map(|k| ((k as f64 + 0.5) * t / m as f64, t / m as f64))
            .collect(),
        TimeQuadrature::GaussLegendre => gauss_legendre(m)
            .into_iter()
            .map(|(z, w)| (0.5 * t * (1.0 + z), 0.5 * t * w))
            .collect(),
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_m`.
pub fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        out.push((z, 2.0 / ((1.0 - z * z) * dp * dp)));
    }
    out.reverse();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardConfig {
    /// Number of Picard sweeps `K`.
    pub iterations: usize,
    /// Time quadrature nodes `M` per integral.
    pub nodes: usize,
    pub quadrature: TimeQuadrature,
    /// Fresh Brownian draws per quadrature node.
    pub inner_samples: usize,
    /// Independent outer replicates averaged for the final value.
    pub outer_samples: usize,
    pub bootstrap_resamples: usize,
    /// Cap on phi and f evaluations.
    pub budget_cap: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            iterations: 6,
            nodes: 16,
            quadrature: TimeQuadrature::GaussLegendre,
            inner_samples: 1,
            outer_samples: 2,
            bootstrap_resamples: 1000,
            budget_cap: 1e8,
        }
    }
}

impl PicardConfig {
    /// Expected number of phi and f evaluations.
    pub fn cost(&self, f_is_zero: bool) -> f64 {
        let mut c = 1.0;
        if !f_is_zero {
            for _ in 0..self.iterations {
                c = 1.0 + (self.nodes * self.inner_samples) as f64 * (c + 1.0);
            }
        }
        c * self.outer_samples as f64
    }
}

/// Picard iterate `K` of
/// `u(t, x) = E[phi(x + sqrt(2t) W)] + int_0^t E[f(u(s, x + sqrt(2(t - s)) W))] ds`
/// started from `u_0(s, y) = phi(y)`. Each iterate is recomputed from scratch
/// inside every quadrature node with fresh draws.
pub fn picard_mc(
    problem: &SemilinearProblem,
    t: f64,
    x: &[f64],
    config: &PicardConfig,
    stream: RandomStream,
) -> Result<Estimate> {
    check_point(problem.base.d, x)?;
    if config.iterations == 0 || config.nodes == 0 || config.inner_samples == 0 {
        return Err(Error::InvalidArgument(
            "Picard iterations, nodes and inner samples must be >= 1".into(),
        ));
    }
    if config.outer_samples < 2 {
        return Err(Error::InvalidArgument("picard_mc needs outer_samples >= 2".into()));
    }
    let f_zero = problem.f.is_zero();
    let cost = config.cost(f_zero);
    if cost > config.budget_cap {
        return Err(Error::BudgetExceeded {
            requested: cost,
            cap: config.budget_cap,
        });
    }
    let samples: Vec<f64> = (0..config.outer_samples)
        .into_par_iter()
        .map(|j| picard_sample(problem, config, f_zero, config.iterations, t, x, stream.split(j as u64)))
        .collect();
    let acc: MeanAcc = samples.iter().copied().collect();
    let ci = bootstrap_ci95(&samples, config.bootstrap_resamples, stream.split(u64::MAX));
    Ok(Estimate {
        value: acc.mean,
        ci,
    })
}

fn picard_sample(
    problem: &SemilinearProblem,
    config: &PicardConfig,
    f_zero: bool,
    k: usize,
    t: f64,
    x: &[f64],
    stream: RandomStream,
) -> f64 {
    let phi = &problem.base.phi;
    if k == 0 {
        return phi.eval(x);
    }
    let d = x.len();
    let shift = |mut s: RandomStream, scale: f64| -> Vec<f64> {
        let w = s.sample_normal(d);
        x.iter().zip(&w).map(|(a, z)| a + scale * z).collect()
    };
    let mut value = phi.eval(&shift(stream.split(0), (2.0 * t).sqrt()));
    if f_zero {
        return value;
    }
    let n_inner = config.inner_samples;
    for (m, (s, w)) in time_nodes(config.quadrature, config.nodes, t).into_iter().enumerate() {
        let mut acc = 0.0;
        for j in 0..n_inner {
            let child = stream.split((1 + m * n_inner + j) as u64);
            let y = shift(child.split(0), (2.0 * (t - s)).sqrt());
            let u = picard_sample(problem, config, f_zero, k - 1, s, &y, child.split(1));
            acc += problem.f.eval(u);
        }
        value += w * acc / n_inner as f64;
    }
    value
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriangleConfig {
    pub dims: Vec<usize>,
    pub t: f64,
    pub fk_samples: usize,
    pub picard_outer: usize,
    pub bootstrap_resamples: usize,
    /// Coefficient used for every coordinate of the linear and exponential cases.
    pub coeff: f64,
    pub seed: u64,
}

impl Default for TriangleConfig {
    fn default() -> Self {
        Self {
            dims: vec![1, 5],
            t: 0.5,
            fk_samples: 200_000,
            picard_outer: 100_000,
            bootstrap_resamples: 200,
            coeff: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub problem: String,
    pub d: usize,
    pub method_a: String,
    pub value_a: f64,
    pub ci_a: f64,
    pub method_b: String,
    pub value_b: f64,
    pub ci_b: f64,
    pub agree: bool,
}

impl AgreementRow {
    fn new(problem: &str, d: usize, a: (&str, Estimate), b: (&str, Estimate)) -> Self {
        let gap = (a.1.value - b.1.value).abs();
        Self {
            problem: problem.into(),
            d,
            method_a: a.0.into(),
            value_a: a.1.value,
            ci_a: a.1.ci,
            method_b: b.0.into(),
            value_b: b.1.value,
            ci_b: b.1.ci,
            agree: gap <= a.1.ci + b.1.ci + 1e-12 * (1.0 + b.1.value.abs()),
        }
    }
}

/// Pairwise agreement of `fk_mc`, `closed_form` and `picard_mc` (with
/// `f = 0`) on the four closed-form initial conditions at the cube centre,
/// plus Picard on `u' = u`, `phi = 1`, `t = 1`, six sweeps against
/// `sum_{k <= 6} 1 / k!`.
pub fn oracle_triangle(config: &TriangleConfig) -> Result<Vec<AgreementRow>> {
    use crate::catalog::{Coeffs, NonlinearitySpec, PhiSpec};
    let cases = [
        ("constant", PhiSpec::Constant { value: 1.5 }),
        ("linear", PhiSpec::Linear { coeffs: Coeffs::Uniform(config.coeff) }),
        ("sqnorm", PhiSpec::Sqnorm {}),
        ("exp_inner", PhiSpec::ExpInner { coeffs: Coeffs::Uniform(config.coeff) }),
    ];
    let picard = PicardConfig {
        outer_samples: config.picard_outer,
        bootstrap_resamples: config.bootstrap_resamples,
        ..PicardConfig::default()
    };
    let mut rows = Vec::new();
    for (i, &d) in config.dims.iter().enumerate() {
        for (j, (name, phi)) in cases.iter().enumerate() {
            let problem = SemilinearProblem::new(d, config.t, 0.0, 1.0, phi.clone(), NonlinearitySpec::Zero {})?;
            let x = vec![0.5; d];
            let id = (i * cases.len() + j) as u64;
            let exact = Estimate {
                value: closed_form(&problem)?.eval(config.t, &x),
                ci: 0.0,
            };
            let fk = fk_mc(&problem.base, config.t, &x, config.fk_samples, RandomStream::new(config.seed, 100 + id))?;
            let pic = picard_mc(&problem, config.t, &x, &picard, RandomStream::new(config.seed, 200 + id))?;
            rows.push(AgreementRow::new(name, d, ("fk_mc", fk), ("closed_form", exact)));
            rows.push(AgreementRow::new(name, d, ("picard_mc", pic), ("closed_form", exact)));
            rows.push(AgreementRow::new(name, d, ("fk_mc", fk), ("picard_mc", pic)));
        }
    }
    let growth = SemilinearProblem::new(
        1,
        1.0,
        0.0,
        1.0,
        PhiSpec::Constant { value: 1.0 },
        NonlinearitySpec::Linear { lambda: 1.0 },
    )?;
    let pic = picard_mc(
        &growth,
        1.0,
        &[0.5],
        &PicardConfig {
            bootstrap_resamples: config.bootstrap_resamples,
            ..PicardConfig::default()
        },
        RandomStream::new(config.seed, 300),
    )?;
    let series: f64 = (0..=6).map(|k| 1.0 / (1..=k).product::<u64>() as f64).sum();
    rows.push(AgreementRow::new(
        "growth_constant",
        1,
        ("picard_mc", pic),
        ("series_k6", Estimate { value: series, ci: 0.0 }),
    ));
    Ok(rows)
}

pub fn agreement_csv(rows: &[AgreementRow]) -> String {
    let mut out = String::from("problem,d,method_a,value_a,ci_a,method_b,value_b,ci_b,agree\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:e},{:e},{},{:e},{:e},{}\n",
            r.problem, r.d, r.method_a, r.value_a, r.ci_a, r.method_b, r.value_b, r.ci_b, r.agree
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Coeffs, NonlinearitySpec, PhiSpec};

    fn heat(d: usize, rho: f64, phi: PhiSpec) -> HeatProblem {
        HeatProblem::new(d, 1.0, rho, 0.0, 1.0, phi).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let p = heat(10, 1.0, PhiSpec::Sqnorm {});
        assert!((closed_form_heat(&p).unwrap().eval(0.5, &[0.0; 10]) - 10.0).abs() < 1e-12);
        let p = heat(3, 2.5, PhiSpec::Linear { coeffs: Coeffs::Uniform(1.0) });
        let x = [0.3, -1.2, 4.0];
        assert!((closed_form_heat(&p).unwrap().eval(0.7, &x) - 3.1).abs() < 1e-12);
        let p = heat(
            3,
            1.0,
            PhiSpec::ExpInner {
                coeffs: Coeffs::Each(vec![1.0, 0.0, 0.0]),
            },
        );
        let v = closed_form_heat(&p).unwrap().eval(1.0, &[0.0; 3]);
        assert!((v - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn closed_form_semilinear_linear_f() {
        let p = SemilinearProblem::new(
            5,
            0.5,
            0.0,
            1.0,
            PhiSpec::Sqnorm {},
            NonlinearitySpec::Linear { lambda: 1.0 },
        )
        .unwrap();
        let u = closed_form(&p).unwrap();
        assert!((u.eval(0.5, &[0.0; 5]) - 0.5f64.exp() * 5.0).abs() < 1e-12);
        assert!((u.eval(0.5, &[0.0; 5]) - 8.2436).abs() < 1e-4);
    }

    #[test]
    fn closed_form_not_available() {
        let p = heat(2, 1.0, PhiSpec::Expr { source: "max(x1, x2)".into() });
        assert!(matches!(closed_form_heat(&p), Err(Error::NotAvailable(_))));
        let p = SemilinearProblem::new(
            2,
            1.0,
            0.0,
            1.0,
            PhiSpec::Sqnorm {},
            NonlinearitySpec::Sine { amplitude: 1.0 },
        )
        .unwrap();
        assert!(matches!(closed_form(&p), Err(Error::NotAvailable(_))));
    }

    #[test]
    fn closed_forms_satisfy_pde() {
        let phis = [
            PhiSpec::Constant { value: 2.0 },
            PhiSpec::Linear { coeffs: Coeffs::Each(vec![0.5, -1.0, 2.0]) },
            PhiSpec::Sqnorm {},
            PhiSpec::ExpInner { coeffs: Coeffs::Each(vec![0.3, -0.2, 0.5]) },
        ];
        for phi in phis {
            for lambda in [0.0, 1.0, -0.7] {
                let p = SemilinearProblem::new(
                    3,
                    1.0,
                    0.0,
                    1.0,
                    phi.clone(),
                    NonlinearitySpec::Linear { lambda },
                )
                .unwrap();
                let r = closed_form(&p).unwrap().pde_residual(100, RandomStream::new(8, 8));
                assert!(r <= 1e-6, "{phi:?} lambda={lambda}: residual {r}");
            }
            let h = heat(3, 1.7, phi.clone());
            let r = closed_form_heat(&h).unwrap().pde_residual(100, RandomStream::new(8, 9));
            assert!(r <= 1e-6, "{phi:?} rho=1.7: residual {r}");
        }
    }

    #[test]
    fn fk_mc_examples() {
        let p = heat(4, 1.0, PhiSpec::Constant { value: 3.25 });
        let e = fk_mc(&p, 1.0, &[0.1; 4], 1000, RandomStream::new(1, 1)).unwrap();
        assert_eq!((e.value, e.ci), (3.25, 0.0));

        let p = heat(10, 1.0, PhiSpec::Sqnorm {});
        let e = fk_mc(&p, 0.5, &[0.0; 10], 100_000, RandomStream::new(2, 2)).unwrap();
        // sd of |W|^2 is sqrt(2d); half-width 1.96 sqrt(20 / 1e5) = 0.0277.
        assert!((e.value - 10.0).abs() <= e.ci, "{e:?}");
        assert!((e.ci - 0.0277).abs() < 0.003, "{e:?}");

        let a = fk_mc(&p, 0.5, &[0.0; 10], 25_000, RandomStream::new(3, 3)).unwrap();
        let b = fk_mc(&p, 0.5, &[0.0; 10], 100_000, RandomStream::new(3, 3)).unwrap();
        assert!((a.ci / b.ci - 2.0).abs() <= 0.4);
        assert!(fk_mc(&p, 0.5, &[0.0; 3], 10, RandomStream::new(3, 3)).is_err());
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for m in [1, 2, 4, 7, 16] {
            let rule = gauss_legendre(m);
            let wsum: f64 = rule.iter().map(|(_, w)| w).sum();
            assert!((wsum - 2.0).abs() < 1e-13, "m={m}");
            for deg in 0..2 * m {
                let q: f64 = rule.iter().map(|(z, w)| w * z.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "m={m} deg={deg}: {q}");
            }
        }
        let nodes = time_nodes(TimeQuadrature::Midpoint, 4, 2.0);
        assert_eq!(nodes[0], (0.25, 0.5));
    }

    fn growth(lambda: f64, phi: PhiSpec, d: usize) -> SemilinearProblem {
        SemilinearProblem::new(d, 1.0, 0.0, 1.0, phi, NonlinearitySpec::Linear { lambda }).unwrap()
    }

    #[test]
    fn picard_truncated_exponential_series() {
        let p = growth(1.0, PhiSpec::Constant { value: 1.0 }, 1);
        let e = picard_mc(&p, 1.0, &[0.0], &PicardConfig::default(), RandomStream::new(1, 1)).unwrap();
        let series: f64 = (0..=6).map(|k| 1.0 / (1..=k).product::<usize>() as f64).sum();
        assert!((series - 2.71805).abs() < 1e-5);
        assert!((e.value - series).abs() < 1e-12, "{e:?}");
        assert_eq!(e.ci, 0.0);
    }

    #[test]
    fn picard_error_decreases_in_k() {
        let p = growth(1.0, PhiSpec::Constant { value: 1.0 }, 1);
        let mut last = f64::INFINITY;
        for k in 1..=8 {
            let cfg = PicardConfig {
                iterations: k,
                nodes: 4,
                ..PicardConfig::default()
            };
            let e = picard_mc(&p, 1.0, &[0.0], &cfg, RandomStream::new(1, 1)).unwrap();
            let err = (e.value - std::f64::consts::E).abs();
            assert!(err < last, "k={k}: {err} >= {last}");
            last = err;
        }
    }

    #[test]
    fn picard_zero_f_matches_fk() {
        let sp = SemilinearProblem::new(
            2,
            1.0,
            0.0,
            1.0,
            PhiSpec::Sqnorm {},
            NonlinearitySpec::Zero {},
        )
        .unwrap();
        let cfg = PicardConfig {
            iterations: 1,
            outer_samples: 20_000,
            bootstrap_resamples: 200,
            ..PicardConfig::default()
        };
        let x = [0.2, 0.4];
        let pic = picard_mc(&sp, 0.5, &x, &cfg, RandomStream::new(4, 0)).unwrap();
        let exact = closed_form(&sp).unwrap().eval(0.5, &x);
        assert!((pic.value - exact).abs() <= pic.ci, "{pic:?} vs {exact}");
    }

    #[test]
    fn picard_nonconstant_growth() {
        // u(t, x) = e^t (x^2 + 2t); at t = 0.5, x = 0 that is 1.6487.
        let p = SemilinearProblem::new(
            1,
            0.5,
            0.0,
            1.0,
            PhiSpec::Expr { source: "x1*x1".into() },
            NonlinearitySpec::Linear { lambda: 1.0 },
        )
        .unwrap();
        let cfg = PicardConfig {
            iterations: 6,
            nodes: 4,
            outer_samples: 4000,
            bootstrap_resamples: 300,
            ..PicardConfig::default()
        };
        let e = picard_mc(&p, 0.5, &[0.0], &cfg, RandomStream::new(6, 6)).unwrap();
        let exact = 0.5f64.exp() * 1.0;
        assert!((exact - 1.6487).abs() < 1e-4);
        assert!((e.value - exact).abs() <= 1.5 * e.ci, "{e:?}");
    }

    #[test]
    fn picard_budget_guard() {
        let p = growth(1.0, PhiSpec::Constant { value: 1.0 }, 1);
        let cfg = PicardConfig {
            iterations: 8,
            nodes: 16,
            ..PicardConfig::default()
        };
        let err = picard_mc(&p, 1.0, &[0.0], &cfg, RandomStream::new(1, 1)).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn triangle_small_budget_runs() {
        let cfg = TriangleConfig {
            dims: vec![2],
            fk_samples: 2000,
            picard_outer: 2000,
            bootstrap_resamples: 50,
            ..TriangleConfig::default()
        };
        let rows = oracle_triangle(&cfg).unwrap();
        assert_eq!(rows.len(), 13);
        assert!(rows[..3].iter().all(|r| r.agree && r.value_a == 1.5));
        let last = rows.last().unwrap();
        assert!(last.agree, "{last:?}");
        assert!(agreement_csv(&rows).lines().count() == 14);
    }
}
