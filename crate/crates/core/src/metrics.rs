//! Error functionals, convergence-rate fits and the parameter-count audit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::PhiSpec;
use crate::error::{Error, Result};
use crate::kolmogorov::{self, TrainingPlan};
use crate::nn::NetworkArchitecture;
use crate::optim::OptimizerConfig;
use crate::oracles::{closed_form, closed_form_heat, fk_mc, picard_mc, PicardConfig};
use crate::problem::{DomainSpec, HeatProblem, SemilinearProblem};
use crate::rng::{CubeDomain, RandomStream};
use crate::splitting::{self, SolveConfig, SplittingMode};
use crate::stats::{ols_slope, MeanAcc, MC_CHUNK};

pub type Field<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub l2_error: f64,
    pub ci_halfwidth: f64,
    pub n_eval_points: usize,
    pub domain: CubeDomain,
}

/// Evaluates `(gap^2, exact^2)` at the `n` uniform points of `stream`; point
/// `i` reads words `i d .. (i + 1) d`.
fn sampled_squares(
    approx: Field<'_>,
    exact: Field<'_>,
    domain: &CubeDomain,
    n: usize,
    stream: RandomStream,
) -> Result<Vec<(f64, f64)>> {
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 evaluation points".into()));
    }
    let d = domain.d;
    Ok((0..n)
        .into_par_iter()
        .with_min_len(MC_CHUNK / 8)
        .map(|i| {
            let x = stream.at((i * d) as u64).sample_uniform_cube(domain);
            let e = exact(&x);
            let g = approx(&x) - e;
            (g * g, e * e)
        })
        .collect())
}

fn sqrt_with_ci(acc: &MeanAcc) -> (f64, f64) {
    let m = acc.mean;
    let ci = acc.ci95();
    if m > 0.0 {
        (m.sqrt(), ci / (2.0 * m.sqrt()))
    } else {
        (0.0, ci.sqrt())
    }
}

/// Root-mean-square gap between `approx` and `exact` over uniform points in
/// `domain`. The half-width comes from the CI of the mean squared gap through
/// the delta method.
pub fn l2_error(
    approx: Field<'_>,
    exact: Field<'_>,
    domain: &CubeDomain,
    n_points: usize,
    stream: RandomStream,
) -> Result<ErrorReport> {
    let sq = sampled_squares(approx, exact, domain, n_points, stream)?;
    let acc: MeanAcc = sq.iter().map(|s| s.0).collect();
    let (l2, ci) = sqrt_with_ci(&acc);
    Ok(ErrorReport {
        l2_error: l2,
        ci_halfwidth: ci,
        n_eval_points: n_points,
        domain: *domain,
    })
}

/// `l2_error(approx, exact) / l2_norm(exact)` on one shared point cloud.
pub fn relative_l2_error(
    approx: Field<'_>,
    exact: Field<'_>,
    domain: &CubeDomain,
    n_points: usize,
    stream: RandomStream,
) -> Result<ErrorReport> {
    let sq = sampled_squares(approx, exact, domain, n_points, stream)?;
    let gap: MeanAcc = sq.iter().map(|s| s.0).collect();
    let norm: MeanAcc = sq.iter().map(|s| s.1).collect();
    if norm.mean <= 0.0 {
        return Err(Error::InvalidArgument("reference field vanishes on the sample".into()));
    }
    let rel = (gap.mean / norm.mean).sqrt();
    // Delta method for sqrt(A / B) with correlated A, B.
    let z: MeanAcc = sq.iter().map(|s| s.0 / gap.mean.max(f64::MIN_POSITIVE) - s.1 / norm.mean).collect();
    let ci = if gap.mean > 0.0 {
        0.5 * rel * z.ci95()
    } else {
        (gap.ci95() / norm.mean).sqrt()
    };
    Ok(ErrorReport {
        l2_error: rel,
        ci_halfwidth: ci,
        n_eval_points: n_points,
        domain: *domain,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ErrorMetric {
    /// `|U_N(x) - u(T, x)|` at one point.
    Pointwise { x: Vec<f64> },
    /// L2 gap over the problem cube (needs a closed form).
    L2 { n_points: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateBudgets {
    pub plan: TrainingPlan,
    #[serde(default)]
    pub solve: SolveConfig,
    pub metric: ErrorMetric,
    /// Used only when no closed form exists.
    #[serde(default)]
    pub picard: PicardConfig,
    #[serde(default)]
    pub oracle_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub error: f64,
    pub ci: f64,
    /// `error * sqrt(N) / C`; at most 1 when the envelope holds.
    pub envelope_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub points: Vec<RatePoint>,
    pub slope: f64,
    /// `C = error_0 sqrt(N_0)` at the smallest `N`.
    pub envelope_constant: f64,
    pub envelope_holds: bool,
    pub monotone: bool,
    pub oracle: String,
}

impl RateFit {
    /// Builds the fit from `(N, error, ci)` triples.
    pub fn from_points(raw: &[(usize, f64, f64)], oracle: String) -> Result<Self> {
        if raw.len() < 4 {
            return Err(Error::InvalidArgument("a rate fit needs at least 4 points".into()));
        }
        if raw.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument("N values must be strictly increasing".into()));
        }
        if let Some(&(n, e, _)) = raw.iter().find(|p| !(p.1 > 0.0 && p.1.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "error at N = {n} is {e}; a log-log fit needs positive errors"
            )));
        }
        let c = raw[0].1 * (raw[0].0 as f64).sqrt();
        let points: Vec<RatePoint> = raw
            .iter()
            .map(|&(n, error, ci)| RatePoint {
                n,
                error,
                ci,
                envelope_ratio: error * (n as f64).sqrt() / c,
            })
            .collect();
        let lx: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
        let ly: Vec<f64> = points.iter().map(|p| p.error.ln()).collect();
        Ok(Self {
            slope: ols_slope(&lx, &ly),
            envelope_constant: c,
            envelope_holds: points.iter().all(|p| p.envelope_ratio <= 1.0),
            monotone: points.windows(2).all(|w| w[1].error <= w[0].error),
            points,
            oracle,
        })
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("N,error,ci,envelope_ratio\n");
        for p in &self.points {
            out.push_str(&format!("{},{:e},{:e},{:e}\n", p.n, p.error, p.ci, p.envelope_ratio));
        }
        out
    }
}

/// Runs the splitting solver for every `N` and fits the error decay against
/// the best available oracle (closed form, then Feynman-Kac for `f = 0`, then
/// Picard Monte Carlo).
pub fn rate_experiment(
    problem: &SemilinearProblem,
    n_list: &[usize],
    mode: SplittingMode,
    budgets: &RateBudgets,
) -> Result<RateFit> {
    if n_list.len() < 4 || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "N list must be strictly increasing with at least 4 entries".into(),
        ));
    }
    let t = problem.base.t_final;
    let exact = closed_form(problem).ok();
    let mut raw = Vec::with_capacity(n_list.len());
    let oracle = match (&exact, &budgets.metric) {
        (Some(_), _) => "closed_form",
        (None, ErrorMetric::L2 { .. }) => {
            return Err(Error::NotAvailable(
                "L2 rate errors need a closed-form solution".into(),
            ))
        }
        (None, ErrorMetric::Pointwise { .. }) if problem.f.is_zero() => "fk_mc",
        (None, ErrorMetric::Pointwise { .. }) => "picard_mc",
    };
    let reference = match (&budgets.metric, &exact) {
        (ErrorMetric::Pointwise { x }, Some(sol)) => Some((sol.eval(t, x), 0.0)),
        (ErrorMetric::Pointwise { x }, None) => {
            let stream = RandomStream::new(budgets.oracle_seed, 0);
            let est = if problem.f.is_zero() {
                let n = budgets.picard.outer_samples.max(2);
                fk_mc(&problem.base, t, x, n, stream)?
            } else {
                picard_mc(problem, t, x, &budgets.picard, stream)?
            };
            Some((est.value, est.ci))
        }
        _ => None,
    };
    for &n in n_list {
        let sol = splitting::solve(problem, n, &budgets.plan, &budgets.solve, mode)?;
        let (err, ci) = match &budgets.metric {
            ErrorMetric::Pointwise { x } => {
                let (r, rci) = reference.expect("pointwise reference computed above");
                let est = sol.eval(x);
                ((est.value - r).abs(), est.ci + rci)
            }
            ErrorMetric::L2 { n_points, seed } => {
                let sol_ref = exact.as_ref().expect("closed form checked above");
                let approx = |y: &[f64]| sol.eval(y).value;
                let truth = |y: &[f64]| sol_ref.eval(t, y);
                let rep = l2_error(
                    &approx,
                    &truth,
                    &problem.base.domain,
                    *n_points,
                    RandomStream::new(*seed, 0),
                )?;
                (rep.l2_error, rep.ci_halfwidth)
            }
        };
        log::info!("rate point N = {n}: error {err:.6e} +- {ci:.2e}");
        raw.push((n, err, ci));
    }
    let fit = RateFit::from_points(&raw, oracle.into())?;
    if !fit.monotone {
        log::warn!("error sequence is not monotone in N; see per-point CIs");
    }
    Ok(fit)
}

/// Hidden-layer widths 10, 25, 50, 100, 200, each with 2 then 3 hidden layers.
pub fn default_ladder() -> Vec<Vec<usize>> {
    [10, 25, 50, 100, 200]
        .iter()
        .flat_map(|&w| [vec![w, w], vec![w, w, w]])
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    pub d_list: Vec<usize>,
    pub eps_list: Vec<f64>,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub rho: f64,
    pub domain: DomainSpec,
    pub phi: PhiSpec,
    /// Hidden-layer widths of each rung, smallest first.
    pub ladder: Vec<Vec<usize>>,
    pub batch_size: usize,
    pub total_steps: usize,
    pub optimizer: Option<OptimizerConfig>,
    pub eval_points: usize,
    pub seed: u64,
    pub verify_seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            d_list: vec![1, 2, 5],
            eps_list: vec![0.2, 0.1, 0.05],
            t_final: 0.5,
            rho: 1.0,
            domain: DomainSpec::default(),
            phi: PhiSpec::Sqnorm {},
            ladder: default_ladder(),
            batch_size: 256,
            total_steps: 4000,
            optimizer: None,
            eval_points: 20_000,
            seed: 0,
            verify_seed: 1,
        }
    }
}

impl AuditConfig {
    fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() || self.d_list.is_empty() || self.eps_list.is_empty() {
            return Err(Error::InvalidArgument("audit needs d values, eps values and a ladder".into()));
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidArgument("eps values must be positive".into()));
        }
        if self.seed == self.verify_seed {
            return Err(Error::InvalidArgument(
                "verification seed must differ from the search seed".into(),
            ));
        }
        for &d in &self.d_list {
            let counts: Vec<usize> = self
                .ladder
                .iter()
                .map(|h| NetworkArchitecture::scalar(d, h).map(|a| a.param_count()))
                .collect::<Result<_>>()?;
            if counts.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidArgument(format!(
                    "ladder parameter counts are not strictly increasing for d = {d}"
                )));
            }
        }
        Ok(())
    }

    fn plan(&self, arch: NetworkArchitecture, seed: u64) -> TrainingPlan {
        TrainingPlan {
            architecture: arch,
            batch_size: self.batch_size,
            total_steps: self.total_steps,
            optimizer: self
                .optimizer
                .clone()
                .unwrap_or_else(|| OptimizerConfig::default_for(self.total_steps)),
            seed,
            eval_every: (self.total_steps / 10).max(1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub d: usize,
    pub eps: f64,
    /// The achieving rung, or the most accurate rung tried when none achieved.
    pub architecture: Vec<usize>,
    pub param_count: usize,
    pub error: f64,
    pub ci: f64,
    pub verified_error: f64,
    pub achieved: bool,
    pub verified: bool,
    pub rungs_tried: usize,
    /// Optimizer steps spent on the rungs tried (shared rungs counted once per row).
    pub training_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    /// Per eps: slope of `ln P` against `ln d` over achieved rows.
    pub slope_vs_d: Vec<(f64, Option<f64>)>,
    /// Per d: slope of `ln P` against `ln(1/eps)` over achieved rows.
    pub slope_vs_inv_eps: Vec<(usize, Option<f64>)>,
}

impl AuditReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("d,eps,arch,P,error,verified\n");
        for r in &self.rows {
            let arch: Vec<String> = r.architecture.iter().map(|l| l.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{},{:e},{}\n",
                r.d,
                r.eps,
                arch.join("-"),
                r.param_count,
                r.error,
                r.verified
            ));
        }
        out
    }
}

struct Rung {
    arch: NetworkArchitecture,
    search: f64,
    search_ci: f64,
    verify: f64,
}

fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.dedup();
    if points.len() < 2 || xs.iter().all(|x| (x - xs[0]).abs() < 1e-12) {
        return None;
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    Some(ols_slope(&x, &y))
}

/// Walks the architecture ladder for every `(d, eps)` until the L2 error
/// against the closed form drops to `eps`, re-verifying each hit on a fresh
/// point cloud. Rungs trained for one `d` are reused across `eps`.
pub fn param_audit(config: &AuditConfig) -> Result<AuditReport> {
    config.validate()?;
    let mut rows = Vec::new();
    for &d in &config.d_list {
        let problem = HeatProblem::new(
            d,
            config.t_final,
            config.rho,
            config.domain.a,
            config.domain.b,
            config.phi.clone(),
        )?;
        let exact = closed_form_heat(&problem)?;
        let truth = |x: &[f64]| exact.eval(problem.t_final, x);
        let mut rungs: Vec<Rung> = Vec::new();
        let train_rung = |r: usize| -> Result<Rung> {
            let arch = NetworkArchitecture::scalar(d, &config.ladder[r])?;
            let seed = splitting::step_seed(config.seed, r).wrapping_add(d as u64);
            let net = kolmogorov::train(&problem, &config.plan(arch.clone(), seed))?;
            let approx = |x: &[f64]| net.eval(x);
            let search = l2_error(
                &approx,
                &truth,
                &problem.domain,
                config.eval_points,
                RandomStream::new(config.seed, 0x5EA4),
            )?;
            let verify = l2_error(
                &approx,
                &truth,
                &problem.domain,
                config.eval_points,
                RandomStream::new(config.verify_seed, 0xC4EC),
            )?;
            log::info!(
                "audit d = {d}, rung {:?}: error {:.4e} (verify {:.4e})",
                config.ladder[r],
                search.l2_error,
                verify.l2_error
            );
            Ok(Rung {
                arch,
                search: search.l2_error,
                search_ci: search.ci_halfwidth,
                verify: verify.l2_error,
            })
        };
        for &eps in &config.eps_list {
            let mut hit = None;
            for r in 0..config.ladder.len() {
                if r == rungs.len() {
                    rungs.push(train_rung(r)?);
                }
                let rung = &rungs[r];
                if rung.search <= eps && rung.verify <= eps {
                    hit = Some(r);
                    break;
                }
            }
            let tried = hit.map_or(config.ladder.len(), |r| r + 1);
            let shown = hit.unwrap_or_else(|| {
                (0..tried)
                    .min_by(|&a, &b| rungs[a].search.total_cmp(&rungs[b].search))
                    .unwrap_or(0)
            });
            let rung = &rungs[shown];
            rows.push(AuditRow {
                d,
                eps,
                architecture: rung.arch.layer_sizes().to_vec(),
                param_count: rung.arch.param_count(),
                error: rung.search,
                ci: rung.search_ci,
                verified_error: rung.verify,
                achieved: hit.is_some(),
                verified: hit.is_some(),
                rungs_tried: tried,
                training_steps: tried * config.total_steps,
            });
        }
    }
    let achieved: Vec<&AuditRow> = rows.iter().filter(|r| r.achieved).collect();
    let slope_vs_d = config
        .eps_list
        .iter()
        .map(|&eps| {
            let pts: Vec<(f64, f64)> = achieved
                .iter()
                .filter(|r| r.eps == eps)
                .map(|r| ((r.d as f64).ln(), (r.param_count as f64).ln()))
                .collect();
            (eps, fit_slope(&pts))
        })
        .collect();
    let slope_vs_inv_eps = config
        .d_list
        .iter()
        .map(|&d| {
            let pts: Vec<(f64, f64)> = achieved
                .iter()
                .filter(|r| r.d == d)
                .map(|r| ((1.0 / r.eps).ln(), (r.param_count as f64).ln()))
                .collect();
            (d, fit_slope(&pts))
        })
        .collect();
    Ok(AuditReport {
        rows,
        slope_vs_d,
        slope_vs_inv_eps,
    })
}
