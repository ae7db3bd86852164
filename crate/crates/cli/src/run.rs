use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kspl_core::metrics::{self, AuditConfig, RateBudgets};
use kspl_core::oracles::{self, closed_form, closed_form_heat, TriangleConfig};
use kspl_core::splitting::{self, SplittingMode};
use kspl_core::{kolmogorov, snapshot, HeatProblem, RandomStream, SemilinearProblem};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Kind, PlanSpec};

/// Stream ids for evaluation draws, fixed so reports are recomputable.
const EVAL_STREAM: u64 = 0xE7A1;
const LOSS_STREAM: u64 = 0x1055;

const STREAM_POLICY: &str = "Philox4x32-10 keyed by seed; training sample i of a batch \
     draws xi from stream 2 and W from stream 3 at word i*d, initial weights from stream 1; \
     splitting step n trains with seed + n * 0x9E3779B97F4A7C15; evaluation clouds use \
     stream 0xE7A1, loss estimates stream 0x1055";

pub struct Outcome {
    pub files: Vec<String>,
    pub resolved: Value,
    /// False when a check-style experiment found disagreements.
    pub passed: bool,
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Out<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
    }

    fn table<R: Serialize>(&mut self, name: &str, header: &[&str], rows: &[R]) -> Result<()> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p).with_context(|| format!("writing {}", p.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn execute(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut out = Out {
        dir,
        files: Vec::new(),
    };
    let (resolved, passed) = match cfg.kind {
        Kind::Kolmogorov => (run_kolmogorov(cfg, &mut out)?, true),
        Kind::Splitting => (run_splitting(cfg, &mut out)?, true),
        Kind::Rate => (run_rate(cfg, &mut out)?, true),
        Kind::Audit => (run_audit(cfg, &mut out)?, true),
        Kind::OracleCheck => run_oracle_check(cfg, &mut out)?,
    };
    Ok(Outcome {
        files: out.files,
        resolved,
        passed,
    })
}

pub fn manifest(cfg: &ExperimentConfig, outcome: &Outcome) -> Value {
    json!({
        "toolkit": "kspl",
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "seed": cfg.seed,
        "resolved": outcome.resolved,
        "stream_policy": STREAM_POLICY,
        "outputs": outcome.files,
    })
}

fn plan_spec(cfg: &ExperimentConfig) -> PlanSpec {
    cfg.plan.clone().unwrap_or_default()
}

/// Exact heat solution as a field, when the initial condition has one.
fn heat_exact(problem: &HeatProblem) -> Option<impl Fn(&[f64]) -> f64 + Sync + '_> {
    let sol = closed_form_heat(problem).ok()?;
    Some(move |x: &[f64]| sol.eval(problem.t_final, x))
}

#[derive(Serialize)]
struct MetricRow<'a> {
    metric: &'a str,
    value: f64,
    ci: f64,
    n_points: usize,
}

fn run_kolmogorov(cfg: &ExperimentConfig, out: &mut Out<'_>) -> Result<Value> {
    let spec = cfg.problem.as_ref().expect("checked at parse time");
    if spec.f.is_some() {
        log::warn!("kolmogorov runs ignore the nonlinearity `f`");
    }
    let problem = HeatProblem::from_spec(spec)?;
    let plan = plan_spec(cfg).resolve(problem.d, cfg.seed)?;
    log::info!(
        "training {:?} for {} steps on d = {}",
        plan.architecture.layer_sizes(),
        plan.total_steps,
        problem.d
    );
    let net = kolmogorov::train(&problem, &plan)?;
    snapshot::save(&net, &out.path("step_000.bin"))?;
    out.files.push("step_000.json".into());
    out.text("training_log.csv", &net.log_csv())?;

    let n = cfg.eval_points;
    let approx = |x: &[f64]| net.eval(x);
    let mut rows = Vec::new();
    let loss_stream = RandomStream::new(cfg.seed, LOSS_STREAM);
    let loss = kolmogorov::loss_of(&approx, &problem, n, loss_stream)?;
    rows.push(MetricRow {
        metric: "loss_net",
        value: loss.value,
        ci: loss.ci,
        n_points: n,
    });
    if let Some(exact) = heat_exact(&problem) {
        let ideal = kolmogorov::loss_of(&exact, &problem, n, loss_stream)?;
        rows.push(MetricRow {
            metric: "loss_exact",
            value: ideal.value,
            ci: ideal.ci,
            n_points: n,
        });
        let stream = RandomStream::new(cfg.seed, EVAL_STREAM);
        let abs = metrics::l2_error(&approx, &exact, &problem.domain, n, stream)?;
        let rel = metrics::relative_l2_error(&approx, &exact, &problem.domain, n, stream)?;
        for (metric, r) in [("l2_error", abs), ("relative_l2_error", rel)] {
            rows.push(MetricRow {
                metric,
                value: r.l2_error,
                ci: r.ci_halfwidth,
                n_points: n,
            });
            log::info!("{metric}: {:.4e} +- {:.1e}", r.l2_error, r.ci_halfwidth);
        }
    }
    out.table("results.csv", &["metric", "value", "ci", "n_points"], &rows)?;
    Ok(json!({ "plan": plan, "problem": problem.spec() }))
}

#[derive(Serialize)]
struct LogRow {
    split_step: usize,
    iteration: usize,
    loss_estimate: f64,
    ci: f64,
}

fn run_splitting(cfg: &ExperimentConfig, out: &mut Out<'_>) -> Result<Value> {
    let spec = cfg.problem.as_ref().expect("checked at parse time");
    let section = cfg.splitting.as_ref().expect("checked at parse time");
    let problem = SemilinearProblem::from_spec(spec)?;
    let d = problem.base.d;
    let plan = plan_spec(cfg).resolve(d, cfg.seed)?;
    let mut solve_cfg = section.solve.clone();
    solve_cfg.mc.seed = cfg.seed;
    let sol = splitting::solve(&problem, section.steps, &plan, &solve_cfg, section.mode)?;

    let mut log_rows = Vec::new();
    for (k, net) in sol.networks() {
        let name = if k == 0 {
            "initial".to_string()
        } else {
            format!("step_{:03}", k - 1)
        };
        snapshot::save(net, &out.path(&format!("{name}.bin")))?;
        out.files.push(format!("{name}.json"));
        if k > 0 {
            log_rows.extend(net.log.iter().map(|r| LogRow {
                split_step: k - 1,
                iteration: r.step,
                loss_estimate: r.loss_estimate,
                ci: r.ci,
            }));
        }
    }
    if section.mode == SplittingMode::Nn {
        out.table(
            "training_log.csv",
            &["split_step", "iteration", "loss_estimate", "ci"],
            &log_rows,
        )?;
    }

    let exact = closed_form(&problem).ok();
    let t = problem.base.t_final;
    let points = if section.query_points.is_empty() {
        let c = 0.5 * (problem.base.domain.a + problem.base.domain.b);
        vec![vec![c; d]]
    } else {
        section.query_points.clone()
    };
    let mut header: Vec<String> = vec!["point".into()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend(["value", "ci", "exact"].map(String::from));
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (q, x) in points.iter().enumerate() {
        if x.len() != d {
            return Err(kspl_core::Error::Dimension {
                expected: d,
                actual: x.len(),
                context: "query point",
            }
            .into());
        }
        let est = sol.eval_with(x, RandomStream::new(cfg.seed, EVAL_STREAM).split(q as u64));
        let mut row = vec![q.to_string()];
        row.extend(x.iter().map(|v| format!("{v:e}")));
        row.push(format!("{:e}", est.value));
        row.push(format!("{:e}", est.ci));
        row.push(exact.as_ref().map_or(String::new(), |s| format!("{:e}", s.eval(t, x))));
        rows.push(row);
    }
    out.table("values.csv", &header, &rows)?;

    if let (Some(exact), SplittingMode::Nn) = (&exact, section.mode) {
        let n = cfg.eval_points;
        let approx = |x: &[f64]| sol.eval(x).value;
        let truth = |x: &[f64]| exact.eval(t, x);
        let stream = RandomStream::new(cfg.seed, EVAL_STREAM);
        let abs = metrics::l2_error(&approx, &truth, &problem.base.domain, n, stream)?;
        let rel = metrics::relative_l2_error(&approx, &truth, &problem.base.domain, n, stream)?;
        log::info!("relative L2 error {:.4e} +- {:.1e}", rel.l2_error, rel.ci_halfwidth);
        let rows = [("l2_error", abs), ("relative_l2_error", rel)].map(|(metric, r)| MetricRow {
            metric,
            value: r.l2_error,
            ci: r.ci_halfwidth,
            n_points: n,
        });
        out.table("results.csv", &["metric", "value", "ci", "n_points"], &rows)?;
    }
    Ok(json!({
        "steps": section.steps,
        "sigma": sol.state.sigma(),
        "mode": section.mode,
        "plan": plan,
        "solve": solve_cfg,
        "problem": problem.spec(),
        "provenance": sol.provenance,
    }))
}

fn run_rate(cfg: &ExperimentConfig, out: &mut Out<'_>) -> Result<Value> {
    let spec = cfg.problem.as_ref().expect("checked at parse time");
    let section = cfg.rate.as_ref().expect("checked at parse time");
    let problem = SemilinearProblem::from_spec(spec)?;
    let plan = plan_spec(cfg).resolve(problem.base.d, cfg.seed)?;
    let mut solve = section.solve.clone();
    solve.mc.seed = cfg.seed;
    let budgets = RateBudgets {
        plan,
        solve,
        metric: section.metric.clone(),
        picard: section.picard.clone(),
        oracle_seed: cfg.seed,
    };
    let fit = metrics::rate_experiment(&problem, &section.n_list, section.mode, &budgets)?;
    out.text("rate.csv", &fit.csv())?;
    log::info!(
        "slope {:.4}, envelope constant {:.4e}, envelope holds: {}",
        fit.slope,
        fit.envelope_constant,
        fit.envelope_holds
    );
    Ok(json!({
        "budgets": budgets,
        "problem": problem.spec(),
        "slope": fit.slope,
        "envelope_constant": fit.envelope_constant,
        "envelope_holds": fit.envelope_holds,
        "monotone": fit.monotone,
        "oracle": fit.oracle,
    }))
}

#[derive(Serialize)]
struct FitRow {
    against: &'static str,
    key: f64,
    slope: Option<f64>,
}

fn run_audit(cfg: &ExperimentConfig, out: &mut Out<'_>) -> Result<Value> {
    let audit = AuditConfig {
        seed: cfg.seed,
        verify_seed: cfg.seed.wrapping_add(1),
        ..cfg.audit.clone().unwrap_or_default()
    };
    let report = metrics::param_audit(&audit)?;
    out.text("audit.csv", &report.csv())?;
    let mut fits: Vec<FitRow> = report
        .slope_vs_d
        .iter()
        .map(|&(eps, slope)| FitRow {
            against: "d",
            key: eps,
            slope,
        })
        .collect();
    fits.extend(report.slope_vs_inv_eps.iter().map(|&(d, slope)| FitRow {
        against: "inv_eps",
        key: d as f64,
        slope,
    }));
    out.table("audit_fits.csv", &["against", "fixed", "slope"], &fits)?;
    Ok(json!({ "audit": audit, "rows": report.rows }))
}

fn run_oracle_check(cfg: &ExperimentConfig, out: &mut Out<'_>) -> Result<(Value, bool)> {
    let tri = TriangleConfig {
        seed: cfg.seed,
        ..cfg.oracle_check.clone().unwrap_or_default()
    };
    let rows = oracles::oracle_triangle(&tri)?;
    out.text("oracle_check.csv", &oracles::agreement_csv(&rows))?;
    let failed: Vec<_> = rows.iter().filter(|r| !r.agree).collect();
    for r in &failed {
        log::error!(
            "{} (d = {}): {} = {} +- {} vs {} = {} +- {}",
            r.problem,
            r.d,
            r.method_a,
            r.value_a,
            r.ci_a,
            r.method_b,
            r.value_b,
            r.ci_b
        );
    }
    Ok((json!({ "oracle_check": tri }), failed.is_empty()))
}
