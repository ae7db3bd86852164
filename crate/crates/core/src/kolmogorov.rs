//! Regression solver for the linear heat equation.
//!
//! For `xi` uniform on the cube and `W` standard normal, the function
//! `x -> u(T, x)` is the minimizer over continuous `v` of
//! `E[(phi(varrho W + xi) - v(xi))^2]` with `varrho = sqrt(2 rho T)`. The
//! solver replaces `v` with a ReLU network and minimizes the empirical
//! objective with fresh batches on every step.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{FlatParams, NetworkArchitecture, Scratch};
use crate::optim::{self, OptimizerConfig, OptimizerState};
use crate::problem::HeatProblem;
use crate::rng::{CubeDomain, RandomStream};
use crate::stats::{parallel_mean, Estimate, MeanAcc};

/// Stream ids used by a training run with a given seed.
pub const INIT_STREAM: u64 = 1;
pub const XI_STREAM: u64 = 2;
pub const W_STREAM: u64 = 3;

/// Reference step for the divergence guard.
const GUARD_STEP: usize = 100;
const GUARD_FACTOR: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub architecture: NetworkArchitecture,
    pub batch_size: usize,
    pub total_steps: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub eval_every: usize,
}

impl TrainingPlan {
    /// `(d, 50, 50, 1)`, batch 256, 20 000 Adam steps with the default drops.
    pub fn default_for(d: usize, seed: u64) -> Self {
        let total_steps = 20_000;
        Self {
            architecture: NetworkArchitecture::scalar(d, &[50, 50]).expect("valid default"),
            batch_size: 256,
            total_steps,
            optimizer: OptimizerConfig::default_for(total_steps),
            seed,
            eval_every: 500,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.architecture.input_dim() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: self.architecture.input_dim(),
                context: "network input must equal problem dimension",
            });
        }
        if self.architecture.output_dim() != 1 {
            return Err(Error::Dimension {
                expected: 1,
                actual: self.architecture.output_dim(),
                context: "network output",
            });
        }
        if self.batch_size == 0 || self.total_steps == 0 || self.eval_every == 0 {
            return Err(Error::InvalidArgument(
                "batch_size, total_steps and eval_every must be positive".into(),
            ));
        }
        self.optimizer.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss_estimate: f64,
    pub ci: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedSurrogate {
    pub params: FlatParams,
    pub fingerprint: String,
    pub log: Vec<LogRecord>,
}

impl TrainedSurrogate {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut scratch = Scratch::new(self.params.architecture());
        self.params.eval_scalar(x, &mut scratch)
    }

    pub fn log_csv(&self) -> String {
        log_csv(&self.log)
    }

    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.log_csv())?;
        Ok(())
    }
}

pub fn log_csv(log: &[LogRecord]) -> String {
    let mut out = String::from("step,loss_estimate,ci\n");
    for r in log {
        writeln!(out, "{},{},{}", r.step, r.loss_estimate, r.ci).unwrap();
    }
    out
}

/// A regression problem `min_v E[(g(xi + scale W) - v(xi))^2]`, `xi` uniform
/// on `domain`.
pub struct RegressionTask<'a> {
    pub domain: CubeDomain,
    pub scale: f64,
    pub target: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    pub fingerprint: String,
}

/// One regression pair `(xi, g(xi + scale W))` drawn at sample index `index`.
pub fn draw_pair(
    task: &RegressionTask<'_>,
    xi_stream: RandomStream,
    w_stream: RandomStream,
    index: u64,
) -> Result<(Vec<f64>, f64)> {
    let d = task.domain.d;
    let xi = xi_stream.at(index * d as u64).sample_uniform_cube(&task.domain);
    let w = w_stream.at(index * d as u64).sample_normal(d);
    let point: Vec<f64> = xi.iter().zip(&w).map(|(x, z)| x + task.scale * z).collect();
    let y = (task.target)(&point);
    if !y.is_finite() {
        return Err(Error::NonFiniteTarget {
            input: point,
            value: y,
        });
    }
    Ok((xi, y))
}

/// One regression pair for the heat problem: `(xi, phi(varrho W + xi))`.
pub fn make_regression_sample(
    problem: &HeatProblem,
    xi_stream: &mut RandomStream,
    w_stream: &mut RandomStream,
) -> Result<(Vec<f64>, f64)> {
    let xi = xi_stream.sample_uniform_cube(&problem.domain);
    let w = w_stream.sample_normal(problem.d);
    let varrho = problem.varrho();
    let point: Vec<f64> = xi.iter().zip(&w).map(|(x, z)| x + varrho * z).collect();
    let y = problem.phi.eval(&point);
    if !y.is_finite() {
        return Err(Error::NonFiniteTarget {
            input: point,
            value: y,
        });
    }
    Ok((xi, y))
}

/// Runs `plan.total_steps` optimizer steps on fresh batches. Starts from
/// `init` when given, else from the fan-scaled uniform initialization.
pub fn train_regression(
    task: &RegressionTask<'_>,
    plan: &TrainingPlan,
    init: Option<&FlatParams>,
) -> Result<TrainedSurrogate> {
    plan.validate(task.domain.d)?;
    let mut params = match init {
        Some(p) if p.architecture() == &plan.architecture => p.clone(),
        _ => FlatParams::init_uniform(
            plan.architecture.clone(),
            RandomStream::new(plan.seed, INIT_STREAM),
        ),
    };
    let mut state = OptimizerState::new(&plan.optimizer, params.len());
    let xi_stream = RandomStream::new(plan.seed, XI_STREAM);
    let w_stream = RandomStream::new(plan.seed, W_STREAM);
    let batch = plan.batch_size;

    let mut log = Vec::new();
    let mut window = MeanAcc::default();
    let mut running = f64::NAN;
    let mut reference = f64::NAN;
    for step in 0..plan.total_steps {
        let base = (step * batch) as u64;
        let pairs: Vec<(Vec<f64>, f64)> = (0..batch)
            .into_par_iter()
            .map(|j| draw_pair(task, xi_stream, w_stream, base + j as u64))
            .collect::<Result<_>>()?;
        let xs: Vec<&[f64]> = pairs.iter().map(|(x, _)| x.as_slice()).collect();
        let ys: Vec<f64> = pairs.iter().map(|(_, y)| *y).collect();
        let (loss, grad) = params.batch_loss_and_grad(&xs, &ys)?;

        running = if step == 0 { loss } else { 0.95 * running + 0.05 * loss };
        if step + 1 == GUARD_STEP {
            reference = running;
        }
        let blown = step + 1 > GUARD_STEP && running > GUARD_FACTOR * reference;
        if !running.is_finite() || blown {
            return Err(Error::Diverged {
                step,
                running_loss: running,
                reference,
            });
        }
        optim::step(&mut params, &grad, &mut state, &plan.optimizer)?;

        window.push(loss);
        if (step + 1) % plan.eval_every == 0 || step + 1 == plan.total_steps {
            log.push(LogRecord {
                step: step + 1,
                loss_estimate: window.mean,
                ci: if window.n > 1 { window.ci95() } else { 0.0 },
            });
            log::debug!("step {} loss {:.6}", step + 1, window.mean);
            window = MeanAcc::default();
        }
    }
    Ok(TrainedSurrogate {
        params,
        fingerprint: task.fingerprint.clone(),
        log,
    })
}

/// Trains a network approximation of `u(T, .)` on the problem's cube.
pub fn train(problem: &HeatProblem, plan: &TrainingPlan) -> Result<TrainedSurrogate> {
    let phi = |y: &[f64]| problem.phi.eval(y);
    let task = RegressionTask {
        domain: problem.domain,
        scale: problem.varrho(),
        target: &phi,
        fingerprint: problem.fingerprint(),
    };
    train_regression(&task, plan, None)
}

/// Monte Carlo estimate of `E[(phi(varrho W + xi) - v(xi))^2]`.
///
/// Sample `i` takes `xi` from `stream.split(0)` and `W` from `stream.split(1)`,
/// so two candidates evaluated with the same stream see the same draws.
pub fn loss_of(
    candidate: &(dyn Fn(&[f64]) -> f64 + Sync),
    problem: &HeatProblem,
    n_samples: usize,
    stream: RandomStream,
) -> Result<Estimate> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("loss_of needs n_samples >= 2".into()));
    }
    let d = problem.d;
    let (xs, ws) = (stream.split(0), stream.split(1));
    let varrho = problem.varrho();
    let acc = parallel_mean(n_samples, |i| {
        let xi = xs.at((i * d) as u64).sample_uniform_cube(&problem.domain);
        let w = ws.at((i * d) as u64).sample_normal(d);
        let point: Vec<f64> = xi.iter().zip(&w).map(|(x, z)| x + varrho * z).collect();
        let r = problem.phi.eval(&point) - candidate(&xi);
        r * r
    });
    Ok(acc.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::PhiSpec;

    #[test]
    fn regression_sample_by_hand() {
        // d = 1, rho = 1, T = 0.5: varrho = 1, so y = xi + W.
        let p = HeatProblem::new(
            1,
            0.5,
            1.0,
            0.0,
            1.0,
            PhiSpec::Linear {
                coeffs: crate::catalog::Coeffs::Uniform(1.0),
            },
        )
        .unwrap();
        let mut xs = RandomStream::new(1, 1);
        let mut ws = RandomStream::new(1, 2);
        let (xi, y) = make_regression_sample(&p, &mut xs.clone(), &mut ws.clone()).unwrap();
        let expect_xi = xs.sample_uniform_cube(&p.domain)[0];
        let w = ws.next_normal();
        assert_eq!(xi, vec![expect_xi]);
        assert!((y - (expect_xi + w)).abs() < 1e-15);

        // The literal example: xi = 0.3, W = 1.0 gives 1.3.
        let point = 0.3 + p.varrho() * 1.0;
        assert!((p.phi.eval(&[point]) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn constant_phi_targets_are_constant() {
        let p = HeatProblem::new(3, 1.0, 2.0, -1.0, 1.0, PhiSpec::Constant { value: 4.5 }).unwrap();
        let mut xs = RandomStream::new(9, 1);
        let mut ws = RandomStream::new(9, 2);
        for _ in 0..100 {
            assert_eq!(make_regression_sample(&p, &mut xs, &mut ws).unwrap().1, 4.5);
        }
    }

    #[test]
    fn tiny_horizon_targets_approach_phi() {
        let p = HeatProblem::new(2, 1e-14, 1.0, 0.0, 1.0, PhiSpec::Sqnorm {}).unwrap();
        let mut xs = RandomStream::new(3, 1);
        let mut ws = RandomStream::new(3, 2);
        for _ in 0..100 {
            let (xi, y) = make_regression_sample(&p, &mut xs, &mut ws).unwrap();
            assert!((y - p.phi.eval(&xi)).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_target_is_reported() {
        let p = HeatProblem::new(
            1,
            1.0,
            1.0,
            0.0,
            1.0,
            PhiSpec::Expr {
                source: "1 / (x1 - x1)".into(),
            },
        )
        .unwrap();
        let err = make_regression_sample(&p, &mut RandomStream::new(1, 1), &mut RandomStream::new(1, 2))
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteTarget { .. }));
    }

    #[test]
    fn plan_validation() {
        let plan = TrainingPlan::default_for(3, 0);
        assert!(plan.validate(3).is_ok());
        assert!(plan.validate(4).is_err());
        let mut bad = plan.clone();
        bad.batch_size = 0;
        assert!(bad.validate(3).is_err());
    }

    #[test]
    fn loss_of_exact_for_constant_phi_is_zero() {
        let p = HeatProblem::new(2, 1.0, 1.0, 0.0, 1.0, PhiSpec::Constant { value: 2.0 }).unwrap();
        let est = loss_of(&|_| 2.0, &p, 1000, RandomStream::new(1, 1)).unwrap();
        assert_eq!(est.value, 0.0);
        assert!(loss_of(&|_| 2.0, &p, 1, RandomStream::new(1, 1)).is_err());
    }

    #[test]
    fn loss_ci_scales_with_sqrt_n() {
        let p = HeatProblem::new(3, 0.5, 1.0, 0.0, 1.0, PhiSpec::Sqnorm {}).unwrap();
        let v = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>();
        let a = loss_of(&v, &p, 20_000, RandomStream::new(5, 0)).unwrap();
        let b = loss_of(&v, &p, 80_000, RandomStream::new(5, 0)).unwrap();
        let ratio = a.ci / b.ci;
        assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
    }

    #[test]
    fn training_is_bit_reproducible_and_fits_constant() {
        let p = HeatProblem::new(2, 0.5, 1.0, 0.0, 1.0, PhiSpec::Constant { value: 5.0 }).unwrap();
        let mut plan = TrainingPlan::default_for(2, 11);
        plan.architecture = NetworkArchitecture::scalar(2, &[16, 16]).unwrap();
        plan.total_steps = 6000;
        plan.batch_size = 32;
        plan.optimizer = OptimizerConfig {
            step_size: 1e-2,
            ..OptimizerConfig::default_for(6000)
        };
        let a = train(&p, &plan).unwrap();
        let b = train(&p, &plan).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
        let mut s = RandomStream::new(77, 0);
        for _ in 0..1000 {
            let x = s.sample_uniform_cube(&p.domain);
            assert!((a.eval(&x) - 5.0).abs() < 0.01, "{}", a.eval(&x));
        }
        assert_eq!(a.log.last().unwrap().step, 6000);
        assert!(a.log_csv().starts_with("step,loss_estimate,ci\n"));
    }

    #[test]
    fn divergence_guard_trips() {
        let p = HeatProblem::new(1, 0.5, 1.0, 0.0, 1.0, PhiSpec::Sqnorm {}).unwrap();
        let mut plan = TrainingPlan::default_for(1, 1);
        plan.architecture = NetworkArchitecture::scalar(1, &[8, 8]).unwrap();
        plan.total_steps = 2000;
        plan.batch_size = 16;
        plan.optimizer = OptimizerConfig::sgd(5.0);
        let err = train(&p, &plan).unwrap_err();
        assert!(err.is_numerical_guard(), "{err}");
    }
}
