//! Splitting solver for `du/dt = Lap u + f(u)`.
//!
//! `[0, T]` is cut into `N` steps of length `h = T / N`. Step `n` freezes the
//! nonlinearity into a jump `G_n = U_n + h f(U_n)` and then runs pure heat
//! flow for time `h`, so `U_{n+1}(x) = E[G_n(x + sigma W)]` with
//! `sigma = sqrt(2h)`. Each heat step is either learned by regression (nn
//! mode) or evaluated by nested Monte Carlo back to `U_0 = phi` (mc mode).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kolmogorov::{train_regression, LogRecord, RegressionTask, TrainedSurrogate, TrainingPlan};
use crate::nn::Scratch;
use crate::problem::SemilinearProblem;
use crate::rng::{CubeDomain, RandomStream};
use crate::stats::{parallel_mean_with, Estimate, MeanAcc};

const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed of the training run for step `n`; step 0 uses the plan seed itself.
pub fn step_seed(seed: u64, n: usize) -> u64 {
    seed.wrapping_add((n as u64).wrapping_mul(SEED_STRIDE))
}

#[derive(Clone, Debug)]
pub enum StepValue {
    /// `U_0 = phi`, evaluated exactly.
    Initial,
    Network(TrainedSurrogate),
    /// `U_k(y)` estimated as the mean of `n_inner` draws of `G_{k-1}(y + sigma W)`.
    NestedMc { n_inner: usize },
}

#[derive(Clone, Debug)]
pub struct SplittingState {
    pub problem: SemilinearProblem,
    n_steps: usize,
    values: Vec<StepValue>,
    /// Cap on phi, network and f evaluations for one nested query.
    pub budget_cap: f64,
}

impl SplittingState {
    pub fn new(problem: SemilinearProblem, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidArgument("number of steps N must be >= 1".into()));
        }
        Ok(Self {
            problem,
            n_steps,
            values: vec![StepValue::Initial],
            budget_cap: 1e8,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Index `n` of the newest value function `U_n`.
    pub fn step_index(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[StepValue] {
        &self.values
    }

    pub fn h(&self) -> f64 {
        self.problem.base.t_final / self.n_steps as f64
    }

    pub fn sigma(&self) -> f64 {
        (2.0 * self.problem.base.t_final / self.n_steps as f64).sqrt()
    }

    /// Time `tau_n = n T / N`.
    pub fn tau(&self, n: usize) -> f64 {
        n as f64 * self.problem.base.t_final / self.n_steps as f64
    }

    /// Replaces `U_0 = phi` with a network fit (only before the first step).
    pub fn set_initial_network(&mut self, net: TrainedSurrogate) -> Result<()> {
        if self.values.len() != 1 {
            return Err(Error::InvalidArgument(
                "initial network can only be set before the first step".into(),
            ));
        }
        self.values[0] = StepValue::Network(net);
        Ok(())
    }

    /// Evaluations needed for one value of `U_k`.
    pub fn cost(&self, k: usize) -> f64 {
        match &self.values[k] {
            StepValue::Initial | StepValue::Network(_) => 1.0,
            StepValue::NestedMc { n_inner } => *n_inner as f64 * (self.cost(k - 1) + 1.0),
        }
    }

    fn value_at(&self, k: usize, y: &[f64], stream: RandomStream) -> f64 {
        match &self.values[k] {
            StepValue::Initial => self.problem.base.phi.eval(y),
            StepValue::Network(net) => {
                let mut scratch = Scratch::new(net.params.architecture());
                net.params.eval_scalar(y, &mut scratch)
            }
            StepValue::NestedMc { n_inner } => {
                let mut acc = MeanAcc::default();
                for j in 0..*n_inner {
                    acc.push(self.nested_draw(k, y, stream.split(j as u64)));
                }
                acc.mean
            }
        }
    }

    /// One draw of `G_{k-1}(y + sigma W)` for a nested level `k`.
    fn nested_draw(&self, k: usize, y: &[f64], stream: RandomStream) -> f64 {
        let sigma = self.sigma();
        let w = stream.split(0).sample_normal(y.len());
        let point: Vec<f64> = y.iter().zip(&w).map(|(a, z)| a + sigma * z).collect();
        self.jump(k - 1, &point, stream.split(1))
    }

    /// `G_k(y) = U_k(y) + h f(U_k(y))`.
    fn jump(&self, k: usize, y: &[f64], stream: RandomStream) -> f64 {
        let u = self.value_at(k, y, stream);
        u + self.h() * self.problem.f.eval(u)
    }

    /// The frozen-nonlinearity target `G_n(y)` for the newest `U_n`. The
    /// stream only matters when `U_n` is a nested Monte Carlo level.
    pub fn frozen_target(&self, y: &[f64], stream: RandomStream) -> f64 {
        self.jump(self.step_index(), y, stream)
    }

    /// `U_k(x)` with a 95% half-width; exact values report zero width.
    pub fn estimate(&self, k: usize, x: &[f64], stream: RandomStream) -> Estimate {
        match &self.values[k] {
            StepValue::NestedMc { n_inner } => {
                let acc = parallel_mean_with(*n_inner, || (), |_, j| {
                    self.nested_draw(k, x, stream.split(j as u64))
                });
                Estimate {
                    value: acc.mean,
                    ci: if acc.n > 1 { acc.ci95() } else { f64::INFINITY },
                }
            }
            _ => Estimate {
                value: self.value_at(k, x, stream),
                ci: 0.0,
            },
        }
    }

    /// Sampling cube for the regression in step `n`: the problem cube grown by
    /// `inflation * sigma * sqrt(N - n - 1)` per side.
    pub fn training_domain(&self, n: usize, inflation: f64) -> CubeDomain {
        let remaining = (self.n_steps - n - 1) as f64;
        self.problem.base.domain.inflate(inflation * self.sigma() * remaining.sqrt())
    }

    fn ensure_open(&self) -> Result<usize> {
        let n = self.step_index();
        if n >= self.n_steps {
            return Err(Error::InvalidArgument(format!(
                "all {} steps already taken",
                self.n_steps
            )));
        }
        Ok(n)
    }

    /// Learns `U_{n+1}` by regressing `G_n(xi + sigma W)` on `xi`.
    pub fn split_step_train(
        &mut self,
        plan: &TrainingPlan,
        inflation: f64,
        warm_start: bool,
    ) -> Result<&TrainedSurrogate> {
        let n = self.ensure_open()?;
        if !(inflation >= 0.0 && inflation.is_finite()) {
            return Err(Error::InvalidArgument(format!("inflation must be >= 0, got {inflation}")));
        }
        let step_plan = TrainingPlan {
            seed: step_seed(plan.seed, n),
            ..plan.clone()
        };
        let init = match (&self.values[n], warm_start) {
            (StepValue::Network(prev), true) => Some(&prev.params),
            _ => None,
        };
        let target = |y: &[f64]| self.frozen_target(y, RandomStream::new(0, 0));
        let task = RegressionTask {
            domain: self.training_domain(n, inflation),
            scale: self.sigma(),
            target: &target,
            fingerprint: format!("{}#step{n}/{}", self.problem.fingerprint(), self.n_steps),
        };
        let net = train_regression(&task, &step_plan, init)?;
        self.values.push(StepValue::Network(net));
        match self.values.last() {
            Some(StepValue::Network(net)) => Ok(net),
            _ => unreachable!(),
        }
    }

    /// Appends a nested Monte Carlo level for `U_{n+1}` and evaluates it at
    /// `query_points`. Query `q` uses `stream.split(q)`.
    pub fn split_step_mc(
        &mut self,
        n_inner: usize,
        query_points: &[Vec<f64>],
        stream: RandomStream,
    ) -> Result<Vec<Estimate>> {
        self.push_mc_level(n_inner)?;
        let total = self.cost(self.step_index()) * query_points.len() as f64;
        if total > self.budget_cap {
            self.values.pop();
            return Err(Error::BudgetExceeded {
                requested: total,
                cap: self.budget_cap,
            });
        }
        let k = self.step_index();
        Ok(query_points
            .iter()
            .enumerate()
            .map(|(q, x)| self.estimate(k, x, stream.split(q as u64)))
            .collect())
    }

    fn push_mc_level(&mut self, n_inner: usize) -> Result<()> {
        self.ensure_open()?;
        if n_inner == 0 {
            return Err(Error::InvalidArgument("n_inner must be >= 1".into()));
        }
        self.values.push(StepValue::NestedMc { n_inner });
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplittingMode {
    Nn,
    Mc,
}

/// Sample counts for the nested estimator, listed from the top: `outer` draws
/// for `U_N`, then `inner[0]` for `U_{N-1}`, `inner[1]` for `U_{N-2}` and so
/// on. The last entry of `inner` repeats; an empty list means 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McBudget {
    pub outer: usize,
    pub inner: Vec<usize>,
    pub cap: f64,
    pub seed: u64,
}

impl Default for McBudget {
    fn default() -> Self {
        Self {
            outer: 100_000,
            inner: vec![1],
            cap: 1e8,
            seed: 0,
        }
    }
}

impl McBudget {
    fn count_for_level(&self, k: usize, n_steps: usize) -> usize {
        if k == n_steps {
            return self.outer;
        }
        let depth = n_steps - 1 - k;
        self.inner
            .get(depth)
            .or(self.inner.last())
            .copied()
            .unwrap_or(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub inflation: f64,
    pub warm_start: bool,
    /// Step budget for warm-started steps; `None` keeps the plan's budget.
    pub warm_steps: Option<usize>,
    /// Fit `phi` with a network before the first step instead of using it exactly.
    pub fit_initial: bool,
    pub mc: McBudget,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            inflation: 3.0,
            warm_start: true,
            warm_steps: None,
            fit_initial: false,
            mc: McBudget::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub mode: SplittingMode,
    pub domain: CubeDomain,
    pub seed: Option<u64>,
    pub n_inner: Option<usize>,
    pub warm_started: bool,
    pub log: Vec<LogRecord>,
}

#[derive(Clone, Debug)]
pub struct SplittingSolution {
    pub state: SplittingState,
    pub mode: SplittingMode,
    pub provenance: Vec<StepRecord>,
    mc_seed: u64,
}

impl SplittingSolution {
    /// Terminal approximation `U_N(x)` of `u(T, x)`.
    pub fn eval(&self, x: &[f64]) -> Estimate {
        self.eval_with(x, RandomStream::new(self.mc_seed, 0))
    }

    pub fn eval_with(&self, x: &[f64], stream: RandomStream) -> Estimate {
        self.state.estimate(self.state.n_steps(), x, stream)
    }

    /// Evaluations needed for one terminal value.
    pub fn cost(&self) -> f64 {
        self.state.cost(self.state.n_steps())
    }

    pub fn networks(&self) -> impl Iterator<Item = (usize, &TrainedSurrogate)> {
        self.state.values.iter().enumerate().filter_map(|(k, v)| match v {
            StepValue::Network(net) => Some((k, net)),
            _ => None,
        })
    }
}

/// Runs all `N` steps in the requested mode.
pub fn solve(
    problem: &SemilinearProblem,
    n_steps: usize,
    plan: &TrainingPlan,
    config: &SolveConfig,
    mode: SplittingMode,
) -> Result<SplittingSolution> {
    let mut state = SplittingState::new(problem.clone(), n_steps)?;
    state.budget_cap = config.mc.cap;
    let mut provenance = Vec::with_capacity(n_steps);
    match mode {
        SplittingMode::Mc => {
            for k in 1..=n_steps {
                let n_inner = config.mc.count_for_level(k, n_steps);
                state.push_mc_level(n_inner)?;
                provenance.push(StepRecord {
                    step: k - 1,
                    mode,
                    domain: problem.base.domain,
                    seed: None,
                    n_inner: Some(n_inner),
                    warm_started: false,
                    log: Vec::new(),
                });
            }
            let cost = state.cost(n_steps);
            if cost > config.mc.cap {
                return Err(Error::BudgetExceeded {
                    requested: cost,
                    cap: config.mc.cap,
                });
            }
        }
        SplittingMode::Nn => {
            plan.validate(problem.base.d)?;
            if config.fit_initial {
                let phi = |y: &[f64]| problem.base.phi.eval(y);
                let task = RegressionTask {
                    domain: problem.base.domain.inflate(
                        config.inflation * state.sigma() * (n_steps as f64).sqrt(),
                    ),
                    scale: 0.0,
                    target: &phi,
                    fingerprint: format!("{}#initial", problem.fingerprint()),
                };
                let init_plan = TrainingPlan {
                    seed: step_seed(plan.seed, n_steps + 1),
                    ..plan.clone()
                };
                state.set_initial_network(train_regression(&task, &init_plan, None)?)?;
            }
            for n in 0..n_steps {
                let warm = config.warm_start && matches!(state.values[n], StepValue::Network(_));
                let step_plan = match (warm, config.warm_steps) {
                    (true, Some(steps)) => plan.with_steps(steps),
                    _ => plan.clone(),
                };
                let net = state.split_step_train(&step_plan, config.inflation, config.warm_start)?;
                let log = net.log.clone();
                log::info!(
                    "splitting step {}/{}: final loss {:.5}",
                    n + 1,
                    n_steps,
                    log.last().map_or(f64::NAN, |r| r.loss_estimate)
                );
                provenance.push(StepRecord {
                    step: n,
                    mode,
                    domain: state.training_domain(n, config.inflation),
                    seed: Some(step_seed(plan.seed, n)),
                    n_inner: None,
                    warm_started: warm,
                    log,
                });
            }
        }
    }
    Ok(SplittingSolution {
        state,
        mode,
        provenance,
        mc_seed: config.mc.seed,
    })
}

impl TrainingPlan {
    /// The same plan with `steps` total steps; decay points scale with it.
    pub fn with_steps(&self, steps: usize) -> Self {
        let mut plan = self.clone();
        let old = self.total_steps.max(1);
        for drop in &mut plan.optimizer.decay {
            drop.at_step = drop.at_step * steps / old;
        }
        plan.total_steps = steps;
        plan
    }
}
