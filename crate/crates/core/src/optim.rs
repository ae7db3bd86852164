//! First-order optimizers for the flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::FlatParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    PlainSgd,
    Adam,
}

/// Multiply the step size by `factor` from step `at_step` on (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDrop {
    pub at_step: usize,
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay: Vec<StepDrop>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay: Vec::new(),
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(step_size: f64) -> Self {
        Self {
            kind: OptimizerKind::PlainSgd,
            step_size,
            ..Self::default()
        }
    }

    /// Adam with x0.1 drops at 60% and 85% of `total_steps`.
    pub fn default_for(total_steps: usize) -> Self {
        Self {
            decay: vec![
                StepDrop {
                    at_step: total_steps * 60 / 100,
                    factor: 0.1,
                },
                StepDrop {
                    at_step: total_steps * 85 / 100,
                    factor: 0.1,
                },
            ],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidArgument(format!("optimizer {what} out of range: {v}")))
        };
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size", self.step_size);
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) {
            return bad("beta1", self.beta1);
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta2", self.beta2);
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", self.epsilon);
        }
        for drop in &self.decay {
            if !(drop.factor > 0.0 && drop.factor.is_finite()) {
                return bad("decay factor", drop.factor);
            }
        }
        Ok(())
    }

    /// Step size in effect at 0-based step `step`.
    pub fn step_size_at(&self, step: usize) -> f64 {
        self.decay
            .iter()
            .filter(|d| step >= d.at_step)
            .fold(self.step_size, |eta, d| eta * d.factor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step_index: usize,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(config: &OptimizerConfig, n_params: usize) -> Self {
        let moments = match config.kind {
            OptimizerKind::PlainSgd => 0,
            OptimizerKind::Adam => n_params,
        };
        Self {
            step_index: 0,
            first_moment: vec![0.0; moments],
            second_moment: vec![0.0; moments],
        }
    }
}

/// Applies one update to `params` in place.
pub fn step(
    params: &mut FlatParams,
    grad: &[f64],
    state: &mut OptimizerState,
    config: &OptimizerConfig,
) -> Result<()> {
    if grad.len() != params.len() {
        return Err(Error::Dimension {
            expected: params.len(),
            actual: grad.len(),
            context: "gradient length",
        });
    }
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            index,
            value: grad[index],
        });
    }
    let eta = config.step_size_at(state.step_index);
    let theta = params.theta_mut();
    match config.kind {
        OptimizerKind::PlainSgd => {
            for (t, g) in theta.iter_mut().zip(grad) {
                *t -= eta * g;
            }
        }
        OptimizerKind::Adam => {
            if state.first_moment.len() != theta.len() {
                return Err(Error::Dimension {
                    expected: theta.len(),
                    actual: state.first_moment.len(),
                    context: "adam moment length",
                });
            }
            let t = (state.step_index + 1) as i32;
            let (b1, b2) = (config.beta1, config.beta2);
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            for (((th, g), m), v) in theta
                .iter_mut()
                .zip(grad)
                .zip(state.first_moment.iter_mut())
                .zip(state.second_moment.iter_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *th -= eta * m_hat / (v_hat.sqrt() + config.epsilon);
            }
        }
    }
    state.step_index += 1;
    Ok(())
}
