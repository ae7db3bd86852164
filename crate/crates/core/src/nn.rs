//! Fully connected ReLU networks stored as a single flat parameter vector.
//!
//! Layer `i` (1-based, `i = 1..=L`) owns the block `theta[off_i .. off_{i+1}]`
//! where `off_i = sum_{k<i} l_k (l_{k-1} + 1)`. Inside a block the weight
//! matrix comes first in row-major order, then the bias: the 1-based entry
//! `(r, c)` of the weight matrix sits at `off_i + (r-1) l_{i-1} + c` and bias
//! `r` at `off_i + l_i l_{i-1} + r`. Translated to 0-based storage that is
//! `theta[off_i + r * l_{i-1} + c]` and `theta[off_i + l_i l_{i-1} + r]`.
//! The ReLU is applied after every affine map except the last.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::stats::pairwise_reduce;

/// Layer sizes `(l_0, ..., l_L)` with `L >= 2`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct NetworkArchitecture {
    layers: Vec<usize>,
}

impl NetworkArchitecture {
    pub fn new(layers: Vec<usize>) -> Result<Self> {
        if layers.len() < 3 {
            return Err(Error::Architecture(format!(
                "depth L = {} but at least 2 affine layers are required",
                layers.len().saturating_sub(1)
            )));
        }
        if let Some(k) = layers.iter().position(|&l| l == 0) {
            return Err(Error::Architecture(format!("layer {k} has size 0")));
        }
        Ok(Self { layers })
    }

    /// `(input, hidden..., 1)`.
    pub fn scalar(input: usize, hidden: &[usize]) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 2);
        layers.push(input);
        layers.extend_from_slice(hidden);
        layers.push(1);
        Self::new(layers)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layers
    }

    /// Number of affine layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layers.last().unwrap()
    }

    pub fn offsets(&self) -> Vec<usize> {
        cumulative_offsets(&self.layers)
    }

    pub fn param_count(&self) -> usize {
        *self.offsets().last().unwrap()
    }

    fn widest(&self) -> usize {
        *self.layers.iter().max().unwrap()
    }
}

impl TryFrom<Vec<usize>> for NetworkArchitecture {
    type Error = Error;

    fn try_from(layers: Vec<usize>) -> Result<Self> {
        Self::new(layers)
    }
}

impl From<NetworkArchitecture> for Vec<usize> {
    fn from(a: NetworkArchitecture) -> Self {
        a.layers
    }
}

/// Offsets `(d_1, ..., d_{L+1})` for arbitrary layer sizes, with no depth check.
pub fn cumulative_offsets(layers: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(layers.len());
    let mut acc = 0;
    out.push(acc);
    for w in layers.windows(2) {
        acc += w[1] * (w[0] + 1);
        out.push(acc);
    }
    out
}

pub fn param_offsets(arch: &NetworkArchitecture) -> Vec<usize> {
    arch.offsets()
}

pub fn param_count(arch: &NetworkArchitecture) -> usize {
    arch.param_count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatParams {
    arch: NetworkArchitecture,
    theta: Vec<f64>,
}

impl FlatParams {
    pub fn new(arch: NetworkArchitecture, theta: Vec<f64>) -> Result<Self> {
        let expected = arch.param_count();
        if theta.len() != expected {
            return Err(Error::Dimension {
                expected,
                actual: theta.len(),
                context: "parameter vector length",
            });
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "parameter {i} is not finite ({})",
                theta[i]
            )));
        }
        Ok(Self { arch, theta })
    }

    pub fn zeros(arch: NetworkArchitecture) -> Self {
        let n = arch.param_count();
        Self {
            arch,
            theta: vec![0.0; n],
        }
    }

    /// Weights of layer `i` uniform on `[-s, s]` with `s = sqrt(6 / (l_{i-1} + l_i))`,
    /// biases zero. Weight `j` of the whole vector uses word `j` of `stream`.
    pub fn init_uniform(arch: NetworkArchitecture, stream: RandomStream) -> Self {
        let mut params = Self::zeros(arch);
        let offsets = params.arch.offsets();
        let sizes = params.arch.layers.clone();
        for i in 1..sizes.len() {
            let (fan_in, fan_out) = (sizes[i - 1], sizes[i]);
            let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let start = offsets[i - 1];
            for j in start..start + fan_in * fan_out {
                let u = stream.at(j as u64).next_open01();
                params.theta[j] = scale * (2.0 * u - 1.0);
            }
        }
        params
    }

    pub fn architecture(&self) -> &NetworkArchitecture {
        &self.arch
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut scratch = Scratch::new(&self.arch);
        Ok(self.forward_into(x, &mut scratch).to_vec())
    }

    /// Scalar output of a network with `l_L = 1`.
    pub fn eval_scalar(&self, x: &[f64], scratch: &mut Scratch) -> f64 {
        debug_assert_eq!(self.arch.output_dim(), 1);
        self.forward_into(x, scratch)[0]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim() {
            return Err(Error::Dimension {
                expected: self.arch.input_dim(),
                actual: x.len(),
                context: "network input",
            });
        }
        Ok(())
    }

    /// Forward pass reusing `scratch`; returns the output slice.
    pub fn forward_into<'s>(&self, x: &[f64], scratch: &'s mut Scratch) -> &'s [f64] {
        let sizes = &self.arch.layers;
        let depth = sizes.len() - 1;
        let Scratch { a, b, .. } = scratch;
        a[..sizes[0]].copy_from_slice(x);
        let mut off = 0;
        let (mut cur, mut next) = (a, b);
        for i in 1..=depth {
            let (n_in, n_out) = (sizes[i - 1], sizes[i]);
            let w = &self.theta[off..off + n_in * n_out];
            let bias = &self.theta[off + n_in * n_out..off + n_in * n_out + n_out];
            affine(w, bias, &cur[..n_in], &mut next[..n_out]);
            if i < depth {
                for v in &mut next[..n_out] {
                    *v = v.max(0.0);
                }
            }
            off += n_out * (n_in + 1);
            std::mem::swap(&mut cur, &mut next);
        }
        &cur[..sizes[depth]]
    }

    /// Adds the gradient of `scale * (y - N(x))^2` to `grad` and returns the
    /// residual `y - N(x)`.
    fn accumulate_grad(&self, x: &[f64], y: f64, scale: f64, tape: &mut Tape, grad: &mut [f64]) -> f64 {
        let sizes = &self.arch.layers;
        let depth = sizes.len() - 1;
        let offsets = &tape.offsets;
        // Forward, keeping every post-activation.
        tape.acts[0][..sizes[0]].copy_from_slice(x);
        for i in 1..=depth {
            let (n_in, n_out) = (sizes[i - 1], sizes[i]);
            let off = offsets[i - 1];
            let w = &self.theta[off..off + n_in * n_out];
            let bias = &self.theta[off + n_in * n_out..offsets[i]];
            let (prev, rest) = tape.acts.split_at_mut(i);
            let out = &mut rest[0][..n_out];
            affine(w, bias, &prev[i - 1][..n_in], out);
            if i < depth {
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        let residual = y - tape.acts[depth][0];
        // delta holds dLoss/d(pre-activation) of the current layer.
        tape.delta[0] = -2.0 * scale * residual;
        for i in (1..=depth).rev() {
            let (n_in, n_out) = (sizes[i - 1], sizes[i]);
            let off = offsets[i - 1];
            let input = &tape.acts[i - 1][..n_in];
            {
                let (gw, gb) = grad[off..offsets[i]].split_at_mut(n_in * n_out);
                for r in 0..n_out {
                    let dr = tape.delta[r];
                    if dr == 0.0 {
                        continue;
                    }
                    gb[r] += dr;
                    let row = &mut gw[r * n_in..(r + 1) * n_in];
                    for (g, &xi) in row.iter_mut().zip(input) {
                        *g += dr * xi;
                    }
                }
            }
            if i > 1 {
                let w = &self.theta[off..off + n_in * n_out];
                let back = &mut tape.back[..n_in];
                back.fill(0.0);
                for r in 0..n_out {
                    let dr = tape.delta[r];
                    if dr == 0.0 {
                        continue;
                    }
                    for (bk, &wk) in back.iter_mut().zip(&w[r * n_in..(r + 1) * n_in]) {
                        *bk += dr * wk;
                    }
                }
                // ReLU derivative, taken as 0 at the kink.
                for (k, bk) in back.iter().enumerate() {
                    tape.delta[k] = if input[k] > 0.0 { *bk } else { 0.0 };
                }
            }
        }
        residual
    }

    /// Mean squared loss over `batch` and its exact gradient in `theta`.
    pub fn loss_and_grad(&self, batch: &[(Vec<f64>, f64)]) -> Result<(f64, Vec<f64>)> {
        let xs: Vec<&[f64]> = batch.iter().map(|(x, _)| x.as_slice()).collect();
        let ys: Vec<f64> = batch.iter().map(|(_, y)| *y).collect();
        self.batch_loss_and_grad(&xs, &ys)
    }

    /// Same as [`Self::loss_and_grad`] on split inputs. Work is divided into
    /// fixed chunks reduced pairwise, so the result does not depend on the
    /// number of worker threads.
    pub fn batch_loss_and_grad(&self, xs: &[&[f64]], ys: &[f64]) -> Result<(f64, Vec<f64>)> {
        if self.arch.output_dim() != 1 {
            return Err(Error::Dimension {
                expected: 1,
                actual: self.arch.output_dim(),
                context: "squared loss needs a scalar output",
            });
        }
        if xs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if xs.len() != ys.len() {
            return Err(Error::Dimension {
                expected: xs.len(),
                actual: ys.len(),
                context: "batch targets",
            });
        }
        for x in xs {
            self.check_input(x)?;
        }
        let m = xs.len();
        let scale = 1.0 / m as f64;
        let n_chunks = m.div_ceil(GRAD_CHUNK);
        let partials: Vec<(f64, Vec<f64>)> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut tape = Tape::new(&self.arch);
                let mut grad = vec![0.0; self.theta.len()];
                let mut loss = 0.0;
                for j in c * GRAD_CHUNK..((c + 1) * GRAD_CHUNK).min(m) {
                    let r = self.accumulate_grad(xs[j], ys[j], scale, &mut tape, &mut grad);
                    loss += r * r;
                }
                (loss, grad)
            })
            .collect();
        let (loss, grad) = pairwise_reduce(partials, |(la, mut ga), (lb, gb)| {
            for (a, b) in ga.iter_mut().zip(&gb) {
                *a += b;
            }
            (la + lb, ga)
        })
        .expect("non-empty batch");
        Ok((loss * scale, grad))
    }
}

const GRAD_CHUNK: usize = 32;

#[inline]
fn affine(w: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * n_in..(r + 1) * n_in];
        let mut s = bias[r];
        for (wi, xi) in row.iter().zip(x) {
            s += wi * xi;
        }
        *o = s;
    }
}

/// Reusable buffers for forward passes.
#[derive(Clone, Debug)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Scratch {
    pub fn new(arch: &NetworkArchitecture) -> Self {
        let w = arch.widest();
        Self {
            a: vec![0.0; w],
            b: vec![0.0; w],
        }
    }
}

struct Tape {
    offsets: Vec<usize>,
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    back: Vec<f64>,
}

impl Tape {
    fn new(arch: &NetworkArchitecture) -> Self {
        let w = arch.widest();
        Self {
            offsets: arch.offsets(),
            acts: arch.layers.iter().map(|&l| vec![0.0; l]).collect(),
            delta: vec![0.0; w],
            back: vec![0.0; w],
        }
    }
}

/// The function computed by a parameter vector.
#[derive(Clone, Debug)]
pub struct Realization {
    params: FlatParams,
}

impl Realization {
    pub fn input_dim(&self) -> usize {
        self.params.arch.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.params.arch.output_dim()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.params.forward(x)
    }
}

pub fn realize(params: &FlatParams) -> Realization {
    Realization {
        params: params.clone(),
    }
}
