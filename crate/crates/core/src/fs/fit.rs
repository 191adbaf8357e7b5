//! Fitting FS neurons to a complex activation on a square domain by
//! full-batch gradient descent with a triangular surrogate for `Θ'`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{heaviside, surrogate_step_gradient, FsChannel, FsNeuronParams};
use crate::error::{invalid, Error, Result};
use crate::linalg::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMode {
    Grid,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FsFitConfig {
    /// Number of domain samples `B`.
    pub samples: usize,
    /// Domain is `[−R, R]²`.
    pub bound: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub stop_loss: f64,
    pub gamma: f64,
    pub mode: SampleMode,
    pub seed: u64,
}

impl Default for FsFitConfig {
    fn default() -> Self {
        Self {
            samples: 41 * 41,
            bound: 1.0,
            learning_rate: 0.009,
            max_iters: 10_000,
            stop_loss: 5e-4,
            gamma: 0.5,
            mode: SampleMode::Grid,
            seed: 0,
        }
    }
}

/// `B` points of `[−R, R]²`: a `√B × √B` lattice including the corners, or
/// i.i.d. uniform draws.
pub fn sample_domain(bound: f64, samples: usize, mode: SampleMode, seed: u64) -> Result<Vec<C64>> {
    if samples == 0 {
        return invalid("need at least one sample");
    }
    if !(bound >= 0.0) {
        return invalid(format!("domain bound {bound} must be nonnegative"));
    }
    match mode {
        SampleMode::Grid => {
            let n = (samples as f64).sqrt().round() as usize;
            if n * n != samples {
                return invalid(format!("grid sampling needs a square count, got {samples}"));
            }
            let axis: Vec<f64> = if n == 1 {
                vec![0.0]
            } else {
                (0..n)
                    .map(|i| -bound + 2.0 * bound * i as f64 / (n - 1) as f64)
                    .collect()
            };
            Ok(axis
                .iter()
                .flat_map(|&re| axis.iter().map(move |&im| C64::new(re, im)))
                .collect())
        }
        SampleMode::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..samples)
                .map(|_| {
                    let u: f64 = rng.gen();
                    let v: f64 = rng.gen();
                    C64::new(bound * (2.0 * u - 1.0), bound * (2.0 * v - 1.0))
                })
                .collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FsFit {
    pub params: FsNeuronParams,
    /// Mean `|f(s) − f̂(s)|²` over the samples for `params`.
    pub loss: f64,
    /// Best-so-far loss after each iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Gradient of one channel's mean squared error; returns the loss term.
struct ChannelGrad {
    d: Vec<f64>,
    h: Vec<f64>,
    threshold: Vec<f64>,
}

fn channel_loss_and_grad(
    ch: &FsChannel,
    inputs: &[f64],
    targets: &[f64],
    gamma: f64,
    grad: &mut ChannelGrad,
    membranes: &mut [f64],
    spikes: &mut [bool],
) -> f64 {
    let k = ch.len();
    let scale = 1.0 / inputs.len() as f64;
    grad.d.iter_mut().for_each(|g| *g = 0.0);
    grad.h.iter_mut().for_each(|g| *g = 0.0);
    grad.threshold.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for (&x, &target) in inputs.iter().zip(targets) {
        let mut v = x;
        let mut out = 0.0;
        for t in 0..k {
            membranes[t] = v;
            let z = heaviside(v - ch.threshold[t]);
            spikes[t] = z;
            if z {
                v -= ch.h[t];
                out += ch.d[t];
            }
        }
        let err = out - target;
        loss += err * err * scale;
        let g_out = 2.0 * err * scale;
        // reverse sweep; g_v carries ∂L/∂v(t+1)
        let mut g_v = 0.0;
        for t in (0..k).rev() {
            let z = if spikes[t] { 1.0 } else { 0.0 };
            grad.d[t] += g_out * z;
            grad.h[t] -= g_v * z;
            let g_z = g_out * ch.d[t] - g_v * ch.h[t];
            let sg = surrogate_step_gradient(membranes[t] - ch.threshold[t], gamma);
            grad.threshold[t] -= g_z * sg;
            g_v += g_z * sg;
        }
    }
    loss
}

fn descend(ch: &mut FsChannel, g: &ChannelGrad, lr: f64) {
    for t in 0..ch.len() {
        ch.d[t] -= lr * g.d[t];
        ch.h[t] -= lr * g.h[t];
        ch.threshold[t] -= lr * g.threshold[t];
    }
}

/// Minimizes the mean of `|f(s_i) − f̂(s_i)|²` over the sampled domain.
/// Starts from the signed binary ladder and returns the best iterate seen.
pub fn fs_fit<F>(target: F, config: &FsFitConfig, k: usize) -> Result<FsFit>
where
    F: Fn(C64) -> C64,
{
    fs_fit_from(target, config, FsNeuronParams::ladder(k, config.bound.max(1e-12)))
}

pub fn fs_fit_from<F>(target: F, config: &FsFitConfig, init: FsNeuronParams) -> Result<FsFit>
where
    F: Fn(C64) -> C64,
{
    let k = init.k();
    if k == 0 {
        return invalid("K must be positive");
    }
    if config.samples < k {
        return invalid(format!("need at least K = {k} samples, got {}", config.samples));
    }
    if !(config.bound > 0.0) {
        return invalid("domain bound must be positive");
    }
    if !(config.gamma > 0.0) || !(config.learning_rate > 0.0) || config.max_iters == 0 {
        return invalid("gamma, learning rate and iteration budget must be positive");
    }
    let points = sample_domain(config.bound, config.samples, config.mode, config.seed)?;
    fs_fit_points(target, &points, config, init)
}

/// Fits on explicit sample points; `samples`, `bound`, `mode` and `seed`
/// of `config` are ignored.
pub fn fs_fit_points<F>(target: F, points: &[C64], config: &FsFitConfig, init: FsNeuronParams) -> Result<FsFit>
where
    F: Fn(C64) -> C64,
{
    let k = init.k();
    if points.len() < k {
        return invalid(format!("need at least K = {k} samples, got {}", points.len()));
    }
    if !(config.gamma > 0.0) || !(config.learning_rate > 0.0) || config.max_iters == 0 {
        return invalid("gamma, learning rate and iteration budget must be positive");
    }
    let values: Vec<C64> = points.iter().map(|&s| target(s)).collect();
    if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite {
            context: "target function on the sampled domain".into(),
        });
    }
    let xs_re: Vec<f64> = points.iter().map(|s| s.re).collect();
    let xs_im: Vec<f64> = points.iter().map(|s| s.im).collect();
    let ys_re: Vec<f64> = values.iter().map(|s| s.re).collect();
    let ys_im: Vec<f64> = values.iter().map(|s| s.im).collect();

    let mut params = init;
    let new_grad = || ChannelGrad {
        d: vec![0.0; k],
        h: vec![0.0; k],
        threshold: vec![0.0; k],
    };
    let (mut g_re, mut g_im) = (new_grad(), new_grad());
    let mut membranes = vec![0.0; k];
    let mut spikes = vec![false; k];

    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut trace = Vec::with_capacity(config.max_iters);
    let mut iterations = 0;
    while iterations < config.max_iters {
        let loss = channel_loss_and_grad(
            &params.re,
            &xs_re,
            &ys_re,
            config.gamma,
            &mut g_re,
            &mut membranes,
            &mut spikes,
        ) + channel_loss_and_grad(
            &params.im,
            &xs_im,
            &ys_im,
            config.gamma,
            &mut g_im,
            &mut membranes,
            &mut spikes,
        );
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: format!("FS fit iteration {iterations}"),
            });
        }
        if loss < best_loss {
            best_loss = loss;
            best = params.clone();
        }
        trace.push(best_loss);
        if best_loss < config.stop_loss {
            break;
        }
        descend(&mut params.re, &g_re, config.learning_rate);
        descend(&mut params.im, &g_im, config.learning_rate);
        iterations += 1;
    }
    Ok(FsFit {
        params: best,
        loss: best_loss,
        trace,
        iterations,
    })
}

/// Mean `|f(s) − f̂(s)|²` over given points.
pub fn mean_fit_error<F: Fn(C64) -> C64>(params: &FsNeuronParams, target: F, points: &[C64]) -> f64 {
    points
        .iter()
        .map(|&s| (target(s) - params.apply(s)).norm_sqr())
        .sum::<f64>()
        / points.len() as f64
}
