//! Unrolled complex-valued S-LISTA network.
//!
//! Layer `t` computes `b_t = S_{α_t}(W1_t y + conv(k_t, b_{t−1}))` with
//! `b_0 = 0`. `W1_t` is a dense `L × N` matrix (the 1x1 convolution) and
//! `k_t` an M-dimensional "same" convolution kernel over the `L_1 × … × L_M`
//! grid.

mod backward;
mod checkpoint;
mod conv;
mod train;

pub use backward::{backward, batch_gradients, Gradients, LayerGradients};
pub use conv::{complex_conv_same, ConvPlan};
pub use train::{train_adam, Adam, TrainConfig};

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledRecord;
use crate::error::{invalid, Error, Result};
use crate::linalg::{norm1, CMatrix, C64};
use crate::signal::{steering_vector, Dictionary};
use crate::solvers::{power_iteration_eta, soft_threshold};

/// Default kernel length for `L = 128` grids.
pub const DEFAULT_KERNEL_LEN: usize = 33;

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn softplus_inverse(y: f64) -> f64 {
    let y = y.max(1e-300);
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlistaLayer {
    pub w1: CMatrix,
    pub kernel: Vec<C64>,
    /// Unconstrained threshold parameter, `α = softplus(alpha_raw)`.
    pub alpha_raw: f64,
}

impl SlistaLayer {
    pub fn alpha(&self) -> f64 {
        softplus(self.alpha_raw)
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha_raw = softplus_inverse(alpha);
    }
}

#[derive(Clone, Debug)]
pub struct SlistaModel {
    sensor_counts: Vec<usize>,
    grid_counts: Vec<usize>,
    kernel_len: usize,
    pub layers: Vec<SlistaLayer>,
    plan: ConvPlan,
}

impl PartialEq for SlistaModel {
    fn eq(&self, other: &Self) -> bool {
        self.sensor_counts == other.sensor_counts
            && self.grid_counts == other.grid_counts
            && self.kernel_len == other.kernel_len
            && self.layers == other.layers
    }
}

/// Per-layer intermediates of a forward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForwardTrace {
    pub pre_activations: Vec<Vec<C64>>,
    pub outputs: Vec<Vec<C64>>,
}

impl SlistaModel {
    pub fn new(
        sensor_counts: Vec<usize>,
        grid_counts: Vec<usize>,
        kernel_len: usize,
        layers: Vec<SlistaLayer>,
    ) -> Result<Self> {
        if sensor_counts.is_empty() || sensor_counts.len() != grid_counts.len() {
            return Err(Error::Shape("sensor/grid dimension mismatch".into()));
        }
        if layers.is_empty() {
            return invalid("model needs at least one layer");
        }
        let n: usize = sensor_counts.iter().product();
        let l: usize = grid_counts.iter().product();
        let plan = ConvPlan::new(&grid_counts, kernel_len)?;
        for (t, layer) in layers.iter().enumerate() {
            if layer.w1.rows() != l || layer.w1.cols() != n {
                return Err(Error::Shape(format!(
                    "layer {t}: W1 is {}x{}, expected {l}x{n}",
                    layer.w1.rows(),
                    layer.w1.cols()
                )));
            }
            if layer.kernel.len() != plan.kernel_size() {
                return Err(Error::Shape(format!(
                    "layer {t}: kernel has {} taps, expected {}",
                    layer.kernel.len(),
                    plan.kernel_size()
                )));
            }
        }
        Ok(Self {
            sensor_counts,
            grid_counts,
            kernel_len,
            layers,
            plan,
        })
    }

    /// Unrolls FISTA (without momentum): `W1 = η⁻¹Aᴴ`, kernel = central
    /// `kernel_len` taps of the Toeplitz generator of `I − η⁻¹AᴴA`,
    /// `α = λ/η`. Requires a grid whose per-dimension Gram is Toeplitz.
    pub fn init_from_fista(
        dict: &Dictionary,
        layers: usize,
        kernel_len: usize,
        lambda: f64,
    ) -> Result<Self> {
        if layers == 0 {
            return invalid("model needs at least one layer");
        }
        let grid_counts = dict.grid_counts();
        let max_l = *grid_counts.iter().max().expect("nonempty");
        if kernel_len % 2 == 0 || kernel_len > 2 * max_l - 1 {
            return invalid(format!(
                "kernel length {kernel_len} must be odd and at most {}",
                2 * max_l - 1
            ));
        }
        let eta = power_iteration_eta(dict.matrix())?;
        let generators = dict
            .grids()
            .iter()
            .zip(dict.sensor_counts())
            .enumerate()
            .map(|(m, (g, &n))| toeplitz_generator(g, n, m))
            .collect::<Result<Vec<_>>>()?;

        let mut w1 = dict.matrix().adjoint();
        w1.scale(1.0 / eta);
        let plan = ConvPlan::new(&grid_counts, kernel_len)?;
        let center = kernel_len / 2;
        let kernel: Vec<C64> = (0..plan.kernel_size())
            .map(|j| {
                let taps = crate::linalg::unravel(j, &vec![kernel_len; grid_counts.len()]);
                let mut g = C64::new(1.0, 0.0);
                let mut is_center = true;
                for (m, &tap) in taps.iter().enumerate() {
                    let d = tap as isize - center as isize;
                    is_center &= d == 0;
                    g *= generators[m].get(d);
                }
                let delta = if is_center { 1.0 } else { 0.0 };
                C64::new(delta, 0.0) - g / eta
            })
            .collect();
        let mut layer = SlistaLayer {
            w1,
            kernel,
            alpha_raw: 0.0,
        };
        layer.set_alpha(lambda / eta);
        Self::new(
            dict.sensor_counts().to_vec(),
            grid_counts,
            kernel_len,
            vec![layer; layers],
        )
    }

    pub fn sensor_counts(&self) -> &[usize] {
        &self.sensor_counts
    }

    pub fn grid_counts(&self) -> &[usize] {
        &self.grid_counts
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel_len
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_sensors(&self) -> usize {
        self.sensor_counts.iter().product()
    }

    pub fn num_atoms(&self) -> usize {
        self.grid_counts.iter().product()
    }

    pub fn plan(&self) -> &ConvPlan {
        &self.plan
    }

    /// Forward pass with an arbitrary per-layer activation in place of the
    /// soft-threshold; `activation(t, pre)` maps layer `t`'s pre-activation.
    pub fn forward_with<F>(&self, y: &[C64], mut activation: F) -> (Vec<C64>, ForwardTrace)
    where
        F: FnMut(usize, &[C64]) -> Vec<C64>,
    {
        assert_eq!(y.len(), self.num_sensors(), "measurement length");
        let mut trace = ForwardTrace::default();
        let mut b = vec![C64::new(0.0, 0.0); self.num_atoms()];
        for (t, layer) in self.layers.iter().enumerate() {
            let mut pre = layer.w1.matvec(y);
            if t > 0 {
                self.plan.accumulate(&layer.kernel, &b, &mut pre);
            }
            b = activation(t, &pre);
            trace.pre_activations.push(pre);
            trace.outputs.push(b.clone());
        }
        (b, trace)
    }

    pub fn forward(&self, y: &[C64]) -> (Vec<C64>, ForwardTrace) {
        self.forward_with(y, |t, pre| soft_threshold(pre, self.layers[t].alpha()))
    }

    pub fn infer(&self, y: &[C64]) -> Vec<C64> {
        self.forward(y).0
    }
}

/// `G[i, j] = g(i − j)` for the Gram of one dimension's steering matrix.
struct Generator {
    values: Vec<C64>,
    offset: isize,
}

impl Generator {
    fn get(&self, d: isize) -> C64 {
        let i = d + self.offset;
        if i < 0 || i as usize >= self.values.len() {
            C64::new(0.0, 0.0)
        } else {
            self.values[i as usize]
        }
    }
}

fn toeplitz_generator(grid: &[f64], sensors: usize, dim: usize) -> Result<Generator> {
    let cols: Vec<Vec<C64>> = grid.iter().map(|&xi| steering_vector(xi, sensors)).collect();
    let l = cols.len();
    let gram = |i: usize, j: usize| -> C64 {
        cols[i]
            .iter()
            .zip(&cols[j])
            .map(|(a, b)| a.conj() * b)
            .sum()
    };
    let offset = l as isize - 1;
    let values: Vec<C64> = (-(offset)..=offset)
        .map(|d| if d >= 0 { gram(d as usize, 0) } else { gram(0, (-d) as usize) })
        .collect();
    let tol = 1e-9 * sensors as f64;
    for i in 0..l {
        for j in 0..l {
            let d = i as isize - j as isize;
            if (gram(i, j) - values[(d + offset) as usize]).norm() > tol {
                return Err(Error::NotToeplitz { dim });
            }
        }
    }
    Ok(Generator { values, offset })
}

/// `‖b − b̂‖₁ / ‖b‖₁` with complex-modulus ℓ1.
pub fn relative_l1(label: &[C64], estimate: &[C64]) -> Result<f64> {
    let denom = norm1(label);
    if denom == 0.0 {
        return invalid("relative l1 loss needs a nonzero label");
    }
    let num: f64 = label.iter().zip(estimate).map(|(a, b)| (a - b).norm()).sum();
    Ok(num / denom)
}

/// Batch mean of [`relative_l1`].
pub fn relative_l1_loss(labels: &[&[C64]], estimates: &[&[C64]]) -> Result<f64> {
    if labels.is_empty() || labels.len() != estimates.len() {
        return invalid("loss needs equally many labels and estimates");
    }
    let mut total = 0.0;
    for (b, bh) in labels.iter().zip(estimates) {
        total += relative_l1(b, bh)?;
    }
    Ok(total / labels.len() as f64)
}

/// Per-layer bound `margin · max |Re|, |Im|` of the pre-activations over
/// the records; the square `[−R_t, R_t]²` is the domain later fitted by FS
/// neurons.
pub fn calibrate_activation_bounds(model: &SlistaModel, records: &[LabeledRecord], margin: f64) -> Vec<f64> {
    let mut bounds = vec![0.0f64; model.num_layers()];
    for r in records {
        let (_, trace) = model.forward(&r.y);
        for (bound, pre) in bounds.iter_mut().zip(&trace.pre_activations) {
            *bound = pre
                .iter()
                .fold(*bound, |acc, v| acc.max(v.re.abs()).max(v.im.abs()));
        }
    }
    bounds.into_iter().map(|b| margin * b).collect()
}
