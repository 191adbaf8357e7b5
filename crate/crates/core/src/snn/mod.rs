//! Conversion of a trained S-LISTA network into a Few-Spikes spiking
//! network and a discrete-time simulator for it.
//!
//! Population `t` (`t = 0` is the input `y`, `t = 1..=T` hold `b_t`)
//! receives during `[2Kt, 2Kt + K)` and sends during `[2Kt + K, 2Kt + 2K)`
//! of the cycle that starts when its input is injected. Every projection has
//! delay `K`, so spikes sent by population `t − 1` land in the receive stage
//! of population `t`. The input `y` is encoded once and replicated `T` times
//! at offsets `2Kt`; replica `r` feeds the dense projection into layer
//! `r + 1`.

mod quantize;
mod simulate;
mod trace;

pub use quantize::{quantize_int4, QuantizedPlane, QuantizedTensor, INT4_MAX};
pub use simulate::{simulate, simulate_stream, Injection, SimulationOutput, Simulator};
pub use trace::{decode_output, read_trace_csv, write_trace_csv};

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{io_err, LabeledRecord};
use crate::error::{invalid, Error, Result};
use crate::fs::{fs_fit, fs_fit_points, FsFitConfig, FsNeuronParams, Target};
use crate::linalg::C64;
use crate::slista::{calibrate_activation_bounds, SlistaModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Re,
    Im,
}

impl Part {
    pub fn as_str(&self) -> &'static str {
        match self {
            Part::Re => "re",
            Part::Im => "im",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpikeRecord {
    pub population: usize,
    pub neuron: usize,
    pub part: Part,
    pub timestep: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub id: usize,
    pub size: usize,
    pub fs: FsNeuronParams,
    /// First timestep of the receive stage within a cycle.
    pub stage_offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Topology {
    /// Row-major `target × source` matrix.
    Dense { rows: usize, cols: usize },
    /// "Same" convolution over the target grid.
    Convolutional { shape: Vec<usize>, kernel_len: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Weights {
    Exact(Vec<C64>),
    Quantized(QuantizedTensor),
}

impl Weights {
    pub fn effective(&self) -> Vec<C64> {
        match self {
            Weights::Exact(w) => w.clone(),
            Weights::Quantized(q) => q.dequantize(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub source: usize,
    pub target: usize,
    pub topology: Topology,
    pub weights: Weights,
    pub delay: usize,
    /// For projections out of the input population: which replica of the
    /// encoded input this projection carries.
    pub input_replica: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikingNetwork {
    pub k: usize,
    pub layers: usize,
    pub populations: Vec<Population>,
    pub projections: Vec<Projection>,
    /// Timesteps one input needs from injection to the last send stage.
    pub horizon: usize,
    /// Population id to processing-element index; informational only.
    pub placement: Vec<usize>,
}

impl SpikingNetwork {
    pub fn cycle(&self) -> usize {
        2 * self.k
    }

    pub fn input(&self) -> &Population {
        &self.populations[0]
    }

    pub fn output(&self) -> &Population {
        &self.populations[self.layers]
    }

    /// Receive window of population `id` for an input injected at `start`.
    pub fn receive_window(&self, id: usize, start: usize) -> std::ops::Range<usize> {
        let s = start + self.populations[id].stage_offset;
        s..s + self.k
    }

    /// Send window of population `id` for an input injected at `start`.
    pub fn send_window(&self, id: usize, start: usize) -> std::ops::Range<usize> {
        let s = start + self.populations[id].stage_offset + self.k;
        s..s + self.k
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(io_err(path))?;
        serde_json::to_writer(BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(io_err(path))?;
        serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// Builds the spiking network for `model`: an input population of size N
/// using `fs_input`, one population of size L per layer using
/// `fs_layers[t]`, dense `W1_t` projections from the input and
/// convolutional `W2_t` projections between consecutive layers. Layer 1
/// has no `W2` projection since `b_0 = 0`.
pub fn convert_slista_to_snn(
    model: &SlistaModel,
    fs_input: &FsNeuronParams,
    fs_layers: &[FsNeuronParams],
    quantize: bool,
) -> Result<SpikingNetwork> {
    let t_layers = model.num_layers();
    if fs_layers.len() != t_layers {
        return invalid(format!(
            "{} FS parameter sets for {t_layers} layers",
            fs_layers.len()
        ));
    }
    let k = fs_input.k();
    if let Some(bad) = fs_layers.iter().find(|p| p.k() != k) {
        return invalid(format!("FS parameter sets disagree on K ({} vs {k})", bad.k()));
    }
    let n = model.num_sensors();
    let l = model.num_atoms();
    let weights = |w: &[C64]| {
        if quantize {
            Weights::Quantized(quantize_int4(w))
        } else {
            Weights::Exact(w.to_vec())
        }
    };

    let mut populations = vec![Population {
        id: 0,
        size: n,
        fs: fs_input.clone(),
        stage_offset: 0,
    }];
    let mut projections = Vec::new();
    for (i, (layer, fs)) in model.layers.iter().zip(fs_layers).enumerate() {
        let t = i + 1;
        populations.push(Population {
            id: t,
            size: l,
            fs: fs.clone(),
            stage_offset: 2 * k * t,
        });
        projections.push(Projection {
            source: 0,
            target: t,
            topology: Topology::Dense { rows: l, cols: n },
            weights: weights(layer.w1.as_slice()),
            delay: k,
            input_replica: Some(i),
        });
        if t > 1 {
            projections.push(Projection {
                source: t - 1,
                target: t,
                topology: Topology::Convolutional {
                    shape: model.grid_counts().to_vec(),
                    kernel_len: model.kernel_len(),
                },
                weights: weights(&layer.kernel),
                delay: k,
                input_replica: None,
            });
        }
    }
    let placement = (0..populations.len()).collect();
    Ok(SpikingNetwork {
        k,
        layers: t_layers,
        populations,
        projections,
        horizon: 2 * k * (t_layers + 1),
        placement,
    })
}

/// FS-encodes `y` with `fs_input` and replicates the spike train `layers`
/// times: a spike at step `τ` of replica `r` is emitted at `K + τ + 2Kr`
/// (the input population's send stage, shifted by whole cycles).
pub fn encode_input_spikes(y: &[C64], fs_input: &FsNeuronParams, layers: usize) -> Vec<SpikeRecord> {
    let k = fs_input.k();
    let mut base = Vec::new();
    for (neuron, &v) in y.iter().enumerate() {
        let r = fs_input.forward(v);
        for (part, spikes) in [(Part::Re, &r.spikes_re), (Part::Im, &r.spikes_im)] {
            for (tau, _) in spikes.iter().enumerate().filter(|(_, z)| **z) {
                base.push(SpikeRecord {
                    population: 0,
                    neuron,
                    part,
                    timestep: k + tau,
                });
            }
        }
    }
    let mut out = Vec::with_capacity(base.len() * layers);
    for replica in 0..layers {
        out.extend(base.iter().map(|s| SpikeRecord {
            timestep: s.timestep + 2 * k * replica,
            ..*s
        }));
    }
    out.sort_by_key(|s| (s.timestep, s.population, s.neuron, s.part));
    out
}

/// Fitted FS activations for a conversion: one identity neuron for the
/// input and one soft-threshold neuron per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConversionActivations {
    pub input: FsNeuronParams,
    pub input_bound: f64,
    pub input_loss: f64,
    pub layers: Vec<FsNeuronParams>,
    pub layer_bounds: Vec<f64>,
    pub layer_losses: Vec<f64>,
}

/// `1.1 · max |Re|, |Im|` of the measurements.
pub fn calibrate_input_bound(records: &[LabeledRecord]) -> f64 {
    1.1 * records
        .iter()
        .flat_map(|r| r.y.iter())
        .fold(0.0f64, |m, v| m.max(v.re.abs()).max(v.im.abs()))
}

/// Headroom of a layer's FS domain over the largest calibrated
/// pre-activation part; unseen inputs beyond the domain saturate.
pub const FS_DOMAIN_MARGIN: f64 = 1.5;

/// Pre-activations of every layer over the calibration records, thinned by
/// an even stride to at most `samples` points per layer.
pub fn calibration_samples(model: &SlistaModel, records: &[LabeledRecord], samples: usize) -> Vec<Vec<C64>> {
    let mut all: Vec<Vec<C64>> = vec![Vec::new(); model.num_layers()];
    for r in records {
        let (_, trace) = model.forward(&r.y);
        for (dst, pre) in all.iter_mut().zip(trace.pre_activations) {
            dst.extend(pre);
        }
    }
    all.into_iter()
        .map(|pts| {
            let stride = pts.len().div_ceil(samples.max(1)).max(1);
            pts.into_iter().step_by(stride).collect()
        })
        .collect()
}

/// Fits `FS_Id` on the calibrated input square and `FS_{S_{α_t}}` on the
/// pre-activations layer `t` actually sees over `calibration`, starting each
/// from the ladder over `FS_DOMAIN_MARGIN` times the largest part seen. `template` supplies the
/// optimizer settings and the per-layer sample budget.
pub fn fit_conversion_activations(
    model: &SlistaModel,
    calibration: &[LabeledRecord],
    k: usize,
    template: &FsFitConfig,
) -> Result<ConversionActivations> {
    if calibration.is_empty() {
        return invalid("calibration set is empty");
    }
    let input_bound = calibrate_input_bound(calibration).max(1e-9);
    let input_cfg = FsFitConfig {
        bound: input_bound,
        ..template.clone()
    };
    let input = fs_fit(|s| Target::Identity.eval(s), &input_cfg, k)?;
    let layer_bounds: Vec<f64> = calibrate_activation_bounds(model, calibration, FS_DOMAIN_MARGIN)
        .into_iter()
        .map(|b| b.max(1e-9))
        .collect();
    let points = calibration_samples(model, calibration, template.samples);
    let mut layers = Vec::with_capacity(model.num_layers());
    let mut layer_losses = Vec::with_capacity(model.num_layers());
    for ((layer, &bound), pts) in model.layers.iter().zip(&layer_bounds).zip(&points) {
        let target = Target::SoftThreshold(layer.alpha());
        let f = fs_fit_points(|s| target.eval(s), pts, template, FsNeuronParams::ladder(k, bound))?;
        layers.push(f.params);
        layer_losses.push(f.loss);
    }
    Ok(ConversionActivations {
        input: input.params,
        input_bound,
        input_loss: input.loss,
        layers,
        layer_bounds,
        layer_losses,
    })
}
