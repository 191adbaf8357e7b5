//! Complex-valued Few-Spikes (FS) neurons.
//!
//! A complex FS neuron is a pair of real FS sub-neurons, one for each part.
//! Over `K` steps a sub-neuron starting from `v(0) = x` emits
//! `z(t) = Θ(v(t) − T(t))`, resets by `v(t+1) = v(t) − h(t) z(t)`, and the
//! decoded output is `Σ_t d(t) z(t)`. The complex output is
//! `Σ d_re z_re + j Σ d_im z_im`.

mod fit;

pub use fit::{fs_fit, fs_fit_from, fs_fit_points, mean_fit_error, sample_domain, FsFit, FsFitConfig, SampleMode};

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::io_err;
use crate::error::{invalid, Error, Result};
use crate::linalg::C64;
use crate::solvers::shrink;

/// Heaviside with `Θ(0) = 0`.
#[inline]
pub fn heaviside(x: f64) -> bool {
    x > 0.0
}

/// Triangular surrogate for `Θ'`: unit area, support `(−γ, γ)`, peak `1/γ`.
#[inline]
pub fn surrogate_step_gradient(x: f64, gamma: f64) -> f64 {
    (1.0 - x.abs() / gamma).max(0.0) / gamma
}

/// Parameters of one real sub-neuron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FsChannel {
    pub d: Vec<f64>,
    pub h: Vec<f64>,
    pub threshold: Vec<f64>,
}

impl FsChannel {
    /// Signed binary ladder on `[−R, R]`: the first step fires for any
    /// input above `−R` and lifts the membrane into `[0, 2R]`; the remaining
    /// steps are a `2R·2^{−t}` binary expansion.
    pub fn ladder(k: usize, bound: f64) -> Self {
        let mut d = Vec::with_capacity(k);
        for t in 0..k {
            d.push(if t == 0 {
                -bound
            } else {
                2.0 * bound * 0.5f64.powi(t as i32)
            });
        }
        Self {
            h: d.clone(),
            threshold: d.clone(),
            d,
        }
    }

    /// Never fires.
    pub fn silent(k: usize) -> Self {
        Self {
            d: vec![0.0; k],
            h: vec![0.0; k],
            threshold: vec![f64::INFINITY; k],
        }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Runs the K-step dynamics from `v(0) = x`, writing spikes to `spikes`.
    pub fn encode_into(&self, x: f64, spikes: &mut [bool]) -> f64 {
        let mut v = x;
        let mut out = 0.0;
        for (t, z) in spikes.iter_mut().enumerate() {
            *z = heaviside(v - self.threshold[t]);
            if *z {
                v -= self.h[t];
                out += self.d[t];
            }
        }
        out
    }

    pub fn encode(&self, x: f64) -> (f64, Vec<bool>) {
        let mut spikes = vec![false; self.len()];
        let out = self.encode_into(x, &mut spikes);
        (out, spikes)
    }

    pub fn decode(&self, spikes: &[bool]) -> f64 {
        spikes
            .iter()
            .zip(&self.d)
            .filter(|(z, _)| **z)
            .map(|(_, d)| d)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FsNeuronParams {
    pub re: FsChannel,
    pub im: FsChannel,
}

/// Result of running one complex FS neuron.
#[derive(Clone, Debug, PartialEq)]
pub struct FsResponse {
    pub value: C64,
    pub spikes_re: Vec<bool>,
    pub spikes_im: Vec<bool>,
}

impl FsNeuronParams {
    pub fn new(re: FsChannel, im: FsChannel) -> Result<Self> {
        let k = re.len();
        if k == 0 {
            return invalid("FS neuron needs K >= 1");
        }
        for ch in [&re, &im] {
            if ch.d.len() != k || ch.h.len() != k || ch.threshold.len() != k {
                return Err(Error::Shape(format!(
                    "all FS parameter vectors must have length K = {k}"
                )));
            }
        }
        Ok(Self { re, im })
    }

    pub fn ladder(k: usize, bound: f64) -> Self {
        Self {
            re: FsChannel::ladder(k, bound),
            im: FsChannel::ladder(k, bound),
        }
    }

    pub fn k(&self) -> usize {
        self.re.len()
    }

    pub fn forward(&self, s: C64) -> FsResponse {
        let (re, spikes_re) = self.re.encode(s.re);
        let (im, spikes_im) = self.im.encode(s.im);
        FsResponse {
            value: C64::new(re, im),
            spikes_re,
            spikes_im,
        }
    }

    /// Decoded value only.
    pub fn apply(&self, s: C64) -> C64 {
        self.forward(s).value
    }

    pub fn apply_all(&self, xs: &[C64]) -> Vec<C64> {
        xs.iter().map(|&s| self.apply(s)).collect()
    }

    pub fn decode(&self, spikes_re: &[bool], spikes_im: &[bool]) -> C64 {
        C64::new(self.re.decode(spikes_re), self.im.decode(spikes_im))
    }
}

/// Activation functions FS neurons are fitted to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Identity,
    SoftThreshold(f64),
    Square,
}

impl Target {
    pub fn eval(&self, s: C64) -> C64 {
        match *self {
            Target::Identity => s,
            Target::SoftThreshold(alpha) => shrink(s, alpha),
            Target::Square => s * s,
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Target::Identity),
            "square" => Ok(Target::Square),
            _ => match s.strip_prefix("soft-threshold:") {
                Some(a) => a
                    .parse::<f64>()
                    .ok()
                    .filter(|a| *a >= 0.0)
                    .map(Target::SoftThreshold)
                    .ok_or_else(|| Error::InvalidArgument(format!("bad threshold in {s:?}"))),
                None => invalid(format!(
                    "unknown target {s:?} (identity | soft-threshold:<alpha> | square)"
                )),
            },
        }
    }
}

/// On-disk FS parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct FsParamFile {
    pub K: usize,
    pub gamma: f64,
    pub R: f64,
    pub loss: f64,
    pub d_re: Vec<f64>,
    pub h_re: Vec<f64>,
    pub T_re: Vec<f64>,
    pub d_im: Vec<f64>,
    pub h_im: Vec<f64>,
    pub T_im: Vec<f64>,
}

impl FsParamFile {
    pub fn new(params: &FsNeuronParams, gamma: f64, bound: f64, loss: f64) -> Self {
        Self {
            K: params.k(),
            gamma,
            R: bound,
            loss,
            d_re: params.re.d.clone(),
            h_re: params.re.h.clone(),
            T_re: params.re.threshold.clone(),
            d_im: params.im.d.clone(),
            h_im: params.im.h.clone(),
            T_im: params.im.threshold.clone(),
        }
    }

    pub fn params(&self) -> Result<FsNeuronParams> {
        let p = FsNeuronParams::new(
            FsChannel {
                d: self.d_re.clone(),
                h: self.h_re.clone(),
                threshold: self.T_re.clone(),
            },
            FsChannel {
                d: self.d_im.clone(),
                h: self.h_im.clone(),
                threshold: self.T_im.clone(),
            },
        )?;
        if p.k() != self.K {
            return Err(Error::Shape(format!("K = {} but vectors have {}", self.K, p.k())));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(io_err(path))?;
        serde_json::to_writer_pretty(BufWriter::new(f), self)?;
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_thresholds_never_spike() {
        let p = FsNeuronParams::new(FsChannel::silent(5), FsChannel::silent(5)).unwrap();
        let r = p.forward(C64::new(3.0, -2.0));
        assert_eq!(r.value, C64::new(0.0, 0.0));
        assert!(r.spikes_re.iter().chain(&r.spikes_im).all(|z| !z));
    }

    #[test]
    fn single_step_threshold() {
        let c = 2.5;
        let re = FsChannel {
            d: vec![c],
            h: vec![1.0],
            threshold: vec![0.0],
        };
        let im = FsChannel {
            d: vec![7.0],
            h: vec![1.0],
            threshold: vec![0.3],
        };
        let p = FsNeuronParams::new(re, im).unwrap();
        let r = p.forward(C64::new(1.0, 0.0));
        assert_eq!(r.value, C64::new(c, 0.0));
        assert_eq!(r.spikes_re, vec![true]);
        // Θ(0 − 0.3) = 0
        assert_eq!(r.spikes_im, vec![false]);
    }

    #[test]
    fn ladder_codes_identity_to_resolution() {
        let k = 12;
        let p = FsNeuronParams::ladder(k, 1.0);
        let step = 2.0 * 0.5f64.powi(k as i32 - 1);
        for i in 0..=40 {
            let x = -0.999 + 1.998 * i as f64 / 40.0;
            let out = p.apply(C64::new(x, -x));
            assert!((out.re - x).abs() <= step + 1e-12, "{x} -> {}", out.re);
            assert!((out.im + x).abs() <= step + 1e-12);
        }
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let mut bad = FsChannel::ladder(4, 1.0);
        bad.h.pop();
        assert!(FsNeuronParams::new(bad, FsChannel::ladder(4, 1.0)).is_err());
        assert!(FsNeuronParams::new(FsChannel::ladder(4, 1.0), FsChannel::ladder(3, 1.0)).is_err());
    }

    #[test]
    fn surrogate_examples() {
        assert_eq!(surrogate_step_gradient(0.0, 0.5), 2.0);
        assert_eq!(surrogate_step_gradient(0.5, 0.5), 0.0);
        assert_eq!(surrogate_step_gradient(-0.7, 0.5), 0.0);
        assert!((surrogate_step_gradient(0.25, 0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn surrogate_integrates_to_one() {
        // composite Simpson over a window wider than the support
        for gamma in [0.1, 0.5, 2.0] {
            let (a, b, n) = (-3.0 * gamma, 3.0 * gamma, 60_000);
            let h = (b - a) / n as f64;
            let mut s = surrogate_step_gradient(a, gamma) + surrogate_step_gradient(b, gamma);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * surrogate_step_gradient(a + i as f64 * h, gamma);
            }
            assert!((s * h / 3.0 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn target_parsing() {
        assert_eq!("identity".parse::<Target>().unwrap(), Target::Identity);
        assert_eq!("square".parse::<Target>().unwrap(), Target::Square);
        assert_eq!(
            "soft-threshold:1.5".parse::<Target>().unwrap(),
            Target::SoftThreshold(1.5)
        );
        assert!("soft-threshold:x".parse::<Target>().is_err());
        assert!("relu".parse::<Target>().is_err());
        assert_eq!(Target::Square.eval(C64::new(1.0, 1.0)), C64::new(0.0, 2.0));
    }

    #[test]
    fn param_file_roundtrip() {
        let p = FsNeuronParams::ladder(6, 2.0);
        let f = FsParamFile::new(&p, 0.5, 2.0, 1e-3);
        let json = serde_json::to_string(&f).unwrap();
        let back: FsParamFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.params().unwrap(), p);
    }
}
