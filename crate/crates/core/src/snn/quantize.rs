//! Symmetric 4-bit post-training quantization, separately for the real and
//! imaginary planes of a complex tensor.

use serde::{Deserialize, Serialize};

use crate::linalg::C64;

/// Largest level magnitude of a signed symmetric 4-bit code.
pub const INT4_MAX: i8 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedPlane {
    pub levels: Vec<i8>,
    pub scale: f64,
}

impl QuantizedPlane {
    /// `scale = max|w|/7`, `level = clamp(round(w/scale), −7, 7)`; an
    /// all-zero plane gets scale 1.
    pub fn quantize(values: impl Iterator<Item = f64> + Clone) -> Self {
        let max = values.clone().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            return Self {
                levels: values.map(|_| 0).collect(),
                scale: 1.0,
            };
        }
        let scale = max / INT4_MAX as f64;
        let levels = values
            .map(|v| (v / scale).round().clamp(-(INT4_MAX as f64), INT4_MAX as f64) as i8)
            .collect();
        Self { levels, scale }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.levels[i] as f64 * self.scale
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    pub re: QuantizedPlane,
    pub im: QuantizedPlane,
}

impl QuantizedTensor {
    pub fn len(&self) -> usize {
        self.re.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.levels.is_empty()
    }

    pub fn dequantize(&self) -> Vec<C64> {
        (0..self.len())
            .map(|i| C64::new(self.re.value(i), self.im.value(i)))
            .collect()
    }
}

pub fn quantize_int4(weights: &[C64]) -> QuantizedTensor {
    QuantizedTensor {
        re: QuantizedPlane::quantize(weights.iter().map(|w| w.re)),
        im: QuantizedPlane::quantize(weights.iter().map(|w| w.im)),
    }
}
