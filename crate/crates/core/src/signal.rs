//! Harmonic signal model: steering vectors, Kronecker dictionaries and
//! Khatri-Rao measurements.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{kron, norm2, unravel, CMatrix, C64};

/// `a(ξ)_k = exp(−j 2π ξ k)` for `k = 0..n`.
pub fn steering_vector(xi: f64, n: usize) -> Vec<C64> {
    (0..n)
        .map(|k| C64::from_polar(1.0, -2.0 * PI * xi * k as f64))
        .collect()
}

/// Uniform grid `ξ_l = −1/2 + l/L`.
pub fn uniform_grid(size: usize) -> Vec<f64> {
    (0..size).map(|l| -0.5 + l as f64 / size as f64).collect()
}

fn check_frequency(xi: f64) -> Result<()> {
    if !(-0.5..=0.5).contains(&xi) {
        return invalid(format!("frequency {xi} outside [-1/2, 1/2]"));
    }
    Ok(())
}

/// Ground truth for one snapshot: `P` sources with M-dimensional
/// frequencies and complex amplitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicScene {
    /// `frequencies[m][p]`.
    frequencies: Vec<Vec<f64>>,
    amplitudes: Vec<C64>,
}

impl HarmonicScene {
    pub fn new(frequencies: Vec<Vec<f64>>, amplitudes: Vec<C64>) -> Result<Self> {
        if frequencies.is_empty() {
            return invalid("scene needs at least one dimension");
        }
        let p = amplitudes.len();
        if p == 0 {
            return invalid("scene needs at least one source");
        }
        for row in &frequencies {
            if row.len() != p {
                return Err(Error::Shape(format!(
                    "frequency row has {} entries, expected {p}",
                    row.len()
                )));
            }
            row.iter().try_for_each(|&xi| check_frequency(xi))?;
        }
        if amplitudes.iter().any(|b| b.norm() == 0.0) {
            return invalid("source amplitudes must be nonzero");
        }
        Ok(Self {
            frequencies,
            amplitudes,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn dims(&self) -> usize {
        self.frequencies.len()
    }

    pub fn frequencies(&self) -> &[Vec<f64>] {
        &self.frequencies
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// Noiseless `(A_1 ∗ … ∗ A_M) b` (Khatri-Rao columns).
    pub fn noiseless(&self, sensor_counts: &[usize]) -> Result<Vec<C64>> {
        if sensor_counts.len() != self.dims() {
            return Err(Error::Shape(format!(
                "{} sensor counts for a {}-dimensional scene",
                sensor_counts.len(),
                self.dims()
            )));
        }
        let n: usize = sensor_counts.iter().product();
        let mut x = vec![C64::new(0.0, 0.0); n];
        for (p, b) in self.amplitudes.iter().enumerate() {
            let col = sensor_counts
                .iter()
                .enumerate()
                .map(|(m, &nm)| steering_vector(self.frequencies[m][p], nm))
                .reduce(|acc, a| kron(&acc, &a))
                .expect("at least one dimension");
            for (xk, ak) in x.iter_mut().zip(col) {
                *xk += ak * b;
            }
        }
        Ok(x)
    }
}

/// Oversampled dictionary: Kronecker product of per-dimension steering
/// matrices evaluated on a frequency grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    sensor_counts: Vec<usize>,
    grids: Vec<Vec<f64>>,
    matrix: CMatrix,
}

impl Dictionary {
    /// Columns are ordered lexicographically over `(l_1, …, l_M)` with
    /// dimension 1 varying slowest; rows follow the same convention.
    pub fn build(grids: Vec<Vec<f64>>, sensor_counts: Vec<usize>) -> Result<Self> {
        if grids.is_empty() || grids.len() != sensor_counts.len() {
            return Err(Error::Shape(format!(
                "{} grids for {} sensor counts",
                grids.len(),
                sensor_counts.len()
            )));
        }
        if sensor_counts.contains(&0) {
            return invalid("sensor counts must be positive");
        }
        for g in &grids {
            if g.is_empty() {
                return invalid("empty frequency grid");
            }
            g.iter().try_for_each(|&xi| check_frequency(xi))?;
        }
        let rows: usize = sensor_counts.iter().product();
        let grid_counts: Vec<usize> = grids.iter().map(Vec::len).collect();
        let columns: usize = grid_counts.iter().product();
        if columns < rows {
            return Err(Error::Undercomplete { rows, columns });
        }

        // Per-dimension steering matrices, then Kronecker columns.
        let per_dim: Vec<Vec<Vec<C64>>> = grids
            .iter()
            .zip(&sensor_counts)
            .map(|(g, &n)| g.iter().map(|&xi| steering_vector(xi, n)).collect())
            .collect();
        let mut matrix = CMatrix::zeros(rows, columns);
        for l in 0..columns {
            let idx = unravel(l, &grid_counts);
            let col = idx
                .iter()
                .enumerate()
                .map(|(m, &lm)| per_dim[m][lm].clone())
                .reduce(|acc, a| kron(&acc, &a))
                .expect("at least one dimension");
            for (k, v) in col.into_iter().enumerate() {
                matrix[(k, l)] = v;
            }
        }
        Ok(Self {
            sensor_counts,
            grids,
            matrix,
        })
    }

    /// Uniform grid of `grid_counts[m]` points in every dimension.
    pub fn uniform(sensor_counts: &[usize], grid_counts: &[usize]) -> Result<Self> {
        Self::build(
            grid_counts.iter().map(|&l| uniform_grid(l)).collect(),
            sensor_counts.to_vec(),
        )
    }

    pub fn dims(&self) -> usize {
        self.sensor_counts.len()
    }

    pub fn sensor_counts(&self) -> &[usize] {
        &self.sensor_counts
    }

    pub fn grid_counts(&self) -> Vec<usize> {
        self.grids.iter().map(Vec::len).collect()
    }

    pub fn grids(&self) -> &[Vec<f64>] {
        &self.grids
    }

    pub fn num_sensors(&self) -> usize {
        self.matrix.rows()
    }

    pub fn num_atoms(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// M-dimensional frequency of grid column `l`.
    pub fn grid_point(&self, l: usize) -> Vec<f64> {
        unravel(l, &self.grid_counts())
            .into_iter()
            .zip(&self.grids)
            .map(|(i, g)| g[i])
            .collect()
    }

    /// Column whose grid point is nearest (wrap-around per dimension) to `xi`.
    pub fn nearest_atom(&self, xi: &[f64]) -> usize {
        let counts = self.grid_counts();
        let mut flat = 0;
        for ((g, &x), &n) in self.grids.iter().zip(xi).zip(&counts) {
            let best = g
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let d = (v - x).abs();
                    (i, d.min(1.0 - d))
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            flat = flat * n + best;
        }
        flat
    }
}

/// Noisy snapshot plus the noise level used to draw it.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub y: Vec<C64>,
    pub noise_std: f64,
    /// Per-sample SNR `1/σ²` (infinite when noiseless).
    pub snr: f64,
    /// Factor `√N/‖x‖₂` applied to the noiseless signal.
    pub gain: f64,
}

/// Draws `y = g·(A_1 ∗ … ∗ A_M) b + z` where `g` normalizes the noiseless
/// signal to unit per-sample power and `z ~ CN(0, σ² I)`.
pub fn synthesize_measurement<R: Rng + ?Sized>(
    scene: &HarmonicScene,
    sensor_counts: &[usize],
    noise_std: f64,
    rng: &mut R,
) -> Result<Measurement> {
    if !(noise_std >= 0.0) {
        return invalid(format!("noise std {noise_std} must be nonnegative"));
    }
    let mut y = scene.noiseless(sensor_counts)?;
    let energy = norm2(&y);
    if energy == 0.0 {
        return invalid("sources cancel to a zero signal");
    }
    let gain = (y.len() as f64).sqrt() / energy;
    let part_std = noise_std / 2f64.sqrt();
    for v in &mut y {
        *v *= gain;
        if noise_std > 0.0 {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *v += C64::new(re * part_std, im * part_std);
        }
    }
    Ok(Measurement {
        y,
        noise_std,
        snr: 1.0 / (noise_std * noise_std),
        gain,
    })
}
