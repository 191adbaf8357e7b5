//! Labeled training/evaluation data and its on-disk format.
//!
//! A dataset file is one line of JSON (the header) terminated by `\n`,
//! followed by `D` records. Each record is `y` (N complex values) and then
//! the label `b` (L complex values), every complex value stored as two
//! little-endian `f32` (real, imaginary).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::C64;
use crate::signal::{synthesize_measurement, Dictionary, HarmonicScene};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub count: usize,
    pub sources_min: usize,
    pub sources_max: usize,
    /// Use `f64::INFINITY` for both bounds to get noiseless records.
    pub snr_db_min: f64,
    pub snr_db_max: f64,
    pub seed: u64,
    /// Perturb sources off the grid; labels then sit on the nearest atom.
    pub off_grid: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 1000,
            sources_min: 1,
            sources_max: 5,
            snr_db_min: 10.0,
            snr_db_max: 30.0,
            seed: 0,
            off_grid: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRecord {
    pub y: Vec<C64>,
    /// Length-L sparse label.
    pub label: Vec<C64>,
    pub noise_std: f64,
}

impl LabeledRecord {
    pub fn num_sources(&self) -> usize {
        self.label.iter().filter(|b| b.norm() > 0.0).count()
    }

    pub fn snr_db(&self) -> f64 {
        -20.0 * self.noise_std.log10()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub sensor_counts: Vec<usize>,
    pub grids: Vec<Vec<f64>>,
    pub config: DatasetConfig,
    pub records: Vec<LabeledRecord>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dictionary(&self) -> Result<Dictionary> {
        Dictionary::build(self.grids.clone(), self.sensor_counts.clone())
    }

    pub fn grid_counts(&self) -> Vec<usize> {
        self.grids.iter().map(Vec::len).collect()
    }
}

/// Record-level RNG: stream `index` of the ChaCha generator keyed by `seed`,
/// so records can be produced independently and in any order.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn generate_dataset(dict: &Dictionary, config: &DatasetConfig) -> Result<LabeledDataset> {
    if config.count == 0 {
        return invalid("dataset needs at least one record");
    }
    if config.sources_min == 0 || config.sources_min > config.sources_max {
        return invalid(format!(
            "bad source range {}..={}",
            config.sources_min, config.sources_max
        ));
    }
    let atoms = dict.num_atoms();
    if config.sources_max > atoms {
        return invalid(format!(
            "{} sources exceed the {atoms} grid points",
            config.sources_max
        ));
    }
    if config.snr_db_min.is_nan()
        || config.snr_db_max.is_nan()
        || config.snr_db_min > config.snr_db_max
    {
        return invalid(format!(
            "bad SNR range [{}, {}]",
            config.snr_db_min, config.snr_db_max
        ));
    }

    let records = (0..config.count)
        .map(|i| generate_record(dict, config, &mut record_rng(config.seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset {
        sensor_counts: dict.sensor_counts().to_vec(),
        grids: dict.grids().to_vec(),
        config: config.clone(),
        records,
    })
}

fn generate_record<R: Rng>(
    dict: &Dictionary,
    config: &DatasetConfig,
    rng: &mut R,
) -> Result<LabeledRecord> {
    let atoms = dict.num_atoms();
    let p = rng.gen_range(config.sources_min..=config.sources_max);
    let support = sample(rng, atoms, p).into_vec();
    let spacing: Vec<f64> = dict
        .grids()
        .iter()
        .map(|g| 1.0 / g.len() as f64)
        .collect();

    let mut frequencies = vec![Vec::with_capacity(p); dict.dims()];
    let mut amplitudes = Vec::with_capacity(p);
    for &l in &support {
        for (m, xi) in dict.grid_point(l).into_iter().enumerate() {
            let xi = if config.off_grid {
                let d = spacing[m];
                (xi + rng.gen_range(-0.5 * d..0.5 * d)).clamp(-0.5, 0.5)
            } else {
                xi
            };
            frequencies[m].push(xi);
        }
        let modulus = rng.gen_range(0.5..=1.0);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        amplitudes.push(C64::from_polar(modulus, phase));
    }
    let scene = HarmonicScene::new(frequencies, amplitudes)?;

    let snr_db = if config.snr_db_min == config.snr_db_max {
        config.snr_db_min
    } else {
        rng.gen_range(config.snr_db_min..config.snr_db_max)
    };
    let noise_std = if snr_db.is_infinite() {
        0.0
    } else {
        10f64.powf(-snr_db / 20.0)
    };
    let m = synthesize_measurement(&scene, dict.sensor_counts(), noise_std, rng)?;

    let mut label = vec![C64::new(0.0, 0.0); atoms];
    for (p_idx, &l) in support.iter().enumerate() {
        let atom = if config.off_grid {
            let xi: Vec<f64> = scene.frequencies().iter().map(|row| row[p_idx]).collect();
            dict.nearest_atom(&xi)
        } else {
            l
        };
        label[atom] += scene.amplitudes()[p_idx] * m.gain;
    }
    Ok(LabeledRecord {
        y: m.y,
        label,
        noise_std,
    })
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct Header {
    version: u32,
    M: usize,
    N_m: Vec<usize>,
    L_m: Vec<usize>,
    D: usize,
    /// `null` encodes an infinite bound.
    snr_db_range: [Option<f64>; 2],
    seed: u64,
    sources_range: [usize; 2],
    off_grid: bool,
    grids: Vec<Vec<f64>>,
    noise_std: Vec<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub(crate) fn write_complex<W: Write>(w: &mut W, values: &[C64]) -> std::io::Result<()> {
    for v in values {
        w.write_all(&(v.re as f32).to_le_bytes())?;
        w.write_all(&(v.im as f32).to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_complex<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<C64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            C64::new(re as f64, im as f64)
        })
        .collect())
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |cause| Error::Io {
        path: path.to_path_buf(),
        cause,
    }
}

impl LabeledDataset {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            version: FORMAT_VERSION,
            M: self.sensor_counts.len(),
            N_m: self.sensor_counts.clone(),
            L_m: self.grid_counts(),
            D: self.records.len(),
            snr_db_range: [finite(self.config.snr_db_min), finite(self.config.snr_db_max)],
            seed: self.config.seed,
            sources_range: [self.config.sources_min, self.config.sources_max],
            off_grid: self.config.off_grid,
            grids: self.grids.clone(),
            noise_std: self.records.iter().map(|r| r.noise_std).collect(),
        };
        serde_json::to_writer(&mut w, &header)?;
        let mut body = || -> std::io::Result<()> {
            w.write_all(b"\n")?;
            for r in &self.records {
                write_complex(&mut w, &r.y)?;
                write_complex(&mut w, &r.label)?;
            }
            w.flush()
        };
        body().map_err(|cause| Error::Io {
            path: "<writer>".into(),
            cause,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(io_err(path))?;
        self.write_to(BufWriter::new(file)).map_err(|e| match e {
            Error::Io { cause, .. } => Error::Io {
                path: path.to_path_buf(),
                cause,
            },
            other => other,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(io_err(path))?;
        let mut reader = BufReader::new(file);
        let mut line = String::new();
        reader.read_line(&mut line).map_err(io_err(path))?;
        let header: Header = serde_json::from_str(line.trim_end()).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: format!("header: {e}"),
        })?;
        if header.version != FORMAT_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("unsupported version {}", header.version),
            });
        }
        let grid_counts: Vec<usize> = header.grids.iter().map(Vec::len).collect();
        if header.M != header.N_m.len() || grid_counts != header.L_m || header.noise_std.len() != header.D
        {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: "inconsistent header dimensions".into(),
            });
        }
        let n: usize = header.N_m.iter().product();
        let l: usize = header.L_m.iter().product();
        let mut records = Vec::with_capacity(header.D);
        for &noise_std in &header.noise_std {
            let y = read_complex(&mut reader, n).map_err(io_err(path))?;
            let label = read_complex(&mut reader, l).map_err(io_err(path))?;
            records.push(LabeledRecord { y, label, noise_std });
        }
        let [lo, hi] = header.snr_db_range;
        Ok(Self {
            sensor_counts: header.N_m,
            grids: header.grids,
            config: DatasetConfig {
                count: header.D,
                sources_min: header.sources_range[0],
                sources_max: header.sources_range[1],
                snr_db_min: lo.unwrap_or(f64::INFINITY),
                snr_db_max: hi.unwrap_or(f64::INFINITY),
                seed: header.seed,
                off_grid: header.off_grid,
            },
            records,
        })
    }
}
