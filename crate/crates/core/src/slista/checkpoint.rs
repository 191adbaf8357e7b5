//! Checkpoint format: one JSON header line `{T, M, N_m, L_m, k_len}` then,
//! per layer, `W1` (row-major `L × N`), the kernel (`k_len^M` taps) as
//! interleaved little-endian `f32` re/im pairs, and `α` as one `f32`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SlistaLayer, SlistaModel};
use crate::dataset::{io_err, read_complex, write_complex};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct Header {
    T: usize,
    M: usize,
    N_m: Vec<usize>,
    L_m: Vec<usize>,
    k_len: usize,
}

impl SlistaModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        let header = Header {
            T: self.num_layers(),
            M: self.sensor_counts.len(),
            N_m: self.sensor_counts.clone(),
            L_m: self.grid_counts.clone(),
            k_len: self.kernel_len,
        };
        serde_json::to_writer(&mut w, &header)?;
        let mut body = || -> std::io::Result<()> {
            w.write_all(b"\n")?;
            for l in &self.layers {
                write_complex(&mut w, l.w1.as_slice())?;
                write_complex(&mut w, &l.kernel)?;
                w.write_all(&(l.alpha() as f32).to_le_bytes())?;
            }
            w.flush()
        };
        body().map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(io_err(path))?;
        let mut r = BufReader::new(file);
        let mut line = String::new();
        r.read_line(&mut line).map_err(io_err(path))?;
        let h: Header = serde_json::from_str(line.trim_end()).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: format!("header: {e}"),
        })?;
        if h.M != h.N_m.len() || h.M != h.L_m.len() || h.T == 0 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: "inconsistent header".into(),
            });
        }
        let n: usize = h.N_m.iter().product();
        let l: usize = h.L_m.iter().product();
        let taps = h.k_len.pow(h.M as u32);
        let mut layers = Vec::with_capacity(h.T);
        for _ in 0..h.T {
            let w1 = read_complex(&mut r, l * n).map_err(io_err(path))?;
            let kernel = read_complex(&mut r, taps).map_err(io_err(path))?;
            let mut a = [0u8; 4];
            r.read_exact(&mut a).map_err(io_err(path))?;
            let mut layer = SlistaLayer {
                w1: CMatrix::from_vec(l, n, w1),
                kernel,
                alpha_raw: 0.0,
            };
            layer.set_alpha(f32::from_le_bytes(a) as f64);
            layers.push(layer);
        }
        SlistaModel::new(h.N_m, h.L_m, h.k_len, layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::signal::Dictionary;

    #[test]
    fn checkpoint_roundtrip_within_f32() {
        let d = Dictionary::uniform(&[4, 2], &[4, 4]).unwrap();
        let model = SlistaModel::init_from_fista(&d, 2, 3, 0.8).unwrap();
        let path = std::env::temp_dir().join(format!("mhr-ckpt-{}.bin", std::process::id()));
        model.save(&path).unwrap();
        let back = SlistaModel::load(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(back.num_layers(), 2);
        assert_eq!(back.grid_counts(), &[4, 4]);
        for (a, b) in back.layers.iter().zip(&model.layers) {
            assert!(max_abs_diff(a.w1.as_slice(), b.w1.as_slice()) < 1e-6);
            assert!(max_abs_diff(&a.kernel, &b.kernel) < 1e-6);
            assert!((a.alpha() - b.alpha()).abs() < 1e-6);
        }
    }

    #[test]
    fn missing_checkpoint_reports_path() {
        let err = SlistaModel::load(Path::new("/nonexistent/model.bin")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/model.bin"));
    }
}
