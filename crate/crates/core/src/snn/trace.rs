//! Spike traces: decoding and the `population,neuron,part,timestep` CSV.

use std::fs::File;
use std::path::Path;

use super::SpikeRecord;
use crate::dataset::io_err;
use crate::error::{Error, Result};
use crate::fs::FsNeuronParams;
use crate::linalg::C64;

/// Decodes the spikes `population` emitted during the send stage starting
/// at `send_start`: each spike at step `τ` contributes `d(τ)` to its part.
pub fn decode_output(
    trace: &[SpikeRecord],
    population: usize,
    size: usize,
    fs: &FsNeuronParams,
    send_start: usize,
) -> Vec<C64> {
    let k = fs.k();
    let mut out = vec![C64::new(0.0, 0.0); size];
    let mut sorted: Vec<&SpikeRecord> = trace
        .iter()
        .filter(|s| {
            s.population == population && (send_start..send_start + k).contains(&s.timestep)
        })
        .collect();
    sorted.sort_by_key(|s| s.timestep);
    for s in sorted {
        let tau = s.timestep - send_start;
        match s.part {
            super::Part::Re => out[s.neuron].re += fs.re.d[tau],
            super::Part::Im => out[s.neuron].im += fs.im.d[tau],
        }
    }
    out
}

pub fn write_trace_csv(path: &Path, trace: &[SpikeRecord]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    for s in trace {
        w.serialize(s).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<SpikeRecord>> {
    let file = File::open(path).map_err(io_err(path))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<std::result::Result<Vec<SpikeRecord>, _>>()
        .map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}
