//! Support recovery metric and the experiment runner comparing FISTA,
//! S-LISTA and the converted SNN.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{io_err, LabeledDataset, LabeledRecord};
use crate::error::{invalid, Error, Result};
use crate::fs::FsNeuronParams;
use crate::linalg::{CMatrix, C64};
use crate::slista::SlistaModel;
use crate::snn::{encode_input_spikes, simulate, SpikingNetwork};
use crate::solvers::{Fista, SolverConfig};

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Fraction of the true support missed by the `|supp(truth)|` largest
/// entries of `estimate` whose modulus exceeds `eps`.
pub fn support_recovery_error(estimate: &[C64], truth: &[C64], eps: f64) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::Shape(format!(
            "estimate has {} entries, truth {}",
            estimate.len(),
            truth.len()
        )));
    }
    let support: Vec<usize> = (0..truth.len()).filter(|&i| truth[i].norm() > eps).collect();
    if support.is_empty() {
        return invalid("true support is empty");
    }
    let mut ranked: Vec<usize> = (0..estimate.len())
        .filter(|&i| estimate[i].norm() > eps)
        .collect();
    // stable sort keeps index order among ties
    ranked.sort_by(|&a, &b| estimate[b].norm().total_cmp(&estimate[a].norm()));
    ranked.truncate(support.len());
    let hits = ranked.iter().filter(|i| support.binary_search(i).is_ok()).count();
    Ok((support.len() - hits) as f64 / support.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fista,
    Slista,
    Snn,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Fista => "fista",
            Method::Slista => "slista",
            Method::Snn => "snn",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Anything that maps a measurement to a length-L coefficient estimate.
pub trait Estimator: Sync {
    fn estimate(&self, y: &[C64]) -> Result<Vec<C64>>;
}

pub struct FistaEstimator<'a> {
    solver: Fista<'a>,
    config: SolverConfig,
}

impl<'a> FistaEstimator<'a> {
    pub fn new(a: &'a CMatrix, config: SolverConfig) -> Result<Self> {
        Ok(Self {
            solver: Fista::new(a)?,
            config,
        })
    }
}

impl Estimator for FistaEstimator<'_> {
    fn estimate(&self, y: &[C64]) -> Result<Vec<C64>> {
        Ok(self.solver.solve(y, &self.config)?.b)
    }
}

impl Estimator for SlistaModel {
    fn estimate(&self, y: &[C64]) -> Result<Vec<C64>> {
        if y.len() != self.num_sensors() {
            return Err(Error::Shape(format!(
                "measurement has {} entries, model expects {}",
                y.len(),
                self.num_sensors()
            )));
        }
        Ok(self.infer(y))
    }
}

pub struct SnnEstimator<'a> {
    net: &'a SpikingNetwork,
}

impl<'a> SnnEstimator<'a> {
    pub fn new(net: &'a SpikingNetwork) -> Self {
        Self { net }
    }

    fn input_fs(&self) -> &FsNeuronParams {
        &self.net.input().fs
    }
}

impl Estimator for SnnEstimator<'_> {
    fn estimate(&self, y: &[C64]) -> Result<Vec<C64>> {
        if y.len() != self.net.input().size {
            return Err(Error::Shape(format!(
                "measurement has {} entries, network expects {}",
                y.len(),
                self.net.input().size
            )));
        }
        let spikes = encode_input_spikes(y, self.input_fs(), self.net.layers);
        Ok(simulate(self.net, &spikes)?.0)
    }
}

/// Closed SNR interval in dB; a missing upper bound admits noiseless records.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrBin {
    pub min_db: f64,
    pub max_db: Option<f64>,
}

impl SnrBin {
    pub fn contains(&self, snr_db: f64) -> bool {
        snr_db >= self.min_db && self.max_db.map_or(true, |m| snr_db <= m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FistaSettings {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_true")]
    pub momentum: bool,
}

impl Default for FistaSettings {
    fn default() -> Self {
        Self {
            lambda: default_lambda(),
            iters: default_iters(),
            momentum: true,
        }
    }
}

fn default_lambda() -> f64 {
    1.0
}
fn default_iters() -> usize {
    100
}
fn default_true() -> bool {
    true
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_bins() -> Vec<SnrBin> {
    vec![SnrBin {
        min_db: 10.0,
        max_db: Some(30.0),
    }]
}
fn default_sources() -> Vec<usize> {
    (1..=5).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub fista: FistaSettings,
    /// S-LISTA checkpoint, required when `slista` is listed.
    #[serde(default)]
    pub slista_model: Option<PathBuf>,
    /// Converted network, required when `snn` is listed.
    #[serde(default)]
    pub snn_network: Option<PathBuf>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_bins")]
    pub snr_bins: Vec<SnrBin>,
    #[serde(default = "default_sources")]
    pub sources: Vec<usize>,
    /// Evaluate at most this many records, chosen by a seeded shuffle.
    #[serde(default)]
    pub max_records: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub record_runtime: bool,
}

impl ExperimentConfig {
    pub fn new(dataset: PathBuf, methods: Vec<Method>) -> Self {
        Self {
            dataset,
            methods,
            fista: FistaSettings::default(),
            slista_model: None,
            snn_network: None,
            epsilon: DEFAULT_EPSILON,
            snr_bins: default_bins(),
            sources: default_sources(),
            max_records: None,
            seed: 0,
            record_runtime: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return invalid("at least one method is required");
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return invalid("methods must not repeat");
        }
        if !(self.epsilon > 0.0) {
            return invalid(format!("epsilon {} must be positive", self.epsilon));
        }
        if self.snr_bins.is_empty() || self.sources.is_empty() {
            return invalid("snr_bins and sources must be nonempty");
        }
        if let Some(b) = self
            .snr_bins
            .iter()
            .find(|b| !b.min_db.is_finite() || b.max_db.map_or(false, |m| !(m >= b.min_db)))
        {
            return invalid(format!("bad SNR bin {b:?}"));
        }
        if self.sources.contains(&0) {
            return invalid("source counts must be positive");
        }
        if self.methods.contains(&Method::Slista) && self.slista_model.is_none() {
            return invalid("method slista needs slista_model");
        }
        if self.methods.contains(&Method::Snn) && self.snn_network.is_none() {
            return invalid("method snn needs snn_network");
        }
        if self.fista.iters == 0 || !(self.fista.lambda > 0.0) {
            return invalid("fista needs positive lambda and iters");
        }
        Ok(())
    }

    /// Reads a config and resolves relative artifact paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(io_err(path))?;
        let mut cfg: Self =
            serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.dataset);
        cfg.slista_model.as_mut().map(resolve);
        cfg.snn_network.as_mut().map(resolve);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub sources: usize,
    pub snr_min_db: f64,
    pub snr_max_db: Option<f64>,
    /// Records evaluated successfully.
    pub records: usize,
    /// Records whose inference failed; excluded from the statistics.
    pub failures: usize,
    pub sre_mean: f64,
    pub sre_stderr: f64,
    pub runtime_mean_s: Option<f64>,
    pub runtime_std_s: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn row(&self, method: Method, sources: usize) -> impl Iterator<Item = &ResultRow> {
        self.rows
            .iter()
            .filter(move |r| r.method == method && r.sources == sources)
    }

    /// Record-weighted mean SRE of `method` at `sources` over all bins.
    pub fn mean_sre(&self, method: Method, sources: usize) -> Option<f64> {
        let (sum, n) = self.row(method, sources).fold((0.0, 0), |(s, n), r| {
            (s + r.sre_mean * r.records as f64, n + r.records)
        });
        (n > 0).then(|| sum / n as f64)
    }

    /// Columns: method, sources, snr_min_db, snr_max_db (empty = unbounded),
    /// records, failures, sre_mean, sre_stderr, runtime_mean_s,
    /// runtime_std_s (empty when runtimes were not recorded).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if self.rows.is_empty() {
            return invalid("results table is empty");
        }
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = csv::Writer::from_writer(file);
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        }
        w.flush().map_err(io_err(path))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(io_err(path))?;
        let rows = csv::Reader::from_reader(file)
            .deserialize()
            .collect::<std::result::Result<Vec<ResultRow>, _>>()
            .map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        Ok(Self { rows })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        if self.rows.is_empty() {
            return invalid("results table is empty");
        }
        let f = File::create(path).map_err(io_err(path))?;
        serde_json::to_writer_pretty(BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(io_err(path))?;
        serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    let (mean, se) = mean_and_stderr(xs);
    (mean, se * (xs.len() as f64).sqrt())
}

/// Indices of the records the config selects, in evaluation order.
fn select_records(config: &ExperimentConfig, records: &[LabeledRecord]) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..records.len())
        .filter(|&i| {
            let r = &records[i];
            config.sources.contains(&r.num_sources())
                && config.snr_bins.iter().any(|b| b.contains(r.snr_db()))
        })
        .collect();
    if let Some(max) = config.max_records {
        if max < idx.len() {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
            idx.shuffle(&mut rng);
            idx.truncate(max);
            idx.sort_unstable();
        }
    }
    idx
}

struct Outcome {
    sre: Option<f64>,
    seconds: f64,
}

/// Evaluates the given estimators on `dataset` and tabulates SRE per
/// (method, P, SNR bin). Records are processed in parallel; the table does
/// not depend on the thread count.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    dataset: &LabeledDataset,
    estimators: &[(Method, &dyn Estimator)],
) -> Result<ResultsTable> {
    config.validate()?;
    let selected = select_records(config, &dataset.records);
    let mut rows = Vec::new();
    for &(method, est) in estimators {
        let outcomes: Vec<Outcome> = selected
            .par_iter()
            .map(|&i| {
                let r = &dataset.records[i];
                let start = Instant::now();
                let sre = est
                    .estimate(&r.y)
                    .and_then(|b| support_recovery_error(&b, &r.label, config.epsilon))
                    .ok();
                Outcome {
                    sre,
                    seconds: start.elapsed().as_secs_f64(),
                }
            })
            .collect();
        for &p in &config.sources {
            for bin in &config.snr_bins {
                let members: Vec<&Outcome> = selected
                    .iter()
                    .zip(&outcomes)
                    .filter(|(&i, _)| {
                        let r = &dataset.records[i];
                        r.num_sources() == p && bin.contains(r.snr_db())
                    })
                    .map(|(_, o)| o)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let sres: Vec<f64> = members.iter().filter_map(|o| o.sre).collect();
                let failures = members.len() - sres.len();
                let (sre_mean, sre_stderr) = if sres.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    mean_and_stderr(&sres)
                };
                let (runtime_mean_s, runtime_std_s) = if config.record_runtime {
                    let secs: Vec<f64> = members.iter().map(|o| o.seconds).collect();
                    let (m, s) = mean_and_std(&secs);
                    (Some(m), Some(s))
                } else {
                    (None, None)
                };
                rows.push(ResultRow {
                    method,
                    sources: p,
                    snr_min_db: bin.min_db,
                    snr_max_db: bin.max_db,
                    records: sres.len(),
                    failures,
                    sre_mean,
                    sre_stderr,
                    runtime_mean_s,
                    runtime_std_s,
                });
            }
        }
    }
    Ok(ResultsTable { rows })
}

/// Loads every artifact the config names (failing fast if one is missing),
/// then runs the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let dataset = LabeledDataset::load(&config.dataset)?;
    let model = match (&config.slista_model, config.methods.contains(&Method::Slista)) {
        (Some(p), true) => Some(SlistaModel::load(p)?),
        _ => None,
    };
    let net = match (&config.snn_network, config.methods.contains(&Method::Snn)) {
        (Some(p), true) => Some(SpikingNetwork::load(p)?),
        _ => None,
    };
    let dict = dataset.dictionary()?;
    let fista = if config.methods.contains(&Method::Fista) {
        let cfg = SolverConfig {
            lambda: config.fista.lambda,
            max_iters: config.fista.iters,
            momentum: config.fista.momentum,
            tol: 0.0,
        };
        Some(FistaEstimator::new(dict.matrix(), cfg)?)
    } else {
        None
    };
    let snn = net.as_ref().map(SnnEstimator::new);
    let mut estimators: Vec<(Method, &dyn Estimator)> = Vec::new();
    for &m in &config.methods {
        let e: &dyn Estimator = match m {
            Method::Fista => fista.as_ref().expect("built above"),
            Method::Slista => model.as_ref().expect("loaded above"),
            Method::Snn => snn.as_ref().expect("loaded above"),
        };
        estimators.push((m, e));
    }
    run_experiment_with(config, &dataset, &estimators)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn sre_examples() {
        let truth = [c(0.0), c(1.0), c(0.0), c(-0.7)];
        assert_eq!(support_recovery_error(&truth, &truth, 1e-6).unwrap(), 0.0);
        let off = [c(2.0), c(0.0), c(0.3), c(0.0)];
        assert_eq!(support_recovery_error(&off, &truth, 1e-6).unwrap(), 1.0);
        let half = [c(0.0), c(0.9), c(0.5), c(0.1)];
        assert_eq!(support_recovery_error(&half, &truth, 1e-6).unwrap(), 0.5);
    }

    #[test]
    fn sre_ignores_entries_below_epsilon() {
        let truth = [c(1.0), c(0.0)];
        let tiny = [c(1e-9), c(0.0)];
        assert_eq!(support_recovery_error(&tiny, &truth, 1e-6).unwrap(), 1.0);
    }

    #[test]
    fn sre_rejects_empty_support_and_length_mismatch() {
        assert!(support_recovery_error(&[c(1.0)], &[c(0.0)], 1e-6).is_err());
        assert!(support_recovery_error(&[c(1.0)], &[c(1.0), c(0.0)], 1e-6).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::new("d.bin".into(), vec![]);
        assert!(cfg.validate().is_err());
        cfg.methods = vec![Method::Fista];
        assert!(cfg.validate().is_ok());
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
        cfg.epsilon = 1e-6;
        cfg.methods.push(Method::Slista);
        assert!(cfg.validate().is_err());
        cfg.slista_model = Some("m.ckpt".into());
        assert!(cfg.validate().is_ok());
        cfg.methods.push(Method::Fista);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"dataset": "x.bin", "methods": ["fista"]}"#).unwrap();
        assert_eq!(cfg.fista, FistaSettings::default());
        assert_eq!(cfg.sources, vec![1, 2, 3, 4, 5]);
        assert_eq!(cfg.epsilon, 1e-6);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"dataset": "x", "methods": ["lasso"]}"#).is_err());
    }

    #[test]
    fn snr_bin_membership() {
        let open = SnrBin { min_db: 10.0, max_db: None };
        assert!(open.contains(f64::INFINITY));
        let closed = SnrBin { min_db: 10.0, max_db: Some(30.0) };
        assert!(closed.contains(10.0) && closed.contains(30.0));
        assert!(!closed.contains(f64::INFINITY) && !closed.contains(9.99));
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_and_stderr(&[0.5, 0.5, 0.5]), (0.5, 0.0));
        let (m, se) = mean_and_stderr(&[0.0, 1.0]);
        assert_eq!(m, 0.5);
        assert!((se - 0.5).abs() < 1e-15);
    }
}
