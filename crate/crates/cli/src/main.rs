use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use mhr_core::dataset::{generate_dataset, DatasetConfig, LabeledDataset};
use mhr_core::fs::{fs_fit, FsFitConfig, FsNeuronParams, FsParamFile, SampleMode, Target};
use mhr_core::harness::{run_experiment, ExperimentConfig};
use mhr_core::signal::Dictionary;
use mhr_core::slista::{train_adam, SlistaModel, TrainConfig, DEFAULT_KERNEL_LEN};
use mhr_core::snn::{
    convert_slista_to_snn, fit_conversion_activations, simulate_stream, write_trace_csv,
    SpikingNetwork,
};
use mhr_core::solvers::{Fista, SolverConfig};
use mhr_core::C64;

#[derive(Parser)]
#[command(name = "mhr", version, about = "Sparse harmonic retrieval with FISTA, S-LISTA and spiking networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset.
    GenData {
        #[arg(long, default_value_t = 1)]
        dims: usize,
        /// Sensors per dimension, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        sensors: Vec<usize>,
        /// Grid points per dimension, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Lower SNR bound in dB; `inf` for noiseless data.
        #[arg(long, default_value_t = 10.0)]
        snr_min: f64,
        #[arg(long, default_value_t = 30.0)]
        snr_max: f64,
        #[arg(long, default_value_t = 1)]
        sources_min: usize,
        #[arg(long, default_value_t = 5)]
        sources_max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw frequencies off the grid; labels use the nearest atom.
        #[arg(long)]
        off_grid: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run FISTA on every record of a dataset.
    SolveFista {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        momentum: bool,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an S-LISTA network initialised from FISTA.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 5e-4)]
        lr: f64,
        #[arg(long, default_value_t = 5)]
        layers: usize,
        #[arg(long, default_value_t = DEFAULT_KERNEL_LEN)]
        kernel: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        /// Regularisation weight used for the FISTA initialisation.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a trained S-LISTA checkpoint on a dataset.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit FS neuron parameters to an activation function.
    FitFs {
        /// identity | soft-threshold:<alpha> | square
        #[arg(long)]
        target: String,
        #[arg(long = "K", default_value_t = 30)]
        k: usize,
        /// Half-width of the square domain [-R, R]^2.
        #[arg(long = "R", default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 41 * 41)]
        samples: usize,
        /// Sample uniformly at random instead of on a lattice.
        #[arg(long)]
        uniform: bool,
        #[arg(long, default_value_t = 0.009)]
        lr: f64,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        #[arg(long, default_value_t = 5e-4)]
        stop: f64,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate s, f(s) and the FS approximation along the real axis as CSV.
    FsEval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 201)]
        points: usize,
        /// Range half-width; defaults to the fitted R.
        #[arg(long = "R")]
        r: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert an S-LISTA checkpoint into a spiking network.
    Convert {
        #[arg(long)]
        model: PathBuf,
        /// Directory holding input.json and layer1.json .. layerT.json.
        #[arg(long)]
        fs_dir: PathBuf,
        #[arg(long = "K", default_value_t = 30)]
        k: usize,
        /// Weight precision: 4 quantizes, 0 keeps exact weights.
        #[arg(long, default_value_t = 4)]
        bits: u8,
        /// Fit the FS parameters on this dataset and write them to fs-dir first.
        #[arg(long)]
        calibrate: Option<PathBuf>,
        /// Calibration records to use.
        #[arg(long, default_value_t = 256)]
        calibration_records: usize,
        /// Sample points per fitted activation (a square number).
        #[arg(long, default_value_t = 4096)]
        samples: usize,
        /// Stop fitting once the mean loss drops below this.
        #[arg(long, default_value_t = 5e-4)]
        stop: f64,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        #[arg(long, default_value_t = 0.009)]
        lr: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a spiking network on a dataset, inputs pipelined 2K apart.
    Simulate {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate methods from an experiment config.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_csv: Option<PathBuf>,
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct Estimate {
    index: usize,
    b_re: Vec<f64>,
    b_im: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<Vec<f64>>,
}

impl Estimate {
    fn new(index: usize, b: &[C64]) -> Self {
        Self {
            index,
            b_re: b.iter().map(|v| v.re).collect(),
            b_im: b.iter().map(|v| v.im).collect(),
            objective: None,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer(&mut w, value)?;
    w.flush()?;
    Ok(())
}

fn load_dataset(path: &Path, limit: Option<usize>) -> Result<LabeledDataset> {
    let mut ds = LabeledDataset::load(path)?;
    if let Some(n) = limit {
        ds.records.truncate(n);
    }
    Ok(ds)
}

fn fs_file(dir: &Path, layer: Option<usize>) -> PathBuf {
    match layer {
        None => dir.join("input.json"),
        Some(t) => dir.join(format!("layer{t}.json")),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            dims,
            sensors,
            grid,
            count,
            snr_min,
            snr_max,
            sources_min,
            sources_max,
            seed,
            off_grid,
            out,
        } => {
            if sensors.len() != dims || grid.len() != dims {
                bail!("--sensors and --grid need {dims} entries each");
            }
            let dict = Dictionary::uniform(&sensors, &grid)?;
            let cfg = DatasetConfig {
                count,
                sources_min,
                sources_max,
                snr_db_min: snr_min,
                snr_db_max: snr_max,
                seed,
                off_grid,
            };
            generate_dataset(&dict, &cfg)?.save(&out)?;
            eprintln!("wrote {count} records to {}", out.display());
        }
        Command::SolveFista {
            data,
            lambda,
            iters,
            momentum,
            limit,
            out,
        } => {
            let ds = load_dataset(&data, limit)?;
            let dict = ds.dictionary()?;
            let solver = Fista::new(dict.matrix())?;
            let cfg = SolverConfig {
                lambda,
                max_iters: iters,
                momentum,
                tol: 0.0,
            };
            let mut results = Vec::with_capacity(ds.len());
            for (i, r) in ds.records.iter().enumerate() {
                let sol = solver.solve(&r.y, &cfg)?;
                let mut e = Estimate::new(i, &sol.b);
                e.objective = Some(sol.objective_trace);
                results.push(e);
            }
            write_json(&out, &results)?;
        }
        Command::Train {
            data,
            epochs,
            lr,
            layers,
            kernel,
            batch_size,
            lambda,
            seed,
            out,
        } => {
            let ds = LabeledDataset::load(&data)?;
            let dict = ds.dictionary()?;
            let mut model = SlistaModel::init_from_fista(&dict, layers, kernel, lambda)?;
            let cfg = TrainConfig {
                epochs,
                batch_size,
                learning_rate: lr,
                seed,
                ..TrainConfig::default()
            };
            let losses = train_adam(&mut model, &ds.records, &cfg)?;
            for (e, l) in losses.iter().enumerate() {
                eprintln!("epoch {:>3}  loss {l:.6}", e + 1);
            }
            model.save(&out)?;
        }
        Command::Infer {
            model,
            data,
            limit,
            out,
        } => {
            let model = SlistaModel::load(&model)?;
            let ds = load_dataset(&data, limit)?;
            if ds.records.first().map_or(false, |r| r.y.len() != model.num_sensors()) {
                bail!("dataset and model disagree on the number of sensors");
            }
            let results: Vec<Estimate> = ds
                .records
                .iter()
                .enumerate()
                .map(|(i, r)| Estimate::new(i, &model.infer(&r.y)))
                .collect();
            write_json(&out, &results)?;
        }
        Command::FitFs {
            target,
            k,
            r,
            samples,
            uniform,
            lr,
            iters,
            stop,
            gamma,
            seed,
            out,
        } => {
            let target: Target = target.parse()?;
            let cfg = FsFitConfig {
                samples,
                bound: r,
                learning_rate: lr,
                max_iters: iters,
                stop_loss: stop,
                gamma,
                mode: if uniform { SampleMode::Uniform } else { SampleMode::Grid },
                seed,
            };
            let fit = fs_fit(|s| target.eval(s), &cfg, k)?;
            eprintln!("loss {:.6e} after {} iterations", fit.loss, fit.iterations);
            FsParamFile::new(&fit.params, gamma, r, fit.loss).save(&out)?;
        }
        Command::FsEval {
            params,
            target,
            points,
            r,
            out,
        } => {
            let file = FsParamFile::load(&params)?;
            let fs = file.params()?;
            let target: Target = target.parse()?;
            let bound = r.unwrap_or(file.R);
            if points < 2 {
                bail!("--points must be at least 2");
            }
            let f = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = BufWriter::new(f);
            writeln!(w, "s,f,f_hat")?;
            for i in 0..points {
                let s = -bound + 2.0 * bound * i as f64 / (points - 1) as f64;
                let z = C64::new(s, 0.0);
                writeln!(w, "{s},{},{}", target.eval(z).re, fs.apply(z).re)?;
            }
            w.flush()?;
        }
        Command::Convert {
            model,
            fs_dir,
            k,
            bits,
            calibrate,
            calibration_records,
            samples,
            stop,
            iters,
            lr,
            out,
        } => {
            let model = SlistaModel::load(&model)?;
            let quantize = match bits {
                4 => true,
                0 => false,
                b => bail!("unsupported --bits {b} (4 or 0)"),
            };
            if let Some(data) = calibrate {
                let ds = load_dataset(&data, Some(calibration_records))?;
                let cfg = FsFitConfig {
                    samples,
                    stop_loss: stop,
                    max_iters: iters,
                    learning_rate: lr,
                    ..FsFitConfig::default()
                };
                let acts = fit_conversion_activations(&model, &ds.records, k, &cfg)?;
                std::fs::create_dir_all(&fs_dir)
                    .with_context(|| format!("creating {}", fs_dir.display()))?;
                let gamma = FsFitConfig::default().gamma;
                FsParamFile::new(&acts.input, gamma, acts.input_bound, acts.input_loss)
                    .save(&fs_file(&fs_dir, None))?;
                for (t, p) in acts.layers.iter().enumerate() {
                    FsParamFile::new(p, gamma, acts.layer_bounds[t], acts.layer_losses[t])
                        .save(&fs_file(&fs_dir, Some(t + 1)))?;
                    eprintln!("layer {} FS loss {:.3e}", t + 1, acts.layer_losses[t]);
                }
            }
            let load = |layer| -> Result<FsNeuronParams> {
                let p = FsParamFile::load(&fs_file(&fs_dir, layer))?.params()?;
                if p.k() != k {
                    bail!("FS parameters have K = {}, expected {k}", p.k());
                }
                Ok(p)
            };
            let input = load(None)?;
            let layers = (1..=model.num_layers())
                .map(|t| load(Some(t)))
                .collect::<Result<Vec<_>>>()?;
            let net = convert_slista_to_snn(&model, &input, &layers, quantize)?;
            net.save(&out)?;
            eprintln!(
                "{} populations, {} projections",
                net.populations.len(),
                net.projections.len()
            );
        }
        Command::Simulate {
            network,
            data,
            limit,
            trace_out,
            out,
        } => {
            let net = SpikingNetwork::load(&network)?;
            let ds = load_dataset(&data, limit)?;
            let inputs: Vec<Vec<C64>> = ds.records.iter().map(|r| r.y.clone()).collect();
            let sim = simulate_stream(&net, &inputs)?;
            let results: Vec<Estimate> = sim
                .outputs
                .iter()
                .enumerate()
                .map(|(i, b)| Estimate::new(i, b))
                .collect();
            write_json(&out, &results)?;
            if let Some(path) = trace_out {
                write_trace_csv(&path, &sim.trace)?;
            }
            eprintln!("{} spikes", sim.trace.len());
        }
        Command::Eval {
            config,
            out_csv,
            out_json,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let table = run_experiment(&cfg)?;
            for row in &table.rows {
                println!(
                    "{:<6} P={} SNR {}..{}  SRE {:.4} ± {:.4}  (n={}, failed {})",
                    row.method,
                    row.sources,
                    row.snr_min_db,
                    row.snr_max_db.map_or("inf".into(), |v| v.to_string()),
                    row.sre_mean,
                    row.sre_stderr,
                    row.records,
                    row.failures
                );
            }
            if let Some(p) = out_csv {
                table.write_csv(&p)?;
            }
            if let Some(p) = out_json {
                table.write_json(&p)?;
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
