//! Discrete-time simulator for converted networks.
//!
//! During a receive stage, a population sums the FS-decoded value of every
//! incoming spike per presynaptic neuron. When its send stage opens, each
//! neuron's membrane is initialised with the weighted sum of those values
//! (complex weights act on the `(re, im)` pair as the real block
//! `[[W_re, −W_im], [W_im, W_re]]`). The FS dynamics then run for `K`
//! steps and emit spikes. Populations reset completely between cycles.

use super::{decode_output, Part, Projection, SpikeRecord, SpikingNetwork, Topology};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, C64};
use crate::slista::ConvPlan;

/// One input's spike train; timesteps are absolute and `start` is the
/// injection time (a multiple of `2K`).
#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    pub start: usize,
    pub spikes: Vec<SpikeRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationOutput {
    /// Decoded output of the last population, one vector per injection.
    pub outputs: Vec<Vec<C64>>,
    /// Every spike emitted, including the input encoding, in time order.
    pub trace: Vec<SpikeRecord>,
}

#[derive(Clone, Copy, Debug)]
struct Delivery {
    projection: usize,
    injection: usize,
    neuron: usize,
    part: Part,
    /// Step within the presynaptic send stage.
    tau: usize,
}

/// Dense complex matrix-vector product; `dot` already is the real 2×2 block.
fn block_matvec(w: &[C64], cols: usize, x: &[C64], out: &mut [C64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = dot(row, x);
    }
}

/// Runtime view of a network: effective weights and convolution plans.
pub struct Simulator<'a> {
    net: &'a SpikingNetwork,
    weights: Vec<Vec<C64>>,
    plans: Vec<Option<ConvPlan>>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

impl<'a> Simulator<'a> {
    pub fn new(net: &'a SpikingNetwork) -> Result<Self> {
        let pops = net.populations.len();
        if pops != net.layers + 1 {
            return invalid("network needs one input and one population per layer");
        }
        let mut incoming = vec![Vec::new(); pops];
        let mut outgoing = vec![Vec::new(); pops];
        let mut weights = Vec::new();
        let mut plans = Vec::new();
        for (i, p) in net.projections.iter().enumerate() {
            if p.source >= pops || p.target >= pops || p.target == 0 {
                return invalid(format!("projection {i} has bad endpoints"));
            }
            let w = p.weights.effective();
            let plan = match &p.topology {
                Topology::Dense { rows, cols } => {
                    if w.len() != rows * cols
                        || *rows != net.populations[p.target].size
                        || *cols != net.populations[p.source].size
                    {
                        return Err(Error::Shape(format!("projection {i}: dense shape")));
                    }
                    None
                }
                Topology::Convolutional { shape, kernel_len } => {
                    let plan = ConvPlan::new(shape, *kernel_len)?;
                    if w.len() != plan.kernel_size() || plan.len() != net.populations[p.target].size
                    {
                        return Err(Error::Shape(format!("projection {i}: kernel shape")));
                    }
                    Some(plan)
                }
            };
            incoming[p.target].push(i);
            outgoing[p.source].push(i);
            weights.push(w);
            plans.push(plan);
        }
        Ok(Self {
            net,
            weights,
            plans,
            incoming,
            outgoing,
        })
    }

    fn projection(&self, i: usize) -> &Projection {
        &self.net.projections[i]
    }

    /// Runs every injection through the network on one shared clock.
    pub fn run(&self, injections: &[Injection]) -> Result<SimulationOutput> {
        let net = self.net;
        let k = net.k;
        let cycle = net.cycle();
        let pops = net.populations.len();
        for (i, inj) in injections.iter().enumerate() {
            if inj.start % cycle != 0 {
                return Err(Error::Schedule(format!(
                    "injection {i} starts at {}, not a multiple of 2K = {cycle}",
                    inj.start
                )));
            }
            if injections[..i].iter().any(|o| o.start == inj.start) {
                return Err(Error::Schedule(format!(
                    "two injections share start time {}",
                    inj.start
                )));
            }
        }
        let end = injections
            .iter()
            .map(|inj| inj.start + net.horizon)
            .max()
            .unwrap_or(0);
        let max_delay = net.projections.iter().map(|p| p.delay).max().unwrap_or(0);
        let mut pending: Vec<Vec<Delivery>> = vec![Vec::new(); end + max_delay + 1];
        let mut trace = Vec::new();

        // Route input spikes up front: replica r goes to the projection
        // carrying replica r.
        let n_in = net.input().size;
        for (inj_idx, inj) in injections.iter().enumerate() {
            for s in &inj.spikes {
                if s.population != 0 || s.neuron >= n_in {
                    return invalid(format!("input spike {s:?} does not address the input population"));
                }
                let rel = s
                    .timestep
                    .checked_sub(inj.start + k)
                    .ok_or_else(|| Error::Schedule(format!("input spike {s:?} precedes its send stage")))?;
                let (replica, tau) = (rel / cycle, rel % cycle);
                if tau >= k {
                    return Err(Error::Schedule(format!(
                        "input spike {s:?} falls outside a send stage"
                    )));
                }
                let proj = self.outgoing[0]
                    .iter()
                    .copied()
                    .find(|&p| self.projection(p).input_replica == Some(replica))
                    .ok_or_else(|| {
                        Error::Schedule(format!("no projection consumes input replica {replica}"))
                    })?;
                pending[s.timestep + self.projection(proj).delay].push(Delivery {
                    projection: proj,
                    injection: inj_idx,
                    neuron: s.neuron,
                    part: s.part,
                    tau,
                });
                trace.push(*s);
            }
        }

        let zero = C64::new(0.0, 0.0);
        // presyn[injection][projection]: decoded presynaptic values
        let mut presyn: Vec<Vec<Vec<C64>>> = injections
            .iter()
            .map(|_| {
                net.projections
                    .iter()
                    .map(|p| vec![zero; net.populations[p.source].size])
                    .collect()
            })
            .collect();
        // membranes[injection][population]: (re, im) during the send stage
        let mut membranes: Vec<Vec<Vec<(f64, f64)>>> =
            injections.iter().map(|_| vec![Vec::new(); pops]).collect();

        for now in 0..end {
            for d in std::mem::take(&mut pending[now]) {
                let p = self.projection(d.projection);
                let start = injections[d.injection].start;
                let window = net.receive_window(p.target, start);
                if !window.contains(&now) {
                    return Err(Error::Schedule(format!(
                        "spike for population {} arrives at {now}, outside its receive stage {window:?}",
                        p.target
                    )));
                }
                let fs = &net.populations[p.source].fs;
                let slot = &mut presyn[d.injection][d.projection][d.neuron];
                match d.part {
                    Part::Re => slot.re += fs.re.d[d.tau],
                    Part::Im => slot.im += fs.im.d[d.tau],
                }
            }

            for (inj_idx, inj) in injections.iter().enumerate() {
                for pop in 1..pops {
                    let window = net.send_window(pop, inj.start);
                    if !window.contains(&now) {
                        continue;
                    }
                    let tau = now - window.start;
                    if tau == 0 {
                        let drive = self.drive(pop, &presyn[inj_idx]);
                        membranes[inj_idx][pop] = drive.iter().map(|v| (v.re, v.im)).collect();
                    }
                    let fs = &net.populations[pop].fs;
                    for (neuron, v) in membranes[inj_idx][pop].iter_mut().enumerate() {
                        for (part, ch, mem) in [(Part::Re, &fs.re, &mut v.0), (Part::Im, &fs.im, &mut v.1)] {
                            if *mem - ch.threshold[tau] > 0.0 {
                                *mem -= ch.h[tau];
                                trace.push(SpikeRecord {
                                    population: pop,
                                    neuron,
                                    part,
                                    timestep: now,
                                });
                                for &proj in &self.outgoing[pop] {
                                    pending[now + self.projection(proj).delay].push(Delivery {
                                        projection: proj,
                                        injection: inj_idx,
                                        neuron,
                                        part,
                                        tau,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }

        if let Some(late) = pending.iter().flatten().next() {
            return Err(Error::Schedule(format!(
                "spike on projection {} never delivered",
                late.projection
            )));
        }
        trace.sort_by_key(|s| (s.timestep, s.population, s.neuron, s.part));
        let out_pop = net.output();
        let outputs = injections
            .iter()
            .map(|inj| {
                let w = net.send_window(out_pop.id, inj.start);
                decode_output(&trace, out_pop.id, out_pop.size, &out_pop.fs, w.start)
            })
            .collect();
        Ok(SimulationOutput { outputs, trace })
    }

    /// Weighted input of population `pop`, projections summed in network order.
    fn drive(&self, pop: usize, presyn: &[Vec<C64>]) -> Vec<C64> {
        let size = self.net.populations[pop].size;
        let mut out = vec![C64::new(0.0, 0.0); size];
        let mut first = true;
        for &i in &self.incoming[pop] {
            let x = &presyn[i];
            match (&self.projection(i).topology, &self.plans[i]) {
                (Topology::Dense { cols, .. }, _) => {
                    if first {
                        block_matvec(&self.weights[i], *cols, x, &mut out);
                    } else {
                        let mut tmp = vec![C64::new(0.0, 0.0); size];
                        block_matvec(&self.weights[i], *cols, x, &mut tmp);
                        out.iter_mut().zip(tmp).for_each(|(o, t)| *o += t);
                    }
                }
                (Topology::Convolutional { .. }, Some(plan)) => {
                    plan.accumulate(&self.weights[i], x, &mut out);
                }
                (Topology::Convolutional { .. }, None) => unreachable!("plan built in new()"),
            }
            first = false;
        }
        out
    }
}

/// Simulates a single input injected at time 0.
pub fn simulate(net: &SpikingNetwork, input_spikes: &[SpikeRecord]) -> Result<(Vec<C64>, Vec<SpikeRecord>)> {
    let out = Simulator::new(net)?.run(&[Injection {
        start: 0,
        spikes: input_spikes.to_vec(),
    }])?;
    let SimulationOutput { mut outputs, trace } = out;
    Ok((outputs.pop().expect("one injection"), trace))
}

/// Encodes and simulates several measurements injected `2K` apart.
pub fn simulate_stream(net: &SpikingNetwork, inputs: &[Vec<C64>]) -> Result<SimulationOutput> {
    let cycle = net.cycle();
    let injections: Vec<Injection> = inputs
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let start = i * cycle;
            let spikes = super::encode_input_spikes(y, &net.input().fs, net.layers)
                .into_iter()
                .map(|s| SpikeRecord {
                    timestep: s.timestep + start,
                    ..s
                })
                .collect();
            Injection { start, spikes }
        })
        .collect();
    Simulator::new(net)?.run(&injections)
}
