use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_gradients, Gradients, SlistaModel};
use crate::dataset::LabeledRecord;
use crate::error::{invalid, Error, Result};
use crate::linalg::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

/// ADAM with bias correction over a flat real parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

fn push_complex(out: &mut Vec<f64>, values: &[C64]) {
    for v in values {
        out.push(v.re);
        out.push(v.im);
    }
}

fn read_complex(src: &mut std::slice::Iter<'_, f64>, values: &mut [C64]) {
    for v in values {
        let re = *src.next().expect("parameter length");
        let im = *src.next().expect("parameter length");
        *v = C64::new(re, im);
    }
}

impl SlistaModel {
    /// Parameters as reals: per layer `W1`, kernel, then `alpha_raw`.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            push_complex(&mut out, l.w1.as_slice());
            push_complex(&mut out, &l.kernel);
            out.push(l.alpha_raw);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        let mut it = params.iter();
        for l in &mut self.layers {
            read_complex(&mut it, l.w1.as_mut_slice());
            read_complex(&mut it, &mut l.kernel);
            l.alpha_raw = *it.next().expect("parameter length");
        }
        assert!(it.next().is_none(), "parameter length");
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            push_complex(&mut out, &l.w1);
            push_complex(&mut out, &l.kernel);
            out.push(l.alpha_raw);
        }
        out
    }
}

/// Mini-batch ADAM on the relative-ℓ1 loss. Returns the mean training loss
/// of each epoch (measured during the epoch, before each batch's update).
pub fn train_adam(
    model: &mut SlistaModel,
    records: &[LabeledRecord],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    if records.is_empty() {
        return invalid("training set is empty");
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return invalid("epochs and batch size must be positive");
    }
    if !(config.learning_rate >= 0.0) {
        return invalid("learning rate must be nonnegative");
    }
    let mut params = model.flat_params();
    let mut adam = Adam::new(
        params.len(),
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.eps,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&LabeledRecord> = chunk.iter().map(|&i| &records[i]).collect();
            let (loss, grads) = batch_gradients(model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("epoch {epoch}"),
                });
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.update(&mut params, &grads.flatten());
            model.set_flat_params(&params);
        }
        history.push(epoch_loss / records.len() as f64);
    }
    Ok(history)
}
