#![allow(dead_code)]

use mhr_core::dataset::LabeledRecord;
use mhr_core::linalg::CMatrix;
use mhr_core::slista::{relative_l1, SlistaModel};
use mhr_core::C64;
use nalgebra::{DMatrix, DVector};

pub fn to_na(a: &CMatrix) -> DMatrix<C64> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)])
}

/// Largest eigenvalue of `AᴴA` by dense Hermitian eigendecomposition of the
/// smaller Gram matrix.
pub fn max_gram_eigenvalue(a: &CMatrix) -> f64 {
    let m = to_na(a);
    let gram = if m.nrows() <= m.ncols() {
        &m * m.adjoint()
    } else {
        m.adjoint() * &m
    };
    gram.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v))
}

/// Eigenvalues of the Hermitian matrix `I − AᴴA/η`.
pub fn iteration_spectrum(a: &CMatrix, eta: f64) -> Vec<f64> {
    let m = to_na(a);
    let n = m.ncols();
    let op = DMatrix::<C64>::identity(n, n) - (m.adjoint() * &m).map(|v| v / eta);
    op.symmetric_eigen().eigenvalues.iter().copied().collect()
}

fn shrink_oracle(x: C64, alpha: f64) -> C64 {
    let r = (x.re * x.re + x.im * x.im).sqrt();
    if r <= alpha {
        C64::new(0.0, 0.0)
    } else {
        x * ((r - alpha) / r)
    }
}

/// `iters` ISTA steps from zero, written directly against nalgebra.
pub fn ista_oracle(a: &CMatrix, y: &[C64], lambda: f64, eta: f64, iters: usize) -> Vec<C64> {
    let m = to_na(a);
    let yv = DVector::from_column_slice(y);
    let mut b = DVector::<C64>::zeros(m.ncols());
    for _ in 0..iters {
        let grad = m.adjoint() * (&yv - &m * &b);
        let z = &b + grad.map(|v| v / eta);
        b = z.map(|v| shrink_oracle(v, lambda / eta));
    }
    b.iter().copied().collect()
}

/// Atom maximizing `|a_lᴴ y|`, and whether the maximum is unique by `margin`.
pub fn correlation_argmax(a: &CMatrix, y: &[C64], margin: f64) -> (usize, bool) {
    let scores: Vec<f64> = (0..a.cols())
        .map(|l| {
            a.column(l)
                .iter()
                .zip(y)
                .map(|(c, v)| c.conj() * v)
                .sum::<C64>()
                .norm()
        })
        .collect();
    let best = (0..scores.len())
        .max_by(|&i, &j| scores[i].total_cmp(&scores[j]))
        .unwrap();
    let unique = scores
        .iter()
        .enumerate()
        .all(|(l, &s)| l == best || s < scores[best] - margin);
    (best, unique)
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn mean_loss(model: &SlistaModel, records: &[&LabeledRecord]) -> f64 {
    records
        .iter()
        .map(|r| relative_l1(&r.label, &model.infer(&r.y)).unwrap())
        .sum::<f64>()
        / records.len() as f64
}

/// True if every pre-activation modulus stays `margin` away from its
/// threshold and every nonzero output stays `margin` away from its label,
/// so the loss is smooth in a neighbourhood of the current parameters.
pub fn is_smooth_point(model: &SlistaModel, records: &[&LabeledRecord], margin: f64) -> bool {
    records.iter().all(|r| {
        let (out, trace) = model.forward(&r.y);
        let pre_ok = trace
            .pre_activations
            .iter()
            .zip(&model.layers)
            .all(|(pre, layer)| pre.iter().all(|v| (v.norm() - layer.alpha()).abs() > margin));
        let out_ok = out
            .iter()
            .zip(&r.label)
            .all(|(b, l)| b.norm() == 0.0 || (b - l).norm() > margin);
        pre_ok && out_ok
    })
}

/// Relative ℓ2 error between analytic and central-difference gradients over
/// the flat parameter indices `coords`.
pub fn gradient_check(model: &SlistaModel, records: &[&LabeledRecord], coords: &[usize], h: f64) -> f64 {
    let (_, grads) = mhr_core::slista::batch_gradients(model, records).unwrap();
    let analytic = grads.flatten();
    let base = model.flat_params();
    let mut probe = model.clone();
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for &i in coords {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_flat_params(&p);
        let up = mean_loss(&probe, records);
        p[i] = base[i] - h;
        probe.set_flat_params(&p);
        let down = mean_loss(&probe, records);
        let fd = (up - down) / (2.0 * h);
        num += (analytic[i] - fd).powi(2);
        den += fd.powi(2).max(analytic[i].powi(2));
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Mean squared error of the best approximation `g(Re s) + j·h(Im s)` of
/// `f` on an `n × n` lattice of `[−r, r]²` (conditional means per axis).
pub fn separable_floor(f: impl Fn(C64) -> C64, r: f64, n: usize) -> f64 {
    let axis: Vec<f64> = (0..n)
        .map(|i| -r + 2.0 * r * i as f64 / (n - 1) as f64)
        .collect();
    let vals: Vec<Vec<C64>> = axis
        .iter()
        .map(|&x| axis.iter().map(|&y| f(C64::new(x, y))).collect())
        .collect();
    let mut err = 0.0;
    for i in 0..n {
        let mean_re = (0..n).map(|j| vals[i][j].re).sum::<f64>() / n as f64;
        err += (0..n).map(|j| (vals[i][j].re - mean_re).powi(2)).sum::<f64>();
    }
    for j in 0..n {
        let mean_im = (0..n).map(|i| vals[i][j].im).sum::<f64>() / n as f64;
        err += (0..n).map(|i| (vals[i][j].im - mean_im).powi(2)).sum::<f64>();
    }
    err / (n * n) as f64
}
