//! Reverse-mode gradients of the relative-ℓ1 loss.
//!
//! Complex parameters are treated as pairs of reals; a gradient entry `g`
//! stores `∂L/∂Re + j ∂L/∂Im`. For a holomorphic linear map `z = W u` this
//! gives `g_u = Wᴴ g_z` and `g_W = g_z uᴴ`.

use super::{sigmoid, ForwardTrace, SlistaModel};
use crate::dataset::LabeledRecord;
use crate::error::{invalid, Error, Result};
use crate::linalg::{norm1, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradients {
    pub w1: Vec<C64>,
    pub kernel: Vec<C64>,
    pub alpha_raw: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn zeros(model: &SlistaModel) -> Self {
        let zero = C64::new(0.0, 0.0);
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGradients {
                    w1: vec![zero; l.w1.as_slice().len()],
                    kernel: vec![zero; l.kernel.len()],
                    alpha_raw: 0.0,
                })
                .collect(),
        }
    }
}

/// Accumulates `scale · ∇ relative_l1(label, forward(y))` into `grads`.
pub fn backward(
    model: &SlistaModel,
    y: &[C64],
    label: &[C64],
    trace: &ForwardTrace,
    scale: f64,
    grads: &mut Gradients,
) -> Result<()> {
    let denom = norm1(label);
    if denom == 0.0 {
        return invalid("relative l1 loss needs a nonzero label");
    }
    let t_last = model.num_layers() - 1;
    let zero = C64::new(0.0, 0.0);

    // d|e|/de = e/|e| with the zero subgradient at e = 0
    let mut g: Vec<C64> = trace.outputs[t_last]
        .iter()
        .zip(label)
        .map(|(bh, b)| {
            let e = bh - b;
            let r = e.norm();
            if r > 0.0 {
                e * (scale / (r * denom))
            } else {
                zero
            }
        })
        .collect();

    let n = model.num_sensors();
    for t in (0..=t_last).rev() {
        let layer = &model.layers[t];
        let lg = &mut grads.layers[t];
        let alpha = layer.alpha();
        let pre = &trace.pre_activations[t];

        let mut g_alpha = 0.0;
        let g_pre: Vec<C64> = pre
            .iter()
            .zip(&g)
            .map(|(&x, &go)| {
                let r = x.norm();
                if r <= alpha {
                    return zero;
                }
                let proj = x.re * go.re + x.im * go.im;
                g_alpha -= proj / r;
                go * (1.0 - alpha / r) + x * (alpha * proj / (r * r * r))
            })
            .collect();
        lg.alpha_raw += g_alpha * sigmoid(layer.alpha_raw);

        for (i, gp) in g_pre.iter().enumerate() {
            if *gp == zero {
                continue;
            }
            let row = &mut lg.w1[i * n..(i + 1) * n];
            for (w, yj) in row.iter_mut().zip(y) {
                *w += gp * yj.conj();
            }
        }

        if t > 0 {
            let prev = &trace.outputs[t - 1];
            model
                .plan()
                .accumulate_kernel_grad(prev, &g_pre, &mut lg.kernel);
            let mut g_prev = vec![zero; prev.len()];
            model
                .plan()
                .accumulate_input_grad(&layer.kernel, &g_pre, &mut g_prev);
            g = g_prev;
        }
    }
    Ok(())
}

/// Mean loss and mean gradient over a batch of records.
pub fn batch_gradients(
    model: &SlistaModel,
    records: &[&LabeledRecord],
) -> Result<(f64, Gradients)> {
    if records.is_empty() {
        return invalid("empty batch");
    }
    let scale = 1.0 / records.len() as f64;
    let mut grads = Gradients::zeros(model);
    let mut loss = 0.0;
    for r in records {
        let (bh, trace) = model.forward(&r.y);
        let l = super::relative_l1(&r.label, &bh)?;
        if !l.is_finite() {
            return Err(Error::NonFinite {
                context: "training loss".into(),
            });
        }
        loss += l * scale;
        backward(model, &r.y, &r.label, &trace, scale, &mut grads)?;
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMatrix;
    use crate::slista::{relative_l1, SlistaLayer};

    fn scalar_model(w1: C64, alpha: f64) -> SlistaModel {
        let mut layer = SlistaLayer {
            w1: CMatrix::from_vec(1, 1, vec![w1]),
            kernel: vec![C64::new(0.0, 0.0)],
            alpha_raw: 0.0,
        };
        layer.set_alpha(alpha);
        SlistaModel::new(vec![1], vec![1], 1, vec![layer]).unwrap()
    }

    #[test]
    fn scalar_network_closed_form() {
        // b̂ = S_α(w y); L = |b̂ − b| / |b|
        let (w, y, b, alpha) = (C64::new(0.8, 0.6), C64::new(2.0, -1.0), C64::new(0.3, 0.1), 0.5);
        let model = scalar_model(w, alpha);
        let (bh, trace) = model.forward(&[y]);
        let mut grads = Gradients::zeros(&model);
        backward(&model, &[y], &[b], &trace, 1.0, &mut grads).unwrap();

        let x = w * y;
        let r = x.norm();
        let e = bh[0] - b;
        let u = e / (e.norm() * b.norm());
        // g_x = (1 − α/r) u + α x Re(x̄ u)/r³ ; g_w = g_x ȳ
        let proj = (x.conj() * u).re;
        let g_x = u * (1.0 - alpha / r) + x * (alpha * proj / r.powi(3));
        let g_w = g_x * y.conj();
        let g_alpha = -proj / r * crate::slista::sigmoid(model.layers[0].alpha_raw);
        assert!((grads.layers[0].w1[0] - g_w).norm() < 1e-14);
        assert!((grads.layers[0].alpha_raw - g_alpha).abs() < 1e-14);
        assert_eq!(grads.layers[0].kernel[0], C64::new(0.0, 0.0));

        // finite differences on Re/Im of w
        let h = 1e-6;
        let loss = |w: C64| relative_l1(&[b], &scalar_model(w, alpha).infer(&[y])).unwrap();
        let fd_re = (loss(w + h) - loss(w - h)) / (2.0 * h);
        let fd_im = (loss(w + C64::new(0.0, h)) - loss(w - C64::new(0.0, h))) / (2.0 * h);
        assert!((fd_re - g_w.re).abs() < 1e-8);
        assert!((fd_im - g_w.im).abs() < 1e-8);
    }

    #[test]
    fn dead_threshold_has_zero_weight_gradients() {
        let d = crate::signal::Dictionary::uniform(&[4], &[8]).unwrap();
        let mut model = SlistaModel::init_from_fista(&d, 2, 3, 1.0).unwrap();
        for l in &mut model.layers {
            l.set_alpha(1e3);
        }
        let y: Vec<C64> = (0..4).map(|k| C64::new(k as f64, 1.0)).collect();
        let mut label = vec![C64::new(0.0, 0.0); 8];
        label[2] = C64::new(1.0, 0.0);
        let (_, trace) = model.forward(&y);
        let mut g = Gradients::zeros(&model);
        backward(&model, &y, &label, &trace, 1.0, &mut g).unwrap();
        for lg in &g.layers {
            assert!(lg.w1.iter().all(|v| *v == C64::new(0.0, 0.0)));
            assert!(lg.kernel.iter().all(|v| *v == C64::new(0.0, 0.0)));
        }
    }
}
