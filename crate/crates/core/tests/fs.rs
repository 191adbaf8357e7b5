use mhr_core::fs::{fs_fit, mean_fit_error, sample_domain, FsChannel, FsFitConfig, FsNeuronParams, SampleMode, Target};
use mhr_core::C64;
use proptest::prelude::*;
use std::collections::HashSet;

fn channel(k: usize) -> impl Strategy<Value = FsChannel> {
    let v = move || proptest::collection::vec(-2.0f64..2.0, k);
    (v(), v(), v()).prop_map(|(d, h, threshold)| FsChannel { d, h, threshold })
}

fn params() -> impl Strategy<Value = FsNeuronParams> {
    (1usize..10).prop_flat_map(|k| (channel(k), channel(k)))
        .prop_map(|(re, im)| FsNeuronParams::new(re, im).unwrap())
}

fn point() -> impl Strategy<Value = C64> {
    (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| C64::new(a, b))
}

#[test]
fn fitted_identity_is_below_stop_loss_on_its_grid() {
    let cfg = FsFitConfig::default();
    let fit = fs_fit(|s| s, &cfg, 30).unwrap();
    let grid = sample_domain(cfg.bound, cfg.samples, SampleMode::Grid, 0).unwrap();
    let err = mean_fit_error(&fit.params, |s| s, &grid);
    assert!(err < cfg.stop_loss, "{err}");
    assert!((err - fit.loss).abs() < 1e-12);
}

#[test]
fn uniform_samples_have_centered_mean() {
    for r in [0.5, 2.0] {
        let pts = sample_domain(r, 10_000, SampleMode::Uniform, 17).unwrap();
        let n = pts.len() as f64;
        let mean_re = pts.iter().map(|p| p.re).sum::<f64>() / n;
        let mean_im = pts.iter().map(|p| p.im).sum::<f64>() / n;
        assert!(mean_re.abs() < 0.05 * r && mean_im.abs() < 0.05 * r);
        assert!(pts.iter().all(|p| p.re.abs() <= r && p.im.abs() <= r));
        assert_eq!(pts, sample_domain(r, 10_000, SampleMode::Uniform, 17).unwrap());
    }
}

proptest! {
    #[test]
    fn scaling_decoders_scales_output_with_same_spikes(p in params(), s in point(), c in -3.0f64..3.0) {
        let base = p.forward(s);
        let mut scaled = p.clone();
        for ch in [&mut scaled.re, &mut scaled.im] {
            ch.d.iter_mut().for_each(|d| *d *= c);
        }
        let out = scaled.forward(s);
        prop_assert_eq!(&out.spikes_re, &base.spikes_re);
        prop_assert_eq!(&out.spikes_im, &base.spikes_im);
        prop_assert!((out.value - base.value * c).norm() <= 1e-12 * (1.0 + base.value.norm() * c.abs()));
    }

    #[test]
    fn spike_counts_and_output_alphabet_are_bounded(
        p in params(),
        xs in proptest::collection::vec(point(), 1..300),
    ) {
        let k = p.k();
        let mut re_vals = HashSet::new();
        let mut im_vals = HashSet::new();
        for &s in &xs {
            let r = p.forward(s);
            prop_assert_eq!(r.spikes_re.len(), k);
            prop_assert_eq!(r.spikes_im.len(), k);
            prop_assert_eq!(r.value, p.decode(&r.spikes_re, &r.spikes_im));
            re_vals.insert(r.spikes_re);
            im_vals.insert(r.spikes_im);
        }
        prop_assert!(re_vals.len() <= 1 << k && im_vals.len() <= 1 << k);
    }

    #[test]
    fn calls_do_not_share_state(p in params(), a in point(), b in point()) {
        let first = p.forward(a);
        let _ = p.forward(b);
        prop_assert_eq!(p.forward(a), first.clone());
        let mixed = p.forward(C64::new(a.re, b.im));
        prop_assert_eq!(mixed.spikes_re, first.spikes_re);
        prop_assert_eq!(mixed.spikes_im, p.forward(b).spikes_im);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn best_so_far_fit_trace_never_rises(seed in any::<u64>(), alpha in 0.0f64..1.0) {
        let cfg = FsFitConfig {
            samples: 64,
            max_iters: 60,
            mode: SampleMode::Uniform,
            seed,
            learning_rate: 0.05,
            stop_loss: 0.0,
            ..FsFitConfig::default()
        };
        let target = Target::SoftThreshold(alpha);
        let fit = fs_fit(|s| target.eval(s), &cfg, 6).unwrap();
        for w in fit.trace.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        prop_assert_eq!(*fit.trace.last().unwrap(), fit.loss);
    }
}
