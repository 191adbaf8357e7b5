use mhr_core::dataset::{generate_dataset, DatasetConfig, LabeledDataset};
use mhr_core::harness::{
    run_experiment, run_experiment_with, support_recovery_error, Estimator, ExperimentConfig, FistaEstimator, Method,
    ResultRow, ResultsTable, SnrBin,
};
use mhr_core::signal::Dictionary;
use mhr_core::solvers::SolverConfig;
use mhr_core::{Error, Result, C64};
use proptest::prelude::*;

const ALL_SNR: SnrBin = SnrBin {
    min_db: 0.0,
    max_db: None,
};

fn dataset(snr: f64, sources_max: usize, count: usize) -> LabeledDataset {
    let d = Dictionary::uniform(&[16], &[32]).unwrap();
    generate_dataset(
        &d,
        &DatasetConfig {
            count,
            sources_min: 1,
            sources_max,
            snr_db_min: snr,
            snr_db_max: snr,
            seed: 4,
            off_grid: false,
        },
    )
    .unwrap()
}

fn config(dir: &std::path::Path, methods: Vec<Method>, sources: Vec<usize>) -> ExperimentConfig {
    ExperimentConfig {
        snr_bins: vec![ALL_SNR],
        sources,
        record_runtime: false,
        ..ExperimentConfig::new(dir.join("data.bin"), methods)
    }
}

fn row(method: Method) -> ResultRow {
    ResultRow {
        method,
        sources: 2,
        snr_min_db: 10.0,
        snr_max_db: Some(30.0),
        records: 7,
        failures: 1,
        sre_mean: 0.25,
        sre_stderr: 0.0625,
        runtime_mean_s: Some(0.5),
        runtime_std_s: Some(0.125),
    }
}

#[test]
fn noiseless_single_sources_are_recovered_by_fista() {
    let dir = tempfile::tempdir().unwrap();
    dataset(f64::INFINITY, 1, 40).save(&dir.path().join("data.bin")).unwrap();
    let table = run_experiment(&config(dir.path(), vec![Method::Fista], vec![1])).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].records, 40);
    assert_eq!(table.rows[0].sre_mean, 0.0);
}

#[test]
fn repeated_runs_produce_identical_tables_and_files() {
    let dir = tempfile::tempdir().unwrap();
    dataset(15.0, 5, 60).save(&dir.path().join("data.bin")).unwrap();
    let cfg = config(dir.path(), vec![Method::Fista], (1..=5).collect());
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a, b);
    // one row per (method, P) over P = 1..5 with a single bin
    let ps: Vec<usize> = a.rows.iter().map(|r| r.sources).collect();
    assert_eq!(ps, vec![1, 2, 3, 4, 5]);
    let (ca, cb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    a.write_csv(&ca).unwrap();
    b.write_csv(&cb).unwrap();
    assert_eq!(std::fs::read(&ca).unwrap(), std::fs::read(&cb).unwrap());
}

#[test]
fn one_row_table_is_a_two_line_csv_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let table = ResultsTable { rows: vec![row(Method::Snn)] };
    let csv = dir.path().join("t.csv");
    table.write_csv(&csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(
        text.lines().next().unwrap(),
        "method,sources,snr_min_db,snr_max_db,records,failures,sre_mean,sre_stderr,runtime_mean_s,runtime_std_s"
    );
    assert_eq!(ResultsTable::read_csv(&csv).unwrap(), table);

    let json = dir.path().join("t.json");
    let two = ResultsTable { rows: vec![row(Method::Fista), row(Method::Slista)] };
    two.write_json(&json).unwrap();
    assert_eq!(ResultsTable::read_json(&json).unwrap(), two);

    assert!(ResultsTable::default().write_csv(&dir.path().join("e.csv")).is_err());
}

#[test]
fn missing_artifacts_fail_before_any_inference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), vec![Method::Fista], vec![1]);
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    assert!(err.to_string().contains("data.bin"));

    dataset(20.0, 2, 5).save(&dir.path().join("data.bin")).unwrap();
    let mut cfg = config(dir.path(), vec![Method::Fista, Method::Slista], vec![1, 2]);
    cfg.slista_model = Some(dir.path().join("absent.ckpt"));
    let err = run_experiment(&cfg).unwrap_err();
    assert!(err.to_string().contains("absent.ckpt"), "{err}");

    cfg.slista_model = None;
    assert!(run_experiment(&cfg).is_err());
}

struct Flaky;

impl Estimator for Flaky {
    fn estimate(&self, y: &[C64]) -> Result<Vec<C64>> {
        if y[0].re > 0.0 {
            Err(Error::InvalidArgument("refused".into()))
        } else {
            Ok(vec![C64::new(1.0, 0.0); 32])
        }
    }
}

#[test]
fn per_record_failures_are_counted_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(20.0, 3, 50);
    let mut cfg = config(dir.path(), vec![Method::Snn], vec![1, 2, 3]);
    cfg.snn_network = Some(dir.path().join("unused.json"));
    let table = run_experiment_with(&cfg, &data, &[(Method::Snn, &Flaky)]).unwrap();
    let failures: usize = table.rows.iter().map(|r| r.failures).sum();
    let ok: usize = table.rows.iter().map(|r| r.records).sum();
    let expected = data.records.iter().filter(|r| r.y[0].re > 0.0).count();
    assert_eq!(failures, expected);
    assert_eq!(ok + failures, 50);
}

struct Relabeled<'a>(&'a dyn Estimator);

impl Estimator for Relabeled<'_> {
    fn estimate(&self, y: &[C64]) -> Result<Vec<C64>> {
        self.0.estimate(y)
    }
}

#[test]
fn table_statistics_do_not_depend_on_the_method_label() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(12.0, 4, 80);
    let d = data.dictionary().unwrap();
    let fista = FistaEstimator::new(d.matrix(), SolverConfig::default()).unwrap();
    let same = Relabeled(&fista);
    let mut cfg = config(dir.path(), vec![Method::Fista, Method::Slista], (1..=4).collect());
    cfg.slista_model = Some(dir.path().join("unused.ckpt"));
    let table = run_experiment_with(&cfg, &data, &[(Method::Fista, &fista), (Method::Slista, &same)]).unwrap();
    for p in 1..=4 {
        let a = table.row(Method::Fista, p).next().unwrap();
        let b = table.row(Method::Slista, p).next().unwrap();
        assert_eq!((a.records, a.sre_mean, a.sre_stderr), (b.records, b.sre_mean, b.sre_stderr));
    }
}

fn sparse_vector(len: usize) -> impl Strategy<Value = Vec<C64>> {
    proptest::collection::vec(
        prop_oneof![
            Just(C64::new(0.0, 0.0)),
            (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b)| C64::new(a, b)),
        ],
        len,
    )
}

proptest! {
    #[test]
    fn sre_is_a_fraction_and_permutation_invariant(
        est in sparse_vector(12),
        truth in sparse_vector(12),
        shift in 0usize..12,
    ) {
        prop_assume!(truth.iter().any(|v| v.norm() > 1e-6));
        let sre = support_recovery_error(&est, &truth, 1e-6).unwrap();
        prop_assert!((0.0..=1.0).contains(&sre));
        let rotate = |v: &[C64]| -> Vec<C64> { (0..12).map(|i| v[(i + shift) % 12]).collect() };
        let rotated = support_recovery_error(&rotate(&est), &rotate(&truth), 1e-6).unwrap();
        // ties in magnitude may break differently after rotation
        let distinct = {
            let mut m: Vec<f64> = est.iter().map(|v| v.norm()).filter(|&x| x > 1e-6).collect();
            m.sort_by(f64::total_cmp);
            m.windows(2).all(|w| w[0] != w[1])
        };
        if distinct {
            prop_assert_eq!(sre, rotated);
        }
        prop_assert_eq!(support_recovery_error(&truth, &truth, 1e-6).unwrap(), 0.0);
    }
}
