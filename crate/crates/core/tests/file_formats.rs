mod common;

use common::{dense_net, normal_tensor, widen};
use inn_core::experiment::{dataset, direction_table};
use inn_core::config::{RunConfig, Scale};
use inn_core::io::{
    emit_csv, emit_svg_lineplot, load_checkpoint, load_dataset, save_checkpoint, save_dataset,
    Checkpoint, LinePlot, Model, Series, TrainingMeta,
};
use inn_core::experiment::EvalReport;
use inn_core::metrics::direction_sweep;
use inn_core::rng::stream_rng;
use inn_core::Error;

fn meta() -> TrainingMeta {
    TrainingMeta { seed: 9, epochs: 30, lr: 1e-3, beta: 0.05 }
}

#[test]
fn saved_interval_network_reproduces_outputs_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = stream_rng(31, 0);
    let inn = widen(&dense_net(&[4, 6, 3], &mut rng), 0.2, &mut rng);
    let path = dir.path().join("inn.ckpt");
    let ckpt = Checkpoint { model: Model::Interval(inn.clone()), meta: meta() };
    save_checkpoint(&path, &ckpt).unwrap();
    let back = load_checkpoint(&path).unwrap();
    let Model::Interval(loaded) = &back.model else { panic!("wrong kind") };
    let x = normal_tensor(&[5, 4], 1.0, &mut rng);
    let (a, b) = (inn.forward(&x).unwrap(), loaded.forward(&x).unwrap());
    for (p, q) in a.lower.data().iter().chain(a.upper.data()).zip(b.lower.data().iter().chain(b.upper.data())) {
        assert_eq!(p.to_bits(), q.to_bits());
    }
    let again = dir.path().join("again.ckpt");
    save_checkpoint(&again, &back).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn truncated_checkpoint_file_is_a_corruption_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = stream_rng(32, 0);
    let net = dense_net(&[3, 2], &mut rng);
    let path = dir.path().join("base.ckpt");
    save_checkpoint(&path, &Checkpoint { model: Model::Base(net), meta: meta() }).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Corrupt(_))));
}

#[test]
fn dataset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::for_scale(Scale::Desk);
    cfg.data.n = 32;
    cfg.data.m = 20;
    cfg.data.sigma = 0.02;
    let ds = dataset(&cfg).unwrap();
    let path = dir.path().join("data.innd");
    save_dataset(&path, &ds).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), ds);
}

#[test]
fn direction_csv_proportion_column_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = stream_rng(33, 0);
    let inn = widen(&dense_net(&[4, 8, 4], &mut rng), 0.3, &mut rng);
    let x = normal_tensor(&[10, 4], 1.0, &mut rng);
    let y = normal_tensor(&[10, 4], 1.0, &mut rng);
    let pred = inn.base().forward(&x).unwrap();
    let b = inn.forward(&x).unwrap();
    let thresholds = [1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0];
    let report = EvalReport {
        seed: 0,
        beta: 0.1,
        methods: vec![],
        direction: direction_sweep(&pred, &b.lower, &b.upper, &y, &thresholds).unwrap(),
        markov_train: vec![],
        markov_test: vec![],
    };
    let path = dir.path().join("direction.csv");
    emit_csv(&direction_table(&[report]), &path).unwrap();
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let props: Vec<f64> = rd.records().map(|r| r.unwrap()[3].parse().unwrap()).collect();
    assert_eq!(props.len(), thresholds.len());
    assert!(props.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn io_failures_name_the_path() {
    let plot = LinePlot {
        title: "t".into(),
        x_label: "x".into(),
        y_label: "y".into(),
        series: vec![Series { name: "s".into(), color: "red".into(), points: vec![(0.0, 1.0)] }],
    };
    let err = emit_svg_lineplot(&plot, std::path::Path::new("/no/such/dir/p.svg")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("/no/such/dir/p.svg"));
}
