//! Optimisation, evaluation, metrics and checkpoints.

mod common;

use common::*;
use microexp_core::dataio::Sample;
use microexp_core::models::{build, init_params, ArchKind};
use microexp_core::nn::{Mode, NetworkGraph};
use microexp_core::trainer::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Seeds};
use microexp_core::trainer::metrics::{format_mean_std, last_k_stats, mean_std, ConfusionMatrix, EpochLog, EpochRow};
use microexp_core::trainer::report::MetricsReport;
use microexp_core::trainer::{evaluate, train_samples, Predictor, TrainConfig};
use microexp_core::{Error, Precision, Result, Scalar, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(epochs: usize, lr: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        learning_rate: lr,
        seed,
        precision: Precision::F64,
        ..TrainConfig::default()
    }
}

fn run(g: &mut NetworkGraph<f64>, train: &[Sample<f64>], val: &[Sample<f64>], c: &TrainConfig) -> EpochLog {
    train_samples(g, train, val, c, &mut |_, _| Ok(())).unwrap()
}

fn values<T: Scalar>(g: &NetworkGraph<T>) -> Vec<Vec<T>> {
    g.params().iter().map(|p| p.value.as_slice().to_vec()).collect()
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let mut g = built(&tiny_stcnn(), 1);
    let data = noise_samples(&g, 9, 2);
    let before = values(&g);
    run(&mut g, &data[..6], &data[6..], &cfg(4, 0.0, 3));
    let after = values(&g);
    for (a, b) in before.iter().flatten().zip(after.iter().flatten()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn identical_seeds_give_identical_runs() {
    let spec = tiny_fusion(ArchKind::FuseIntermediate);
    let go = || {
        let mut g = built(&spec, 4);
        let data = noise_samples(&g, 10, 5);
        let log = run(&mut g, &data[..7], &data[7..], &cfg(3, 0.05, 6));
        (values(&g), log)
    };
    let (pa, la) = go();
    let (pb, lb) = go();
    assert_eq!(pa, pb);
    for (a, b) in la.epochs.iter().zip(&lb.epochs) {
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        assert_eq!(a.val_accuracy, b.val_accuracy);
        assert_eq!(a.val_confusion, b.val_confusion);
    }

    let mut g = built(&spec, 4);
    let data = noise_samples(&g, 10, 5);
    run(&mut g, &data[..7], &data[7..], &cfg(3, 0.05, 7));
    assert_ne!(values(&g), pa);
}

#[test]
fn training_loss_falls_on_blobs() {
    let spec = reduced_stcnn();
    let data = blob_samples::<f64>(&spec, 3, 4, 11);
    let mut g = built(&spec, 12);
    let log = run(&mut g, &data, &data[..3], &cfg(5, 0.01, 13));
    let losses: Vec<f64> = log.epochs.iter().map(|r| r.train_loss).collect();
    assert!(losses[4] < losses[0], "{losses:?}");
    assert!(losses.iter().all(|l| l.is_finite()));
}

#[test]
fn eval_every_skips_intermediate_epochs() {
    let mut g = built(&tiny_stcnn(), 1);
    let data = noise_samples(&g, 6, 2);
    let c = TrainConfig { eval_every: 2, ..cfg(5, 0.01, 0) };
    let log = run(&mut g, &data[..4], &data[4..], &c);
    let evaluated: Vec<bool> = log.epochs.iter().map(|r| r.val_accuracy.is_some()).collect();
    assert_eq!(evaluated, vec![false, true, false, true, true]);
}

#[test]
fn empty_subsets_rejected() {
    let mut g = built(&tiny_stcnn(), 1);
    let data = noise_samples(&g, 2, 2);
    let err = train_samples(&mut g, &[], &data, &cfg(1, 0.1, 0), &mut |_, _| Ok(())).unwrap_err();
    assert!(matches!(err, Error::EmptySubset(_)));
}

fn checkpoint_round_trip<T: Scalar>() {
    for kind in [ArchKind::Stcnn, ArchKind::FuseIntermediate, ArchKind::FuseLate] {
        let spec = if kind == ArchKind::Stcnn { tiny_stcnn() } else { tiny_fusion(kind) };
        let mut g = build::<T>(&spec).unwrap();
        init_params(&mut g, 21);
        let ckpt = Checkpoint::from_graph(
            &g,
            spec.clone(),
            TrainConfig::default(),
            EpochLog::default(),
            Seeds { train: 1, split: Some(2) },
            vec!["a".into(), "b".into(), "c".into()],
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mex3");
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, ckpt);
        let restored = loaded.build_graph::<T>().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..10 {
            let inputs: Vec<Tensor<T>> = random_inputs(&mut rng, &build::<f64>(&spec).unwrap())
                .iter()
                .map(|t| t.cast())
                .collect();
            let refs: Vec<&Tensor<T>> = inputs.iter().collect();
            let a = g.forward(&refs, Mode::Infer).unwrap().probs;
            let b = restored.forward(&refs, Mode::Infer).unwrap().probs;
            assert!(a.iter().zip(&b).all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits()));
        }
    }
}

#[test]
fn checkpoint_round_trip_f32() {
    checkpoint_round_trip::<f32>();
}

#[test]
fn checkpoint_round_trip_f64() {
    checkpoint_round_trip::<f64>();
}

fn sample_checkpoint() -> Checkpoint {
    let g = built(&tiny_stcnn(), 3);
    let mut log = EpochLog::default();
    log.epochs.push(EpochRow {
        epoch: 1,
        train_loss: 1.25,
        train_accuracy: Some(0.5),
        val_accuracy: Some(0.25),
        val_confusion: Some(ConfusionMatrix::new(3)),
        wall_time: 0.0,
    });
    Checkpoint::from_graph(&g, tiny_stcnn(), TrainConfig::default(), log, Seeds::default(), vec!["x".into(); 3])
}

#[test]
fn truncated_checkpoint_never_decodes() {
    let bytes = sample_checkpoint().encode().unwrap();
    for cut in [0, 3, 5, 9, 40, bytes.len() / 2, bytes.len() - 8, bytes.len() - 1] {
        let err = Checkpoint::decode(&bytes[..cut]).unwrap_err();
        assert!(matches!(err, Error::Truncated(_) | Error::BadMagic { .. }), "cut {cut}: {err}");
    }
    let tail = Checkpoint::decode(&bytes[..bytes.len() - 3]).unwrap_err().to_string();
    assert!(tail.contains("dense_out.bias"), "{tail}");
}

#[test]
fn version_and_magic_errors() {
    let mut bytes = sample_checkpoint().encode().unwrap();
    bytes[4] = 2;
    assert!(matches!(
        Checkpoint::decode(&bytes),
        Err(Error::UnsupportedVersion { found: 2, supported: 1 })
    ));
    bytes[0] = b'Z';
    assert!(matches!(Checkpoint::decode(&bytes), Err(Error::BadMagic { .. })));
    let mut extra = sample_checkpoint().encode().unwrap();
    extra.push(0);
    assert!(matches!(Checkpoint::decode(&extra), Err(Error::Malformed { .. })));
}

#[test]
fn precision_mismatch_rejected() {
    let ckpt = sample_checkpoint();
    assert!(ckpt.build_graph::<f32>().is_err());
    assert!(ckpt.build_graph::<f64>().is_ok());
}

/// Scores keyed by the sample id.
struct Fixed(fn(&str, usize) -> usize);

impl Predictor<f64> for Fixed {
    fn scores(&self, s: &Sample<f64>) -> Result<Vec<f64>> {
        let mut v = vec![0.0; 3];
        v[(self.0)(&s.id, s.label)] = 1.0;
        Ok(v)
    }
}

fn labelled(labels: &[usize]) -> Vec<Sample<f64>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| Sample { inputs: vec![], label, id: format!("s{i}") })
        .collect()
}

#[test]
fn perfect_and_constant_predictors() {
    let data = labelled(&[0, 1, 2, 0, 1, 2, 0, 1, 2, 2]);
    let (acc, m) = evaluate(&Fixed(|_, l| l), &data, 3).unwrap();
    assert_eq!(acc, 1.0);
    assert_eq!(m.rows(), &[vec![3, 0, 0], vec![0, 3, 0], vec![0, 0, 4]]);

    let balanced = labelled(&[0, 1, 2, 0, 1, 2]);
    let (acc, m) = evaluate(&Fixed(|_, _| 0), &balanced, 3).unwrap();
    assert!((acc - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(m.rows().iter().map(|r| r[0]).collect::<Vec<_>>(), vec![2, 2, 2]);
}

#[test]
fn table_rows_accuracy() {
    let m = ConfusionMatrix::from_rows(vec![vec![19, 1, 1], vec![0, 11, 1], vec![1, 1, 6]]).unwrap();
    assert_eq!((m.trace(), m.total()), (36, 41));
    assert!((m.accuracy() - 36.0 / 41.0).abs() < 1e-15);
    assert_eq!(format!("{:.2}", 100.0 * m.accuracy()), "87.80");
}

#[test]
fn last_k_statistics() {
    let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
    assert_eq!((m, s), (2.0, 1.0));
    assert_eq!(mean_std(&[0.37; 10]).1, 0.0);
    assert_eq!(format_mean_std(0.822, 0.0502), "82.20±5.02%");

    let mut log = EpochLog::default();
    for (i, acc) in [0.1, 0.2, 0.3, 0.4].into_iter().enumerate() {
        log.epochs.push(EpochRow {
            epoch: i + 1,
            train_loss: 0.0,
            train_accuracy: None,
            val_accuracy: Some(acc),
            val_confusion: Some(ConfusionMatrix::new(2)),
            wall_time: 0.0,
        });
    }
    let (m, s) = last_k_stats(&log, 3).unwrap();
    assert!((m - 0.3).abs() < 1e-12 && (s - 0.1).abs() < 1e-12);
    assert!(matches!(last_k_stats(&log, 10), Err(Error::TooFewEpochs { required: 10, available: 4 })));
    let report = MetricsReport::new(&["a".into(), "b".into()], &log).unwrap();
    assert!(report.render().contains("last 10 epochs: -"), "{}", report.render());
}
