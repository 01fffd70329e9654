//! Mini-batch SGD training, evaluation and run reports.

pub mod checkpoint;
pub mod metrics;
pub mod report;

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::index::{batch_order, DatasetIndex, Subset};
use crate::dataio::samples::{load_subset, Sample};
use crate::error::{Error, Result};
use crate::models::ArchSpec;
use crate::nn::{Mode, NetworkGraph, Param};
use crate::tensor::{Precision, Scalar, Tensor};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Seeds};
pub use metrics::{argmax, last_k_stats, ConfusionMatrix, EpochLog, EpochRow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Evaluate every n-th epoch (the final epoch is always evaluated).
    pub eval_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Also write the checkpoint after every epoch.
    pub checkpoint_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            learning_rate: 0.01,
            seed: 0,
            precision: Precision::F32,
            eval_every: 1,
            checkpoint: None,
            checkpoint_each_epoch: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidArgument(
                "epochs, batch_size and eval_every must be at least 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// `value -= learning_rate * grad` for every element, then zero the grads.
/// Elements whose step is exactly zero are left untouched.
pub fn sgd_step<T: Scalar>(params: &mut [Param<T>], learning_rate: T) {
    for p in params {
        for (v, g) in p.value.as_mut_slice().iter_mut().zip(p.grad.as_slice()) {
            let step = learning_rate * *g;
            if step != T::zero() {
                *v -= step;
            }
        }
        p.grad.fill(T::zero());
    }
}

/// Anything that maps a sample to class scores.
pub trait Predictor<T> {
    fn scores(&self, sample: &Sample<T>) -> Result<Vec<f64>>;
}

impl<T: Scalar> Predictor<T> for NetworkGraph<T> {
    fn scores(&self, sample: &Sample<T>) -> Result<Vec<f64>> {
        let inputs: Vec<&Tensor<T>> = sample.inputs.iter().collect();
        Ok(self.predict(&inputs)?.into_iter().map(Scalar::as_f64).collect())
    }
}

/// Infer-mode accuracy and confusion matrix over `samples`.
pub fn evaluate<T, P: Predictor<T> + ?Sized>(
    predictor: &P,
    samples: &[Sample<T>],
    num_classes: usize,
) -> Result<(f64, ConfusionMatrix)> {
    if samples.is_empty() {
        return Err(Error::EmptySubset("evaluation".into()));
    }
    let mut m = ConfusionMatrix::new(num_classes);
    for s in samples {
        let scores = predictor.scores(s)?;
        m.record(s.label, argmax(&scores))?;
    }
    Ok((m.accuracy(), m))
}

/// Independent seed streams derived from the run seed.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const DROPOUT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    derive_seed(derive_seed(seed, SHUFFLE_STREAM), epoch as u64)
}

fn check_inputs<T: Scalar>(g: &NetworkGraph<T>, samples: &[Sample<T>]) -> Result<()> {
    let expected = g.input_shapes();
    for s in samples {
        let actual: Vec<_> = s.inputs.iter().map(Tensor::shape).collect();
        if actual != expected {
            let show = |v: &[crate::tensor::Shape4]| {
                v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
            };
            return Err(Error::ShapeMismatch(format!(
                "sample `{}` has inputs [{}], graph expects [{}]",
                s.id,
                show(&actual),
                show(&expected)
            )));
        }
        if s.label >= g.num_classes() {
            return Err(Error::ClassOutOfRange {
                class: s.label,
                num_classes: g.num_classes(),
            });
        }
    }
    Ok(())
}

/// Runs `cfg.epochs` epochs of mini-batch SGD on preloaded samples, calling
/// `on_epoch` after each epoch.
pub fn train_samples<T: Scalar>(
    g: &mut NetworkGraph<T>,
    train: &[Sample<T>],
    val: &[Sample<T>],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&NetworkGraph<T>, &EpochRow) -> Result<()>,
) -> Result<EpochLog> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySubset("train".into()));
    }
    if val.is_empty() {
        return Err(Error::EmptySubset("val".into()));
    }
    check_inputs(g, train)?;
    check_inputs(g, val)?;
    let k = g.num_classes();
    let lr = T::lit(cfg.learning_rate);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, DROPOUT_STREAM));
    let mut log = EpochLog::default();
    g.zero_grads();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        for batch in batch_order(train.len(), cfg.batch_size, Some(epoch_seed(cfg.seed, epoch))) {
            for &i in &batch {
                let s = &train[i];
                let inputs: Vec<&Tensor<T>> = s.inputs.iter().collect();
                let pass = g.forward(&inputs, Mode::Train(&mut dropout_rng))?;
                loss_sum += g.backward(&pass.cache, s.label)?.as_f64();
            }
            g.scale_grads(T::one() / T::lit(batch.len() as f64));
            sgd_step(g.params_mut(), lr);
        }
        let evaluated = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
        let (train_accuracy, val_accuracy, val_confusion) = if evaluated {
            let (train_acc, _) = evaluate(&*g, train, k)?;
            let (val_acc, m) = evaluate(&*g, val, k)?;
            (Some(train_acc), Some(val_acc), Some(m))
        } else {
            (None, None, None)
        };
        let row = EpochRow {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy,
            val_accuracy,
            val_confusion,
            wall_time: start.elapsed().as_secs_f64(),
        };
        on_epoch(g, &row)?;
        log.epochs.push(row);
    }
    Ok(log)
}

/// Trains `g` on the split recorded in `data`, returning the final checkpoint.
/// The checkpoint is also written to `cfg.checkpoint` when set.
pub fn train<T: Scalar>(
    g: &mut NetworkGraph<T>,
    arch: &ArchSpec,
    data: &DatasetIndex,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRow),
) -> Result<(Checkpoint, EpochLog)> {
    if !data.is_split() {
        return Err(Error::InvalidArgument("dataset has no train/val split".into()));
    }
    let train_set = load_subset::<T>(data, Subset::Train, arch)?;
    let val_set = load_subset::<T>(data, Subset::Val, arch)?;
    let seeds = Seeds {
        train: cfg.seed,
        split: data.split_seed,
    };
    let mut so_far = EpochLog::default();
    let log = train_samples(g, &train_set, &val_set, cfg, &mut |g, row| {
        on_epoch(row);
        so_far.epochs.push(row.clone());
        if let (true, Some(path)) = (cfg.checkpoint_each_epoch, &cfg.checkpoint) {
            let ckpt = Checkpoint::from_graph(g, arch.clone(), cfg.clone(), so_far.clone(), seeds.clone(), data.classes.clone());
            save_checkpoint(&ckpt, path)?;
        }
        Ok(())
    })?;
    let ckpt = Checkpoint::from_graph(g, arch.clone(), cfg.clone(), log.clone(), seeds, data.classes.clone());
    if let Some(path) = &cfg.checkpoint {
        save_checkpoint(&ckpt, path)?;
    }
    Ok((ckpt, log))
}
