//! Python bindings: architecture inspection, models, training, evaluation,
//! saliency and the data utilities.

use std::path::PathBuf;

use microexp_core::dataio::{self, DatasetIndex, Subset, SynthParams};
use microexp_core::models::{self, shape_report};
use microexp_core::nn::NetworkGraph;
use microexp_core::saliency;
use microexp_core::trainer::{self, ConfusionMatrix, TrainConfig};
use microexp_core::{ArchKind, ArchSpec, Error, Precision, Scalar, Tensor};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_kind(kind: &str) -> PyResult<ArchKind> {
    match kind {
        "stcnn" => Ok(ArchKind::Stcnn),
        "fuse_intermediate" => Ok(ArchKind::FuseIntermediate),
        "fuse_late" => Ok(ArchKind::FuseLate),
        other => Err(PyValueError::new_err(format!(
            "unknown architecture `{other}` (stcnn, fuse_intermediate, fuse_late)"
        ))),
    }
}

fn make_spec(
    kind: &str,
    depth: usize,
    input_hw: Option<usize>,
    kernel: Option<(usize, usize, usize)>,
    filters: Option<usize>,
    hidden: Option<Vec<usize>>,
    num_classes: usize,
) -> PyResult<ArchSpec> {
    let mut spec = ArchSpec::new(parse_kind(kind)?, depth);
    if let Some(v) = input_hw {
        spec.input_hw = v;
    }
    if let Some(v) = kernel {
        spec.kernel = v;
    }
    if let Some(v) = filters {
        spec.filters = v;
    }
    if let Some(v) = hidden {
        spec.hidden = v;
    }
    spec.num_classes = num_classes;
    spec.validate().map_err(to_py)?;
    Ok(spec)
}

type ShapeTuple = (usize, usize, usize, usize);

/// Rows `(name, layer type, output shape or None, params, status)` and the
/// total parameter count.
#[pyfunction]
#[pyo3(signature = (kind="stcnn", depth=96, input_hw=None, kernel=None, num_classes=3))]
fn inspect(
    kind: &str,
    depth: usize,
    input_hw: Option<usize>,
    kernel: Option<(usize, usize, usize)>,
    num_classes: usize,
) -> PyResult<(Vec<(String, String, Option<ShapeTuple>, usize, String)>, usize)> {
    let spec = make_spec(kind, depth, input_hw, kernel, None, None, num_classes)?;
    let report = shape_report(&spec).map_err(to_py)?;
    let rows = report
        .rows
        .iter()
        .map(|r| {
            let status = match &r.status {
                models::RowStatus::Ok => "ok".to_string(),
                models::RowStatus::Unbuildable(why) => format!("unbuildable: {why}"),
                models::RowStatus::Unreachable => "unreachable".to_string(),
            };
            (
                r.name.clone(),
                r.kind.to_string(),
                r.output.map(|s| (s.channels, s.height, s.width, s.depth)),
                r.params,
                status,
            )
        })
        .collect();
    Ok((rows, report.total_params))
}

#[pyfunction]
fn temporal_sample(n: usize, d: usize) -> PyResult<Vec<usize>> {
    dataio::temporal_sample(n, d).map_err(to_py)
}

/// Writes a synthetic dataset and returns the number of clips.
#[pyfunction]
fn synth_dataset(classes: usize, per_class: usize, hw: usize, depth: usize, seed: u64, out_dir: PathBuf) -> PyResult<usize> {
    let index = dataio::synth_dataset(
        SynthParams {
            classes,
            per_class,
            hw,
            depth,
            seed,
        },
        &out_dir,
    )
    .map_err(to_py)?;
    Ok(index.entries.len())
}

/// Accuracy (`trace / total`) of a confusion matrix given as rows.
#[pyfunction]
fn confusion_accuracy(rows: Vec<Vec<u64>>) -> PyResult<f64> {
    Ok(ConfusionMatrix::from_rows(rows).map_err(to_py)?.accuracy())
}

/// Mean and sample standard deviation of the last `k` values.
#[pyfunction]
#[pyo3(signature = (values, k=10))]
fn last_k_stats(values: Vec<f64>, k: usize) -> PyResult<(f64, f64)> {
    if k == 0 || values.len() < k {
        return Err(to_py(Error::TooFewEpochs {
            required: k.max(1),
            available: values.len(),
        }));
    }
    Ok(trainer::metrics::mean_std(&values[values.len() - k..]))
}

enum Graph {
    F32(NetworkGraph<f32>),
    F64(NetworkGraph<f64>),
}

fn tensors<T: Scalar>(g: &NetworkGraph<T>, inputs: Vec<Vec<f64>>) -> PyResult<Vec<Tensor<T>>> {
    let shapes = g.input_shapes();
    if inputs.len() != shapes.len() {
        return Err(PyValueError::new_err(format!(
            "model takes {} inputs, got {}",
            shapes.len(),
            inputs.len()
        )));
    }
    inputs
        .into_iter()
        .zip(shapes)
        .map(|(v, s)| Tensor::from_vec(s, v.into_iter().map(T::lit).collect()).map_err(to_py))
        .collect()
}

fn probs<T: Scalar>(g: &NetworkGraph<T>, inputs: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let xs = tensors(g, inputs)?;
    let refs: Vec<&Tensor<T>> = xs.iter().collect();
    Ok(g.predict(&refs).map_err(to_py)?.into_iter().map(Scalar::as_f64).collect())
}

fn grads<T: Scalar>(g: &NetworkGraph<T>, inputs: Vec<Vec<f64>>, target: usize, relu: bool) -> PyResult<Vec<Vec<f64>>> {
    let xs = tensors(g, inputs)?;
    let refs: Vec<&Tensor<T>> = xs.iter().collect();
    let out = saliency::logit_input_gradient(g, &refs, target).map_err(to_py)?;
    Ok(out
        .into_iter()
        .map(|t| {
            t.as_slice()
                .iter()
                .map(|v| if relu { v.as_f64().max(0.0) } else { v.as_f64().abs() })
                .collect()
        })
        .collect())
}

/// A network with initialized or loaded parameters. Inputs are flat lists in
/// (channel, height, width, depth) row-major order, one per input stream.
#[pyclass(module = "microexp")]
struct Model {
    spec: ArchSpec,
    graph: Graph,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (kind="stcnn", depth=96, input_hw=None, kernel=None, filters=None, hidden=None, num_classes=3, seed=0, precision="f32"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        kind: &str,
        depth: usize,
        input_hw: Option<usize>,
        kernel: Option<(usize, usize, usize)>,
        filters: Option<usize>,
        hidden: Option<Vec<usize>>,
        num_classes: usize,
        seed: u64,
        precision: &str,
    ) -> PyResult<Self> {
        let spec = make_spec(kind, depth, input_hw, kernel, filters, hidden, num_classes)?;
        let graph = match precision {
            "f32" => {
                let mut g = models::build::<f32>(&spec).map_err(to_py)?;
                models::init_params(&mut g, seed);
                Graph::F32(g)
            }
            "f64" => {
                let mut g = models::build::<f64>(&spec).map_err(to_py)?;
                models::init_params(&mut g, seed);
                Graph::F64(g)
            }
            other => return Err(PyValueError::new_err(format!("unknown precision `{other}`"))),
        };
        Ok(Model { spec, graph })
    }

    /// Loads a checkpoint written by training.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = trainer::load_checkpoint(&path).map_err(to_py)?;
        let graph = match ckpt.precision {
            Precision::F32 => Graph::F32(ckpt.build_graph().map_err(to_py)?),
            Precision::F64 => Graph::F64(ckpt.build_graph().map_err(to_py)?),
        };
        Ok(Model { spec: ckpt.arch, graph })
    }

    #[getter]
    fn kind(&self) -> String {
        self.spec.kind.to_string()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    #[getter]
    fn param_count(&self) -> usize {
        match &self.graph {
            Graph::F32(g) => g.param_count(),
            Graph::F64(g) => g.param_count(),
        }
    }

    #[getter]
    fn input_shapes(&self) -> Vec<ShapeTuple> {
        let shapes = match &self.graph {
            Graph::F32(g) => g.input_shapes(),
            Graph::F64(g) => g.input_shapes(),
        };
        shapes.iter().map(|s| (s.channels, s.height, s.width, s.depth)).collect()
    }

    /// Class probabilities in inference mode.
    fn predict(&self, inputs: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        match &self.graph {
            Graph::F32(g) => probs(g, inputs),
            Graph::F64(g) => probs(g, inputs),
        }
    }

    /// Saliency of `target`'s pre-softmax score, one flat list per input.
    #[pyo3(signature = (inputs, target, sign="abs"))]
    fn saliency(&self, inputs: Vec<Vec<f64>>, target: usize, sign: &str) -> PyResult<Vec<Vec<f64>>> {
        let relu = match sign {
            "abs" => false,
            "relu" => true,
            other => return Err(PyValueError::new_err(format!("unknown sign `{other}` (abs, relu)"))),
        };
        match &self.graph {
            Graph::F32(g) => grads(g, inputs, target, relu),
            Graph::F64(g) => grads(g, inputs, target, relu),
        }
    }
}

/// Splits (if needed) and trains on a manifest; writes the checkpoint and
/// returns the per-epoch validation accuracies.
#[pyfunction]
#[pyo3(signature = (manifest, checkpoint, kind="stcnn", depth=96, input_hw=None, kernel=None, filters=None, hidden=None, epochs=100, batch_size=8, learning_rate=0.01, seed=0, precision="f32", split_fraction=0.8))]
#[allow(clippy::too_many_arguments)]
fn train(
    manifest: PathBuf,
    checkpoint: PathBuf,
    kind: &str,
    depth: usize,
    input_hw: Option<usize>,
    kernel: Option<(usize, usize, usize)>,
    filters: Option<usize>,
    hidden: Option<Vec<usize>>,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    seed: u64,
    precision: &str,
    split_fraction: f64,
) -> PyResult<Vec<f64>> {
    let mut index = DatasetIndex::load(&manifest).map_err(to_py)?;
    if !index.is_split() {
        dataio::split_dataset(&mut index, split_fraction, seed).map_err(to_py)?;
        index.save(&dataio::index::manifest_path(&manifest)).map_err(to_py)?;
    }
    let spec = make_spec(kind, depth, input_hw, kernel, filters, hidden, index.classes.len())?;
    let precision = match precision {
        "f32" => Precision::F32,
        "f64" => Precision::F64,
        other => return Err(PyValueError::new_err(format!("unknown precision `{other}`"))),
    };
    let cfg = TrainConfig {
        epochs,
        batch_size,
        learning_rate,
        seed,
        precision,
        checkpoint: Some(checkpoint),
        ..TrainConfig::default()
    };
    fn run<T: Scalar>(spec: &ArchSpec, index: &DatasetIndex, cfg: &TrainConfig) -> Result<Vec<f64>, Error> {
        let mut g = models::build::<T>(spec)?;
        models::init_params(&mut g, cfg.seed);
        let (_, log) = trainer::train(&mut g, spec, index, cfg, &mut |_| {})?;
        Ok(log.val_accuracies())
    }
    match precision {
        Precision::F32 => run::<f32>(&spec, &index, &cfg),
        Precision::F64 => run::<f64>(&spec, &index, &cfg),
    }
    .map_err(to_py)
}

/// Validation accuracy and confusion-matrix rows of a checkpoint on a split manifest.
#[pyfunction]
fn evaluate(checkpoint: PathBuf, manifest: PathBuf) -> PyResult<(f64, Vec<Vec<u64>>)> {
    let ckpt = trainer::load_checkpoint(&checkpoint).map_err(to_py)?;
    let index = DatasetIndex::load(&manifest).map_err(to_py)?;
    fn run<T: Scalar>(ckpt: &trainer::Checkpoint, index: &DatasetIndex) -> Result<(f64, ConfusionMatrix), Error> {
        let g = ckpt.build_graph::<T>()?;
        let val = dataio::load_subset::<T>(index, Subset::Val, &ckpt.arch)?;
        trainer::evaluate(&g, &val, ckpt.arch.num_classes)
    }
    let (acc, m) = match ckpt.precision {
        Precision::F32 => run::<f32>(&ckpt, &index),
        Precision::F64 => run::<f64>(&ckpt, &index),
    }
    .map_err(to_py)?;
    Ok((acc, m.rows().to_vec()))
}

/// Per-frame percentile binarization of a `(1, h, w, d)` volume given flat.
#[pyfunction]
#[pyo3(signature = (values, shape, percentile=90.0))]
fn binarize(values: Vec<f64>, shape: ShapeTuple, percentile: f64) -> PyResult<Vec<f64>> {
    let s = microexp_core::Shape4::new(shape.0, shape.1, shape.2, shape.3).map_err(to_py)?;
    let t = Tensor::from_vec(s, values).map_err(to_py)?;
    Ok(saliency::binarize(&t, percentile).map_err(to_py)?.into_vec())
}

#[pymodule]
fn microexp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(inspect, m)?)?;
    m.add_function(wrap_pyfunction!(temporal_sample, m)?)?;
    m.add_function(wrap_pyfunction!(synth_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(confusion_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(last_k_stats, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(binarize, m)?)?;
    m.add("DEFAULT_PERCENTILE", saliency::DEFAULT_PERCENTILE)?;
    Ok(())
}
