//! The three network architectures: the single-stream spatiotemporal CNN and
//! the intermediate- and late-fusion two-stream variants.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, NetworkGraph, NodeSpec};
use crate::tensor::{Scalar, Shape4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    /// Whole-face single stream.
    Stcnn,
    /// Eye and mouth streams concatenated after flattening.
    FuseIntermediate,
    /// Eye and mouth streams concatenated before the classifier.
    FuseLate,
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchKind::Stcnn => "stcnn",
            ArchKind::FuseIntermediate => "fuse_intermediate",
            ArchKind::FuseLate => "fuse_late",
        })
    }
}

/// Dataset-parameterized architecture description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub kind: ArchKind,
    /// Spatial side of each input stream (64 for the face, 32 per fusion stream).
    pub input_hw: usize,
    /// Temporal depth in frames.
    pub depth: usize,
    /// Convolution kernel (height, width, depth).
    pub kernel: (usize, usize, usize),
    pub filters: usize,
    pub pool: (usize, usize, usize),
    pub num_classes: usize,
    pub dropout_rate: f64,
    /// Dropout after the final dense layer.
    pub final_dropout_enabled: bool,
    /// Hidden dense widths (per stream for late fusion).
    pub hidden: Vec<usize>,
}

/// Temporal depth used for CAS(ME)^2 clips.
pub const CASME2_DEPTH: usize = 96;
/// Temporal depth used for SMIC clips.
pub const SMIC_DEPTH: usize = 18;

impl ArchSpec {
    pub fn new(kind: ArchKind, depth: usize) -> Self {
        let (input_hw, hidden) = match kind {
            ArchKind::Stcnn => (64, vec![128]),
            ArchKind::FuseIntermediate | ArchKind::FuseLate => (32, vec![1024, 128]),
        };
        ArchSpec {
            kind,
            input_hw,
            depth,
            kernel: (3, 3, 15),
            filters: 32,
            pool: (3, 3, 3),
            num_classes: 3,
            dropout_rate: 0.5,
            final_dropout_enabled: false,
            hidden,
        }
    }

    pub fn casme2(kind: ArchKind) -> Self {
        Self::new(kind, CASME2_DEPTH)
    }

    pub fn smic(kind: ArchKind) -> Self {
        Self::new(kind, SMIC_DEPTH)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.hidden.iter().any(|&h| h == 0) || self.filters == 0 {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if self.kind == ArchKind::FuseLate && self.hidden.is_empty() {
            return Err(Error::InvalidArgument(
                "late fusion needs at least one hidden dense layer per stream".into(),
            ));
        }
        Ok(())
    }

    /// Names of the input streams, in slot order.
    pub fn input_names(&self) -> &'static [&'static str] {
        match self.kind {
            ArchKind::Stcnn => &["face"],
            ArchKind::FuseIntermediate | ArchKind::FuseLate => &["eyes", "mouth"],
        }
    }

    pub fn input_shape(&self) -> Result<Shape4> {
        Shape4::new(1, self.input_hw, self.input_hw, self.depth)
    }

    /// Node list of the architecture in topological order.
    pub fn plan(&self) -> Result<Vec<NodeSpec>> {
        let input = self.input_shape()?;
        let mut nodes: Vec<NodeSpec> = Vec::new();
        let mut push = |name: String, layer: LayerSpec, inputs: Vec<usize>| -> usize {
            nodes.push(NodeSpec::new(name, layer, inputs));
            nodes.len() - 1
        };
        let dropout = LayerSpec::Dropout {
            rate: self.dropout_rate,
        };

        let stream = |push: &mut dyn FnMut(String, LayerSpec, Vec<usize>) -> usize,
                          prefix: &str,
                          slot: usize,
                          dense_layers: &[usize]|
         -> usize {
            let x = push(
                format!("{prefix}input"),
                LayerSpec::Input { slot, shape: input },
                vec![],
            );
            let x = push(
                format!("{prefix}conv3d"),
                LayerSpec::Conv3d {
                    filters: self.filters,
                    kernel: self.kernel,
                },
                vec![x],
            );
            let x = push(format!("{prefix}relu"), LayerSpec::Relu, vec![x]);
            let x = push(
                format!("{prefix}maxpool3d"),
                LayerSpec::MaxPool3d { window: self.pool },
                vec![x],
            );
            let x = push(format!("{prefix}dropout"), dropout.clone(), vec![x]);
            let mut x = push(format!("{prefix}flatten"), LayerSpec::Flatten, vec![x]);
            for (i, &units) in dense_layers.iter().enumerate() {
                x = hidden_block(push, prefix, i + 1, units, self.dropout_rate, x);
            }
            x
        };

        let features = match self.kind {
            ArchKind::Stcnn => {
                let mut x = stream(&mut push, "", 0, &[]);
                for (i, &units) in self.hidden.iter().enumerate() {
                    x = hidden_block(&mut push, "", i + 1, units, self.dropout_rate, x);
                }
                x
            }
            ArchKind::FuseIntermediate => {
                let eyes = stream(&mut push, "eyes/", 0, &[]);
                let mouth = stream(&mut push, "mouth/", 1, &[]);
                let mut x = push("concat".into(), LayerSpec::Concat, vec![eyes, mouth]);
                for (i, &units) in self.hidden.iter().enumerate() {
                    x = hidden_block(&mut push, "", i + 1, units, self.dropout_rate, x);
                }
                x
            }
            ArchKind::FuseLate => {
                let eyes = stream(&mut push, "eyes/", 0, &self.hidden);
                let mouth = stream(&mut push, "mouth/", 1, &self.hidden);
                push("concat".into(), LayerSpec::Concat, vec![eyes, mouth])
            }
        };

        let mut x = push(
            "dense_out".into(),
            LayerSpec::Dense {
                units: self.num_classes,
            },
            vec![features],
        );
        if self.final_dropout_enabled {
            x = push("dropout_out".into(), dropout.clone(), vec![x]);
        }
        push("softmax".into(), LayerSpec::SoftmaxOutput, vec![x]);
        Ok(nodes)
    }
}

fn hidden_block(
    push: &mut dyn FnMut(String, LayerSpec, Vec<usize>) -> usize,
    prefix: &str,
    index: usize,
    units: usize,
    rate: f64,
    input: usize,
) -> usize {
    let x = push(format!("{prefix}dense_{index}"), LayerSpec::Dense { units }, vec![input]);
    let x = push(format!("{prefix}relu_{index}"), LayerSpec::Relu, vec![x]);
    push(format!("{prefix}dropout_{index}"), LayerSpec::Dropout { rate }, vec![x])
}

fn build_kind<T: Scalar>(spec: &ArchSpec, kind: ArchKind) -> Result<NetworkGraph<T>> {
    if spec.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "expected a {kind} spec, got {}",
            spec.kind
        )));
    }
    build(spec)
}

pub fn build_stcnn<T: Scalar>(spec: &ArchSpec) -> Result<NetworkGraph<T>> {
    build_kind(spec, ArchKind::Stcnn)
}

pub fn build_fuse_intermediate<T: Scalar>(spec: &ArchSpec) -> Result<NetworkGraph<T>> {
    build_kind(spec, ArchKind::FuseIntermediate)
}

pub fn build_fuse_late<T: Scalar>(spec: &ArchSpec) -> Result<NetworkGraph<T>> {
    build_kind(spec, ArchKind::FuseLate)
}

/// Builds the graph for any architecture kind, with zeroed parameters.
pub fn build<T: Scalar>(spec: &ArchSpec) -> Result<NetworkGraph<T>> {
    spec.validate()?;
    NetworkGraph::from_specs(spec.plan()?)
}

#[derive(Clone, Debug, PartialEq)]
pub enum RowStatus {
    Ok,
    /// The layer cannot be built on its input; the reason names the axis.
    Unbuildable(String),
    /// An upstream layer is unbuildable.
    Unreachable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeRow {
    pub name: String,
    pub kind: &'static str,
    /// Kernel or window extents, when the layer has one.
    pub filter: Option<(usize, usize, usize)>,
    pub output: Option<Shape4>,
    pub params: usize,
    pub status: RowStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeReport {
    pub rows: Vec<ShapeRow>,
    pub total_params: usize,
}

impl ShapeReport {
    pub fn is_buildable(&self) -> bool {
        self.rows.iter().all(|r| r.status == RowStatus::Ok)
    }

    pub fn row(&self, name: &str) -> Option<&ShapeRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

impl fmt::Display for ShapeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<20} {:<16} {:<12} {:<22} {:>12}",
            "Layer", "Type", "Filter Size", "Output Dimension", "Params"
        )?;
        for row in &self.rows {
            let filter = row
                .filter
                .map(|(a, b, c)| format!("{a} x {b} x {c}"))
                .unwrap_or_else(|| "-".into());
            let output = match (&row.status, row.output) {
                (RowStatus::Ok, Some(s)) => s.to_string(),
                (RowStatus::Unbuildable(_), _) => "UNBUILDABLE".into(),
                _ => "-".into(),
            };
            write!(
                f,
                "{:<20} {:<16} {:<12} {:<22} {:>12}",
                row.name, row.kind, filter, output, row.params
            )?;
            if let RowStatus::Unbuildable(reason) = &row.status {
                write!(f, "  ({reason})")?;
            }
            writeln!(f)?;
        }
        write!(f, "Total parameters: {}", self.total_params)
    }
}

/// Static shape inference over the architecture plan. Never fails on an
/// undersized input; such layers are flagged instead.
pub fn shape_report(spec: &ArchSpec) -> Result<ShapeReport> {
    let plan = spec.plan()?;
    let mut shapes: Vec<Option<Shape4>> = Vec::with_capacity(plan.len());
    let mut rows = Vec::with_capacity(plan.len());
    let mut total = 0usize;
    for node in plan {
        let inputs: Option<Vec<Shape4>> = node.inputs.iter().map(|&i| shapes[i]).collect();
        let filter = match node.layer {
            LayerSpec::Conv3d { kernel, .. } => Some(kernel),
            LayerSpec::MaxPool3d { window } => Some(window),
            _ => None,
        };
        let (output, params, status) = match inputs {
            None => (None, 0, RowStatus::Unreachable),
            Some(ins) => match node.layer.output_shape(&ins) {
                Ok(out) => {
                    let params = node
                        .layer
                        .param_shapes(&ins)?
                        .iter()
                        .map(|(_, s)| s.len())
                        .sum();
                    (Some(out), params, RowStatus::Ok)
                }
                Err(e) => (None, 0, RowStatus::Unbuildable(e.to_string())),
            },
        };
        total += params;
        shapes.push(output);
        rows.push(ShapeRow {
            name: node.name,
            kind: node.layer.kind_name(),
            filter,
            output,
            params,
            status,
        });
    }
    Ok(ShapeReport {
        rows,
        total_params: total,
    })
}

/// Fills conv and dense weights from uniform(-a, a) with
/// `a = sqrt(6 / (fan_in + fan_out))` and zeroes every bias. Parameters are
/// drawn in graph order from a generator seeded with `seed`.
pub fn init_params<T: Scalar>(g: &mut NetworkGraph<T>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fans: Vec<(usize, usize, usize, usize)> = g
        .nodes()
        .iter()
        .filter_map(|node| {
            let in_shape = node.inputs.first().map(|&i| g.nodes()[i].output_shape)?;
            match node.layer {
                LayerSpec::Conv3d {
                    filters,
                    kernel: (kh, kw, kd),
                } => {
                    let k = kh * kw * kd;
                    Some((node.params[0], node.params[1], in_shape.channels * k, filters * k))
                }
                LayerSpec::Dense { units } => {
                    Some((node.params[0], node.params[1], in_shape.len(), units))
                }
                _ => None,
            }
        })
        .collect();
    for (w, b, fan_in, fan_out) in fans {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let params = g.params_mut();
        for v in params[w].value.as_mut_slice() {
            *v = T::lit(rng.gen_range(-bound..bound));
        }
        params[b].value.fill(T::zero());
    }
}

/// Glorot bound `sqrt(6 / (fan_in + fan_out))` of a weight parameter, if the
/// parameter belongs to a conv or dense node.
pub fn init_bound<T: Scalar>(g: &NetworkGraph<T>, param: usize) -> Option<f64> {
    g.nodes().iter().find_map(|node| {
        if node.params.first() != Some(&param) {
            return None;
        }
        let in_shape = g.nodes()[node.inputs[0]].output_shape;
        let (fan_in, fan_out) = match node.layer {
            LayerSpec::Conv3d {
                filters,
                kernel: (kh, kw, kd),
            } => (in_shape.channels * kh * kw * kd, filters * kh * kw * kd),
            LayerSpec::Dense { units } => (in_shape.len(), units),
            _ => return None,
        };
        Some((6.0 / (fan_in + fan_out) as f64).sqrt())
    })
}
