//! Layer graphs: construction with static shape inference, cached forward
//! passes and reverse-mode gradient propagation.

use super::conv::{conv3d_backward_with, conv3d_forward, conv_output_shape};
use super::dense::{dense_backward_with, dense_forward, dense_weight_shape};
use super::dropout::{check_rate, dropout_backward, dropout_forward, Mode};
use super::pool::{maxpool3d_backward, maxpool3d_forward, pool_output_shape};
use super::{activation, reshape, softmax};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape4, Tensor};

pub type ParamId = usize;

/// A learnable tensor and its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param {
            name: name.into(),
            value,
            grad,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// Graph entry point for input slot `slot`.
    Input { slot: usize, shape: Shape4 },
    Conv3d {
        filters: usize,
        kernel: (usize, usize, usize),
    },
    MaxPool3d { window: (usize, usize, usize) },
    Relu,
    Dropout { rate: f64 },
    Flatten,
    Dense { units: usize },
    Concat,
    SoftmaxOutput,
}

impl LayerSpec {
    pub fn arity(&self) -> usize {
        match self {
            LayerSpec::Input { .. } => 0,
            LayerSpec::Concat => 2,
            _ => 1,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Input { .. } => "Input",
            LayerSpec::Conv3d { .. } => "3D-Convolution",
            LayerSpec::MaxPool3d { .. } => "3D-Maxpooling",
            LayerSpec::Relu => "ReLU",
            LayerSpec::Dropout { .. } => "Dropout",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::Concat => "Concatenate",
            LayerSpec::SoftmaxOutput => "Softmax",
        }
    }

    /// Infers the output shape from the input shapes.
    pub fn output_shape(&self, inputs: &[Shape4]) -> Result<Shape4> {
        if inputs.len() != self.arity() {
            return Err(Error::InvalidGraph(format!(
                "{} takes {} inputs, got {}",
                self.kind_name(),
                self.arity(),
                inputs.len()
            )));
        }
        match self {
            LayerSpec::Input { shape, .. } => {
                shape.validate()?;
                Ok(*shape)
            }
            LayerSpec::Conv3d { filters, kernel } => {
                if *filters == 0 {
                    return Err(Error::InvalidShape("convolution with 0 filters".into()));
                }
                conv_output_shape(inputs[0], *filters, *kernel)
            }
            LayerSpec::MaxPool3d { window } => pool_output_shape(inputs[0], *window),
            LayerSpec::Relu => Ok(inputs[0]),
            LayerSpec::Dropout { rate } => {
                check_rate(*rate)?;
                Ok(inputs[0])
            }
            LayerSpec::Flatten => Shape4::vector(inputs[0].len()),
            LayerSpec::Dense { units } => {
                require_vector(self, inputs[0])?;
                Shape4::vector(*units)
            }
            LayerSpec::Concat => {
                require_vector(self, inputs[0])?;
                require_vector(self, inputs[1])?;
                Shape4::vector(inputs[0].len() + inputs[1].len())
            }
            LayerSpec::SoftmaxOutput => {
                require_vector(self, inputs[0])?;
                Ok(inputs[0])
            }
        }
    }

    /// Shapes of the learnable tensors, as `(suffix, shape)` pairs.
    pub fn param_shapes(&self, inputs: &[Shape4]) -> Result<Vec<(&'static str, Shape4)>> {
        Ok(match self {
            LayerSpec::Conv3d { filters, kernel } => {
                let (kh, kw, kd) = *kernel;
                vec![
                    ("weight", Shape4::new(filters * inputs[0].channels, kh, kw, kd)?),
                    ("bias", Shape4::vector(*filters)?),
                ]
            }
            LayerSpec::Dense { units } => vec![
                ("weight", dense_weight_shape(inputs[0].len(), *units)?),
                ("bias", Shape4::vector(*units)?),
            ],
            _ => Vec::new(),
        })
    }
}

fn require_vector(layer: &LayerSpec, shape: Shape4) -> Result<()> {
    if shape.is_vector() {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{} expects a flattened vector, got {shape}",
            layer.kind_name()
        )))
    }
}

/// A node to be added to a graph; `inputs` index earlier nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    pub layer: LayerSpec,
    pub inputs: Vec<usize>,
}

impl NodeSpec {
    pub fn new(name: impl Into<String>, layer: LayerSpec, inputs: Vec<usize>) -> Self {
        NodeSpec {
            name: name.into(),
            layer,
            inputs,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub name: String,
    pub layer: LayerSpec,
    pub inputs: Vec<usize>,
    pub output_shape: Shape4,
    pub params: Vec<ParamId>,
}

#[derive(Clone, Debug)]
pub struct NetworkGraph<T> {
    nodes: Vec<Node>,
    params: Vec<Param<T>>,
    /// Node index of each input slot, in slot order.
    slots: Vec<usize>,
}

/// Activations and routing state recorded by a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    activations: Vec<Tensor<T>>,
    argmax: Vec<Option<Vec<usize>>>,
    masks: Vec<Option<Vec<T>>>,
    train: bool,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn activation(&self, node: usize) -> &Tensor<T> {
        &self.activations[node]
    }

    /// Output of the final (softmax) node.
    pub fn probs(&self) -> &[T] {
        self.activations.last().expect("non-empty graph").as_slice()
    }
}

#[derive(Clone, Debug)]
pub struct ForwardPass<T> {
    pub probs: Vec<T>,
    pub cache: ForwardCache<T>,
}

/// Result of propagating a logit gradient back through the graph.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    /// Per parameter, in [`NetworkGraph::params`] order; `None` when not requested.
    pub params: Vec<Option<Tensor<T>>>,
    /// Per input slot; `None` when not requested.
    pub inputs: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> NetworkGraph<T> {
    /// Builds a graph with zero-initialized parameters. Nodes must be listed in
    /// topological order with the softmax output last.
    pub fn from_specs(specs: Vec<NodeSpec>) -> Result<Self> {
        let mut nodes: Vec<Node> = Vec::with_capacity(specs.len());
        let mut params = Vec::new();
        let mut slot_nodes: Vec<(usize, usize)> = Vec::new();

        for (idx, spec) in specs.into_iter().enumerate() {
            let wrap = |e: Error| Error::Unbuildable {
                node: spec.name.clone(),
                source: Box::new(e),
            };
            if nodes.iter().any(|n| n.name == spec.name) {
                return Err(Error::InvalidGraph(format!("duplicate node name `{}`", spec.name)));
            }
            if let Some(&bad) = spec.inputs.iter().find(|&&i| i >= idx) {
                return Err(Error::InvalidGraph(format!(
                    "node `{}` references node {bad}, which does not precede it",
                    spec.name
                )));
            }
            let in_shapes: Vec<Shape4> = spec.inputs.iter().map(|&i| nodes[i].output_shape).collect();
            let output_shape = spec.layer.output_shape(&in_shapes).map_err(wrap)?;
            let mut ids = Vec::new();
            for (suffix, shape) in spec.layer.param_shapes(&in_shapes).map_err(wrap)? {
                ids.push(params.len());
                params.push(Param::new(format!("{}.{suffix}", spec.name), Tensor::zeros(shape)));
            }
            if let LayerSpec::Input { slot, .. } = spec.layer {
                slot_nodes.push((slot, idx));
            }
            nodes.push(Node {
                name: spec.name,
                layer: spec.layer,
                inputs: spec.inputs,
                output_shape,
                params: ids,
            });
        }

        let softmax_count = nodes
            .iter()
            .filter(|n| n.layer == LayerSpec::SoftmaxOutput)
            .count();
        if softmax_count != 1 || nodes.last().map(|n| &n.layer) != Some(&LayerSpec::SoftmaxOutput) {
            return Err(Error::InvalidGraph(
                "graph needs exactly one softmax output, placed last".into(),
            ));
        }
        slot_nodes.sort_unstable();
        if slot_nodes.is_empty()
            || slot_nodes.len() > 2
            || slot_nodes.iter().enumerate().any(|(i, &(s, _))| s != i)
        {
            return Err(Error::InvalidGraph(
                "graph needs one or two input slots numbered from 0".into(),
            ));
        }
        Ok(NetworkGraph {
            nodes,
            params,
            slots: slot_nodes.into_iter().map(|(_, n)| n).collect(),
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn input_shapes(&self) -> Vec<Shape4> {
        self.slots.iter().map(|&n| self.nodes[n].output_shape).collect()
    }

    pub fn input_names(&self) -> Vec<&str> {
        self.slots.iter().map(|&n| self.nodes[n].name.as_str()).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.nodes.last().expect("non-empty graph").output_shape.len()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Multiplies every accumulated gradient by `factor`.
    pub fn scale_grads(&mut self, factor: T) {
        for p in &mut self.params {
            p.grad.scale(factor);
        }
    }

    /// Runs every node in order, caching activations for a later backward pass.
    pub fn forward(&self, inputs: &[&Tensor<T>], mut mode: Mode<'_>) -> Result<ForwardPass<T>> {
        if inputs.len() != self.slots.len() {
            return Err(Error::InvalidArgument(format!(
                "graph has {} input slots, got {} tensors",
                self.slots.len(),
                inputs.len()
            )));
        }
        for (slot, (&node, input)) in self.slots.iter().zip(inputs).enumerate() {
            let expected = self.nodes[node].output_shape;
            if input.shape() != expected {
                return Err(Error::EntryShape {
                    slot,
                    expected,
                    actual: input.shape(),
                });
            }
        }

        let train = mode.is_train();
        let n = self.nodes.len();
        let mut acts: Vec<Tensor<T>> = Vec::with_capacity(n);
        let mut argmax = vec![None; n];
        let mut masks = vec![None; n];

        for (i, node) in self.nodes.iter().enumerate() {
            let wrap = |e: Error| Error::Unbuildable {
                node: node.name.clone(),
                source: Box::new(e),
            };
            let x = node.inputs.first().map(|&j| &acts[j]);
            let out = match &node.layer {
                LayerSpec::Input { slot, .. } => inputs[*slot].clone(),
                LayerSpec::Conv3d { .. } => {
                    let (w, b) = (&self.params[node.params[0]], &self.params[node.params[1]]);
                    conv3d_forward(x.unwrap(), &w.value, &b.value).map_err(wrap)?
                }
                LayerSpec::MaxPool3d { window } => {
                    let (out, idx) = maxpool3d_forward(x.unwrap(), *window).map_err(wrap)?;
                    argmax[i] = Some(idx);
                    out
                }
                LayerSpec::Relu => activation::relu_forward(x.unwrap()),
                LayerSpec::Dropout { rate } => {
                    let (out, mask) = dropout_forward(x.unwrap(), *rate, &mut mode)?;
                    masks[i] = mask;
                    out
                }
                LayerSpec::Flatten => reshape::flatten(x.unwrap()),
                LayerSpec::Dense { .. } => {
                    let (w, b) = (&self.params[node.params[0]], &self.params[node.params[1]]);
                    dense_forward(x.unwrap(), &w.value, &b.value).map_err(wrap)?
                }
                LayerSpec::Concat => {
                    let (a, b) = (&acts[node.inputs[0]], &acts[node.inputs[1]]);
                    Tensor::vector(reshape::concat(a.as_slice(), b.as_slice()))?
                }
                LayerSpec::SoftmaxOutput => Tensor::vector(softmax::softmax(x.unwrap().as_slice()))?,
            };
            acts.push(out);
        }

        let probs = acts.last().expect("non-empty graph").as_slice().to_vec();
        Ok(ForwardPass {
            probs,
            cache: ForwardCache {
                activations: acts,
                argmax,
                masks,
                train,
            },
        })
    }

    /// Class probabilities in infer mode.
    pub fn predict(&self, inputs: &[&Tensor<T>]) -> Result<Vec<T>> {
        Ok(self.forward(inputs, Mode::Infer)?.probs)
    }

    /// Pre-softmax class scores recorded in `cache`.
    pub fn logits<'c>(&self, cache: &'c ForwardCache<T>) -> &'c [T] {
        let softmax_input = self.nodes.last().expect("non-empty graph").inputs[0];
        cache.activations[softmax_input].as_slice()
    }

    /// Cross-entropy backward pass: adds the gradient of `-ln p[true_class]`
    /// into every `Param::grad` and returns the loss.
    pub fn backward(&mut self, cache: &ForwardCache<T>, true_class: usize) -> Result<T> {
        if !cache.train || cache.activations.len() != self.nodes.len() {
            return Err(Error::MissingCache);
        }
        let (_, loss) = softmax::softmax_xent(self.logits(cache), true_class)?;
        let logit_grad = softmax::softmax_xent_grad(self.logits(cache), true_class)?;
        let grads = self.propagate(cache, &logit_grad, true, false)?;
        for (param, grad) in self.params.iter_mut().zip(grads.params).rev() {
            if let Some(g) = grad {
                param.grad.add_assign(&g)?;
            }
        }
        Ok(loss)
    }

    /// Propagates `logit_grad` (the gradient with respect to the pre-softmax
    /// scores) back through the graph without touching stored gradients.
    pub fn propagate(
        &self,
        cache: &ForwardCache<T>,
        logit_grad: &[T],
        want_params: bool,
        want_inputs: bool,
    ) -> Result<Gradients<T>> {
        let n = self.nodes.len();
        if cache.activations.len() != n {
            return Err(Error::MissingCache);
        }
        let last = &self.nodes[n - 1];
        let logits_node = last.inputs[0];
        if logit_grad.len() != last.output_shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "logit gradient has {} entries, graph has {} classes",
                logit_grad.len(),
                last.output_shape.len()
            )));
        }

        // needs[i]: some parameter or requested input lies upstream of node i.
        let mut needs = vec![false; n];
        for (i, node) in self.nodes.iter().enumerate() {
            needs[i] = match node.layer {
                LayerSpec::Input { .. } => want_inputs,
                _ => (want_params && !node.params.is_empty()) || node.inputs.iter().any(|&j| needs[j]),
            };
        }

        let mut out_grads: Vec<Option<Tensor<T>>> = vec![None; n];
        out_grads[logits_node] = Some(Tensor::vector(logit_grad.to_vec())?);
        let mut param_grads: Vec<Option<Tensor<T>>> = vec![None; self.params.len()];
        let mut input_grads: Vec<Option<Tensor<T>>> = vec![None; self.slots.len()];

        for i in (0..n - 1).rev() {
            let Some(g) = out_grads[i].take() else { continue };
            if !needs[i] {
                continue;
            }
            let node = &self.nodes[i];
            let x = node.inputs.first().map(|&j| &cache.activations[j]);
            let need_in = node.inputs.first().is_some_and(|&j| needs[j]);
            let mut emit = |j: usize, grad: Tensor<T>| -> Result<()> {
                match &mut out_grads[j] {
                    Some(acc) => acc.add_assign(&grad),
                    slot => {
                        *slot = Some(grad);
                        Ok(())
                    }
                }
            };
            match &node.layer {
                LayerSpec::Input { slot, .. } => input_grads[*slot] = Some(g),
                LayerSpec::Conv3d { .. } => {
                    let w = &self.params[node.params[0]].value;
                    let grads = conv3d_backward_with(x.unwrap(), w, &g, need_in)?;
                    if want_params {
                        param_grads[node.params[0]] = Some(grads.weights);
                        param_grads[node.params[1]] = Some(grads.bias);
                    }
                    if let Some(dx) = grads.input {
                        emit(node.inputs[0], dx)?;
                    }
                }
                LayerSpec::Dense { .. } => {
                    let w = &self.params[node.params[0]].value;
                    let grads = dense_backward_with(x.unwrap(), w, &g, need_in)?;
                    if want_params {
                        param_grads[node.params[0]] = Some(grads.weights);
                        param_grads[node.params[1]] = Some(grads.bias);
                    }
                    if let Some(dx) = grads.input {
                        emit(node.inputs[0], dx)?;
                    }
                }
                LayerSpec::MaxPool3d { .. } => {
                    if need_in {
                        let idx = cache.argmax[i].as_ref().ok_or(Error::MissingCache)?;
                        emit(node.inputs[0], maxpool3d_backward(idx, &g, x.unwrap().shape())?)?;
                    }
                }
                LayerSpec::Relu => {
                    if need_in {
                        emit(node.inputs[0], activation::relu_backward(x.unwrap(), &g)?)?;
                    }
                }
                LayerSpec::Dropout { .. } => {
                    if need_in {
                        let dx = match &cache.masks[i] {
                            Some(mask) => dropout_backward(mask, &g)?,
                            None => g,
                        };
                        emit(node.inputs[0], dx)?;
                    }
                }
                LayerSpec::Flatten => {
                    if need_in {
                        emit(node.inputs[0], reshape::unflatten(&g, x.unwrap().shape())?)?;
                    }
                }
                LayerSpec::Concat => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    let (ga, gb) = reshape::split_at(g.as_slice(), cache.activations[a].len())?;
                    if needs[a] {
                        emit(a, Tensor::vector(ga)?)?;
                    }
                    if needs[b] {
                        emit(b, Tensor::vector(gb)?)?;
                    }
                }
                LayerSpec::SoftmaxOutput => unreachable!("softmax output is the last node"),
            }
        }

        Ok(Gradients {
            params: param_grads,
            inputs: input_grads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> NetworkGraph<f64> {
        let s = Shape4::new(1, 4, 4, 4).unwrap();
        NetworkGraph::from_specs(vec![
            NodeSpec::new("input", LayerSpec::Input { slot: 0, shape: s }, vec![]),
            NodeSpec::new("conv", LayerSpec::Conv3d { filters: 2, kernel: (2, 2, 2) }, vec![0]),
            NodeSpec::new("relu", LayerSpec::Relu, vec![1]),
            NodeSpec::new("flatten", LayerSpec::Flatten, vec![2]),
            NodeSpec::new("dense", LayerSpec::Dense { units: 3 }, vec![3]),
            NodeSpec::new("softmax", LayerSpec::SoftmaxOutput, vec![4]),
        ])
        .unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let g = tiny();
        let x = Tensor::full(g.input_shapes()[0], 0.3);
        let p = g.predict(&[&x]).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn entry_shape_checked() {
        let g = tiny();
        let x = Tensor::zeros(Shape4::new(1, 4, 4, 5).unwrap());
        assert!(matches!(g.predict(&[&x]), Err(Error::EntryShape { slot: 0, .. })));
    }

    #[test]
    fn oversized_kernel_reports_node_and_axis() {
        let s = Shape4::new(1, 4, 4, 4).unwrap();
        let err = NetworkGraph::<f32>::from_specs(vec![
            NodeSpec::new("input", LayerSpec::Input { slot: 0, shape: s }, vec![]),
            NodeSpec::new("conv3d", LayerSpec::Conv3d { filters: 1, kernel: (2, 2, 5) }, vec![0]),
        ])
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("conv3d") && msg.contains("depth"), "{msg}");
    }

    #[test]
    fn softmax_must_be_last() {
        let s = Shape4::vector(3).unwrap();
        let err = NetworkGraph::<f32>::from_specs(vec![
            NodeSpec::new("input", LayerSpec::Input { slot: 0, shape: s }, vec![]),
            NodeSpec::new("softmax", LayerSpec::SoftmaxOutput, vec![0]),
            NodeSpec::new("relu", LayerSpec::Relu, vec![1]),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::InvalidGraph(_)));
    }

    #[test]
    fn backward_requires_train_cache() {
        let mut g = tiny();
        let x = Tensor::full(g.input_shapes()[0], 0.3);
        let pass = g.forward(&[&x], Mode::Infer).unwrap();
        assert!(matches!(g.backward(&pass.cache, 0), Err(Error::MissingCache)));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = tiny();
        for (k, p) in g.params_mut().iter_mut().enumerate() {
            for (i, v) in p.value.as_mut_slice().iter_mut().enumerate() {
                *v = ((i * 31 + k * 7) % 13) as f64 / 13.0 - 0.4;
            }
        }
        let x = Tensor::from_vec(
            g.input_shapes()[0],
            (0..64).map(|i| (i as f64 * 0.37).sin()).collect(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = g.forward(&[&x], Mode::Train(&mut rng)).unwrap();
        g.backward(&pass.cache, 1).unwrap();
        let once: Vec<Vec<f64>> = g.params().iter().map(|p| p.grad.as_slice().to_vec()).collect();
        g.backward(&pass.cache, 1).unwrap();
        for (p, o) in g.params().iter().zip(&once) {
            let doubled: Vec<f64> = o.iter().map(|v| v * 2.0).collect();
            assert_eq!(p.grad.as_slice(), doubled.as_slice());
        }
        assert!(once.iter().flatten().any(|&v| v != 0.0));
    }
}
