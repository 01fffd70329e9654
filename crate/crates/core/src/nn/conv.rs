//! Valid-mode, stride-1 3D convolution.
//!
//! Weights are stored as a tensor of shape `(filters * in_channels, kh, kw, kd)`,
//! which has the same row-major order as a 5-D `(filters, in_channels, kh, kw,
//! kd)` array. The number of filters is taken from the bias length.

use super::{axpy, dot};
use crate::error::{Axis, Error, Result};
use crate::tensor::{Scalar, Shape4, Tensor};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    filters: usize,
    in_channels: usize,
    input: Shape4,
    kernel: (usize, usize, usize),
    output: Shape4,
}

impl Geometry {
    fn new<T: Scalar>(input: Shape4, weights: &Tensor<T>, bias_len: usize) -> Result<Self> {
        let filters = bias_len;
        let in_channels = input.channels;
        let ws = weights.shape();
        if filters == 0 || ws.channels != filters * in_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv weights {ws} do not match {filters} filters over {in_channels} input channels"
            )));
        }
        let kernel = (ws.height, ws.width, ws.depth);
        let output = conv_output_shape(input, filters, kernel)?;
        Ok(Geometry {
            filters,
            in_channels,
            input,
            kernel,
            output,
        })
    }

    #[inline]
    fn weight_index(&self, f: usize, c: usize, kh: usize, kw: usize, kd: usize) -> usize {
        let (khn, kwn, kdn) = self.kernel;
        (((f * self.in_channels + c) * khn + kh) * kwn + kw) * kdn + kd
    }
}

/// Output shape of a valid convolution, or the first axis whose kernel extent
/// exceeds the input.
pub fn conv_output_shape(
    input: Shape4,
    filters: usize,
    (kh, kw, kd): (usize, usize, usize),
) -> Result<Shape4> {
    for (axis, k, n) in [
        (Axis::Height, kh, input.height),
        (Axis::Width, kw, input.width),
        (Axis::Depth, kd, input.depth),
    ] {
        if k == 0 {
            return Err(Error::InvalidShape(format!("kernel {axis} extent is 0")));
        }
        if k > n {
            return Err(Error::KernelTooLarge {
                axis,
                kernel: k,
                input: n,
            });
        }
    }
    Shape4::new(
        filters,
        input.height - kh + 1,
        input.width - kw + 1,
        input.depth - kd + 1,
    )
}

pub fn conv3d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let g = Geometry::new(input.shape(), weights, bias.len())?;
    let (khn, kwn, kdn) = g.kernel;
    let (out, inp) = (g.output, g.input);
    let mut output = Tensor::zeros(out);
    let x = input.as_slice();
    let w = weights.as_slice();
    let y = output.as_mut_slice();

    for f in 0..g.filters {
        let b = bias.as_slice()[f];
        for oh in 0..out.height {
            for ow in 0..out.width {
                let o = out.index(f, oh, ow, 0);
                let row = &mut y[o..o + out.depth];
                row.fill(b);
                for c in 0..g.in_channels {
                    for kh in 0..khn {
                        for kw in 0..kwn {
                            let base = inp.index(c, oh + kh, ow + kw, 0);
                            for kd in 0..kdn {
                                let wv = w[g.weight_index(f, c, kh, kw, kd)];
                                axpy(wv, &x[base + kd..base + kd + out.depth], row);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(output)
}

/// Gradients of a convolution with respect to its input, weights and bias.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv3d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    out_grad: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let grads = conv3d_backward_with(input, weights, out_grad, true)?;
    Ok((
        grads.input.expect("input gradient requested"),
        grads.weights,
        grads.bias,
    ))
}

/// Like [`conv3d_backward`], skipping the input gradient when `need_input` is false.
pub fn conv3d_backward_with<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    out_grad: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let filters = out_grad.shape().channels;
    let g = Geometry::new(input.shape(), weights, filters)?;
    if out_grad.shape() != g.output {
        return Err(Error::ShapeMismatch(format!(
            "conv output gradient {} does not match output shape {}",
            out_grad.shape(),
            g.output
        )));
    }
    let (khn, kwn, kdn) = g.kernel;
    let (out, inp) = (g.output, g.input);
    let x = input.as_slice();
    let w = weights.as_slice();
    let dy = out_grad.as_slice();

    let mut b_grad = Tensor::zeros(Shape4::vector(filters)?);
    let mut w_grad = Tensor::zeros(weights.shape());
    let mut in_grad = need_input.then(|| Tensor::zeros(inp));

    let per_filter = out.height * out.width * out.depth;
    for f in 0..filters {
        let slab = &dy[f * per_filter..(f + 1) * per_filter];
        b_grad.as_mut_slice()[f] = slab.iter().fold(T::zero(), |acc, &v| acc + v);
    }

    let wg = w_grad.as_mut_slice();
    for f in 0..filters {
        for oh in 0..out.height {
            for ow in 0..out.width {
                let o = out.index(f, oh, ow, 0);
                let grad_row = &dy[o..o + out.depth];
                for c in 0..g.in_channels {
                    for kh in 0..khn {
                        for kw in 0..kwn {
                            let base = inp.index(c, oh + kh, ow + kw, 0);
                            for kd in 0..kdn {
                                let wi = g.weight_index(f, c, kh, kw, kd);
                                wg[wi] += dot(grad_row, &x[base + kd..base + kd + out.depth]);
                            }
                        }
                    }
                }
            }
        }
    }

    if let Some(in_grad) = in_grad.as_mut() {
        let dx = in_grad.as_mut_slice();
        for f in 0..filters {
            for oh in 0..out.height {
                for ow in 0..out.width {
                    let o = out.index(f, oh, ow, 0);
                    let grad_row = &dy[o..o + out.depth];
                    for c in 0..g.in_channels {
                        for kh in 0..khn {
                            for kw in 0..kwn {
                                let base = inp.index(c, oh + kh, ow + kw, 0);
                                for kd in 0..kdn {
                                    let wv = w[g.weight_index(f, c, kh, kw, kd)];
                                    axpy(
                                        wv,
                                        grad_row,
                                        &mut dx[base + kd..base + kd + out.depth],
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(ConvGrads {
        input: in_grad,
        weights: w_grad,
        bias: b_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(c: usize, h: usize, w: usize, d: usize) -> Shape4 {
        Shape4::new(c, h, w, d).unwrap()
    }

    #[test]
    fn all_ones_kernel_sums_window() {
        let input = Tensor::<f64>::full(shape(1, 3, 3, 3), 1.0);
        let weights = Tensor::full(shape(1, 2, 2, 2), 1.0);
        let bias = Tensor::vector(vec![0.0]).unwrap();
        let out = conv3d_forward(&input, &weights, &bias).unwrap();
        assert_eq!(out.shape(), shape(1, 2, 2, 2));
        assert!(out.as_slice().iter().all(|&v| v == 8.0));
    }

    #[test]
    fn table_one_output_shape() {
        let out = conv_output_shape(shape(1, 64, 64, 96), 32, (3, 3, 15)).unwrap();
        assert_eq!(out, shape(32, 62, 62, 82));
    }

    #[test]
    fn oversized_kernel_names_axis() {
        let err = conv_output_shape(shape(1, 64, 64, 18), 32, (3, 3, 19)).unwrap_err();
        match err {
            Error::KernelTooLarge { axis, kernel, input } => {
                assert_eq!((axis, kernel, input), (Axis::Depth, 19, 18));
            }
            other => panic!("unexpected {other}"),
        }
        let input = Tensor::<f32>::zeros(shape(1, 4, 2, 4));
        let weights = Tensor::zeros(shape(1, 3, 3, 3));
        let bias = Tensor::vector(vec![0.0]).unwrap();
        let err = conv3d_forward(&input, &weights, &bias).unwrap_err();
        assert!(err.to_string().contains("width"), "{err}");
    }

    #[test]
    fn channel_mismatch_rejected() {
        let input = Tensor::<f64>::zeros(shape(2, 4, 4, 4));
        let weights = Tensor::zeros(shape(3, 2, 2, 2));
        let bias = Tensor::vector(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            conv3d_forward(&input, &weights, &bias),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn zero_out_grad_gives_zero_grads() {
        let input = Tensor::<f64>::full(shape(2, 4, 4, 5), 0.7);
        let weights = Tensor::full(shape(6, 2, 2, 3), -0.3);
        let og = Tensor::zeros(shape(3, 3, 3, 3));
        let (gi, gw, gb) = conv3d_backward(&input, &weights, &og).unwrap();
        for t in [&gi, &gw, &gb] {
            assert!(t.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_output_weight_grad_is_scaled_input() {
        let s = shape(1, 2, 3, 4);
        let data: Vec<f64> = (0..s.len()).map(|i| i as f64 * 0.25 - 1.0).collect();
        let input = Tensor::from_vec(s, data).unwrap();
        let weights = Tensor::full(s, 0.5);
        let og = Tensor::vector(vec![3.0]).unwrap();
        let (_, gw, gb) = conv3d_backward(&input, &weights, &og).unwrap();
        let expected: Vec<f64> = input.as_slice().iter().map(|v| 3.0 * v).collect();
        assert_eq!(gw.as_slice(), expected.as_slice());
        assert_eq!(gb.as_slice(), &[3.0]);
    }
}
