//! Non-overlapping 3D max pooling (stride equals window, trailing partial
//! windows dropped).

use crate::error::{Axis, Error, Result};
use crate::tensor::{Scalar, Shape4, Tensor};

pub fn pool_output_shape(input: Shape4, (ph, pw, pd): (usize, usize, usize)) -> Result<Shape4> {
    for (axis, p, n) in [
        (Axis::Height, ph, input.height),
        (Axis::Width, pw, input.width),
        (Axis::Depth, pd, input.depth),
    ] {
        if p == 0 {
            return Err(Error::InvalidShape(format!("pooling window {axis} extent is 0")));
        }
        if n / p == 0 {
            return Err(Error::WindowTooLarge {
                axis,
                window: p,
                input: n,
            });
        }
    }
    Shape4::new(
        input.channels,
        input.height / ph,
        input.width / pw,
        input.depth / pd,
    )
}

/// Returns the pooled tensor and, per output element, the flat input index of
/// the first maximal element of its window in row-major scan order.
pub fn maxpool3d_forward<T: Scalar>(
    input: &Tensor<T>,
    window: (usize, usize, usize),
) -> Result<(Tensor<T>, Vec<usize>)> {
    let inp = input.shape();
    let out = pool_output_shape(inp, window)?;
    let (ph, pw, pd) = window;
    let x = input.as_slice();
    let mut output = Tensor::zeros(out);
    let mut argmax = vec![0usize; out.len()];
    let y = output.as_mut_slice();

    for c in 0..out.channels {
        for oh in 0..out.height {
            for ow in 0..out.width {
                for od in 0..out.depth {
                    let mut best_i = inp.index(c, oh * ph, ow * pw, od * pd);
                    let mut best = x[best_i];
                    for dh in 0..ph {
                        for dw in 0..pw {
                            let base = inp.index(c, oh * ph + dh, ow * pw + dw, od * pd);
                            for dd in 0..pd {
                                let v = x[base + dd];
                                if v > best {
                                    best = v;
                                    best_i = base + dd;
                                }
                            }
                        }
                    }
                    let o = out.index(c, oh, ow, od);
                    y[o] = best;
                    argmax[o] = best_i;
                }
            }
        }
    }
    Ok((output, argmax))
}

/// Routes each output gradient to the input position recorded in `argmax`.
pub fn maxpool3d_backward<T: Scalar>(
    argmax: &[usize],
    out_grad: &Tensor<T>,
    input_shape: Shape4,
) -> Result<Tensor<T>> {
    if argmax.len() != out_grad.len() {
        return Err(Error::ShapeMismatch(format!(
            "argmax has {} entries, output gradient has {}",
            argmax.len(),
            out_grad.len()
        )));
    }
    let mut in_grad = Tensor::zeros(input_shape);
    let dx = in_grad.as_mut_slice();
    for (&i, &g) in argmax.iter().zip(out_grad.as_slice()) {
        let slot = dx.get_mut(i).ok_or_else(|| {
            Error::ShapeMismatch(format!("argmax index {i} outside input shape {input_shape}"))
        })?;
        *slot += g;
    }
    Ok(in_grad)
}
