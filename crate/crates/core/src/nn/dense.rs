//! Fully connected layer. Weights are an `n x m` matrix stored as a tensor of
//! shape `(n, m, 1, 1)`, so `weights[i][j]` sits at flat index `i * m + j`.

use super::{axpy, dot};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape4, Tensor};

fn dims<T: Scalar>(input_len: usize, weights: &Tensor<T>, bias_len: usize) -> Result<(usize, usize)> {
    let ws = weights.shape();
    let (n, m) = (ws.channels, ws.height);
    if ws.width != 1 || ws.depth != 1 {
        return Err(Error::ShapeMismatch(format!("dense weights must be n x m x 1 x 1, got {ws}")));
    }
    if input_len != n {
        return Err(Error::ShapeMismatch(format!(
            "dense input has length {input_len}, weights expect {n}"
        )));
    }
    if bias_len != m {
        return Err(Error::ShapeMismatch(format!(
            "dense bias has length {bias_len}, weights produce {m}"
        )));
    }
    Ok((n, m))
}

pub fn dense_weight_shape(n: usize, m: usize) -> Result<Shape4> {
    Shape4::new(n, m, 1, 1)
}

pub fn dense_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, m) = dims(input.len(), weights, bias.len())?;
    let mut out = bias.as_slice().to_vec();
    let w = weights.as_slice();
    for (i, &xi) in input.as_slice().iter().enumerate().take(n) {
        if xi != T::zero() {
            axpy(xi, &w[i * m..(i + 1) * m], &mut out);
        }
    }
    Tensor::vector(out)
}

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    out_grad: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let g = dense_backward_with(input, weights, out_grad, true)?;
    Ok((g.input.expect("input gradient requested"), g.weights, g.bias))
}

pub fn dense_backward_with<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    out_grad: &Tensor<T>,
    need_input: bool,
) -> Result<DenseGrads<T>> {
    let (n, m) = dims(input.len(), weights, out_grad.len())?;
    let w = weights.as_slice();
    let dy = out_grad.as_slice();
    let x = input.as_slice();

    let mut w_grad = Tensor::zeros(weights.shape());
    let wg = w_grad.as_mut_slice();
    for i in 0..n {
        if x[i] != T::zero() {
            axpy(x[i], dy, &mut wg[i * m..(i + 1) * m]);
        }
    }
    let in_grad = if need_input {
        let dx: Vec<T> = (0..n).map(|i| dot(&w[i * m..(i + 1) * m], dy)).collect();
        Some(Tensor::from_vec(input.shape(), dx)?)
    } else {
        None
    };
    Ok(DenseGrads {
        input: in_grad,
        weights: w_grad,
        bias: out_grad.clone(),
    })
}
