use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `out_grad` where the forward input was strictly positive; the
/// subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, out_grad: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != out_grad.shape() {
        return Err(Error::ShapeMismatch(format!(
            "relu input {} vs gradient {}",
            input.shape(),
            out_grad.shape()
        )));
    }
    let data = input
        .as_slice()
        .iter()
        .zip(out_grad.as_slice())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_and_backward_definition() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).as_slice(), &[0.0, 0.0, 2.0]);
        let g = Tensor::vector(vec![5.0, 5.0, 5.0]).unwrap();
        assert_eq!(relu_backward(&x, &g).unwrap().as_slice(), &[0.0, 0.0, 5.0]);
    }
}
