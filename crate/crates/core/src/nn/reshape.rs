use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape4, Tensor};

/// Row-major (channels, height, width, depth) linearization.
pub fn flatten<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    Tensor::vector(input.as_slice().to_vec()).expect("validated tensors are non-empty")
}

pub fn unflatten<T: Scalar>(out_grad: &Tensor<T>, input_shape: Shape4) -> Result<Tensor<T>> {
    out_grad.clone().reshape(input_shape)
}

pub fn concat<T: Copy>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

/// Splits a concatenated gradient back into the two input slices.
pub fn split_at<T: Copy>(out_grad: &[T], first_len: usize) -> Result<(Vec<T>, Vec<T>)> {
    if first_len > out_grad.len() {
        return Err(Error::ShapeMismatch(format!(
            "cannot split {} elements at {first_len}",
            out_grad.len()
        )));
    }
    let (a, b) = out_grad.split_at(first_len);
    Ok((a.to_vec(), b.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_lengths() {
        let t = Tensor::<f32>::zeros(Shape4::new(32, 20, 20, 27).unwrap());
        assert_eq!(flatten(&t).len(), 345600);
        let t = Tensor::<f32>::zeros(Shape4::new(32, 10, 10, 27).unwrap());
        assert_eq!(flatten(&t).len(), 86400);
        let one = Tensor::vector(vec![4.5f64]).unwrap();
        assert_eq!(flatten(&one).as_slice(), &[4.5]);
    }

    #[test]
    fn concat_lengths_and_empty() {
        let a = vec![0.0f32; 86400];
        assert_eq!(concat(&a, &a).len(), 172800);
        let x = [1.0, 2.0];
        assert_eq!(concat(&[], &x), x.to_vec());
    }
}
