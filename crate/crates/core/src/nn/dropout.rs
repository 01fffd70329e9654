//! Inverted dropout: survivors are scaled by `1 / (1 - rate)` at train time so
//! inference is the identity map.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Forward mode. Train mode carries the generator that draws dropout masks.
pub enum Mode<'a> {
    Train(&'a mut dyn RngCore),
    Infer,
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

pub fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")))
    }
}

/// Returns the output and, in train mode, the per-element multiplier
/// (0 for dropped elements, `1 / (1 - rate)` for kept ones).
pub fn dropout_forward<T: Scalar>(
    input: &Tensor<T>,
    rate: f64,
    mode: &mut Mode<'_>,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    check_rate(rate)?;
    match mode {
        Mode::Infer => Ok((input.clone(), None)),
        Mode::Train(rng) => {
            let keep = T::lit(1.0 / (1.0 - rate));
            let mask: Vec<T> = (0..input.len())
                .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
                .collect();
            let out = input
                .as_slice()
                .iter()
                .zip(&mask)
                .map(|(&x, &m)| x * m)
                .collect();
            Ok((Tensor::from_vec(input.shape(), out)?, Some(mask)))
        }
    }
}

pub fn dropout_backward<T: Scalar>(mask: &[T], out_grad: &Tensor<T>) -> Result<Tensor<T>> {
    if mask.len() != out_grad.len() {
        return Err(Error::ShapeMismatch(format!(
            "dropout mask has {} entries, gradient has {}",
            mask.len(),
            out_grad.len()
        )));
    }
    let data = out_grad
        .as_slice()
        .iter()
        .zip(mask)
        .map(|(&g, &m)| g * m)
        .collect();
    Tensor::from_vec(out_grad.shape(), data)
}
