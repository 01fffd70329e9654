use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Softmax with max-subtraction.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total = exps.iter().fold(T::zero(), |acc, &v| acc + v);
    exps.into_iter().map(|e| e / total).collect()
}

/// Probabilities and cross-entropy loss `-ln p[true_class]`.
pub fn softmax_xent<T: Scalar>(logits: &[T], true_class: usize) -> Result<(Vec<T>, T)> {
    if true_class >= logits.len() {
        return Err(Error::ClassOutOfRange {
            class: true_class,
            num_classes: logits.len(),
        });
    }
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let shifted: Vec<T> = logits.iter().map(|&v| v - max).collect();
    let total = shifted.iter().fold(T::zero(), |acc, &v| acc + v.exp());
    let probs = shifted.iter().map(|&v| v.exp() / total).collect();
    let loss = total.ln() - shifted[true_class];
    Ok((probs, loss))
}

/// Gradient of the cross-entropy loss with respect to the logits.
pub fn softmax_xent_grad<T: Scalar>(logits: &[T], true_class: usize) -> Result<Vec<T>> {
    let (mut probs, _) = softmax_xent(logits, true_class)?;
    probs[true_class] -= T::one();
    Ok(probs)
}
