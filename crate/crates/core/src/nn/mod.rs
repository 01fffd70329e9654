//! Layer primitives and the graph that wires them together.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod graph;
pub mod pool;
pub mod reshape;
pub mod softmax;

pub use activation::{relu_backward, relu_forward};
pub use conv::{conv3d_backward, conv3d_forward, conv_output_shape};
pub use dense::{dense_backward, dense_forward};
pub use dropout::{dropout_backward, dropout_forward, Mode};
pub use gradcheck::{finite_diff_check, finite_diff_check_with, GradCheckReport, MASK_SEED};
pub use graph::{
    ForwardCache, ForwardPass, Gradients, LayerSpec, NetworkGraph, Node, NodeSpec, Param, ParamId,
};
pub use pool::{maxpool3d_backward, maxpool3d_forward, pool_output_shape};
pub use reshape::{concat, flatten};
pub use softmax::{softmax, softmax_xent, softmax_xent_grad};

use crate::tensor::Scalar;

/// `y += a * x`
#[inline]
pub(crate) fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight independent partial sums so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for k in 0..chunks {
        let (ca, cb) = (&a[k * 8..k * 8 + 8], &b[k * 8..k * 8 + 8]);
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    let pairs = [acc[0] + acc[4], acc[1] + acc[5], acc[2] + acc[6], acc[3] + acc[7]];
    (pairs[0] + pairs[2]) + (pairs[1] + pairs[3]) + tail
}
