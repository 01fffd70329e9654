//! Central finite-difference gradient checking for whole graphs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dropout::Mode;
use super::graph::NetworkGraph;
use super::softmax::softmax_xent;
use crate::error::Result;
use crate::tensor::Tensor;

/// Largest relative error per parameter block.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub blocks: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.blocks.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn block(&self, name: &str) -> Option<f64> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, e)| *e)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Seed of the dropout masks used for every loss evaluation of a check.
pub const MASK_SEED: u64 = 0x5eed;

fn loss_at(g: &NetworkGraph<f64>, inputs: &[&Tensor<f64>], class: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(MASK_SEED);
    let pass = g.forward(inputs, Mode::Train(&mut rng))?;
    Ok(softmax_xent(g.logits(&pass.cache), class)?.1)
}

/// Compares `graph.backward` against central differences of the loss, with
/// the same dropout masks for every evaluation.
pub fn finite_diff_check(
    g: &mut NetworkGraph<f64>,
    inputs: &[&Tensor<f64>],
    true_class: usize,
    epsilon: f64,
) -> Result<GradCheckReport> {
    finite_diff_check_with(g, inputs, true_class, epsilon, |g, inputs, class| {
        let mut rng = ChaCha8Rng::seed_from_u64(MASK_SEED);
        let pass = g.forward(inputs, Mode::Train(&mut rng))?;
        g.backward(&pass.cache, class)?;
        Ok(())
    })
}

/// As [`finite_diff_check`], with the analytic gradients produced by
/// `analytic`, which receives zeroed gradients and must fill `Param::grad`.
pub fn finite_diff_check_with<F>(
    g: &mut NetworkGraph<f64>,
    inputs: &[&Tensor<f64>],
    true_class: usize,
    epsilon: f64,
    analytic: F,
) -> Result<GradCheckReport>
where
    F: FnOnce(&mut NetworkGraph<f64>, &[&Tensor<f64>], usize) -> Result<()>,
{
    g.zero_grads();
    analytic(g, inputs, true_class)?;
    let mut blocks = Vec::with_capacity(g.params().len());
    for p in 0..g.params().len() {
        let mut worst = 0.0f64;
        for i in 0..g.params()[p].value.len() {
            let original = g.params()[p].value.as_slice()[i];
            g.params_mut()[p].value.as_mut_slice()[i] = original + epsilon;
            let plus = loss_at(g, inputs, true_class)?;
            g.params_mut()[p].value.as_mut_slice()[i] = original - epsilon;
            let minus = loss_at(g, inputs, true_class)?;
            g.params_mut()[p].value.as_mut_slice()[i] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let analytic = g.params()[p].grad.as_slice()[i];
            worst = worst.max(relative_error(analytic, numeric));
        }
        blocks.push((g.params()[p].name.clone(), worst));
    }
    g.zero_grads();
    Ok(GradCheckReport { blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::{LayerSpec, NodeSpec};
    use crate::tensor::Shape4;

    #[test]
    fn linear_toy_graph_is_exact() {
        // Dense 1 -> 2 with a logit gap of ~19, where the loss is linear in
        // every parameter to within e^-19.
        let mut g = NetworkGraph::<f64>::from_specs(vec![
            NodeSpec::new("x", LayerSpec::Input { slot: 0, shape: Shape4::vector(1).unwrap() }, vec![]),
            NodeSpec::new("dense", LayerSpec::Dense { units: 2 }, vec![0]),
            NodeSpec::new("softmax", LayerSpec::SoftmaxOutput, vec![1]),
        ])
        .unwrap();
        g.params_mut()[0].value.as_mut_slice()[0] = 0.75;
        g.params_mut()[1].value.as_mut_slice()[1] = 20.0;
        let x = Tensor::vector(vec![1.5]).unwrap();
        let report = finite_diff_check(&mut g, &[&x], 0, 1e-4).unwrap();
        assert!(report.max_error() < 1e-10, "{report:?}");
    }
}
