//! Central-difference gradient checking for anything that exposes its
//! parameters and an analytic gradient.

use rand::Rng as _;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::seeded;

pub trait Parameterized {
    fn parameters(&self) -> Vec<&Tensor>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;
}

/// A scalar loss of the parameters for a fixed `(input, label)` probe.
pub trait Differentiable: Parameterized {
    type Input: ?Sized;

    fn loss(&self, input: &Self::Input, label: usize) -> Result<f64>;

    /// Loss and gradient, one tensor per entry of [`Parameterized::parameters`].
    fn loss_and_gradient(&self, input: &Self::Input, label: usize) -> Result<(f64, Vec<Tensor>)>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// `(tensor index, element index, analytic, numeric)` of the worst probe.
    pub worst: (usize, usize, f64, f64),
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares analytic gradients against central differences at `samples`
/// randomly chosen parameters, spread round-robin over the parameter
/// tensors so every layer is probed.
pub fn grad_check<N: Differentiable>(
    net: &mut N,
    input: &N::Input,
    label: usize,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let (_, grads) = net.loss_and_gradient(input, label)?;
    let sizes: Vec<usize> = net.parameters().iter().map(|t| t.len()).collect();
    if sizes.is_empty() || samples == 0 {
        return Err(Error::invalid("grad_check needs at least one parameter and one sample"));
    }
    let mut rng = seeded(seed);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        worst: (0, 0, 0.0, 0.0),
    };
    for s in 0..samples {
        let t = s % sizes.len();
        let idx = rng.gen_range(0..sizes[t]);
        let original = net.parameters()[t].data()[idx];
        net.parameters_mut()[t].data_mut()[idx] = original + epsilon;
        let plus = net.loss(input, label);
        net.parameters_mut()[t].data_mut()[idx] = original - epsilon;
        let minus = net.loss(input, label);
        net.parameters_mut()[t].data_mut()[idx] = original;
        let numeric = (plus? - minus?) / (2.0 * epsilon);
        let analytic = grads[t].data()[idx];
        let err = relative_error(analytic, numeric);
        report.checked += 1;
        if err > report.max_relative_error || report.checked == 1 {
            report.max_relative_error = report.max_relative_error.max(err);
            report.worst = (t, idx, analytic, numeric);
        }
    }
    Ok(report)
}
