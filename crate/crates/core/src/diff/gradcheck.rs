//! Central finite-difference checks of reverse-mode gradients.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::tol;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Check at most this many evenly spaced coordinates per input.
    pub max_coords: Option<usize>,
    /// Skip coordinates whose `±eps` perturbation changes a discrete
    /// decision on the tape (see [`Graph::discrete_signature`]).
    pub stable_only: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: tol::FD_EPS,
            max_coords: None,
            stable_only: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(tol::GRAD_REL_FLOOR)
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<(f64, u64)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    if !g.value(out).is_scalar() {
        return Err(Error::NonScalarLoss(g.value(out).shape().to_vec()));
    }
    Ok((g.value(out).item(), g.discrete_signature()))
}

/// Maximum relative error between analytic and central-difference
/// gradients of the scalar function `f` over every input coordinate.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let opts = GradCheckOptions {
        eps,
        ..GradCheckOptions::default()
    };
    Ok(grad_check_with(f, inputs, &opts)?.max_rel_error)
}

pub fn grad_check_with<F>(f: F, inputs: &[Tensor], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let base_sig = g.discrete_signature();
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let coords: Vec<usize> = match opts.max_coords {
            Some(m) if m < n => (0..m).map(|i| i * n / m).collect(),
            _ => (0..n).collect(),
        };
        for j in coords {
            let orig = input.data()[j];
            work[k].data_mut()[j] = orig + opts.eps;
            let (plus, sig_p) = evaluate(&f, &work)?;
            work[k].data_mut()[j] = orig - opts.eps;
            let (minus, sig_m) = evaluate(&f, &work)?;
            work[k].data_mut()[j] = orig;
            if opts.stable_only && (sig_p != base_sig || sig_m != base_sig) {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let err = relative_error(analytic[k].data()[j], numeric);
            report.max_rel_error = report.max_rel_error.max(err);
            report.checked += 1;
        }
    }
    Ok(report)
}
