//! Central finite-difference verification of reverse-mode gradients.
//!
//! Runs the graph in `f64` end to end so truncation, not storage rounding,
//! dominates the comparison. Coordinates where the loss clamp is active are
//! non-differentiable points; they are excluded and counted instead of
//! compared.

use super::graph::{backward, forward, Graph, NodeId};
use super::loss::cross_entropy_grad;
use super::mat::{Mat, Matrix};
use super::params::ParamTensor;
use crate::Result;

/// Scalar objective driven through the graph output.
#[derive(Clone, Copy, Debug)]
pub enum LossKind {
    /// Sum of every output element.
    SumOutput,
    /// Classification loss against a fixed label; the output node must be a
    /// `1 x S` softmax row.
    CrossEntropy { label: usize },
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates skipped because a clamp boundary was active at or around
    /// the evaluation point.
    pub excluded: usize,
}

// Gradients where both routes are below this magnitude are treated as
// matching zeros; a relative error of rounding noise against rounding noise
// carries no information.
const NEGLIGIBLE: f64 = 1e-6;

struct LossEval {
    loss: f64,
    clamped: bool,
    seed: Option<Mat<f64>>,
}

fn eval_loss(
    g: &Graph,
    params: &[Mat<f64>],
    inputs: &[Mat<f64>],
    output: NodeId,
    kind: LossKind,
    want_seed: bool,
) -> Result<LossEval> {
    let param_refs: Vec<&Mat<f64>> = params.iter().collect();
    let tape = forward(g, &param_refs, inputs)?;
    let out = tape.value(output);
    match kind {
        LossKind::SumOutput => {
            let loss: f64 = out.data().iter().sum();
            let seed = want_seed.then(|| {
                let mut m = Mat::zeros(out.rows(), out.cols());
                m.fill(1.0);
                m
            });
            Ok(LossEval {
                loss,
                clamped: false,
                seed,
            })
        }
        LossKind::CrossEntropy { label } => {
            let s = out.cols();
            let (outcome, grad) = cross_entropy_grad(out, label, s)?;
            Ok(LossEval {
                loss: outcome.loss,
                clamped: outcome.clamped,
                seed: want_seed.then_some(grad),
            })
        }
    }
}

/// Compare analytic parameter gradients against `(f(p+h) - f(p-h)) / 2h` on
/// a deterministic strided sample of at most `max_coords_per_param`
/// coordinates per parameter.
pub fn grad_check(
    g: &Graph,
    params: &[ParamTensor],
    inputs: &[Matrix],
    output: NodeId,
    kind: LossKind,
    h: f64,
    max_coords_per_param: usize,
) -> Result<GradCheckReport> {
    assert!(h > 0.0, "step size must be positive");
    let mut params64: Vec<Mat<f64>> = params.iter().map(|p| p.value.convert()).collect();
    let inputs64: Vec<Mat<f64>> = inputs.iter().map(Mat::convert).collect();

    let base = eval_loss(g, &params64, &inputs64, output, kind, true)?;
    let analytic = {
        let param_refs: Vec<&Mat<f64>> = params64.iter().collect();
        let tape = forward(g, &param_refs, &inputs64)?;
        backward(g, &tape, output, base.seed.clone().unwrap())?
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        excluded: 0,
    };

    for pi in 0..params64.len() {
        let len = params64[pi].data().len();
        if len == 0 {
            continue;
        }
        let stride = len.div_ceil(max_coords_per_param).max(1);
        let mut idx = 0;
        while idx < len {
            let orig = params64[pi].data()[idx];

            params64[pi].data_mut()[idx] = orig + h;
            let plus = eval_loss(g, &params64, &inputs64, output, kind, false)?;
            params64[pi].data_mut()[idx] = orig - h;
            let minus = eval_loss(g, &params64, &inputs64, output, kind, false)?;
            params64[pi].data_mut()[idx] = orig;

            if base.clamped || plus.clamped || minus.clamped {
                report.excluded += 1;
                idx += stride;
                continue;
            }
            let fd = (plus.loss - minus.loss) / (2.0 * h);
            let a = analytic[pi].data()[idx];
            let denom = a.abs().max(fd.abs());
            if denom > NEGLIGIBLE {
                let rel = (a - fd).abs() / denom;
                if rel > report.max_rel_err {
                    report.max_rel_err = rel;
                }
            }
            report.checked += 1;
            idx += stride;
        }
    }
    Ok(report)
}
