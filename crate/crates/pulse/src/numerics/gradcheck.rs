//! Finite-difference gradient checking.
//!
//! Rebuilds the computation from scratch for every probe, so the check is
//! honest about everything the tape records (padding, gathers, fused
//! reductions). Builders must be deterministic: reseed any generator they
//! use internally on every call.

use super::{DiffTensor, Tape, TensorId};

/// Central-difference step used throughout the crate's checks.
pub const FD_STEP: f64 = 1e-6;

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Worst relative error over every checked element.
    pub max_rel_err: f64,
    /// Name of the input holding the worst element.
    pub worst_input: String,
    /// Flat element index of the worst element.
    pub worst_index: usize,
    /// Total number of elements probed.
    pub probes: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Relative error with an absolute floor: elements below the floor are
/// compared on an absolute scale so near-zero gradients do not divide by
/// noise.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-3);
    (analytic - numeric).abs() / denom
}

/// Compare tape gradients of a scalar loss against central differences.
///
/// `inputs` are registered on the tape in order (as gradient-carrying
/// parameters) and handed to `build`, which must return the scalar loss id.
pub fn check(
    inputs: &[(&str, DiffTensor)],
    build: impl Fn(&mut Tape, &[TensorId]) -> TensorId,
    step: f64,
) -> GradCheck {
    // Analytic pass.
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs.iter().map(|(_, t)| tape.param(t)).collect();
    let loss = build(&mut tape, &ids);
    assert_eq!(tape.values(loss).len(), 1, "gradcheck needs a scalar loss");
    tape.backward(loss);
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| tape.grad(id).to_vec()).collect();

    let eval = |tensors: &[DiffTensor]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = tensors.iter().map(|t| tape.param(t)).collect();
        let loss = build(&mut tape, &ids);
        tape.values(loss)[0]
    };

    let mut work: Vec<DiffTensor> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let mut result = GradCheck {
        max_rel_err: 0.0,
        worst_input: String::new(),
        worst_index: 0,
        probes: 0,
    };
    for ti in 0..work.len() {
        for e in 0..work[ti].numel() {
            let orig = work[ti].values()[e];
            work[ti].values_mut()[e] = orig + step;
            let plus = eval(&work);
            work[ti].values_mut()[e] = orig - step;
            let minus = eval(&work);
            work[ti].values_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = rel_err(analytic[ti][e], numeric);
            result.probes += 1;
            if err > result.max_rel_err {
                result.max_rel_err = err;
                result.worst_input = inputs[ti].0.to_string();
                result.worst_index = e;
            }
        }
    }
    result
}

/// Convenience wrapper asserting the default tolerance of 1e-5.
pub fn assert_grads_match(
    inputs: &[(&str, DiffTensor)],
    build: impl Fn(&mut Tape, &[TensorId]) -> TensorId,
) {
    let report = check(inputs, build, FD_STEP);
    assert!(
        report.passes(1e-5),
        "gradient check failed: rel err {:.3e} at {}[{}]",
        report.max_rel_err,
        report.worst_input,
        report.worst_index
    );
}
