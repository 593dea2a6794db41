//! Residual-only reversible normalization.
//!
//! The anchor is subtracted, only the residual is standardized per sample
//! and channel over the time axis, and the anchor is added back. Decoding
//! applies the reverse affine map to fluctuations around the future anchor,
//! so the anchor passes through untouched. There are no learnable affine
//! parameters; the map is stateless beyond the captured statistics.

use crate::numerics::{Tape, TensorId};

/// Per-sample, per-channel residual statistics captured at normalization
/// time, shape (B, 1, C). `sigma` is floored at sqrt(1e-8) by the guarded
/// standard deviation.
#[derive(Debug, Clone, Copy)]
pub struct NormState {
    pub mu: TensorId,
    pub sigma: TensorId,
}

/// `X_tilde = (X - A_x - mu_R) / sigma_R + A_x` with statistics of the
/// residual `R = X - A_x` over the time axis. Differentiable through both
/// branches.
pub fn disentangle_normalize(tape: &mut Tape, x: TensorId, a_x: TensorId) -> (TensorId, NormState) {
    assert_eq!(tape.shape(x), tape.shape(a_x), "input and anchor shapes differ");
    assert_eq!(tape.shape(x).len(), 3, "expected (B, T, C)");
    let r = tape.sub(x, a_x);
    let (mu, sigma) = tape.mean_std(r, 1);
    let centered = tape.sub(r, mu);
    let scaled = tape.div(centered, sigma);
    let x_tilde = tape.add(scaled, a_x);
    (x_tilde, NormState { mu, sigma })
}

/// Decode with the captured statistics:
/// `Y_hat = sigma_R * (Y0 - A_y) + mu_R + A_y`.
pub fn generative_denorm(tape: &mut Tape, y0: TensorId, a_y: TensorId, state: &NormState) -> TensorId {
    denorm_with_stats(tape, y0, a_y, state.mu, state.sigma)
}

/// Same affine decode with caller-supplied statistics (the mixup path
/// interpolates them instead of re-measuring).
pub fn denorm_with_stats(
    tape: &mut Tape,
    y0: TensorId,
    a_y: TensorId,
    mu: TensorId,
    sigma: TensorId,
) -> TensorId {
    assert_eq!(tape.shape(y0), tape.shape(a_y), "prediction and anchor shapes differ");
    // Reject zero/negative scales here; non-finite values flow through so
    // the training loop can report them with context.
    assert!(
        !tape.values(sigma).iter().any(|s| *s <= 0.0),
        "decode scale must be strictly positive"
    );
    let fluct = tape.sub(y0, a_y);
    let scaled = tape.mul(fluct, sigma);
    let restored = tape.add(scaled, mu);
    tape.add(restored, a_y)
}

/// Learnable-affine variant: rescales the standardized residual by
/// per-channel `gamma` (shape 1x1xC) and shifts by `beta` before the
/// anchor is re-added. The training pipeline stays on the parameter-free
/// map; this pair exists for experiments and inverts it exactly.
pub fn disentangle_normalize_affine(
    tape: &mut Tape,
    x: TensorId,
    a_x: TensorId,
    gamma: TensorId,
    beta: TensorId,
) -> (TensorId, NormState) {
    let (plain, state) = disentangle_normalize(tape, x, a_x);
    let standardized = tape.sub(plain, a_x);
    let scaled = tape.mul(standardized, gamma);
    let shifted = tape.add(scaled, beta);
    (tape.add(shifted, a_x), state)
}

/// Inverse of [`disentangle_normalize_affine`] on horizon-shaped data.
pub fn denorm_affine(
    tape: &mut Tape,
    y0: TensorId,
    a_y: TensorId,
    state: &NormState,
    gamma: TensorId,
    beta: TensorId,
) -> TensorId {
    assert!(
        !tape.values(gamma).contains(&0.0),
        "affine scale must be invertible"
    );
    let fluct = tape.sub(y0, a_y);
    let unshifted = tape.sub(fluct, beta);
    let unscaled = tape.div(unshifted, gamma);
    let restored = tape.add(unscaled, a_y);
    denorm_with_stats(tape, restored, a_y, state.mu, state.sigma)
}
