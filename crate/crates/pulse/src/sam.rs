//! Statistic-aware mixup.
//!
//! One Beta(alpha, alpha)-distributed coefficient and one permutation per
//! batch mix the normalized input, the anchors, the decode statistics, and
//! the target. The decode scale is interpolated linearly between the two
//! samples' residual scales rather than re-measured from the mixed
//! waveform; re-measuring is kept as [`naive_mix_stats`] for the ablation
//! that demonstrates anti-phase scale collapse.
//!
//! Mixing is computed as `q + (1-lambda) * (q[perm] - q)`, which is
//! algebraically the convex combination but returns `q` exactly when the
//! pair is identical, when lambda is 1, and when the batch has one sample.

use crate::norm::NormState;
use crate::numerics::{Rng, Tape, TensorId};

/// Per-batch mixing decision.
#[derive(Debug, Clone)]
pub struct MixPlan {
    /// Shared coefficient; 1.0 when disabled.
    pub lambda: f64,
    /// Per-sample coefficients; set only when per-sample mode is on.
    pub per_sample: Option<Vec<f64>>,
    /// Bijection over batch indices.
    pub perm: Vec<usize>,
    pub enabled: bool,
    pub statistic_aware: bool,
}

impl MixPlan {
    /// Identity plan (the disabled path).
    pub fn disabled(batch_size: usize) -> Self {
        MixPlan {
            lambda: 1.0,
            per_sample: None,
            perm: (0..batch_size).collect(),
            enabled: false,
            statistic_aware: true,
        }
    }
}

/// Draw the permutation (Fisher-Yates) and then lambda from
/// Beta(alpha, alpha). Disabled plans consume no randomness.
pub fn make_plan(
    rng: &mut Rng,
    batch_size: usize,
    alpha: f64,
    use_sam: bool,
    statistic_aware: bool,
    per_sample: bool,
) -> MixPlan {
    assert!(batch_size >= 1, "make_plan needs batch_size >= 1");
    if !use_sam {
        return MixPlan::disabled(batch_size);
    }
    let perm = rng.permutation(batch_size);
    let lambda = rng.sample_beta(alpha, alpha);
    let per_sample = per_sample
        .then(|| (0..batch_size).map(|_| rng.sample_beta(alpha, alpha)).collect::<Vec<f64>>());
    MixPlan { lambda, per_sample, perm, enabled: true, statistic_aware }
}

/// Mix one rank-3 tensor along the batch axis according to the plan.
pub fn mix_tensor(tape: &mut Tape, plan: &MixPlan, q: TensorId) -> TensorId {
    if !plan.enabled {
        return q;
    }
    let permuted = tape.permute_axis0(q, &plan.perm);
    let delta = tape.sub(permuted, q);
    let weighted = match &plan.per_sample {
        None => tape.scale(delta, 1.0 - plan.lambda),
        Some(lambdas) => {
            let b = lambdas.len();
            let w = tape.constant(vec![b, 1, 1], lambdas.iter().map(|l| 1.0 - l).collect());
            tape.mul(delta, w)
        }
    };
    tape.add(q, weighted)
}

/// Everything the decode of a mixed batch needs.
#[derive(Debug, Clone, Copy)]
pub struct MixedBatch {
    pub x_tilde: TensorId,
    pub a_x: TensorId,
    pub enc_y: TensorId,
    /// Interpolated decode statistics (never re-measured).
    pub mu: TensorId,
    pub sigma: TensorId,
    pub y: TensorId,
}

/// Apply one plan to the whole forward state: the normalized input, the
/// history anchor, the future-mark encoding, both decode statistics, and
/// the target. Statistics are interpolated, not re-estimated.
pub fn mix_batch(
    tape: &mut Tape,
    plan: &MixPlan,
    x_tilde: TensorId,
    a_x: TensorId,
    enc_y: TensorId,
    state: &NormState,
    y: TensorId,
) -> MixedBatch {
    MixedBatch {
        x_tilde: mix_tensor(tape, plan, x_tilde),
        a_x: mix_tensor(tape, plan, a_x),
        enc_y: mix_tensor(tape, plan, enc_y),
        mu: mix_tensor(tape, plan, state.mu),
        sigma: mix_tensor(tape, plan, state.sigma),
        y: mix_tensor(tape, plan, y),
    }
}

/// The ablated statistic path: re-measure mean and scale from the mixed
/// residual waveform `R_mix = X_tilde_mix - A_x_mix` over the time axis.
/// Anti-phase pairs collapse this scale toward sqrt(1e-8).
pub fn naive_mix_stats(
    tape: &mut Tape,
    x_tilde_mix: TensorId,
    a_x_mix: TensorId,
) -> (TensorId, TensorId) {
    assert_eq!(
        tape.shape(x_tilde_mix),
        tape.shape(a_x_mix),
        "mixed input and anchor shapes differ"
    );
    let r_mix = tape.sub(x_tilde_mix, a_x_mix);
    tape.mean_std(r_mix, 1)
}

/// Closed-form collapse ratio `(sigma_naive / sigma_ours)^2` for two
/// residuals with scales `sigma_i`, `sigma_j`, correlation `rho`, mixed at
/// `lambda`:
/// `1 - 2*lambda*(1-lambda)*sigma_i*sigma_j*(1-rho) / (lambda*sigma_i + (1-lambda)*sigma_j)^2`.
pub fn collapse_ratio(sigma_i: f64, sigma_j: f64, rho: f64, lambda: f64) -> f64 {
    assert!(sigma_i > 0.0 && sigma_j > 0.0, "scales must be positive");
    assert!((-1.0..=1.0).contains(&rho), "correlation must lie in [-1, 1]");
    assert!(lambda > 0.0 && lambda < 1.0, "lambda must lie in (0, 1)");
    let ours = lambda * sigma_i + (1.0 - lambda) * sigma_j;
    1.0 - 2.0 * lambda * (1.0 - lambda) * sigma_i * sigma_j * (1.0 - rho) / (ours * ours)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::denorm_with_stats;
    use crate::numerics::EPS_VAR;

    fn constant_state(tape: &mut Tape, b: usize, c: usize, mu: f64, sigma: f64) -> NormState {
        let mu = tape.constant(vec![b, 1, c], vec![mu; b * c]);
        let sigma = tape.constant(vec![b, 1, c], vec![sigma; b * c]);
        NormState { mu, sigma }
    }

    #[test]
    fn disabled_plan_is_identity() {
        let mut rng = Rng::new(1);
        let plan = make_plan(&mut rng, 5, 0.15, false, true, false);
        assert!(!plan.enabled);
        assert_eq!(plan.lambda, 1.0);
        assert_eq!(plan.perm, vec![0, 1, 2, 3, 4]);
        // No randomness consumed.
        let mut fresh = Rng::new(1);
        assert_eq!(rng.next_u64(), fresh.next_u64());
    }

    #[test]
    fn plans_are_seed_deterministic() {
        let a = make_plan(&mut Rng::new(2024), 16, 0.15, true, true, false);
        let b = make_plan(&mut Rng::new(2024), 16, 0.15, true, true, false);
        assert_eq!(a.lambda, b.lambda);
        assert_eq!(a.perm, b.perm);
    }

    #[test]
    fn batch_of_one_degenerates_to_identity() {
        let mut rng = Rng::new(3);
        let plan = make_plan(&mut rng, 1, 0.15, true, true, false);
        assert_eq!(plan.perm, vec![0]);
        let mut tape = Tape::new();
        let vals = vec![0.1, -0.7, 2.3];
        let q = tape.constant(vec![1, 3, 1], vals.clone());
        let mixed = mix_tensor(&mut tape, &plan, q);
        // q[perm] == q, so the delta form returns q exactly.
        assert_eq!(tape.values(mixed), &vals[..]);
    }

    #[test]
    fn lambda_one_is_exact_passthrough() {
        let mut tape = Tape::new();
        let plan = MixPlan {
            lambda: 1.0,
            per_sample: None,
            perm: vec![1, 0],
            enabled: true,
            statistic_aware: true,
        };
        let vals = vec![0.3, -1.1, 0.25, 7.5];
        let q = tape.constant(vec![2, 2, 1], vals.clone());
        let mixed = mix_tensor(&mut tape, &plan, q);
        assert_eq!(tape.values(mixed), &vals[..]);
    }

    #[test]
    fn identical_pair_mixes_to_itself_exactly() {
        let mut tape = Tape::new();
        let plan = MixPlan {
            lambda: 0.371,
            per_sample: None,
            perm: vec![1, 0],
            enabled: true,
            statistic_aware: true,
        };
        let row = vec![0.1, -0.9, 3.3];
        let vals: Vec<f64> = row.iter().chain(&row).cloned().collect();
        let q = tape.constant(vec![2, 3, 1], vals.clone());
        let mixed = mix_tensor(&mut tape, &plan, q);
        assert_eq!(tape.values(mixed), &vals[..]);
    }

    #[test]
    fn sigma_interpolation_example() {
        // lambda = 0.5, sigma pair (1, 3) swaps to (2, 2).
        let mut tape = Tape::new();
        let plan = MixPlan {
            lambda: 0.5,
            per_sample: None,
            perm: vec![1, 0],
            enabled: true,
            statistic_aware: true,
        };
        let sigma = tape.constant(vec![2, 1, 1], vec![1.0, 3.0]);
        let mixed = mix_tensor(&mut tape, &plan, sigma);
        assert_eq!(tape.values(mixed), &[2.0, 2.0]);
    }

    #[test]
    fn mixed_sigma_never_below_pair_minimum() {
        let mut rng = Rng::new(4);
        for _ in 0..50 {
            let lambda = rng.next_f64();
            let s0 = 0.1 + rng.next_f64() * 3.0;
            let s1 = 0.1 + rng.next_f64() * 3.0;
            let mut tape = Tape::new();
            let plan = MixPlan {
                lambda,
                per_sample: None,
                perm: vec![1, 0],
                enabled: true,
                statistic_aware: true,
            };
            let sigma = tape.constant(vec![2, 1, 1], vec![s0, s1]);
            let mixed = mix_tensor(&mut tape, &plan, sigma);
            for v in tape.values(mixed) {
                assert!(*v >= s0.min(s1) - 1e-15, "sigma_mix {v} below min({s0}, {s1})");
            }
        }
    }

    #[test]
    fn naive_stats_of_fixed_point_match_unmixed() {
        let mut rng = Rng::new(5);
        let (b, t, c) = (2, 32, 1);
        let vals: Vec<f64> = (0..b * t * c).map(|_| rng.gauss()).collect();
        let mut tape = Tape::new();
        let plan = MixPlan {
            lambda: 0.3,
            per_sample: None,
            perm: vec![0, 1], // fixed points only
            enabled: true,
            statistic_aware: false,
        };
        let xt = tape.constant(vec![b, t, c], vals);
        let ax = tape.zeros(vec![b, t, c]);
        let xm = mix_tensor(&mut tape, &plan, xt);
        let am = mix_tensor(&mut tape, &plan, ax);
        let (_, sd_naive) = naive_mix_stats(&mut tape, xm, am);
        let (_, sd_plain) = tape.mean_std(xt, 1);
        assert_eq!(tape.values(sd_naive), tape.values(sd_plain));
    }

    #[test]
    fn antiphase_pair_collapses_to_eps_floor() {
        let t = 64;
        let base: Vec<f64> = (0..t)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / 16.0).sin() * std::f64::consts::SQRT_2)
            .collect();
        let mut vals = base.clone();
        vals.extend(base.iter().map(|v| -v));
        let mut tape = Tape::new();
        let plan = MixPlan {
            lambda: 0.5,
            per_sample: None,
            perm: vec![1, 0],
            enabled: true,
            statistic_aware: false,
        };
        let xt = tape.constant(vec![2, t, 1], vals);
        let ax = tape.zeros(vec![2, t, 1]);
        let xm = mix_tensor(&mut tape, &plan, xt);
        let am = mix_tensor(&mut tape, &plan, ax);
        let (_, sd) = naive_mix_stats(&mut tape, xm, am);
        for v in tape.values(sd) {
            assert!((v - EPS_VAR.sqrt()).abs() < 1e-12, "sd {v}");
        }
    }

    #[test]
    fn uncorrelated_unit_pair_matches_closed_form() {
        // rho = 0, sigma_i = sigma_j = 1, lambda = 0.5: the naive scale is
        // sqrt(0.5) up to Monte-Carlo error on a long signal.
        let mut rng = Rng::new(6);
        let n = 100_000;
        let normalize = |mut v: Vec<f64>| -> Vec<f64> {
            let mu = v.iter().sum::<f64>() / n as f64;
            let sd = (v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n as f64).sqrt();
            for x in &mut v {
                *x = (*x - mu) / sd;
            }
            v
        };
        let a = normalize((0..n).map(|_| rng.gauss()).collect());
        let b = normalize((0..n).map(|_| rng.gauss()).collect());
        let mut vals = a;
        vals.extend(b);
        let mut tape = Tape::new();
        let plan = MixPlan {
            lambda: 0.5,
            per_sample: None,
            perm: vec![1, 0],
            enabled: true,
            statistic_aware: false,
        };
        let xt = tape.constant(vec![2, n, 1], vals);
        let ax = tape.zeros(vec![2, n, 1]);
        let xm = mix_tensor(&mut tape, &plan, xt);
        let am = mix_tensor(&mut tape, &plan, ax);
        let (_, sd) = naive_mix_stats(&mut tape, xm, am);
        let want = collapse_ratio(1.0, 1.0, 0.0, 0.5).sqrt(); // sigma_ours = 1
        for v in tape.values(sd) {
            assert!((v - want).abs() < 0.01, "sd {v}, closed form {want}");
        }
    }

    #[test]
    fn collapse_ratio_reference_points() {
        assert_eq!(collapse_ratio(1.7, 0.4, 1.0, 0.3), 1.0);
        assert!(collapse_ratio(1.0, 1.0, -1.0, 0.5).abs() < 1e-15);
        assert!(collapse_ratio(2.0, 1.0, -1.0, 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "correlation")]
    fn collapse_ratio_rejects_bad_rho() {
        collapse_ratio(1.0, 1.0, 1.5, 0.5);
    }

    #[test]
    fn latent_scale_required_by_decode_grows_as_inverse_sigma() {
        // Pull a fixed target back through the decode affine map; the
        // gradient anchoring the latent to that pulled-back target grows as
        // 1/sigma as the decode scale collapses.
        let (b, h, c) = (1, 16, 1);
        let target: Vec<f64> = (0..h).map(|i| 1.0 + (i as f64 * 0.7).sin()).collect();
        let mut norms = Vec::new();
        let sigmas = [1e-1, 1e-2, 1e-3, 1e-4];
        for &s in &sigmas {
            let mut tape = Tape::new();
            let y0 = tape.param(&crate::DiffTensor::zeros(vec![b, h, c]));
            let y = tape.constant(vec![b, h, c], target.clone());
            let state = constant_state(&mut tape, b, c, 0.0, s);
            let zero_ay = tape.zeros(vec![b, h, c]);
            // Latent-space regression target: the inverse of
            // denorm_with_stats applied to the fixed output target.
            let centered = tape.sub(y, state.mu);
            let latent_target = tape.div(centered, state.sigma);
            let diff = tape.sub(y0, latent_target);
            let sq = tape.mul(diff, diff);
            let loss = tape.mean_all(sq);
            tape.backward(loss);
            let g: f64 = tape.grad(y0).iter().map(|v| v * v).sum::<f64>().sqrt();
            norms.push(g);
            // Sanity: the decode round trip at this sigma still holds.
            let decoded = denorm_with_stats(&mut tape, latent_target, zero_ay, state.mu, state.sigma);
            for (d, t) in tape.values(decoded).iter().zip(&target) {
                assert!((d - t).abs() < 1e-9 * (1.0 + 1.0 / s));
            }
        }
        // Log-log slope of gradient norm against sigma.
        let xs: Vec<f64> = sigmas.iter().map(|s| s.ln()).collect();
        let ys: Vec<f64> = norms.iter().map(|g| g.ln()).collect();
        let xm = xs.iter().sum::<f64>() / xs.len() as f64;
        let ym = ys.iter().sum::<f64>() / ys.len() as f64;
        let slope: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
        assert!(
            (slope + 1.0).abs() < 0.05,
            "log-log slope {slope} should be -1 +- 0.05"
        );
    }

    #[test]
    fn per_sample_lambdas_mix_per_row() {
        let mut tape = Tape::new();
        let plan = MixPlan {
            lambda: 0.5,
            per_sample: Some(vec![1.0, 0.0]),
            perm: vec![1, 0],
            enabled: true,
            statistic_aware: true,
        };
        let q = tape.constant(vec![2, 1, 1], vec![10.0, 20.0]);
        let mixed = mix_tensor(&mut tape, &plan, q);
        // Row 0 keeps itself (lambda 1); row 1 becomes its partner (lambda 0).
        assert_eq!(tape.values(mixed), &[10.0, 10.0]);
    }
}
