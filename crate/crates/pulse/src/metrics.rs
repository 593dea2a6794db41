//! Forecast-quality metrics and the history-future mismatch diagnostics.
//!
//! The mismatch triple quantifies how far a future window drifts from its
//! own history: normalized mean shift (MS), normalized standard-deviation
//! shift (SS), and the half-L1 distance between sum-normalized one-sided
//! modulus spectra (SM). When the two windows differ in length, both are
//! zero-padded at the end to the longer length so spectral bins align.

use crate::data::{SeriesDataset, Split};
use crate::error::{PulseError, Result};
use crate::numerics::dft;

const EPS: f64 = 1e-8;

/// Per-channel mean in-sample error of the seasonal naive baseline with
/// period `m`, epsilon-guarded: the MASE denominators.
pub fn seasonal_denominators(
    insample: &[f64],
    insample_len: usize,
    channels: usize,
    m: usize,
) -> Result<Vec<f64>> {
    assert_eq!(insample.len(), insample_len * channels, "insample shape mismatch");
    if insample_len <= m {
        return Err(PulseError::Data(format!(
            "MASE needs an in-sample series longer than m = {m}, got {insample_len}"
        )));
    }
    Ok((0..channels)
        .map(|c| {
            (m..insample_len)
                .map(|t| (insample[t * channels + c] - insample[(t - m) * channels + c]).abs())
                .sum::<f64>()
                / (insample_len - m) as f64
                + EPS
        })
        .collect())
}

/// Mean absolute error scaled by the in-sample error of a seasonal naive
/// baseline with period `m`: per channel, then averaged.
///
/// `pred` and `target` are (n, C) row-major; `insample` is (len, C).
pub fn mase(
    pred: &[f64],
    target: &[f64],
    n: usize,
    insample: &[f64],
    insample_len: usize,
    channels: usize,
    m: usize,
) -> Result<f64> {
    assert_eq!(pred.len(), n * channels, "prediction shape mismatch");
    assert_eq!(target.len(), n * channels, "target shape mismatch");
    let denoms = seasonal_denominators(insample, insample_len, channels, m)?;
    Ok(mase_with_denominators(pred, target, n, channels, &denoms))
}

/// MASE against precomputed per-channel denominators.
pub fn mase_with_denominators(
    pred: &[f64],
    target: &[f64],
    n: usize,
    channels: usize,
    denoms: &[f64],
) -> f64 {
    let mut total = 0.0;
    for c in 0..channels {
        let num: f64 = (0..n)
            .map(|t| (target[t * channels + c] - pred[t * channels + c]).abs())
            .sum::<f64>()
            / n as f64;
        total += num / denoms[c];
    }
    total / channels as f64
}

fn population_stats(xs: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mu = xs.clone().sum::<f64>() / n as f64;
    let var = xs.map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
    (mu, var.sqrt())
}

/// Sum-normalized one-sided modulus spectrum of a window zero-padded to
/// `padded_len`. Returns `None` for (near-)zero total spectral mass.
fn normalized_spectrum(window: &[f64], padded_len: usize) -> Option<Vec<f64>> {
    let mut padded = vec![0.0; padded_len];
    padded[..window.len()].copy_from_slice(window);
    let spec = dft::modulus_spectrum(&padded);
    let mass: f64 = spec.iter().sum();
    if mass < 1e-12 {
        return None;
    }
    Some(spec.into_iter().map(|v| v / mass).collect())
}

/// Mismatch triple for one (history, future) window pair, each row-major
/// (len, C): per-channel metrics averaged over channels.
pub fn mismatch(x: &[f64], t: usize, y: &[f64], h: usize, channels: usize) -> (f64, f64, f64) {
    assert!(t >= 2 && h >= 2, "mismatch needs windows of length >= 2");
    assert_eq!(x.len(), t * channels);
    assert_eq!(y.len(), h * channels);
    let padded_len = t.max(h);
    let (mut ms, mut ss, mut sm) = (0.0, 0.0, 0.0);
    for c in 0..channels {
        let xc: Vec<f64> = (0..t).map(|r| x[r * channels + c]).collect();
        let yc: Vec<f64> = (0..h).map(|r| y[r * channels + c]).collect();
        let (mu_x, sd_x) = population_stats(xc.iter().cloned(), t);
        let (mu_y, sd_y) = population_stats(yc.iter().cloned(), h);
        ms += (mu_y - mu_x).abs() / (mu_y.abs() + mu_x.abs() + EPS);
        ss += (sd_y - sd_x).abs() / (sd_y + sd_x + EPS);
        sm += match (normalized_spectrum(&xc, padded_len), normalized_spectrum(&yc, padded_len)) {
            (Some(a), Some(b)) => {
                0.5 * a.iter().zip(&b).map(|(u, v)| (u - v).abs()).sum::<f64>()
            }
            // Constant windows carry no spectral mass to compare.
            _ => 0.0,
        };
    }
    let cf = channels as f64;
    (ms / cf, ss / cf, sm / cf)
}

/// One diagnostics row: mismatch metrics averaged over every stride-1
/// window of a split.
#[derive(Debug, Clone, Copy)]
pub struct MismatchRow {
    pub horizon: usize,
    pub ms: f64,
    pub ss: f64,
    pub sm: f64,
    pub windows: usize,
}

/// Diagnostics table: mean mismatch per horizon over all stride-1
/// (history, future) pairs of the chosen split.
pub fn mismatch_table(
    ds: &SeriesDataset,
    split: Split,
    t: usize,
    horizons: &[usize],
) -> Result<Vec<MismatchRow>> {
    let range = ds.split_range(split);
    let c = ds.n_channels();
    let mut rows = Vec::new();
    for &h in horizons {
        if range.len() < t + h {
            return Err(PulseError::Data(format!(
                "{} split has {} rows, fewer than T+H = {}",
                split.name(),
                range.len(),
                t + h
            )));
        }
        let count = range.len() - (t + h) + 1;
        let (mut ms, mut ss, mut sm) = (0.0, 0.0, 0.0);
        for start in range.start..range.start + count {
            let mut x = Vec::with_capacity(t * c);
            for row in start..start + t {
                x.extend_from_slice(ds.row(row));
            }
            let mut y = Vec::with_capacity(h * c);
            for row in start + t..start + t + h {
                y.extend_from_slice(ds.row(row));
            }
            let (a, b, s) = mismatch(&x, t, &y, h, c);
            ms += a;
            ss += b;
            sm += s;
        }
        let n = count as f64;
        rows.push(MismatchRow { horizon: h, ms: ms / n, ss: ss / n, sm: sm / n, windows: count });
    }
    Ok(rows)
}

/// Plain elementwise MSE/MAE over two equally shaped slices.
pub fn mse_mae(pred: &[f64], target: &[f64]) -> (f64, f64) {
    assert_eq!(pred.len(), target.len());
    let n = pred.len() as f64;
    let mut sq = 0.0;
    let mut ab = 0.0;
    for (p, t) in pred.iter().zip(target) {
        let e = p - t;
        sq += e * e;
        ab += e.abs();
    }
    (sq / n, ab / n)
}
