//! Phase anchors: a learnable codebook indexed by global phase plus a
//! timestamp encoder.
//!
//! The historical anchor indexes the codebook backwards from the window's
//! ending step; the lookup variant extends the same indexing forward and is
//! the "copy history" fallback used when the phase router is disabled.
//!
//! Row orientation: windows are stored oldest-first, while the retrieval
//! index counts backwards from the window end. Window row `r` (of `T`)
//! therefore uses offset `T-1-r`. This is the likeliest off-by-one in the
//! whole pipeline, so it is pinned by enumeration tests below.

use crate::model::{xavier, TapedParams};
use crate::numerics::{DiffTensor, Rng, Tape, TensorId};

/// Learnable per-phase prototype rows, size L x C. Rows are addressed
/// modulo L only. Starts at zero so the anchor stream is silent until
/// training moves it.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub m: DiffTensor,
    pub l: usize,
}

impl Codebook {
    pub fn new(l: usize, channels: usize) -> Self {
        assert!(l >= 1, "codebook size must be >= 1");
        Codebook { m: DiffTensor::param(vec![l, channels], vec![0.0; l * channels]), l }
    }

    pub fn named_params(&self) -> Vec<(String, &DiffTensor)> {
        vec![("codebook.m".to_string(), &self.m)]
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut DiffTensor)> {
        vec![("codebook.m".to_string(), &mut self.m)]
    }
}

/// Circular retrieval index: `((t_end mod W) - h) mod L`, always in [0, L).
pub fn phase_index(t_end: usize, h: usize, w: usize, l: usize) -> usize {
    assert!(w >= 1 && l >= 1, "phase_index needs W >= 1 and L >= 1");
    let p_w = (t_end % w) as i64;
    (p_w - h as i64).rem_euclid(l as i64) as usize
}

/// Codebook rows for a batch of history windows, oldest-first: window row
/// `r` uses offset `T-1-r` from the window end.
pub fn history_indices(t_end: &[usize], t_len: usize, w: usize, l: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(t_end.len() * t_len);
    for &te in t_end {
        for r in 0..t_len {
            idx.push(phase_index(te, t_len - 1 - r, w, l));
        }
    }
    idx
}

/// Codebook rows for future steps: step `h` uses `(t_end + 1 + h) mod W`,
/// then mod L.
pub fn future_indices(t_end: &[usize], horizon: usize, w: usize, l: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(t_end.len() * horizon);
    for &te in t_end {
        for h in 0..horizon {
            idx.push(phase_index(te + 1 + h, 0, w, l));
        }
    }
    idx
}

/// Timestamp encoder: feature MLP, 1-D convolution over the time axis
/// (kernel 3, zero same-padding), and a linear adapter to channel width.
/// One shared instance encodes both history and future marks.
#[derive(Debug, Clone)]
pub struct TimeEncoder {
    pub w1: DiffTensor,
    pub b1: DiffTensor,
    pub w2: DiffTensor,
    pub b2: DiffTensor,
    pub conv_w: DiffTensor,
    pub conv_b: DiffTensor,
    pub adapter_w: DiffTensor,
    pub adapter_b: DiffTensor,
    pub d_time: usize,
}

impl TimeEncoder {
    /// Random init for the feature layers; the adapter starts at zero so
    /// the encoder contributes nothing until training moves it.
    pub fn new(mark_width: usize, d_time: usize, channels: usize, rng: &mut Rng) -> Self {
        TimeEncoder {
            w1: xavier(rng, mark_width, d_time),
            b1: DiffTensor::param(vec![1, d_time], vec![0.0; d_time]),
            w2: xavier(rng, d_time, d_time),
            b2: DiffTensor::param(vec![1, d_time], vec![0.0; d_time]),
            conv_w: xavier_conv(rng, d_time, d_time, 3),
            conv_b: DiffTensor::param(vec![d_time], vec![0.0; d_time]),
            adapter_w: DiffTensor::param(vec![d_time, channels], vec![0.0; d_time * channels]),
            adapter_b: DiffTensor::param(vec![1, channels], vec![0.0; channels]),
            d_time,
        }
    }

    /// All-zero encoder; used by reduction tests.
    pub fn zeros(mark_width: usize, d_time: usize, channels: usize) -> Self {
        TimeEncoder {
            w1: DiffTensor::param(vec![mark_width, d_time], vec![0.0; mark_width * d_time]),
            b1: DiffTensor::param(vec![1, d_time], vec![0.0; d_time]),
            w2: DiffTensor::param(vec![d_time, d_time], vec![0.0; d_time * d_time]),
            b2: DiffTensor::param(vec![1, d_time], vec![0.0; d_time]),
            conv_w: DiffTensor::param(vec![d_time, d_time, 3], vec![0.0; d_time * d_time * 3]),
            conv_b: DiffTensor::param(vec![d_time], vec![0.0; d_time]),
            adapter_w: DiffTensor::param(vec![d_time, channels], vec![0.0; d_time * channels]),
            adapter_b: DiffTensor::param(vec![1, channels], vec![0.0; channels]),
            d_time,
        }
    }

    pub fn named_params(&self) -> Vec<(String, &DiffTensor)> {
        vec![
            ("encoder.w1".to_string(), &self.w1),
            ("encoder.b1".to_string(), &self.b1),
            ("encoder.w2".to_string(), &self.w2),
            ("encoder.b2".to_string(), &self.b2),
            ("encoder.conv_w".to_string(), &self.conv_w),
            ("encoder.conv_b".to_string(), &self.conv_b),
            ("encoder.adapter_w".to_string(), &self.adapter_w),
            ("encoder.adapter_b".to_string(), &self.adapter_b),
        ]
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut DiffTensor)> {
        vec![
            ("encoder.w1".to_string(), &mut self.w1),
            ("encoder.b1".to_string(), &mut self.b1),
            ("encoder.w2".to_string(), &mut self.w2),
            ("encoder.b2".to_string(), &mut self.b2),
            ("encoder.conv_w".to_string(), &mut self.conv_w),
            ("encoder.conv_b".to_string(), &mut self.conv_b),
            ("encoder.adapter_w".to_string(), &mut self.adapter_w),
            ("encoder.adapter_b".to_string(), &mut self.adapter_b),
        ]
    }
}

fn xavier_conv(rng: &mut Rng, c_out: usize, c_in: usize, k: usize) -> DiffTensor {
    let fan = (c_in * k + c_out * k) as f64;
    let a = (6.0 / fan).sqrt();
    let values = (0..c_out * c_in * k).map(|_| (rng.next_f64() * 2.0 - 1.0) * a).collect();
    DiffTensor::param(vec![c_out, c_in, k], values)
}

/// Encode calendar marks `(B, len, F)` to channel width `(B, len, C)`.
pub fn time_encode(tape: &mut Tape, ids: &TapedParams, marks: TensorId) -> TensorId {
    let shape = tape.shape(marks).to_vec();
    assert_eq!(shape.len(), 3, "marks must be (B, len, F), got {shape:?}");
    let (b, len, f) = (shape[0], shape[1], shape[2]);
    let d_t = tape.shape(ids.id("encoder.w1"))[1];
    let c = tape.shape(ids.id("encoder.adapter_w"))[1];
    assert_eq!(
        f,
        tape.shape(ids.id("encoder.w1"))[0],
        "mark width does not match encoder input width"
    );

    let flat = tape.reshape(marks, vec![b * len, f]);
    let h1 = tape.matmul(flat, ids.id("encoder.w1"));
    let h1 = tape.add(h1, ids.id("encoder.b1"));
    let h1 = tape.gelu(h1);
    let h2 = tape.matmul(h1, ids.id("encoder.w2"));
    let h2 = tape.add(h2, ids.id("encoder.b2"));
    let seq = tape.reshape(h2, vec![b, len, d_t]);
    let conv = tape.conv1d_same(seq, ids.id("encoder.conv_w"), ids.id("encoder.conv_b"));
    let flat = tape.reshape(conv, vec![b * len, d_t]);
    let out = tape.matmul(flat, ids.id("encoder.adapter_w"));
    let out = tape.add(out, ids.id("encoder.adapter_b"));
    tape.reshape(out, vec![b, len, c])
}

/// Historical anchor `A_x (B, T, C)`: phase-indexed codebook rows plus the
/// encoded history marks. Differentiable into the codebook (scatter-add)
/// and the encoder.
pub fn build_history_anchor(
    tape: &mut Tape,
    ids: &TapedParams,
    t_end: &[usize],
    x_marks: TensorId,
    w: usize,
    l: usize,
) -> TensorId {
    let shape = tape.shape(x_marks).to_vec();
    let (b, t_len) = (shape[0], shape[1]);
    assert_eq!(b, t_end.len(), "t_end length must match the batch");
    let idx = history_indices(t_end, t_len, w, l);
    let rows = tape.gather_rows(ids.id("codebook.m"), &idx);
    let c = tape.shape(rows)[1];
    let rows = tape.reshape(rows, vec![b, t_len, c]);
    let enc = time_encode(tape, ids, x_marks);
    tape.add(rows, enc)
}

/// Future anchor by direct codebook lookup plus encoded future marks: the
/// "copy history forward" baseline that replaces the router in its
/// ablation.
pub fn build_future_anchor_lookup(
    tape: &mut Tape,
    ids: &TapedParams,
    t_end: &[usize],
    y_marks: TensorId,
    w: usize,
    l: usize,
) -> TensorId {
    let shape = tape.shape(y_marks).to_vec();
    let (b, horizon) = (shape[0], shape[1]);
    assert_eq!(b, t_end.len(), "t_end length must match the batch");
    let idx = future_indices(t_end, horizon, w, l);
    let rows = tape.gather_rows(ids.id("codebook.m"), &idx);
    let c = tape.shape(rows)[1];
    let rows = tape.reshape(rows, vec![b, horizon, c]);
    let enc = time_encode(tape, ids, y_marks);
    tape.add(rows, enc)
}
