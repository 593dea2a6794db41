//! Frequency-domain loss, Adam, the training loop, and checkpoints.
//!
//! Training is single-threaded end to end so floating-point accumulation
//! order is fixed; two runs from the same seed produce bitwise-identical
//! parameter trajectories and history files. Randomness is split into
//! independent streams derived from the seed (parameter init, shuffling,
//! mixup, dropout) so toggling one ablation flag does not shift the draws
//! consumed by the others.

use crate::anchor;
use crate::data::{make_windows, MarkSpec, SeriesDataset, Split, WindowBatch};
use crate::error::{PulseError, Result};
use crate::model::{BackboneKind, Mode, PulseModel, TapedParams};
use crate::norm::{self, NormState};
use crate::numerics::{Rng, Tape, TensorId};
use crate::sam::{self, MixPlan};
use std::io::{Read, Write};
use std::path::Path;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Ablation switches. Disabling the anchor zeroes both anchors and the
/// future-mark encoding; disabling the router falls back to the codebook
/// lookup; disabling SAM skips mixing entirely; disabling statistic
/// awareness keeps waveform mixing but re-measures the decode statistics
/// from the mixed waveform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flags {
    pub use_anchor: bool,
    pub use_router: bool,
    pub use_sam: bool,
    pub statistic_aware: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Flags { use_anchor: true, use_router: true, use_sam: true, statistic_aware: true }
    }
}

/// Everything that shapes a model and its training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub dropout: f64,
    pub seed: u64,
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub l: usize,
    pub p: usize,
    pub d_router: usize,
    pub d_backbone: usize,
    pub d_time: usize,
    pub backbone: BackboneKind,
    pub flags: Flags,
    pub swap_stage1: bool,
    pub per_sample_lambda: bool,
    /// Global-norm gradient clip; 0 disables (the default everywhere).
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.005,
            epochs: 30,
            patience: 5,
            batch_size: 256,
            alpha: 0.15,
            dropout: 0.1,
            seed: 2024,
            t: 96,
            h: 96,
            w: 24,
            l: 24,
            p: 24,
            d_router: 16,
            d_backbone: 512,
            d_time: 16,
            backbone: BackboneKind::Mlp,
            flags: Flags::default(),
            swap_stage1: false,
            per_sample_lambda: false,
            clip_norm: 0.0,
        }
    }
}

impl TrainConfig {
    /// The small configuration exercised by the end-to-end gradient checks.
    pub fn tiny_for_tests() -> Self {
        TrainConfig {
            batch_size: 2,
            epochs: 2,
            patience: 1,
            t: 24,
            h: 12,
            w: 24,
            l: 24,
            p: 6,
            d_router: 4,
            d_backbone: 16,
            d_time: 4,
            ..TrainConfig::default()
        }
    }

    /// Canonical key/value form; the order is fixed and floats round-trip
    /// exactly, so this serialization is byte-stable.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| kv.push((k.to_string(), v));
        push("model.t", self.t.to_string());
        push("model.h", self.h.to_string());
        push("model.w", self.w.to_string());
        push("model.l", self.l.to_string());
        push("model.p", self.p.to_string());
        push("model.d_router", self.d_router.to_string());
        push("model.d_backbone", self.d_backbone.to_string());
        push("model.d_time", self.d_time.to_string());
        push("model.backbone", self.backbone.name().to_string());
        push("model.swap_stage1", self.swap_stage1.to_string());
        push("train.lr", format!("{:?}", self.lr));
        push("train.epochs", self.epochs.to_string());
        push("train.patience", self.patience.to_string());
        push("train.batch_size", self.batch_size.to_string());
        push("train.alpha", format!("{:?}", self.alpha));
        push("train.dropout", format!("{:?}", self.dropout));
        push("train.seed", self.seed.to_string());
        push("train.per_sample_lambda", self.per_sample_lambda.to_string());
        push("train.clip_norm", format!("{:?}", self.clip_norm));
        push("flags.use_anchor", self.flags.use_anchor.to_string());
        push("flags.use_router", self.flags.use_router.to_string());
        push("flags.use_sam", self.flags.use_sam.to_string());
        push("flags.statistic_aware", self.flags.statistic_aware.to_string());
        kv
    }

    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| PulseError::Config(format!("invalid {what} value {value:?}"));
        match key {
            "model.t" => self.t = value.parse().map_err(|_| bad(key))?,
            "model.h" => self.h = value.parse().map_err(|_| bad(key))?,
            "model.w" => self.w = value.parse().map_err(|_| bad(key))?,
            "model.l" => self.l = value.parse().map_err(|_| bad(key))?,
            "model.p" => self.p = value.parse().map_err(|_| bad(key))?,
            "model.d_router" => self.d_router = value.parse().map_err(|_| bad(key))?,
            "model.d_backbone" => self.d_backbone = value.parse().map_err(|_| bad(key))?,
            "model.d_time" => self.d_time = value.parse().map_err(|_| bad(key))?,
            "model.backbone" => self.backbone = BackboneKind::parse(value)?,
            "model.swap_stage1" => self.swap_stage1 = parse_bool(key, value)?,
            "train.lr" => self.lr = value.parse().map_err(|_| bad(key))?,
            "train.epochs" => self.epochs = value.parse().map_err(|_| bad(key))?,
            "train.patience" => self.patience = value.parse().map_err(|_| bad(key))?,
            "train.batch_size" => self.batch_size = value.parse().map_err(|_| bad(key))?,
            "train.alpha" => self.alpha = value.parse().map_err(|_| bad(key))?,
            "train.dropout" => self.dropout = value.parse().map_err(|_| bad(key))?,
            "train.seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            "train.per_sample_lambda" => self.per_sample_lambda = parse_bool(key, value)?,
            "train.clip_norm" => self.clip_norm = value.parse().map_err(|_| bad(key))?,
            "flags.use_anchor" => self.flags.use_anchor = parse_bool(key, value)?,
            "flags.use_router" => self.flags.use_router = parse_bool(key, value)?,
            "flags.use_sam" => self.flags.use_sam = parse_bool(key, value)?,
            "flags.statistic_aware" => self.flags.statistic_aware = parse_bool(key, value)?,
            other => {
                return Err(PulseError::Config(format!("unknown configuration key {other:?}")))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("model.t", self.t),
            ("model.h", self.h),
            ("model.w", self.w),
            ("model.l", self.l),
            ("model.p", self.p),
            ("model.d_router", self.d_router),
            ("model.d_backbone", self.d_backbone),
            ("model.d_time", self.d_time),
            ("train.epochs", self.epochs),
            ("train.batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(PulseError::Config(format!("{name} must be positive")));
            }
        }
        if self.lr <= 0.0 || self.alpha <= 0.0 {
            return Err(PulseError::Config("train.lr and train.alpha must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(PulseError::Config("train.dropout must lie in [0, 1)".into()));
        }
        if self.clip_norm < 0.0 {
            return Err(PulseError::Config("train.clip_norm must be nonnegative".into()));
        }
        Ok(())
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(PulseError::Config(format!("{key} expects true or false, got {value:?}"))),
    }
}

/// Derived deterministic streams so ablation flags do not shift each
/// other's draws.
pub fn derived_rng(seed: u64, stream: u64) -> Rng {
    Rng::new(seed.wrapping_add(stream.wrapping_mul(0x9E3779B97F4A7C15)))
}

pub const STREAM_SHUFFLE: u64 = 1;
pub const STREAM_SAM: u64 = 2;
pub const STREAM_DROPOUT: u64 = 3;

// ── Loss ─────────────────────────────────────────────────────────────

/// Frequency-domain MAE: DFT along the horizon axis per (sample, channel),
/// then the mean complex modulus of the spectral difference over every
/// (sample, channel, bin). The transforms are linear, so the difference is
/// transformed once.
pub fn freq_mae(tape: &mut Tape, pred: TensorId, target: TensorId) -> TensorId {
    assert_eq!(tape.shape(pred), tape.shape(target), "loss operands differ in shape");
    let diff = tape.sub(pred, target);
    let by_channel = tape.swap_last2(diff); // (B, C, H)
    let (re, im) = tape.rdft(by_channel, 2);
    let modulus = tape.complex_modulus(re, im);
    tape.mean_all(modulus)
}

// ── Adam ─────────────────────────────────────────────────────────────

/// First/second-moment buffers aligned with the model's parameter order.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &PulseModel) -> Self {
        let sizes: Vec<usize> = model.named_params().iter().map(|(_, t)| t.numel()).collect();
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. `grads` must be aligned with
/// `named_params` order.
pub fn adam_step(model: &mut PulseModel, grads: &[Vec<f64>], state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
    for (pi, (_, tensor)) in model.named_params_mut().into_iter().enumerate() {
        let g = &grads[pi];
        assert_eq!(g.len(), tensor.numel(), "gradient/parameter shape mismatch");
        let m = &mut state.m[pi];
        let v = &mut state.v[pi];
        let values = tensor.values_mut();
        for i in 0..g.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            values[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

// ── Forward pipeline ─────────────────────────────────────────────────

/// Tape handles produced by one forward pass.
pub struct ForwardOutput {
    pub y_hat: TensorId,
    /// Mixed target (equals the raw target outside SAM).
    pub y_target: TensorId,
    pub a_x: TensorId,
    pub a_y: TensorId,
    pub x_tilde: TensorId,
    pub state: NormState,
    /// Decode statistics actually used (interpolated or re-measured).
    pub decode_mu: TensorId,
    pub decode_sigma: TensorId,
}

/// Run the full dual-stream pipeline for one batch on an existing tape.
/// Flag algebra: without the anchor, `A_x`, `A_y`, and the future-mark
/// encoding are all exactly zero; without the router, the future anchor
/// comes from the codebook lookup; a disabled plan passes tensors through
/// untouched.
pub fn forward_batch(
    tape: &mut Tape,
    model: &PulseModel,
    ids: &TapedParams,
    batch: &WindowBatch,
    plan: &MixPlan,
    mode: Mode,
    dropout_rng: &mut Rng,
) -> ForwardOutput {
    let cfg = &model.cfg;
    let (b, t, h, c, f) =
        (batch.batch, batch.t_len, batch.horizon, batch.channels, batch.mark_width);
    let x = tape.constant(vec![b, t, c], batch.x.clone());
    let y = tape.constant(vec![b, h, c], batch.y.clone());
    let x_marks = tape.constant(vec![b, t, f], batch.x_marks.clone());
    let y_marks = tape.constant(vec![b, h, f], batch.y_marks.clone());

    let a_x = if cfg.flags.use_anchor {
        anchor::build_history_anchor(tape, ids, &batch.t_end, x_marks, cfg.w, cfg.l)
    } else {
        tape.zeros(vec![b, t, c])
    };
    let (x_tilde, state) = norm::disentangle_normalize(tape, x, a_x);
    let enc_y = if cfg.flags.use_anchor {
        anchor::time_encode(tape, ids, y_marks)
    } else {
        tape.zeros(vec![b, h, c])
    };

    let mixed = sam::mix_batch(tape, plan, x_tilde, a_x, enc_y, &state, y);

    let y0 = model.backbone.forward(tape, ids, mixed.x_tilde, mode, dropout_rng);

    let a_y = if !cfg.flags.use_anchor {
        tape.zeros(vec![b, h, c])
    } else if cfg.flags.use_router {
        crate::model::route(tape, ids, &model.router, mixed.a_x, y0, mixed.enc_y, cfg.swap_stage1)
    } else {
        let lookup =
            anchor::build_future_anchor_lookup(tape, ids, &batch.t_end, y_marks, cfg.w, cfg.l);
        sam::mix_tensor(tape, plan, lookup)
    };

    let (decode_mu, decode_sigma) = if plan.enabled && !plan.statistic_aware {
        sam::naive_mix_stats(tape, mixed.x_tilde, mixed.a_x)
    } else {
        (mixed.mu, mixed.sigma)
    };
    let y_hat = norm::denorm_with_stats(tape, y0, a_y, decode_mu, decode_sigma);

    ForwardOutput {
        y_hat,
        y_target: mixed.y,
        a_x,
        a_y,
        x_tilde,
        state,
        decode_mu,
        decode_sigma,
    }
}

// ── Epochs ───────────────────────────────────────────────────────────

/// One pass over the train split. Returns the sample-weighted mean batch
/// loss. A non-finite loss aborts with the batch index, the mixing
/// coefficient, and the smallest decode scale.
pub fn train_epoch(
    model: &mut PulseModel,
    ds: &SeriesDataset,
    marks: &MarkSpec,
    adam: &mut AdamState,
    shuffle_rng: &mut Rng,
    sam_rng: &mut Rng,
    dropout_rng: &mut Rng,
) -> Result<f64> {
    let cfg = model.cfg.clone();
    let batches = make_windows(
        ds,
        Split::Train,
        cfg.t,
        cfg.h,
        marks,
        cfg.batch_size,
        Some(shuffle_rng),
    )?;
    let mut loss_sum = 0.0;
    let mut samples = 0usize;
    for (bi, batch) in batches.enumerate() {
        let mut tape = Tape::new();
        let ids = TapedParams::register(&mut tape, &model.named_params());
        let plan = sam::make_plan(
            sam_rng,
            batch.batch,
            cfg.alpha,
            cfg.flags.use_sam,
            cfg.flags.statistic_aware,
            cfg.per_sample_lambda,
        );
        let out = forward_batch(
            &mut tape,
            model,
            &ids,
            &batch,
            &plan,
            Mode::Train { dropout: cfg.dropout },
            dropout_rng,
        );
        let loss = freq_mae(&mut tape, out.y_hat, out.y_target);
        let loss_value = tape.values(loss)[0];
        if !loss_value.is_finite() {
            let sigma_min = tape
                .values(out.decode_sigma)
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            return Err(PulseError::Train(format!(
                "non-finite loss at batch {bi}: lambda={}, sigma_mix_min={sigma_min:e}",
                plan.lambda
            )));
        }
        tape.backward(loss);
        let mut grads: Vec<Vec<f64>> =
            ids.pairs().iter().map(|(_, id)| tape.grad(*id).to_vec()).collect();
        if cfg.clip_norm > 0.0 {
            clip_global_norm(&mut grads, cfg.clip_norm);
        }
        adam_step(model, &grads, adam, cfg.lr);
        loss_sum += loss_value * batch.batch as f64;
        samples += batch.batch;
    }
    Ok(loss_sum / samples as f64)
}

fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) {
    let total: f64 = grads.iter().flat_map(|g| g.iter()).map(|v| v * v).sum();
    let norm = total.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
}

/// Compensated (Kahan) accumulator: evaluation sums are then insensitive
/// to reduction order at the 1e-12 level.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// MSE and MAE on z-scored data over one split, in ascending window order,
/// with dropout and mixing off and the captured-statistic decode path.
pub fn evaluate(
    model: &PulseModel,
    ds: &SeriesDataset,
    split: Split,
    marks: &MarkSpec,
) -> Result<(f64, f64)> {
    let cfg = &model.cfg;
    let batches = make_windows(ds, split, cfg.t, cfg.h, marks, cfg.batch_size, None)?;
    let mut sq = Kahan::default();
    let mut abs = Kahan::default();
    let mut count = 0usize;
    let mut rng = Rng::new(0); // eval consumes no randomness
    for batch in batches {
        let mut tape = Tape::new();
        let ids = TapedParams::register_frozen(&mut tape, &model.named_params());
        let plan = MixPlan::disabled(batch.batch);
        let out = forward_batch(&mut tape, model, &ids, &batch, &plan, Mode::Eval, &mut rng);
        let pred = tape.values(out.y_hat);
        let truth = tape.values(out.y_target);
        for (p, t) in pred.iter().zip(truth) {
            let e = p - t;
            sq.add(e * e);
            abs.add(e.abs());
        }
        count += pred.len();
    }
    if count == 0 {
        return Err(PulseError::Data("evaluation split yielded no windows".into()));
    }
    Ok((sq.sum / count as f64, abs.sum / count as f64))
}

/// Per-epoch record emitted into the training history CSV.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
    pub val_mae: f64,
}

#[derive(Debug)]
pub struct FitResult {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

/// Consecutive epochs since the running best at the end of `vals`.
fn epochs_since_improvement(vals: &[f64]) -> usize {
    let mut best = f64::INFINITY;
    let mut since = 0;
    for &v in vals {
        if v < best {
            best = v;
            since = 0;
        } else {
            since += 1;
        }
    }
    since
}

/// Train with early stopping on validation MSE; the returned model holds
/// the best-epoch parameters. Training stops once the count of epochs
/// without improvement exceeds the patience.
pub fn fit(model: &mut PulseModel, ds: &SeriesDataset, marks: &MarkSpec) -> Result<FitResult> {
    let cfg = model.cfg.clone();
    cfg.validate()?;
    let mut adam = AdamState::new(model);
    let mut shuffle_rng = derived_rng(cfg.seed, STREAM_SHUFFLE);
    let mut sam_rng = derived_rng(cfg.seed, STREAM_SAM);
    let mut dropout_rng = derived_rng(cfg.seed, STREAM_DROPOUT);

    let mut history = Vec::new();
    let mut val_curve = Vec::new();
    let mut best_snapshot = model.snapshot();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    for epoch in 0..cfg.epochs {
        let train_loss = train_epoch(
            model,
            ds,
            marks,
            &mut adam,
            &mut shuffle_rng,
            &mut sam_rng,
            &mut dropout_rng,
        )?;
        let (val_mse, val_mae) = evaluate(model, ds, Split::Val, marks)?;
        history.push(EpochStats { epoch, train_loss, val_mse, val_mae });
        val_curve.push(val_mse);
        if val_mse < best_val {
            best_val = val_mse;
            best_epoch = epoch;
            best_snapshot = model.snapshot();
        }
        if epochs_since_improvement(&val_curve) > cfg.patience {
            break;
        }
    }
    model.restore(&best_snapshot);
    Ok(FitResult { history, best_epoch, best_val_mse: best_val })
}

// ── Checkpoints ──────────────────────────────────────────────────────

const CHECKPOINT_MAGIC: &[u8; 6] = b"PULSE1";

/// Stored parameter precision. 64-bit is the default and reproduces the
/// in-memory model bitwise; 32-bit halves the file for export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FloatWidth {
    F64,
    F32,
}

impl FloatWidth {
    fn bytes(&self) -> usize {
        match self {
            FloatWidth::F64 => 8,
            FloatWidth::F32 => 4,
        }
    }
}

pub fn save_checkpoint(model: &PulseModel, path: &Path) -> Result<()> {
    save_checkpoint_full(model, path, FloatWidth::F64, &[])
}

pub fn save_checkpoint_with_width(model: &PulseModel, path: &Path, width: FloatWidth) -> Result<()> {
    save_checkpoint_full(model, path, width, &[])
}

pub fn load_checkpoint(path: &Path) -> Result<PulseModel> {
    Ok(load_checkpoint_full(path)?.0)
}

/// Layout: magic, u32-LE header byte length, UTF-8 header (config lines,
/// free-form extra lines, one manifest line per parameter, float width),
/// then the raw little-endian payload in manifest order. `extras` lets the
/// caller persist settings outside the model proper (mark spec, split
/// ratios); they round-trip untouched.
pub fn save_checkpoint_full(
    model: &PulseModel,
    path: &Path,
    width: FloatWidth,
    extras: &[(String, String)],
) -> Result<()> {
    let mut header = String::new();
    for (k, v) in model.cfg.to_kv() {
        header.push_str(&format!("config {k}={v}\n"));
    }
    header.push_str(&format!("config data.channels={}\n", model.channels));
    header.push_str(&format!("config data.mark_width={}\n", model.mark_width));
    for (k, v) in extras {
        header.push_str(&format!("extra {k}={v}\n"));
    }
    header.push_str(&format!(
        "float_width={}\n",
        match width {
            FloatWidth::F64 => 64,
            FloatWidth::F32 => 32,
        }
    ));
    let mut offset = 0usize;
    for (name, tensor) in model.named_params() {
        let dims: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
        header.push_str(&format!(
            "param {name} {} {offset} {}\n",
            dims.join("x"),
            tensor.numel()
        ));
        offset += tensor.numel() * width.bytes();
    }

    let mut file = std::fs::File::create(path)?;
    file.write_all(CHECKPOINT_MAGIC)?;
    file.write_all(&(header.len() as u32).to_le_bytes())?;
    file.write_all(header.as_bytes())?;
    for (_, tensor) in model.named_params() {
        for v in tensor.values() {
            match width {
                FloatWidth::F64 => file.write_all(&v.to_le_bytes())?,
                FloatWidth::F32 => file.write_all(&(*v as f32).to_le_bytes())?,
            }
        }
    }
    Ok(())
}

pub fn load_checkpoint_full(path: &Path) -> Result<(PulseModel, Vec<(String, String)>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 10 || &bytes[..6] != CHECKPOINT_MAGIC {
        return Err(PulseError::Checkpoint("bad magic: not a PULSE1 checkpoint".into()));
    }
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    if bytes.len() < 10 + header_len {
        return Err(PulseError::Checkpoint("truncated header".into()));
    }
    let header = std::str::from_utf8(&bytes[10..10 + header_len])
        .map_err(|_| PulseError::Checkpoint("header is not UTF-8".into()))?;
    let payload = &bytes[10 + header_len..];

    let mut cfg = TrainConfig::default();
    let mut channels = 0usize;
    let mut mark_width = usize::MAX;
    let mut width = FloatWidth::F64;
    let mut extras: Vec<(String, String)> = Vec::new();
    let mut manifest: Vec<(String, Vec<usize>, usize, usize)> = Vec::new();
    for line in header.lines() {
        if let Some(rest) = line.strip_prefix("extra ") {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| PulseError::Checkpoint(format!("malformed extra line {line:?}")))?;
            extras.push((k.to_string(), v.to_string()));
        } else if let Some(rest) = line.strip_prefix("config ") {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| PulseError::Checkpoint(format!("malformed config line {line:?}")))?;
            match k {
                "data.channels" => {
                    channels = v
                        .parse()
                        .map_err(|_| PulseError::Checkpoint("bad channel count".into()))?
                }
                "data.mark_width" => {
                    mark_width = v
                        .parse()
                        .map_err(|_| PulseError::Checkpoint("bad mark width".into()))?
                }
                _ => cfg
                    .apply_kv(k, v)
                    .map_err(|e| PulseError::Checkpoint(format!("config in header: {e}")))?,
            }
        } else if let Some(rest) = line.strip_prefix("param ") {
            let parts: Vec<&str> = rest.split(' ').collect();
            if parts.len() != 4 {
                return Err(PulseError::Checkpoint(format!("malformed manifest line {line:?}")));
            }
            let shape: Vec<usize> = parts[1]
                .split('x')
                .map(|d| d.parse().map_err(|_| PulseError::Checkpoint("bad shape".into())))
                .collect::<Result<_>>()?;
            let offset: usize =
                parts[2].parse().map_err(|_| PulseError::Checkpoint("bad offset".into()))?;
            let count: usize =
                parts[3].parse().map_err(|_| PulseError::Checkpoint("bad count".into()))?;
            manifest.push((parts[0].to_string(), shape, offset, count));
        } else if let Some(rest) = line.strip_prefix("float_width=") {
            width = match rest {
                "64" => FloatWidth::F64,
                "32" => FloatWidth::F32,
                other => {
                    return Err(PulseError::Checkpoint(format!("unsupported float width {other}")))
                }
            };
        } else if !line.trim().is_empty() {
            return Err(PulseError::Checkpoint(format!("unrecognized header line {line:?}")));
        }
    }
    if channels == 0 || mark_width == usize::MAX {
        return Err(PulseError::Checkpoint("header lacks channel/mark metadata".into()));
    }

    let expected_bytes: usize = manifest.iter().map(|(_, _, _, n)| n * width.bytes()).sum();
    if payload.len() != expected_bytes {
        return Err(PulseError::Checkpoint(format!(
            "manifest/payload length mismatch: payload {} bytes, manifest {} bytes",
            payload.len(),
            expected_bytes
        )));
    }
    for (name, _, offset, count) in &manifest {
        if offset + count * width.bytes() > payload.len() {
            return Err(PulseError::Checkpoint(format!(
                "parameter {name:?} extends past the payload"
            )));
        }
    }

    let mut model = PulseModel::new(cfg, channels, mark_width);
    for (name, shape, offset, count) in &manifest {
        let mut found = false;
        for (have, tensor) in model.named_params_mut() {
            if have == *name {
                if tensor.shape() != &shape[..] || tensor.numel() != *count {
                    return Err(PulseError::Checkpoint(format!(
                        "parameter {name:?} shape mismatch: file {shape:?}, model {:?}",
                        tensor.shape()
                    )));
                }
                let values = tensor.values_mut();
                for i in 0..*count {
                    let at = offset + i * width.bytes();
                    values[i] = match width {
                        FloatWidth::F64 => {
                            f64::from_le_bytes(payload[at..at + 8].try_into().unwrap())
                        }
                        FloatWidth::F32 => {
                            f32::from_le_bytes(payload[at..at + 4].try_into().unwrap()) as f64
                        }
                    };
                }
                found = true;
                break;
            }
        }
        if !found {
            return Err(PulseError::Checkpoint(format!("unknown parameter name {name:?}")));
        }
    }
    Ok((model, extras))
}
