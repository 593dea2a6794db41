//! What the anchor stream learns: after a short training run on a clean
//! seasonal series, the codebook rows trace the seasonal shape and the
//! lookup fallback extends it forward periodically.
//!
//! Run with `cargo run --release --example phase_anchors`.

use pulse::anchor::{build_future_anchor_lookup, phase_index};
use pulse::data::{synth_seasonal_hetero, MarkSpec, SynthSpec};
use pulse::model::{PulseModel, TapedParams};
use pulse::train::{fit, TrainConfig};
use pulse::{Rng, Tape};

fn main() {
    let spec = SynthSpec {
        t_total: 2400,
        channels: 1,
        w1: 24,
        w2: 96,
        trend_slope: 0.0,
        noise_base: 0.2,
    };
    let mut rng = Rng::new(2024);
    let ds = synth_seasonal_hetero(&mut rng, &spec, (0.7, 0.1, 0.2)).unwrap();
    let marks = MarkSpec::parse("hour_of_day").unwrap();
    let cfg = TrainConfig {
        t: 48,
        h: 24,
        w: 24,
        l: 24,
        p: 12,
        d_router: 8,
        d_backbone: 32,
        d_time: 8,
        batch_size: 64,
        epochs: 5,
        patience: 5,
        ..TrainConfig::default()
    };
    let mut model = PulseModel::new(cfg.clone(), 1, 1);
    fit(&mut model, &ds, &marks).unwrap();

    println!("learned codebook rows (L = 24, one channel) vs the seasonal target shape:");
    let m = model.codebook.m.values();
    for (i, v) in m.iter().enumerate() {
        let bar_len = ((v + 1.5) * 20.0).clamp(0.0, 60.0) as usize;
        println!("  phase {i:>2}: {v:+.3} {}", "#".repeat(bar_len));
    }

    // Retrieval indexing: row h of a window counts back from the window
    // end; the future lookup continues forward and repeats every L steps.
    let t_end = 1000;
    println!("\ncircular retrieval for a window ending at t = {t_end} (W = L = 24):");
    let history: Vec<usize> = (0..6).map(|r| phase_index(t_end, 5 - r, 24, 24)).collect();
    println!("  last 6 history rows -> codebook rows {history:?}");

    let mut tape = Tape::new();
    let ids = TapedParams::register_frozen(&mut tape, &model.named_params());
    let y_marks = tape.constant(vec![1, cfg.h, 1], vec![0.0; cfg.h]);
    let a_y = build_future_anchor_lookup(&mut tape, &ids, &[t_end], y_marks, cfg.w, cfg.l);
    let one_period = &tape.values(a_y)[..cfg.w.min(cfg.h)];
    println!("  lookup anchor for the next {} steps (zero marks):", one_period.len());
    for (h, v) in one_period.iter().enumerate() {
        println!("    step {h:>2}: {v:+.3}");
    }
}
