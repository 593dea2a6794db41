//! Train on synthetic data, round-trip the checkpoint, and print one
//! forecast window against the ground truth.
//!
//! Run with `cargo run --release --example train_and_forecast`.

use pulse::data::{make_windows, synth_seasonal_hetero, MarkSpec, Split, SynthSpec};
use pulse::model::{Mode, PulseModel, TapedParams};
use pulse::sam::MixPlan;
use pulse::train::{evaluate, fit, forward_batch, load_checkpoint, save_checkpoint, TrainConfig};
use pulse::{Rng, Tape};

fn main() {
    let spec = SynthSpec {
        t_total: 3000,
        channels: 2,
        w1: 24,
        w2: 168,
        trend_slope: 0.001,
        noise_base: 0.4,
    };
    let mut rng = Rng::new(2024);
    let ds = synth_seasonal_hetero(&mut rng, &spec, (0.7, 0.1, 0.2)).unwrap();
    let marks = MarkSpec::parse("hour_of_day,day_of_week").unwrap();
    let cfg = TrainConfig {
        t: 48,
        h: 24,
        w: 24,
        l: 24,
        p: 12,
        d_router: 8,
        d_backbone: 64,
        d_time: 8,
        batch_size: 64,
        epochs: 6,
        patience: 3,
        ..TrainConfig::default()
    };

    let mut model = PulseModel::new(cfg.clone(), spec.channels, marks.width());
    let result = fit(&mut model, &ds, &marks).unwrap();
    for e in &result.history {
        println!(
            "epoch {:>2}: train loss {:.4}, val MSE {:.4}",
            e.epoch, e.train_loss, e.val_mse
        );
    }
    let (test_mse, test_mae) = evaluate(&model, &ds, Split::Test, &marks).unwrap();
    println!("test MSE {test_mse:.4} MAE {test_mae:.4} (best epoch {})", result.best_epoch);

    // Checkpoint round trip.
    let dir = std::env::temp_dir().join("pulse_example_ckpt");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.pulse");
    save_checkpoint(&model, &path).unwrap();
    let reloaded = load_checkpoint(&path).unwrap();
    let (reload_mse, _) = evaluate(&reloaded, &ds, Split::Test, &marks).unwrap();
    println!("checkpoint round trip: test MSE {reload_mse:.6} (drift {:+.1e})", reload_mse - test_mse);

    // One forecast window.
    let batch = make_windows(&ds, Split::Test, cfg.t, cfg.h, &marks, 1, None)
        .unwrap()
        .next()
        .unwrap();
    let mut tape = Tape::new();
    let ids = TapedParams::register_frozen(&mut tape, &reloaded.named_params());
    let mut eval_rng = Rng::new(0);
    let out = forward_batch(
        &mut tape,
        &reloaded,
        &ids,
        &batch,
        &MixPlan::disabled(1),
        Mode::Eval,
        &mut eval_rng,
    );
    println!("\nfirst test window (channel 0): step, prediction, truth, future anchor");
    let pred = tape.values(out.y_hat);
    let truth = tape.values(out.y_target);
    let anchor = tape.values(out.a_y);
    for step in 0..cfg.h {
        let i = step * spec.channels;
        println!("{step:>4} {:>8.3} {:>8.3} {:>8.3}", pred[i], truth[i], anchor[i]);
    }
}
