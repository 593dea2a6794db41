//! ACF-based global period detection: the fundamental beats its
//! harmonics, and aperiodic noise falls back to the argmax with a warning.
//!
//! Run with `cargo run --release --example period_detection`.

use pulse::data::{detect_period_acf, train_acf, PeriodDetection, SeriesDataset, Timestamp};
use pulse::Rng;

fn hourly(n: usize) -> Vec<Timestamp> {
    let epoch = Timestamp { year: 2016, month: 1, day: 1, hour: 0, minute: 0 };
    (0..n).map(|t| epoch.plus_hours(t as i64)).collect()
}

fn dataset(name: &str, values: Vec<f64>) -> SeriesDataset {
    let n = values.len();
    SeriesDataset::from_raw(name, vec!["x".into()], values, hourly(n), (1.0, 0.0, 0.0)).unwrap()
}

fn main() {
    let tau = 2.0 * std::f64::consts::PI;

    let daily = dataset(
        "daily",
        (0..2000).map(|t| (tau * t as f64 / 24.0).sin()).collect(),
    );
    let (w, how) = detect_period_acf(&daily, 400).unwrap();
    println!("pure daily cycle: W = {w} ({how:?})");

    let layered = dataset(
        "daily+weekly",
        (0..4000)
            .map(|t| (tau * t as f64 / 24.0).sin() + 0.3 * (tau * t as f64 / 168.0).sin())
            .collect(),
    );
    let (w, how) = detect_period_acf(&layered, 400).unwrap();
    println!("daily plus weekly harmonic: W = {w} ({how:?}) — smallest qualifying peak wins");

    let mut rng = Rng::new(7);
    let noise = dataset("noise", (0..2000).map(|_| rng.gauss()).collect());
    let (w, how) = detect_period_acf(&noise, 400).unwrap();
    println!("white noise: W = {w} ({how:?})");
    assert_eq!(how, PeriodDetection::FallbackArgmax);

    // Show the shape of the averaged ACF near the detected peak.
    let acf = train_acf(&layered, 30).unwrap();
    println!("\naveraged ACF of the layered series, lags 20..=28:");
    for (lag, value) in acf.iter().enumerate().take(29).skip(20) {
        let bar = "#".repeat((value.max(0.0) * 40.0) as usize);
        println!("  lag {lag:>2}: {value:+.3} {bar}");
    }
}
