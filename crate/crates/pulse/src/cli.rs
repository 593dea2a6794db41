//! The `pulse` batch command surface.
//!
//! Every command is a pure function of its inputs and the seed: outputs
//! are CSV files whose first line echoes the effective configuration and
//! its hash, with no timestamps, so reruns are byte-identical. Exit codes:
//! 0 success, 1 verification or training failure, 2 usage/config error,
//! 3 data or checkpoint error. `PULSE_SEED` overrides the configured seed
//! everywhere.

use crate::data::{
    detect_period_acf, load_csv, make_windows, synth_raw, write_series_csv, MarkSpec,
    PeriodDetection, SeriesDataset, Split, SynthSpec,
};
use crate::error::{PulseError, Result};
use crate::metrics::{mase_with_denominators, mismatch_table, seasonal_denominators};
use crate::model::{Mode, PulseModel, TapedParams};
use crate::numerics::{Rng, Tape};
use crate::sam::MixPlan;
use crate::train::{
    evaluate, fit, forward_batch, load_checkpoint_full, save_checkpoint_full, FloatWidth, Flags,
    TrainConfig,
};
use clap::{Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

// ── Configuration file ───────────────────────────────────────────────

/// Parsed configuration file: flat `key = value` pairs under the
/// `[data]`, `[model]`, `[train]`, and `[flags]` sections. Unknown keys
/// are rejected; every key has a default (see `TrainConfig::default` and
/// the data defaults below).
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub train: TrainConfig,
    pub data_path: Option<PathBuf>,
    pub marks: MarkSpec,
    pub split: (f64, f64, f64),
    pub timestamp_column: String,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            train: TrainConfig::default(),
            data_path: None,
            marks: MarkSpec::parse("hour_of_day").unwrap(),
            split: (0.7, 0.1, 0.2),
            timestamp_column: "date".to_string(),
        }
    }
}

pub fn parse_ratios(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(PulseError::Config(format!("split expects three ratios, got {s:?}")));
    }
    let mut vals = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        vals[i] = p
            .parse()
            .map_err(|_| PulseError::Config(format!("unparseable split ratio {p:?}")))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

impl CliConfig {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PulseError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = CliConfig::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !["data", "model", "train", "flags"].contains(&section.as_str()) {
                    return Err(PulseError::Config(format!(
                        "line {}: unknown section [{section}]",
                        i + 1
                    )));
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PulseError::Config(format!("line {}: expected key = value, got {line:?}", i + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match (section.as_str(), key) {
                ("data", "path") => cfg.data_path = Some(PathBuf::from(value)),
                ("data", "marks") => cfg.marks = MarkSpec::parse(value)?,
                ("data", "split") => cfg.split = parse_ratios(value)?,
                ("data", "timestamp_column") => cfg.timestamp_column = value.to_string(),
                ("data", other) => {
                    return Err(PulseError::Config(format!(
                        "line {}: unknown key data.{other}",
                        i + 1
                    )))
                }
                ("", _) => {
                    return Err(PulseError::Config(format!(
                        "line {}: key outside any section",
                        i + 1
                    )))
                }
                (sec, k) => cfg.train.apply_kv(&format!("{sec}.{k}"), value)?,
            }
        }
        Ok(cfg)
    }

    /// Effective settings in canonical order: hashed and echoed into
    /// every output artifact.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv = self.train.to_kv();
        kv.push((
            "data.path".into(),
            self.data_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "-".into()),
        ));
        kv.push(("data.marks".into(), self.marks.to_string_spec()));
        kv.push((
            "data.split".into(),
            format!("{:?},{:?},{:?}", self.split.0, self.split.1, self.split.2),
        ));
        kv.push(("data.timestamp_column".into(), self.timestamp_column.clone()));
        kv
    }
}

/// FNV-1a over the canonical configuration text.
pub fn config_hash(kv: &[(String, String)]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for (k, v) in kv {
        for b in k.bytes().chain(*b"=").chain(v.bytes()).chain(*b"\n") {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    hash
}

/// The one-line `#` header embedding the effective configuration.
pub fn artifact_header(kv: &[(String, String)]) -> String {
    let mut line = format!("# pulse config_hash={:016x}", config_hash(kv));
    for (k, v) in kv {
        let _ = write!(line, " {k}={v}");
    }
    line
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var("PULSE_SEED") {
        Ok(s) => s
            .parse()
            .map(Some)
            .map_err(|_| PulseError::Config(format!("PULSE_SEED is not an integer: {s:?}"))),
        Err(_) => Ok(None),
    }
}

fn parse_split_name(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(PulseError::Config(format!("unknown split {other:?}"))),
    }
}

/// Resolve `model.w = 0` (and `model.l = 0`) through ACF period detection
/// on the train split.
fn resolve_period(cfg: &mut TrainConfig, ds: &SeriesDataset) -> Result<()> {
    if cfg.w == 0 {
        let train_len = ds.split_range(Split::Train).len();
        let max_lag = 336.min(train_len.saturating_sub(1) / 2);
        if max_lag < 2 {
            return Err(PulseError::Data("train split too short for period detection".into()));
        }
        let (w, how) = detect_period_acf(ds, max_lag)?;
        if how == PeriodDetection::FallbackArgmax {
            eprintln!("warning: no qualifying ACF peak; using global argmax W = {w}");
        }
        eprintln!("period detection: W = {w}");
        cfg.w = w;
    }
    if cfg.l == 0 {
        cfg.l = cfg.w;
    }
    Ok(())
}

fn data_extras(cli: &CliConfig) -> Vec<(String, String)> {
    vec![
        ("data.marks".into(), cli.marks.to_string_spec()),
        (
            "data.split".into(),
            format!("{:?},{:?},{:?}", cli.split.0, cli.split.1, cli.split.2),
        ),
        ("data.timestamp_column".into(), cli.timestamp_column.clone()),
    ]
}

fn extras_to_data_settings(extras: &[(String, String)]) -> Result<(MarkSpec, (f64, f64, f64), String)> {
    let find = |key: &str| extras.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let marks = MarkSpec::parse(find("data.marks").unwrap_or("hour_of_day"))?;
    let split = parse_ratios(find("data.split").unwrap_or("0.7,0.1,0.2"))?;
    let ts = find("data.timestamp_column").unwrap_or("date").to_string();
    Ok((marks, split, ts))
}

fn print_warnings(ds: &SeriesDataset) {
    for w in &ds.warnings {
        eprintln!("warning: {w}");
    }
}

// ── Commands ─────────────────────────────────────────────────────────

/// Train per the configuration, write `checkpoint.pulse` and
/// `history.csv` into the output directory, and report val/test metrics.
pub fn cmd_train(config_path: &Path, data: Option<&Path>, out_dir: &Path) -> Result<()> {
    let mut cli = CliConfig::parse_file(config_path)?;
    if let Some(seed) = seed_override()? {
        cli.train.seed = seed;
    }
    if let Some(p) = data {
        cli.data_path = Some(p.to_path_buf());
    }
    let data_path = cli
        .data_path
        .clone()
        .ok_or_else(|| PulseError::Config("no data path (config [data] path or --data)".into()))?;
    let ds = load_csv(&data_path, &cli.timestamp_column, cli.split)?;
    print_warnings(&ds);
    resolve_period(&mut cli.train, &ds)?;
    cli.train.validate()?;

    std::fs::create_dir_all(out_dir)?;
    let mut model = PulseModel::new(cli.train.clone(), ds.n_channels(), cli.marks.width());
    let result = fit(&mut model, &ds, &cli.marks)?;

    let kv = cli.to_kv();
    let mut history = String::new();
    let _ = writeln!(history, "{}", artifact_header(&kv));
    let _ = writeln!(history, "epoch,train_loss,val_mse,val_mae");
    for e in &result.history {
        let _ = writeln!(history, "{},{},{},{}", e.epoch, e.train_loss, e.val_mse, e.val_mae);
    }
    std::fs::write(out_dir.join("history.csv"), history)?;
    save_checkpoint_full(
        &model,
        &out_dir.join("checkpoint.pulse"),
        FloatWidth::F64,
        &data_extras(&cli),
    )?;

    let (val_mse, val_mae) = evaluate(&model, &ds, Split::Val, &cli.marks)?;
    let (test_mse, test_mae) = evaluate(&model, &ds, Split::Test, &cli.marks)?;
    println!("trained {} epochs (best epoch {})", result.history.len(), result.best_epoch);
    println!("val  MSE {val_mse:.6} MAE {val_mae:.6}");
    println!("test MSE {test_mse:.6} MAE {test_mae:.6}");
    Ok(())
}

/// Evaluate a checkpoint on a dataset: MSE, MAE, and MASE (seasonal naive
/// period `m`, denominators from the train split).
pub fn cmd_eval(ckpt: &Path, data: &Path, mase_m: usize, out: Option<&Path>) -> Result<()> {
    let (model, extras) = load_checkpoint_full(ckpt)?;
    let (marks, split, ts_col) = extras_to_data_settings(&extras)?;
    let ds = load_csv(data, &ts_col, split)?;
    print_warnings(&ds);
    if ds.n_channels() != model.channels {
        return Err(PulseError::Data(format!(
            "checkpoint expects {} channels, dataset has {}",
            model.channels,
            ds.n_channels()
        )));
    }
    let (mse, mae) = evaluate(&model, &ds, Split::Test, &marks)?;

    // MASE across all test windows, denominators from the train split.
    let train_range = ds.split_range(Split::Train);
    let c = ds.n_channels();
    let mut insample = Vec::with_capacity(train_range.len() * c);
    for t in train_range.clone() {
        insample.extend_from_slice(ds.row(t));
    }
    let denoms = seasonal_denominators(&insample, train_range.len(), c, mase_m)?;
    let cfg = &model.cfg;
    let batches = make_windows(&ds, Split::Test, cfg.t, cfg.h, &marks, cfg.batch_size, None)?;
    let mut mase_sum = 0.0;
    let mut windows = 0usize;
    let mut rng = Rng::new(0);
    for batch in batches {
        let mut tape = Tape::new();
        let ids = TapedParams::register_frozen(&mut tape, &model.named_params());
        let plan = MixPlan::disabled(batch.batch);
        let outp = forward_batch(&mut tape, &model, &ids, &batch, &plan, Mode::Eval, &mut rng);
        let pred = tape.values(outp.y_hat);
        let truth = tape.values(outp.y_target);
        let per = cfg.h * c;
        for b in 0..batch.batch {
            mase_sum += mase_with_denominators(
                &pred[b * per..(b + 1) * per],
                &truth[b * per..(b + 1) * per],
                cfg.h,
                c,
                &denoms,
            );
            windows += 1;
        }
    }
    let mase = mase_sum / windows as f64;

    let mut kv = model.cfg.to_kv();
    kv.extend(extras.clone());
    kv.push(("eval.mase_m".into(), mase_m.to_string()));
    let mut csv = String::new();
    let _ = writeln!(csv, "{}", artifact_header(&kv));
    let _ = writeln!(csv, "dataset,split,windows,mse,mae,mase_m,mase");
    let _ = writeln!(csv, "{},test,{windows},{mse},{mae},{mase_m},{mase}", ds.name);
    if let Some(path) = out {
        std::fs::write(path, &csv)?;
    }
    println!("test MSE {mse:.6} MAE {mae:.6} MASE(m={mase_m}) {mase:.6}");
    Ok(())
}

/// Predict one window and write (step, channel, prediction, ground truth,
/// future anchor) rows for offline plotting.
pub fn cmd_forecast(
    ckpt: &Path,
    data: &Path,
    window: usize,
    split: &str,
    out: &Path,
) -> Result<()> {
    let (model, extras) = load_checkpoint_full(ckpt)?;
    let (marks, split_ratios, ts_col) = extras_to_data_settings(&extras)?;
    let ds = load_csv(data, &ts_col, split_ratios)?;
    print_warnings(&ds);
    let split = parse_split_name(split)?;
    let cfg = &model.cfg;
    let mut batches = make_windows(&ds, split, cfg.t, cfg.h, &marks, 1, None)?;
    let n = batches.n_windows();
    let batch = batches.nth(window).ok_or_else(|| {
        PulseError::Data(format!("window {window} out of range ({n} windows in split)"))
    })?;
    let mut tape = Tape::new();
    let ids = TapedParams::register_frozen(&mut tape, &model.named_params());
    let plan = MixPlan::disabled(1);
    let mut rng = Rng::new(0);
    let outp = forward_batch(&mut tape, &model, &ids, &batch, &plan, Mode::Eval, &mut rng);
    let pred = tape.values(outp.y_hat);
    let truth = tape.values(outp.y_target);
    let a_y = tape.values(outp.a_y);

    let mut kv = model.cfg.to_kv();
    kv.extend(extras);
    kv.push(("forecast.window".into(), window.to_string()));
    kv.push(("forecast.t_end".into(), batch.t_end[0].to_string()));
    let c = ds.n_channels();
    let mut csv = String::new();
    let _ = writeln!(csv, "{}", artifact_header(&kv));
    let _ = writeln!(csv, "step,channel,prediction,ground_truth,a_y");
    for step in 0..cfg.h {
        for ch in 0..c {
            let i = step * c + ch;
            let _ = writeln!(csv, "{step},{},{},{},{}", ds.channel_names[ch], pred[i], truth[i], a_y[i]);
        }
    }
    std::fs::write(out, csv)?;
    println!("forecast for window {window} (t_end {}) written", batch.t_end[0]);
    Ok(())
}

/// History-future mismatch diagnostics over stride-1 windows of a split.
pub fn cmd_diagnose(
    data: &Path,
    t: usize,
    horizons: &[usize],
    ratios: (f64, f64, f64),
    split: &str,
    timestamp_column: &str,
    out: Option<&Path>,
) -> Result<()> {
    let ds = load_csv(data, timestamp_column, ratios)?;
    print_warnings(&ds);
    let split = parse_split_name(split)?;
    let rows = mismatch_table(&ds, split, t, horizons)?;
    let kv: Vec<(String, String)> = vec![
        ("diagnose.data".into(), data.display().to_string()),
        ("diagnose.t".into(), t.to_string()),
        (
            "diagnose.horizons".into(),
            horizons.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(";"),
        ),
        (
            "diagnose.split".into(),
            format!("{split:?}").to_lowercase(),
        ),
        ("data.split".into(), format!("{:?},{:?},{:?}", ratios.0, ratios.1, ratios.2)),
    ];
    let mut csv = String::new();
    let _ = writeln!(csv, "{}", artifact_header(&kv));
    let _ = writeln!(csv, "dataset,horizon,ms,ss,sm,windows");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{},{},{}", ds.name, r.horizon, r.ms, r.ss, r.sm, r.windows);
        println!(
            "H={:<4} MS {:.3} SS {:.3} SM {:.3} ({} windows)",
            r.horizon, r.ms, r.ss, r.sm, r.windows
        );
    }
    if let Some(path) = out {
        std::fs::write(path, &csv)?;
    }
    Ok(())
}

/// Train the full model plus the four single-component ablations and emit
/// one metrics row per variant.
pub fn cmd_ablate(config_path: &Path, data: Option<&Path>, out: &Path) -> Result<()> {
    let mut cli = CliConfig::parse_file(config_path)?;
    if let Some(seed) = seed_override()? {
        cli.train.seed = seed;
    }
    if let Some(p) = data {
        cli.data_path = Some(p.to_path_buf());
    }
    let data_path = cli
        .data_path
        .clone()
        .ok_or_else(|| PulseError::Config("no data path (config [data] path or --data)".into()))?;
    let ds = load_csv(&data_path, &cli.timestamp_column, cli.split)?;
    print_warnings(&ds);
    resolve_period(&mut cli.train, &ds)?;
    cli.train.validate()?;

    let on = Flags::default();
    let variants: [(&str, Flags); 5] = [
        ("full", on),
        ("wo_phase_anchor", Flags { use_anchor: false, ..on }),
        ("wo_sam", Flags { use_sam: false, ..on }),
        ("wo_statistic_aware", Flags { statistic_aware: false, ..on }),
        ("wo_phase_router", Flags { use_router: false, ..on }),
    ];
    let mut csv = String::new();
    let _ = writeln!(csv, "{}", artifact_header(&cli.to_kv()));
    let _ = writeln!(csv, "variant,val_mse,test_mse,test_mae");
    for (name, flags) in variants {
        let mut cfg = cli.train.clone();
        cfg.flags = flags;
        let mut model = PulseModel::new(cfg, ds.n_channels(), cli.marks.width());
        let result = fit(&mut model, &ds, &cli.marks)?;
        let (test_mse, test_mae) = evaluate(&model, &ds, Split::Test, &cli.marks)?;
        let _ = writeln!(csv, "{name},{},{test_mse},{test_mae}", result.best_val_mse);
        println!("{name:<20} test MSE {test_mse:.6} MAE {test_mae:.6}");
    }
    std::fs::write(out, csv)?;
    Ok(())
}

/// Generate the seasonal-heteroscedastic synthetic dataset as a CSV in
/// the standard layout.
pub fn cmd_synth(spec: &SynthSpec, seed: u64, out: &Path) -> Result<()> {
    let seed = seed_override()?.unwrap_or(seed);
    let mut rng = Rng::new(seed);
    let (values, timestamps) = synth_raw(&mut rng, spec);
    let channel_names: Vec<String> = (0..spec.channels).map(|c| format!("ch{c}")).collect();
    let kv: Vec<(String, String)> = vec![
        ("synth.t_total".into(), spec.t_total.to_string()),
        ("synth.channels".into(), spec.channels.to_string()),
        ("synth.w1".into(), spec.w1.to_string()),
        ("synth.w2".into(), spec.w2.to_string()),
        ("synth.trend_slope".into(), format!("{:?}", spec.trend_slope)),
        ("synth.noise_base".into(), format!("{:?}", spec.noise_base)),
        ("synth.seed".into(), seed.to_string()),
    ];
    write_series_csv(out, &channel_names, &timestamps, &values, Some(&artifact_header(&kv)[2..]))?;
    println!("wrote {} rows x {} channels to {}", spec.t_total, spec.channels, out.display());
    Ok(())
}

/// Run verification suites; returns whether every check passed.
pub fn cmd_verify(suite: &str, seed: u64, out: Option<&Path>) -> Result<bool> {
    use crate::verify::*;
    let seed = seed_override()?.unwrap_or(seed);
    let mut rows: Vec<CheckRow> = Vec::new();
    let known = ["prop31", "thm32", "gradcheck", "beta", "complexity", "all"];
    if !known.contains(&suite) {
        return Err(PulseError::Config(format!(
            "unknown suite {suite:?} (expected one of {known:?})"
        )));
    }
    if suite == "prop31" || suite == "all" {
        let mut rng = Rng::new(seed);
        let report = check_prop31(&mut rng, 32, 100.0, 1.0, 50);
        rows.extend(prop31_rows(&report));
    }
    if suite == "thm32" || suite == "all" {
        let mut rng = Rng::new(seed);
        let cells = check_thm32(
            &mut rng,
            &[(1.0, 1.0), (2.0, 1.0)],
            &[-1.0, -0.5, 0.0, 0.5, 1.0],
            &[0.25, 0.5, 0.75],
            2048,
            100,
        );
        rows.extend(thm32_rows(&cells));
        // The constructed exact-collapse cell.
        let collapse = run_thm32_cell(&mut rng, 2.0, 1.0, -1.0, 1.0 / 3.0, 2048, 100);
        rows.push(CheckRow {
            suite: "thm32",
            check: "exact_collapse_sigma_naive".into(),
            observed: collapse.min_sigma_naive,
            criterion: "< 1e-6".into(),
            pass: collapse.min_sigma_naive < 1e-6,
        });
        rows.push(CheckRow {
            suite: "thm32",
            check: "collapse_cell_sigma_ours_floor".into(),
            observed: collapse.sigma_ours,
            criterion: ">= min(sigma_i, sigma_j) = 1".into(),
            pass: collapse.sigma_ours >= 1.0,
        });
    }
    if suite == "gradcheck" || suite == "all" {
        rows.extend(gradcheck_rows(seed));
        rows.push(revin_cross_check(seed));
    }
    if suite == "beta" || suite == "all" {
        rows.extend(beta_rows(seed));
    }
    if suite == "complexity" || suite == "all" {
        rows.extend(complexity_rows(24, 16, &[96, 192, 336, 720], 96, &[4, 8, 12, 24]));
    }

    let kv: Vec<(String, String)> =
        vec![("verify.suite".into(), suite.to_string()), ("verify.seed".into(), seed.to_string())];
    let csv = rows_to_csv(&rows, &artifact_header(&kv)[2..]);
    if let Some(path) = out {
        std::fs::write(path, &csv)?;
    }
    for r in &rows {
        println!(
            "[{}] {} {}: observed {} ({})",
            if r.pass { "PASS" } else { "FAIL" },
            r.suite,
            r.check,
            r.observed,
            r.criterion
        );
    }
    Ok(all_pass(&rows))
}

/// Dump per-window history/future anchors for offline visualization.
pub fn cmd_export_anchors(
    ckpt: &Path,
    data: &Path,
    split: &str,
    windows: usize,
    out: &Path,
) -> Result<()> {
    let (model, extras) = load_checkpoint_full(ckpt)?;
    let (marks, split_ratios, ts_col) = extras_to_data_settings(&extras)?;
    let ds = load_csv(data, &ts_col, split_ratios)?;
    print_warnings(&ds);
    let split = parse_split_name(split)?;
    let cfg = &model.cfg;
    let batches = make_windows(&ds, split, cfg.t, cfg.h, &marks, 1, None)?;

    let mut kv = model.cfg.to_kv();
    kv.extend(extras);
    kv.push(("export.windows".into(), windows.to_string()));
    let mut csv = String::new();
    let _ = writeln!(csv, "{}", artifact_header(&kv));
    let _ = writeln!(csv, "window,t_end,stream,step,channel,value");
    let c = ds.n_channels();
    for (wi, batch) in batches.take(windows).enumerate() {
        let mut tape = Tape::new();
        let ids = TapedParams::register_frozen(&mut tape, &model.named_params());
        let plan = MixPlan::disabled(1);
        let mut rng = Rng::new(0);
        let outp = forward_batch(&mut tape, &model, &ids, &batch, &plan, Mode::Eval, &mut rng);
        for (stream, id, len) in
            [("a_x", outp.a_x, cfg.t), ("a_y", outp.a_y, cfg.h)]
        {
            let vals = tape.values(id);
            for step in 0..len {
                for ch in 0..c {
                    let _ = writeln!(
                        csv,
                        "{wi},{},{stream},{step},{},{}",
                        batch.t_end[0],
                        ds.channel_names[ch],
                        vals[step * c + ch]
                    );
                }
            }
        }
    }
    std::fs::write(out, csv)?;
    println!("anchors for up to {windows} windows written to {}", out.display());
    Ok(())
}

// ── Argument parsing ─────────────────────────────────────────────────

#[derive(Parser)]
#[command(
    name = "pulse",
    version,
    about = "Phase-anchored non-stationary forecasting: train, evaluate, diagnose, verify"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Train a model; writes checkpoint.pulse and history.csv to --out
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dataset CSV; overrides the config's data.path
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint: test MSE, MAE, MASE
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Seasonal period of the MASE naive baseline
        #[arg(long, default_value_t = 1)]
        mase_m: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forecast one window; CSV of (step, channel, prediction, truth, anchor)
    Forecast {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Window index within the split (ascending start order)
        #[arg(long)]
        window: usize,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// History-future mismatch diagnostics (MS, SS, SM) per horizon
    Diagnose {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 96)]
        t: usize,
        /// Comma-separated horizons
        #[arg(long, default_value = "96,192,336,720")]
        horizons: String,
        /// Train,val,test ratios used to locate the split
        #[arg(long, default_value = "0.7,0.1,0.2")]
        ratios: String,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value = "date")]
        timestamp_column: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the full model and the four component ablations
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the synthetic seasonal-heteroscedastic dataset CSV
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6000)]
        t_total: usize,
        #[arg(long, default_value_t = 3)]
        channels: usize,
        /// Seasonal period of the deterministic component
        #[arg(long, default_value_t = 24)]
        w1: usize,
        /// Period of the volatility modulation
        #[arg(long, default_value_t = 168)]
        w2: usize,
        #[arg(long, default_value_t = 0.0005)]
        trend: f64,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Run verification suites: prop31, thm32, gradcheck, beta, complexity, all
    Verify {
        suite: String,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export per-window history/future anchors to CSV
    ExportAnchors {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Number of windows to export
        #[arg(long, default_value_t = 8)]
        windows: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(e: &PulseError) -> i32 {
    match e {
        PulseError::Config(_) => 2,
        PulseError::Data(_) | PulseError::Checkpoint(_) | PulseError::Io(_) => 3,
        PulseError::Train(_) => 1,
    }
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Train { config, data, out } => {
            cmd_train(&config, data.as_deref(), &out)?;
            Ok(0)
        }
        Cmd::Eval { ckpt, data, mase_m, out } => {
            cmd_eval(&ckpt, &data, mase_m, out.as_deref())?;
            Ok(0)
        }
        Cmd::Forecast { ckpt, data, window, split, out } => {
            cmd_forecast(&ckpt, &data, window, &split, &out)?;
            Ok(0)
        }
        Cmd::Diagnose { data, t, horizons, ratios, split, timestamp_column, out } => {
            let horizons: Vec<usize> = horizons
                .split(',')
                .map(|h| {
                    h.trim()
                        .parse()
                        .map_err(|_| PulseError::Config(format!("bad horizon {h:?}")))
                })
                .collect::<Result<_>>()?;
            let ratios = parse_ratios(&ratios)?;
            cmd_diagnose(&data, t, &horizons, ratios, &split, &timestamp_column, out.as_deref())?;
            Ok(0)
        }
        Cmd::Ablate { config, data, out } => {
            cmd_ablate(&config, data.as_deref(), &out)?;
            Ok(0)
        }
        Cmd::Synth { out, t_total, channels, w1, w2, trend, noise, seed } => {
            let spec = SynthSpec {
                t_total,
                channels,
                w1,
                w2,
                trend_slope: trend,
                noise_base: noise,
            };
            cmd_synth(&spec, seed, &out)?;
            Ok(0)
        }
        Cmd::Verify { suite, seed, out } => {
            let ok = cmd_verify(&suite, seed, out.as_deref())?;
            Ok(if ok { 0 } else { 1 })
        }
        Cmd::ExportAnchors { ckpt, data, split, windows, out } => {
            cmd_export_anchors(&ckpt, &data, &split, windows, &out)?;
            Ok(0)
        }
    }
}

/// Entry point used by the binary: parse, run, map errors to exit codes.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.exit_code() == 0 { 0 } else { 2 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
