//! Dataset ingestion, splitting, windowing, and synthesis.
//!
//! CSV layout follows the public long-term-forecasting files: a `date`
//! column of ISO-like timestamps ("YYYY-MM-DD HH:MM[:SS]", the time part
//! optional) followed by one numeric column per channel. Values are
//! z-scored with train-split statistics at load time and every consumer
//! works in that scaled space; per-channel mean/std are kept for undoing
//! the scaling when raw-unit output is wanted.

use crate::error::{PulseError, Result};
use crate::numerics::Rng;
use std::fmt::Write as _;
use std::path::Path;

// ── Calendar ─────────────────────────────────────────────────────────

/// Minute-resolution calendar stamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timestamp {
    pub year: i64,
    pub month: u32,
    pub day: u32,
    pub hour: u32,
    pub minute: u32,
}

/// Days since 1970-01-01 of a civil date (proleptic Gregorian).
fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = if m > 2 { m - 3 } else { m + 9 } as i64;
    let doy = (153 * mp + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe - 719468
}

impl Timestamp {
    pub fn new(year: i64, month: u32, day: u32, hour: u32, minute: u32) -> Result<Self> {
        if !(1..=12).contains(&month)
            || !(1..=31).contains(&day)
            || hour > 23
            || minute > 59
        {
            return Err(PulseError::Data(format!(
                "invalid calendar fields {year:04}-{month:02}-{day:02} {hour:02}:{minute:02}"
            )));
        }
        Ok(Timestamp { year, month, day, hour, minute })
    }

    /// Parse "YYYY-MM-DD[ HH:MM[:SS]]" with ' ' or 'T' before the time.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || PulseError::Data(format!("unparseable timestamp {s:?}"));
        let (date, time) = match s.find([' ', 'T']) {
            Some(p) => (&s[..p], Some(&s[p + 1..])),
            None => (s, None),
        };
        let mut dparts = date.split('-');
        let year: i64 = dparts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let month: u32 = dparts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let day: u32 = dparts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if dparts.next().is_some() {
            return Err(bad());
        }
        let (hour, minute) = match time {
            None => (0, 0),
            Some(t) => {
                let mut tparts = t.split(':');
                let h: u32 = tparts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let m: u32 = tparts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                if let Some(sec) = tparts.next() {
                    let _: u32 = sec.parse().map_err(|_| bad())?;
                }
                (h, m)
            }
        };
        Timestamp::new(year, month, day, hour, minute)
    }

    pub fn days_since_epoch(&self) -> i64 {
        days_from_civil(self.year, self.month, self.day)
    }

    /// Monday = 0 .. Sunday = 6.
    pub fn day_of_week(&self) -> u32 {
        (self.days_since_epoch() + 3).rem_euclid(7) as u32
    }

    /// 1-based ordinal day within the year.
    pub fn day_of_year(&self) -> u32 {
        (self.days_since_epoch() - days_from_civil(self.year, 1, 1) + 1) as u32
    }

    /// This timestamp advanced by whole hours (calendar-correct).
    pub fn plus_hours(&self, hours: i64) -> Timestamp {
        let total = self.days_since_epoch() * 24 + self.hour as i64 + hours;
        let days = total.div_euclid(24);
        let hour = total.rem_euclid(24) as u32;
        let (y, m, d) = civil_from_days(days);
        Timestamp { year: y, month: m, day: d, hour, minute: self.minute }
    }
}

/// Inverse of `days_from_civil`.
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719468;
    let era = if z >= 0 { z } else { z - 146096 } / 146097;
    let doe = z - era * 146097;
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

impl std::fmt::Display for Timestamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:04}-{:02}-{:02} {:02}:{:02}:00",
            self.year, self.month, self.day, self.hour, self.minute
        )
    }
}

// ── Calendar features ────────────────────────────────────────────────

/// A calendar feature, normalized to [-0.5, 0.5].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkFeature {
    MinuteOfHour,
    HourOfDay,
    DayOfWeek,
    DayOfMonth,
    DayOfYear,
}

impl MarkFeature {
    pub fn value(&self, ts: &Timestamp) -> f64 {
        match self {
            MarkFeature::MinuteOfHour => ts.minute as f64 / 59.0 - 0.5,
            MarkFeature::HourOfDay => ts.hour as f64 / 23.0 - 0.5,
            MarkFeature::DayOfWeek => ts.day_of_week() as f64 / 6.0 - 0.5,
            MarkFeature::DayOfMonth => (ts.day - 1) as f64 / 30.0 - 0.5,
            MarkFeature::DayOfYear => (ts.day_of_year() - 1) as f64 / 365.0 - 0.5,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MarkFeature::MinuteOfHour => "minute_of_hour",
            MarkFeature::HourOfDay => "hour_of_day",
            MarkFeature::DayOfWeek => "day_of_week",
            MarkFeature::DayOfMonth => "day_of_month",
            MarkFeature::DayOfYear => "day_of_year",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s.trim() {
            "minute_of_hour" => Ok(MarkFeature::MinuteOfHour),
            "hour_of_day" => Ok(MarkFeature::HourOfDay),
            "day_of_week" => Ok(MarkFeature::DayOfWeek),
            "day_of_month" => Ok(MarkFeature::DayOfMonth),
            "day_of_year" => Ok(MarkFeature::DayOfYear),
            other => Err(PulseError::Config(format!("unknown calendar feature {other:?}"))),
        }
    }
}

/// Ordered list of enabled calendar features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkSpec(pub Vec<MarkFeature>);

impl MarkSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if s.trim().is_empty() || s.trim() == "none" {
            return Ok(MarkSpec(Vec::new()));
        }
        Ok(MarkSpec(
            s.split(',')
                .map(MarkFeature::from_name)
                .collect::<Result<Vec<_>>>()?,
        ))
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn to_string_spec(&self) -> String {
        if self.0.is_empty() {
            "none".to_string()
        } else {
            self.0.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")
        }
    }
}

/// Feature matrix (len x F) for a run of timestamps.
pub fn calendar_features(timestamps: &[Timestamp], marks: &MarkSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(timestamps.len() * marks.width());
    for ts in timestamps {
        for m in &marks.0 {
            out.push(m.value(ts));
        }
    }
    out
}

// ── Dataset ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// A loaded multivariate series: z-scored values, calendar stamps, and the
/// contiguous train/val/test boundaries.
#[derive(Debug, Clone)]
pub struct SeriesDataset {
    pub name: String,
    pub channel_names: Vec<String>,
    /// Row-major (t, c), z-scored with train statistics.
    values: Vec<f64>,
    pub timestamps: Vec<Timestamp>,
    n_channels: usize,
    train_end: usize,
    val_end: usize,
    pub train_mean: Vec<f64>,
    pub train_std: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SeriesDataset {
    /// Build from raw (un-scaled) values; applies the split and the
    /// train-statistic z-scoring. Constant train channels get their scale
    /// replaced by 1 with a warning.
    pub fn from_raw(
        name: &str,
        channel_names: Vec<String>,
        mut values: Vec<f64>,
        timestamps: Vec<Timestamp>,
        split_ratios: (f64, f64, f64),
    ) -> Result<Self> {
        let n_channels = channel_names.len();
        if n_channels == 0 {
            return Err(PulseError::Data("dataset has no numeric channels".into()));
        }
        let rows = timestamps.len();
        if rows * n_channels != values.len() {
            return Err(PulseError::Data(format!(
                "value count {} does not match {} rows x {} channels",
                values.len(),
                rows,
                n_channels
            )));
        }
        for w in timestamps.windows(2) {
            if days_minutes(&w[1]) <= days_minutes(&w[0]) {
                return Err(PulseError::Data(format!(
                    "non-monotone timestamps: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let (r_train, r_val, r_test) = split_ratios;
        if r_train <= 0.0 || r_val < 0.0 || r_test < 0.0 || (r_train + r_val + r_test - 1.0).abs() > 1e-6
        {
            return Err(PulseError::Config(format!(
                "split ratios must be nonnegative and sum to 1, got {split_ratios:?}"
            )));
        }
        let train_end = (rows as f64 * r_train).floor() as usize;
        let val_end = train_end + (rows as f64 * r_val).floor() as usize;
        if train_end == 0 {
            return Err(PulseError::Data("train split is empty".into()));
        }

        let mut warnings = Vec::new();
        let mut train_mean = vec![0.0; n_channels];
        let mut train_std = vec![0.0; n_channels];
        for c in 0..n_channels {
            let mut sum = 0.0;
            for t in 0..train_end {
                sum += values[t * n_channels + c];
            }
            let mu = sum / train_end as f64;
            let mut var = 0.0;
            for t in 0..train_end {
                let d = values[t * n_channels + c] - mu;
                var += d * d;
            }
            let mut sd = (var / train_end as f64).sqrt();
            if sd == 0.0 {
                warnings.push(format!(
                    "channel {:?} is constant over the train split; scale replaced by 1",
                    channel_names[c]
                ));
                sd = 1.0;
            }
            train_mean[c] = mu;
            train_std[c] = sd;
        }
        for t in 0..rows {
            for c in 0..n_channels {
                let v = &mut values[t * n_channels + c];
                *v = (*v - train_mean[c]) / train_std[c];
            }
        }
        Ok(SeriesDataset {
            name: name.to_string(),
            channel_names,
            values,
            timestamps,
            n_channels,
            train_end,
            val_end,
            train_mean,
            train_std,
            warnings,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    /// Z-scored value at (row, channel).
    pub fn value(&self, t: usize, c: usize) -> f64 {
        self.values[t * self.n_channels + c]
    }

    /// Z-scored row slice.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_channels..(t + 1) * self.n_channels]
    }

    pub fn split_range(&self, split: Split) -> std::ops::Range<usize> {
        match split {
            Split::Train => 0..self.train_end,
            Split::Val => self.train_end..self.val_end,
            Split::Test => self.val_end..self.n_rows(),
        }
    }
}

fn days_minutes(ts: &Timestamp) -> i64 {
    (ts.days_since_epoch() * 24 + ts.hour as i64) * 60 + ts.minute as i64
}

/// Load a CSV with a timestamp column and numeric channels, split and
/// z-score it. Parse failures report the 1-based row and column.
pub fn load_csv(
    path: &Path,
    timestamp_column: &str,
    split_ratios: (f64, f64, f64),
) -> Result<SeriesDataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PulseError::Data(format!("cannot read {}: {e}", path.display())))?;
    // Leading '#' lines (config echoes written by the tools) are skipped.
    let mut lines = text
        .lines()
        .enumerate()
        .skip_while(|(_, l)| l.trim_start().starts_with('#'));
    let (_, header) = lines
        .next()
        .ok_or_else(|| PulseError::Data(format!("{} is empty", path.display())))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let ts_col = columns
        .iter()
        .position(|c| *c == timestamp_column)
        .ok_or_else(|| {
            PulseError::Data(format!(
                "timestamp column {timestamp_column:?} not found in header {columns:?}"
            ))
        })?;
    let channel_names: Vec<String> = columns
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ts_col)
        .map(|(_, c)| c.to_string())
        .collect();
    if channel_names.is_empty() {
        return Err(PulseError::Data("no numeric channels in header".into()));
    }

    let mut values = Vec::new();
    let mut timestamps = Vec::new();
    for (line_idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row_no = line_idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(PulseError::Data(format!(
                "row {row_no}: expected {} fields, found {}",
                columns.len(),
                fields.len()
            )));
        }
        for (col_idx, field) in fields.iter().enumerate() {
            if col_idx == ts_col {
                timestamps.push(Timestamp::parse(field).map_err(|e| {
                    PulseError::Data(format!("row {row_no}, column {}: {e}", col_idx + 1))
                })?);
            } else {
                let v: f64 = field.trim().parse().map_err(|_| {
                    PulseError::Data(format!(
                        "row {row_no}, column {}: unparseable number {field:?}",
                        col_idx + 1
                    ))
                })?;
                if !v.is_finite() {
                    return Err(PulseError::Data(format!(
                        "row {row_no}, column {}: non-finite value",
                        col_idx + 1
                    )));
                }
                values.push(v);
            }
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    SeriesDataset::from_raw(&name, channel_names, values, timestamps, split_ratios)
}

// ── Windows ──────────────────────────────────────────────────────────

/// One batch of stride-1 sliding windows.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    /// History values, row-major (B, T, C).
    pub x: Vec<f64>,
    /// Target values, row-major (B, H, C).
    pub y: Vec<f64>,
    /// History calendar features (B, T, F).
    pub x_marks: Vec<f64>,
    /// Target calendar features (B, H, F).
    pub y_marks: Vec<f64>,
    /// Absolute dataset row index of each window's last input step.
    pub t_end: Vec<usize>,
    pub batch: usize,
    pub t_len: usize,
    pub horizon: usize,
    pub channels: usize,
    pub mark_width: usize,
}

/// Lazily yields `WindowBatch`es over one split.
pub struct BatchIter<'a> {
    ds: &'a SeriesDataset,
    starts: Vec<usize>,
    t: usize,
    h: usize,
    marks: MarkSpec,
    batch_size: usize,
    pos: usize,
}

impl BatchIter<'_> {
    pub fn n_windows(&self) -> usize {
        self.starts.len()
    }

    pub fn n_batches(&self) -> usize {
        self.starts.len().div_ceil(self.batch_size)
    }
}

impl Iterator for BatchIter<'_> {
    type Item = WindowBatch;

    fn next(&mut self) -> Option<WindowBatch> {
        if self.pos >= self.starts.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.starts.len());
        let idx = &self.starts[self.pos..end];
        self.pos = end;
        let (t, h, c, f) = (self.t, self.h, self.ds.n_channels(), self.marks.width());
        let b = idx.len();
        let mut batch = WindowBatch {
            x: Vec::with_capacity(b * t * c),
            y: Vec::with_capacity(b * h * c),
            x_marks: Vec::with_capacity(b * t * f),
            y_marks: Vec::with_capacity(b * h * f),
            t_end: Vec::with_capacity(b),
            batch: b,
            t_len: t,
            horizon: h,
            channels: c,
            mark_width: f,
        };
        for &start in idx {
            for row in start..start + t {
                batch.x.extend_from_slice(self.ds.row(row));
            }
            for row in start + t..start + t + h {
                batch.y.extend_from_slice(self.ds.row(row));
            }
            batch
                .x_marks
                .extend(calendar_features(&self.ds.timestamps[start..start + t], &self.marks));
            batch.y_marks.extend(calendar_features(
                &self.ds.timestamps[start + t..start + t + h],
                &self.marks,
            ));
            batch.t_end.push(start + t - 1);
        }
        Some(batch)
    }
}

/// Stride-1 window batches over `split`. With a generator the start order
/// is a deterministic shuffle; otherwise ascending.
pub fn make_windows<'a>(
    ds: &'a SeriesDataset,
    split: Split,
    t: usize,
    h: usize,
    marks: &MarkSpec,
    batch_size: usize,
    shuffle: Option<&mut Rng>,
) -> Result<BatchIter<'a>> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let range = ds.split_range(split);
    let len = range.len();
    if len < t + h {
        return Err(PulseError::Data(format!(
            "{} split has {len} rows, fewer than T+H = {}",
            split.name(),
            t + h
        )));
    }
    let count = len - (t + h) + 1;
    let mut starts: Vec<usize> = (range.start..range.start + count).collect();
    if let Some(rng) = shuffle {
        let perm = rng.permutation(count);
        starts = perm.into_iter().map(|i| range.start + i).collect();
    }
    Ok(BatchIter { ds, starts, t, h, marks: marks.clone(), batch_size, pos: 0 })
}

// ── Period detection ─────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodDetection {
    /// Smallest qualifying strict local maximum of the averaged ACF.
    QualifyingPeak,
    /// No qualifying peak; global argmax over [2, max_lag] used instead.
    FallbackArgmax,
}

/// Channel-averaged sample autocorrelation of the train split for lags
/// 0..=max_lag.
pub fn train_acf(ds: &SeriesDataset, max_lag: usize) -> Result<Vec<f64>> {
    let range = ds.split_range(Split::Train);
    let n = range.len();
    if n <= 2 * max_lag {
        return Err(PulseError::Data(format!(
            "train split length {n} must exceed 2 * max_lag = {}",
            2 * max_lag
        )));
    }
    let c_all = ds.n_channels();
    let mut acf = vec![0.0; max_lag + 1];
    let mut used = 0usize;
    for c in 0..c_all {
        let series: Vec<f64> = range.clone().map(|t| ds.value(t, c)).collect();
        let mu = series.iter().sum::<f64>() / n as f64;
        let var = series.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
        if var < 1e-12 {
            continue;
        }
        used += 1;
        for (lag, slot) in acf.iter_mut().enumerate() {
            let mut sum = 0.0;
            for t in 0..n - lag {
                sum += (series[t] - mu) * (series[t + lag] - mu);
            }
            *slot += sum / ((n - lag) as f64 * var);
        }
    }
    if used == 0 {
        return Err(PulseError::Data(
            "period detection on an all-constant series is degenerate".into(),
        ));
    }
    for v in &mut acf {
        *v /= used as f64;
    }
    Ok(acf)
}

/// Global period from the averaged train-split ACF: the smallest lag in
/// [2, max_lag] that is a strict local maximum and exceeds half the ACF
/// maximum (the lag-0 value, 1 by construction); falls back to the global
/// argmax over [2, max_lag] when no lag qualifies. The smallest-peak rule
/// prefers the fundamental period over its harmonics; the absolute floor
/// keeps aperiodic noise from promoting spurious local maxima.
pub fn detect_period_acf(ds: &SeriesDataset, max_lag: usize) -> Result<(usize, PeriodDetection)> {
    let acf = train_acf(ds, max_lag)?;
    let lo = 2usize;
    let peak_floor = 0.5 * acf[0];
    for lag in lo..max_lag {
        if acf[lag] > acf[lag - 1] && acf[lag] > acf[lag + 1] && acf[lag] > peak_floor {
            return Ok((lag, PeriodDetection::QualifyingPeak));
        }
    }
    let mut best = lo;
    for lag in lo..=max_lag {
        if acf[lag] > acf[best] {
            best = lag;
        }
    }
    Ok((best, PeriodDetection::FallbackArgmax))
}

// ── Synthetic series ─────────────────────────────────────────────────

/// Parameters of the seasonal-heteroscedastic fixture.
#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub t_total: usize,
    pub channels: usize,
    /// Seasonal period of the deterministic component.
    pub w1: usize,
    /// Period of the volatility modulation.
    pub w2: usize,
    pub trend_slope: f64,
    pub noise_base: f64,
}

/// Raw (un-scaled) synthetic values plus hourly timestamps from a fixed
/// epoch. Per (t, c):
/// `trend*t + sin(2*pi*t/W1 + phase_c) + noise*(1 + 0.5*sin(2*pi*t/W2))*eps`
/// with `phase_c = 2*pi*c/C` and unit Gaussian `eps` via Box-Muller.
pub fn synth_raw(rng: &mut Rng, spec: &SynthSpec) -> (Vec<f64>, Vec<Timestamp>) {
    assert!(
        spec.t_total >= 4 * spec.w1.max(spec.w2),
        "synthetic series must span at least 4 periods"
    );
    let c = spec.channels;
    let tau = 2.0 * std::f64::consts::PI;
    let epoch = Timestamp { year: 2016, month: 1, day: 1, hour: 0, minute: 0 };
    let mut values = Vec::with_capacity(spec.t_total * c);
    let mut timestamps = Vec::with_capacity(spec.t_total);
    for t in 0..spec.t_total {
        timestamps.push(epoch.plus_hours(t as i64));
        for ch in 0..c {
            let phase = tau * ch as f64 / c as f64;
            let deterministic =
                spec.trend_slope * t as f64 + (tau * t as f64 / spec.w1 as f64 + phase).sin();
            let vol = 1.0 + 0.5 * (tau * t as f64 / spec.w2 as f64).sin();
            values.push(deterministic + spec.noise_base * vol * rng.gauss());
        }
    }
    (values, timestamps)
}

/// Deterministic part of `synth_raw` at (t, c); used by fixtures that need
/// the exact residual.
pub fn synth_deterministic(spec: &SynthSpec, t: usize, c: usize) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let phase = tau * c as f64 / spec.channels as f64;
    spec.trend_slope * t as f64 + (tau * t as f64 / spec.w1 as f64 + phase).sin()
}

/// Synthetic dataset routed through the standard split/z-score path.
pub fn synth_seasonal_hetero(
    rng: &mut Rng,
    spec: &SynthSpec,
    split_ratios: (f64, f64, f64),
) -> Result<SeriesDataset> {
    let (values, timestamps) = synth_raw(rng, spec);
    let channel_names = (0..spec.channels).map(|c| format!("ch{c}")).collect();
    SeriesDataset::from_raw("synthetic", channel_names, values, timestamps, split_ratios)
}

/// Write raw values in the standard CSV layout (`date` column first).
pub fn write_series_csv(
    path: &Path,
    channel_names: &[String],
    timestamps: &[Timestamp],
    raw_values: &[f64],
    header_comment: Option<&str>,
) -> Result<()> {
    let c = channel_names.len();
    let mut out = String::new();
    if let Some(comment) = header_comment {
        let _ = writeln!(out, "# {comment}");
    }
    let _ = writeln!(out, "date,{}", channel_names.join(","));
    for (t, ts) in timestamps.iter().enumerate() {
        let _ = write!(out, "{ts}");
        for ch in 0..c {
            let _ = write!(out, ",{}", raw_values[t * c + ch]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
