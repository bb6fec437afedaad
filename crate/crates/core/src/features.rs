//! Clinical summary features of one segment.
//!
//! Baseline is a trimmed mean around a running one-minute median. STV and
//! LTV follow the 3.75 s epoch convention: STV is the mean absolute
//! difference of successive epoch means, LTV the mean per-minute range of
//! epoch means. Accelerations and decelerations are excursions of at least
//! 15 bpm from baseline lasting at least 15 s.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{mean_sd, FhrSegment, MaskCode};
use crate::synth::{SAMPLES_PER_EPOCH, SAMPLE_RATE_HZ};

/// Reference level for the baseline anomaly.
pub const GLOBAL_MEAN_BASELINE: f64 = 140.0;

const MINUTE: usize = 240;
const EPOCHS_PER_MINUTE: usize = 16;

pub const FEATURE_NAMES: [&str; 9] = [
    "baseline",
    "baseline_shift",
    "baseline_anomaly",
    "stv",
    "ltv",
    "sd",
    "range",
    "accel_count",
    "decel_count",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Half-width of the trimming band around the running median, bpm.
    pub baseline_band: f64,
    /// Minimum VALID samples in each edge minute for the baseline shift.
    pub shift_min_valid: usize,
    pub event_amplitude: f64,
    pub event_min_seconds: f64,
    pub event_merge_seconds: f64,
    pub min_minutes: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            baseline_band: 10.0,
            shift_min_valid: MINUTE / 2,
            event_amplitude: 15.0,
            event_min_seconds: 15.0,
            event_merge_seconds: 5.0,
            min_minutes: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub baseline: f64,
    pub baseline_shift: f64,
    pub baseline_anomaly: f64,
    pub stv: f64,
    pub ltv: f64,
    pub sd: f64,
    pub range: f64,
    pub accel_count: usize,
    pub decel_count: usize,
}

impl FeatureVector {
    /// Values in [`FEATURE_NAMES`] order.
    pub fn values(&self) -> [f64; 9] {
        [
            self.baseline,
            self.baseline_shift,
            self.baseline_anomaly,
            self.stv,
            self.ltv,
            self.sd,
            self.range,
            self.accel_count as f64,
            self.decel_count as f64,
        ]
    }
}

/// Non-PAD prefix of a segment with MISSING positions as `None`.
fn content(segment: &FhrSegment) -> Vec<Option<f64>> {
    segment
        .values
        .iter()
        .zip(&segment.mask)
        .take_while(|(_, &m)| m != MaskCode::Pad)
        .map(|(&v, &m)| (m == MaskCode::Valid).then_some(v))
        .collect()
}

struct SortedWindow(Vec<f64>);

impl SortedWindow {
    fn insert(&mut self, v: f64) {
        let at = self.0.partition_point(|&x| x < v);
        self.0.insert(at, v);
    }

    fn remove(&mut self, v: f64) {
        let at = self.0.partition_point(|&x| x < v);
        debug_assert!(self.0[at] == v);
        self.0.remove(at);
    }

    fn median(&self) -> f64 {
        let n = self.0.len();
        if n % 2 == 1 {
            self.0[n / 2]
        } else {
            0.5 * (self.0[n / 2 - 1] + self.0[n / 2])
        }
    }
}

/// Trimmed baseline of a series: samples within `band` bpm of a centred
/// running one-minute median are averaged.
fn baseline_of(series: &[Option<f64>], min_valid: usize, band: f64) -> Result<f64> {
    let valid = series.iter().flatten().count();
    if valid < min_valid || valid == 0 {
        return Err(Error::InsufficientData(format!(
            "baseline needs {min_valid} valid samples, got {valid}"
        )));
    }
    let half = MINUTE / 2;
    let n = series.len();
    let mut window = SortedWindow(Vec::with_capacity(MINUTE + 1));
    for v in series[..(half + 1).min(n)].iter().flatten() {
        window.insert(*v);
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..n {
        if i > 0 {
            if let Some(Some(v)) = series.get(i + half) {
                window.insert(*v);
            }
            if i > half {
                if let Some(v) = series[i - half - 1] {
                    window.remove(v);
                }
            }
        }
        if let Some(v) = series[i] {
            if (v - window.median()).abs() <= band {
                sum += v;
                count += 1;
            }
        }
    }
    if count == 0 {
        let mut all: Vec<f64> = series.iter().flatten().copied().collect();
        all.sort_by(f64::total_cmp);
        return Ok(SortedWindow(all).median());
    }
    Ok(sum / count as f64)
}

pub fn baseline(segment: &FhrSegment) -> Result<f64> {
    baseline_of(&content(segment), MINUTE, FeatureConfig::default().baseline_band)
}

fn baseline_shift_of(series: &[Option<f64>], cfg: &FeatureConfig) -> Result<f64> {
    if series.len() < MINUTE {
        return Err(Error::InsufficientData("baseline shift needs a full minute".into()));
    }
    let first = baseline_of(&series[..MINUTE], cfg.shift_min_valid, cfg.baseline_band)?;
    let last = baseline_of(&series[series.len() - MINUTE..], cfg.shift_min_valid, cfg.baseline_band)?;
    Ok(last - first)
}

/// Baseline over the final minute minus baseline over the first minute.
pub fn baseline_shift(segment: &FhrSegment) -> Result<f64> {
    baseline_shift_of(&content(segment), &FeatureConfig::default())
}

/// Epoch means; an epoch containing any MISSING sample is `None`.
fn epoch_means(series: &[Option<f64>]) -> Vec<Option<f64>> {
    series
        .chunks_exact(SAMPLES_PER_EPOCH)
        .map(|chunk| {
            let mut sum = 0.0;
            for v in chunk {
                sum += (*v)?;
            }
            Some(sum / SAMPLES_PER_EPOCH as f64)
        })
        .collect()
}

fn check_minutes(epochs: &[Option<f64>], min_minutes: usize) -> Result<()> {
    let qualifying = epochs
        .chunks_exact(EPOCHS_PER_MINUTE)
        .filter(|m| m.iter().flatten().count() * 2 > EPOCHS_PER_MINUTE)
        .count();
    if qualifying < min_minutes {
        return Err(Error::InsufficientData(format!(
            "variability needs {min_minutes} minutes of mostly valid epochs, got {qualifying}"
        )));
    }
    Ok(())
}

fn stv_of(series: &[Option<f64>], cfg: &FeatureConfig) -> Result<f64> {
    let epochs = epoch_means(series);
    check_minutes(&epochs, cfg.min_minutes)?;
    let diffs: Vec<f64> = epochs
        .windows(2)
        .filter_map(|w| Some((w[1]? - w[0]?).abs()))
        .collect();
    if diffs.is_empty() {
        return Err(Error::InsufficientData("no consecutive valid epochs".into()));
    }
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

fn ltv_of(series: &[Option<f64>], cfg: &FeatureConfig) -> Result<f64> {
    let epochs = epoch_means(series);
    check_minutes(&epochs, cfg.min_minutes)?;
    let ranges: Vec<f64> = epochs
        .chunks_exact(EPOCHS_PER_MINUTE)
        .filter_map(|minute| {
            let valid: Vec<f64> = minute.iter().flatten().copied().collect();
            (valid.len() * 2 > EPOCHS_PER_MINUTE).then(|| {
                valid.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    - valid.iter().copied().fold(f64::INFINITY, f64::min)
            })
        })
        .collect();
    Ok(ranges.iter().sum::<f64>() / ranges.len() as f64)
}

pub fn stv(segment: &FhrSegment) -> Result<f64> {
    stv_of(&content(segment), &FeatureConfig::default())
}

pub fn ltv(segment: &FhrSegment) -> Result<f64> {
    ltv_of(&content(segment), &FeatureConfig::default())
}

/// Population standard deviation and range of VALID samples.
pub fn sd_range(segment: &FhrSegment) -> Result<(f64, f64)> {
    let valid: Vec<f64> = segment.valid_values().collect();
    if valid.is_empty() {
        return Err(Error::InsufficientData("no valid samples".into()));
    }
    let (_, sd) = mean_sd(&valid);
    let range = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - valid.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((sd, range))
}

fn count_runs(flags: &[bool], merge_gap: usize, min_len: usize) -> usize {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < flags.len() {
        if !flags[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < flags.len() && flags[i] {
            i += 1;
        }
        match runs.last_mut() {
            Some(last) if start - last.1 < merge_gap => last.1 = i,
            _ => runs.push((start, i)),
        }
    }
    runs.iter().filter(|(s, e)| e - s >= min_len).count()
}

fn count_events_of(series: &[Option<f64>], baseline: f64, cfg: &FeatureConfig) -> (usize, usize) {
    let merge_gap = (cfg.event_merge_seconds * SAMPLE_RATE_HZ).round() as usize;
    let min_len = (cfg.event_min_seconds * SAMPLE_RATE_HZ).round() as usize;
    let above: Vec<bool> = series
        .iter()
        .map(|v| v.is_some_and(|x| x >= baseline + cfg.event_amplitude))
        .collect();
    let below: Vec<bool> = series
        .iter()
        .map(|v| v.is_some_and(|x| x <= baseline - cfg.event_amplitude))
        .collect();
    (count_runs(&above, merge_gap, min_len), count_runs(&below, merge_gap, min_len))
}

/// Accelerations and decelerations relative to `baseline`.
pub fn count_events(segment: &FhrSegment, baseline: f64) -> (usize, usize) {
    count_events_of(&content(segment), baseline, &FeatureConfig::default())
}

pub fn extract(segment: &FhrSegment, cfg: &FeatureConfig) -> Result<FeatureVector> {
    let series = content(segment);
    let base = baseline_of(&series, MINUTE, cfg.baseline_band)?;
    let (sd, range) = sd_range(segment)?;
    let (accel_count, decel_count) = count_events_of(&series, base, cfg);
    Ok(FeatureVector {
        baseline: base,
        baseline_shift: baseline_shift_of(&series, cfg)?,
        baseline_anomaly: base - GLOBAL_MEAN_BASELINE,
        stv: stv_of(&series, cfg)?,
        ltv: ltv_of(&series, cfg)?,
        sd,
        range,
        accel_count,
        decel_count,
    })
}
