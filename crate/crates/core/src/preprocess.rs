//! Raw records to model-ready five-minute segments.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::{CtgRecord, SAMPLES_PER_EPOCH, SAMPLE_RATE_HZ};

/// Samples per segment (5 minutes at 4 Hz).
pub const SEGMENT_LEN: usize = 1200;
/// Window stride (2.5 minutes at 4 Hz).
pub const SEGMENT_STRIDE: usize = 600;
/// Bins of the real-input spectrum of one segment.
pub const SPECTRUM_LEN: usize = SEGMENT_LEN / 2 + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum MaskCode {
    Valid = 0,
    Missing = 1,
    Pad = 2,
}

impl MaskCode {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(MaskCode::Valid),
            1 => Ok(MaskCode::Missing),
            2 => Ok(MaskCode::Pad),
            _ => Err(Error::InvalidInput(format!("unknown mask code {v}"))),
        }
    }
}

/// Thresholds of the cleaning and windowing rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub band_low: f64,
    pub band_high: f64,
    pub spike_delta: f64,
    pub max_missing: usize,
    pub trailing_min: usize,
    pub min_sd: f64,
    pub min_range: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            band_low: 50.0,
            band_high: 210.0,
            spike_delta: 25.0,
            max_missing: 300,
            trailing_min: 900,
            min_sd: 1.0,
            min_range: 5.0,
        }
    }
}

/// One five-minute window. Non-VALID positions hold `0.0` in `values`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FhrSegment {
    pub parent_id: String,
    pub start_offset: f64,
    pub values: Vec<f64>,
    pub mask: Vec<MaskCode>,
    pub label: u8,
}

impl FhrSegment {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != SEGMENT_LEN || self.mask.len() != SEGMENT_LEN {
            return Err(Error::InvalidInput(format!(
                "segment {}@{}: length must be {SEGMENT_LEN}",
                self.parent_id, self.start_offset
            )));
        }
        let first_pad = self.mask.iter().position(|&m| m == MaskCode::Pad).unwrap_or(SEGMENT_LEN);
        if self.mask[first_pad..].iter().any(|&m| m != MaskCode::Pad) {
            return Err(Error::InvalidInput("PAD positions must form a suffix".into()));
        }
        if self.missing_count() > 300 {
            return Err(Error::InvalidInput("more than 300 missing samples".into()));
        }
        if self.label > 1 {
            return Err(Error::InvalidInput(format!("label {} not in {{0, 1}}", self.label)));
        }
        Ok(())
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m == MaskCode::Missing).count()
    }

    /// Number of non-PAD positions.
    pub fn content_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m != MaskCode::Pad).count()
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m == MaskCode::Valid)
            .map(|(&v, _)| v)
    }
}

/// Up-samples a 3.75 s epoch series to 4 Hz: linear interpolation between
/// epochs (holding the final epoch) followed by a 5-point moving average.
/// Outputs touching a missing epoch are missing.
pub fn resample_epoch(samples: &[Option<f64>]) -> Result<Vec<Option<f64>>> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "resampling needs at least 2 epochs, got {}",
            samples.len()
        )));
    }
    let n = samples.len();
    let interp: Vec<Option<f64>> = (0..n * SAMPLES_PER_EPOCH)
        .map(|k| {
            let i = k / SAMPLES_PER_EPOCH;
            let frac = (k % SAMPLES_PER_EPOCH) as f64 / SAMPLES_PER_EPOCH as f64;
            if frac == 0.0 || i + 1 >= n {
                return samples[i];
            }
            match (samples[i], samples[i + 1]) {
                (Some(a), Some(b)) => Some(a + (b - a) * frac),
                _ => None,
            }
        })
        .collect();
    Ok(moving_average(&interp, 2))
}

fn moving_average(x: &[Option<f64>], half: usize) -> Vec<Option<f64>> {
    (0..x.len())
        .map(|k| {
            x[k]?;
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(x.len());
            let (sum, count) = x[lo..hi]
                .iter()
                .flatten()
                .fold((0.0, 0usize), |(s, c), &v| (s + v, c + 1));
            Some(sum / count as f64)
        })
        .collect()
}

/// Removes out-of-band samples and single-sample spikes.
pub fn denoise(series: &[Option<f64>], cfg: &PreprocessConfig) -> Vec<Option<f64>> {
    let banded: Vec<Option<f64>> = series
        .iter()
        .map(|v| v.filter(|x| (cfg.band_low..=cfg.band_high).contains(x)))
        .collect();
    let mut out = banded.clone();
    for i in 1..banded.len().saturating_sub(1) {
        if let (Some(prev), Some(cur), Some(next)) = (banded[i - 1], banded[i], banded[i + 1]) {
            let (d1, d2) = (cur - prev, cur - next);
            if d1.abs() > cfg.spike_delta && d2.abs() > cfg.spike_delta && d1 * d2 > 0.0 {
                out[i] = Some(0.5 * (prev + next));
            }
        }
    }
    out
}

/// Cuts a 4 Hz series into overlapping windows and applies the exclusion
/// rules. Series shorter than `trailing_min` yield no windows.
pub fn segment_series(
    parent_id: &str,
    label: u8,
    series: &[Option<f64>],
    cfg: &PreprocessConfig,
) -> Vec<FhrSegment> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < series.len() {
        let available = series.len() - start;
        if available < cfg.trailing_min {
            break;
        }
        let take = available.min(SEGMENT_LEN);
        let mut values = vec![0.0; SEGMENT_LEN];
        let mut mask = vec![MaskCode::Pad; SEGMENT_LEN];
        for (j, v) in series[start..start + take].iter().enumerate() {
            match v {
                Some(x) => {
                    values[j] = *x;
                    mask[j] = MaskCode::Valid;
                }
                None => mask[j] = MaskCode::Missing,
            }
        }
        let segment = FhrSegment {
            parent_id: parent_id.to_string(),
            start_offset: start as f64 / SAMPLE_RATE_HZ,
            values,
            mask,
            label,
        };
        if keep_segment(&segment, cfg) {
            out.push(segment);
        }
        if take < SEGMENT_LEN {
            break;
        }
        start += SEGMENT_STRIDE;
    }
    out
}

fn keep_segment(segment: &FhrSegment, cfg: &PreprocessConfig) -> bool {
    if segment.missing_count() > cfg.max_missing {
        return false;
    }
    let valid: Vec<f64> = segment.valid_values().collect();
    if valid.is_empty() {
        return false;
    }
    let (_, sd) = mean_sd(&valid);
    let range = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - valid.iter().copied().fold(f64::INFINITY, f64::min);
    sd >= cfg.min_sd && range >= cfg.min_range
}

/// Windows of one 4 Hz record.
pub fn segment_record(record: &CtgRecord, cfg: &PreprocessConfig) -> Result<Vec<FhrSegment>> {
    if record.sample_rate != SAMPLE_RATE_HZ {
        return Err(Error::InvalidInput(format!(
            "{}: segmenting needs a {SAMPLE_RATE_HZ} Hz record",
            record.ctg_id
        )));
    }
    Ok(segment_series(&record.ctg_id, record.group.label(), &record.fhr, cfg))
}

/// Resampling (legacy records), denoising and windowing of one record.
pub fn process_record(record: &CtgRecord, cfg: &PreprocessConfig) -> Result<Vec<FhrSegment>> {
    let series = if record.is_legacy() {
        resample_epoch(&record.fhr)?
    } else if record.sample_rate == SAMPLE_RATE_HZ {
        record.fhr.clone()
    } else {
        return Err(Error::InvalidInput(format!(
            "{}: unsupported sample rate {}",
            record.ctg_id, record.sample_rate
        )));
    };
    let cleaned = denoise(&series, cfg);
    Ok(segment_series(&record.ctg_id, record.group.label(), &cleaned, cfg))
}

/// Population mean and standard deviation.
pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Global standardisation statistics (population SD over VALID samples).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub sd: f64,
}

impl NormStats {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid normalisation stats ({mean}, {sd})")));
        }
        Ok(Self { mean, sd })
    }

    pub fn standardize_value(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }

    pub fn unstandardize_value(&self, v: f64) -> f64 {
        v * self.sd + self.mean
    }
}

pub fn fit_norm_stats(segments: &[FhrSegment]) -> Result<NormStats> {
    let mut count = 0usize;
    let mut sum = 0.0;
    for v in segments.iter().flat_map(FhrSegment::valid_values) {
        count += 1;
        sum += v;
    }
    if count == 0 {
        return Err(Error::InsufficientData("no VALID samples to fit normalisation".into()));
    }
    let mean = sum / count as f64;
    let var = segments
        .iter()
        .flat_map(FhrSegment::valid_values)
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / count as f64;
    NormStats::new(mean, var.sqrt())
}

/// Standardised segment values; non-VALID positions hold `0.0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardized {
    pub values: Vec<f64>,
    pub mask: Vec<MaskCode>,
}

pub fn standardize(segment: &FhrSegment, stats: &NormStats) -> Standardized {
    let values = segment
        .values
        .iter()
        .zip(&segment.mask)
        .map(|(&v, &m)| if m == MaskCode::Valid { stats.standardize_value(v) } else { 0.0 })
        .collect();
    Standardized {
        values,
        mask: segment.mask.clone(),
    }
}

pub fn unstandardize(values: &[f64], stats: &NormStats) -> Vec<f64> {
    values.iter().map(|&v| stats.unstandardize_value(v)).collect()
}

fn fft_plan() -> Arc<dyn Fft<f64>> {
    static PLAN: OnceLock<Arc<dyn Fft<f64>>> = OnceLock::new();
    PLAN.get_or_init(|| FftPlanner::new().plan_fft_forward(SEGMENT_LEN)).clone()
}

/// Magnitude spectrum of the mean-filled segment scaled by its maximum.
pub fn fft_input(segment: &FhrSegment) -> Result<Vec<f64>> {
    if segment.values.len() != SEGMENT_LEN || segment.mask.len() != SEGMENT_LEN {
        return Err(Error::InvalidInput(format!("spectrum needs a {SEGMENT_LEN}-sample segment")));
    }
    let valid: Vec<f64> = segment.valid_values().collect();
    let fill = if valid.is_empty() { 0.0 } else { valid.iter().sum::<f64>() / valid.len() as f64 };
    let mut buf: Vec<Complex<f64>> = segment
        .values
        .iter()
        .zip(&segment.mask)
        .map(|(&v, &m)| Complex::new(if m == MaskCode::Valid { v } else { fill }, 0.0))
        .collect();
    fft_plan().process(&mut buf);
    let mags: Vec<f64> = buf[..SPECTRUM_LEN].iter().map(|c| c.norm()).collect();
    let max = mags.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(vec![0.0; SPECTRUM_LEN]);
    }
    Ok(mags.into_iter().map(|m| m / max).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// Split membership of every recording.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub by_ctg: BTreeMap<String, Split>,
}

/// Segments partitioned by split, preserving input order.
#[derive(Clone, Debug, Default)]
pub struct Splits {
    pub train: Vec<FhrSegment>,
    pub validation: Vec<FhrSegment>,
    pub test: Vec<FhrSegment>,
}

impl SplitAssignment {
    pub fn split_of(&self, ctg_id: &str) -> Option<Split> {
        self.by_ctg.get(ctg_id).copied()
    }

    pub fn partition(&self, segments: &[FhrSegment]) -> Result<Splits> {
        let mut out = Splits::default();
        for s in segments {
            let split = self.split_of(&s.parent_id).ok_or_else(|| {
                Error::InvalidInput(format!("segment parent {} has no split", s.parent_id))
            })?;
            match split {
                Split::Train => out.train.push(s.clone()),
                Split::Validation => out.validation.push(s.clone()),
                Split::Test => out.test.push(s.clone()),
            }
        }
        Ok(out)
    }
}

/// Assigns whole recordings to train/validation/test, separately per
/// label, so that each split receives roughly `ratios` of the segments.
pub fn split_by_ctg(segments: &[FhrSegment], ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    // ctg_id -> (label, segment count)
    let mut per_ctg: BTreeMap<&str, (u8, usize)> = BTreeMap::new();
    for s in segments {
        let entry = per_ctg.entry(&s.parent_id).or_insert((s.label, 0));
        if entry.0 != s.label {
            return Err(Error::InvalidInput(format!("{} has mixed labels", s.parent_id)));
        }
        entry.1 += 1;
    }
    if per_ctg.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "splitting needs at least 3 recordings, got {}",
            per_ctg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = SplitAssignment::default();
    for label in [0u8, 1] {
        let mut ids: Vec<(&str, usize)> = per_ctg
            .iter()
            .filter(|(_, (l, _))| *l == label)
            .map(|(id, (_, n))| (*id, *n))
            .collect();
        ids.shuffle(&mut rng);
        let total: usize = ids.iter().map(|(_, n)| n).sum();
        let targets: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
        let mut filled = [0usize; 3];
        for (id, n) in ids {
            let mut best = 0;
            for k in 1..3 {
                if targets[k] - filled[k] as f64 > targets[best] - filled[best] as f64 {
                    best = k;
                }
            }
            filled[best] += n;
            assignment.by_ctg.insert(id.to_string(), Split::ALL[best]);
        }
    }
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Group;

    fn series(values: &[f64]) -> Vec<Option<f64>> {
        values.iter().map(|&v| Some(v)).collect()
    }

    #[test]
    fn resample_lengths_and_constants() {
        let out = resample_epoch(&series(&[140.0; 40])).unwrap();
        assert_eq!(out.len(), 600);
        assert!(out.iter().all(|v| (v.unwrap() - 140.0).abs() < 1e-12));
        assert!(resample_epoch(&[]).is_err());
    }

    #[test]
    fn resample_ramp_matches_linear_interpolation() {
        let epochs: Vec<f64> = (0..10).map(|i| 120.0 + 30.0 * i as f64 / 9.0).collect();
        let out = resample_epoch(&series(&epochs)).unwrap();
        // Interpolation is exact linear until the last epoch at k = 135.
        for (k, v) in out.iter().enumerate().take(133).skip(2) {
            let analytic = 120.0 + 30.0 * (k as f64 / 15.0) / 9.0;
            assert!((v.unwrap() - analytic).abs() < 0.5, "k={k}");
        }
    }

    #[test]
    fn resample_propagates_missing_epochs() {
        let mut epochs = series(&[140.0; 6]);
        epochs[3] = None;
        let out = resample_epoch(&epochs).unwrap();
        // Spans (2,3) and (3,4) interpolate through the missing epoch.
        assert!(out[31..60].iter().all(Option::is_none));
        assert!(out[60..].iter().all(Option::is_some));
        assert!(out[..31].iter().all(Option::is_some));
    }

    #[test]
    fn denoise_rules() {
        let cfg = PreprocessConfig::default();
        let clean = series(&[140.0, 142.0, 141.5, 139.0, 138.0]);
        assert_eq!(denoise(&clean, &cfg), clean);

        let mut x = clean.clone();
        x[2] = Some(300.0);
        assert_eq!(denoise(&x, &cfg)[2], None);

        let spike = series(&[140.0, 140.0, 180.0, 140.0, 140.0]);
        assert_eq!(denoise(&spike, &cfg), series(&[140.0; 5]));
    }

    fn wavy(n: usize) -> Vec<Option<f64>> {
        (0..n).map(|k| Some(140.0 + 5.0 * (k as f64 * 0.05).sin())).collect()
    }

    #[test]
    fn window_offsets_for_full_record() {
        let segs = segment_series("a", 0, &wavy(3600), &PreprocessConfig::default());
        let starts: Vec<f64> = segs.iter().map(|s| s.start_offset * 4.0).collect();
        assert_eq!(starts, vec![0.0, 600.0, 1200.0, 1800.0, 2400.0]);
    }

    #[test]
    fn trailing_window_is_padded() {
        let segs = segment_series("a", 0, &wavy(2100), &PreprocessConfig::default());
        let starts: Vec<f64> = segs.iter().map(|s| s.start_offset * 4.0).collect();
        assert_eq!(starts, vec![0.0, 600.0, 1200.0]);
        let last = &segs[2];
        assert_eq!(last.content_len(), 900);
        assert_eq!(last.mask.iter().filter(|&&m| m == MaskCode::Pad).count(), 300);
        for s in &segs {
            s.validate().unwrap();
        }
        assert!(segment_series("a", 0, &wavy(899), &PreprocessConfig::default()).is_empty());
    }

    #[test]
    fn missing_threshold_and_flatline_exclusion() {
        let cfg = PreprocessConfig::default();
        let mut x = wavy(1200);
        x[..301].iter_mut().for_each(|v| *v = None);
        assert!(segment_series("a", 0, &x, &cfg).is_empty());
        let mut x = wavy(1200);
        x[..300].iter_mut().for_each(|v| *v = None);
        assert_eq!(segment_series("a", 0, &x, &cfg).len(), 1);

        let flat = series(&[140.0; 1200]);
        assert!(segment_series("a", 0, &flat, &cfg).is_empty());
        // SD >= 1 but range < 5 is still excluded.
        let narrow: Vec<Option<f64>> = (0..1200).map(|k| Some(if k % 2 == 0 { 138.5 } else { 141.5 })).collect();
        assert!(segment_series("a", 0, &narrow, &cfg).is_empty());
    }

    fn segment_with(values: Vec<f64>, mask: Vec<MaskCode>) -> FhrSegment {
        FhrSegment {
            parent_id: "p".into(),
            start_offset: 0.0,
            values,
            mask,
            label: 0,
        }
    }

    #[test]
    fn norm_stats_rules() {
        let s = segment_with(vec![140.0; 4], vec![MaskCode::Valid; 4]);
        assert!(fit_norm_stats(&[s]).is_err());
        let s = segment_with(vec![130.0, 150.0], vec![MaskCode::Valid; 2]);
        assert_eq!(fit_norm_stats(&[s]).unwrap(), NormStats { mean: 140.0, sd: 10.0 });
        let s = segment_with(vec![140.0, 0.0, 160.0], vec![MaskCode::Valid, MaskCode::Missing, MaskCode::Valid]);
        assert_eq!(fit_norm_stats(&[s]).unwrap().mean, 150.0);
        let s = segment_with(vec![0.0; 2], vec![MaskCode::Missing; 2]);
        assert!(fit_norm_stats(&[s]).is_err());
    }

    #[test]
    fn standardize_maps_and_keeps_mask() {
        let stats = NormStats::new(140.0, 10.0).unwrap();
        let mask = vec![MaskCode::Valid, MaskCode::Valid, MaskCode::Missing, MaskCode::Pad];
        let s = segment_with(vec![140.0, 150.0, 0.0, 0.0], mask.clone());
        let z = standardize(&s, &stats);
        assert_eq!(z.values[0], 0.0);
        assert_eq!(z.values[1], 1.0);
        assert_eq!(z.mask, mask);
        let back = unstandardize(&z.values, &stats);
        assert!((back[1] - 150.0).abs() < 1e-9);
    }

    fn full(values: Vec<f64>) -> FhrSegment {
        segment_with(values, vec![MaskCode::Valid; SEGMENT_LEN])
    }

    #[test]
    fn spectrum_of_constant_and_sinusoid() {
        let c = fft_input(&full(vec![140.0; SEGMENT_LEN])).unwrap();
        assert_eq!(c.len(), SPECTRUM_LEN);
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|&v| v < 1e-9));

        let sine: Vec<f64> = (0..SEGMENT_LEN)
            .map(|k| (std::f64::consts::TAU * 0.1 * k as f64 / 4.0).sin())
            .collect();
        let s = fft_input(&full(sine)).unwrap();
        let argmax = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 30);
        assert!((s[30] - 1.0).abs() < 1e-12);
        assert!(s.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn spectrum_all_zero_maps_to_zero() {
        let z = fft_input(&full(vec![0.0; SEGMENT_LEN])).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    fn labelled(id: &str, label: u8, n: usize) -> Vec<FhrSegment> {
        (0..n)
            .map(|k| FhrSegment {
                parent_id: id.into(),
                start_offset: k as f64 * 150.0,
                values: vec![0.0; 2],
                mask: vec![MaskCode::Valid; 2],
                label,
            })
            .collect()
    }

    #[test]
    fn six_equal_records_split_four_one_one() {
        let segs: Vec<FhrSegment> = (0..6).flat_map(|i| labelled(&format!("r{i}"), 0, 10)).collect();
        let a = split_by_ctg(&segs, [4.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0], 3).unwrap();
        let count = |s: Split| a.by_ctg.values().filter(|&&x| x == s).count();
        assert_eq!((count(Split::Train), count(Split::Validation), count(Split::Test)), (4, 1, 1));
    }

    #[test]
    fn split_rejects_fewer_than_three_records() {
        let segs: Vec<FhrSegment> = (0..2).flat_map(|i| labelled(&format!("r{i}"), 0, 3)).collect();
        assert!(split_by_ctg(&segs, [0.6, 0.2, 0.2], 1).is_err());
    }

    #[test]
    fn process_record_handles_legacy_rate() {
        let record = CtgRecord {
            ctg_id: "legacy".into(),
            group: Group::Npo,
            conditions: vec![],
            gestational_age: 30.0,
            sample_rate: 1.0 / 3.75,
            fhr: (0..160).map(|i| Some(140.0 + 6.0 * (i as f64 * 0.4).sin())).collect(),
        };
        let segs = process_record(&record, &PreprocessConfig::default()).unwrap();
        // 160 epochs -> 2400 samples -> windows at 0, 600, 1200.
        assert_eq!(segs.len(), 3);
        assert!(segment_record(&record, &PreprocessConfig::default()).is_err());
    }
}
