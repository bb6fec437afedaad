//! Labelled synthetic cardiotocography corpus.
//!
//! Normal-outcome (NPO) records carry full short- and long-scale
//! variability and frequent accelerations. Adverse-outcome (APO) records
//! scale variability down, accelerate less often, decelerate more often
//! and sit on a slightly raised baseline. The two classes overlap but are
//! separable on the segment standard deviation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Native sample rate of the pipeline.
pub const SAMPLE_RATE_HZ: f64 = 4.0;
/// Seconds per sample in the legacy epoch format.
pub const LEGACY_EPOCH_SECONDS: f64 = 3.75;
/// Output samples per legacy epoch at [`SAMPLE_RATE_HZ`].
pub const SAMPLES_PER_EPOCH: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "NPO")]
    Npo,
    #[serde(rename = "APO")]
    Apo,
}

impl Group {
    pub fn label(self) -> u8 {
        match self {
            Group::Npo => 0,
            Group::Apo => 1,
        }
    }
}

/// Adverse-outcome condition categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Iugr,
    Acidaemia,
    LowApgars,
    Stillbirth,
    EarlyDeath,
    Asphyxia,
    Hie,
    NeonatalSepsis,
    PerinatalInfection,
    RespiratoryCondition,
    NeonatalCare,
}

impl Condition {
    pub const ALL: [Condition; 11] = [
        Condition::Iugr,
        Condition::Acidaemia,
        Condition::LowApgars,
        Condition::Stillbirth,
        Condition::EarlyDeath,
        Condition::Asphyxia,
        Condition::Hie,
        Condition::NeonatalSepsis,
        Condition::PerinatalInfection,
        Condition::RespiratoryCondition,
        Condition::NeonatalCare,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Iugr => "iugr",
            Condition::Acidaemia => "acidaemia",
            Condition::LowApgars => "low_apgars",
            Condition::Stillbirth => "stillbirth",
            Condition::EarlyDeath => "early_death",
            Condition::Asphyxia => "asphyxia",
            Condition::Hie => "hie",
            Condition::NeonatalSepsis => "neonatal_sepsis",
            Condition::PerinatalInfection => "perinatal_infection",
            Condition::RespiratoryCondition => "respiratory_condition",
            Condition::NeonatalCare => "neonatal_care",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown condition tag `{s}`")))
    }
}

/// One recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtgRecord {
    pub ctg_id: String,
    pub group: Group,
    pub conditions: Vec<Condition>,
    pub gestational_age: f64,
    pub sample_rate: f64,
    pub fhr: Vec<Option<f64>>,
}

impl CtgRecord {
    pub fn is_legacy(&self) -> bool {
        (self.sample_rate - 1.0 / LEGACY_EPOCH_SECONDS).abs() < 1e-9
    }

    pub fn validate(&self) -> Result<()> {
        match self.group {
            Group::Npo if !self.conditions.is_empty() => {
                return Err(Error::InvalidInput(format!("{}: NPO record with conditions", self.ctg_id)))
            }
            Group::Apo if self.conditions.is_empty() => {
                return Err(Error::InvalidInput(format!("{}: APO record without conditions", self.ctg_id)))
            }
            _ => {}
        }
        if !(self.sample_rate == SAMPLE_RATE_HZ || self.is_legacy()) {
            return Err(Error::InvalidInput(format!(
                "{}: unsupported sample rate {}",
                self.ctg_id, self.sample_rate
            )));
        }
        if let Some(v) = self.fhr.iter().flatten().find(|v| !(30.0..=240.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("{}: sample {v} outside [30, 240] bpm", self.ctg_id)));
        }
        Ok(())
    }
}

/// Shape parameters of the generator. Rates are events per 10 minutes,
/// durations in seconds, amplitudes in bpm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub baseline_mean: f64,
    pub baseline_sd: f64,
    pub apo_baseline_offset: (f64, f64),
    pub apo_variability_scale: (f64, f64),
    pub oscillation_amplitude: (f64, f64),
    pub oscillation_period: (f64, f64),
    pub npo_accel_rate: f64,
    pub apo_accel_rate: f64,
    pub npo_decel_rate: f64,
    pub apo_decel_rate: f64,
    pub burst_seconds: (f64, f64),
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            baseline_mean: 140.0,
            baseline_sd: 10.0,
            apo_baseline_offset: (6.0, 16.0),
            apo_variability_scale: (0.2, 0.6),
            oscillation_amplitude: (1.5, 3.5),
            oscillation_period: (15.0, 90.0),
            npo_accel_rate: 4.0,
            apo_accel_rate: 0.5,
            npo_decel_rate: 0.1,
            apo_decel_rate: 0.6,
            burst_seconds: (5.0, 60.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_npo_records: usize,
    pub n_apo_records: usize,
    pub record_minutes: f64,
    pub sample_rate: f64,
    pub seed: u64,
    pub condition_mix: BTreeMap<Condition, f64>,
    pub missing_burst_rate: f64,
    pub legacy_epoch_fraction: f64,
    /// APO records carrying any of these tags get the flattest traces: the
    /// lowest variability scale and no accelerations or decelerations.
    pub severe_conditions: Vec<Condition>,
    pub params: GeneratorParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let p = 1.0 / Condition::ALL.len() as f64;
        Self {
            n_npo_records: 200,
            n_apo_records: 200,
            record_minutes: 30.0,
            sample_rate: SAMPLE_RATE_HZ,
            seed: 1,
            condition_mix: Condition::ALL.into_iter().map(|c| (c, p)).collect(),
            missing_burst_rate: 0.5,
            legacy_epoch_fraction: 0.1,
            severe_conditions: Vec::new(),
            params: GeneratorParams::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_npo_records + self.n_apo_records == 0 {
            return bad("corpus must contain at least one record".into());
        }
        if self.record_minutes < 5.0 {
            return bad(format!("record_minutes {} < 5", self.record_minutes));
        }
        if self.sample_rate != SAMPLE_RATE_HZ {
            return bad(format!("sample_rate must be {SAMPLE_RATE_HZ} Hz"));
        }
        if !(0.0..=1.0).contains(&self.legacy_epoch_fraction) {
            return bad("legacy_epoch_fraction outside [0, 1]".into());
        }
        if !(self.missing_burst_rate >= 0.0 && self.missing_burst_rate.is_finite()) {
            return bad("missing_burst_rate must be non-negative".into());
        }
        if self.condition_mix.values().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("condition probabilities must lie in [0, 1]".into());
        }
        let total: f64 = self.condition_mix.values().sum();
        if self.n_apo_records > 0 && (total - 1.0).abs() > 1e-9 {
            return bad(format!("condition_mix sums to {total}, expected 1"));
        }
        let (lo, hi) = self.params.apo_variability_scale;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return bad("apo_variability_scale must satisfy 0 < lo <= hi <= 1".into());
        }
        Ok(())
    }

    fn total(&self) -> usize {
        self.n_npo_records + self.n_apo_records
    }
}

/// Generates the corpus. Record `i` draws from its own random stream
/// derived from `(seed, i)`, so output does not depend on generation order.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Vec<CtgRecord>> {
    cfg.validate()?;
    let total = cfg.total();
    let n_legacy = (cfg.legacy_epoch_fraction * total as f64).round() as usize;
    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    order.shuffle(&mut rng);
    let mut legacy = vec![false; total];
    for &i in &order[..n_legacy] {
        legacy[i] = true;
    }
    (0..total)
        .map(|i| {
            let group = if i < cfg.n_npo_records { Group::Npo } else { Group::Apo };
            generate_record(cfg, i, group, legacy[i])
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0)
}

fn sample_conditions(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Condition> {
    // One primary tag from the categorical mix, then independent extra tags.
    let mut tags = Vec::new();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut primary = None;
    for (&c, &p) in &cfg.condition_mix {
        acc += p;
        if u < acc {
            primary = Some(c);
            break;
        }
    }
    let primary = primary.or_else(|| cfg.condition_mix.keys().next_back().copied());
    tags.extend(primary);
    for (&c, &p) in &cfg.condition_mix {
        if Some(c) != primary && rng.random::<f64>() < p {
            tags.push(c);
        }
    }
    tags.sort();
    tags
}

/// Plateau-shaped transient of the given duration: linear ramps over the
/// first and last fifth.
fn transient(t: f64, duration: f64) -> f64 {
    if t <= 0.0 || t >= duration {
        return 0.0;
    }
    let edge = 0.2 * duration;
    (t.min(duration - t) / edge).min(1.0)
}

fn generate_record(cfg: &SynthConfig, index: usize, group: Group, legacy: bool) -> Result<CtgRecord> {
    let p = &cfg.params;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);

    let n = (cfg.record_minutes * 60.0 * SAMPLE_RATE_HZ).round() as usize;
    let duration_s = n as f64 / SAMPLE_RATE_HZ;
    let gestational_age = (uniform(&mut rng, (27.0, 36.0)) * 10.0).round() / 10.0;

    let conditions = match group {
        Group::Npo => Vec::new(),
        Group::Apo => sample_conditions(cfg, &mut rng),
    };
    let severe = conditions.iter().any(|c| cfg.severe_conditions.contains(c));
    let (scale, accel_rate, decel_rate) = match group {
        Group::Npo => (1.0, p.npo_accel_rate, p.npo_decel_rate),
        Group::Apo if severe => (p.apo_variability_scale.0, 0.0, 0.0),
        Group::Apo => (uniform(&mut rng, p.apo_variability_scale), p.apo_accel_rate, p.apo_decel_rate),
    };

    let normal = Normal::new(p.baseline_mean, p.baseline_sd)
        .map_err(|e| Error::Config(format!("baseline distribution: {e}")))?;
    let mut baseline = normal.sample(&mut rng).clamp(105.0, 175.0);
    if group == Group::Apo {
        baseline += uniform(&mut rng, p.apo_baseline_offset);
    }

    let drift: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                uniform(&mut rng, (0.0, 4.0)),
                uniform(&mut rng, (600.0, 2400.0)),
                uniform(&mut rng, (0.0, std::f64::consts::TAU)),
            )
        })
        .collect();
    let oscillations: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                uniform(&mut rng, p.oscillation_amplitude) * scale,
                uniform(&mut rng, p.oscillation_period),
                uniform(&mut rng, (0.0, std::f64::consts::TAU)),
            )
        })
        .collect();

    let minutes_factor = cfg.record_minutes / 10.0;
    let accels: Vec<(f64, f64, f64)> = (0..poisson(&mut rng, accel_rate * minutes_factor))
        .map(|_| {
            (
                uniform(&mut rng, (0.0, duration_s)),
                uniform(&mut rng, (15.0, 25.0)),
                uniform(&mut rng, (15.0, 45.0)),
            )
        })
        .collect();
    let decels: Vec<(f64, f64, f64)> = (0..poisson(&mut rng, decel_rate * minutes_factor))
        .map(|_| {
            (
                uniform(&mut rng, (0.0, duration_s)),
                uniform(&mut rng, (15.0, 35.0)),
                uniform(&mut rng, (20.0, 60.0)),
            )
        })
        .collect();

    let innovation = Normal::new(0.0, 0.5 * scale).map_err(|e| Error::Config(e.to_string()))?;
    let jitter = Normal::new(0.0, 0.3).map_err(|e| Error::Config(e.to_string()))?;
    let mut ar = 0.0;
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / SAMPLE_RATE_HZ;
        ar = 0.95 * ar + innovation.sample(&mut rng);
        let mut v = baseline + ar + jitter.sample(&mut rng);
        for &(a, period, phase) in drift.iter().chain(&oscillations) {
            v += a * (std::f64::consts::TAU * t / period + phase).sin();
        }
        for &(start, amp, dur) in &accels {
            v += amp * transient(t - start, dur);
        }
        for &(start, amp, dur) in &decels {
            v -= amp * transient(t - start, dur);
        }
        values.push(Some(((v.clamp(30.0, 240.0)) * 4.0).round() / 4.0));
    }

    for _ in 0..poisson(&mut rng, cfg.missing_burst_rate * minutes_factor) {
        let len = (uniform(&mut rng, p.burst_seconds) * SAMPLE_RATE_HZ).round() as usize;
        let start = rng.random_range(0..n);
        for v in values.iter_mut().skip(start).take(len) {
            *v = None;
        }
    }

    let (fhr, sample_rate) = if legacy {
        (to_epochs(&values), 1.0 / LEGACY_EPOCH_SECONDS)
    } else {
        (values, SAMPLE_RATE_HZ)
    };

    Ok(CtgRecord {
        ctg_id: format!("ctg-{index:05}"),
        group,
        conditions,
        gestational_age,
        sample_rate,
        fhr,
    })
}

/// Averages 4 Hz samples into 3.75 s epochs; an epoch with fewer than half
/// of its samples present is missing.
fn to_epochs(values: &[Option<f64>]) -> Vec<Option<f64>> {
    values
        .chunks_exact(SAMPLES_PER_EPOCH)
        .map(|chunk| {
            let present: Vec<f64> = chunk.iter().flatten().copied().collect();
            (present.len() * 2 >= SAMPLES_PER_EPOCH)
                .then(|| (present.iter().sum::<f64>() / present.len() as f64 * 4.0).round() / 4.0)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub counts: BTreeMap<Group, usize>,
    pub mean_gestational_age: f64,
    pub missing_percent: f64,
}

pub fn corpus_summary(records: &[CtgRecord]) -> Result<CorpusSummary> {
    if records.is_empty() {
        return Err(Error::InvalidInput("empty corpus".into()));
    }
    let mut counts = BTreeMap::from([(Group::Npo, 0), (Group::Apo, 0)]);
    for r in records {
        *counts.entry(r.group).or_default() += 1;
    }
    let mean_gestational_age =
        records.iter().map(|r| r.gestational_age).sum::<f64>() / records.len() as f64;
    let total: usize = records.iter().map(|r| r.fhr.len()).sum();
    let missing: usize = records.iter().map(|r| r.fhr.iter().filter(|v| v.is_none()).count()).sum();
    let missing_percent = if total == 0 { 0.0 } else { 100.0 * missing as f64 / total as f64 };
    Ok(CorpusSummary {
        counts,
        mean_gestational_age,
        missing_percent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_npo_records: 6,
            n_apo_records: 6,
            record_minutes: 10.0,
            seed,
            legacy_epoch_fraction: 0.25,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = serde_json::to_string(&generate_corpus(&small(1)).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_corpus(&small(1)).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&generate_corpus(&small(2)).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn npo_only_corpus_has_no_conditions() {
        let cfg = SynthConfig { n_apo_records: 0, ..small(3) };
        let corpus = generate_corpus(&cfg).unwrap();
        assert_eq!(corpus.len(), 6);
        assert!(corpus.iter().all(|r| r.group == Group::Npo && r.conditions.is_empty()));
    }

    #[test]
    fn records_satisfy_invariants() {
        for r in generate_corpus(&small(4)).unwrap() {
            r.validate().unwrap();
            assert!((27.0..=36.0).contains(&r.gestational_age));
        }
    }

    #[test]
    fn legacy_count_matches_fraction() {
        let cfg = SynthConfig { legacy_epoch_fraction: 0.3, ..small(5) };
        let corpus = generate_corpus(&cfg).unwrap();
        let legacy = corpus.iter().filter(|r| r.is_legacy()).count();
        let expected = 0.3 * corpus.len() as f64;
        assert!((legacy as f64 - expected).abs() <= 2.0);
        for r in corpus.iter().filter(|r| r.is_legacy()) {
            assert_eq!(r.fhr.len(), 10 * 60 * 4 / 15);
        }
    }

    #[test]
    fn rejects_empty_and_invalid_configs() {
        let cfg = SynthConfig { n_npo_records: 0, n_apo_records: 0, ..Default::default() };
        assert!(generate_corpus(&cfg).is_err());
        let cfg = SynthConfig { record_minutes: 4.0, ..Default::default() };
        assert!(generate_corpus(&cfg).is_err());
        let mut cfg = SynthConfig::default();
        cfg.condition_mix.insert(Condition::Iugr, 0.9);
        assert!(generate_corpus(&cfg).is_err());
    }

    fn record(group: Group, fhr: Vec<Option<f64>>) -> CtgRecord {
        CtgRecord {
            ctg_id: "x".into(),
            group,
            conditions: if group == Group::Apo { vec![Condition::Hie] } else { vec![] },
            gestational_age: 30.0,
            sample_rate: 4.0,
            fhr,
        }
    }

    #[test]
    fn summary_counts_and_missing() {
        let clean = vec![Some(140.0); 1200];
        let mut corpus: Vec<_> = (0..2).map(|_| record(Group::Npo, clean.clone())).collect();
        corpus.extend((0..3).map(|_| record(Group::Apo, clean.clone())));
        let s = corpus_summary(&corpus).unwrap();
        assert_eq!(s.counts[&Group::Npo], 2);
        assert_eq!(s.counts[&Group::Apo], 3);
        assert_eq!(s.missing_percent, 0.0);

        // 30 missing of 10 x 1200 samples.
        let mut corpus: Vec<_> = (0..9).map(|_| record(Group::Npo, clean.clone())).collect();
        let mut holed = clean.clone();
        holed[100..130].iter_mut().for_each(|v| *v = None);
        corpus.push(record(Group::Npo, holed));
        let s = corpus_summary(&corpus).unwrap();
        assert!((s.missing_percent - 0.25).abs() < 1e-12);
        assert!(corpus_summary(&[]).is_err());
    }
}
