//! Discrimination, calibration and aggregation metrics, and the report
//! assembled from a trained model on a labelled segment set.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Inference, Model, SegmentInput};
use crate::preprocess::{FhrSegment, MaskCode, SEGMENT_STRIDE};
use crate::synth::{Condition, SAMPLE_RATE_HZ};

fn class_counts(labels: &[u8]) -> Result<(u64, u64)> {
    let mut pos = 0u64;
    let mut neg = 0u64;
    for &l in labels {
        match l {
            0 => neg += 1,
            1 => pos += 1,
            _ => return Err(Error::InvalidInput(format!("label {l} not in {{0, 1}}"))),
        }
    }
    Ok((pos, neg))
}

fn check_pair(scores: &[f64], labels: &[u8]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::Mismatch(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    let (pos, neg) = class_counts(labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::InsufficientData("both classes must be present".into()));
    }
    Ok((pos, neg))
}

fn sorted_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    idx
}

/// Mann-Whitney AUROC: `(concordant + ties / 2) / (n_pos * n_neg)`.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_pair(scores, labels)?;
    let idx = sorted_order(scores);
    let mut concordant = 0u64;
    let mut ties = 0u64;
    let mut neg_below = 0u64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] == 1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        concordant += p * neg_below;
        ties += p * n;
        neg_below += n;
        i = j;
    }
    Ok((2 * concordant + ties) as f64 / (2 * pos * neg) as f64)
}

/// Percentile bootstrap interval (2.5%, 97.5%) with resampling over
/// clusters: every resample draws cluster ids with replacement and keeps
/// all members. Pass one cluster per item for plain resampling. Resamples
/// on which `metric` fails (for example a single class) are redrawn.
pub fn bootstrap_ci<F>(
    metric: F,
    scores: &[f64],
    labels: &[u8],
    clusters: &[usize],
    b: usize,
    seed: u64,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64], &[u8]) -> Result<f64>,
{
    if scores.len() != labels.len() || clusters.len() != scores.len() {
        return Err(Error::Mismatch("scores, labels and clusters must align".into()));
    }
    if b == 0 {
        return Err(Error::Config("bootstrap needs at least one resample".into()));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in clusters.iter().enumerate() {
        members.entry(c).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = members.into_values().collect();
    if groups.is_empty() {
        return Err(Error::InsufficientData("nothing to resample".into()));
    }
    let mut values = Vec::with_capacity(b);
    let (mut s, mut l) = (Vec::new(), Vec::new());
    for k in 0..b {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut attempts = 0;
        loop {
            s.clear();
            l.clear();
            for _ in 0..groups.len() {
                for &i in &groups[rng.random_range(0..groups.len())] {
                    s.push(scores[i]);
                    l.push(labels[i]);
                }
            }
            if let Ok(v) = metric(&s, &l) {
                values.push(v);
                break;
            }
            attempts += 1;
            if attempts >= 1000 {
                return Err(Error::InsufficientData("bootstrap resamples are persistently degenerate".into()));
            }
        }
    }
    values.sort_by(f64::total_cmp);
    Ok((quantile_sorted(&values, 0.025), quantile_sorted(&values, 0.975)))
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Expected calibration error over `bins` equal-width bins on [0, 1].
pub fn ece(scores: &[f64], labels: &[u8], bins: usize) -> Result<f64> {
    if scores.is_empty() || bins == 0 {
        return Err(Error::InsufficientData("ece needs scores and at least one bin".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Mismatch(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    class_counts(labels)?;
    let mut count = vec![0usize; bins];
    let mut pos = vec![0.0; bins];
    let mut conf = vec![0.0; bins];
    for (&s, &l) in scores.iter().zip(labels) {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain {
                op: "ece",
                detail: format!("score {s} outside [0, 1]"),
            });
        }
        let k = ((s * bins as f64).floor() as usize).min(bins - 1);
        count[k] += 1;
        pos[k] += l as f64;
        conf[k] += s;
    }
    let n = scores.len() as f64;
    Ok((0..bins)
        .filter(|&k| count[k] > 0)
        .map(|k| {
            let c = count[k] as f64;
            (c / n) * (pos[k] / c - conf[k] / c).abs()
        })
        .sum())
}

/// Threshold maximising `TPR - FPR` over midpoints of consecutive unique
/// scores (positive when `score >= t`); ties go to the larger threshold.
/// With a single unique score that score is returned.
pub fn youden(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_pair(scores, labels)?;
    let idx = sorted_order(scores);
    // groups of equal scores, ascending: (score, positives, negatives)
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for &i in &idx {
        let (p, n) = if labels[i] == 1 { (1, 0) } else { (0, 1) };
        match groups.last_mut() {
            Some(g) if g.0 == scores[i] => {
                g.1 += p;
                g.2 += n;
            }
            _ => groups.push((scores[i], p, n)),
        }
    }
    if groups.len() < 2 {
        return Ok(groups[0].0);
    }
    let (mut tp, mut fp) = (pos, neg);
    let mut best: Option<(i128, f64)> = None;
    for k in 0..groups.len() - 1 {
        tp -= groups[k].1;
        fp -= groups[k].2;
        let t = 0.5 * (groups[k].0 + groups[k + 1].0);
        // TPR - FPR scaled by pos * neg, exact in integers
        let j = tp as i128 * neg as i128 - fp as i128 * pos as i128;
        if best.is_none_or(|(bj, _)| j >= bj) {
            best = Some((j, t));
        }
    }
    Ok(best.map(|(_, t)| t).unwrap_or(groups[0].0))
}

/// Confusion-matrix summary at a threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

pub fn operating_point(scores: &[f64], labels: &[u8], threshold: f64) -> Result<OperatingPoint> {
    let (pos, neg) = check_pair(scores, labels)?;
    let mut tp = 0u64;
    let mut fp = 0u64;
    for (&s, &l) in scores.iter().zip(labels) {
        if s >= threshold {
            if l == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let fn_ = pos - tp;
    let tn = neg - fp;
    let denom = 2 * tp + fp + fn_;
    Ok(OperatingPoint {
        threshold,
        sensitivity: tp as f64 / pos as f64,
        specificity: tn as f64 / neg as f64,
        f1: if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 },
        tp,
        fp,
        tn,
        fn_,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-recording summary of segment scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseScore {
    pub ctg_id: String,
    pub label: u8,
    pub segments: usize,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Aggregates segment scores per recording, ordered by `ctg_id`.
pub fn aggregate_case(ctg_ids: &[String], labels: &[u8], scores: &[f64]) -> Result<Vec<CaseScore>> {
    if ctg_ids.len() != scores.len() || labels.len() != scores.len() {
        return Err(Error::Mismatch("ctg ids, labels and scores must align".into()));
    }
    let mut by_case: BTreeMap<&str, (u8, Vec<f64>)> = BTreeMap::new();
    for ((id, &l), &s) in ctg_ids.iter().zip(labels).zip(scores) {
        let e = by_case.entry(id).or_insert((l, Vec::new()));
        if e.0 != l {
            return Err(Error::InvalidInput(format!("{id} has mixed labels")));
        }
        e.1.push(s);
    }
    Ok(by_case
        .into_iter()
        .map(|(id, (label, mut v))| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            CaseScore {
                ctg_id: id.to_string(),
                label,
                segments: n,
                median: median(&mut v),
                mean,
                min,
                max,
            }
        })
        .collect())
}

/// AUROC with its bootstrap interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionAuroc {
    pub cases: usize,
    pub segment_auroc: Estimate,
    pub case_auroc: Estimate,
}

/// One scored segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSegment {
    pub ctg_id: String,
    pub start_offset: f64,
    pub label: u8,
    pub score: f64,
}

fn cluster_ids(ids: &[&str]) -> Vec<usize> {
    let mut map: BTreeMap<&str, usize> = BTreeMap::new();
    ids.iter()
        .map(|id| {
            let next = map.len();
            *map.entry(id).or_insert(next)
        })
        .collect()
}

/// Segment- and case-level AUROC with clustered bootstrap intervals.
pub fn segment_and_case_auroc(segments: &[ScoredSegment], b: usize, seed: u64) -> Result<(Estimate, Estimate)> {
    let scores: Vec<f64> = segments.iter().map(|s| s.score).collect();
    let labels: Vec<u8> = segments.iter().map(|s| s.label).collect();
    let ids: Vec<&str> = segments.iter().map(|s| s.ctg_id.as_str()).collect();
    let seg_value = auroc(&scores, &labels)?;
    let (lo, hi) = bootstrap_ci(auroc, &scores, &labels, &cluster_ids(&ids), b, seed)?;
    let seg = Estimate {
        value: seg_value,
        ci_low: lo.min(seg_value),
        ci_high: hi.max(seg_value),
    };
    let owned: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
    let cases = aggregate_case(&owned, &labels, &scores)?;
    let cs: Vec<f64> = cases.iter().map(|c| c.median).collect();
    let cl: Vec<u8> = cases.iter().map(|c| c.label).collect();
    let case_value = auroc(&cs, &cl)?;
    let one_each: Vec<usize> = (0..cs.len()).collect();
    let (lo, hi) = bootstrap_ci(auroc, &cs, &cl, &one_each, b, seed)?;
    let case = Estimate {
        value: case_value,
        ci_low: lo.min(case_value),
        ci_high: hi.max(case_value),
    };
    Ok((seg, case))
}

/// AUROC of each condition's APO cases against all NPO cases. Conditions
/// with no APO case present map to `None`.
pub fn per_condition_auroc(
    segments: &[ScoredSegment],
    conditions: &BTreeMap<String, Vec<Condition>>,
    b: usize,
    seed: u64,
) -> Result<BTreeMap<Condition, Option<ConditionAuroc>>> {
    let mut out = BTreeMap::new();
    for cond in Condition::ALL {
        let has = |id: &str| conditions.get(id).is_some_and(|c| c.contains(&cond));
        let subset: Vec<ScoredSegment> = segments
            .iter()
            .filter(|s| s.label == 0 || has(&s.ctg_id))
            .cloned()
            .collect();
        let cases: std::collections::BTreeSet<&str> = subset
            .iter()
            .filter(|s| s.label == 1)
            .map(|s| s.ctg_id.as_str())
            .collect();
        let entry = if cases.is_empty() || subset.iter().all(|s| s.label == 1) {
            None
        } else {
            let (seg, case) = segment_and_case_auroc(&subset, b, seed)?;
            Some(ConditionAuroc {
                cases: cases.len(),
                segment_auroc: seg,
                case_auroc: case,
            })
        };
        out.insert(cond, entry);
    }
    Ok(out)
}

/// Mean score over one 2.5-minute interval of a recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalScore {
    pub start_sample: usize,
    pub end_sample: usize,
    /// `None` when no segment overlaps the interval.
    pub mean_score: Option<f64>,
    pub segments: usize,
}

/// Sample span `[start, end)` of a segment's non-PAD content.
pub fn segment_span(segment: &FhrSegment) -> (usize, usize) {
    let start = (segment.start_offset * SAMPLE_RATE_HZ).round() as usize;
    (start, start + segment.content_len())
}

/// Per-interval mean of the scores of all segments whose content overlaps
/// the interval. `spans` are sample ranges `[start, end)`.
pub fn interval_scores(record_len: usize, spans: &[(usize, usize)], scores: &[f64]) -> Result<Vec<IntervalScore>> {
    if spans.len() != scores.len() {
        return Err(Error::Mismatch(format!("{} spans for {} scores", spans.len(), scores.len())));
    }
    let n = record_len.div_ceil(SEGMENT_STRIDE);
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (&(s, e), &score) in spans.iter().zip(scores) {
        if e <= s {
            continue;
        }
        let first = s / SEGMENT_STRIDE;
        let last = ((e - 1) / SEGMENT_STRIDE).min(n.saturating_sub(1));
        for k in first..=last {
            sum[k] += score;
            count[k] += 1;
        }
    }
    Ok((0..n)
        .map(|k| IntervalScore {
            start_sample: k * SEGMENT_STRIDE,
            end_sample: ((k + 1) * SEGMENT_STRIDE).min(record_len),
            mean_score: (count[k] > 0).then(|| sum[k] / count[k] as f64),
            segments: count[k],
        })
        .collect())
}

/// Per-interval scores and the sample-wise mean reconstruction (bpm) over
/// all segments of one recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub ctg_id: String,
    pub intervals: Vec<IntervalScore>,
    /// Reconstruction averaged over overlapping segments, `None` where no
    /// segment covers a VALID sample.
    pub reconstruction: Vec<Option<f64>>,
}

/// Scores and reconstructs every segment of one recording.
pub fn trace_report(model: &Model, record_len: usize, segments: &[FhrSegment]) -> Result<TraceReport> {
    let ctg_id = segments.first().map(|s| s.parent_id.clone()).unwrap_or_default();
    let mut session = model.session();
    let mut spans = Vec::with_capacity(segments.len());
    let mut scores = Vec::with_capacity(segments.len());
    let mut sum = vec![0.0; record_len];
    let mut count = vec![0usize; record_len];
    for seg in segments {
        if seg.parent_id != ctg_id {
            return Err(Error::InvalidInput("trace segments must share one recording".into()));
        }
        let inf = session.infer(&SegmentInput::prepare(seg, &model.norm)?)?;
        let (s, e) = segment_span(seg);
        for (i, pos) in (s..e.min(record_len)).enumerate() {
            if seg.mask[i] == MaskCode::Valid {
                sum[pos] += model.norm.unstandardize_value(inf.recon[i]);
                count[pos] += 1;
            }
        }
        spans.push((s, e));
        scores.push(inf.score);
    }
    Ok(TraceReport {
        ctg_id,
        intervals: interval_scores(record_len, &spans, &scores)?,
        reconstruction: sum
            .iter()
            .zip(&count)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect(),
    })
}

/// Mean squared error over VALID samples in bpm^2.
pub fn reconstruction_mse(model: &Model, inputs: &[SegmentInput], inferences: &[Inference]) -> Result<f64> {
    let sd2 = model.norm.sd * model.norm.sd;
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, inf) in inputs.iter().zip(inferences) {
        for ((&v, &m), &r) in x.values.iter().zip(&x.mask).zip(&inf.recon) {
            if m == MaskCode::Valid {
                total += (v - r) * (v - r) * sd2;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::InsufficientData("no VALID samples for reconstruction error".into()));
    }
    Ok(total / count as f64)
}

/// Headline results on a labelled segment set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub segments: usize,
    pub cases: usize,
    pub segment_auroc: Estimate,
    pub case_auroc: Estimate,
    /// Case AUROC under the alternative aggregations.
    pub case_auroc_mean: f64,
    pub case_auroc_min: f64,
    pub case_auroc_max: f64,
    pub mse: f64,
    pub ece: f64,
    pub youden_threshold: f64,
    pub sensitivity: Estimate,
    pub specificity: Estimate,
    pub f1: Estimate,
    pub per_condition: BTreeMap<Condition, Option<ConditionAuroc>>,
}

/// Options for [`evaluate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub bootstrap: usize,
    pub seed: u64,
    pub ece_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bootstrap: 1000,
            seed: 1,
            ece_bins: 10,
        }
    }
}

/// Everything computed by [`evaluate`].
pub struct Evaluation {
    pub report: MetricsReport,
    pub scored: Vec<ScoredSegment>,
    pub cases: Vec<CaseScore>,
    pub inferences: Vec<Inference>,
}

fn estimate_at<F>(metric: F, scores: &[f64], labels: &[u8], clusters: &[usize], cfg: &EvalConfig) -> Result<Estimate>
where
    F: Fn(&[f64], &[u8]) -> Result<f64>,
{
    let value = metric(scores, labels)?;
    let (lo, hi) = bootstrap_ci(&metric, scores, labels, clusters, cfg.bootstrap, cfg.seed)?;
    Ok(Estimate {
        value,
        ci_low: lo.min(value),
        ci_high: hi.max(value),
    })
}

/// Scores `segments` with `model` and computes the full report.
pub fn evaluate(
    model: &Model,
    segments: &[FhrSegment],
    conditions: &BTreeMap<String, Vec<Condition>>,
    cfg: &EvalConfig,
) -> Result<Evaluation> {
    let inputs = segments
        .iter()
        .map(|s| SegmentInput::prepare(s, &model.norm))
        .collect::<Result<Vec<_>>>()?;
    let inferences = model.infer(&inputs)?;
    let scored: Vec<ScoredSegment> = segments
        .iter()
        .zip(&inferences)
        .map(|(s, inf)| ScoredSegment {
            ctg_id: s.parent_id.clone(),
            start_offset: s.start_offset,
            label: s.label,
            score: inf.score,
        })
        .collect();
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let labels: Vec<u8> = scored.iter().map(|s| s.label).collect();
    let ids: Vec<String> = scored.iter().map(|s| s.ctg_id.clone()).collect();
    let (segment_auroc, case_auroc) = segment_and_case_auroc(&scored, cfg.bootstrap, cfg.seed)?;
    let cases = aggregate_case(&ids, &labels, &scores)?;
    let cl: Vec<u8> = cases.iter().map(|c| c.label).collect();
    let agg = |f: fn(&CaseScore) -> f64| auroc(&cases.iter().map(f).collect::<Vec<_>>(), &cl);

    let threshold = youden(&scores, &labels)?;
    let clusters = cluster_ids(&ids.iter().map(String::as_str).collect::<Vec<_>>());
    let at = |f: fn(&OperatingPoint) -> f64| {
        estimate_at(
            move |s: &[f64], l: &[u8]| operating_point(s, l, threshold).map(|op| f(&op)),
            &scores,
            &labels,
            &clusters,
            cfg,
        )
    };
    let report = MetricsReport {
        segments: scored.len(),
        cases: cases.len(),
        segment_auroc,
        case_auroc,
        case_auroc_mean: agg(|c| c.mean)?,
        case_auroc_min: agg(|c| c.min)?,
        case_auroc_max: agg(|c| c.max)?,
        mse: reconstruction_mse(model, &inputs, &inferences)?,
        ece: ece(&scores, &labels, cfg.ece_bins)?,
        youden_threshold: threshold,
        sensitivity: at(|o| o.sensitivity)?,
        specificity: at(|o| o.specificity)?,
        f1: at(|o| o.f1)?,
        per_condition: per_condition_auroc(&scored, conditions, cfg.bootstrap, cfg.seed)?,
    };
    Ok(Evaluation {
        report,
        scored,
        cases,
        inferences,
    })
}

/// ROC curve points `(threshold, fpr, tpr)` from the highest threshold down.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64, f64)>> {
    let (pos, neg) = check_pair(scores, labels)?;
    let mut idx = sorted_order(scores);
    idx.reverse();
    let mut out = vec![(f64::INFINITY, 0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < idx.len() {
        let t = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == t {
            if labels[idx[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((t, fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(out)
}

pub fn roc_csv(points: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for (t, f, p) in points {
        out.push_str(&format!("{t},{f},{p}\n"));
    }
    out
}

/// Score histogram per class over `bins` equal-width bins on [0, 1].
pub fn histogram_csv(scores: &[f64], labels: &[u8], bins: usize) -> String {
    let mut counts = vec![[0usize; 2]; bins];
    for (&s, &l) in scores.iter().zip(labels) {
        let k = ((s * bins as f64).floor() as usize).min(bins - 1);
        counts[k][l.min(1) as usize] += 1;
    }
    let mut out = String::from("bin_low,bin_high,npo,apo\n");
    for (k, c) in counts.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            k as f64 / bins as f64,
            (k + 1) as f64 / bins as f64,
            c[0],
            c[1]
        ));
    }
    out
}

pub fn trace_csv(trace: &TraceReport) -> String {
    let mut out = String::from("ctg_id,start_sample,end_sample,mean_score,segments\n");
    for iv in &trace.intervals {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            trace.ctg_id,
            iv.start_sample,
            iv.end_sample,
            iv.mean_score.map_or_else(|| "NA".to_string(), |v| v.to_string()),
            iv.segments
        ));
    }
    out
}

pub fn cases_csv(cases: &[CaseScore]) -> String {
    let mut out = String::from("ctg_id,label,segments,median,mean,min,max\n");
    for c in cases {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.ctg_id, c.label, c.segments, c.median, c.mean, c.min, c.max
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: [f64; 4] = [0.1, 0.4, 0.35, 0.8];
    const L: [u8; 4] = [0, 0, 1, 1];

    #[test]
    fn auroc_worked_example() {
        assert_eq!(auroc(&S, &L).unwrap(), 0.75);
        assert_eq!(auroc(&[0.5; 4], &L).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &L).unwrap(), 1.0);
        assert!(auroc(&S, &[1, 1, 1, 1]).is_err());
    }

    #[test]
    fn youden_worked_example() {
        // J = 0.5 at both 0.375 and 0.6; the larger threshold wins
        assert_eq!(youden(&S, &L).unwrap(), 0.5 * (0.4 + 0.8));
        assert_eq!(youden(&[0.1, 0.2, 0.8, 0.9], &L).unwrap(), 0.5);
    }

    #[test]
    fn operating_point_worked_example() {
        let op = operating_point(&S, &L, 0.6).unwrap();
        assert_eq!((op.sensitivity, op.specificity), (0.5, 1.0));
        assert!((op.f1 - 2.0 / 3.0).abs() < 1e-15);
        let all = operating_point(&S, &L, 0.0).unwrap();
        assert_eq!((all.sensitivity, all.specificity), (1.0, 0.0));
        let perfect = operating_point(&[0.1, 0.2, 0.8, 0.9], &L, 0.5).unwrap();
        assert_eq!((perfect.sensitivity, perfect.specificity, perfect.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn ece_examples() {
        let s = vec![0.7; 10];
        let l: Vec<u8> = (0..10).map(|i| u8::from(i < 7)).collect();
        assert!(ece(&s, &l, 10).unwrap().abs() < 1e-12);
        let s = vec![0.9; 10];
        let l: Vec<u8> = (0..10).map(|i| u8::from(i < 5)).collect();
        assert!((ece(&s, &l, 10).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn case_medians() {
        let ids: Vec<String> = ["a", "b", "b", "b", "c", "c", "c", "c"].iter().map(|s| s.to_string()).collect();
        let labels = [0, 1, 1, 1, 0, 0, 0, 0];
        let scores = [0.3, 0.2, 0.6, 0.9, 0.2, 0.4, 0.6, 0.9];
        let cases = aggregate_case(&ids, &labels, &scores).unwrap();
        assert_eq!(cases[0].median, 0.3);
        assert_eq!(cases[1].median, 0.6);
        assert!((cases[2].median - 0.5).abs() < 1e-15);
        assert_eq!((cases[2].min, cases[2].max), (0.2, 0.9));
    }

    #[test]
    fn constant_metric_gives_zero_width_interval() {
        let s = [0.1, 0.2, 0.8, 0.9];
        let (lo, hi) = bootstrap_ci(|_, _| Ok(0.42), &s, &L, &[0, 1, 2, 3], 200, 3).unwrap();
        assert_eq!((lo, hi), (0.42, 0.42));
    }

    #[test]
    fn intervals_average_overlapping_segments() {
        // interval 1 is covered by both segments, interval 3 by none
        let iv = interval_scores(2400, &[(0, 1200), (600, 1800)], &[0.4, 0.6]).unwrap();
        assert_eq!(iv.len(), 4);
        assert_eq!(iv[0].mean_score, Some(0.4));
        assert_eq!(iv[1].mean_score, Some(0.5));
        assert_eq!(iv[2].mean_score, Some(0.6));
        assert_eq!(iv[3].mean_score, None);
    }
}
