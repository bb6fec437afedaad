//! End-to-end stages shared by the command-line tool and the tests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, Evaluation};
use crate::features::{extract, FeatureConfig, FeatureVector, FEATURE_NAMES};
use crate::interpret::{
    ica, pca, pls_direction, r2_panel, traverse_dimension, traverse_direction, Direction, Ica, IcaConfig,
    LatentMatrix, PanelRow, Pca, Traversal,
};
use crate::io::{SplitManifest, FORMAT_VERSION};
use crate::model::{train, EpochRecord, Model, ModelConfig, SegmentInput, TrainConfig, TrainData, TrainOutcome};
use crate::preprocess::{fit_norm_stats, process_record, split_by_ctg, FhrSegment, PreprocessConfig, Splits};
use crate::synth::CtgRecord;

/// Variance of the posterior means above which a latent direction counts
/// as active; collapsed dimensions fall below it.
pub const ACTIVE_VARIANCE: f64 = 0.01;

/// Default train/validation/test proportions.
pub const DEFAULT_SPLIT: [f64; 3] = [4.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];

/// Segments every record, assigns splits by recording and fits the
/// normalisation statistics on the training split.
pub fn preprocess_corpus(
    records: &[CtgRecord],
    cfg: &PreprocessConfig,
    ratios: [f64; 3],
    seed: u64,
) -> Result<(Vec<FhrSegment>, SplitManifest)> {
    let mut segments = Vec::new();
    for r in records {
        segments.extend(process_record(r, cfg)?);
    }
    let splits = split_by_ctg(&segments, ratios, seed)?;
    let norm = fit_norm_stats(&splits.partition(&segments)?.train)?;
    let conditions: BTreeMap<String, _> = records
        .iter()
        .filter(|r| splits.split_of(&r.ctg_id).is_some())
        .map(|r| (r.ctg_id.clone(), r.conditions.clone()))
        .collect();
    Ok((
        segments,
        SplitManifest {
            format_version: FORMAT_VERSION,
            seed,
            ratios,
            norm,
            splits,
            conditions,
        },
    ))
}

pub fn partition(segments: &[FhrSegment], manifest: &SplitManifest) -> Result<Splits> {
    manifest.splits.partition(segments)
}

/// Trains on the manifest's training split with early stopping on its
/// validation split.
pub fn train_model(
    segments: &[FhrSegment],
    manifest: &SplitManifest,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let splits = partition(segments, manifest)?;
    let tr = TrainData::from_segments(&splits.train, &manifest.norm)?;
    let va = TrainData::from_segments(&splits.validation, &manifest.norm)?;
    train(cfg, tcfg, manifest.norm, &tr, &va, on_epoch)
}

/// Evaluates `model` on the manifest's test split.
pub fn evaluate_test(model: &Model, segments: &[FhrSegment], manifest: &SplitManifest, cfg: &EvalConfig) -> Result<Evaluation> {
    let test = partition(segments, manifest)?.test;
    if test.is_empty() {
        return Err(Error::InsufficientData("test split is empty".into()));
    }
    evaluate(model, &test, &manifest.conditions, cfg)
}

/// Features of every segment, in order.
pub fn segment_features(segments: &[FhrSegment], cfg: &FeatureConfig) -> Vec<(String, f64, Result<FeatureVector>)> {
    segments
        .iter()
        .map(|s| (s.parent_id.clone(), s.start_offset, extract(s, cfg)))
        .collect()
}

/// Options of the latent-space analyses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpretConfig {
    pub traversal_steps: usize,
    /// `None` keeps the principal components whose variance exceeds
    /// [`ACTIVE_VARIANCE`].
    pub ica_components: Option<usize>,
    pub ica: IcaConfig,
    pub features: FeatureConfig,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        Self {
            traversal_steps: 9,
            ica_components: None,
            ica: IcaConfig::default(),
            features: FeatureConfig::default(),
        }
    }
}

/// Results of [`interpret`].
#[derive(Clone, Debug, PartialEq)]
pub struct Interpretation {
    pub latents: LatentMatrix,
    /// Segments with all features available.
    pub analysed: usize,
    pub panel: Vec<PanelRow>,
    pub directions: Vec<Direction>,
    pub direction_traversals: Vec<(String, Traversal)>,
    pub dimension_traversals: Vec<Traversal>,
    pub pca: Pca,
    pub pca_traversals: Vec<Traversal>,
    pub ica: Ica,
    pub ica_traversals: Vec<Traversal>,
}

impl Interpretation {
    pub fn r2_latents(&self, feature: &str) -> Option<f64> {
        self.panel.iter().find(|r| r.feature == feature).and_then(|r| r.latents)
    }

    pub fn direction(&self, feature: &str) -> Option<&Traversal> {
        self.direction_traversals.iter().find(|(f, _)| f == feature).map(|(_, t)| t)
    }
}

fn unit_direction(name: &str, v: &[f64], latents: &LatentMatrix) -> Result<Direction> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::InvalidInput(format!("{name} has a zero direction")));
    }
    let vector: Vec<f64> = v.iter().map(|x| x / norm).collect();
    let mut dir = Direction {
        vector,
        feature: name.to_string(),
        projection_sd: 0.0,
    };
    let proj = dir.project(latents);
    let m = proj.iter().sum::<f64>() / proj.len() as f64;
    dir.projection_sd = (proj.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / proj.len() as f64).sqrt();
    Ok(dir)
}

/// Latent analyses over `segments` (normally the test split), using the
/// posterior means.
pub fn interpret(model: &Model, segments: &[FhrSegment], cfg: &InterpretConfig) -> Result<Interpretation> {
    if cfg.traversal_steps == 0 {
        return Err(Error::Config("traversal_steps must be positive".into()));
    }
    let mut session = model.session();
    let mut rows = Vec::new();
    let mut index = Vec::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    for s in segments {
        let Ok(f) = extract(s, &cfg.features) else {
            continue;
        };
        let inf = session.infer(&SegmentInput::prepare(s, &model.norm)?)?;
        rows.push(inf.stats.mu);
        index.push((s.parent_id.clone(), s.start_offset));
        features.push(f.values());
        labels.push(s.label);
        scores.push(inf.score);
    }
    let latents = LatentMatrix::new(rows, index)?;
    let panel = r2_panel(&latents, &features, &labels, &scores)?;

    let mut directions = Vec::new();
    let mut direction_traversals = Vec::new();
    for (k, name) in FEATURE_NAMES.iter().enumerate() {
        let target: Vec<f64> = features.iter().map(|f| f[k]).collect();
        if let Ok(dir) = pls_direction(&latents, name, &target) {
            direction_traversals.push((name.to_string(), traverse_direction(model, &latents, &dir, cfg.traversal_steps)?));
            directions.push(dir);
        }
    }
    let dimension_traversals = (0..latents.cols())
        .map(|d| traverse_dimension(model, &latents, d, cfg.traversal_steps))
        .collect::<Result<Vec<_>>>()?;

    let pca = pca(&latents)?;
    let pca_traversals = pca
        .components
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let dir = unit_direction(&format!("pc{}", k + 1), c, &latents)?;
            traverse_direction(model, &latents, &dir, cfg.traversal_steps)
        })
        .collect::<Result<Vec<_>>>()?;

    let n_ica = cfg
        .ica_components
        .unwrap_or_else(|| pca.variances.iter().filter(|&&v| v > ACTIVE_VARIANCE).count().max(1));
    let ica = ica(&latents, n_ica, &cfg.ica)?;
    let ica_traversals = ica
        .mixing_directions()?
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let dir = unit_direction(&format!("ic{}", k + 1), m, &latents)?;
            traverse_direction(model, &latents, &dir, cfg.traversal_steps)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Interpretation {
        analysed: latents.rows(),
        latents,
        panel,
        directions,
        direction_traversals,
        dimension_traversals,
        pca,
        pca_traversals,
        ica,
        ica_traversals,
    })
}
