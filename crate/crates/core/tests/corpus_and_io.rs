use std::collections::BTreeMap;

use ctg_vae::eval::{auroc, per_condition_auroc, ScoredSegment};
use ctg_vae::features::{extract, FeatureConfig};
use ctg_vae::io::{corpus_to_ndjson, read_corpus, segments_from_bytes, segments_to_bytes, SplitManifest};
use ctg_vae::model::{init_parameters, Model, ModelCheckpoint, ModelConfig, TrainConfig, TrainingMeta};
use ctg_vae::pipeline::preprocess_corpus;
use ctg_vae::preprocess::{
    segment_series, standardize, unstandardize, FhrSegment, MaskCode, NormStats, PreprocessConfig, SEGMENT_LEN,
};
use ctg_vae::synth::{generate_corpus, Condition, SynthConfig};
use proptest::prelude::*;

fn corpus(npo: usize, apo: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        n_npo_records: npo,
        n_apo_records: apo,
        seed,
        ..SynthConfig::default()
    }
}

fn sd_feature(segments: &[FhrSegment]) -> (Vec<f64>, Vec<f64>) {
    let cfg = FeatureConfig::default();
    let (mut npo, mut apo) = (Vec::new(), Vec::new());
    for s in segments {
        if let Ok(f) = extract(s, &cfg) {
            if s.label == 1 { &mut apo } else { &mut npo }.push(f.sd);
        }
    }
    (npo, apo)
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn generator_classes_separate_on_variability() {
    let records = generate_corpus(&corpus(200, 200, 7)).unwrap();
    let (segments, _) = preprocess_corpus(&records, &PreprocessConfig::default(), [0.6, 0.2, 0.2], 7).unwrap();
    let (npo, apo) = sd_feature(&segments);
    let (m0, v0) = mean_var(&npo);
    let (m1, v1) = mean_var(&apo);
    let pooled = (((npo.len() - 1) as f64 * v0 + (apo.len() - 1) as f64 * v1) / (npo.len() + apo.len() - 2) as f64).sqrt();
    let d = (m0 - m1) / pooled;
    println!("SD feature: NPO {m0:.2} APO {m1:.2} Cohen's d {d:.3}");
    assert!(d >= 0.5, "{d}");
}

#[test]
fn splits_keep_class_balance() {
    let records = generate_corpus(&corpus(300, 300, 3)).unwrap();
    let (segments, manifest) = preprocess_corpus(&records, &PreprocessConfig::default(), [0.6, 0.2, 0.2], 3).unwrap();
    let overall = segments.iter().filter(|s| s.label == 1).count() as f64 / segments.len() as f64;
    let parts = manifest.splits.partition(&segments).unwrap();
    for part in [&parts.train, &parts.validation, &parts.test] {
        let frac = part.iter().filter(|s| s.label == 1).count() as f64 / part.len() as f64;
        assert!((frac - overall).abs() < 0.03, "{frac} vs {overall}");
    }
    // no recording straddles two splits
    for id in records.iter().map(|r| &r.ctg_id) {
        let homes = [&parts.train, &parts.validation, &parts.test]
            .iter()
            .filter(|p| p.iter().any(|s| &s.parent_id == id))
            .count();
        assert!(homes <= 1);
    }
}

#[test]
fn severe_condition_is_easier_to_detect() {
    let mut cfg = corpus(120, 120, 5);
    cfg.severe_conditions = vec![Condition::Hie];
    let records = generate_corpus(&cfg).unwrap();
    let conditions: BTreeMap<String, Vec<Condition>> =
        records.iter().map(|r| (r.ctg_id.clone(), r.conditions.clone())).collect();
    let (segments, _) = preprocess_corpus(&records, &PreprocessConfig::default(), [0.6, 0.2, 0.2], 5).unwrap();
    let fc = FeatureConfig::default();
    // reduced variability marks APO, so the negated SD is the score
    let scored: Vec<ScoredSegment> = segments
        .iter()
        .filter_map(|s| {
            extract(s, &fc).ok().map(|f| ScoredSegment {
                ctg_id: s.parent_id.clone(),
                start_offset: s.start_offset,
                label: s.label,
                score: -f.sd,
            })
        })
        .collect();
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let labels: Vec<u8> = scored.iter().map(|s| s.label).collect();
    let overall = auroc(&scores, &labels).unwrap();
    let per = per_condition_auroc(&scored, &conditions, 20, 1).unwrap();
    let hie = per[&Condition::Hie].as_ref().expect("HIE cases present");
    assert!(hie.segment_auroc.value > overall, "{} vs {overall}", hie.segment_auroc.value);
}

#[test]
fn corpus_and_segments_roundtrip() {
    let records = generate_corpus(&corpus(4, 4, 9)).unwrap();
    let text = corpus_to_ndjson(&records).unwrap();
    assert!(text.starts_with("{\"format_version\":1"));
    assert_eq!(read_corpus(text.as_bytes()).unwrap(), records);

    let (segments, manifest) = preprocess_corpus(&records, &PreprocessConfig::default(), [0.5, 0.25, 0.25], 9).unwrap();
    let back = segments_from_bytes(&segments_to_bytes(&segments).unwrap()).unwrap();
    assert_eq!(back, segments);
    assert_eq!(SplitManifest::from_json(&manifest.to_json().unwrap()).unwrap(), manifest);
}

fn checkpoint(cfg: &ModelConfig) -> ModelCheckpoint {
    ModelCheckpoint {
        model: Model::new(cfg.clone(), NormStats::new(141.25, 9.5).unwrap(), init_parameters(cfg).unwrap()).unwrap(),
        train_config: TrainConfig::default(),
        meta: TrainingMeta {
            epochs_run: 3,
            best_epoch: 2,
            best_validation_loss: 1.0 / 3.0,
            beta: 0.1 + 0.2,
            lambda: 0.0,
            kl: 0.5,
            tc: 3.1,
        },
    }
}

#[test]
fn checkpoint_roundtrip_is_bitwise() {
    let cfg = ModelConfig {
        latent_dim: 4,
        d_model: 8,
        token_patch: 100,
        ..ModelConfig::default()
    };
    let ck = checkpoint(&cfg);
    let bytes = ck.to_bytes().unwrap();
    let back = ModelCheckpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes().unwrap(), bytes);
}

#[test]
fn checkpoint_rejects_corruption_and_layout_mismatch() {
    let cfg = ModelConfig {
        latent_dim: 4,
        d_model: 8,
        token_patch: 100,
        ..ModelConfig::default()
    };
    let ck = checkpoint(&cfg);
    let bytes = ck.to_bytes().unwrap();
    assert!(ModelCheckpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(ModelCheckpoint::from_bytes(&bad).is_err());
    let other = ModelConfig { latent_dim: 6, ..cfg };
    assert!(Model::new(other, ck.model.norm, ck.model.params.clone()).is_err());
}

fn series_strategy() -> impl Strategy<Value = Vec<Option<f64>>> {
    prop::collection::vec(prop::option::weighted(0.97, 90.0..180.0f64), 0..4000)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn windows_are_well_formed(series in series_strategy()) {
        let cfg = PreprocessConfig::default();
        for s in segment_series("p", 0, &series, &cfg) {
            prop_assert!(s.validate().is_ok());
            prop_assert_eq!(s.values.len(), SEGMENT_LEN);
            let start = (s.start_offset * 4.0) as usize;
            prop_assert_eq!(start % 600, 0);
            prop_assert!(s.content_len() >= cfg.trailing_min);
            prop_assert!(s.missing_count() <= cfg.max_missing);
        }
    }

    #[test]
    fn standardize_roundtrips(vals in prop::collection::vec(60.0..200.0f64, SEGMENT_LEN), mean in 120.0..160.0f64, sd in 1.0..30.0f64) {
        let seg = FhrSegment {
            parent_id: "p".into(),
            start_offset: 0.0,
            values: vals.clone(),
            mask: vec![MaskCode::Valid; SEGMENT_LEN],
            label: 0,
        };
        let norm = NormStats::new(mean, sd).unwrap();
        let back = unstandardize(&standardize(&seg, &norm).values, &norm);
        for (a, b) in back.iter().zip(&vals) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn auroc_is_rank_based(pairs in prop::collection::vec((0.0..1.0f64, any::<bool>()), 2..60)) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<u8> = pairs.iter().map(|p| u8::from(p.1)).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let a = auroc(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
        prop_assert_eq!(auroc(&squashed, &labels).unwrap(), a);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auroc(&flipped, &labels).unwrap() - (1.0 - a)).abs() < 1e-12);
    }
}
