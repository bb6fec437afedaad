use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ctg_vae::eval::{cases_csv, histogram_csv, roc_csv, roc_curve, segment_span, trace_csv, trace_report};
use ctg_vae::features::FeatureConfig;
use ctg_vae::interpret::{r2_panel_csv, Traversal};
use ctg_vae::io::{
    corpus_to_ndjson, features_csv, load_corpus, load_segments, segments_to_bytes, write_atomic, SplitManifest,
};
use ctg_vae::model::{history_csv, ModelCheckpoint, ModelConfig};
use ctg_vae::pipeline::{evaluate_test, partition, preprocess_corpus, segment_features, train_model};
use ctg_vae::preprocess::FhrSegment;
use ctg_vae::synth::generate_corpus;

use crate::config::RunConfig;
use crate::Common;

struct Run {
    cfg: RunConfig,
    explicit: BTreeSet<String>,
    out: PathBuf,
}

impl Run {
    fn start(common: &Common) -> Result<Self> {
        let (cfg, explicit) = RunConfig::load(common.config.as_deref(), &common.overrides, common.seed)?;
        std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
        let run = Self {
            cfg,
            explicit,
            out: common.out.clone(),
        };
        run.write("config.resolved", run.cfg.echo().as_bytes())?;
        Ok(run)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out.join(name);
        write_atomic(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    /// Explicitly configured architecture keys must agree with the
    /// checkpoint.
    fn check_model(&self, ckpt: &ModelConfig) -> Result<()> {
        let pairs = [
            ("latent_dim", ckpt.latent_dim, self.cfg.model.latent_dim),
            ("d_model", ckpt.d_model, self.cfg.model.d_model),
            ("token_patch", ckpt.token_patch, self.cfg.model.token_patch),
        ];
        for (key, theirs, ours) in pairs {
            if self.explicit.contains(key) && theirs != ours {
                bail!("configuration mismatch: checkpoint has {key} = {theirs} but the run configuration sets {key} = {ours}");
            }
        }
        Ok(())
    }
}

fn manifest_path(segments: &Path, manifest: Option<&Path>) -> PathBuf {
    manifest.map(Path::to_path_buf).unwrap_or_else(|| {
        segments
            .parent()
            .map_or_else(|| PathBuf::from("manifest.json"), |p| p.join("manifest.json"))
    })
}

fn load_inputs(segments: &Path, manifest: Option<&Path>) -> Result<(Vec<FhrSegment>, SplitManifest)> {
    let segs = load_segments(segments).with_context(|| format!("reading {}", segments.display()))?;
    let mpath = manifest_path(segments, manifest);
    let man = SplitManifest::load(&mpath).with_context(|| format!("reading {}", mpath.display()))?;
    Ok((segs, man))
}

fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    ModelCheckpoint::load(path).with_context(|| format!("reading {}", path.display()))
}

pub fn synth(common: &Common) -> Result<()> {
    let run = Run::start(common)?;
    let records = generate_corpus(&run.cfg.synth)?;
    run.write("corpus.ndjson", corpus_to_ndjson(&records)?.as_bytes())?;
    eprintln!("wrote {} records", records.len());
    Ok(())
}

pub fn preprocess(common: &Common, corpus: &Path) -> Result<()> {
    let run = Run::start(common)?;
    let records = load_corpus(corpus).with_context(|| format!("reading {}", corpus.display()))?;
    let (segments, manifest) = preprocess_corpus(&records, &run.cfg.preprocess, run.cfg.split, run.cfg.seed)?;
    run.write("segments.bin", &segments_to_bytes(&segments)?)?;
    run.write("manifest.json", manifest.to_json()?.as_bytes())?;
    eprintln!("wrote {} segments from {} records", segments.len(), records.len());
    Ok(())
}

pub fn features(common: &Common, segments: &Path) -> Result<()> {
    let run = Run::start(common)?;
    let segs = load_segments(segments).with_context(|| format!("reading {}", segments.display()))?;
    let rows = segment_features(&segs, &FeatureConfig::default());
    run.write("features.csv", features_csv(&rows).as_bytes())?;
    Ok(())
}

fn train_one(run: &Run, segs: &[FhrSegment], man: &SplitManifest, model: &ModelConfig) -> Result<(ModelCheckpoint, String)> {
    let outcome = train_model(segs, man, model, &run.cfg.train, |r| {
        eprintln!(
            "epoch {:>4}  train {:.4}  validation {:.4}  kl {:.3}  tc {:.3}  beta {:.4}  lambda {:.4}",
            r.epoch, r.train.total, r.validation.total, r.train.kl, r.train.tc, r.beta, r.lambda
        );
    })?;
    let history = history_csv(&outcome.history);
    Ok((
        ModelCheckpoint {
            model: outcome.model,
            train_config: run.cfg.train.clone(),
            meta: outcome.meta,
        },
        history,
    ))
}

pub fn train(common: &Common, segments: &Path, manifest: Option<&Path>) -> Result<()> {
    let run = Run::start(common)?;
    let (segs, man) = load_inputs(segments, manifest)?;
    let (ckpt, history) = train_one(&run, &segs, &man, &run.cfg.model)?;
    run.write("model.ckpt", &ckpt.to_bytes()?)?;
    run.write("history.csv", history.as_bytes())?;
    run.write("training.json", (serde_json::to_string_pretty(&ckpt.meta)? + "\n").as_bytes())?;
    Ok(())
}

pub fn eval(common: &Common, checkpoint: &Path, segments: &Path, manifest: Option<&Path>) -> Result<()> {
    let run = Run::start(common)?;
    let ckpt = load_checkpoint(checkpoint)?;
    run.check_model(&ckpt.model.config)?;
    let (segs, man) = load_inputs(segments, manifest)?;
    let ev = evaluate_test(&ckpt.model, &segs, &man, &run.cfg.eval)?;
    let scores: Vec<f64> = ev.scored.iter().map(|s| s.score).collect();
    let labels: Vec<u8> = ev.scored.iter().map(|s| s.label).collect();
    run.write("metrics.json", (serde_json::to_string_pretty(&ev.report)? + "\n").as_bytes())?;
    run.write("roc.csv", roc_csv(&roc_curve(&scores, &labels)?).as_bytes())?;
    run.write("histogram.csv", histogram_csv(&scores, &labels, 20).as_bytes())?;
    run.write("cases.csv", cases_csv(&ev.cases).as_bytes())?;
    let mut scored = String::from("ctg_id,start_offset,label,score\n");
    for s in &ev.scored {
        scored.push_str(&format!("{},{},{},{}\n", s.ctg_id, s.start_offset, s.label, s.score));
    }
    run.write("scores.csv", scored.as_bytes())?;

    let test = partition(&segs, &man)?.test;
    let mut by_record: BTreeMap<&str, Vec<FhrSegment>> = BTreeMap::new();
    for s in &test {
        by_record.entry(&s.parent_id).or_default().push(s.clone());
    }
    let mut intervals = String::new();
    let mut recon = String::from("ctg_id,sample,bpm\n");
    for (id, segs) in &by_record {
        let len = segs.iter().map(|s| segment_span(s).1).max().unwrap_or(0);
        let trace = trace_report(&ckpt.model, len, segs)?;
        let csv = trace_csv(&trace);
        if intervals.is_empty() {
            intervals.push_str(&csv);
        } else {
            intervals.extend(csv.lines().skip(1).map(|l| format!("{l}\n")));
        }
        for (i, v) in trace.reconstruction.iter().enumerate() {
            if let Some(v) = v {
                recon.push_str(&format!("{id},{i},{v}\n"));
            }
        }
    }
    run.write("trace_intervals.csv", intervals.as_bytes())?;
    run.write("trace_reconstruction.csv", recon.as_bytes())?;
    let r = &ev.report;
    eprintln!(
        "segment AUROC {:.4} [{:.4}, {:.4}]  case AUROC {:.4}  MSE {:.3}  ECE {:.4}",
        r.segment_auroc.value, r.segment_auroc.ci_low, r.segment_auroc.ci_high, r.case_auroc.value, r.mse, r.ece
    );
    Ok(())
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

pub fn tc_sweep(common: &Common, segments: &Path, manifest: Option<&Path>) -> Result<()> {
    let run = Run::start(common)?;
    if run.cfg.sweep_targets.is_empty() || run.cfg.sweep_seeds.is_empty() {
        bail!("sweep_targets and sweep_seeds must be non-empty");
    }
    let (segs, man) = load_inputs(segments, manifest)?;
    let mut runs = String::from("tc_target,seed,final_tc,mse,auroc,ece\n");
    let mut summary = String::from("tc_target,runs,final_tc_mean,final_tc_sd,mse_mean,mse_sd,auroc_mean,auroc_sd,ece_mean,ece_sd\n");
    for &target in &run.cfg.sweep_targets {
        let mut rows: Vec<[f64; 4]> = Vec::new();
        for &seed in &run.cfg.sweep_seeds {
            eprintln!("tc_target {target} seed {seed}");
            let model = ModelConfig {
                tc_target: target,
                seed,
                ..run.cfg.model.clone()
            };
            let (ckpt, _) = train_one(&run, &segs, &man, &model)?;
            let ev = evaluate_test(&ckpt.model, &segs, &man, &run.cfg.eval)?;
            let row = [ckpt.meta.tc, ev.report.mse, ev.report.segment_auroc.value, ev.report.ece];
            runs.push_str(&format!("{target},{seed},{},{},{},{}\n", row[0], row[1], row[2], row[3]));
            rows.push(row);
        }
        summary.push_str(&format!("{target},{}", rows.len()));
        for k in 0..4 {
            let (m, sd) = mean_sd(&rows.iter().map(|r| r[k]).collect::<Vec<_>>());
            summary.push_str(&format!(",{m},{sd}"));
        }
        summary.push('\n');
    }
    run.write("sweep_runs.csv", runs.as_bytes())?;
    run.write("sweep.csv", summary.as_bytes())?;
    Ok(())
}

fn loadings_csv(names: &[String], rows: &[Vec<f64>], extra: &[(&str, Vec<String>)]) -> String {
    let dims = rows.first().map_or(0, Vec::len);
    let mut out = String::from("component");
    for (h, _) in extra {
        out.push_str(&format!(",{h}"));
    }
    for d in 0..dims {
        out.push_str(&format!(",z{d}"));
    }
    out.push('\n');
    for (i, (name, row)) in names.iter().zip(rows).enumerate() {
        out.push_str(name);
        for (_, col) in extra {
            out.push_str(&format!(",{}", col[i]));
        }
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn interpret(common: &Common, checkpoint: &Path, segments: &Path, manifest: Option<&Path>) -> Result<()> {
    let run = Run::start(common)?;
    let ckpt = load_checkpoint(checkpoint)?;
    run.check_model(&ckpt.model.config)?;
    let (segs, man) = load_inputs(segments, manifest)?;
    let test = partition(&segs, &man)?.test;
    let res = ctg_vae::pipeline::interpret(&ckpt.model, &test, &run.cfg.interpret)?;

    run.write("r2_panel.csv", r2_panel_csv(&res.panel).as_bytes())?;
    let write_traversal = |name: String, t: &Traversal| run.write(&name, t.to_csv().as_bytes());
    for (feature, t) in &res.direction_traversals {
        write_traversal(format!("traversal_{feature}.csv"), t)?;
    }
    for (d, t) in res.dimension_traversals.iter().enumerate() {
        write_traversal(format!("traversal_dim{d}.csv"), t)?;
    }
    for (k, t) in res.pca_traversals.iter().enumerate() {
        write_traversal(format!("pca_signals_pc{}.csv", k + 1), t)?;
    }
    for (k, t) in res.ica_traversals.iter().enumerate() {
        write_traversal(format!("ica_signals_ic{}.csv", k + 1), t)?;
    }

    let pc_names: Vec<String> = (1..=res.pca.components.len()).map(|k| format!("pc{k}")).collect();
    let ratio = res.pca.explained_ratio();
    run.write(
        "pca_loadings.csv",
        loadings_csv(
            &pc_names,
            &res.pca.components,
            &[
                ("variance", res.pca.variances.iter().map(ToString::to_string).collect()),
                ("explained_ratio", ratio.iter().map(ToString::to_string).collect()),
            ],
        )
        .as_bytes(),
    )?;
    let ic_names: Vec<String> = (1..=res.ica.unmixing.len()).map(|k| format!("ic{k}")).collect();
    run.write(
        "ica_unmixing.csv",
        loadings_csv(
            &ic_names,
            &res.ica.unmixing_data_space(),
            &[
                ("negentropy", res.ica.negentropy.iter().map(ToString::to_string).collect()),
                ("converged", res.ica.converged.iter().map(ToString::to_string).collect()),
                ("iterations", res.ica.iterations.iter().map(ToString::to_string).collect()),
            ],
        )
        .as_bytes(),
    )?;
    let dir_names: Vec<String> = res.directions.iter().map(|d| d.feature.clone()).collect();
    run.write(
        "pls_directions.csv",
        loadings_csv(
            &dir_names,
            &res.directions.iter().map(|d| d.vector.clone()).collect::<Vec<_>>(),
            &[("projection_sd", res.directions.iter().map(|d| d.projection_sd.to_string()).collect())],
        )
        .as_bytes(),
    )?;
    if res.ica.converged.iter().any(|c| !c) {
        eprintln!("warning: some ICA components did not converge within {} iterations", run.cfg.interpret.ica.max_iter);
    }
    eprintln!("analysed {} test segments", res.analysed);
    Ok(())
}
