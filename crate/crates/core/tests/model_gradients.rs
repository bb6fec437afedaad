use ctg_vae::model::{batch_loss, init_parameters, Batch, ModelConfig, Parameters, SegmentInput};
use ctg_vae::preprocess::{FhrSegment, MaskCode, NormStats};
use ctg_vae::tensor::Tape;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        latent_dim: 4,
        d_model: 8,
        token_patch: 100,
        batch_size: 2,
        seed: 5,
        ..ModelConfig::default()
    }
}

fn segment(label: u8, missing: std::ops::Range<usize>, content: usize) -> FhrSegment {
    let mut values = Vec::with_capacity(1200);
    let mut mask = Vec::with_capacity(1200);
    for i in 0..1200 {
        let t = i as f64;
        let v = 140.0 + 8.0 * (t / 37.0).sin() + 3.0 * (t / 5.3).cos() + if label == 1 { 6.0 } else { 0.0 };
        if i >= content {
            values.push(0.0);
            mask.push(MaskCode::Pad);
        } else if missing.contains(&i) {
            values.push(0.0);
            mask.push(MaskCode::Missing);
        } else {
            values.push(v);
            mask.push(MaskCode::Valid);
        }
    }
    FhrSegment {
        parent_id: format!("c{label}"),
        start_offset: 0.0,
        values,
        mask,
        label,
    }
}

fn loss_at(params: &Parameters, cfg: &ModelConfig, batch: &Batch<'_>, norm: &NormStats) -> f64 {
    let mut tape = Tape::<f64>::new();
    let bound = params.bind(&mut tape, false);
    let loss = batch_loss(&mut tape, &bound, cfg, batch, 0.7, 0.3, norm.sd, 10).unwrap();
    tape.value(loss.total).item()
}

#[test]
fn full_loss_gradient_matches_central_differences() {
    let cfg = tiny_config();
    let norm = NormStats::new(140.0, 9.0).unwrap();
    let segs = [segment(0, 210..260, 1200), segment(1, 0..0, 950)];
    let inputs: Vec<SegmentInput> = segs.iter().map(|s| SegmentInput::prepare(s, &norm).unwrap()).collect();
    let batch = Batch {
        inputs: inputs.iter().collect(),
        labels: vec![0, 1],
        noise: vec![vec![0.3, -1.1, 0.5, 0.9], vec![-0.4, 0.2, 1.3, -0.7]],
    };
    let params = init_parameters(&cfg).unwrap();

    let mut tape = Tape::<f64>::new();
    let bound = params.bind(&mut tape, true);
    let loss = batch_loss(&mut tape, &bound, &cfg, &batch, 0.7, 0.3, norm.sd, 10).unwrap();
    let grads = tape.backward(loss.total).unwrap();
    let mut analytic = Vec::new();
    for (&v, (_, a)) in bound.vars().iter().zip(params.iter()) {
        analytic.extend_from_slice(grads.get_or_zeros(v, a.shape()).data());
    }

    let flat = params.flatten();
    let mut probe = params.clone();
    let h = 1e-5;
    let mut numeric = Vec::with_capacity(flat.len());
    let mut shifted = flat.clone();
    for i in 0..flat.len() {
        shifted[i] = flat[i] + h;
        probe.assign_flat(&shifted);
        let up = loss_at(&probe, &cfg, &batch, &norm);
        shifted[i] = flat[i] - h;
        probe.assign_flat(&shifted);
        let down = loss_at(&probe, &cfg, &batch, &norm);
        shifted[i] = flat[i];
        numeric.push((up - down) / (2.0 * h));
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let norm_a: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let rel = diff / norm_a;
    println!("parameters {} relative error {rel:e}", flat.len());
    assert!(rel < 1e-4, "relative error {rel}");
}
