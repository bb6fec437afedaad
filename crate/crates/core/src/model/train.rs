use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, Precision, TrainConfig};
use super::controller::coeff_update;
use super::infer::Model;
use super::loss::{focal_var, kl_var, masked_mse_var, tc_var, LossComponents};
use super::network::{classify, decode, embed_inputs, encode, reparameterize_var, SegmentInput};
use super::params::{init_parameters, Bound, Parameters};
use crate::error::{Error, Result};
use crate::preprocess::{FhrSegment, MaskCode, NormStats, SEGMENT_LEN};
use crate::tensor::{AdamConfig, AdamState, Array, Real, Tape, Var};

const SAMPLER_STREAM: u64 = 11;
const NOISE_STREAM: u64 = 12;
const VALIDATION_STREAM: u64 = 13;

/// Prepared network inputs with their labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainData {
    pub inputs: Vec<SegmentInput>,
    pub labels: Vec<u8>,
}

impl TrainData {
    pub fn from_segments(segments: &[FhrSegment], norm: &NormStats) -> Result<Self> {
        let inputs = segments
            .iter()
            .map(|s| SegmentInput::prepare(s, norm))
            .collect::<Result<Vec<_>>>()?;
        let labels = segments.iter().map(|s| s.label).collect();
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// One minibatch: inputs, labels and the reparameterisation noise.
#[derive(Clone, Debug)]
pub struct Batch<'a> {
    pub inputs: Vec<&'a SegmentInput>,
    pub labels: Vec<u8>,
    pub noise: Vec<Vec<f64>>,
}

/// Tape handles of the loss and its components.
#[derive(Clone, Copy, Debug)]
pub struct BatchLoss {
    pub total: Var,
    pub mse: Var,
    pub focal: Var,
    pub kl: Var,
    pub tc: Var,
}

impl BatchLoss {
    pub fn values<T: Real>(&self, tape: &Tape<T>) -> LossComponents {
        let v = |x: Var| tape.value(x).item().to_f64().unwrap_or(f64::NAN);
        LossComponents {
            total: v(self.total),
            mse: v(self.mse),
            focal: v(self.focal),
            kl: v(self.kl),
            tc: v(self.tc),
        }
    }
}

/// Full forward pass of a batch:
/// `MSE (bpm^2, VALID only) + focal + beta * KL/dim + lambda * TC`.
#[allow(clippy::too_many_arguments)]
pub fn batch_loss<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &ModelConfig,
    batch: &Batch<'_>,
    beta: f64,
    lambda: f64,
    norm_sd: f64,
    dataset_size: usize,
) -> Result<BatchLoss> {
    let m = batch.inputs.len();
    if m < 2 || batch.labels.len() != m || batch.noise.len() != m {
        return Err(Error::InvalidInput(format!(
            "batch needs at least 2 aligned items (inputs {m}, labels {}, noise {})",
            batch.labels.len(),
            batch.noise.len()
        )));
    }
    let (mut mus, mut lvs, mut zs, mut recons, mut scores) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (input, noise) in batch.inputs.iter().zip(&batch.noise) {
        let (a, b) = embed_inputs(tape, p, cfg, input)?;
        let (mu, lv) = encode(tape, p, cfg, a, b)?;
        let z = reparameterize_var(tape, mu, lv, noise)?;
        recons.push(decode(tape, p, cfg, z)?);
        scores.push(classify(tape, p, z)?);
        mus.push(mu);
        lvs.push(lv);
        zs.push(z);
    }
    let mu = tape.concat_rows(&mus)?;
    let lv = tape.concat_rows(&lvs)?;
    let z = tape.concat_rows(&zs)?;
    let recon = tape.concat_rows(&recons)?;
    let score = tape.concat_rows(&scores)?;

    let target = Array::from_fn(m, SEGMENT_LEN, |r, c| T::of(batch.inputs[r].values[c]));
    let valid = Array::from_fn(m, SEGMENT_LEN, |r, c| {
        if batch.inputs[r].mask[c] == MaskCode::Valid {
            T::one()
        } else {
            T::zero()
        }
    });
    let mse = masked_mse_var(tape, recon, target, valid, norm_sd)?;
    let focal = focal_var(tape, score, &batch.labels, cfg.focal_gamma)?;
    let kl = kl_var(tape, mu, lv)?;
    let tc = tc_var(tape, z, mu, lv, dataset_size)?;

    let mut total = tape.add(mse, focal)?;
    if beta != 0.0 {
        let t = tape.scale(kl, beta)?;
        total = tape.add(total, t)?;
    }
    if lambda != 0.0 {
        let t = tape.scale(tc, lambda)?;
        total = tape.add(total, t)?;
    }
    Ok(BatchLoss {
        total,
        mse,
        focal,
        kl,
        tc,
    })
}

/// Draws batches with equal NPO and APO halves. Each class is visited in a
/// shuffled cycle and reshuffled once exhausted, so the minority class is
/// repeated as needed.
pub struct BalancedSampler {
    pools: [Vec<usize>; 2],
    cursors: [usize; 2],
    rng: ChaCha8Rng,
}

impl BalancedSampler {
    pub fn new(labels: &[u8], seed: u64) -> Result<Self> {
        let mut pools = [Vec::new(), Vec::new()];
        for (i, &l) in labels.iter().enumerate() {
            match l {
                0 | 1 => pools[l as usize].push(i),
                _ => return Err(Error::InvalidInput(format!("label {l} not in {{0, 1}}"))),
            }
        }
        if pools.iter().any(Vec::is_empty) {
            return Err(Error::InsufficientData("training split needs both NPO and APO segments".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SAMPLER_STREAM);
        for p in &mut pools {
            p.shuffle(&mut rng);
        }
        Ok(Self {
            pools,
            cursors: [0, 0],
            rng,
        })
    }

    /// `size / 2` NPO indices followed by `size / 2` APO indices.
    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        for class in 0..2 {
            for _ in 0..size / 2 {
                if self.cursors[class] == self.pools[class].len() {
                    self.pools[class].shuffle(&mut self.rng);
                    self.cursors[class] = 0;
                }
                out.push(self.pools[class][self.cursors[class]]);
                self.cursors[class] += 1;
            }
        }
        out
    }
}

/// Per-epoch log line. `beta` and `lambda` are the values used during the
/// epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossComponents,
    pub validation: LossComponents,
    pub beta: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    /// Coefficients after the last controller update.
    pub beta: f64,
    pub lambda: f64,
    /// Epoch-mean training KL per dimension and TC of the last epoch.
    pub kl: f64,
    pub tc: f64,
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Model,
    pub meta: TrainingMeta,
    pub history: Vec<EpochRecord>,
}

fn draw_noise(rng: &mut ChaCha8Rng, m: usize, l: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| (0..l).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

fn step<T: Real>(
    params: &Parameters,
    cfg: &ModelConfig,
    batch: &Batch<'_>,
    beta: f64,
    lambda: f64,
    norm_sd: f64,
    n: usize,
) -> Result<(LossComponents, Vec<f64>)> {
    let mut tape = Tape::<T>::new();
    let bound = params.bind(&mut tape, true);
    let loss = batch_loss(&mut tape, &bound, cfg, batch, beta, lambda, norm_sd, n)?;
    let grads = tape.backward(loss.total)?;
    let mut flat = Vec::with_capacity(params.size());
    for (&v, (_, arr)) in bound.vars().iter().zip(params.iter()) {
        let g = grads.get_or_zeros(v, arr.shape());
        flat.extend(g.data().iter().map(|x| x.to_f64().unwrap_or(f64::NAN)));
    }
    Ok((loss.values(&tape), flat))
}

/// Validation chunks of `size`, with a trailing singleton merged into the
/// previous chunk so every chunk supports the TC estimate.
fn chunks(n: usize, size: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = (start + size).min(n);
        if n - end == 1 {
            end = n;
        }
        out.push((start, end));
        start = end;
    }
    out
}

/// Loss over a whole data set with fixed-seed noise, weighted by chunk size.
pub fn evaluate_loss(
    model: &Model,
    data: &TrainData,
    beta: f64,
    lambda: f64,
    precision: Precision,
) -> Result<LossComponents> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientData("loss evaluation needs at least 2 segments".into()));
    }
    let cfg = &model.config;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(VALIDATION_STREAM);
    let mut acc = LossComponents::default();
    for (start, end) in chunks(n, cfg.batch_size) {
        let batch = Batch {
            inputs: data.inputs[start..end].iter().collect(),
            labels: data.labels[start..end].to_vec(),
            noise: draw_noise(&mut rng, end - start, cfg.latent_dim),
        };
        let parts = match precision {
            Precision::F32 => forward_only::<f32>(model, &batch, beta, lambda, n)?,
            Precision::F64 => forward_only::<f64>(model, &batch, beta, lambda, n)?,
        };
        acc.accumulate(&parts.scaled((end - start) as f64 / n as f64));
    }
    Ok(acc)
}

fn forward_only<T: Real>(model: &Model, batch: &Batch<'_>, beta: f64, lambda: f64, n: usize) -> Result<LossComponents> {
    let mut tape = Tape::<T>::new();
    let bound = model.params.bind(&mut tape, false);
    let loss = batch_loss(&mut tape, &bound, &model.config, batch, beta, lambda, model.norm.sd, n)?;
    Ok(loss.values(&tape))
}

/// Trains from a seeded initialisation with balanced minibatches, per-epoch
/// coefficient control and early stopping on validation loss.
pub fn train(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    norm: NormStats,
    train_data: &TrainData,
    validation: &TrainData,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tcfg.validate()?;
    if train_data.len() < cfg.batch_size {
        return Err(Error::InsufficientData(format!(
            "training split has {} segments, fewer than one batch of {}",
            train_data.len(),
            cfg.batch_size
        )));
    }
    let mut sampler = BalancedSampler::new(&train_data.labels, cfg.seed)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(NOISE_STREAM);

    let mut model = Model::new(cfg.clone(), norm, init_parameters(cfg)?)?;
    let mut flat = model.params.flatten();
    let mut adam = AdamState::new(flat.len());
    let adam_cfg = AdamConfig {
        lr: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let n = train_data.len();
    let batches = n.div_ceil(cfg.batch_size);
    let (mut beta, mut lambda) = (tcfg.beta_init, tcfg.lambda_init);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Parameters)> = None;
    let mut since_best = 0;

    for epoch in 1..=tcfg.max_epochs {
        let mut acc = LossComponents::default();
        for _ in 0..batches {
            let idx = sampler.next_batch(cfg.batch_size);
            let batch = Batch {
                inputs: idx.iter().map(|&i| &train_data.inputs[i]).collect(),
                labels: idx.iter().map(|&i| train_data.labels[i]).collect(),
                noise: draw_noise(&mut noise_rng, idx.len(), cfg.latent_dim),
            };
            let (parts, grads) = match tcfg.precision {
                Precision::F32 => step::<f32>(&model.params, cfg, &batch, beta, lambda, norm.sd, n)?,
                Precision::F64 => step::<f64>(&model.params, cfg, &batch, beta, lambda, norm.sd, n)?,
            };
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite { op: "gradient" });
            }
            adam.step(&mut flat, &grads, &adam_cfg);
            model.params.assign_flat(&flat);
            acc.accumulate(&parts.scaled(1.0 / batches as f64));
        }
        let val = evaluate_loss(&model, validation, beta, lambda, tcfg.precision)?;
        let record = EpochRecord {
            epoch,
            train: acc,
            validation: val,
            beta,
            lambda,
        };
        on_epoch(&record);
        history.push(record);

        if best.as_ref().is_none_or(|(_, v, _)| val.total < *v) {
            best = Some((epoch, val.total, model.params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if !tcfg.freeze_coefficients {
            beta = coeff_update(beta, acc.kl, cfg.kl_target_per_dim, tcfg.controller_gain, tcfg.beta_bounds);
            lambda = coeff_update(lambda, acc.tc, cfg.tc_target, tcfg.controller_gain, tcfg.lambda_bounds);
        }
        if since_best >= tcfg.patience && epoch >= tcfg.min_epochs {
            break;
        }
    }

    let (best_epoch, best_val, params) = best.ok_or_else(|| Error::InsufficientData("no epochs run".into()))?;
    let last = history.last().map(|r| r.train).unwrap_or_default();
    model.params = params;
    Ok(TrainOutcome {
        model,
        meta: TrainingMeta {
            epochs_run: history.len(),
            best_epoch,
            best_validation_loss: best_val,
            beta,
            lambda,
            kl: last.kl,
            tc: last.tc,
        },
        history,
    })
}

/// History as CSV, one row per epoch.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(
        "epoch,train_total,train_mse,train_focal,train_kl,train_tc,\
         val_total,val_mse,val_focal,val_kl,val_tc,beta,lambda\n",
    );
    for r in history {
        let (t, v) = (&r.train, &r.validation);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.epoch, t.total, t.mse, t.focal, t.kl, t.tc, v.total, v.mse, v.focal, v.kl, v.tc, r.beta, r.lambda
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_halves_are_balanced() {
        let labels: Vec<u8> = (0..50).map(|i| u8::from(i % 7 == 0)).collect();
        let mut s = BalancedSampler::new(&labels, 3).unwrap();
        for _ in 0..20 {
            let b = s.next_batch(8);
            assert_eq!(b.iter().filter(|&&i| labels[i] == 1).count(), 4);
        }
    }

    #[test]
    fn sampler_rejects_single_class() {
        assert!(BalancedSampler::new(&[0, 0, 0], 1).is_err());
    }

    #[test]
    fn chunks_avoid_singletons() {
        assert_eq!(chunks(5, 2), vec![(0, 2), (2, 5)]);
        assert_eq!(chunks(4, 2), vec![(0, 2), (2, 4)]);
        assert_eq!(chunks(3, 8), vec![(0, 3)]);
    }
}
