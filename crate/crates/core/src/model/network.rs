use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::Bound;
use crate::error::{Error, Result};
use crate::preprocess::{fft_input, standardize, FhrSegment, MaskCode, NormStats, SEGMENT_LEN, SPECTRUM_LEN};
use crate::tensor::{Array, Real, Tape, Var};

/// Bound on |logvar|; applied smoothly as `8 tanh(raw / 8)`.
pub const LOGVAR_LIMIT: f64 = 8.0;
/// Classifier scores are clamped into `[SCORE_EPS, 1 - SCORE_EPS]`.
pub const SCORE_EPS: f64 = 1e-7;

/// Posterior mean and log-variance of one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentStats {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
}

/// Network input for one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentInput {
    /// Standardised values, `0.0` at non-VALID positions.
    pub values: Vec<f64>,
    pub mask: Vec<MaskCode>,
    /// Max-normalised magnitude spectrum (601 bins).
    pub fft: Vec<f64>,
}

impl SegmentInput {
    pub fn prepare(segment: &FhrSegment, norm: &NormStats) -> Result<Self> {
        segment.validate()?;
        let std = standardize(segment, norm);
        Ok(Self {
            values: std.values,
            mask: std.mask,
            fft: fft_input(segment)?,
        })
    }

    fn check(&self) -> Result<()> {
        if self.values.len() != SEGMENT_LEN || self.mask.len() != SEGMENT_LEN || self.fft.len() != SPECTRUM_LEN {
            return Err(Error::Shape {
                op: "segment input",
                detail: format!(
                    "values {}, mask {}, fft {}",
                    self.values.len(),
                    self.mask.len(),
                    self.fft.len()
                ),
            });
        }
        Ok(())
    }
}

fn indicator<T: Real>(mask: &[MaskCode], code: MaskCode, rows: usize, cols: usize) -> Option<Array<T>> {
    if !mask.contains(&code) {
        return None;
    }
    Some(Array::from_fn(rows, cols, |r, c| {
        if mask[r * cols + c] == code {
            T::one()
        } else {
            T::zero()
        }
    }))
}

/// FHR and FFT token sequences (`fhr_tokens x d` and `fft_tokens x d`).
pub fn embed_inputs<T: Real>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &ModelConfig,
    input: &SegmentInput,
) -> Result<(Var, Var)> {
    input.check()?;
    let patch = cfg.token_patch;
    let t = cfg.fhr_tokens();
    let values = Array::from_fn(t, patch, |r, c| {
        let i = r * patch + c;
        if input.mask[i] == MaskCode::Valid {
            T::of(input.values[i])
        } else {
            T::zero()
        }
    });
    let x = tape.constant(values);
    let mut tok = tape.matmul(x, p.var("fhr.embed.w")?)?;
    for (code, name) in [(MaskCode::Missing, "fhr.embed.missing"), (MaskCode::Pad, "fhr.embed.pad")] {
        if let Some(ind) = indicator(&input.mask, code, t, patch) {
            let ind = tape.constant(ind);
            let extra = tape.matmul(ind, p.var(name)?)?;
            tok = tape.add(tok, extra)?;
        }
    }
    tok = tape.add_row(tok, p.var("fhr.embed.b")?)?;
    let fhr = tape.add(tok, p.var("fhr.pos")?)?;

    let tf = cfg.fft_tokens();
    let spec = Array::from_fn(tf, patch, |r, c| {
        input.fft.get(r * patch + c).map_or(T::zero(), |&v| T::of(v))
    });
    let s = tape.constant(spec);
    let mut ftok = tape.matmul(s, p.var("fft.embed.w")?)?;
    ftok = tape.add_row(ftok, p.var("fft.embed.b")?)?;
    let fft = tape.add(ftok, p.var("fft.pos")?)?;
    Ok((fhr, fft))
}

fn layer_norm<T: Real>(tape: &mut Tape<T>, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let n = tape.layer_norm_rows(x)?;
    let g = tape.mul_row(n, p.var(&format!("{prefix}.g"))?)?;
    tape.add_row(g, p.var(&format!("{prefix}.b"))?)
}

/// Pre-norm single-head self-attention block with a ReLU feed-forward
/// sublayer.
pub fn transformer_block<T: Real>(tape: &mut Tape<T>, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let d = tape.shape(x)[1];
    let h = layer_norm(tape, p, &format!("{prefix}.ln1"), x)?;
    let q = tape.matmul(h, p.var(&format!("{prefix}.wq"))?)?;
    let k = tape.matmul(h, p.var(&format!("{prefix}.wk"))?)?;
    let v = tape.matmul(h, p.var(&format!("{prefix}.wv"))?)?;
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt())?;
    let attn = tape.softmax_rows(scores)?;
    let ctx = tape.matmul(attn, v)?;
    let out = tape.matmul(ctx, p.var(&format!("{prefix}.wo"))?)?;
    let x = tape.add(x, out)?;

    let h = layer_norm(tape, p, &format!("{prefix}.ln2"), x)?;
    let f = tape.matmul(h, p.var(&format!("{prefix}.ff1.w"))?)?;
    let f = tape.add_row(f, p.var(&format!("{prefix}.ff1.b"))?)?;
    let f = tape.relu(f)?;
    let f = tape.matmul(f, p.var(&format!("{prefix}.ff2.w"))?)?;
    let f = tape.add_row(f, p.var(&format!("{prefix}.ff2.b"))?)?;
    tape.add(x, f)
}

/// `(mu, logvar)`, each `1 x latent_dim`.
pub fn encode<T: Real>(tape: &mut Tape<T>, p: &Bound, cfg: &ModelConfig, fhr: Var, fft: Var) -> Result<(Var, Var)> {
    let a = transformer_block(tape, p, "enc.fhr", fhr)?;
    let a = tape.mean_rows(a)?;
    let b = transformer_block(tape, p, "enc.fft", fft)?;
    let b = tape.mean_rows(b)?;
    let pooled = tape.concat_cols(&[a, b])?;
    let out = tape.matmul(pooled, p.var("latent.w")?)?;
    let out = tape.add_row(out, p.var("latent.b")?)?;
    let l = cfg.latent_dim;
    let mu = tape.slice_cols(out, 0, l)?;
    let raw = tape.slice_cols(out, l, l)?;
    let lv = tape.scale(raw, 1.0 / LOGVAR_LIMIT)?;
    let lv = tape.tanh(lv)?;
    let logvar = tape.scale(lv, LOGVAR_LIMIT)?;
    Ok((mu, logvar))
}

/// `z = mu + exp(logvar / 2) * noise` on the tape.
pub fn reparameterize_var<T: Real>(tape: &mut Tape<T>, mu: Var, logvar: Var, noise: &[f64]) -> Result<Var> {
    let [r, c] = tape.shape(mu);
    let eps = tape.constant(Array::<T>::from_f64(r, c, noise)?);
    let half = tape.scale(logvar, 0.5)?;
    let sd = tape.exp(half)?;
    let spread = tape.mul(sd, eps)?;
    tape.add(mu, spread)
}

/// Standardised reconstruction, `1 x 1200`.
pub fn decode<T: Real>(tape: &mut Tape<T>, p: &Bound, cfg: &ModelConfig, z: Var) -> Result<Var> {
    let e = tape.matmul(z, p.var("dec.expand.w")?)?;
    let e = tape.add_row(e, p.var("dec.expand.b")?)?;
    let x = tape.reshape(e, cfg.fhr_tokens(), cfg.d_model)?;
    let h = transformer_block(tape, p, "dec.block", x)?;
    let out = tape.matmul(h, p.var("dec.out.w")?)?;
    let out = tape.add_row(out, p.var("dec.out.b")?)?;
    tape.reshape(out, 1, SEGMENT_LEN)
}

/// Score in `[SCORE_EPS, 1 - SCORE_EPS]`, `1 x 1`.
pub fn classify<T: Real>(tape: &mut Tape<T>, p: &Bound, z: Var) -> Result<Var> {
    let n = tape.layer_norm_rows(z)?;
    let logit = tape.matmul(n, p.var("cls.w")?)?;
    let logit = tape.add_row(logit, p.var("cls.b")?)?;
    let s = tape.sigmoid(logit)?;
    tape.clamp(s, SCORE_EPS, 1.0 - SCORE_EPS)
}
