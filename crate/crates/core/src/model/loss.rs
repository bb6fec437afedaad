use serde::{Deserialize, Serialize};

use super::network::LatentStats;
use crate::error::{Error, Result};
use crate::tensor::{logsumexp, Array, Real, Tape, Var};

const LOG_2PI: f64 = 1.8378770664093453;

/// Mean over latent dimensions of the KL divergence to N(0, 1).
pub fn kl_per_dim(stats: &LatentStats) -> f64 {
    let d = stats.mu.len();
    let total: f64 = stats
        .mu
        .iter()
        .zip(&stats.logvar)
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum();
    total / d as f64
}

/// `-(1 - p_t)^gamma * ln p_t`.
pub fn focal_bce(score: f64, label: u8, gamma: f64) -> Result<f64> {
    if !(score > 0.0 && score < 1.0) {
        return Err(Error::Domain {
            op: "focal_bce",
            detail: format!("score {score} outside (0, 1)"),
        });
    }
    if label > 1 {
        return Err(Error::InvalidInput(format!("label {label} not in {{0, 1}}")));
    }
    let pt = if label == 1 { score } else { 1.0 - score };
    let weight = if gamma == 0.0 { 1.0 } else { (1.0 - pt).powf(gamma) };
    Ok(-weight * pt.ln())
}

/// Sample `mu + exp(logvar / 2) * noise`.
pub fn reparameterize(stats: &LatentStats, noise: &[f64]) -> Vec<f64> {
    stats
        .mu
        .iter()
        .zip(&stats.logvar)
        .zip(noise)
        .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
        .collect()
}

/// Importance weights of the batch members when estimating the aggregate
/// posterior density at sample `i`: `1/N` for its own posterior and
/// `(N-1) / (N (M-1))` for each other member, so each row sums to one.
fn log_weights(m: usize, n: usize) -> Result<(f64, f64)> {
    if m < 2 {
        return Err(Error::InvalidInput(format!("total correlation needs a batch of at least 2, got {m}")));
    }
    if n < m {
        return Err(Error::InvalidInput(format!("dataset size {n} smaller than batch {m}")));
    }
    let own = -(n as f64).ln();
    let other = ((n - 1) as f64).ln() - (n as f64).ln() - ((m - 1) as f64).ln();
    Ok((own, other))
}

/// Minibatch estimate of the total correlation of the aggregate posterior,
/// `mean_i [ln q(z_i) - sum_d ln q_d(z_i,d)]`.
pub fn tc_estimate(z: &[Vec<f64>], stats: &[LatentStats], dataset_size: usize) -> Result<f64> {
    let m = z.len();
    if stats.len() != m {
        return Err(Error::Mismatch(format!("{m} samples but {} posteriors", stats.len())));
    }
    let (own, other) = log_weights(m, dataset_size)?;
    let d = z[0].len();
    if z.iter().any(|r| r.len() != d) || stats.iter().any(|s| s.mu.len() != d || s.logvar.len() != d) {
        return Err(Error::Shape {
            op: "tc_estimate",
            detail: "inconsistent latent dimensions".into(),
        });
    }
    let mut total = 0.0;
    let mut joint = vec![0.0; m];
    let mut marg = vec![0.0; m];
    for i in 0..m {
        joint.iter_mut().for_each(|v| *v = 0.0);
        let mut marg_sum = 0.0;
        for k in 0..d {
            for (j, s) in stats.iter().enumerate() {
                let lv = s.logvar[k];
                let diff = z[i][k] - s.mu[k];
                let lp = -0.5 * (diff * diff * (-lv).exp() + lv + LOG_2PI);
                let w = if i == j { own } else { other };
                joint[j] += lp;
                marg[j] = lp + w;
            }
            marg_sum += logsumexp(&marg);
        }
        for (j, v) in joint.iter_mut().enumerate() {
            *v += if i == j { own } else { other };
        }
        total += logsumexp(&joint) - marg_sum;
    }
    Ok(total / m as f64)
}

/// Batch KL per dimension from stacked `mu`, `logvar` (`M x L`).
pub fn kl_var<T: Real>(tape: &mut Tape<T>, mu: Var, logvar: Var) -> Result<Var> {
    let m2 = tape.square(mu)?;
    let e = tape.exp(logvar)?;
    let a = tape.add(m2, e)?;
    let a = tape.sub(a, logvar)?;
    let a = tape.add_scalar(a, -1.0)?;
    let s = tape.mean(a)?;
    tape.scale(s, 0.5)
}

/// Mean focal loss over stacked scores (`M x 1`).
pub fn focal_var<T: Real>(tape: &mut Tape<T>, scores: Var, labels: &[u8], gamma: f64) -> Result<Var> {
    let m = labels.len();
    let sign = tape.constant(Array::from_fn(m, 1, |r, _| T::of(2.0 * labels[r] as f64 - 1.0)));
    let base = tape.constant(Array::from_fn(m, 1, |r, _| T::of(1.0 - labels[r] as f64)));
    let pt = tape.mul(scores, sign)?;
    let pt = tape.add(pt, base)?;
    let logpt = tape.log(pt)?;
    let per = if gamma == 0.0 {
        logpt
    } else {
        let q = tape.scale(pt, -1.0)?;
        let q = tape.add_scalar(q, 1.0)?;
        let lq = tape.log(q)?;
        let lq = tape.scale(lq, gamma)?;
        let w = tape.exp(lq)?;
        tape.mul(w, logpt)?
    };
    let mean = tape.mean(per)?;
    tape.scale(mean, -1.0)
}

/// Masked squared error over VALID positions, in raw units (`sd^2` scale).
pub fn masked_mse_var<T: Real>(
    tape: &mut Tape<T>,
    recon: Var,
    target: Array<T>,
    valid: Array<T>,
    sd: f64,
) -> Result<Var> {
    let count = valid.data().iter().filter(|&&v| v > T::zero()).count();
    if count == 0 {
        return Err(Error::InsufficientData("no VALID positions in batch".into()));
    }
    let t = tape.constant(target);
    let w = tape.constant(valid);
    let diff = tape.sub(recon, t)?;
    let diff = tape.mul(diff, w)?;
    let sq = tape.square(diff)?;
    let s = tape.sum(sq)?;
    tape.scale(s, sd * sd / count as f64)
}

/// Total correlation estimate from stacked `z`, `mu`, `logvar` (`M x L`).
pub fn tc_var<T: Real>(tape: &mut Tape<T>, z: Var, mu: Var, logvar: Var, dataset_size: usize) -> Result<Var> {
    let [m, l] = tape.shape(z);
    let (own, other) = log_weights(m, dataset_size)?;
    let lw = tape.constant(Array::from_fn(m, m, |i, j| T::of(if i == j { own } else { other })));
    let ones_row = tape.constant(Array::filled(1, m, T::one()));
    let ones_col = tape.constant(Array::filled(m, 1, T::one()));
    let mut joint: Option<Var> = None;
    let mut margs = Vec::with_capacity(l);
    for k in 0..l {
        // [i, j] entries: z_ik against posterior j in dimension k
        let zc = tape.slice_cols(z, k, 1)?;
        let za = tape.matmul(zc, ones_row)?;
        let mc = tape.slice_cols(mu, k, 1)?;
        let mct = tape.transpose(mc)?;
        let mb = tape.matmul(ones_col, mct)?;
        let lc = tape.slice_cols(logvar, k, 1)?;
        let lct = tape.transpose(lc)?;
        let lb = tape.matmul(ones_col, lct)?;
        let diff = tape.sub(za, mb)?;
        let sq = tape.square(diff)?;
        let nlb = tape.scale(lb, -1.0)?;
        let prec = tape.exp(nlb)?;
        let quad = tape.mul(sq, prec)?;
        let a = tape.add(quad, lb)?;
        let a = tape.add_scalar(a, LOG_2PI)?;
        let lp = tape.scale(a, -0.5)?;
        joint = Some(match joint {
            None => lp,
            Some(j) => tape.add(j, lp)?,
        });
        let weighted = tape.add(lp, lw)?;
        margs.push(tape.logsumexp_rows(weighted)?);
    }
    let joint = joint.ok_or_else(|| Error::InvalidInput("empty latent".into()))?;
    let joint = tape.add(joint, lw)?;
    let lq = tape.logsumexp_rows(joint)?;
    let margs = tape.concat_cols(&margs)?;
    let msum = tape.sum_cols(margs)?;
    let diff = tape.sub(lq, msum)?;
    tape.mean(diff)
}

/// Loss terms in raw units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub total: f64,
    pub mse: f64,
    pub focal: f64,
    pub kl: f64,
    pub tc: f64,
}

impl LossComponents {
    pub fn scaled(&self, w: f64) -> Self {
        Self {
            total: self.total * w,
            mse: self.mse * w,
            focal: self.focal * w,
            kl: self.kl * w,
            tc: self.tc * w,
        }
    }

    pub fn accumulate(&mut self, other: &Self) {
        self.total += other.total;
        self.mse += other.mse;
        self.focal += other.focal;
        self.kl += other.kl;
        self.tc += other.tc;
    }
}

/// Sum of the four loss terms from their scalar values.
pub fn total_loss(mse: f64, focal: f64, kl: f64, tc: f64, beta: f64, lambda: f64) -> LossComponents {
    LossComponents {
        total: mse + focal + beta * kl + lambda * tc,
        mse,
        focal,
        kl,
        tc,
    }
}
