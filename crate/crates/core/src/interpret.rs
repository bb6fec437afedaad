//! Latent-space analyses: regressions of clinical features on the latent
//! means, PLS feature directions, decoded traversals, PCA and FastICA.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FEATURE_NAMES;
use crate::model::Model;

/// Posterior means, one row per segment, aligned with `index`
/// (`ctg_id`, `start_offset`).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentMatrix {
    data: DMatrix<f64>,
    pub index: Vec<(String, f64)>,
}

impl LatentMatrix {
    pub fn new(rows: Vec<Vec<f64>>, index: Vec<(String, f64)>) -> Result<Self> {
        let n = rows.len();
        if n == 0 || index.len() != n {
            return Err(Error::InvalidInput(format!("{n} latent rows with {} index entries", index.len())));
        }
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape {
                op: "latent matrix",
                detail: "rows must share a non-zero length".into(),
            });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("latent entries must be finite".into()));
        }
        Ok(Self {
            data: DMatrix::from_fn(n, d, |i, j| rows[i][j]),
            index,
        })
    }

    /// Builds a matrix without an index (rows labelled by position).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let index = (0..rows.len()).map(|i| (format!("row{i}"), 0.0)).collect();
        Self::new(rows, index)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.column(j).iter().copied().collect()
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.cols()).map(|j| self.data.column(j).mean()).collect()
    }

    /// Population SD of each column.
    pub fn column_sds(&self) -> Vec<f64> {
        (0..self.cols()).map(|j| population_sd(self.data.column(j).iter().copied())).collect()
    }

    fn centered(&self) -> DMatrix<f64> {
        let means = self.means();
        DMatrix::from_fn(self.rows(), self.cols(), |i, j| self.data[(i, j)] - means[j])
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn population_sd(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let first = v.clone().next();
    if v.clone().all(|x| Some(x) == first) {
        // the rounded mean of a constant column need not equal its value
        return 0.0;
    }
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    (v.map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

fn centered_target(target: &[f64]) -> Result<(DVector<f64>, f64)> {
    let m = mean(target);
    let y = DVector::from_iterator(target.len(), target.iter().map(|v| v - m));
    let ss = y.norm_squared();
    if ss == 0.0 || !ss.is_finite() {
        return Err(Error::InvalidInput("target is constant or non-finite".into()));
    }
    Ok((y, ss))
}

/// In-sample R^2 of an ordinary least-squares fit with intercept of
/// `target` on all latent columns.
pub fn r2_multi(latents: &LatentMatrix, target: &[f64]) -> Result<f64> {
    let (n, d) = (latents.rows(), latents.cols());
    if target.len() != n {
        return Err(Error::Mismatch(format!("{} targets for {n} latent rows", target.len())));
    }
    if n < d + 2 {
        return Err(Error::InsufficientData(format!("{n} rows for {d} latent columns")));
    }
    let (y, ss_tot) = centered_target(target)?;
    let x = latents.centered();
    let svd = x.clone().svd(true, true);
    let beta = svd
        .solve(&y, 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let resid = &y - &x * beta;
    Ok(1.0 - resid.norm_squared() / ss_tot)
}

/// R^2 of a simple linear regression of `y` on `x` (squared correlation).
/// A constant `x` explains nothing.
pub fn r2_single(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("r2_single needs two aligned series of length >= 2".into()));
    }
    let (yc, syy) = centered_target(y)?;
    let mx = mean(x);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Ok(0.0);
    }
    let sxy: f64 = x.iter().zip(yc.iter()).map(|(a, b)| (a - mx) * b).sum();
    Ok((sxy * sxy / (sxx * syy)).min(1.0))
}

/// Unit latent direction tied to a feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub vector: Vec<f64>,
    pub feature: String,
    /// Population SD of the latent rows projected onto `vector`.
    pub projection_sd: f64,
}

impl Direction {
    pub fn project(&self, latents: &LatentMatrix) -> Vec<f64> {
        (0..latents.rows())
            .map(|i| latents.data.row(i).iter().zip(&self.vector).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// First PLS weight vector: `X^T y` on centred data, normalised.
pub fn pls_direction(latents: &LatentMatrix, feature: &str, target: &[f64]) -> Result<Direction> {
    if target.len() != latents.rows() {
        return Err(Error::Mismatch(format!("{} targets for {} latent rows", target.len(), latents.rows())));
    }
    let (y, _) = centered_target(target)?;
    let x = latents.centered();
    let w = x.tr_mul(&y);
    let norm = w.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidInput(format!("{feature} has zero covariance with the latents")));
    }
    let v = w / norm;
    let proj = &x * &v;
    Ok(Direction {
        vector: v.iter().copied().collect(),
        feature: feature.to_string(),
        projection_sd: population_sd(proj.iter().copied()),
    })
}

/// Decoded signals (bpm) along a latent line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Traversal {
    pub multipliers: Vec<f64>,
    pub signals: Vec<Vec<f64>>,
}

impl Traversal {
    /// Mean bpm of each decoded signal.
    pub fn signal_means(&self) -> Vec<f64> {
        self.signals.iter().map(|s| mean(s)).collect()
    }

    /// One column per multiplier, one row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample");
        for m in &self.multipliers {
            out.push_str(&format!(",m{m}"));
        }
        out.push('\n');
        let len = self.signals.first().map_or(0, Vec::len);
        for i in 0..len {
            out.push_str(&i.to_string());
            for s in &self.signals {
                out.push_str(&format!(",{}", s[i]));
            }
            out.push('\n');
        }
        out
    }
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

fn traverse(model: &Model, center: &[f64], v: &[f64], sd: f64, multipliers: Vec<f64>) -> Result<Traversal> {
    let mut session = model.session();
    let signals = multipliers
        .iter()
        .map(|&m| {
            let z: Vec<f64> = center.iter().zip(v).map(|(c, d)| c + m * sd * d).collect();
            session.decode_raw(&z)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Traversal { multipliers, signals })
}

fn check_steps(model: &Model, latents: &LatentMatrix, steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::Config("traversal needs at least one step".into()));
    }
    if latents.cols() != model.latent_dim() {
        return Err(Error::Mismatch(format!(
            "latent matrix has {} columns, model latent_dim is {}",
            latents.cols(),
            model.latent_dim()
        )));
    }
    Ok(())
}

/// Decodes `mean + m * projection_sd * v` for `steps` multipliers evenly
/// spaced over [-10, 10].
pub fn traverse_direction(model: &Model, latents: &LatentMatrix, dir: &Direction, steps: usize) -> Result<Traversal> {
    check_steps(model, latents, steps)?;
    if dir.vector.len() != latents.cols() {
        return Err(Error::Mismatch("direction length differs from latent_dim".into()));
    }
    traverse(model, &latents.means(), &dir.vector, dir.projection_sd, linspace(-10.0, 10.0, steps))
}

/// Decodes the mean latent shifted along one dimension by multiples of
/// that dimension's SD over [-5, 5].
pub fn traverse_dimension(model: &Model, latents: &LatentMatrix, dim: usize, steps: usize) -> Result<Traversal> {
    check_steps(model, latents, steps)?;
    if dim >= latents.cols() {
        return Err(Error::InvalidInput(format!("dimension {dim} out of range for {}", latents.cols())));
    }
    let mut v = vec![0.0; latents.cols()];
    v[dim] = 1.0;
    traverse(model, &latents.means(), &v, latents.column_sds()[dim], linspace(-5.0, 5.0, steps))
}

/// Principal components of the latent means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Orthonormal components, one per row, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    /// Variances along each component (sample covariance, `n - 1`).
    pub variances: Vec<f64>,
}

impl Pca {
    pub fn explained_ratio(&self) -> Vec<f64> {
        let total: f64 = self.variances.iter().sum();
        self.variances.iter().map(|v| v / total).collect()
    }
}

fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.tr_mul(x) / (x.nrows() as f64 - 1.0)
}

/// Sorted eigenpairs of a symmetric matrix, largest first; eigenvector
/// signs fixed so the largest-magnitude entry is positive.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let v = eig.eigenvectors.column(i).into_owned();
            let k = v.iamax();
            if v[k] < 0.0 {
                -v
            } else {
                v
            }
        })
        .collect();
    (values, vectors)
}

pub fn pca(latents: &LatentMatrix) -> Result<Pca> {
    if latents.rows() <= latents.cols() {
        return Err(Error::InsufficientData(format!(
            "pca needs more rows ({}) than columns ({})",
            latents.rows(),
            latents.cols()
        )));
    }
    let (variances, vectors) = sorted_eigen(covariance(&latents.centered()));
    Ok(Pca {
        mean: latents.means(),
        components: vectors.iter().map(|v| v.iter().copied().collect()).collect(),
        variances,
    })
}

/// FastICA result; unmixing rows live in the whitened space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ica {
    pub mean: Vec<f64>,
    /// `n_components x latent_dim` whitening matrix.
    pub whitening: Vec<Vec<f64>>,
    /// Orthonormal unmixing rows, ordered by decreasing negentropy.
    pub unmixing: Vec<Vec<f64>>,
    pub negentropy: Vec<f64>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
}

/// FastICA options.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcaConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-9,
            seed: 1,
        }
    }
}

/// `E[log cosh(nu)]` for standard normal `nu`.
const GAUSS_LOGCOSH: f64 = 0.374_567_207_491_438_2;

fn log_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl Ica {
    fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    /// Unmixing in data space: `W K`, `n_components x latent_dim`.
    pub fn unmixing_data_space(&self) -> Vec<Vec<f64>> {
        let wk = Self::to_matrix(&self.unmixing) * Self::to_matrix(&self.whitening);
        (0..wk.nrows()).map(|i| wk.row(i).iter().copied().collect()).collect()
    }

    /// Latent-space direction of each component (columns of the
    /// pseudo-inverse of `W K`), one per row.
    pub fn mixing_directions(&self) -> Result<Vec<Vec<f64>>> {
        let wk = Self::to_matrix(&self.unmixing) * Self::to_matrix(&self.whitening);
        let pinv = wk.pseudo_inverse(1e-12).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok((0..pinv.ncols()).map(|j| pinv.column(j).iter().copied().collect()).collect())
    }

    /// Estimated sources, one row per observation.
    pub fn sources(&self, data: &LatentMatrix) -> Result<Vec<Vec<f64>>> {
        if data.cols() != self.mean.len() {
            return Err(Error::Mismatch("data width differs from the fitted latent_dim".into()));
        }
        let wk = Self::to_matrix(&self.unmixing) * Self::to_matrix(&self.whitening);
        Ok((0..data.rows())
            .map(|i| {
                let x = DVector::from_iterator(data.cols(), (0..data.cols()).map(|j| data.data[(i, j)] - self.mean[j]));
                (&wk * x).iter().copied().collect()
            })
            .collect())
    }
}

/// Deflationary FastICA with the `tanh` contrast on PCA-whitened data.
pub fn ica(latents: &LatentMatrix, n_components: usize, cfg: &IcaConfig) -> Result<Ica> {
    let (n, d) = (latents.rows(), latents.cols());
    if n_components == 0 || n_components > d {
        return Err(Error::Config(format!("n_components must be in 1..={d}")));
    }
    if n <= d {
        return Err(Error::InsufficientData("ica needs more rows than columns".into()));
    }
    let xc = latents.centered();
    let (values, vectors) = sorted_eigen(covariance(&xc));
    if values[n_components - 1] <= 1e-12 * values[0].max(f64::MIN_POSITIVE) {
        return Err(Error::InsufficientData("latent covariance is rank deficient for the requested components".into()));
    }
    let k = DMatrix::from_fn(n_components, d, |i, j| vectors[i][j] / values[i].sqrt());
    // whitened data, one column per observation
    let z = &k * xc.transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut found: Vec<DVector<f64>> = Vec::new();
    let mut converged = Vec::new();
    let mut iterations = Vec::new();
    for _ in 0..n_components {
        let mut w = DVector::from_fn(n_components, |_, _| StandardNormal.sample(&mut rng));
        orthogonalize(&mut w, &found);
        w.normalize_mut();
        let mut ok = false;
        let mut iters = cfg.max_iter;
        for it in 0..cfg.max_iter {
            let proj = z.tr_mul(&w);
            let g = proj.map(f64::tanh);
            let gp_mean = g.iter().map(|t| 1.0 - t * t).sum::<f64>() / n as f64;
            let mut next = (&z * g) / n as f64 - &w * gp_mean;
            orthogonalize(&mut next, &found);
            let norm = next.norm();
            if !(norm > 0.0) {
                break;
            }
            next /= norm;
            let lim = (next.dot(&w).abs() - 1.0).abs();
            w = next;
            if lim < cfg.tol {
                ok = true;
                iters = it + 1;
                break;
            }
        }
        found.push(w);
        converged.push(ok);
        iterations.push(iters);
    }
    let negentropy: Vec<f64> = found
        .iter()
        .map(|w| {
            let proj = z.tr_mul(w);
            let g = proj.iter().map(|&u| log_cosh(u)).sum::<f64>() / n as f64;
            (g - GAUSS_LOGCOSH).powi(2)
        })
        .collect();
    let mut order: Vec<usize> = (0..n_components).collect();
    order.sort_by(|&a, &b| negentropy[b].total_cmp(&negentropy[a]));
    Ok(Ica {
        mean: latents.means(),
        whitening: (0..n_components).map(|i| k.row(i).iter().copied().collect()).collect(),
        unmixing: order.iter().map(|&i| found[i].iter().copied().collect()).collect(),
        negentropy: order.iter().map(|&i| negentropy[i]).collect(),
        converged: order.iter().map(|&i| converged[i]).collect(),
        iterations: order.iter().map(|&i| iterations[i]).collect(),
    })
}

fn orthogonalize(w: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for b in basis {
        let c = w.dot(b);
        *w -= b * c;
    }
}

/// One row of the R^2 panel table; `None` where the statistic is undefined
/// (for example a feature that is constant over the analysed segments).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub feature: String,
    /// Feature on all latent means.
    pub latents: Option<f64>,
    pub labels: Option<f64>,
    pub scores: Option<f64>,
    /// Feature against `|score - label|`.
    pub errors: Option<f64>,
    /// Labels against the projection on the feature's PLS direction.
    pub pls_labels: Option<f64>,
    /// Scores against the projection on the feature's PLS direction.
    pub pls_scores: Option<f64>,
}

/// R^2 table over the nine clinical features. All inputs are aligned by
/// row; rows with unavailable features should be removed by the caller.
pub fn r2_panel(latents: &LatentMatrix, features: &[[f64; 9]], labels: &[u8], scores: &[f64]) -> Result<Vec<PanelRow>> {
    let n = latents.rows();
    if features.len() != n || labels.len() != n || scores.len() != n {
        return Err(Error::Mismatch("latents, features, labels and scores must align".into()));
    }
    let lab: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let err: Vec<f64> = scores.iter().zip(&lab).map(|(s, l)| (s - l).abs()).collect();
    let mut rows = Vec::with_capacity(FEATURE_NAMES.len());
    for (k, name) in FEATURE_NAMES.iter().enumerate() {
        let f: Vec<f64> = features.iter().map(|r| r[k]).collect();
        let dir = pls_direction(latents, name, &f).ok();
        let proj = dir.as_ref().map(|d| d.project(latents));
        rows.push(PanelRow {
            feature: name.to_string(),
            latents: r2_multi(latents, &f).ok(),
            labels: r2_single(&f, &lab).ok(),
            scores: r2_single(&f, scores).ok(),
            errors: r2_single(&f, &err).ok(),
            pls_labels: proj.as_ref().and_then(|p| r2_single(p, &lab).ok()),
            pls_scores: proj.as_ref().and_then(|p| r2_single(p, scores).ok()),
        });
    }
    Ok(rows)
}

pub fn r2_panel_csv(rows: &[PanelRow]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    let mut out = String::from("feature,latents,labels,scores,errors,pls_labels,pls_scores\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.feature,
            cell(r.latents),
            cell(r.labels),
            cell(r.scores),
            cell(r.errors),
            cell(r.pls_labels),
            cell(r.pls_scores)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_single_five_points() {
        // x = 1..5, y = [2, 4, 5, 4, 5]: sxy = 6, sxx = 10, syy = 6
        let r = r2_single(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 5.0, 4.0, 5.0]).unwrap();
        assert!((r - 36.0 / 60.0).abs() < 1e-12);
        let r = r2_single(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn r2_multi_rejects_constant_target() {
        let m = LatentMatrix::from_rows((0..10).map(|i| vec![i as f64, (i * i) as f64]).collect()).unwrap();
        assert!(r2_multi(&m, &[3.0; 10]).is_err());
    }

    #[test]
    fn pls_single_column_feature() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos(), i as f64 % 3.0]).collect();
        let m = LatentMatrix::from_rows(rows.clone()).unwrap();
        let target: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        let dir = pls_direction(&m, "f", &target).unwrap();
        let norm: f64 = dir.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_cosh_is_stable() {
        assert!((log_cosh(0.3) - 0.3f64.cosh().ln()).abs() < 1e-15);
        assert!((log_cosh(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-9);
    }
}
