use ctg_vae::features::FEATURE_NAMES;
use ctg_vae::interpret::{
    ica, pca, pls_direction, r2_multi, r2_panel, r2_single, traverse_dimension, traverse_direction, IcaConfig,
    LatentMatrix,
};
use ctg_vae::model::{init_parameters, Model, ModelConfig};
use ctg_vae::preprocess::NormStats;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, l: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..l).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

fn matrix(rows: &[Vec<f64>]) -> LatentMatrix {
    LatentMatrix::from_rows(rows.to_vec()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn random_orthogonal(rng: &mut ChaCha8Rng, l: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(l, l, |_, _| StandardNormal.sample(rng));
    a.qr().q()
}

fn transform(rows: &[Vec<f64>], a: &DMatrix<f64>, shift: &[f64]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| (0..a.ncols()).map(|j| (0..r.len()).map(|i| r[i] * a[(i, j)]).sum::<f64>() + shift[j]).collect())
        .collect()
}

#[test]
fn r2_multi_on_planted_linear_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows = gaussian_rows(&mut rng, 200, 5);
    let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] - r[3] + 3.0).collect();
    assert!((r2_multi(&matrix(&rows), &y).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn r2_single_five_point_closed_form() {
    // x = 1..5, y = [1, 3, 2, 5, 4]: sxy = 8, sxx = 10, syy = 10
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let y = [1.0, 3.0, 2.0, 5.0, 4.0];
    assert!((r2_single(&x, &y).unwrap() - 0.64).abs() < 1e-12);
    let m = matrix(&x.iter().map(|&v| vec![v]).collect::<Vec<_>>());
    assert!((r2_multi(&m, &y).unwrap() - 0.64).abs() < 1e-12);
    assert!((r2_single(&x, &x.map(|v| 2.0 * v + 1.0)).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn r2_multi_null_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 10_000;
    let l = 8;
    let rows = gaussian_rows(&mut rng, n, l);
    let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let r2 = r2_multi(&matrix(&rows), &y).unwrap();
    assert!(r2 < 0.02, "{r2}");
    // expected value l / (n - 1) under the null
    assert!(r2 < 6.0 * l as f64 / (n - 1) as f64, "{r2}");
}

#[test]
fn r2_multi_is_affine_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows = gaussian_rows(&mut rng, 300, 4);
    let y: Vec<f64> = rows.iter().map(|r| r[0] * r[1] + r[2] + 0.3 * rng.random::<f64>()).collect();
    let a = DMatrix::<f64>::from_fn(4, 4, |i, j| if i == j { 2.0 } else { rng.random_range(-0.5..0.5) });
    assert!(a.determinant().abs() > 1e-3);
    let moved = transform(&rows, &a, &[5.0, -3.0, 0.5, 100.0]);
    let r0 = r2_multi(&matrix(&rows), &y).unwrap();
    let r1 = r2_multi(&matrix(&moved), &y).unwrap();
    assert!((r0 - r1).abs() < 1e-9, "{r0} {r1}");
}

#[test]
fn pls_direction_analytic_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows = gaussian_rows(&mut rng, 20_000, 4);
    let y: Vec<f64> = rows.iter().map(|r| (r[0] + r[1]) / 2f64.sqrt()).collect();
    let d = pls_direction(&matrix(&rows), "f", &y).unwrap();
    let want = [0.5f64.sqrt(), 0.5f64.sqrt(), 0.0, 0.0];
    let cos = dot(&d.vector, &want);
    assert!(cos > 0.999, "{:?}", d.vector);
}

#[test]
fn pls_direction_matches_random_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let l = 4;
    let rows = gaussian_rows(&mut rng, 500, l);
    let y: Vec<f64> = rows.iter().map(|r| 0.7 * r[0] - 1.2 * r[2] + 0.4 * r[3] + rng.random::<f64>()).collect();
    let m = matrix(&rows);
    let d = pls_direction(&m, "f", &y).unwrap();
    let ym = y.iter().sum::<f64>() / y.len() as f64;
    let means = m.means();
    let cov = |v: &[f64]| -> f64 {
        rows.iter()
            .zip(&y)
            .map(|(r, t)| (dot(r, v) - dot(&means, v)) * (t - ym))
            .sum()
    };
    let mut best = (f64::NEG_INFINITY, vec![0.0; l]);
    for _ in 0..100_000 {
        let mut v: Vec<f64> = (0..l).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let c = cov(&v);
        if c > best.0 {
            best = (c, v);
        }
    }
    let angle = dot(&d.vector, &best.1).clamp(-1.0, 1.0).acos().to_degrees();
    assert!(angle < 5.0, "angle {angle}");
    assert!(cov(&d.vector) >= best.0 - 1e-9);
}

#[test]
fn pls_direction_rotates_covariantly() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows = gaussian_rows(&mut rng, 400, 5);
    let y: Vec<f64> = rows.iter().map(|r| r[1] - 0.5 * r[4] + 0.2 * rng.random::<f64>()).collect();
    let q = random_orthogonal(&mut rng, 5);
    let rotated = transform(&rows, &q, &[0.0; 5]);
    let (m0, m1) = (matrix(&rows), matrix(&rotated));
    let d0 = pls_direction(&m0, "f", &y).unwrap();
    let d1 = pls_direction(&m1, "f", &y).unwrap();
    // rows rotate as z Q, so directions rotate as Q^T v
    let expected: Vec<f64> = (0..5).map(|j| (0..5).map(|i| q[(i, j)] * d0.vector[i]).sum()).collect();
    let sign = dot(&expected, &d1.vector).signum();
    for (a, b) in expected.iter().zip(&d1.vector) {
        assert!((a - sign * b).abs() < 1e-10);
    }
    for (p0, p1) in d0.project(&m0).iter().zip(d1.project(&m1)) {
        assert!((p0 - sign * p1).abs() < 1e-9);
    }
    assert!((d0.projection_sd - d1.projection_sd).abs() < 1e-10);
}

#[test]
fn pca_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let base = gaussian_rows(&mut rng, 300, 4);
    let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
    let rows = transform(&base, &a, &[1.0, 2.0, 3.0, 4.0]);
    let m = matrix(&rows);
    let p = pca(&m).unwrap();
    let total: f64 = (0..4)
        .map(|j| {
            let c = m.column(j);
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (c.len() - 1) as f64
        })
        .sum();
    assert!((p.variances.iter().sum::<f64>() - total).abs() < 1e-8);
    assert!(p.variances.windows(2).all(|w| w[0] >= w[1]));
    for i in 0..4 {
        for j in 0..4 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((dot(&p.components[i], &p.components[j]) - want).abs() < 1e-10);
        }
    }
    // projecting on every component and back reproduces the centred data
    for r in &rows {
        let c: Vec<f64> = r.iter().zip(&p.mean).map(|(a, b)| a - b).collect();
        let mut back = vec![0.0; 4];
        for comp in &p.components {
            let s = dot(&c, comp);
            for (b, w) in back.iter_mut().zip(comp) {
                *b += s * w;
            }
        }
        for (x, y) in back.iter().zip(&c) {
            assert!((x - y).abs() < 1e-8);
        }
    }
}

#[test]
fn pca_of_points_on_a_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| {
            let t: f64 = StandardNormal.sample(&mut rng);
            vec![t, 2.0 * t + 1e-3 * rng.random::<f64>(), -t]
        })
        .collect();
    let p = pca(&matrix(&rows)).unwrap();
    assert!(p.explained_ratio()[0] > 0.99);
}

fn mixed_sources(rng: &mut ChaCha8Rng, n: usize, k: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let sources: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..k)
                .map(|j| match j % 3 {
                    0 => rng.random_range(-3f64.sqrt()..3f64.sqrt()),
                    1 => {
                        // Laplace with unit variance
                        let u: f64 = rng.random_range(-0.5..0.5);
                        -u.signum() * (1.0 - 2.0 * u.abs()).ln() / 2f64.sqrt()
                    }
                    _ => {
                        if rng.random_bool(0.5) {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                })
                .collect()
        })
        .collect();
    let a = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { rng.random_range(-0.8..0.8) });
    (transform(&sources, &a, &vec![0.0; k]), sources)
}

fn assert_recovers(observed: &[Vec<f64>], sources: &[Vec<f64>], k: usize) {
    let m = matrix(observed);
    let res = ica(&m, k, &IcaConfig::default()).unwrap();
    assert!(res.converged.iter().all(|&c| c));
    let est = res.sources(&m).unwrap();
    for s in 0..k {
        let truth: Vec<f64> = sources.iter().map(|r| r[s]).collect();
        let best = (0..k)
            .map(|e| corr(&truth, &est.iter().map(|r| r[e]).collect::<Vec<_>>()).abs())
            .fold(0.0, f64::max);
        assert!(best >= 0.95, "source {s}: {best}");
    }
    // unmixing rows are orthonormal in the whitened space
    for i in 0..k {
        for j in 0..k {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((dot(&res.unmixing[i], &res.unmixing[j]) - want).abs() < 1e-8);
        }
    }
    assert!(res.negentropy.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn ica_recovers_two_uniform_sources() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sources: Vec<Vec<f64>> = (0..5000)
        .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, -0.4, 1.0]);
    assert_recovers(&transform(&sources, &a, &[0.0, 0.0]), &sources, 2);
}

#[test]
fn ica_recovers_three_mixed_sources() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (obs, src) = mixed_sources(&mut rng, 5000, 3);
    assert_recovers(&obs, &src, 3);
}

#[test]
fn ica_on_gaussian_data_finds_no_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let gauss = ica(&matrix(&gaussian_rows(&mut rng, 5000, 3)), 3, &IcaConfig::default()).unwrap();
    let (obs, _) = mixed_sources(&mut rng, 5000, 3);
    let mixed = ica(&matrix(&obs), 3, &IcaConfig::default()).unwrap();
    let weakest_signal = mixed.negentropy.iter().copied().fold(f64::INFINITY, f64::min);
    let strongest_noise = gauss.negentropy[0];
    assert!(
        gauss.converged.iter().any(|c| !c) || strongest_noise < weakest_signal / 10.0,
        "{strongest_noise} vs {weakest_signal}"
    );
}

#[test]
fn ica_is_deterministic_given_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (obs, _) = mixed_sources(&mut rng, 1000, 3);
    let m = matrix(&obs);
    assert_eq!(ica(&m, 3, &IcaConfig::default()).unwrap(), ica(&m, 3, &IcaConfig::default()).unwrap());
}

fn tiny_model() -> Model {
    let cfg = ModelConfig {
        latent_dim: 3,
        d_model: 8,
        token_patch: 100,
        ..ModelConfig::default()
    };
    Model::new(cfg.clone(), NormStats::new(140.0, 10.0).unwrap(), init_parameters(&cfg).unwrap()).unwrap()
}

#[test]
fn traversal_centre_is_the_decoded_mean() {
    let model = tiny_model();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let rows = gaussian_rows(&mut rng, 50, 3);
    let m = matrix(&rows);
    let y: Vec<f64> = rows.iter().map(|r| r[0] - r[2]).collect();
    let dir = pls_direction(&m, "f", &y).unwrap();
    let centre = model.session().decode_raw(&m.means()).unwrap();
    let t = traverse_direction(&model, &m, &dir, 9).unwrap();
    assert_eq!(t.multipliers.len(), 9);
    assert_eq!(t.multipliers[0], -10.0);
    assert_eq!(t.multipliers[4], 0.0);
    assert_eq!(t.signals[4], centre);
    for d in 0..3 {
        let t = traverse_dimension(&model, &m, d, 9).unwrap();
        assert_eq!((t.multipliers[0], t.multipliers[8]), (-5.0, 5.0));
        assert_eq!(t.signals[4], centre);
    }
}

#[test]
fn traversal_of_constant_dimension_is_constant() {
    let model = tiny_model();
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.1, 0.7, -(i as f64) * 0.05]).collect();
    let t = traverse_dimension(&model, &matrix(&rows), 1, 9).unwrap();
    assert!(t.signals.iter().all(|s| *s == t.signals[0]));
}

#[test]
fn r2_panel_rows_and_planted_feature() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let rows = gaussian_rows(&mut rng, 200, 4);
    let m = matrix(&rows);
    let labels: Vec<u8> = rows.iter().map(|r| u8::from(r[0] > 0.0)).collect();
    let scores: Vec<f64> = rows.iter().map(|r| 1.0 / (1.0 + (-r[0]).exp())).collect();
    let features: Vec<[f64; 9]> = rows
        .iter()
        .map(|r| {
            let mut f = [0.0; 9];
            f[0] = 140.0 + 3.0 * r[1] - r[2];
            for (k, v) in f.iter_mut().enumerate().skip(1) {
                *v = rng.random::<f64>() + k as f64;
            }
            f[8] = 0.0;
            f
        })
        .collect();
    let panel = r2_panel(&m, &features, &labels, &scores).unwrap();
    let names: Vec<&str> = panel.iter().map(|r| r.feature.as_str()).collect();
    assert_eq!(names, FEATURE_NAMES);
    assert!((panel[0].latents.unwrap() - 1.0).abs() < 1e-9);
    // constant feature: undefined statistics are reported as missing
    assert_eq!(panel[8].latents, None);
    assert_eq!(panel, r2_panel(&m, &features, &labels, &scores).unwrap());
}
