//! Synthetic linear classification data.
//!
//! Entries of every `x_i` and of a hidden weight vector `z` are drawn uniformly
//! on `[-1, 1]`, labels are `sgn(x_i · z)` with each sign flipped independently
//! with probability `flip_prob`, and finally every feature column is rescaled to
//! unit population variance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{DataGrid, LabelKind};

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub grid: DataGrid,
    /// Hidden weights expressed in the standardized feature coordinates, so
    /// `sgn(x_i · hidden)` is the label before flipping.
    pub hidden: Vec<f64>,
    /// Rows whose label was flipped.
    pub flipped: Vec<bool>,
}

pub fn generate_synthetic(
    n_obs: usize,
    n_features: usize,
    seed: u64,
    flip_prob: f64,
) -> Result<SyntheticData> {
    if n_obs == 0 || n_features == 0 {
        return Err(Error::Size(format!(
            "generator needs N >= 1 and M >= 1, got N={n_obs} M={n_features}"
        )));
    }
    if !(0.0..0.5).contains(&flip_prob) {
        return Err(Error::Config(format!(
            "flip probability {flip_prob} outside [0, 0.5)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: Vec<f64> = (0..n_features)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    let mut x = Vec::with_capacity(n_obs * n_features);
    let mut labels = Vec::with_capacity(n_obs);
    let mut flipped = Vec::with_capacity(n_obs);
    for _ in 0..n_obs {
        let start = x.len();
        x.extend((0..n_features).map(|_| rng.random_range(-1.0..=1.0)));
        let score: f64 = x[start..].iter().zip(&z).map(|(a, b)| a * b).sum();
        let clean = if score >= 0.0 { 1.0 } else { -1.0 };
        let flip = rng.random_bool(flip_prob);
        flipped.push(flip);
        labels.push(if flip { -clean } else { clean });
    }

    let nf = n_obs as f64;
    for (k, zk) in z.iter_mut().enumerate() {
        let col = || x.iter().skip(k).step_by(n_features);
        let mean = col().sum::<f64>() / nf;
        let var = col().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        if var > 0.0 {
            let sd = var.sqrt();
            for v in x.iter_mut().skip(k).step_by(n_features) {
                *v /= sd;
            }
            *zk *= sd;
        } else {
            log::warn!("feature {k} has zero variance; left unscaled");
        }
    }

    let grid = DataGrid::from_dense(n_features, x, labels, LabelKind::Classification)?;
    Ok(SyntheticData {
        grid,
        hidden: z,
        flipped,
    })
}

/// Same design matrix with real-valued targets `x_i · z + noise_sd · ε`,
/// `ε ~ U[-√3, √3]` (unit variance). Used for least-squares problems.
pub fn generate_regression(
    n_obs: usize,
    n_features: usize,
    seed: u64,
    noise_sd: f64,
) -> Result<SyntheticData> {
    let base = generate_synthetic(n_obs, n_features, seed, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let s3 = 3f64.sqrt();
    let targets: Vec<f64> = (0..n_obs)
        .map(|j| base.grid.row(j).dot(&base.hidden) + noise_sd * rng.random_range(-s3..=s3))
        .collect();
    let values: Vec<f64> = (0..n_obs).flat_map(|j| base.grid.row_dense(j)).collect();
    let grid = DataGrid::from_dense(n_features, values, targets, LabelKind::Regression)?;
    Ok(SyntheticData {
        grid,
        hidden: base.hidden,
        flipped: vec![false; n_obs],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disagreement(d: &SyntheticData) -> f64 {
        let g = &d.grid;
        let bad = (0..g.n_obs())
            .filter(|&j| {
                let s = if g.row(j).dot(&d.hidden) >= 0.0 {
                    1.0
                } else {
                    -1.0
                };
                s != g.label(j)
            })
            .count();
        bad as f64 / g.n_obs() as f64
    }

    #[test]
    fn no_flips_means_exact_labels() {
        let d = generate_synthetic(500, 7, 3, 0.0).unwrap();
        assert_eq!(disagreement(&d), 0.0);
    }

    #[test]
    fn flip_rate_within_three_sigma() {
        // Binomial(10000, 0.01): sd = sqrt(0.01 * 0.99 / 10000) ~ 0.000995,
        // so [0.005, 0.015] is wider than 3 sigma.
        let d = generate_synthetic(10_000, 20, 7, 0.01).unwrap();
        let f = disagreement(&d);
        assert!((0.005..=0.015).contains(&f), "flip fraction {f}");
    }

    #[test]
    fn columns_have_unit_variance() {
        let d = generate_synthetic(2_000, 9, 11, 0.01).unwrap();
        let g = &d.grid;
        let n = g.n_obs() as f64;
        for k in 0..g.n_features() {
            let col: Vec<f64> = (0..g.n_obs()).map(|j| g.row_dense(j)[k]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let sample_var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((0.99..=1.01).contains(&sample_var), "col {k}: {sample_var}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(50, 6, 42, 0.01).unwrap();
        let b = generate_synthetic(50, 6, 42, 0.01).unwrap();
        let c = generate_synthetic(50, 6, 43, 0.01).unwrap();
        assert_eq!(a.grid, b.grid);
        assert_ne!(a.grid, c.grid);
    }

    #[test]
    fn rejects_bad_flip_probability() {
        assert!(generate_synthetic(10, 2, 0, 0.5).is_err());
        assert!(generate_synthetic(10, 2, 0, -0.1).is_err());
    }
}
