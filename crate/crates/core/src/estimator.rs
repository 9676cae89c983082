//! The anchor gradient `μ` used by the inner SVRG updates, the exact full
//! gradient, and the feature-truncation error `e`.
//!
//! Sums over observations are split into fixed-size shards of the sorted
//! observation list. Shards may be evaluated on any thread but are always
//! added in shard order, so results are bit-identical for every thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{DataGrid, FeatureSet};
use crate::losses::{accumulate_masked, LossModel};
use crate::sampling::SampleSet;

const SHARD: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGradient {
    /// Dense, zero outside `sample.c`.
    pub mu: Vec<f64>,
    /// Scalar gradient coordinates evaluated, `c·d`.
    pub grad_components: u64,
    /// Inner-product terms evaluated, `b·d`.
    pub inner_products: u64,
}

fn check(grid: &DataGrid, w: &[f64], sample: Option<&SampleSet>) -> Result<()> {
    if w.len() != grid.n_features() {
        return Err(Error::Dimension {
            expected: grid.n_features(),
            actual: w.len(),
            context: "parameter vector vs feature count",
        });
    }
    if let Some(s) = sample {
        if s.b.universe() != grid.n_features() || s.c.universe() != grid.n_features() {
            return Err(Error::Dimension {
                expected: grid.n_features(),
                actual: s.b.universe(),
                context: "sample feature universe",
            });
        }
        if !s.c.is_subset_of(&s.b) {
            return Err(Error::Subset);
        }
        if s.d.is_empty() {
            return Err(Error::Size("empty observation set".into()));
        }
        if let Some(&j) = s.d.iter().find(|&&j| j >= grid.n_obs()) {
            return Err(Error::Index(format!(
                "observation {j} >= N={}",
                grid.n_obs()
            )));
        }
    }
    Ok(())
}

/// `Σ_{j ∈ rows} masked_gradient(j, w, b, c)` with shard-ordered reduction.
fn sharded_sum(
    model: &LossModel,
    grid: &DataGrid,
    w: &[f64],
    rows: &[usize],
    b: &FeatureSet,
    c: &FeatureSet,
) -> Vec<f64> {
    let m = grid.n_features();
    let partials: Vec<Vec<f64>> = rows
        .par_chunks(SHARD)
        .map(|shard| {
            let mut acc = vec![0.0; m];
            for &j in shard {
                accumulate_masked(
                    model.kind,
                    grid.row(j),
                    grid.label(j),
                    w,
                    b,
                    c,
                    1.0,
                    &mut acc,
                );
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; m];
    for part in partials {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    total
}

/// `μ = (1/d) Σ_{j∈D} ∇̄_C f_j(x_j^B ω_B)`.
pub fn approx_full_gradient(
    model: &LossModel,
    grid: &DataGrid,
    w: &[f64],
    sample: &SampleSet,
) -> Result<AnchorGradient> {
    check(grid, w, Some(sample))?;
    let mut mu = sharded_sum(model, grid, w, &sample.d, &sample.b, &sample.c);
    let inv_d = 1.0 / sample.d.len() as f64;
    mu.iter_mut().for_each(|v| *v *= inv_d);
    if model.regularize_inner && model.l2_reg != 0.0 {
        for &k in sample.c.indices() {
            mu[k] += model.l2_reg * w[k];
        }
    }
    let d = sample.d.len() as u64;
    Ok(AnchorGradient {
        mu,
        grad_components: sample.c.len() as u64 * d,
        inner_products: sample.b.len() as u64 * d,
    })
}

/// `∇F(ω)`; the l2 gradient is included when `regularized`.
pub fn exact_full_gradient(
    model: &LossModel,
    grid: &DataGrid,
    w: &[f64],
    regularized: bool,
) -> Result<Vec<f64>> {
    check(grid, w, None)?;
    if grid.n_obs() == 0 {
        return Err(Error::EmptyData);
    }
    let all = FeatureSet::full(grid.n_features());
    let rows: Vec<usize> = (0..grid.n_obs()).collect();
    let mut g = sharded_sum(model, grid, w, &rows, &all, &all);
    let inv_n = 1.0 / grid.n_obs() as f64;
    g.iter_mut().for_each(|v| *v *= inv_n);
    if regularized && model.l2_reg != 0.0 {
        for (gk, wk) in g.iter_mut().zip(w) {
            *gk += model.l2_reg * wk;
        }
    }
    Ok(g)
}

/// `e = (1/d) Σ_{j∈D} [∇̄_C f_j(x_j^B ω_B) − ∇̄_C f_j(x_j ω)]` and its norm.
pub fn estimator_error(
    model: &LossModel,
    grid: &DataGrid,
    w: &[f64],
    sample: &SampleSet,
) -> Result<(f64, Vec<f64>)> {
    check(grid, w, Some(sample))?;
    let all = FeatureSet::full(grid.n_features());
    let truncated = sharded_sum(model, grid, w, &sample.d, &sample.b, &sample.c);
    let exact = sharded_sum(model, grid, w, &sample.d, &all, &sample.c);
    let inv_d = 1.0 / sample.d.len() as f64;
    let e: Vec<f64> = truncated
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b) * inv_d)
        .collect();
    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((norm, e))
}
