//! Losses for linear models, `F(ω) = (1/N) Σ_j f̄(x_j·ω, y_j) + (λ/2)‖ω‖²`,
//! with whole-vector, feature-masked and sub-block gradient forms.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DataGrid, FeatureSet, LabelKind, PartitionScheme, RowView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `max(0, 1 - yz)`; the subgradient at `yz = 1` is taken to be 0.
    Hinge,
    /// Squared hinge, `max(0, 1 - yz)² / 2`.
    SmoothedHinge,
    Logistic,
    /// `(z - y)² / 2`
    LeastSquares,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Hinge => "hinge",
            LossKind::SmoothedHinge => "smoothed_hinge",
            LossKind::Logistic => "logistic",
            LossKind::LeastSquares => "least_squares",
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, LossKind::Hinge)
    }

    pub fn needs_sign_labels(self) -> bool {
        !matches!(self, LossKind::LeastSquares)
    }

    pub fn value(self, z: f64, y: f64) -> f64 {
        match self {
            LossKind::Hinge => (1.0 - y * z).max(0.0),
            LossKind::SmoothedHinge => {
                let s = (1.0 - y * z).max(0.0);
                0.5 * s * s
            }
            LossKind::Logistic => softplus(-y * z),
            LossKind::LeastSquares => 0.5 * (z - y) * (z - y),
        }
    }

    /// `∂f̄/∂z`
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            LossKind::Hinge => {
                if y * z < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            LossKind::SmoothedHinge => -y * (1.0 - y * z).max(0.0),
            LossKind::Logistic => -y * sigmoid(-y * z),
            LossKind::LeastSquares => z - y,
        }
    }

    /// Upper bound on `∂²f̄/∂z²` for labels in {-1, +1}.
    pub fn curvature_bound(self) -> f64 {
        match self {
            LossKind::Hinge | LossKind::SmoothedHinge | LossKind::LeastSquares => 1.0,
            LossKind::Logistic => 0.25,
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinge" => Ok(LossKind::Hinge),
            "smoothed_hinge" => Ok(LossKind::SmoothedHinge),
            "logistic" => Ok(LossKind::Logistic),
            "least_squares" => Ok(LossKind::LeastSquares),
            other => Err(Error::Config(format!("unknown loss {other:?}"))),
        }
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub kind: LossKind,
    /// Coefficient `λ` of `(λ/2)‖ω‖²`.
    #[serde(default)]
    pub l2_reg: f64,
    /// Add `λ·ω` to the per-observation terms of the inner updates and to the
    /// anchor gradient. Off by default, so the inner update is the plain
    /// per-observation loss gradient.
    #[serde(default)]
    pub regularize_inner: bool,
}

impl LossModel {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            l2_reg: 0.0,
            regularize_inner: false,
        }
    }

    pub fn with_l2(mut self, l2_reg: f64) -> Self {
        self.l2_reg = l2_reg;
        self
    }

    pub fn check_grid(&self, grid: &DataGrid) -> Result<()> {
        if self.kind.needs_sign_labels() && grid.label_kind() == LabelKind::Regression {
            if let Some((row, &label)) = grid
                .labels()
                .iter()
                .enumerate()
                .find(|(_, &y)| y != 1.0 && y != -1.0)
            {
                return Err(Error::InvalidLabel { row, label });
            }
        }
        Ok(())
    }
}

fn check_dim(grid: &DataGrid, w: &[f64]) -> Result<()> {
    if w.len() != grid.n_features() {
        return Err(Error::Dimension {
            expected: grid.n_features(),
            actual: w.len(),
            context: "parameter vector vs feature count",
        });
    }
    Ok(())
}

/// `F(ω)`, including the l2 term.
pub fn loss_value(model: &LossModel, grid: &DataGrid, w: &[f64]) -> Result<f64> {
    check_dim(grid, w)?;
    if grid.n_obs() == 0 {
        return Err(Error::EmptyData);
    }
    let sum: f64 = (0..grid.n_obs())
        .map(|j| model.kind.value(grid.row(j).dot(w), grid.label(j)))
        .sum();
    let reg = if model.l2_reg > 0.0 {
        0.5 * model.l2_reg * w.iter().map(|v| v * v).sum::<f64>()
    } else {
        0.0
    };
    Ok(sum / grid.n_obs() as f64 + reg)
}

/// `f̄′(x_j·ω, y_j)·x_j`, plus `λ·ω` when `regularized`.
pub fn per_obs_gradient(
    model: &LossModel,
    grid: &DataGrid,
    j: usize,
    w: &[f64],
    regularized: bool,
) -> Result<Vec<f64>> {
    check_dim(grid, w)?;
    grid.check_row(j)?;
    let row = grid.row(j);
    let d = model.kind.derivative(row.dot(w), grid.label(j));
    let mut g = vec![0.0; grid.n_features()];
    row.for_each_nonzero(|k, x| g[k] = d * x);
    if regularized && model.l2_reg != 0.0 {
        for (gk, wk) in g.iter_mut().zip(w) {
            *gk += model.l2_reg * wk;
        }
    }
    Ok(g)
}

/// Gradient of observation `j` with the inner product taken over `b` only and
/// only the coordinates in `c` kept.
pub fn masked_gradient(
    model: &LossModel,
    grid: &DataGrid,
    j: usize,
    w: &[f64],
    b: &FeatureSet,
    c: &FeatureSet,
) -> Result<Vec<f64>> {
    check_dim(grid, w)?;
    grid.check_row(j)?;
    if !c.is_subset_of(b) {
        return Err(Error::Subset);
    }
    let mut g = vec![0.0; grid.n_features()];
    accumulate_masked(model.kind, grid.row(j), grid.label(j), w, b, c, 1.0, &mut g);
    Ok(g)
}

/// `out[k] += scale · f̄′(x_j^B·ω_B, y) · x_{j,k}` for `k ∈ c`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_masked(
    kind: LossKind,
    row: RowView<'_>,
    y: f64,
    w: &[f64],
    b: &FeatureSet,
    c: &FeatureSet,
    scale: f64,
    out: &mut [f64],
) {
    if c.is_empty() {
        return;
    }
    let d = kind.derivative(row.dot_subset(b, w), y) * scale;
    if d == 0.0 {
        return;
    }
    match row {
        RowView::Dense(xs) => {
            if c.is_full() {
                for (o, x) in out.iter_mut().zip(xs) {
                    *o += d * x;
                }
            } else {
                for &k in c.indices() {
                    out[k] += d * xs[k];
                }
            }
        }
        RowView::Sparse { .. } => row.for_each_nonzero(|k, x| {
            if c.contains(k) {
                out[k] += d * x;
            }
        }),
    }
}

/// Sub-block gradient of local observation `j_local` of partition `p` on
/// sub-block `(q, k)`, with the inner product over the sub-block only.
#[allow(clippy::too_many_arguments)]
pub fn subblock_gradient(
    model: &LossModel,
    grid: &DataGrid,
    scheme: &PartitionScheme,
    p: usize,
    q: usize,
    k: usize,
    j_local: usize,
    w_sub: &[f64],
) -> Result<Vec<f64>> {
    let range = scheme.subblock_range(q, k)?;
    let rows = scheme.partition_rows(p)?;
    if j_local >= scheme.rows_per_partition() {
        return Err(Error::Index(format!(
            "local row {j_local} >= n={}",
            scheme.rows_per_partition()
        )));
    }
    if w_sub.len() != range.len() {
        return Err(Error::Dimension {
            expected: range.len(),
            actual: w_sub.len(),
            context: "sub-block weights",
        });
    }
    let j = rows.start + j_local;
    let mut g = vec![0.0; range.len()];
    subblock_gradient_into(model, grid.row(j), grid.label(j), range, w_sub, &mut g);
    Ok(g)
}

/// Writes the sub-block gradient into `out` (overwriting it).
pub(crate) fn subblock_gradient_into(
    model: &LossModel,
    row: RowView<'_>,
    y: f64,
    range: Range<usize>,
    w_sub: &[f64],
    out: &mut [f64],
) {
    out.iter_mut().for_each(|o| *o = 0.0);
    let d = model
        .kind
        .derivative(row.dot_range(range.clone(), w_sub), y);
    if d != 0.0 {
        row.for_each_in_range(range, |k, x| out[k] = d * x);
    }
    if model.regularize_inner && model.l2_reg != 0.0 {
        for (o, wk) in out.iter_mut().zip(w_sub) {
            *o += model.l2_reg * wk;
        }
    }
}

/// Data-driven estimates of the smoothness and gradient-variance constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantEstimates {
    /// `max_j ‖x_j‖² · κ`, a Lipschitz constant for every `∇f_j`.
    pub m3: f64,
    /// `(1/(N−1)) Σ_j (‖∇f_j(ω)‖² − ‖∇F(ω)‖²)`, 0 when `N = 1`.
    pub m4_sq: f64,
    /// True when the loss is not smooth and `m3` is the squared-hinge value.
    pub nonsmooth: bool,
}

pub fn estimate_constants(
    model: &LossModel,
    grid: &DataGrid,
    w: &[f64],
) -> Result<ConstantEstimates> {
    if grid.n_obs() == 0 {
        return Err(Error::EmptyData);
    }
    check_dim(grid, w)?;
    let nonsmooth = !model.kind.is_smooth();
    if nonsmooth {
        log::warn!(
            "{} loss is not smooth; using the squared-hinge curvature for M3",
            model.kind.name()
        );
    }
    let max_norm_sq = (0..grid.n_obs())
        .map(|j| grid.row(j).norm_sq())
        .fold(0.0, f64::max);
    let m3 = max_norm_sq * model.kind.curvature_bound();

    let n = grid.n_obs();
    let m4_sq = if n == 1 {
        0.0
    } else {
        let mut full = vec![0.0; grid.n_features()];
        let mut sum_sq = 0.0;
        for j in 0..n {
            let row = grid.row(j);
            let d = model.kind.derivative(row.dot(w), grid.label(j));
            sum_sq += d * d * row.norm_sq();
            row.for_each_nonzero(|k, x| full[k] += d * x);
        }
        let full_sq: f64 = full.iter().map(|g| (g / n as f64).powi(2)).sum();
        (sum_sq - n as f64 * full_sq) / (n as f64 - 1.0)
    };
    Ok(ConstantEstimates {
        m3,
        m4_sq,
        nonsmooth,
    })
}

/// Extreme eigenvalues of `(1/N) XᵀX`. For least squares these are the
/// strong-convexity modulus and the Lipschitz constant of `∇F` (before l2).
pub fn gram_eigen_range(grid: &DataGrid) -> Result<(f64, f64)> {
    if grid.n_obs() == 0 {
        return Err(Error::EmptyData);
    }
    let m = grid.n_features();
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for j in 0..grid.n_obs() {
        let x = grid.row_dense(j);
        for a in 0..m {
            if x[a] == 0.0 {
                continue;
            }
            for b in a..m {
                gram[(a, b)] += x[a] * x[b];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    gram /= grid.n_obs() as f64;
    let eig = gram.symmetric_eigenvalues();
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// Strong-convexity modulus of `F`: `λ_min((1/N)XᵀX) + λ` for least squares,
/// and the l2 coefficient alone for the other losses.
pub fn strong_convexity_modulus(model: &LossModel, grid: &DataGrid) -> Result<f64> {
    match model.kind {
        LossKind::LeastSquares => Ok(gram_eigen_range(grid)?.0.max(0.0) + model.l2_reg),
        _ => Ok(model.l2_reg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: Vec<Vec<f64>>, labels: Vec<f64>, kind: LabelKind) -> DataGrid {
        let m = rows[0].len();
        DataGrid::from_dense(m, rows.concat(), labels, kind).unwrap()
    }

    #[test]
    fn least_squares_perfect_fit_has_zero_loss() {
        let g = grid(
            vec![vec![1.0, 2.0], vec![-1.0, 0.5]],
            vec![3.0, -0.5],
            LabelKind::Regression,
        );
        let m = LossModel::new(LossKind::LeastSquares);
        assert_eq!(loss_value(&m, &g, &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn hinge_at_zero_is_one() {
        let g = grid(
            vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.3]],
            vec![1.0, -1.0, 1.0],
            LabelKind::Classification,
        );
        let m = LossModel::new(LossKind::Hinge);
        assert_eq!(loss_value(&m, &g, &[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn logistic_at_zero_is_ln2() {
        let g = grid(vec![vec![1.0]], vec![1.0], LabelKind::Classification);
        let m = LossModel::new(LossKind::Logistic);
        let v = loss_value(&m, &g, &[0.0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn l2_term_in_objective() {
        let g = grid(vec![vec![1.0]], vec![1.0], LabelKind::Regression);
        let m = LossModel::new(LossKind::LeastSquares).with_l2(0.5);
        // 0.5*(2-1)^2 + 0.25*4
        assert_eq!(loss_value(&m, &g, &[2.0]).unwrap(), 1.5);
        assert!(matches!(
            loss_value(&m, &g, &[1.0, 2.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn least_squares_gradient_worked_example() {
        let g = grid(vec![vec![1.0, 2.0]], vec![1.0], LabelKind::Regression);
        let m = LossModel::new(LossKind::LeastSquares);
        assert_eq!(
            per_obs_gradient(&m, &g, 0, &[1.0, 1.0], false).unwrap(),
            vec![2.0, 4.0]
        );
        assert!(matches!(
            per_obs_gradient(&m, &g, 1, &[1.0, 1.0], false),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn hinge_flat_region_and_kink() {
        let g = grid(vec![vec![1.0, 1.0]], vec![1.0], LabelKind::Classification);
        let m = LossModel::new(LossKind::Hinge);
        assert_eq!(
            per_obs_gradient(&m, &g, 0, &[2.0, 0.0], false).unwrap(),
            vec![0.0, 0.0]
        );
        // margin exactly 1
        assert_eq!(
            per_obs_gradient(&m, &g, 0, &[0.5, 0.5], false).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            per_obs_gradient(&m, &g, 0, &[0.0, 0.0], false).unwrap(),
            vec![-1.0, -1.0]
        );
    }

    #[test]
    fn masked_gradient_examples() {
        let g = grid(vec![vec![1.0, 2.0]], vec![1.0], LabelKind::Regression);
        let m = LossModel::new(LossKind::LeastSquares);
        let full = FeatureSet::full(2);
        let first = FeatureSet::new(2, vec![0]).unwrap();
        let w = [1.0, 1.0];
        assert_eq!(
            masked_gradient(&m, &g, 0, &w, &full, &first).unwrap(),
            vec![2.0, 0.0]
        );
        assert_eq!(
            masked_gradient(&m, &g, 0, &w, &full, &full).unwrap(),
            per_obs_gradient(&m, &g, 0, &w, false).unwrap()
        );
        assert_eq!(
            masked_gradient(&m, &g, 0, &w, &full, &FeatureSet::empty(2)).unwrap(),
            vec![0.0, 0.0]
        );
        // inner product over B = {0}: z = 1, residual 0
        assert_eq!(
            masked_gradient(&m, &g, 0, &w, &first, &first).unwrap(),
            vec![0.0, 0.0]
        );
        let second = FeatureSet::new(2, vec![1]).unwrap();
        assert!(matches!(
            masked_gradient(&m, &g, 0, &w, &first, &second),
            Err(Error::Subset)
        ));
    }

    #[test]
    fn subblock_gradient_examples() {
        // N=2, M=2, P=2, Q=1: sub-blocks are single columns.
        let g = grid(
            vec![vec![2.0, 5.0], vec![0.0, 0.0]],
            vec![1.0, 0.0],
            LabelKind::Regression,
        );
        let s = g.scheme(2, 1).unwrap();
        let m = LossModel::new(LossKind::LeastSquares);
        // z = 2*1 = 2, (z - y) * x = 1 * 2
        assert_eq!(
            subblock_gradient(&m, &g, &s, 0, 0, 0, 0, &[1.0]).unwrap(),
            vec![2.0]
        );
        // second partition, y = 0, w = 0 -> residual 0
        assert_eq!(
            subblock_gradient(&m, &g, &s, 1, 0, 1, 0, &[0.0]).unwrap(),
            vec![0.0]
        );
        assert!(matches!(
            subblock_gradient(&m, &g, &s, 0, 0, 0, 1, &[1.0]),
            Err(Error::Index(_))
        ));

        let h = grid(
            vec![vec![2.0, 5.0], vec![1.0, 1.0]],
            vec![1.0, 1.0],
            LabelKind::Classification,
        );
        let hinge = LossModel::new(LossKind::Hinge);
        assert_eq!(
            subblock_gradient(&hinge, &h, &s, 0, 0, 0, 0, &[1.0]).unwrap(),
            vec![0.0]
        );
    }

    #[test]
    fn constant_estimates() {
        let g = grid(vec![vec![1.0, 0.0]], vec![0.5], LabelKind::Regression);
        let e =
            estimate_constants(&LossModel::new(LossKind::LeastSquares), &g, &[3.0, -1.0]).unwrap();
        assert_eq!(e.m3, 1.0);
        assert_eq!(e.m4_sq, 0.0);

        let g = grid(
            vec![vec![2.0, 0.0], vec![1.0, 1.0]],
            vec![1.0, -1.0],
            LabelKind::Classification,
        );
        let e = estimate_constants(&LossModel::new(LossKind::Logistic), &g, &[0.0, 0.0]).unwrap();
        assert_eq!(e.m3, 1.0);
        let e = estimate_constants(&LossModel::new(LossKind::Hinge), &g, &[0.0, 0.0]).unwrap();
        assert!(e.nonsmooth);
        assert_eq!(e.m3, 4.0);

        let empty = DataGrid::from_dense(2, vec![], vec![], LabelKind::Regression).unwrap();
        assert!(matches!(
            estimate_constants(&LossModel::new(LossKind::Logistic), &empty, &[0.0, 0.0]),
            Err(Error::EmptyData)
        ));
    }

    #[test]
    fn m4_matches_direct_formula() {
        let g = grid(
            vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, -0.7]],
            vec![0.2, 1.0, -0.4],
            LabelKind::Regression,
        );
        let m = LossModel::new(LossKind::LeastSquares);
        let w = [0.3, -0.2];
        let grads: Vec<Vec<f64>> = (0..3)
            .map(|j| per_obs_gradient(&m, &g, j, &w, false).unwrap())
            .collect();
        let full: Vec<f64> = (0..2)
            .map(|k| grads.iter().map(|g| g[k]).sum::<f64>() / 3.0)
            .collect();
        let fsq: f64 = full.iter().map(|v| v * v).sum();
        let direct: f64 = grads
            .iter()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>() - fsq)
            .sum::<f64>()
            / 2.0;
        let e = estimate_constants(&m, &g, &w).unwrap();
        assert!((e.m4_sq - direct).abs() < 1e-14);
    }

    #[test]
    fn regression_labels_rejected_for_classification_losses() {
        let g = grid(vec![vec![1.0]], vec![0.5], LabelKind::Regression);
        assert!(LossModel::new(LossKind::Hinge).check_grid(&g).is_err());
        assert!(LossModel::new(LossKind::LeastSquares)
            .check_grid(&g)
            .is_ok());
    }

    #[test]
    fn gram_eigenvalues_of_identity_design() {
        let g = grid(
            vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            vec![0.0, 0.0],
            LabelKind::Regression,
        );
        let (lo, hi) = gram_eigen_range(&g).unwrap();
        assert!((lo - 0.5).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
    }
}
