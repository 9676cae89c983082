//! Partition-aware storage of the training set.
//!
//! Observations are split into `P` contiguous row groups of `n = N / P` rows.
//! Features are split into `Q` blocks of `m = M / Q` columns, and every block
//! is split again into `P` sub-blocks of `m̃ = M / (Q·P)` columns. All indices
//! in this crate are 0-based: sub-block `(q, k)` covers the global columns
//! `[q·m + k·m̃, q·m + (k+1)·m̃)`.

use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionScheme {
    n_obs: usize,
    n_features: usize,
    obs_partitions: usize,
    feature_blocks: usize,
}

impl PartitionScheme {
    pub fn new(
        n_obs: usize,
        n_features: usize,
        obs_partitions: usize,
        feature_blocks: usize,
    ) -> Result<Self> {
        if n_obs == 0 || n_features == 0 || obs_partitions == 0 || feature_blocks == 0 {
            return Err(Error::Divisibility(format!(
                "all of N={n_obs}, M={n_features}, P={obs_partitions}, Q={feature_blocks} must be at least 1"
            )));
        }
        if !n_obs.is_multiple_of(obs_partitions) {
            return Err(Error::Divisibility(format!(
                "P={obs_partitions} does not divide N={n_obs}"
            )));
        }
        if !n_features.is_multiple_of(feature_blocks) {
            return Err(Error::Divisibility(format!(
                "Q={feature_blocks} does not divide M={n_features}"
            )));
        }
        if !n_features.is_multiple_of(feature_blocks * obs_partitions) {
            return Err(Error::Divisibility(format!(
                "Q*P={} does not divide M={n_features}",
                feature_blocks * obs_partitions
            )));
        }
        Ok(Self {
            n_obs,
            n_features,
            obs_partitions,
            feature_blocks,
        })
    }

    /// `N`
    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    /// `M`
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// `P`
    pub fn obs_partitions(&self) -> usize {
        self.obs_partitions
    }

    /// `Q`
    pub fn feature_blocks(&self) -> usize {
        self.feature_blocks
    }

    /// `n = N / P`
    pub fn rows_per_partition(&self) -> usize {
        self.n_obs / self.obs_partitions
    }

    /// `m = M / Q`
    pub fn block_width(&self) -> usize {
        self.n_features / self.feature_blocks
    }

    /// `m̃ = M / (Q·P)`
    pub fn subblock_width(&self) -> usize {
        self.n_features / (self.feature_blocks * self.obs_partitions)
    }

    /// Number of workers in the update phase, `Q·P`.
    pub fn n_workers(&self) -> usize {
        self.feature_blocks * self.obs_partitions
    }

    pub fn block_range(&self, q: usize) -> Result<Range<usize>> {
        if q >= self.feature_blocks {
            return Err(Error::Index(format!(
                "feature block {q} out of range (Q={})",
                self.feature_blocks
            )));
        }
        let m = self.block_width();
        Ok(q * m..(q + 1) * m)
    }

    /// Global feature range of sub-block `k` of feature block `q`.
    pub fn subblock_range(&self, q: usize, k: usize) -> Result<Range<usize>> {
        if q >= self.feature_blocks || k >= self.obs_partitions {
            return Err(Error::Index(format!(
                "sub-block ({q}, {k}) out of range (Q={}, P={})",
                self.feature_blocks, self.obs_partitions
            )));
        }
        let start = q * self.block_width() + k * self.subblock_width();
        Ok(start..start + self.subblock_width())
    }

    pub fn partition_rows(&self, p: usize) -> Result<Range<usize>> {
        if p >= self.obs_partitions {
            return Err(Error::Index(format!(
                "observation partition {p} out of range (P={})",
                self.obs_partitions
            )));
        }
        let n = self.rows_per_partition();
        Ok(p * n..(p + 1) * n)
    }

    pub fn partition_of_row(&self, row: usize) -> usize {
        row / self.rows_per_partition()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// Labels are exactly -1 or +1.
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageKind {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq)]
enum Features {
    Dense(Vec<f64>),
    /// CSR with sorted column indices per row.
    Sparse {
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    },
}

/// Immutable observation-by-feature matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataGrid {
    n_obs: usize,
    n_features: usize,
    features: Features,
    labels: Vec<f64>,
    label_kind: LabelKind,
}

impl DataGrid {
    pub fn from_dense(
        n_features: usize,
        values: Vec<f64>,
        labels: Vec<f64>,
        label_kind: LabelKind,
    ) -> Result<Self> {
        let n_obs = labels.len();
        if values.len() != n_obs * n_features {
            return Err(Error::Dimension {
                expected: n_obs * n_features,
                actual: values.len(),
                context: "dense feature buffer",
            });
        }
        check_labels(&labels, label_kind)?;
        Ok(Self {
            n_obs,
            n_features,
            features: Features::Dense(values),
            labels,
            label_kind,
        })
    }

    /// Builds a sparse grid from per-row `(index, value)` lists.
    pub fn from_sparse_rows(
        n_features: usize,
        rows: Vec<Vec<(usize, f64)>>,
        labels: Vec<f64>,
        label_kind: LabelKind,
    ) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Dimension {
                expected: labels.len(),
                actual: rows.len(),
                context: "sparse rows vs labels",
            });
        }
        check_labels(&labels, label_kind)?;
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (j, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(k, _)| k);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::Index(format!(
                        "row {j}: duplicate feature index {}",
                        w[0].0
                    )));
                }
            }
            for (k, v) in row {
                if k >= n_features {
                    return Err(Error::Index(format!(
                        "row {j}: feature index {k} >= M={n_features}"
                    )));
                }
                indices.push(k);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            n_obs: labels.len(),
            n_features,
            features: Features::Sparse {
                indptr,
                indices,
                values,
            },
            labels,
            label_kind,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label(&self, row: usize) -> f64 {
        self.labels[row]
    }

    pub fn label_kind(&self) -> LabelKind {
        self.label_kind
    }

    pub fn storage_kind(&self) -> StorageKind {
        match self.features {
            Features::Dense(_) => StorageKind::Dense,
            Features::Sparse { .. } => StorageKind::Sparse,
        }
    }

    /// Partition scheme for this grid's shape.
    pub fn scheme(&self, obs_partitions: usize, feature_blocks: usize) -> Result<PartitionScheme> {
        PartitionScheme::new(self.n_obs, self.n_features, obs_partitions, feature_blocks)
    }

    pub fn row(&self, j: usize) -> RowView<'_> {
        match &self.features {
            Features::Dense(values) => {
                let m = self.n_features;
                RowView::Dense(&values[j * m..(j + 1) * m])
            }
            Features::Sparse {
                indptr,
                indices,
                values,
            } => {
                let r = indptr[j]..indptr[j + 1];
                RowView::Sparse {
                    indices: &indices[r.clone()],
                    values: &values[r],
                }
            }
        }
    }

    pub fn check_row(&self, j: usize) -> Result<()> {
        if j >= self.n_obs {
            return Err(Error::Index(format!("row {j} >= N={}", self.n_obs)));
        }
        Ok(())
    }

    /// Densified copy of a row.
    pub fn row_dense(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        self.row(j).for_each_nonzero(|k, x| out[k] = x);
        out
    }

    pub fn is_compatible(&self, scheme: &PartitionScheme) -> bool {
        scheme.n_obs() == self.n_obs && scheme.n_features() == self.n_features
    }
}

fn check_labels(labels: &[f64], kind: LabelKind) -> Result<()> {
    if kind == LabelKind::Classification {
        if let Some((j, &y)) = labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y != 1.0 && y != -1.0)
        {
            return Err(Error::InvalidLabel { row: j, label: y });
        }
    }
    Ok(())
}

/// Borrowed view of one observation's features.
#[derive(Debug, Clone, Copy)]
pub enum RowView<'a> {
    Dense(&'a [f64]),
    Sparse {
        indices: &'a [usize],
        values: &'a [f64],
    },
}

impl<'a> RowView<'a> {
    pub fn for_each_nonzero(&self, mut f: impl FnMut(usize, f64)) {
        match *self {
            RowView::Dense(xs) => xs.iter().enumerate().for_each(|(k, &x)| f(k, x)),
            RowView::Sparse { indices, values } => {
                indices.iter().zip(values).for_each(|(&k, &x)| f(k, x))
            }
        }
    }

    /// Calls `f(k - range.start, x_k)` for stored entries with `k` in `range`.
    pub fn for_each_in_range(&self, range: Range<usize>, mut f: impl FnMut(usize, f64)) {
        match *self {
            RowView::Dense(xs) => xs[range].iter().enumerate().for_each(|(k, &x)| f(k, x)),
            RowView::Sparse { indices, values } => {
                let lo = indices.partition_point(|&k| k < range.start);
                let hi = indices.partition_point(|&k| k < range.end);
                for (&k, &x) in indices[lo..hi].iter().zip(&values[lo..hi]) {
                    f(k - range.start, x);
                }
            }
        }
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        match *self {
            RowView::Dense(xs) => xs.iter().zip(w).map(|(x, w)| x * w).sum(),
            RowView::Sparse { indices, values } => {
                indices.iter().zip(values).map(|(&k, x)| x * w[k]).sum()
            }
        }
    }

    /// Inner product over `range` against a slice indexed from `range.start`.
    pub fn dot_range(&self, range: Range<usize>, w_sub: &[f64]) -> f64 {
        let mut z = 0.0;
        self.for_each_in_range(range, |k, x| z += x * w_sub[k]);
        z
    }

    /// Inner product restricted to the features in `set`.
    pub fn dot_subset(&self, set: &FeatureSet, w: &[f64]) -> f64 {
        match *self {
            RowView::Dense(xs) => {
                if set.is_full() {
                    self.dot(w)
                } else {
                    set.indices().iter().map(|&k| xs[k] * w[k]).sum()
                }
            }
            RowView::Sparse { indices, values } => indices
                .iter()
                .zip(values)
                .filter(|(&k, _)| set.contains(k))
                .map(|(&k, x)| x * w[k])
                .sum(),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        let mut s = 0.0;
        self.for_each_nonzero(|_, x| s += x * x);
        s
    }
}

/// Sorted set of feature (or observation) indices with O(1) membership.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSet {
    indices: Vec<usize>,
    member: Vec<bool>,
}

impl FeatureSet {
    /// Builds a set over the universe `[0, universe)`. Duplicates are rejected.
    pub fn new(universe: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        let mut member = vec![false; universe];
        for &k in &indices {
            if k >= universe {
                return Err(Error::Index(format!("index {k} >= {universe}")));
            }
            if member[k] {
                return Err(Error::Size(format!("duplicate index {k}")));
            }
            member[k] = true;
        }
        Ok(Self { indices, member })
    }

    pub fn full(universe: usize) -> Self {
        Self {
            indices: (0..universe).collect(),
            member: vec![true; universe],
        }
    }

    pub fn empty(universe: usize) -> Self {
        Self {
            indices: Vec::new(),
            member: vec![false; universe],
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn universe(&self) -> usize {
        self.member.len()
    }

    pub fn is_full(&self) -> bool {
        self.indices.len() == self.member.len()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.member.get(k).copied().unwrap_or(false)
    }

    pub fn is_subset_of(&self, other: &FeatureSet) -> bool {
        self.indices.iter().all(|&k| other.contains(k))
    }
}

/// The model weights `ω` with block and sub-block views.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
    scheme: PartitionScheme,
}

impl ParameterVector {
    pub fn zeros(scheme: PartitionScheme) -> Self {
        Self {
            values: vec![0.0; scheme.n_features()],
            scheme,
        }
    }

    pub fn from_values(scheme: PartitionScheme, values: Vec<f64>) -> Result<Self> {
        if values.len() != scheme.n_features() {
            return Err(Error::Dimension {
                expected: scheme.n_features(),
                actual: values.len(),
                context: "parameter vector",
            });
        }
        Ok(Self { values, scheme })
    }

    pub fn scheme(&self) -> &PartitionScheme {
        &self.scheme
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `ω_[q]`
    pub fn block(&self, q: usize) -> Result<&[f64]> {
        Ok(&self.values[self.scheme.block_range(q)?])
    }

    /// `ω_{q,k}`
    pub fn subblock(&self, q: usize, k: usize) -> Result<&[f64]> {
        Ok(&self.values[self.scheme.subblock_range(q, k)?])
    }

    pub fn subblock_mut(&mut self, q: usize, k: usize) -> Result<&mut [f64]> {
        let r = self.scheme.subblock_range(q, k)?;
        Ok(&mut self.values[r])
    }

    /// Concatenates sub-blocks in (q ascending, k ascending) order.
    pub fn from_subblocks(scheme: PartitionScheme, subblocks: &[Vec<f64>]) -> Result<Self> {
        if subblocks.len() != scheme.n_workers() {
            return Err(Error::Dimension {
                expected: scheme.n_workers(),
                actual: subblocks.len(),
                context: "sub-block count",
            });
        }
        let mut values = Vec::with_capacity(scheme.n_features());
        for sb in subblocks {
            if sb.len() != scheme.subblock_width() {
                return Err(Error::Dimension {
                    expected: scheme.subblock_width(),
                    actual: sb.len(),
                    context: "sub-block width",
                });
            }
            values.extend_from_slice(sb);
        }
        Ok(Self { values, scheme })
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_one_small_dataset_shape() {
        let s = PartitionScheme::new(250_000, 18_000, 5, 3).unwrap();
        assert_eq!(s.rows_per_partition(), 50_000);
        assert_eq!(s.block_width(), 6_000);
        assert_eq!(s.subblock_width(), 1_200);
    }

    #[test]
    fn figure_layout_shape() {
        let s = PartitionScheme::new(12, 12, 4, 3).unwrap();
        assert_eq!(
            (s.rows_per_partition(), s.block_width(), s.subblock_width()),
            (3, 4, 1)
        );
    }

    #[test]
    fn rejects_non_divisible_shapes() {
        assert!(matches!(
            PartitionScheme::new(10, 12, 3, 3),
            Err(Error::Divisibility(_))
        ));
        // Q | M but Q*P does not.
        assert!(matches!(
            PartitionScheme::new(12, 6, 4, 3),
            Err(Error::Divisibility(_))
        ));
        assert!(matches!(
            PartitionScheme::new(0, 6, 1, 1),
            Err(Error::Divisibility(_))
        ));
    }

    #[test]
    fn subblock_ranges() {
        let s = PartitionScheme::new(12, 12, 4, 3).unwrap();
        assert_eq!(s.subblock_range(0, 0).unwrap(), 0..1);
        // second block, third sub-block: 1*4 + 2*1 = 6
        assert_eq!(s.subblock_range(1, 2).unwrap(), 6..7);
        assert!(matches!(s.subblock_range(2, 4), Err(Error::Index(_))));
        assert!(matches!(s.subblock_range(3, 0), Err(Error::Index(_))));
    }

    #[test]
    fn tiling_is_exact_for_small_shapes() {
        for m in 1..=64usize {
            for q in 1..=m {
                for p in 1..=m {
                    if m % (q * p) != 0 {
                        continue;
                    }
                    let s = PartitionScheme::new(p, m, p, q).unwrap();
                    let mut hits = vec![0u32; m];
                    for qq in 0..q {
                        for k in 0..p {
                            for c in s.subblock_range(qq, k).unwrap() {
                                hits[c] += 1;
                            }
                        }
                    }
                    assert!(hits.iter().all(|&h| h == 1), "M={m} Q={q} P={p}");
                }
            }
        }
    }

    #[test]
    fn subblocks_reassemble_bit_exactly() {
        let s = PartitionScheme::new(4, 12, 2, 3).unwrap();
        let vals: Vec<f64> = (0..12).map(|i| (i as f64).sin() * 1e3).collect();
        let w = ParameterVector::from_values(s, vals.clone()).unwrap();
        let mut parts = Vec::new();
        for q in 0..3 {
            for k in 0..2 {
                parts.push(w.subblock(q, k).unwrap().to_vec());
            }
        }
        let back = ParameterVector::from_subblocks(s, &parts).unwrap();
        assert_eq!(
            back.values()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            vals.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(w.block(1).unwrap(), &vals[4..8]);
    }

    #[test]
    fn sparse_range_iteration() {
        let g = DataGrid::from_sparse_rows(
            10,
            vec![vec![(6, -1.25), (2, 0.5)]],
            vec![1.0],
            LabelKind::Classification,
        )
        .unwrap();
        let mut seen = Vec::new();
        g.row(0).for_each_in_range(2..7, |k, x| seen.push((k, x)));
        assert_eq!(seen, vec![(0, 0.5), (4, -1.25)]);
        assert_eq!(g.row_dense(0)[6], -1.25);
    }

    #[test]
    fn sparse_rejects_out_of_range_index() {
        let r = DataGrid::from_sparse_rows(
            10,
            vec![vec![(10, 1.0)]],
            vec![1.0],
            LabelKind::Classification,
        );
        assert!(matches!(r, Err(Error::Index(_))));
    }

    #[test]
    fn row_partition_is_contiguous() {
        let s = PartitionScheme::new(12, 12, 4, 3).unwrap();
        assert_eq!(s.partition_of_row(0), 0);
        assert_eq!(s.partition_of_row(5), 1);
        assert_eq!(s.partition_rows(3).unwrap(), 9..12);
    }
}
