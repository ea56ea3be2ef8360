//! Sparsity measures, deep-vs-multilayer comparison and the zero-pattern
//! diagnostics that are necessary for the sufficiently scattered condition.

use std::fmt::Write as _;

use crate::divergence::BetaValue;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::model::DeepState;

/// Returned when a metric is undefined (all-zero or too short input).
pub const UNDEFINED_METRIC: f64 = f64::NAN;

/// Hoyer sparsity `(sqrt(n) - ||x||_1 / ||x||_2) / (sqrt(n) - 1)`: 1 for a
/// single nonzero entry, 0 when all entries are equal.
pub fn hoyer_sparsity(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return UNDEFINED_METRIC;
    }
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    let l2 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(l2 > 0.0) {
        return UNDEFINED_METRIC;
    }
    let root_n = (n as f64).sqrt();
    (root_n - l1 / l2) / (root_n - 1.0)
}

/// Mean Hoyer sparsity of the rows, skipping undefined rows.
pub fn mean_row_sparsity(m: &DenseMatrix) -> f64 {
    let values: Vec<f64> = (0..m.rows())
        .map(|i| hoyer_sparsity(m.row(i)))
        .filter(|v| !v.is_nan())
        .collect();
    if values.is_empty() {
        UNDEFINED_METRIC
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerComparison {
    /// One-based layer index.
    pub layer: usize,
    pub deep_error: f64,
    pub baseline_error: f64,
    /// `deep_error / baseline_error`
    pub ratio: f64,
    /// Mean sparsity of the rows of `H_l ⋯ H_1`.
    pub deep_feature_sparsity: f64,
    pub baseline_feature_sparsity: f64,
    /// Mean sparsity of the rows of `H_l`.
    pub deep_h_sparsity: f64,
    pub baseline_h_sparsity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub beta: BetaValue,
    pub layers: Vec<LayerComparison>,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "layer,deep_error,baseline_error,ratio,deep_feature_sparsity,baseline_feature_sparsity,deep_h_sparsity,baseline_h_sparsity\n",
        );
        for l in &self.layers {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                l.layer,
                l.deep_error,
                l.baseline_error,
                l.ratio,
                l.deep_feature_sparsity,
                l.baseline_feature_sparsity,
                l.deep_h_sparsity,
                l.baseline_h_sparsity
            );
        }
        out
    }
}

/// Per-layer error ratios and sparsities of two runs on the same data.
pub fn compare_runs(deep: &DeepState, baseline: &DeepState, beta: BetaValue) -> Result<ComparisonReport> {
    if deep.ranks() != baseline.ranks() {
        return Err(Error::RankMismatch(format!(
            "ranks {:?} vs {:?}",
            deep.ranks(),
            baseline.ranks()
        )));
    }
    if deep.x.shape() != baseline.x.shape() {
        return Err(Error::Dimension(format!(
            "data {:?} vs {:?}",
            deep.x.shape(),
            baseline.x.shape()
        )));
    }
    let de = deep.layer_divergences(beta)?;
    let be = baseline.layer_divergences(beta)?;
    let mut layers = Vec::with_capacity(de.len());
    for l in 0..de.len() {
        layers.push(LayerComparison {
            layer: l + 1,
            deep_error: de[l],
            baseline_error: be[l],
            ratio: de[l] / be[l],
            deep_feature_sparsity: mean_row_sparsity(&deep.composite_features(l)?),
            baseline_feature_sparsity: mean_row_sparsity(&baseline.composite_features(l)?),
            deep_h_sparsity: mean_row_sparsity(&deep.h[l]),
            baseline_h_sparsity: mean_row_sparsity(&baseline.h[l]),
        });
    }
    Ok(ComparisonReport { beta, layers })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SscRow {
    pub zeros: usize,
    /// At least `r - 1` entries at or below the threshold.
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SscReport {
    pub tol: f64,
    pub rows: Vec<SscRow>,
    /// Ordered pairs `(a, b)` where the support of row `a` is contained in
    /// the support of row `b`.
    pub contained_supports: Vec<(usize, usize)>,
}

impl SscReport {
    pub fn passes(&self) -> bool {
        self.rows.iter().all(|r| r.passes) && self.contained_supports.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,zeros,passes\n");
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i, r.zeros, r.passes);
        }
        out
    }
}

/// Default zero threshold: `1e-9` times the largest entry.
pub fn default_zero_tol(h: &DenseMatrix) -> f64 {
    1e-9 * h.max_value().max(0.0)
}

/// Checks two conditions necessary for an `r x n` matrix to be sufficiently
/// scattered: every row has at least `r - 1` (near-)zeros, and no row's
/// support is contained in another's.
pub fn ssc_row_zero_check(h: &DenseMatrix, tol: f64) -> SscReport {
    let r = h.rows();
    let needed = r.saturating_sub(1);
    let support: Vec<Vec<bool>> = (0..r)
        .map(|i| h.row(i).iter().map(|&v| v > tol).collect())
        .collect();
    let rows = support
        .iter()
        .map(|s| {
            let zeros = s.iter().filter(|nz| !**nz).count();
            SscRow {
                zeros,
                passes: zeros >= needed,
            }
        })
        .collect();
    let mut contained_supports = Vec::new();
    for a in 0..r {
        for b in 0..r {
            if a != b && support[a].iter().zip(&support[b]).all(|(&sa, &sb)| !sa || sb) {
                contained_supports.push((a, b));
            }
        }
    }
    SscReport {
        tol,
        rows,
        contained_supports,
    }
}
