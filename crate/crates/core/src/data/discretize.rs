use serde::Serialize;

use super::DiscreteDataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscretizeReport {
    /// Cut points per feature; a value maps to the number of edges `<=` it.
    pub edges: Vec<Vec<f64>>,
    /// Features that collapsed to a single category.
    pub constant_features: Vec<usize>,
}

/// Maps each real-valued column to `[0, bins)` using empirical quantiles.
///
/// Duplicate cut points are merged, so heavily tied columns may end up with
/// fewer categories than requested; constant columns get arity 1.
pub fn quantile_discretize(
    rows: &[Vec<f64>],
    labels: Vec<usize>,
    num_classes: usize,
    bins: &[usize],
) -> Result<(DiscreteDataset, DiscretizeReport)> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Empty("no rows to discretize".into()));
    }
    let d = bins.len();
    if let Some(r) = rows.iter().position(|r| r.len() != d) {
        return Err(Error::ShapeMismatch(format!("row {r} has {} values, expected {d}", rows[r].len())));
    }
    if let Some(f) = bins.iter().position(|&b| b < 2) {
        return Err(Error::InvalidArgument(format!("feature {f} needs at least 2 bins")));
    }
    for (r, row) in rows.iter().enumerate() {
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at row {r}, column {c}")));
        }
    }

    let mut edges = Vec::with_capacity(d);
    let mut arities = Vec::with_capacity(d);
    let mut constant_features = Vec::new();
    for f in 0..d {
        let mut col: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        col.sort_by(f64::total_cmp);
        let min = col[0];
        let mut cuts: Vec<f64> = Vec::new();
        for k in 1..bins[f] {
            let e = col[k * n / bins[f]];
            if e > min && cuts.last().is_none_or(|&last| e > last) {
                cuts.push(e);
            }
        }
        if cuts.is_empty() {
            constant_features.push(f);
        }
        arities.push(cuts.len() + 1);
        edges.push(cuts);
    }

    let mut features = Vec::with_capacity(n * d);
    for row in rows {
        for (f, &v) in row.iter().enumerate() {
            features.push(edges[f].partition_point(|&e| e <= v));
        }
    }
    let ds = DiscreteDataset::from_flat(features, labels, arities, num_classes)?;
    Ok((
        ds,
        DiscretizeReport {
            edges,
            constant_features,
        },
    ))
}
