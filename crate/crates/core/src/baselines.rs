//! Reference structures and generative parameter estimates.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::DiscreteDataset;
use crate::error::{Error, Result};
use crate::model::inference::check_dataset;
use crate::model::{BankLayout, CandidateSets, CptBank, Ordering, ParentChoice, TanStructure};

/// Floor for `ln 0` when a smoothed estimate is exactly zero.
pub const LOG_ZERO: f64 = -708.396_418_532_264_1;

/// Smoothed maximum-likelihood tables for `structure`, stored as log
/// probabilities (which are valid logits). With `alpha = 0` cells with no
/// parent/class observations fall back to uniform.
pub fn ml_estimate(ds: &DiscreteDataset, structure: &TanStructure, alpha: f64) -> Result<CptBank> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("smoothing {alpha} must be non-negative")));
    }
    if structure.num_features() != ds.num_features() {
        return Err(Error::ShapeMismatch(format!(
            "structure has {} features, data has {}",
            structure.num_features(),
            ds.num_features()
        )));
    }
    let layout = Arc::new(BankLayout::for_structure(structure, ds.arities(), ds.num_classes())?);
    check_dataset(&layout, ds)?;
    let c = ds.num_classes();
    let ordering = structure.ordering();
    let mut counts = vec![0.0; layout.len()];
    for n in 0..ds.len() {
        let x = ds.row(n);
        let y = ds.label(n);
        counts[y] += 1.0;
        for pos in 0..structure.num_features() {
            let slot = layout.slot(pos, 0);
            let pv = slot.parent.position().map_or(0, |j| x[ordering.feature(j)]);
            counts[slot.row(x[ordering.feature(pos)], pv, c) + y] += 1.0;
        }
    }
    let log_ratio = |num: f64, den: f64, arity: usize| {
        if den <= 0.0 {
            -(arity as f64).ln()
        } else if num <= 0.0 {
            LOG_ZERO
        } else {
            (num / den).ln()
        }
    };
    let mut values = vec![0.0; layout.len()];
    let total = ds.len() as f64;
    for y in 0..c {
        values[y] = log_ratio(counts[y] + alpha, total + alpha * c as f64, c);
    }
    for pos in 0..structure.num_features() {
        let slot = layout.slot(pos, 0);
        for pv in 0..slot.parent_arity {
            for y in 0..c {
                let den: f64 = (0..slot.child_arity).map(|xv| counts[slot.row(xv, pv, c) + y]).sum();
                for xv in 0..slot.child_arity {
                    let idx = slot.row(xv, pv, c) + y;
                    values[idx] = log_ratio(
                        counts[idx] + alpha,
                        den + alpha * slot.child_arity as f64,
                        slot.child_arity,
                    );
                }
            }
        }
    }
    CptBank::from_values(layout, values)
}

/// Empirical `I(X_i; X_j | C)` in nats, between feature columns.
pub fn cond_mutual_info(ds: &DiscreteDataset, i: usize, j: usize) -> Result<f64> {
    let d = ds.num_features();
    if i >= d || j >= d {
        return Err(Error::InvalidArgument(format!("feature index out of range for {d} features")));
    }
    if ds.is_empty() {
        return Err(Error::Empty("dataset".into()));
    }
    // Same accumulation order either way round, so the matrix is symmetric.
    let (a, b) = (i.min(j), i.max(j));
    let (ra, rb, c) = (ds.arities()[a], ds.arities()[b], ds.num_classes());
    let mut joint = vec![0.0; ra * rb * c];
    for n in 0..ds.len() {
        let x = ds.row(n);
        joint[(x[a] * rb + x[b]) * c + ds.label(n)] += 1.0;
    }
    let mut pa = vec![0.0; ra * c];
    let mut pb = vec![0.0; rb * c];
    let mut pc = vec![0.0; c];
    for va in 0..ra {
        for vb in 0..rb {
            for y in 0..c {
                let v = joint[(va * rb + vb) * c + y];
                pa[va * c + y] += v;
                pb[vb * c + y] += v;
                pc[y] += v;
            }
        }
    }
    let total = ds.len() as f64;
    let mut mi = 0.0;
    for va in 0..ra {
        for vb in 0..rb {
            for y in 0..c {
                let v = joint[(va * rb + vb) * c + y];
                if v > 0.0 {
                    mi += v / total * ((v * pc[y]) / (pa[va * c + y] * pb[vb * c + y])).ln();
                }
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Symmetric matrix of pairwise conditional mutual information.
#[derive(Clone, Debug, PartialEq)]
pub struct CmiMatrix {
    d: usize,
    values: Vec<f64>,
}

impl CmiMatrix {
    pub fn compute(ds: &DiscreteDataset) -> Result<Self> {
        let d = ds.num_features();
        let mut values = vec![0.0; d * d];
        for i in 0..d {
            for j in i + 1..d {
                let v = cond_mutual_info(ds, i, j)?;
                values[i * d + j] = v;
                values[j * d + i] = v;
            }
        }
        Ok(CmiMatrix { d, values })
    }

    pub fn from_values(d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != d * d {
            return Err(Error::ShapeMismatch(format!("{} values for a {d}x{d} matrix", values.len())));
        }
        for i in 0..d {
            for j in 0..d {
                let v = values[i * d + j];
                if !v.is_finite() || v != values[j * d + i] {
                    return Err(Error::InvalidArgument("matrix must be finite and symmetric".into()));
                }
            }
        }
        Ok(CmiMatrix { d, values })
    }

    pub fn len(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.d == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = std::iter::once("feature".to_string())
            .chain((0..self.d).map(|j| format!("x{j}")))
            .collect();
        w.write_record(&header).map_err(|e| Error::Serialization(e.to_string()))?;
        for i in 0..self.d {
            let row: Vec<String> = std::iter::once(format!("x{i}"))
                .chain((0..self.d).map(|j| format!("{}", self.get(i, j))))
                .collect();
            w.write_record(&row).map_err(|e| Error::Serialization(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(f))
    }
}

/// Maximum spanning tree over the CMI weights, rooted at feature 0.
///
/// Edges are taken by decreasing weight, ties by `(i, j)`. The returned
/// ordering is breadth-first from the root with children in increasing
/// feature index, so every parent precedes its child.
pub fn chow_liu_from_cmi(cmi: &CmiMatrix) -> Result<TanStructure> {
    let d = cmi.len();
    if d == 0 {
        return Err(Error::Empty("feature set".into()));
    }
    let mut edges: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    edges.sort_by(|&(a, b), &(c, e)| cmi.get(c, e).total_cmp(&cmi.get(a, b)).then((a, b).cmp(&(c, e))));
    let mut uf: Vec<usize> = (0..d).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    let mut adj = vec![Vec::new(); d];
    for (i, j) in edges {
        let (ri, rj) = (find(&mut uf, i), find(&mut uf, j));
        if ri != rj {
            uf[ri] = rj;
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let mut parent = vec![None; d];
    let mut seen = vec![false; d];
    let mut order = Vec::with_capacity(d);
    let mut queue = std::collections::VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        order.push(v);
        let mut next = adj[v].clone();
        next.sort_unstable();
        for u in next {
            if !seen[u] {
                seen[u] = true;
                parent[u] = Some(v);
                queue.push_back(u);
            }
        }
    }
    TanStructure::from_feature_parents(Ordering::new(order)?, &parent, false)
}

pub fn chow_liu(ds: &DiscreteDataset) -> Result<TanStructure> {
    chow_liu_from_cmi(&CmiMatrix::compute(ds)?)
}

/// Every feature has only the class as parent.
pub fn naive_bayes_structure(d: usize) -> TanStructure {
    TanStructure::new(Ordering::identity(d), vec![ParentChoice::NoParent; d], false).expect("valid naive Bayes")
}

/// Each position after the first picks a uniformly random earlier position.
pub fn random_tan(ordering: &Ordering, seed: u64) -> TanStructure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parents = (0..ordering.len())
        .map(|i| {
            if i == 0 {
                ParentChoice::NoParent
            } else {
                ParentChoice::Feature(rng.gen_range(0..i))
            }
        })
        .collect();
    TanStructure::new(ordering.clone(), parents, false).expect("earlier parents are valid")
}

/// Candidate sets holding exactly the parents of `structure`.
pub fn fixed_candidates(structure: &TanStructure) -> CandidateSets {
    CandidateSets::from_structure(structure)
}
