//! Structures, conditional probability tables and log-joint evaluation.
//!
//! Features are addressed in two ways. The *feature index* is the column of
//! the dataset. The *position* is the index in an [`Ordering`]; all structure
//! and table bookkeeping is done by position, and `ordering.feature(pos)` maps
//! back to the dataset column.

mod bank;
pub(crate) mod inference;

pub use bank::{BankLayout, CptBank, NormalizedBank, TableSlot};
pub use inference::{error_rate, log_joint_all_classes, predict, TanClassifier};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature parent of a node in addition to the class.
///
/// `Feature(j)` refers to ordering position `j`, not to a dataset column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Option<usize>", into = "Option<usize>")]
pub enum ParentChoice {
    NoParent,
    Feature(usize),
}

impl ParentChoice {
    pub fn position(self) -> Option<usize> {
        match self {
            ParentChoice::NoParent => None,
            ParentChoice::Feature(j) => Some(j),
        }
    }
}

impl From<Option<usize>> for ParentChoice {
    fn from(value: Option<usize>) -> Self {
        match value {
            None => ParentChoice::NoParent,
            Some(j) => ParentChoice::Feature(j),
        }
    }
}

impl From<ParentChoice> for Option<usize> {
    fn from(value: ParentChoice) -> Self {
        value.position()
    }
}

impl fmt::Display for ParentChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParentChoice::NoParent => write!(f, "none"),
            ParentChoice::Feature(j) => write!(f, "position {j}"),
        }
    }
}

/// A permutation of the features: `perm[position] = feature index`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Ordering {
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl Ordering {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        if perm.is_empty() {
            return Err(Error::InvalidStructure("ordering is empty".into()));
        }
        let mut inverse = vec![usize::MAX; perm.len()];
        for (pos, &feature) in perm.iter().enumerate() {
            if feature >= perm.len() || inverse[feature] != usize::MAX {
                return Err(Error::InvalidStructure(format!(
                    "ordering {perm:?} is not a permutation of 0..{}",
                    perm.len()
                )));
            }
            inverse[feature] = pos;
        }
        Ok(Ordering { perm, inverse })
    }

    pub fn identity(d: usize) -> Self {
        let perm: Vec<usize> = (0..d).collect();
        Ordering {
            inverse: perm.clone(),
            perm,
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Dataset column at `position`.
    pub fn feature(&self, position: usize) -> usize {
        self.perm[position]
    }

    /// Position of dataset column `feature`.
    pub fn position_of(&self, feature: usize) -> usize {
        self.inverse[feature]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }
}

impl TryFrom<Vec<usize>> for Ordering {
    type Error = Error;

    fn try_from(value: Vec<usize>) -> Result<Self> {
        Ordering::new(value)
    }
}

impl From<Ordering> for Vec<usize> {
    fn from(value: Ordering) -> Self {
        value.perm
    }
}

/// Candidate feature parents for every position of an ordering.
///
/// Position 0 normally only has [`ParentChoice::NoParent`]. With
/// `allow_pseudo` set, candidates may come from later positions; the
/// resulting models may be cyclic and are not Bayesian networks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSets {
    ordering: Ordering,
    lists: Vec<Vec<ParentChoice>>,
    allow_pseudo: bool,
}

impl CandidateSets {
    pub fn new(ordering: Ordering, lists: Vec<Vec<ParentChoice>>, allow_pseudo: bool) -> Result<Self> {
        let d = ordering.len();
        if lists.len() != d {
            return Err(Error::InvalidStructure(format!(
                "{} candidate lists for {d} positions",
                lists.len()
            )));
        }
        for (i, list) in lists.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::InvalidStructure(format!("position {i} has no candidates")));
            }
            for (k, cand) in list.iter().enumerate() {
                if list[..k].contains(cand) {
                    return Err(Error::InvalidStructure(format!(
                        "position {i} lists {cand} twice"
                    )));
                }
                if let ParentChoice::Feature(j) = *cand {
                    check_parent(i, j, d, allow_pseudo)?;
                }
            }
        }
        Ok(CandidateSets {
            ordering,
            lists,
            allow_pseudo,
        })
    }

    /// One candidate per position: the structure's own parent.
    pub fn from_structure(structure: &TanStructure) -> Self {
        CandidateSets {
            ordering: structure.ordering.clone(),
            lists: structure.parents.iter().map(|&p| vec![p]).collect(),
            allow_pseudo: structure.is_pseudo(),
        }
    }

    pub fn ordering(&self) -> &Ordering {
        &self.ordering
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn list(&self, position: usize) -> &[ParentChoice] {
        &self.lists[position]
    }

    pub fn lists(&self) -> &[Vec<ParentChoice>] {
        &self.lists
    }

    pub fn allow_pseudo(&self) -> bool {
        self.allow_pseudo
    }

    /// Largest number of feature candidates at any position (K).
    pub fn max_size(&self) -> usize {
        self.lists
            .iter()
            .map(|l| l.iter().filter(|c| matches!(c, ParentChoice::Feature(_))).count())
            .max()
            .unwrap_or(0)
    }

    pub fn total_candidates(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

fn check_parent(i: usize, j: usize, d: usize, allow_pseudo: bool) -> Result<()> {
    if j >= d || j == i {
        return Err(Error::InvalidStructure(format!(
            "position {i} cannot have parent position {j}"
        )));
    }
    if j > i && !allow_pseudo {
        return Err(Error::InvalidStructure(format!(
            "position {i} has later parent {j}; enable pseudo-TAN to allow this"
        )));
    }
    Ok(())
}

/// A concrete TAN graph: every feature has the class as parent plus at most
/// one feature parent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TanStructure {
    ordering: Ordering,
    parents: Vec<ParentChoice>,
}

impl TanStructure {
    pub fn new(ordering: Ordering, parents: Vec<ParentChoice>, allow_pseudo: bool) -> Result<Self> {
        let d = ordering.len();
        if parents.len() != d {
            return Err(Error::InvalidStructure(format!(
                "{} parent entries for {d} positions",
                parents.len()
            )));
        }
        for (i, p) in parents.iter().enumerate() {
            if let ParentChoice::Feature(j) = *p {
                check_parent(i, j, d, allow_pseudo)?;
            }
        }
        Ok(TanStructure { ordering, parents })
    }

    /// Builds a structure from dataset-column parents: `parents[f]` is the
    /// feature parent of column `f`.
    pub fn from_feature_parents(ordering: Ordering, parents: &[Option<usize>], allow_pseudo: bool) -> Result<Self> {
        if parents.len() != ordering.len() {
            return Err(Error::InvalidStructure("parent vector length mismatch".into()));
        }
        let by_pos = (0..ordering.len())
            .map(|pos| match parents[ordering.feature(pos)] {
                None => Ok(ParentChoice::NoParent),
                Some(f) if f < ordering.len() => Ok(ParentChoice::Feature(ordering.position_of(f))),
                Some(f) => Err(Error::InvalidStructure(format!("parent feature {f} out of range"))),
            })
            .collect::<Result<Vec<_>>>()?;
        TanStructure::new(ordering, by_pos, allow_pseudo)
    }

    pub fn ordering(&self) -> &Ordering {
        &self.ordering
    }

    pub fn num_features(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, position: usize) -> ParentChoice {
        self.parents[position]
    }

    pub fn parents(&self) -> &[ParentChoice] {
        &self.parents
    }

    /// Feature parent of dataset column `feature`, as a dataset column.
    pub fn feature_parent(&self, feature: usize) -> Option<usize> {
        self.parents[self.ordering.position_of(feature)]
            .position()
            .map(|j| self.ordering.feature(j))
    }

    /// `(parent column, child column)` for every feature-to-feature edge.
    pub fn feature_edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_features())
            .filter_map(|pos| {
                self.parents[pos]
                    .position()
                    .map(|j| (self.ordering.feature(j), self.ordering.feature(pos)))
            })
            .collect()
    }

    /// True if some parent comes later in the ordering.
    pub fn is_pseudo(&self) -> bool {
        self.parents
            .iter()
            .enumerate()
            .any(|(i, p)| matches!(p, ParentChoice::Feature(j) if *j > i))
    }

    /// True if following feature-parent links revisits a node.
    pub fn has_cycle(&self) -> bool {
        let d = self.num_features();
        // 0 = unvisited, 1 = on current path, 2 = done
        let mut state = vec![0u8; d];
        for start in 0..d {
            let mut path = Vec::new();
            let mut cur = Some(start);
            while let Some(node) = cur {
                match state[node] {
                    1 => return true,
                    2 => break,
                    _ => {}
                }
                state[node] = 1;
                path.push(node);
                cur = self.parents[node].position();
            }
            for node in path {
                state[node] = 2;
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_rejects_non_permutations() {
        assert!(Ordering::new(vec![0, 0, 1]).is_err());
        assert!(Ordering::new(vec![0, 3]).is_err());
        assert!(Ordering::new(vec![]).is_err());
        let o = Ordering::new(vec![2, 0, 1]).unwrap();
        assert_eq!(o.position_of(2), 0);
        assert_eq!(o.feature(2), 1);
    }

    #[test]
    fn structure_requires_earlier_parents_unless_pseudo() {
        let o = Ordering::identity(3);
        let later = vec![ParentChoice::Feature(1), ParentChoice::NoParent, ParentChoice::Feature(0)];
        assert!(TanStructure::new(o.clone(), later.clone(), false).is_err());
        let s = TanStructure::new(o, later, true).unwrap();
        assert!(s.is_pseudo());
        assert!(!s.has_cycle());
    }

    #[test]
    fn detects_cycles() {
        let o = Ordering::identity(3);
        let s = TanStructure::new(
            o,
            vec![ParentChoice::Feature(2), ParentChoice::NoParent, ParentChoice::Feature(0)],
            true,
        )
        .unwrap();
        assert!(s.has_cycle());
    }

    #[test]
    fn candidate_sets_reject_duplicates() {
        let o = Ordering::identity(3);
        let lists = vec![
            vec![ParentChoice::NoParent],
            vec![ParentChoice::Feature(0)],
            vec![ParentChoice::Feature(0), ParentChoice::Feature(0)],
        ];
        assert!(CandidateSets::new(o, lists, false).is_err());
    }

    #[test]
    fn feature_parents_round_trip() {
        let o = Ordering::new(vec![2, 0, 1]).unwrap();
        let s = TanStructure::from_feature_parents(o, &[Some(2), Some(0), None], false).unwrap();
        assert_eq!(s.feature_parent(0), Some(2));
        assert_eq!(s.feature_parent(1), Some(0));
        assert_eq!(s.feature_parent(2), None);
        let mut edges = s.feature_edges();
        edges.sort();
        assert_eq!(edges, vec![(0, 1), (2, 0)]);
    }

    #[test]
    fn parent_choice_serializes_as_option() {
        let json = serde_json::to_string(&vec![ParentChoice::NoParent, ParentChoice::Feature(3)]).unwrap();
        assert_eq!(json, "[null,3]");
    }
}
