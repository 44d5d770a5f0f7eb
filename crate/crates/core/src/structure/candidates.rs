use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CandidateSets, Ordering, ParentChoice};

/// How candidate parent lists are built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateOptions {
    /// Maximum number of feature candidates per position.
    pub k: usize,
    /// Also offer "class only" as a choice.
    pub include_no_parent: bool,
    /// Draw candidates from all other positions, not only earlier ones.
    pub allow_pseudo: bool,
}

impl CandidateOptions {
    pub fn new(k: usize, include_no_parent: bool) -> Self {
        CandidateOptions {
            k,
            include_no_parent,
            allow_pseudo: false,
        }
    }
}

fn pool(i: usize, d: usize, allow_pseudo: bool) -> Vec<usize> {
    if allow_pseudo {
        (0..d).filter(|&j| j != i).collect()
    } else {
        (0..i).collect()
    }
}

fn assemble(mut features: Vec<usize>, include_no_parent: bool) -> Vec<ParentChoice> {
    features.sort_unstable();
    let mut list = Vec::with_capacity(features.len() + 1);
    if include_no_parent || features.is_empty() {
        list.push(ParentChoice::NoParent);
    }
    list.extend(features.into_iter().map(ParentChoice::Feature));
    list
}

/// Uniformly drawn parent subsets of size `min(k, available)`.
///
/// Every position's pool is fully shuffled regardless of `k`, and the first
/// `k` entries are kept, so with the same seed the subset for a smaller `k`
/// is contained in the subset for a larger `k`. Lists are sorted by
/// position, with "class only" first when included.
pub fn random_candidates(ordering: &Ordering, opts: CandidateOptions, seed: u64) -> Result<CandidateSets> {
    if opts.k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let d = ordering.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lists = (0..d)
        .map(|i| {
            let mut p = pool(i, d, opts.allow_pseudo);
            p.shuffle(&mut rng);
            p.truncate(opts.k);
            assemble(p, opts.include_no_parent)
        })
        .collect();
    CandidateSets::new(ordering.clone(), lists, opts.allow_pseudo)
}

/// Every earlier position is a candidate.
pub fn all_candidates(ordering: &Ordering, include_no_parent: bool) -> CandidateSets {
    let d = ordering.len();
    let lists = (0..d).map(|i| assemble((0..i).collect(), include_no_parent)).collect();
    CandidateSets::new(ordering.clone(), lists, false).expect("earlier positions are valid parents")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeuristicOrdering {
    /// Row-major, top to bottom, left to right.
    A,
    /// Lower triangle row by row, each off-diagonal pixel followed by its
    /// transpose.
    B,
    /// Center outwards in square rings.
    C,
}

/// Side length of a square image with `d` pixels.
pub fn image_side(d: usize) -> Result<usize> {
    let side = (d as f64).sqrt().round() as usize;
    if side * side != d || d == 0 {
        return Err(Error::InvalidArgument(format!("{d} features do not form a square image")));
    }
    Ok(side)
}

/// Pixel ordering of a `side`×`side` image; features are row-major pixels.
///
/// For ordering C with an even side the growth starts from the central 2×2
/// block taken row-major.
pub fn heuristic_ordering(kind: HeuristicOrdering, side: usize) -> Result<Ordering> {
    if side == 0 {
        return Err(Error::InvalidArgument("image side must be positive".into()));
    }
    let px = |r: usize, c: usize| r * side + c;
    let perm = match kind {
        HeuristicOrdering::A => (0..side * side).collect(),
        HeuristicOrdering::B => {
            let mut perm = Vec::with_capacity(side * side);
            for r in 0..side {
                for c in 0..=r {
                    perm.push(px(r, c));
                    if c != r {
                        perm.push(px(c, r));
                    }
                }
            }
            perm
        }
        HeuristicOrdering::C => {
            let mut perm = Vec::with_capacity(side * side);
            let (mut top, mut bottom);
            if side % 2 == 1 {
                top = side / 2;
                bottom = top;
                perm.push(px(top, top));
            } else {
                top = side / 2 - 1;
                bottom = side / 2;
                for r in top..=bottom {
                    for c in top..=bottom {
                        perm.push(px(r, c));
                    }
                }
            }
            // The ordered center is rows/cols top..=bottom.
            while top > 0 {
                let (left, right) = (top, bottom);
                for c in left..=right {
                    perm.push(px(top - 1, c));
                }
                for c in left..=right {
                    perm.push(px(bottom + 1, c));
                }
                for r in top..=bottom {
                    perm.push(px(r, left - 1));
                }
                for r in top..=bottom {
                    perm.push(px(r, right + 1));
                }
                perm.push(px(top - 1, left - 1));
                perm.push(px(top - 1, right + 1));
                perm.push(px(bottom + 1, left - 1));
                perm.push(px(bottom + 1, right + 1));
                top -= 1;
                bottom += 1;
            }
            perm
        }
    };
    Ordering::new(perm)
}

/// The `k` candidates nearest in pixel distance, ties broken by earlier
/// ordering position.
pub fn heuristic_candidates(ordering: &Ordering, side: usize, opts: CandidateOptions) -> Result<CandidateSets> {
    if opts.k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let d = ordering.len();
    if side * side != d {
        return Err(Error::InvalidArgument(format!("{d} features do not form a {side}x{side} image")));
    }
    let coord = |pos: usize| {
        let f = ordering.feature(pos);
        ((f / side) as i64, (f % side) as i64)
    };
    let lists = (0..d)
        .map(|i| {
            let (ri, ci) = coord(i);
            let mut p = pool(i, d, opts.allow_pseudo);
            p.sort_by_key(|&j| {
                let (rj, cj) = coord(j);
                ((ri - rj).pow(2) + (ci - cj).pow(2), j)
            });
            p.truncate(opts.k);
            let mut list = Vec::with_capacity(p.len() + 1);
            if opts.include_no_parent || p.is_empty() {
                list.push(ParentChoice::NoParent);
            }
            // nearest first
            list.extend(p.into_iter().map(ParentChoice::Feature));
            list
        })
        .collect();
    CandidateSets::new(ordering.clone(), lists, opts.allow_pseudo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixels(o: &Ordering, side: usize) -> Vec<(usize, usize)> {
        o.as_slice().iter().map(|&f| (f / side, f % side)).collect()
    }

    #[test]
    fn position_one_is_forced() {
        let o = Ordering::identity(5);
        let c = random_candidates(&o, CandidateOptions::new(3, false), 1).unwrap();
        assert_eq!(c.list(0), &[ParentChoice::NoParent]);
        assert_eq!(c.list(1), &[ParentChoice::Feature(0)]);
        let c = random_candidates(&o, CandidateOptions::new(3, true), 1).unwrap();
        assert_eq!(c.list(1), &[ParentChoice::NoParent, ParentChoice::Feature(0)]);
    }

    #[test]
    fn saturated_k_gives_all_earlier_positions() {
        let o = Ordering::identity(6);
        let c = random_candidates(&o, CandidateOptions::new(5, false), 9).unwrap();
        assert_eq!(c, all_candidates(&o, false));
    }

    #[test]
    fn smaller_k_subsets_are_nested() {
        let o = Ordering::identity(12);
        for seed in 0..10 {
            let small = random_candidates(&o, CandidateOptions::new(2, true), seed).unwrap();
            let large = random_candidates(&o, CandidateOptions::new(5, true), seed).unwrap();
            for i in 0..12 {
                for cand in small.list(i) {
                    assert!(large.list(i).contains(cand));
                }
                if i > 2 {
                    assert!(small.list(i).len() < large.list(i).len());
                }
            }
        }
    }

    #[test]
    fn pseudo_candidates_may_point_forward() {
        let o = Ordering::identity(4);
        let opts = CandidateOptions {
            k: 3,
            include_no_parent: false,
            allow_pseudo: true,
        };
        let c = random_candidates(&o, opts, 0).unwrap();
        assert_eq!(c.list(0).len(), 3);
        assert!(c.allow_pseudo());
    }

    #[test]
    fn ordering_a_is_row_major() {
        let o = heuristic_ordering(HeuristicOrdering::A, 2).unwrap();
        assert_eq!(pixels(&o, 2), vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn ordering_b_interleaves_transposes() {
        let o = heuristic_ordering(HeuristicOrdering::B, 2).unwrap();
        assert_eq!(pixels(&o, 2), vec![(0, 0), (1, 0), (0, 1), (1, 1)]);
        let o = heuristic_ordering(HeuristicOrdering::B, 3).unwrap();
        assert_eq!(
            pixels(&o, 3),
            vec![(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1), (1, 2), (2, 2)]
        );
    }

    #[test]
    fn ordering_c_grows_from_center() {
        let o = heuristic_ordering(HeuristicOrdering::C, 3).unwrap();
        assert_eq!(
            pixels(&o, 3),
            vec![(1, 1), (0, 1), (2, 1), (1, 0), (1, 2), (0, 0), (0, 2), (2, 0), (2, 2)]
        );
        // Larger and even sides still produce permutations.
        for side in [4, 5, 6, 14] {
            assert_eq!(heuristic_ordering(HeuristicOrdering::C, side).unwrap().len(), side * side);
        }
        let o = heuristic_ordering(HeuristicOrdering::C, 4).unwrap();
        assert_eq!(pixels(&o, 4)[..4], [(1, 1), (1, 2), (2, 1), (2, 2)]);
    }

    #[test]
    fn non_square_dimension_is_an_error() {
        assert!(image_side(10).is_err());
        assert_eq!(image_side(196).unwrap(), 14);
        let o = Ordering::identity(10);
        assert!(heuristic_candidates(&o, 3, CandidateOptions::new(2, false)).is_err());
    }

    #[test]
    fn nearest_pixel_candidates() {
        let o = heuristic_ordering(HeuristicOrdering::A, 2).unwrap();
        let c = heuristic_candidates(&o, 2, CandidateOptions::new(1, false)).unwrap();
        // pixel (0,1) sits at position 1
        assert_eq!(c.list(1), &[ParentChoice::Feature(0)]);

        let o = heuristic_ordering(HeuristicOrdering::A, 3).unwrap();
        let c = heuristic_candidates(&o, 3, CandidateOptions::new(2, false)).unwrap();
        // pixel (1,1) is position 4; (0,1) is position 1 and (1,0) position 3
        assert_eq!(c.list(4), &[ParentChoice::Feature(1), ParentChoice::Feature(3)]);
    }

    #[test]
    fn saturated_heuristic_lists_are_sorted_by_distance() {
        let o = heuristic_ordering(HeuristicOrdering::A, 3).unwrap();
        let c = heuristic_candidates(&o, 3, CandidateOptions::new(8, false)).unwrap();
        // pixel (1,1) at position 4: (0,1), (1,0) at distance 1 then (0,0), (0,2)
        let expect: Vec<ParentChoice> = [1, 3, 0, 2].into_iter().map(ParentChoice::Feature).collect();
        assert_eq!(c.list(4), expect.as_slice());
    }
}
