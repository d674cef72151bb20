use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, DyadicRect, Region};
use crate::num::Rational;

/// A finite family of dyadic rectangles of a common dimension. Duplicates are
/// collapsed; first-occurrence order is kept.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RectCollection {
    dim: usize,
    members: Vec<DyadicRect>,
}

impl RectCollection {
    pub fn new(dim: usize, rects: impl IntoIterator<Item = DyadicRect>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut members = Vec::new();
        for r in rects {
            if r.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.dim() });
            }
            if seen.insert(r.clone()) {
                members.push(r);
            }
        }
        Ok(Self { dim, members })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, members: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn members(&self) -> &[DyadicRect] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DyadicRect> {
        self.members.iter()
    }

    /// Sub-collection by member indices.
    pub fn subset(&self, idx: &[usize]) -> RectCollection {
        Self::new(self.dim, idx.iter().map(|&i| self.members[i].clone())).expect("same dimension")
    }

    pub fn boxes(&self) -> Vec<Aabb> {
        self.members.iter().map(DyadicRect::to_box).collect()
    }

    pub fn shadow(&self) -> Region {
        Region::from_boxes(self.dim, &self.boxes()).expect("uniform dimension")
    }

    pub fn total_area(&self) -> Rational {
        self.members.iter().map(DyadicRect::area).sum()
    }

    /// Inclusion-maximal members.
    pub fn maximal_elements(&self) -> RectCollection {
        let keep = self
            .members
            .iter()
            .enumerate()
            .filter(|(i, r)| !self.members.iter().enumerate().any(|(k, s)| k != *i && s.contains(r)));
        Self { dim: self.dim, members: keep.map(|(_, r)| r.clone()).collect() }
    }

    /// First pair `(i, k)` with member `i` containing member `k`.
    pub fn comparable_pair(&self) -> Option<(usize, usize)> {
        for (i, a) in self.members.iter().enumerate() {
            for (k, b) in self.members.iter().enumerate() {
                if i != k && a.contains(b) {
                    return Some((i, k));
                }
            }
        }
        None
    }

    pub fn is_pairwise_incomparable(&self) -> bool {
        self.comparable_pair().is_none()
    }

    pub fn require_incomparable(&self) -> Result<()> {
        match self.comparable_pair() {
            Some((i, k)) => Err(Error::NotIncomparable(i, k)),
            None => Ok(()),
        }
    }
}

impl<'a> IntoIterator for &'a RectCollection {
    type Item = &'a DyadicRect;
    type IntoIter = std::slice::Iter<'a, DyadicRect>;

    fn into_iter(self) -> Self::IntoIter {
        self.members.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::int;

    fn staircase() -> RectCollection {
        RectCollection::new(
            2,
            [
                DyadicRect::from_pairs(&[(0, 0), (2, 0)]),
                DyadicRect::from_pairs(&[(1, 0), (1, 0)]),
                DyadicRect::from_pairs(&[(2, 0), (0, 0)]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn shadow_and_duplicates() {
        let u = DyadicRect::from_pairs(&[(0, 0), (0, 0)]);
        let c = RectCollection::new(2, [u.clone(), u.clone()]).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.shadow(), Region::from_box(&Aabb::unit(2)));
        assert_eq!(staircase().shadow().measure(), int(8));
    }

    #[test]
    fn maximal_and_incomparable() {
        let c = RectCollection::new(
            2,
            [DyadicRect::from_pairs(&[(0, 0), (0, 0)]), DyadicRect::from_pairs(&[(1, 0), (1, 0)])],
        )
        .unwrap();
        let m = c.maximal_elements();
        assert_eq!(m.members(), &[DyadicRect::from_pairs(&[(1, 0), (1, 0)])]);
        assert!(!c.is_pairwise_incomparable());
        let s = staircase();
        assert_eq!(s.maximal_elements(), s);
        assert!(s.is_pairwise_incomparable());
        let single = RectCollection::new(2, [DyadicRect::from_pairs(&[(0, 3), (1, 1)])]).unwrap();
        assert!(single.is_pairwise_incomparable());
        assert_eq!(single.maximal_elements(), single);
    }

    #[test]
    fn rejects_mixed_dimensions() {
        let r = RectCollection::new(2, [DyadicRect::from_pairs(&[(0, 0)])]);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }
}
