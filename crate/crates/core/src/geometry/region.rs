//! Finite unions of boxes, kept in a canonical disjoint decomposition.
//!
//! Every operation compresses the participating corner coordinates into a
//! per-axis grid of lines, marks the covered cells, and re-extracts boxes
//! slab by slab. Consecutive slabs with identical cross-sections are merged,
//! so the output depends only on the point set (up to null sets), never on the
//! input decomposition.

use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::num::Rational;

pub(crate) type IndexBox = (Vec<usize>, Vec<usize>);

/// Row-major strides (axis 0 slowest).
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for j in (0..dims.len().saturating_sub(1)).rev() {
        s[j] = s[j + 1] * dims[j + 1];
    }
    s
}

/// Cell occupancy for index boxes over a grid with `dims[j]` cells per axis.
pub(crate) fn mark(dims: &[usize], boxes: &[IndexBox]) -> Vec<bool> {
    let d = dims.len();
    let ext: Vec<usize> = dims.iter().map(|n| n + 1).collect();
    let st = strides(&ext);
    let mut diff = vec![0i32; ext.iter().product()];
    for (lo, hi) in boxes {
        if (0..d).any(|j| lo[j] >= hi[j]) {
            continue;
        }
        for mask in 0..(1usize << d) {
            let mut idx = 0;
            for j in 0..d {
                idx += st[j] * if mask >> j & 1 == 1 { hi[j] } else { lo[j] };
            }
            if mask.count_ones() % 2 == 0 {
                diff[idx] += 1;
            } else {
                diff[idx] -= 1;
            }
        }
    }
    for j in 0..d {
        let n = ext[j];
        let s = st[j];
        for idx in 0..diff.len() {
            if !(idx / s).is_multiple_of(n) {
                diff[idx] += diff[idx - s];
            }
        }
    }
    let cst = strides(dims);
    let total: usize = dims.iter().product();
    let mut bits = vec![false; total];
    for (c, bit) in bits.iter_mut().enumerate() {
        let mut idx = 0;
        for j in 0..d {
            idx += ((c / cst[j]) % dims[j]) * st[j];
        }
        *bit = diff[idx] > 0;
    }
    bits
}

/// Canonical index boxes of an occupancy grid.
pub(crate) fn extract(bits: &[bool], dims: &[usize]) -> Vec<IndexBox> {
    if dims.len() == 1 {
        let mut out = Vec::new();
        let mut i = 0;
        while i < dims[0] {
            if bits[i] {
                let start = i;
                while i < dims[0] && bits[i] {
                    i += 1;
                }
                out.push((vec![start], vec![i]));
            } else {
                i += 1;
            }
        }
        return out;
    }
    let slab: usize = dims[1..].iter().product();
    let mut out = Vec::new();
    let mut i = 0;
    while i < dims[0] {
        let cur = &bits[i * slab..(i + 1) * slab];
        let start = i;
        i += 1;
        while i < dims[0] && &bits[i * slab..(i + 1) * slab] == cur {
            i += 1;
        }
        if cur.iter().any(|&b| b) {
            for (lo, hi) in extract(cur, &dims[1..]) {
                let mut l = vec![start];
                l.extend(lo);
                let mut h = vec![i];
                h.extend(hi);
                out.push((l, h));
            }
        }
    }
    out
}

/// Sorted distinct coordinates per axis.
pub(crate) fn compress<T: Ord + Clone>(dim: usize, boxes: &[(&[T], &[T])]) -> Vec<Vec<T>> {
    (0..dim)
        .map(|j| {
            let mut v: Vec<T> = boxes.iter().flat_map(|(l, h)| [l[j].clone(), h[j].clone()]).collect();
            v.sort();
            v.dedup();
            v
        })
        .collect()
}

pub(crate) fn to_index<T: Ord>(lines: &[Vec<T>], lo: &[T], hi: &[T]) -> IndexBox {
    let pos = |j: usize, x: &T| lines[j].binary_search(x).expect("coordinate missing from compression");
    ((0..lines.len()).map(|j| pos(j, &lo[j])).collect(), (0..lines.len()).map(|j| pos(j, &hi[j])).collect())
}

/// Canonical disjoint decomposition of a union of (generic-coordinate) boxes.
pub(crate) fn canonical_union<T: Ord + Clone>(dim: usize, boxes: &[(&[T], &[T])]) -> Vec<(Vec<T>, Vec<T>)> {
    let boxes: Vec<_> = boxes.iter().filter(|(l, h)| l.iter().zip(h.iter()).all(|(a, b)| a < b)).copied().collect();
    if boxes.is_empty() {
        return Vec::new();
    }
    let lines = compress(dim, &boxes);
    let dims: Vec<usize> = lines.iter().map(|l| l.len() - 1).collect();
    let idx: Vec<IndexBox> = boxes.iter().map(|(l, h)| to_index(&lines, l, h)).collect();
    let bits = mark(&dims, &idx);
    from_index(&lines, extract(&bits, &dims))
}

fn from_index<T: Clone>(lines: &[Vec<T>], boxes: Vec<IndexBox>) -> Vec<(Vec<T>, Vec<T>)> {
    boxes
        .into_iter()
        .map(|(lo, hi)| {
            (
                lo.iter().enumerate().map(|(j, &i)| lines[j][i].clone()).collect(),
                hi.iter().enumerate().map(|(j, &i)| lines[j][i].clone()).collect(),
            )
        })
        .collect()
}

#[derive(Clone, Copy)]
enum SetOp {
    Intersect,
    Subtract,
}

/// A finite union of boxes in canonical disjoint form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    dim: usize,
    boxes: Vec<Aabb>,
}

impl Region {
    pub fn empty(dim: usize) -> Self {
        Self { dim, boxes: Vec::new() }
    }

    pub fn from_box(b: &Aabb) -> Self {
        Self::from_boxes_unchecked(b.dim(), std::slice::from_ref(b))
    }

    pub fn from_boxes<'a>(dim: usize, boxes: impl IntoIterator<Item = &'a Aabb>) -> Result<Self> {
        let boxes: Vec<&Aabb> = boxes.into_iter().collect();
        if let Some(b) = boxes.iter().find(|b| b.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: b.dim() });
        }
        let parts: Vec<(&[Rational], &[Rational])> =
            boxes.iter().filter(|b| !b.is_empty()).map(|b| (b.lo(), b.hi())).collect();
        Ok(Self::from_parts(dim, &parts))
    }

    fn from_boxes_unchecked(dim: usize, boxes: &[Aabb]) -> Self {
        Self::from_boxes(dim, boxes).expect("dimension checked by caller")
    }

    pub(crate) fn from_parts(dim: usize, parts: &[(&[Rational], &[Rational])]) -> Self {
        let boxes = canonical_union(dim, parts)
            .into_iter()
            .map(|(lo, hi)| Aabb::new(lo, hi).expect("canonical boxes are well formed"))
            .collect();
        Self { dim, boxes }
    }

    /// Already-canonical integer-coordinate boxes mapped back through per-axis
    /// value tables.
    pub(crate) fn from_canonical(dim: usize, boxes: Vec<Aabb>) -> Self {
        Self { dim, boxes }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn boxes(&self) -> &[Aabb] {
        &self.boxes
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn measure(&self) -> Rational {
        self.boxes.iter().map(Aabb::volume).fold(Rational::zero(), |a, b| a + b)
    }

    fn check_dim(&self, other: &Region) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        Ok(())
    }

    pub fn union(&self, other: &Region) -> Result<Region> {
        self.check_dim(other)?;
        Region::from_boxes(self.dim, self.boxes.iter().chain(&other.boxes))
    }

    pub fn union_all<'a>(dim: usize, regions: impl IntoIterator<Item = &'a Region>) -> Result<Region> {
        let mut boxes = Vec::new();
        for r in regions {
            if r.dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.dim });
            }
            boxes.extend(r.boxes.iter());
        }
        Region::from_boxes(dim, boxes)
    }

    pub fn intersect(&self, other: &Region) -> Result<Region> {
        self.check_dim(other)?;
        Ok(self.combine(other, SetOp::Intersect))
    }

    pub fn subtract(&self, other: &Region) -> Result<Region> {
        self.check_dim(other)?;
        Ok(self.combine(other, SetOp::Subtract))
    }

    fn combine(&self, other: &Region, op: SetOp) -> Region {
        if self.is_empty() || (other.is_empty() && matches!(op, SetOp::Intersect)) {
            return Region::empty(self.dim);
        }
        if other.is_empty() {
            return self.clone();
        }
        let a: Vec<(&[Rational], &[Rational])> = self.boxes.iter().map(|b| (b.lo(), b.hi())).collect();
        let b: Vec<(&[Rational], &[Rational])> = other.boxes.iter().map(|b| (b.lo(), b.hi())).collect();
        let all: Vec<_> = a.iter().chain(&b).copied().collect();
        let lines = compress(self.dim, &all);
        let dims: Vec<usize> = lines.iter().map(|l| l.len() - 1).collect();
        let ia: Vec<IndexBox> = a.iter().map(|(l, h)| to_index(&lines, l, h)).collect();
        let ib: Vec<IndexBox> = b.iter().map(|(l, h)| to_index(&lines, l, h)).collect();
        let ma = mark(&dims, &ia);
        let mb = mark(&dims, &ib);
        let bits: Vec<bool> = ma
            .iter()
            .zip(&mb)
            .map(|(&x, &y)| match op {
                SetOp::Intersect => x && y,
                SetOp::Subtract => x && !y,
            })
            .collect();
        let boxes = from_index(&lines, extract(&bits, &dims))
            .into_iter()
            .map(|(lo, hi)| Aabb::new(lo, hi).expect("canonical boxes are well formed"))
            .collect();
        Region { dim: self.dim, boxes }
    }

    /// `|inner ∩ self|`.
    pub fn measure_within(&self, inner: &Aabb) -> Rational {
        self.boxes.iter().map(|b| b.intersect(inner).volume()).fold(Rational::zero(), |a, b| a + b)
    }

    /// Whether `inner \ self` is a null set.
    pub fn contains_ae(&self, inner: &Aabb) -> bool {
        inner.is_empty() || self.measure_within(inner) == inner.volume()
    }

    pub fn contains_region(&self, inner: &Region) -> bool {
        inner.subtract(self).map(|r| r.is_empty()).unwrap_or(false)
    }

    /// Equality up to null sets; canonical form makes this structural.
    pub fn ae_eq(&self, other: &Region) -> bool {
        self == other
    }

    pub fn bounding_box(&self) -> Option<Aabb> {
        let first = self.boxes.first()?;
        let mut lo = first.lo().to_vec();
        let mut hi = first.hi().to_vec();
        for b in &self.boxes[1..] {
            for j in 0..self.dim {
                if b.lo()[j] < lo[j] {
                    lo[j] = b.lo()[j].clone();
                }
                if b.hi()[j] > hi[j] {
                    hi[j] = b.hi()[j].clone();
                }
            }
        }
        Some(Aabb::new(lo, hi).expect("nonempty bounding box"))
    }

    /// Sorted distinct corner coordinates along `axis`.
    pub fn lines(&self, axis: usize) -> Vec<Rational> {
        let mut v: Vec<Rational> =
            self.boxes.iter().flat_map(|b| [b.lo()[axis].clone(), b.hi()[axis].clone()]).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn index(&self) -> CoverIndex {
        CoverIndex::new(self)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.boxes.is_empty() {
            return write!(f, "∅");
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if i > 0 {
                write!(f, " ∪ ")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Constant-time (after a logarithmic lookup) containment queries against a
/// fixed region.
#[derive(Clone, Debug)]
pub struct CoverIndex {
    lines: Vec<Vec<Rational>>,
    dims: Vec<usize>,
    /// Inclusive prefix counts of uncovered cells, shape `(n_j + 1)` per axis.
    prefix: Vec<u32>,
    ext_strides: Vec<usize>,
}

impl CoverIndex {
    pub fn new(region: &Region) -> Self {
        let d = region.dim();
        let lines: Vec<Vec<Rational>> = (0..d).map(|j| region.lines(j)).collect();
        if region.is_empty() {
            return Self { lines, dims: vec![0; d], prefix: Vec::new(), ext_strides: vec![0; d] };
        }
        let dims: Vec<usize> = lines.iter().map(|l| l.len() - 1).collect();
        let idx: Vec<IndexBox> = region.boxes().iter().map(|b| to_index(&lines, b.lo(), b.hi())).collect();
        let bits = mark(&dims, &idx);
        let ext: Vec<usize> = dims.iter().map(|n| n + 1).collect();
        let st = strides(&ext);
        let cst = strides(&dims);
        let mut prefix = vec![0u32; ext.iter().product()];
        for (c, &covered) in bits.iter().enumerate() {
            if !covered {
                let mut idx = 0;
                for j in 0..d {
                    idx += ((c / cst[j]) % dims[j] + 1) * st[j];
                }
                prefix[idx] = 1;
            }
        }
        for j in 0..d {
            let n = ext[j];
            let s = st[j];
            for idx in 0..prefix.len() {
                if !(idx / s).is_multiple_of(n) {
                    prefix[idx] += prefix[idx - s];
                }
            }
        }
        Self { lines, dims, prefix, ext_strides: st }
    }

    pub fn lines(&self, axis: usize) -> &[Rational] {
        &self.lines[axis]
    }

    /// Whether `b` is contained in the region up to a null set.
    pub fn contains(&self, b: &Aabb) -> bool {
        if b.is_empty() {
            return true;
        }
        if self.prefix.is_empty() {
            return false;
        }
        let d = self.dims.len();
        let mut lo = vec![0usize; d];
        let mut hi = vec![0usize; d];
        for j in 0..d {
            let l = &self.lines[j];
            if b.lo()[j] < l[0] || b.hi()[j] > l[l.len() - 1] {
                return false;
            }
            // cell i spans [l[i], l[i+1])
            lo[j] = l.partition_point(|x| x <= &b.lo()[j]) - 1;
            hi[j] = l.partition_point(|x| x < &b.hi()[j]);
        }
        let mut total: i64 = 0;
        for mask in 0..(1usize << d) {
            let mut idx = 0;
            for j in 0..d {
                idx += self.ext_strides[j] * if mask >> j & 1 == 1 { lo[j] } else { hi[j] };
            }
            let v = self.prefix[idx] as i64;
            if mask.count_ones() % 2 == 0 {
                total += v;
            } else {
                total -= v;
            }
        }
        total == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{int, ratio};
    use proptest::prelude::*;

    fn bx(lo: &[(i64, i64)], hi: &[(i64, i64)]) -> Aabb {
        Aabb::new(lo.iter().map(|&(p, q)| ratio(p, q)).collect(), hi.iter().map(|&(p, q)| ratio(p, q)).collect())
            .unwrap()
    }

    fn ibx(lo: &[i64], hi: &[i64]) -> Aabb {
        Aabb::new(lo.iter().map(|&v| int(v)).collect(), hi.iter().map(|&v| int(v)).collect()).unwrap()
    }

    /// Count covered pixels of side `2^-r` inside `[-8, 16)^2`.
    fn pixel_measure(region: &Region, r: u32) -> Rational {
        let n = 24i64 << r;
        let mut count = 0i64;
        for x in 0..n {
            for y in 0..n {
                let px = ratio(2 * x + 1, 2 << r) - int(8);
                let py = ratio(2 * y + 1, 2 << r) - int(8);
                if region.boxes().iter().any(|b| b.lo()[0] <= px && px < b.hi()[0] && b.lo()[1] <= py && py < b.hi()[1])
                {
                    count += 1;
                }
            }
        }
        ratio(count, 1 << (2 * r))
    }

    #[test]
    fn measure_examples() {
        let u = Region::from_box(&Aabb::unit(2));
        assert_eq!(u.measure(), int(1));
        let two = Region::from_boxes(2, &[Aabb::unit(2), bx(&[(1, 2), (0, 1)], &[(3, 2), (1, 1)])]).unwrap();
        assert_eq!(two.measure(), ratio(3, 2));
        assert_eq!(pixel_measure(&two, 2), ratio(3, 2));
        let stair =
            Region::from_boxes(2, &[ibx(&[0, 0], &[1, 4]), ibx(&[0, 0], &[2, 2]), ibx(&[0, 0], &[4, 1])]).unwrap();
        assert_eq!(stair.measure(), int(8));
        assert_eq!(pixel_measure(&stair, 0), int(8));
    }

    #[test]
    fn set_operation_examples() {
        let a = Region::from_box(&ibx(&[0, 0], &[2, 2]));
        assert_eq!(a.union(&Region::empty(2)).unwrap(), a);
        let one = Region::from_box(&ibx(&[0], &[1]));
        let next = Region::from_box(&ibx(&[1], &[2]));
        assert!(one.intersect(&next).unwrap().is_empty());
        let d = a.subtract(&Region::from_box(&Aabb::unit(2))).unwrap();
        assert_eq!(d.measure(), int(3));
        assert!(a.union(&one).is_err());
    }

    #[test]
    fn containment_examples() {
        let u = Region::from_box(&Aabb::unit(2));
        assert!(u.contains_ae(&Aabb::unit(2)));
        assert!(!u.contains_ae(&ibx(&[0, 0], &[2, 2])));
        let fam: Vec<Aabb> = (0..=4).map(|a| ibx(&[0, 0], &[1 << a, 1 << (4 - a)])).collect();
        let v = Region::from_boxes(2, &fam).unwrap();
        assert!(v.contains_ae(&ibx(&[0, 0], &[1, 15])));
        assert!(v.index().contains(&ibx(&[0, 0], &[1, 15])));
        assert!(!v.index().contains(&ibx(&[0, 0], &[2, 9])));
    }

    #[test]
    fn canonical_form_ignores_decomposition() {
        let whole = Region::from_box(&ibx(&[0, 0], &[4, 2]));
        let pieces = Region::from_boxes(
            2,
            &[ibx(&[0, 0], &[1, 2]), ibx(&[1, 0], &[4, 1]), ibx(&[1, 1], &[3, 2]), ibx(&[2, 1], &[4, 2])],
        )
        .unwrap();
        assert_eq!(whole, pieces);
        assert_eq!(whole.boxes().len(), 1);
    }

    fn arb_region() -> impl Strategy<Value = Region> {
        prop::collection::vec((-8i64..8, -8i64..8, 1i64..6, 1i64..6, 0u32..3), 0..6).prop_map(|v| {
            let boxes: Vec<Aabb> = v
                .into_iter()
                .map(|(x, y, w, h, r)| {
                    let q = 1i64 << r;
                    bx(&[(x, q), (y, q)], &[(x + w, q), (y + h, q)])
                })
                .collect();
            Region::from_boxes(2, &boxes).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn inclusion_exclusion(a in arb_region(), b in arb_region()) {
            let lhs = a.union(&b).unwrap().measure() + a.intersect(&b).unwrap().measure();
            prop_assert_eq!(lhs, a.measure() + b.measure());
        }

        #[test]
        fn normalization_idempotent_and_pixel_exact(a in arb_region()) {
            let again = Region::from_boxes(2, a.boxes()).unwrap();
            prop_assert_eq!(&again, &a);
            prop_assert_eq!(pixel_measure(&a, 2), a.measure());
        }

        #[test]
        fn cover_index_agrees_with_measure(a in arb_region(), x in -8i64..8, y in -8i64..8, w in 1i64..5, h in 1i64..5) {
            let q = bx(&[(x, 2), (y, 2)], &[(x + w, 2), (y + h, 2)]);
            prop_assert_eq!(a.index().contains(&q), a.contains_ae(&q));
        }
    }
}
