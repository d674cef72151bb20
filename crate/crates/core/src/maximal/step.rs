use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::region::{compress, strides, to_index, IndexBox};
use crate::geometry::{Aabb, Region};
use crate::num::{serde_rational, Rational};

/// A constant piece of a step function.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Piece {
    #[serde(rename = "box")]
    pub boxed: Aabb,
    #[serde(with = "serde_rational")]
    pub value: Rational,
}

/// A finitely supported piecewise-constant function, stored as disjoint boxes
/// grouped by value (canonical per value level). Maximal operators require
/// nonnegative values; signed functions arise for Haar coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFunction {
    dim: usize,
    pieces: Vec<Piece>,
}

/// Values on the cells of the coordinate compression of a step function.
#[derive(Clone, Debug)]
pub(crate) struct CellGrid {
    pub lines: Vec<Vec<Rational>>,
    pub dims: Vec<usize>,
    pub values: Vec<Rational>,
}

impl CellGrid {
    pub fn width(&self, axis: usize, i: usize) -> Rational {
        &self.lines[axis][i + 1] - &self.lines[axis][i]
    }

    /// Largest integral of `f` along a line parallel to `axis`.
    pub fn max_fiber_mass(&self, axis: usize) -> Rational {
        let st = strides(&self.dims);
        let mut acc: BTreeMap<usize, Rational> = BTreeMap::new();
        for (c, v) in self.values.iter().enumerate() {
            if v.is_zero() {
                continue;
            }
            let ci = (c / st[axis]) % self.dims[axis];
            let key = c - ci * st[axis];
            *acc.entry(key).or_insert_with(Rational::zero) += v * self.width(axis, ci);
        }
        acc.into_values().max().unwrap_or_else(Rational::zero)
    }
}

impl StepFunction {
    pub fn zero(dim: usize) -> Self {
        Self { dim, pieces: Vec::new() }
    }

    pub fn indicator(region: &Region) -> Self {
        let pieces = region.boxes().iter().map(|b| Piece { boxed: b.clone(), value: Rational::from_integer(1.into()) });
        Self { dim: region.dim(), pieces: pieces.collect() }
    }

    /// `Σ value_i · 1_{box_i}` with nonnegative values; overlapping boxes add up.
    pub fn from_sum(dim: usize, terms: impl IntoIterator<Item = (Aabb, Rational)>) -> Result<Self> {
        let terms: Vec<(Aabb, Rational)> = terms.into_iter().collect();
        if terms.iter().any(|(_, v)| v.is_negative()) {
            return Err(Error::InvalidParameter("step function values must be nonnegative".into()));
        }
        Self::from_signed_sum(dim, terms)
    }

    /// `Σ value_i · 1_{box_i}` with values of either sign.
    pub fn from_signed_sum(dim: usize, terms: impl IntoIterator<Item = (Aabb, Rational)>) -> Result<Self> {
        let terms: Vec<(Aabb, Rational)> = terms.into_iter().collect();
        if let Some((b, _)) = terms.iter().find(|(b, _)| b.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: b.dim() });
        }
        let live: Vec<&(Aabb, Rational)> = terms.iter().filter(|(b, v)| !b.is_empty() && !v.is_zero()).collect();
        if live.is_empty() {
            return Ok(Self::zero(dim));
        }
        let parts: Vec<(&[Rational], &[Rational])> = live.iter().map(|(b, _)| (b.lo(), b.hi())).collect();
        let lines = compress(dim, &parts);
        let dims: Vec<usize> = lines.iter().map(|l| l.len() - 1).collect();
        let mut values = vec![Rational::zero(); dims.iter().product()];
        for (b, v) in &live {
            let ib = to_index(&lines, b.lo(), b.hi());
            for_each_cell(&dims, &ib, |c| values[c] += v);
        }
        Ok(Self::from_cells(&CellGrid { lines, dims, values }))
    }

    pub(crate) fn from_cells(grid: &CellGrid) -> Self {
        let dim = grid.dims.len();
        let mut levels: BTreeMap<&Rational, Vec<bool>> = BTreeMap::new();
        for (c, v) in grid.values.iter().enumerate() {
            if !v.is_zero() {
                levels.entry(v).or_insert_with(|| vec![false; grid.values.len()])[c] = true;
            }
        }
        let mut pieces = Vec::new();
        for (v, bits) in levels {
            for (lo, hi) in crate::geometry::region::extract(&bits, &grid.dims) {
                let b = Aabb::new(
                    lo.iter().enumerate().map(|(j, &i)| grid.lines[j][i].clone()).collect(),
                    hi.iter().enumerate().map(|(j, &i)| grid.lines[j][i].clone()).collect(),
                )
                .expect("cell boxes are well formed");
                pieces.push(Piece { boxed: b, value: v.clone() });
            }
        }
        Self { dim, pieces }
    }

    pub(crate) fn cells(&self) -> CellGrid {
        let parts: Vec<(&[Rational], &[Rational])> = self.pieces.iter().map(|p| (p.boxed.lo(), p.boxed.hi())).collect();
        let lines = compress(self.dim, &parts);
        let dims: Vec<usize> = lines.iter().map(|l| l.len().saturating_sub(1)).collect();
        let mut values = vec![Rational::zero(); dims.iter().product()];
        for p in &self.pieces {
            let ib = to_index(&lines, p.boxed.lo(), p.boxed.hi());
            for_each_cell(&dims, &ib, |c| values[c] = p.value.clone());
        }
        CellGrid { lines, dims, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.pieces.iter().all(|p| !p.value.is_negative())
    }

    pub(crate) fn require_nonnegative(&self) -> Result<()> {
        if self.is_nonnegative() {
            Ok(())
        } else {
            Err(Error::InvalidParameter("maximal operators need a nonnegative function".into()))
        }
    }

    pub fn support(&self) -> Region {
        Region::from_boxes(self.dim, self.pieces.iter().map(|p| &p.boxed)).expect("uniform dimension")
    }

    pub fn integral(&self) -> Rational {
        self.pieces.iter().map(|p| &p.value * p.boxed.volume()).sum()
    }

    pub fn integral_over(&self, b: &Aabb) -> Rational {
        self.pieces.iter().map(|p| &p.value * p.boxed.intersect(b).volume()).sum()
    }

    /// `|B|^{-1} ∫_B f`.
    pub fn average(&self, b: &Aabb) -> Result<Rational> {
        let vol = b.volume();
        if vol.is_zero() {
            return Err(Error::DegenerateBox);
        }
        Ok(self.integral_over(b) / vol)
    }

    /// `∫ f^p`.
    pub fn power_integral(&self, p: u32) -> Rational {
        self.pieces.iter().map(|q| num_traits::pow(q.value.clone(), p as usize) * q.boxed.volume()).sum()
    }

    pub fn value_at(&self, x: &[Rational]) -> Rational {
        self.pieces
            .iter()
            .find(|p| (0..self.dim).all(|j| p.boxed.lo()[j] <= x[j] && x[j] < p.boxed.hi()[j]))
            .map(|p| p.value.clone())
            .unwrap_or_else(Rational::zero)
    }

    pub fn add(&self, other: &StepFunction) -> Result<StepFunction> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let terms = self.pieces.iter().chain(&other.pieces).map(|p| (p.boxed.clone(), p.value.clone()));
        StepFunction::from_signed_sum(self.dim, terms)
    }

    pub fn scale(&self, c: &Rational) -> Result<StepFunction> {
        StepFunction::from_signed_sum(self.dim, self.pieces.iter().map(|p| (p.boxed.clone(), &p.value * c)))
    }

    /// `f(·/c)`: every box scaled by `c > 0` about the origin.
    pub fn rescale_domain(&self, c: &Rational) -> Result<StepFunction> {
        let pieces = self.pieces.iter().map(|p| Ok((p.boxed.scale_about_origin(c)?, p.value.clone())));
        StepFunction::from_signed_sum(self.dim, pieces.collect::<Result<Vec<_>>>()?)
    }

    /// `∫ |f|^p`.
    pub fn abs_power_integral(&self, p: u32) -> Rational {
        self.pieces.iter().map(|q| num_traits::pow(q.value.abs(), p as usize) * q.boxed.volume()).sum()
    }

    /// `{f > t}` (or `{f >= t}` when `strict` is false).
    pub fn level_set(&self, t: &Rational, strict: bool) -> Region {
        let keep = self.pieces.iter().filter(|p| if strict { &p.value > t } else { &p.value >= t });
        Region::from_boxes(self.dim, keep.map(|p| &p.boxed)).expect("uniform dimension")
    }
}

pub(crate) fn for_each_cell(dims: &[usize], ib: &IndexBox, mut f: impl FnMut(usize)) {
    let d = dims.len();
    let st = strides(dims);
    let (lo, hi) = ib;
    if (0..d).any(|j| lo[j] >= hi[j]) {
        return;
    }
    let mut cur = lo.clone();
    loop {
        f((0..d).map(|j| cur[j] * st[j]).sum());
        let mut j = d;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            cur[j] += 1;
            if cur[j] < hi[j] {
                break;
            }
            cur[j] = lo[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{int, ratio};

    fn bx(lo: &[i64], hi: &[i64]) -> Aabb {
        Aabb::new(lo.iter().map(|&v| int(v)).collect(), hi.iter().map(|&v| int(v)).collect()).unwrap()
    }

    #[test]
    fn averages() {
        let f = StepFunction::indicator(&Region::from_box(&Aabb::unit(2)));
        assert_eq!(f.average(&Aabb::unit(2)).unwrap(), int(1));
        assert_eq!(f.average(&bx(&[0, 0], &[2, 2])).unwrap(), ratio(1, 4));
        assert_eq!(f.average(&bx(&[0, 0], &[3, 1])).unwrap(), ratio(1, 3));
        assert!(matches!(f.average(&Aabb::empty(2)), Err(Error::DegenerateBox)));
    }

    #[test]
    fn sums_are_canonical() {
        let a = StepFunction::from_sum(1, [(bx(&[0], &[2]), int(1)), (bx(&[1], &[3]), int(1))]).unwrap();
        assert_eq!(a.integral(), int(4));
        assert_eq!(a.value_at(&[ratio(3, 2)]), int(2));
        let b = StepFunction::from_sum(
            1,
            [(bx(&[0], &[1]), int(1)), (bx(&[1], &[2]), int(2)), (bx(&[2], &[3]), int(1)), (bx(&[1], &[2]), int(0))],
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.level_set(&int(1), true).measure(), int(1));
    }
}
