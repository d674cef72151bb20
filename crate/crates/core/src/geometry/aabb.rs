use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Interval;
use crate::num::{fmt_rational, serde_rational_vec, Rational};

/// Axis-aligned half-open box `Π [lo_j, hi_j)` with rational corners.
///
/// A box with `lo_j >= hi_j` in some coordinate is stored as the canonical
/// empty box (all corners zero).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Aabb {
    #[serde(with = "serde_rational_vec")]
    lo: Vec<Rational>,
    #[serde(with = "serde_rational_vec")]
    hi: Vec<Rational>,
}

impl Aabb {
    pub fn new(lo: Vec<Rational>, hi: Vec<Rational>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        if lo.is_empty() {
            return Err(Error::InvalidParameter("box dimension must be positive".into()));
        }
        Ok(Self::from_parts(lo, hi))
    }

    fn from_parts(lo: Vec<Rational>, hi: Vec<Rational>) -> Self {
        if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
            Self::empty(lo.len())
        } else {
            Self { lo, hi }
        }
    }

    pub fn empty(dim: usize) -> Self {
        Self { lo: vec![Rational::zero(); dim], hi: vec![Rational::zero(); dim] }
    }

    pub fn from_intervals(sides: &[Interval]) -> Self {
        Self::from_parts(sides.iter().map(|s| s.lo.clone()).collect(), sides.iter().map(|s| s.hi.clone()).collect())
    }

    /// `[0, 1)^d`.
    pub fn unit(dim: usize) -> Self {
        Self { lo: vec![Rational::zero(); dim], hi: vec![Rational::one(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[Rational] {
        &self.lo
    }

    pub fn hi(&self) -> &[Rational] {
        &self.hi
    }

    pub fn side(&self, j: usize) -> Interval {
        Interval::new(self.lo[j].clone(), self.hi[j].clone())
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| l >= h)
    }

    pub fn width(&self, j: usize) -> Rational {
        if self.is_empty() {
            Rational::zero()
        } else {
            &self.hi[j] - &self.lo[j]
        }
    }

    pub fn volume(&self) -> Rational {
        if self.is_empty() {
            return Rational::zero();
        }
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn center(&self) -> Vec<Rational> {
        let two = Rational::from_integer(2.into());
        self.lo.iter().zip(&self.hi).map(|(l, h)| (l + h) / &two).collect()
    }

    pub fn intersect(&self, other: &Aabb) -> Aabb {
        debug_assert_eq!(self.dim(), other.dim());
        let lo = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(b).clone()).collect();
        let hi = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(b).clone()).collect();
        Self::from_parts(lo, hi)
    }

    /// Positive-measure overlap.
    pub fn overlaps(&self, other: &Aabb) -> bool {
        !self.is_empty()
            && !other.is_empty()
            && (0..self.dim()).all(|j| self.lo[j] < other.hi[j] && other.lo[j] < self.hi[j])
    }

    /// Containment up to null sets.
    pub fn contains(&self, inner: &Aabb) -> bool {
        inner.is_empty()
            || (!self.is_empty() && (0..self.dim()).all(|j| self.lo[j] <= inner.lo[j] && inner.hi[j] <= self.hi[j]))
    }

    /// Same center, `j`-th width scaled by `lambda[j]`.
    pub fn dilate(&self, lambda: &[Rational]) -> Result<Aabb> {
        if lambda.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: lambda.len() });
        }
        if let Some(bad) = lambda.iter().find(|l| !l.is_positive()) {
            return Err(Error::InvalidDilation(fmt_rational(bad)));
        }
        if self.is_empty() {
            return Ok(self.clone());
        }
        let two = Rational::from_integer(2.into());
        let (lo, hi) = (0..self.dim())
            .map(|j| {
                let c = (&self.lo[j] + &self.hi[j]) / &two;
                let h = (&self.hi[j] - &self.lo[j]) * &lambda[j] / &two;
                (&c - &h, &c + &h)
            })
            .unzip();
        Ok(Self::from_parts(lo, hi))
    }

    /// Uniform dilation `λR`.
    pub fn scale(&self, lambda: &Rational) -> Result<Aabb> {
        self.dilate(&vec![lambda.clone(); self.dim()])
    }

    /// The image under `x ↦ c·x`.
    pub fn scale_about_origin(&self, c: &Rational) -> Result<Aabb> {
        if !c.is_positive() {
            return Err(Error::InvalidDilation(fmt_rational(c)));
        }
        Ok(Self::from_parts(self.lo.iter().map(|v| v * c).collect(), self.hi.iter().map(|v| v * c).collect()))
    }

    pub fn translate(&self, t: &[Rational]) -> Aabb {
        if self.is_empty() {
            return self.clone();
        }
        Self {
            lo: self.lo.iter().zip(t).map(|(a, b)| a + b).collect(),
            hi: self.hi.iter().zip(t).map(|(a, b)| a + b).collect(),
        }
    }

    /// Replace side `j`.
    pub fn with_side(&self, j: usize, side: &Interval) -> Aabb {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        lo[j] = side.lo.clone();
        hi[j] = side.hi.clone();
        Self::from_parts(lo, hi)
    }
}

impl fmt::Display for Aabb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "∅");
        }
        for j in 0..self.dim() {
            if j > 0 {
                write!(f, "×")?;
            }
            write!(f, "[{}, {})", fmt_rational(&self.lo[j]), fmt_rational(&self.hi[j]))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{int, ratio};
    use proptest::prelude::*;

    fn bx(lo: &[i64], hi: &[i64]) -> Aabb {
        Aabb::new(lo.iter().map(|&v| int(v)).collect(), hi.iter().map(|&v| int(v)).collect()).unwrap()
    }

    #[test]
    fn dilation_examples() {
        let r = Aabb::unit(2);
        let d = r.dilate(&[int(2), int(1)]).unwrap();
        assert_eq!(d.lo(), &[ratio(-1, 2), int(0)]);
        assert_eq!(d.hi(), &[ratio(3, 2), int(1)]);
        assert_eq!(r.dilate(&[int(1), int(1)]).unwrap(), r);
        let r = bx(&[0, 4], &[2, 8]);
        let d = r.dilate(&[int(3), ratio(1, 2)]).unwrap();
        assert_eq!(d, bx(&[-2, 5], &[4, 7]));
    }

    #[test]
    fn dilation_rejects_nonpositive() {
        let r = Aabb::unit(2);
        assert!(matches!(r.dilate(&[int(0), int(1)]), Err(Error::InvalidDilation(_))));
        assert!(matches!(r.dilate(&[int(-1), int(1)]), Err(Error::InvalidDilation(_))));
    }

    #[test]
    fn empty_is_canonical() {
        let a = bx(&[0], &[1]).intersect(&bx(&[1], &[2]));
        assert!(a.is_empty());
        assert_eq!(a, Aabb::empty(1));
        assert_eq!(a.volume(), int(0));
    }

    proptest! {
        #[test]
        fn dilation_is_multiplicative(
            x in -20i64..20, w in 1i64..10,
            a in 1i64..12, b in 1i64..12, c in 1i64..12, e in 1i64..12,
        ) {
            let r = Aabb::new(vec![int(x), int(-x)], vec![int(x + w), int(-x + 2 * w)]).unwrap();
            let l1 = [ratio(a, 4), ratio(b, 3)];
            let l2 = [ratio(c, 5), ratio(e, 2)];
            let prod = [&l1[0] * &l2[0], &l1[1] * &l2[1]];
            prop_assert_eq!(r.dilate(&l1).unwrap().dilate(&l2).unwrap(), r.dilate(&prod).unwrap());
        }
    }
}
