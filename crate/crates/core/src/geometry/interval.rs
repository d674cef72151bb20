use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::num::{fmt_rational, pow2, serde_rational, Rational};

/// The dyadic interval `[offset * 2^scale, (offset + 1) * 2^scale)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub scale: i32,
    pub offset: i64,
}

impl DyadicInterval {
    pub const fn new(scale: i32, offset: i64) -> Self {
        Self { scale, offset }
    }

    pub fn lo(&self) -> Rational {
        Rational::from_integer(self.offset.into()) * pow2(self.scale as i64)
    }

    pub fn hi(&self) -> Rational {
        Rational::from_integer((self.offset + 1).into()) * pow2(self.scale as i64)
    }

    pub fn len(&self) -> Rational {
        pow2(self.scale as i64)
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.lo(), self.hi())
    }

    /// The ancestor (or self) at a coarser or equal scale.
    pub fn ancestor(&self, scale: i32) -> DyadicInterval {
        assert!(scale >= self.scale, "ancestor scale must not be finer");
        let shift = (scale - self.scale) as u32;
        let offset = if shift >= 63 {
            if self.offset < 0 {
                -1
            } else {
                0
            }
        } else {
            self.offset >> shift
        };
        DyadicInterval::new(scale, offset)
    }

    pub fn parent(&self) -> DyadicInterval {
        self.ancestor(self.scale + 1)
    }

    pub fn children(&self) -> [DyadicInterval; 2] {
        [DyadicInterval::new(self.scale - 1, 2 * self.offset), DyadicInterval::new(self.scale - 1, 2 * self.offset + 1)]
    }

    pub fn contains(&self, other: &DyadicInterval) -> bool {
        other.scale <= self.scale && other.ancestor(self.scale) == *self
    }

    /// Half-open dyadic intervals intersect iff they are nested.
    pub fn intersects(&self, other: &DyadicInterval) -> bool {
        self.contains(other) || other.contains(self)
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", fmt_rational(&self.lo()), fmt_rational(&self.hi()))
    }
}

/// Half-open interval `[lo, hi)` with rational endpoints.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "serde_rational")]
    pub lo: Rational,
    #[serde(with = "serde_rational")]
    pub hi: Rational,
}

impl Interval {
    pub fn new(lo: Rational, hi: Rational) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> Rational {
        if self.hi > self.lo {
            &self.hi - &self.lo
        } else {
            Rational::zero()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn contains(&self, other: &Interval) -> bool {
        other.is_empty() || (self.lo <= other.lo && other.hi <= self.hi)
    }

    /// Positive-length overlap.
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }

    pub fn translate(&self, t: &Rational) -> Interval {
        Interval::new(&self.lo + t, &self.hi + t)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", fmt_rational(&self.lo), fmt_rational(&self.hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{int, ratio};

    #[test]
    fn endpoints_and_family() {
        let i = DyadicInterval::new(-1, 3);
        assert_eq!(i.lo(), ratio(3, 2));
        assert_eq!(i.hi(), int(2));
        assert_eq!(i.parent(), DyadicInterval::new(0, 1));
        assert_eq!(DyadicInterval::new(0, -1).parent(), DyadicInterval::new(1, -1));
        let [a, b] = i.children();
        assert_eq!(a.hi(), b.lo());
        assert!(i.contains(&a) && i.contains(&b) && !a.contains(&i));
    }

    #[test]
    fn nested_or_disjoint_exhaustive() {
        let all: Vec<DyadicInterval> =
            (-3..=3).flat_map(|k| (-9..=9).map(move |j| DyadicInterval::new(k, j))).collect();
        for a in &all {
            for b in &all {
                let overlap = a.interval().overlaps(&b.interval());
                assert_eq!(overlap, a.intersects(b), "{a} {b}");
            }
        }
    }
}
