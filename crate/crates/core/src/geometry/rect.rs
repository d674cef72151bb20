use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, DyadicInterval};
use crate::num::{pow2, Rational};

/// Product of `d` dyadic intervals.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicRect {
    pub sides: Vec<DyadicInterval>,
}

impl DyadicRect {
    pub fn new(sides: Vec<DyadicInterval>) -> Self {
        assert!(!sides.is_empty(), "rectangle needs at least one side");
        Self { sides }
    }

    /// Rectangle from `(scale, offset)` pairs.
    pub fn from_pairs(pairs: &[(i32, i64)]) -> Self {
        Self::new(pairs.iter().map(|&(k, j)| DyadicInterval::new(k, j)).collect())
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn side(&self, j: usize) -> DyadicInterval {
        self.sides[j]
    }

    /// `log2 |R|`.
    pub fn log_area(&self) -> i64 {
        self.sides.iter().map(|s| s.scale as i64).sum()
    }

    pub fn area(&self) -> Rational {
        pow2(self.log_area())
    }

    pub fn to_box(&self) -> Aabb {
        Aabb::from_intervals(&self.sides.iter().map(|s| s.interval()).collect::<Vec<_>>())
    }

    pub fn contains(&self, other: &DyadicRect) -> bool {
        self.sides.iter().zip(&other.sides).all(|(a, b)| a.contains(b))
    }

    pub fn intersects(&self, other: &DyadicRect) -> bool {
        self.sides.iter().zip(&other.sides).all(|(a, b)| a.intersects(b))
    }

    pub fn with_side(&self, j: usize, side: DyadicInterval) -> DyadicRect {
        let mut sides = self.sides.clone();
        sides[j] = side;
        DyadicRect { sides }
    }
}

impl fmt::Display for DyadicRect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (j, s) in self.sides.iter().enumerate() {
            if j > 0 {
                write!(f, "×")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}
