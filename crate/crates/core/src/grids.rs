//! The standard dyadic grid, Christ's shifted dyadic grids, and lattice
//! families of intervals.

use std::collections::HashSet;
use std::fmt;
use std::ops::RangeInclusive;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, DyadicInterval, Interval};
use crate::num::{common_denominator, exact_log2, pow2, serde_rational, Rational};

/// One shifted grid `D_{d,b,α}`: intervals `2^{kd+b}((0,1) + j + (-1)^k α)` with
/// `α = sign · δ` and `δ = (2^d + 1)^{-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ShiftedGridId {
    pub depth: u32,
    pub phase: u32,
    pub sign: i8,
}

impl ShiftedGridId {
    pub fn new(depth: u32, phase: u32, sign: i8) -> Result<Self> {
        if depth == 0 || depth > 30 {
            return Err(Error::InvalidParameter(format!("shift depth {depth} outside 1..=30")));
        }
        if phase >= depth {
            return Err(Error::InvalidParameter(format!("phase {phase} must be below depth {depth}")));
        }
        if sign != 1 && sign != -1 {
            return Err(Error::InvalidParameter(format!("sign {sign} must be ±1")));
        }
        Ok(Self { depth, phase, sign })
    }

    /// All `2d` grids making up `D_d`.
    pub fn all(depth: u32) -> Result<Vec<ShiftedGridId>> {
        Self::new(depth, 0, 1)?;
        let mut v = Vec::new();
        for phase in 0..depth {
            for sign in [1, -1] {
                v.push(Self::new(depth, phase, sign)?);
            }
        }
        Ok(v)
    }

    pub fn delta(&self) -> Rational {
        delta(self.depth)
    }

    pub fn alpha(&self) -> Rational {
        self.delta() * Rational::from_integer(self.sign.into())
    }

    /// `log2` of the member length at level `k`.
    pub fn log_len(&self, k: i64) -> i64 {
        k * self.depth as i64 + self.phase as i64
    }

    /// Offset `(-1)^k α` in units of the level length.
    fn shift(&self, k: i64) -> Rational {
        if k.rem_euclid(2) == 0 {
            self.alpha()
        } else {
            -self.alpha()
        }
    }

    pub fn interval(&self, k: i64, j: i64) -> Interval {
        let len = pow2(self.log_len(k));
        let lo = (Rational::from_integer(j.into()) + self.shift(k)) * &len;
        let hi = &lo + &len;
        Interval::new(lo, hi)
    }

    /// `(k, j)` with `interval(k, j) == iv`, if `iv` belongs to this grid.
    pub fn locate(&self, iv: &Interval) -> Option<(i64, i64)> {
        let m = exact_log2(&iv.len())?;
        let (k, b) = m.div_mod_floor(&(self.depth as i64));
        if b != self.phase as i64 {
            return None;
        }
        let j = &iv.lo / pow2(m) - self.shift(k);
        j.is_integer().then(|| j.to_integer().to_i64()).flatten().map(|j| (k, j))
    }

    /// Members at level `k` with positive overlap with `[lo, hi)`.
    pub fn level_members(&self, k: i64, lo: &Rational, hi: &Rational) -> Vec<Interval> {
        let len = pow2(self.log_len(k));
        let s = self.shift(k);
        let first: BigInt = (lo / &len - Rational::one() - &s).floor().to_integer() + 1;
        let last: BigInt = (hi / &len - &s).ceil().to_integer() - 1;
        let (Some(first), Some(last)) = (first.to_i64(), last.to_i64()) else {
            return Vec::new();
        };
        (first..=last).map(|j| self.interval(k, j)).collect()
    }
}

impl fmt::Display for ShiftedGridId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D[{},{},{}]", self.depth, self.phase, if self.sign > 0 { '+' } else { '-' })
    }
}

/// `δ = (2^d + 1)^{-1}`.
pub fn delta(depth: u32) -> Rational {
    Rational::new(BigInt::one(), (BigInt::one() << depth as usize) + 1)
}

pub fn shifted_interval(id: &ShiftedGridId, k: i64, j: i64) -> Interval {
    id.interval(k, j)
}

/// A single grid for property checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridSpec {
    Dyadic,
    Shifted(ShiftedGridId),
}

impl GridSpec {
    fn member(&self, k: i64, j: i64) -> Interval {
        match self {
            GridSpec::Dyadic => DyadicInterval::new(k as i32, j).interval(),
            GridSpec::Shifted(id) => id.interval(k, j),
        }
    }

    fn branching(&self) -> u64 {
        match self {
            GridSpec::Dyadic => 2,
            GridSpec::Shifted(id) => 1 << id.depth,
        }
    }

    fn locate(&self, iv: &Interval) -> Option<(i64, i64)> {
        match self {
            GridSpec::Dyadic => {
                let m = exact_log2(&iv.len())?;
                let j = &iv.lo / pow2(m);
                j.is_integer().then(|| j.to_integer().to_i64()).flatten().map(|j| (m, j))
            }
            GridSpec::Shifted(id) => id.locate(iv),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridViolation {
    /// Two members overlap without being nested.
    Overlap { a: Interval, b: Interval },
    /// A member is not tiled by `branching` members one level down.
    Tiling { parent: Interval, missing: Interval },
}

impl fmt::Display for GridViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridViolation::Overlap { a, b } => write!(f, "overlap {a} / {b}"),
            GridViolation::Tiling { parent, missing } => write!(f, "{parent} not tiled: {missing} missing"),
        }
    }
}

/// Every pair of intervals that overlaps without nesting, checked exhaustively.
pub fn grid_violations(intervals: &[Interval]) -> Vec<GridViolation> {
    let den = common_denominator(intervals.iter().flat_map(|iv| [&iv.lo, &iv.hi]));
    let scaled: Option<Vec<(i128, i128)>> = intervals
        .iter()
        .map(|iv| {
            let lo = (&iv.lo * Rational::from_integer(den.clone())).to_integer().to_i128()?;
            let hi = (&iv.hi * Rational::from_integer(den.clone())).to_integer().to_i128()?;
            Some((lo, hi))
        })
        .collect();
    let mut out = Vec::new();
    let mut push =
        |i: usize, k: usize| out.push(GridViolation::Overlap { a: intervals[i].clone(), b: intervals[k].clone() });
    match scaled {
        Some(s) => {
            for i in 0..s.len() {
                let (a0, a1) = s[i];
                for (k, &(b0, b1)) in s.iter().enumerate().skip(i + 1) {
                    let overlap = a0 < b1 && b0 < a1;
                    let nested = (a0 <= b0 && b1 <= a1) || (b0 <= a0 && a1 <= b1);
                    if overlap && !nested {
                        push(i, k);
                    }
                }
            }
        }
        None => {
            for i in 0..intervals.len() {
                for k in i + 1..intervals.len() {
                    let (a, b) = (&intervals[i], &intervals[k]);
                    if a.overlaps(b) && !a.contains(b) && !b.contains(a) {
                        push(i, k);
                    }
                }
            }
        }
    }
    out
}

/// Members `(k, j)` of a grid over finite level and offset ranges.
pub fn grid_members(spec: GridSpec, levels: RangeInclusive<i64>, offsets: RangeInclusive<i64>) -> Vec<Interval> {
    levels.flat_map(|k| offsets.clone().map(move |j| spec.member(k, j))).collect()
}

/// Exhaustive nested-or-disjoint check over the given ranges, plus the check
/// that every member above the lowest level is the disjoint union of
/// `2^d` (or 2, for the dyadic grid) members one level down.
pub fn verify_grid_property(
    spec: GridSpec,
    levels: RangeInclusive<i64>,
    offsets: RangeInclusive<i64>,
) -> Vec<GridViolation> {
    let members = grid_members(spec, levels.clone(), offsets.clone());
    let mut out = grid_violations(&members);
    let n = spec.branching();
    for k in (*levels.start() + 1)..=*levels.end() {
        for j in offsets.clone() {
            let parent = spec.member(k, j);
            let step = parent.len() / Rational::from_integer(n.into());
            for t in 0..n {
                let lo = &parent.lo + &step * Rational::from_integer(t.into());
                let piece = Interval::new(lo.clone(), lo + &step);
                match spec.locate(&piece) {
                    Some((kk, _)) if kk == k - 1 => {}
                    _ => out.push(GridViolation::Tiling { parent: parent.clone(), missing: piece }),
                }
            }
        }
    }
    out
}

/// A certified member of a shifted grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub grid: ShiftedGridId,
    pub level: i64,
    pub offset: i64,
    pub interval: Interval,
}

impl Witness {
    /// Rebuilds the interval from the recorded parameters.
    pub fn verify(&self) -> bool {
        self.grid.interval(self.level, self.offset) == self.interval
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftedCover {
    pub plus: Witness,
    pub minus: Witness,
}

/// Witnesses that `I + δ|I|` and `I - δ|I|` both belong to `D_d`.
pub fn shifted_cover(iv: &DyadicInterval, depth: u32) -> Result<ShiftedCover> {
    let d = delta(depth);
    let shift = &d * iv.len();
    let base = iv.interval();
    let find = |target: Interval| -> Result<Witness> {
        for grid in ShiftedGridId::all(depth)? {
            if let Some((level, offset)) = grid.locate(&target) {
                let w = Witness { grid, level, offset, interval: target.clone() };
                if w.verify() {
                    return Ok(w);
                }
            }
        }
        Err(Error::NoWitness(target.to_string()))
    };
    Ok(ShiftedCover { plus: find(base.translate(&shift))?, minus: find(base.translate(&-shift))? })
}

/// Interval family used along one coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AxisFamily {
    Dyadic,
    Shifted {
        grid: ShiftedGridId,
    },
    /// `D_d`: the union of all `2d` shifted grids of depth `d`.
    ShiftedUnion {
        depth: u32,
    },
    /// Every interval with endpoints on `cell · Z` inside `[lo, hi]`.
    Lattice {
        #[serde(with = "serde_rational")]
        cell: Rational,
        #[serde(with = "serde_rational")]
        lo: Rational,
        #[serde(with = "serde_rational")]
        hi: Rational,
    },
}

impl AxisFamily {
    pub fn is_grid(&self) -> bool {
        matches!(self, AxisFamily::Dyadic | AxisFamily::Shifted { .. })
    }

    /// Component grids (dyadic or single shifted) of a grid-union family.
    pub fn grids(&self) -> Vec<GridSpec> {
        match self {
            AxisFamily::Dyadic => vec![GridSpec::Dyadic],
            AxisFamily::Shifted { grid } => vec![GridSpec::Shifted(*grid)],
            AxisFamily::ShiftedUnion { depth } => {
                ShiftedGridId::all(*depth).unwrap_or_default().into_iter().map(GridSpec::Shifted).collect()
            }
            AxisFamily::Lattice { .. } => Vec::new(),
        }
    }

    /// Members with `log2 |I|` in `scales` (ignored for lattices) overlapping `[lo, hi)`.
    pub fn members(&self, lo: &Rational, hi: &Rational, scales: &RangeInclusive<i64>) -> Vec<Interval> {
        let mut out = match self {
            AxisFamily::Lattice { cell, lo: a, hi: b } => {
                let first = (a / cell).ceil().to_integer();
                let last = (b / cell).floor().to_integer();
                let pts: Vec<Rational> = num_iter(&first, &last).map(|i| Rational::from_integer(i) * cell).collect();
                let mut v = Vec::new();
                for (p, x) in pts.iter().enumerate() {
                    for y in &pts[p + 1..] {
                        if x < hi && lo < y {
                            v.push(Interval::new(x.clone(), y.clone()));
                        }
                    }
                }
                v
            }
            _ => {
                let mut v = Vec::new();
                for g in self.grids() {
                    for m in scales.clone() {
                        match g {
                            GridSpec::Dyadic => {
                                let len = pow2(m);
                                let first = (lo / &len).floor().to_integer();
                                let last = (hi / &len).ceil().to_integer() - 1;
                                for j in num_iter(&first, &last) {
                                    let l = Rational::from_integer(j) * &len;
                                    v.push(Interval::new(l.clone(), l + &len));
                                }
                            }
                            GridSpec::Shifted(id) => {
                                let (k, b) = m.div_mod_floor(&(id.depth as i64));
                                if b == id.phase as i64 {
                                    v.extend(id.level_members(k, lo, hi));
                                }
                            }
                        }
                    }
                }
                v
            }
        };
        out.sort();
        out.dedup();
        out
    }
}

fn num_iter(first: &BigInt, last: &BigInt) -> impl Iterator<Item = BigInt> {
    let first = first.clone();
    let count = if last >= &first { (last - &first).to_u64().unwrap_or(0) + 1 } else { 0 };
    (0..count).map(move |t| &first + BigInt::from(t))
}

/// Product family, one interval family per coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridFamily {
    pub axes: Vec<AxisFamily>,
}

impl GridFamily {
    pub fn uniform(kind: AxisFamily, dim: usize) -> Self {
        Self { axes: vec![kind; dim] }
    }

    pub fn dyadic(dim: usize) -> Self {
        Self::uniform(AxisFamily::Dyadic, dim)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }
}

/// All family members overlapping `bbox` with per-axis `log2`-length in `scales`,
/// in lexicographic order of their sides.
pub fn enumerate_family(
    family: &GridFamily,
    bbox: &Aabb,
    scales: &[RangeInclusive<i64>],
    cap: usize,
) -> Result<Vec<Aabb>> {
    if bbox.dim() != family.dim() || scales.len() != family.dim() {
        return Err(Error::DimensionMismatch { expected: family.dim(), got: bbox.dim() });
    }
    let per_axis: Vec<Vec<Interval>> =
        family.axes.iter().enumerate().map(|(j, f)| f.members(&bbox.lo()[j], &bbox.hi()[j], &scales[j])).collect();
    let count = per_axis.iter().map(Vec::len).try_fold(1usize, |a, n| a.checked_mul(n)).unwrap_or(usize::MAX);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let mut out = vec![Vec::<Interval>::new()];
    for axis in &per_axis {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |iv| {
                    let mut p = prefix.clone();
                    p.push(iv.clone());
                    p
                })
            })
            .collect();
    }
    Ok(out.iter().map(|sides| Aabb::from_intervals(sides)).collect())
}

/// Distinct shifted-grid members of `D_d` (any phase and sign) of exact length `len`.
pub fn shifted_union_members_of_len(depth: u32, len: &Rational, lo: &Rational, hi: &Rational) -> Vec<Interval> {
    let Some(m) = exact_log2(len) else { return Vec::new() };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for g in ShiftedGridId::all(depth).unwrap_or_default() {
        let (k, b) = m.div_mod_floor(&(depth as i64));
        if b == g.phase as i64 {
            for iv in g.level_members(k, lo, hi) {
                if seen.insert(iv.clone()) {
                    out.push(iv);
                }
            }
        }
    }
    out.sort();
    out
}

/// `true` iff `q` is zero or has a power-of-two denominator.
pub fn is_dyadic(q: &Rational) -> bool {
    q.is_zero() || exact_log2(&Rational::from_integer(q.denom().clone())).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{int, ratio};

    fn iv(a: (i64, i64), b: (i64, i64)) -> Interval {
        Interval::new(ratio(a.0, a.1), ratio(b.0, b.1))
    }

    #[test]
    fn shifted_interval_examples() {
        let g = ShiftedGridId::new(1, 0, 1).unwrap();
        assert_eq!(shifted_interval(&g, 0, 0), iv((1, 3), (4, 3)));
        assert_eq!(shifted_interval(&g, 1, 0), iv((-2, 3), (4, 3)));
        let g = ShiftedGridId::new(2, 1, -1).unwrap();
        assert_eq!(shifted_interval(&g, 0, 0), iv((-2, 5), (8, 5)));
        assert_eq!(delta(2) * int(5), int(1));
    }

    #[test]
    fn grid_property_small_ranges() {
        let g = ShiftedGridId::new(1, 0, 1).unwrap();
        assert!(verify_grid_property(GridSpec::Shifted(g), -4..=4, -32..=32).is_empty());
        assert!(verify_grid_property(GridSpec::Dyadic, -4..=4, -32..=32).is_empty());
    }

    #[test]
    fn corrupted_family_is_caught() {
        let g = ShiftedGridId::new(1, 0, 1).unwrap();
        let mut members = grid_members(GridSpec::Shifted(g), -2..=2, -8..=8);
        members[5] = members[5].translate(&ratio(1, 7));
        assert!(!grid_violations(&members).is_empty());
    }

    #[test]
    fn shifted_cover_examples() {
        let c = shifted_cover(&DyadicInterval::new(0, 0), 1).unwrap();
        assert_eq!(c.plus.interval, iv((1, 3), (4, 3)));
        assert_eq!((c.plus.grid.phase, c.plus.grid.sign, c.plus.level, c.plus.offset), (0, 1, 0, 0));
        assert_eq!(c.minus.interval, iv((-1, 3), (2, 3)));
        assert_eq!((c.minus.grid.sign, c.minus.level, c.minus.offset), (-1, 0, 0));
        let c = shifted_cover(&DyadicInterval::new(1, 1), 2).unwrap();
        assert_eq!(c.plus.interval, iv((12, 5), (22, 5)));
        assert!(c.plus.verify() && c.minus.verify());
    }

    #[test]
    fn enumerate_examples() {
        let d1 = GridFamily::dyadic(1);
        let one = enumerate_family(&d1, &Aabb::unit(1), &[0..=0], 100).unwrap();
        assert_eq!(one, vec![Aabb::unit(1)]);
        let d2 = GridFamily::dyadic(2);
        let nine = enumerate_family(&d2, &Aabb::unit(2), &[-1..=0, -1..=0], 100).unwrap();
        assert_eq!(nine.len(), 9);
        let lat = AxisFamily::Lattice { cell: ratio(1, 2), lo: int(0), hi: int(1) };
        let fam = GridFamily::uniform(lat, 2);
        let l = enumerate_family(&fam, &Aabb::unit(2), &[0..=0, 0..=0], 100).unwrap();
        assert_eq!(l.len(), 9);
        assert!(matches!(enumerate_family(&d2, &Aabb::unit(2), &[-3..=0, -3..=0], 10), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn level_members_cover_the_window() {
        let g = ShiftedGridId::new(2, 1, -1).unwrap();
        let ms = g.level_members(0, &int(0), &int(3));
        assert!(ms.iter().all(|m| m.overlaps(&Interval::new(int(0), int(3)))));
        let total: Rational = ms.iter().map(|m| m.len()).sum();
        assert!(total >= int(3));
    }
}
