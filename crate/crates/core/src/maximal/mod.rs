//! Maximal operators over rectangle families: exact averages, superlevel
//! regions, and the weak-type estimates for grids.

mod engine;
mod step;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

pub use engine::Threshold;
pub use step::{Piece, StepFunction};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, DyadicInterval, Interval, Region};
use crate::grids::{delta, AxisFamily, GridFamily};
use crate::num::{floor_log2, pow2, Rational};
pub(crate) use engine::lattice_maximal_cells;
use engine::{superlevel_region, AxisSpec};

/// Default cap on the number of candidate rectangles per query.
pub const DEFAULT_CAP: usize = 4_000_000;

/// `|R|^{-1} ∫_R f`.
pub fn average(r: &Aabb, f: &StepFunction) -> Result<Rational> {
    f.average(r)
}

/// A maximal-function superlevel query `{M^F f > λ}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaximalQuery {
    pub family: GridFamily,
    pub weight: StepFunction,
    #[serde(with = "crate::num::serde_rational")]
    pub lambda: Rational,
    #[serde(default)]
    pub threshold: Threshold,
}

impl MaximalQuery {
    pub fn new(family: GridFamily, weight: StepFunction, lambda: Rational) -> Self {
        Self { family, weight, lambda, threshold: Threshold::Above }
    }

    pub fn indicator(family: GridFamily, region: &Region, lambda: Rational) -> Self {
        Self::new(family, StepFunction::indicator(region), lambda)
    }

    pub fn superlevel(&self, cap: usize) -> Result<Region> {
        superlevel(&self.family, &self.weight, &self.lambda, self.threshold, cap)
    }
}

/// `∪{R ∈ family : avg_R f ⋄ λ}` as an exact region.
pub fn superlevel(
    family: &GridFamily,
    f: &StepFunction,
    lambda: &Rational,
    th: Threshold,
    cap: usize,
) -> Result<Region> {
    if family.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: family.dim() });
    }
    let axes: Vec<AxisSpec<'_>> = family.axes.iter().map(AxisSpec::Family).collect();
    superlevel_region(f, &axes, lambda, th, cap)
}

/// Superlevel set of the one-coordinate operator `M_j`: averages over a family
/// interval in coordinate `axis`, the other coordinates held fixed.
pub fn one_coordinate_superlevel(
    axis: usize,
    family: &AxisFamily,
    f: &StepFunction,
    lambda: &Rational,
    th: Threshold,
    cap: usize,
) -> Result<Region> {
    if axis >= f.dim() {
        return Err(Error::InvalidParameter(format!("axis {axis} out of range for dimension {}", f.dim())));
    }
    let axes: Vec<AxisSpec<'_>> =
        (0..f.dim()).map(|j| if j == axis { AxisSpec::Family(family) } else { AxisSpec::Cells }).collect();
    superlevel_region(f, &axes, lambda, th, cap)
}

/// Lattice cell exponent two scales finer than the finest breakpoint gap.
pub fn default_refinement(f: &StepFunction) -> i64 {
    let grid = f.cells();
    let finest =
        grid.lines.iter().flat_map(|l| l.windows(2).map(|w| &w[1] - &w[0])).min().unwrap_or_else(Rational::one);
    2 - floor_log2(&finest)
}

/// Lattice family with cell `2^{-r}` covering every box that can reach average
/// `λ` against `f`.
pub fn lattice_family(f: &StepFunction, lambda: &Rational, r: i64) -> Result<GridFamily> {
    if !lambda.is_positive() {
        return Err(Error::InvalidParameter("λ must be positive".into()));
    }
    let cell = pow2(-r);
    let grid = f.cells();
    let axes = (0..f.dim())
        .map(|j| {
            let reach = grid.max_fiber_mass(j) / lambda;
            let lo = ((&grid.lines[j][0] - &reach) / &cell).floor() * &cell;
            let hi = ((grid.lines[j].last().expect("nonzero weight") + &reach) / &cell).ceil() * &cell;
            AxisFamily::Lattice { cell: cell.clone(), lo, hi }
        })
        .collect();
    Ok(GridFamily { axes })
}

/// The maximal function over a lattice family, as a step function on the
/// lattice cells. Every axis must be `AxisFamily::Lattice`.
pub fn maximal_function(family: &GridFamily, f: &StepFunction, cap: usize) -> Result<StepFunction> {
    let m = lattice_maximal_cells(f, &family.axes, cap)?;
    Ok(StepFunction::from_cells(&step::CellGrid { lines: m.points, dims: m.dims, values: m.values }))
}

/// Superlevel set of the lattice(`2^{-r}`)-restricted strong maximal function
/// of `1_W`.
pub fn strong_superlevel(w: &Region, lambda: &Rational, r: Option<i64>, cap: usize) -> Result<Region> {
    let f = StepFunction::indicator(w);
    if f.is_zero() {
        return Ok(Region::empty(w.dim()));
    }
    let r = r.unwrap_or_else(|| default_refinement(&f));
    let family = lattice_family(&f, lambda, r)?;
    superlevel(&family, &f, lambda, Threshold::Above, cap)
}

/// `λ · |{M^G f > λ}|` against `∫ f`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakTypeReport {
    #[serde(with = "crate::num::serde_rational")]
    pub lhs: Rational,
    #[serde(with = "crate::num::serde_rational")]
    pub rhs: Rational,
    pub pass: bool,
}

/// Norm-one weak-type inequality for a one-dimensional grid family.
pub fn weak_type_check(family: &AxisFamily, f: &StepFunction, lambda: &Rational, cap: usize) -> Result<WeakTypeReport> {
    if f.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: f.dim() });
    }
    let region = superlevel(&GridFamily { axes: vec![family.clone()] }, f, lambda, Threshold::Above, cap)?;
    let lhs = lambda * region.measure();
    let rhs = f.integral();
    Ok(WeakTypeReport { pass: lhs <= rhs, lhs, rhs })
}

/// Excess of `{M^{D_d} 1_U > 1 − δ}` over `U`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmallWeakReport {
    pub depth: u32,
    #[serde(with = "crate::num::serde_rational")]
    pub kappa: Rational,
    /// `δ · d`.
    #[serde(with = "crate::num::serde_rational")]
    pub delta_depth: Rational,
    #[serde(with = "crate::num::serde_rational")]
    pub superlevel_measure: Rational,
    #[serde(with = "crate::num::serde_rational")]
    pub base_measure: Rational,
}

pub fn small_weak_check(u: &Region, depth: u32, cap: usize) -> Result<SmallWeakReport> {
    if u.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: u.dim() });
    }
    let base = u.measure();
    if base.is_zero() {
        return Err(Error::InvalidParameter("|U| must be positive".into()));
    }
    let dl = delta(depth);
    let lambda = Rational::one() - &dl;
    let family = GridFamily { axes: vec![AxisFamily::ShiftedUnion { depth }] };
    let region = superlevel(&family, &StepFunction::indicator(u), &lambda, Threshold::Above, cap)?;
    let sup = region.measure();
    Ok(SmallWeakReport {
        depth,
        kappa: &sup / &base - Rational::one(),
        delta_depth: dl * Rational::from_integer(depth.into()),
        superlevel_measure: sup,
        base_measure: base,
    })
}

/// `{M 1_J > t}` for the one-dimensional maximal function over all intervals:
/// `J` widened by `|J|(1/t − 1)` on each side; `None` for `t ≥ 1`.
pub fn interval_maximal_superlevel(j: &Interval, t: &Rational) -> Result<Option<Interval>> {
    if !t.is_positive() {
        return Err(Error::InvalidParameter("threshold must be positive".into()));
    }
    if t >= &Rational::one() || j.is_empty() {
        return Ok(None);
    }
    let pad = j.len() * (t.recip() - Rational::one());
    Ok(Some(Interval::new(&j.lo - &pad, &j.hi + &pad)))
}

/// Witnessed chain `I ⊂ (1+|I|/|J|)J ⊂ {M 1_J > (1+2|I|/|J|)^{-1}}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpandingCheck {
    pub dilate: Interval,
    pub superlevel: Interval,
    pub holds: bool,
}

pub fn expanding_check(i: &DyadicInterval, j: &DyadicInterval) -> Result<ExpandingCheck> {
    if i.scale >= j.scale || !i.intersects(j) {
        return Err(Error::InvalidParameter(format!("need |I| < |J| and I ∩ J ≠ ∅, got I={i}, J={j}")));
    }
    let r = i.len() / j.len();
    let jj = j.interval();
    let pad = jj.len() * &r / Rational::from_integer(2.into());
    let dilate = Interval::new(&jj.lo - &pad, &jj.hi + &pad);
    let t = (Rational::one() + &r * Rational::from_integer(2.into())).recip();
    let superlevel = interval_maximal_superlevel(&jj, &t)?.expect("t < 1");
    let iv = i.interval();
    let holds = dilate.lo <= iv.lo && iv.hi <= dilate.hi && superlevel.lo <= dilate.lo && dilate.hi <= superlevel.hi;
    Ok(ExpandingCheck { dilate, superlevel, holds })
}
