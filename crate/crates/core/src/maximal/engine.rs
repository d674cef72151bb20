//! Superlevel sets of maximal operators over product families.
//!
//! Per axis the candidate intervals are finite: a member with no breakpoint of
//! `f` in its interior sits inside one compression cell and has the same
//! cross-sectional averages as that cell, so cells stand in for all of them.
//! Members straddling a breakpoint are enumerated level by level; below the
//! minimal breakpoint gap the relative positions of the breakpoints evolve by
//! `x ↦ frac(branching · x)`, so once the position vector repeats every finer
//! straddler is nested in an already enumerated one with the same averages.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::step::{CellGrid, StepFunction};
use crate::error::{Error, Result};
use crate::geometry::region::canonical_union;
use crate::geometry::{Aabb, Interval, Region};
use crate::grids::{AxisFamily, GridSpec};
use crate::num::{ceil_log2, common_denominator, floor_log2, pow2, Rational};

const MAX_LEVELS: usize = 4096;

/// Comparison used for `{M f ⋄ λ}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    /// Strict `avg > λ`.
    #[default]
    Above,
    AtLeast,
}

impl Threshold {
    fn passes(&self, avg_cmp: std::cmp::Ordering) -> bool {
        match self {
            Threshold::Above => avg_cmp.is_gt(),
            Threshold::AtLeast => avg_cmp.is_ge(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum AxisSpec<'a> {
    Family(&'a AxisFamily),
    /// Compression cells of the weight; used for the free coordinates of `M_j`.
    Cells,
}

pub(crate) fn superlevel_region(
    f: &StepFunction,
    axes: &[AxisSpec<'_>],
    lambda: &Rational,
    th: Threshold,
    cap: usize,
) -> Result<Region> {
    f.require_nonnegative()?;
    let d = f.dim();
    if axes.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: axes.len() });
    }
    if !lambda.is_positive() {
        return Err(Error::InvalidParameter("λ must be positive".into()));
    }
    if f.is_zero() {
        return Ok(Region::empty(d));
    }
    let grid = f.cells();
    let cands: Vec<Vec<Interval>> = axes
        .iter()
        .enumerate()
        .map(|(j, a)| axis_candidates(a, &grid.lines[j], &(grid.max_fiber_mass(j) / lambda), th))
        .collect::<Result<_>>()?;
    let count = cands.iter().map(Vec::len).try_fold(1usize, |a, n| a.checked_mul(n)).unwrap_or(usize::MAX);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    match Integerized::new(&grid, &cands) {
        Some(z) => Ok(z.superlevel(&cands, lambda, th)),
        None => Ok(superlevel_exact(f, &cands, lambda, th)),
    }
}

fn length_ok(len: &Rational, bound: &Rational, th: Threshold) -> bool {
    match th {
        Threshold::Above => len < bound,
        Threshold::AtLeast => len <= bound,
    }
}

fn axis_candidates(spec: &AxisSpec<'_>, lines: &[Rational], bound: &Rational, th: Threshold) -> Result<Vec<Interval>> {
    let cells = || lines.windows(2).map(|w| Interval::new(w[0].clone(), w[1].clone()));
    let mut out: Vec<Interval> = match spec {
        AxisSpec::Cells => cells().collect(),
        AxisSpec::Family(fam @ AxisFamily::Lattice { .. }) => {
            let (lo, hi) = (&lines[0], &lines[lines.len() - 1]);
            fam.members(lo, hi, &(0..=0)).into_iter().filter(|iv| length_ok(&iv.len(), bound, th)).collect()
        }
        AxisSpec::Family(fam) => {
            let mut v: Vec<Interval> = cells().collect();
            for g in fam.grids() {
                v.extend(straddlers(g, lines, bound, th)?);
            }
            v
        }
    };
    out.sort();
    out.dedup();
    Ok(out)
}

/// Members of one grid containing a breakpoint in their interior, from the
/// coarsest admissible level down to the first repeat of the position vector.
fn straddlers(g: GridSpec, lines: &[Rational], bound: &Rational, th: Threshold) -> Result<Vec<Interval>> {
    if !bound.is_positive() {
        return Ok(Vec::new());
    }
    let m_max = match th {
        Threshold::Above => ceil_log2(bound) - 1,
        Threshold::AtLeast => floor_log2(bound),
    };
    let (k0, log_len, shift): (i64, Box<dyn Fn(i64) -> i64>, Box<dyn Fn(i64) -> Rational>) = match g {
        GridSpec::Dyadic => (m_max, Box::new(|k| k), Box::new(|_| Rational::zero())),
        GridSpec::Shifted(id) => {
            let depth = id.depth as i64;
            let k0 = (m_max - id.phase as i64).div_euclid(depth);
            let alpha = id.alpha();
            (
                k0,
                Box::new(move |k| id.log_len(k)),
                Box::new(move |k| if k.rem_euclid(2) == 0 { alpha.clone() } else { -alpha.clone() }),
            )
        }
    };
    let min_gap = lines.windows(2).map(|w| &w[1] - &w[0]).min();
    let mut seen: HashSet<Vec<Rational>> = HashSet::new();
    let mut out = Vec::new();
    for step in 0..MAX_LEVELS {
        let k = k0 - step as i64;
        let len = pow2(log_len(k));
        let s = shift(k);
        let mut sig = Vec::with_capacity(lines.len());
        for p in lines {
            let t = p / &len - &s;
            let j = t.floor();
            let pos = &t - &j;
            if !pos.is_zero() {
                let lo = (&j + &s) * &len;
                out.push(Interval::new(lo.clone(), lo + &len));
            }
            sig.push(pos);
        }
        let fine = min_gap.as_ref().is_none_or(|gap| &len <= gap);
        if fine && !seen.insert(sig) {
            return Ok(out);
        }
    }
    Err(Error::InvalidParameter(format!("breakpoint positions did not cycle within {MAX_LEVELS} levels")))
}

/// Maximal function over a lattice family, as values on the lattice cells.
pub(crate) struct LatticeMax {
    pub points: Vec<Vec<Rational>>,
    pub dims: Vec<usize>,
    pub values: Vec<Rational>,
}

pub(crate) fn lattice_maximal_cells(f: &StepFunction, axes: &[AxisFamily], cap: usize) -> Result<LatticeMax> {
    f.require_nonnegative()?;
    let d = f.dim();
    if axes.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: axes.len() });
    }
    let mut points: Vec<Vec<Rational>> = Vec::with_capacity(d);
    for fam in axes {
        let AxisFamily::Lattice { cell, lo, hi } = fam else {
            return Err(Error::InvalidParameter("maximal function needs a lattice family".into()));
        };
        if !cell.is_positive() {
            return Err(Error::InvalidParameter("lattice cell must be positive".into()));
        }
        let first = (lo / cell).ceil().to_integer();
        let last = (hi / cell).floor().to_integer();
        let n = if last < first { 0 } else { (&last - &first).to_usize().unwrap_or(usize::MAX - 1) + 1 };
        if n > cap {
            return Err(Error::CapExceeded { count: n, cap });
        }
        points.push((0..n).map(|t| Rational::from_integer(&first + BigInt::from(t)) * cell).collect());
    }
    let dims: Vec<usize> = points.iter().map(|p| p.len().saturating_sub(1)).collect();
    let cells: usize = dims.iter().product();
    if f.is_zero() || cells == 0 {
        return Ok(LatticeMax { points, dims, values: vec![Rational::zero(); cells] });
    }
    let members: usize =
        dims.iter().map(|n| n * (n + 1) / 2).try_fold(1usize, |a, m| a.checked_mul(m)).unwrap_or(usize::MAX);
    if members > cap {
        return Err(Error::CapExceeded { count: members, cap });
    }
    let cands: Vec<Vec<Interval>> = points
        .iter()
        .zip(&dims)
        .map(|(pts, &n)| {
            (0..n).flat_map(|a| (a + 1..=n).map(move |b| Interval::new(pts[a].clone(), pts[b].clone()))).collect()
        })
        .collect();
    let grid = f.cells();
    if let Some(z) = Integerized::new(&grid, &cands) {
        let located: Vec<Vec<[(usize, i128); 2]>> =
            (0..d).map(|t| z.ends[t].iter().map(|&(a, b)| [z.locate(t, a), z.locate(t, b)]).collect()).collect();
        let mut overflow = false;
        let mut averages: Vec<(i128, i128)> = Vec::with_capacity(members);
        for_each_index(&dims_of(&cands), |idx| {
            let sel: Vec<[(usize, i128); 2]> = (0..d).map(|t| located[t][idx[t]]).collect();
            let vol = (0..d).try_fold(1i128, |v, t| v.checked_mul(z.ends[t][idx[t]].1 - z.ends[t][idx[t]].0));
            overflow |= vol.is_none();
            averages.push((z.mass(&sel), vol.unwrap_or(1)));
        });
        if !overflow {
            // mass/vol ordering by cross-multiplication.
            let best =
                separable_max(averages, &dims, (0, 1), |a, b| match (a.0.checked_mul(b.1), b.0.checked_mul(a.1)) {
                    (Some(x), Some(y)) => Some(x > y),
                    _ => None,
                });
            if let Some(best) = best {
                let values =
                    best.into_iter().map(|(m, v)| Rational::new(BigInt::from(m), BigInt::from(v) * &z.vden)).collect();
                return Ok(LatticeMax { points, dims, values });
            }
        }
    }
    let mut averages = Vec::with_capacity(members);
    for_each_index(&dims_of(&cands), |idx| {
        let b = Aabb::from_intervals(&(0..d).map(|t| cands[t][idx[t]].clone()).collect::<Vec<_>>());
        averages.push(f.average(&b).expect("lattice boxes are nondegenerate"));
    });
    let values = separable_max(averages, &dims, Rational::zero(), |a, b| Some(a > b)).expect("exact comparison");
    Ok(LatticeMax { points, dims, values })
}

/// Maximum over lattice boxes containing each cell, one axis at a time: a
/// tensor indexed by (cell or interval) per axis has its interval axis `t`
/// replaced by cells, with `out[c] = max_{a ≤ c < b} v(a, b)`. `gt` returns
/// `None` when it cannot compare.
fn separable_max<T: Clone>(
    mut data: Vec<T>,
    dims: &[usize],
    zero: T,
    gt: impl Fn(&T, &T) -> Option<bool>,
) -> Option<Vec<T>> {
    let d = dims.len();
    let pairs: Vec<usize> = dims.iter().map(|n| n * (n + 1) / 2).collect();
    for t in 0..d {
        let n = dims[t];
        let outer: usize = dims[..t].iter().product();
        let inner: usize = pairs[t + 1..].iter().product();
        let mut out = vec![zero.clone(); outer * n * inner];
        let mut best: Vec<T> = vec![zero.clone(); n];
        for o in 0..outer {
            for i in 0..inner {
                best.iter_mut().for_each(|b| *b = zero.clone());
                let mut pair = 0;
                for a in 0..n {
                    let row = pair;
                    pair += n - a;
                    let mut run: Option<&T> = None;
                    for b in (a + 1..=n).rev() {
                        let v = &data[(o * pairs[t] + row + (b - a - 1)) * inner + i];
                        let take = match run {
                            None => true,
                            Some(r) => gt(v, r)?,
                        };
                        if take {
                            run = Some(v);
                        }
                        let r = run.expect("set above");
                        if gt(r, &best[b - 1])? {
                            best[b - 1] = r.clone();
                        }
                    }
                }
                for c in 0..n {
                    out[(o * n + c) * inner + i] = best[c].clone();
                }
            }
        }
        data = out;
    }
    Some(data)
}

fn dims_of(cands: &[Vec<Interval>]) -> Vec<usize> {
    cands.iter().map(Vec::len).collect()
}

fn for_each_index(dims: &[usize], mut visit: impl FnMut(&[usize])) {
    if dims.contains(&0) {
        return;
    }
    let d = dims.len();
    let mut idx = vec![0usize; d];
    loop {
        visit(&idx);
        let mut t = d;
        loop {
            if t == 0 {
                return;
            }
            t -= 1;
            idx[t] += 1;
            if idx[t] < dims[t] {
                break;
            }
            idx[t] = 0;
        }
    }
}

/// Fallback: exact rational averages, one candidate at a time.
fn superlevel_exact(f: &StepFunction, cands: &[Vec<Interval>], lambda: &Rational, th: Threshold) -> Region {
    let d = f.dim();
    let total = f.integral();
    let mut hits = Vec::new();
    for_each_product(cands, |sides| {
        let b = Aabb::from_intervals(sides);
        let vol = b.volume();
        if !th.passes(total.cmp(&(lambda * &vol))) {
            return;
        }
        if th.passes(f.integral_over(&b).cmp(&(lambda * vol))) {
            hits.push(b);
        }
    });
    Region::from_boxes(d, &hits).expect("uniform dimension")
}

fn for_each_product(cands: &[Vec<Interval>], mut visit: impl FnMut(&[Interval])) {
    if cands.iter().any(Vec::is_empty) {
        return;
    }
    let d = cands.len();
    let mut idx = vec![0usize; d];
    loop {
        let sides: Vec<Interval> = (0..d).map(|j| cands[j][idx[j]].clone()).collect();
        visit(&sides);
        let mut j = d;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < cands[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// Integer image of the weight and candidates: axis `j` scaled by `den[j]`,
/// values by `vden`, with prefix tables `q[S]` for every axis subset `S`:
/// `q[S][i] = Σ_{c_s = i_s (s∈S), c_t < i_t (t∉S)} v_c Π_{t∉S} w_t(c_t)`,
/// so that `∫_{(-∞, x]} f = Σ_S q[S][i(x)] Π_{s∈S} (x_s − line_s)`.
struct Integerized {
    d: usize,
    den: Vec<BigInt>,
    vden: BigInt,
    lines: Vec<Vec<i128>>,
    ext_strides: Vec<usize>,
    q: Vec<Vec<i128>>,
    total: i128,
    /// Candidate endpoints per axis.
    ends: Vec<Vec<(i128, i128)>>,
}

fn to_i128(q: &Rational, den: &BigInt) -> Option<i128> {
    let v = q * Rational::from_integer(den.clone());
    debug_assert!(v.is_integer());
    v.to_integer().to_i128()
}

impl Integerized {
    fn new(grid: &CellGrid, cands: &[Vec<Interval>]) -> Option<Self> {
        let d = grid.dims.len();
        let mut den = Vec::with_capacity(d);
        let mut lines = Vec::with_capacity(d);
        let mut ends = Vec::with_capacity(d);
        for j in 0..d {
            let all = grid.lines[j].iter().chain(cands[j].iter().flat_map(|iv| [&iv.lo, &iv.hi]));
            let dj = common_denominator(all);
            lines.push(grid.lines[j].iter().map(|x| to_i128(x, &dj)).collect::<Option<Vec<_>>>()?);
            ends.push(
                cands[j]
                    .iter()
                    .map(|iv| Some((to_i128(&iv.lo, &dj)?, to_i128(&iv.hi, &dj)?)))
                    .collect::<Option<Vec<_>>>()?,
            );
            den.push(dj);
        }
        let vden = common_denominator(grid.values.iter());
        let values: Vec<i128> = grid.values.iter().map(|v| to_i128(v, &vden)).collect::<Option<_>>()?;
        let ext: Vec<usize> = grid.dims.iter().map(|n| n + 1).collect();
        let ext_strides = crate::geometry::region::strides(&ext);
        let size: usize = ext.iter().product();
        let cell_strides = crate::geometry::region::strides(&grid.dims);
        let widths: Vec<Vec<i128>> =
            lines.iter().map(|l: &Vec<i128>| l.windows(2).map(|w| w[1] - w[0]).collect()).collect();
        let mut q = Vec::with_capacity(1 << d);
        for s in 0..(1usize << d) {
            let mut a = vec![0i128; size];
            for (c, v) in values.iter().enumerate() {
                if *v == 0 {
                    continue;
                }
                let mut prod = *v;
                let mut flat = 0;
                for t in 0..d {
                    let ct = (c / cell_strides[t]) % grid.dims[t];
                    flat += ct * ext_strides[t];
                    if s & (1 << t) == 0 {
                        prod = prod.checked_mul(widths[t][ct])?;
                    }
                }
                a[flat] = prod;
            }
            for t in (0..d).filter(|t| s & (1 << t) == 0) {
                exclusive_prefix(&mut a, &ext, &ext_strides, t)?;
            }
            q.push(a);
        }
        let total = q[0][size - 1];
        let z = Self { d, den, vden, lines, ext_strides, q, total, ends };
        // Every F evaluation is a sum of at most 2^d terms bounded by products
        // of per-axis extents; reject tables that could overflow.
        let bound = z.lines.iter().zip(&z.ends).try_fold(
            z.q.iter().flatten().map(|x| x.unsigned_abs()).max()?,
            |acc, (l, e)| {
                let span = e
                    .iter()
                    .map(|&(a, b)| (b - a).unsigned_abs())
                    .chain(l.windows(2).map(|w| (w[1] - w[0]).unsigned_abs()))
                    .max()
                    .unwrap_or(1);
                acc.checked_mul(span.max(1))
            },
        )?;
        bound.checked_mul(1u128 << (2 * d + 1))?;
        Some(z)
    }

    fn locate(&self, axis: usize, x: i128) -> (usize, i128) {
        let l = &self.lines[axis];
        let n = l.len() - 1;
        if x <= l[0] {
            (0, 0)
        } else if x >= l[n] {
            (n, 0)
        } else {
            let i = l.partition_point(|&y| y <= x) - 1;
            (i, x - l[i])
        }
    }

    fn cumulative(&self, pts: &[(usize, i128)]) -> i128 {
        let flat: usize = pts.iter().enumerate().map(|(t, p)| p.0 * self.ext_strides[t]).sum();
        let mut acc = 0i128;
        for (s, table) in self.q.iter().enumerate() {
            let mut term = table[flat];
            if term == 0 {
                continue;
            }
            for (t, p) in pts.iter().enumerate() {
                if s & (1 << t) != 0 {
                    term *= p.1;
                }
            }
            acc += term;
        }
        acc
    }

    fn mass(&self, located: &[[(usize, i128); 2]]) -> i128 {
        let d = self.d;
        let mut pts = vec![(0usize, 0i128); d];
        let mut acc = 0i128;
        for mask in 0..(1usize << d) {
            for t in 0..d {
                pts[t] = located[t][(mask >> t) & 1];
            }
            let v = self.cumulative(&pts);
            if (d - mask.count_ones() as usize).is_multiple_of(2) {
                acc += v;
            } else {
                acc -= v;
            }
        }
        acc
    }

    fn superlevel(&self, cands: &[Vec<Interval>], lambda: &Rational, th: Threshold) -> Region {
        let d = self.d;
        if cands.iter().any(Vec::is_empty) {
            return Region::empty(d);
        }
        let located: Vec<Vec<[(usize, i128); 2]>> = (0..d)
            .map(|t| self.ends[t].iter().map(|&(a, b)| [self.locate(t, a), self.locate(t, b)]).collect())
            .collect();
        let ln = lambda.numer();
        let ld = lambda.denom();
        // avg ⋄ λ  ⟺  mass · ld ⋄ ln · vden · vol
        let scale = ln * &self.vden;
        let compare = |mass: i128, vol: i128| -> std::cmp::Ordering {
            match (scale.to_i128(), ld.to_i128()) {
                (Some(sc), Some(l)) => match (mass.checked_mul(l), sc.checked_mul(vol)) {
                    (Some(a), Some(b)) => a.cmp(&b),
                    _ => (BigInt::from(mass) * ld).cmp(&(&scale * BigInt::from(vol))),
                },
                _ => (BigInt::from(mass) * ld).cmp(&(&scale * BigInt::from(vol))),
            }
        };
        let total = self.total;
        let hits: Vec<Vec<usize>> = (0..cands[0].len())
            .into_par_iter()
            .flat_map_iter(|i0| {
                let mut found = Vec::new();
                let mut idx = vec![0usize; d];
                idx[0] = i0;
                let mut sel = vec![[(0usize, 0i128); 2]; d];
                loop {
                    let mut vol: Option<i128> = Some(1);
                    for t in 0..d {
                        sel[t] = located[t][idx[t]];
                        let (a, b) = self.ends[t][idx[t]];
                        vol = vol.and_then(|v| v.checked_mul(b - a));
                    }
                    let vol_cmp = |m: i128| match vol {
                        Some(v) => compare(m, v),
                        None => {
                            let big: BigInt =
                                (0..d).map(|t| BigInt::from(self.ends[t][idx[t]].1 - self.ends[t][idx[t]].0)).product();
                            (BigInt::from(m) * ld).cmp(&(&scale * big))
                        }
                    };
                    if th.passes(vol_cmp(total)) && th.passes(vol_cmp(self.mass(&sel))) {
                        found.push(idx.clone());
                    }
                    let mut t = d;
                    loop {
                        if t == 1 {
                            return found;
                        }
                        t -= 1;
                        idx[t] += 1;
                        if idx[t] < cands[t].len() {
                            break;
                        }
                        idx[t] = 0;
                    }
                }
            })
            .collect();
        if hits.is_empty() {
            return Region::empty(d);
        }
        let boxes: Vec<(Vec<i128>, Vec<i128>)> = hits
            .iter()
            .map(|idx| {
                ((0..d).map(|t| self.ends[t][idx[t]].0).collect(), (0..d).map(|t| self.ends[t][idx[t]].1).collect())
            })
            .collect();
        let parts: Vec<(&[i128], &[i128])> = boxes.iter().map(|(l, h)| (l.as_slice(), h.as_slice())).collect();
        let back = |t: usize, x: i128| Rational::new(BigInt::from(x), self.den[t].clone());
        let out = canonical_union(d, &parts)
            .into_iter()
            .map(|(lo, hi)| {
                Aabb::new(
                    lo.iter().enumerate().map(|(t, &x)| back(t, x)).collect(),
                    hi.iter().enumerate().map(|(t, &x)| back(t, x)).collect(),
                )
                .expect("canonical boxes are well formed")
            })
            .collect();
        Region::from_canonical(d, out)
    }
}

fn exclusive_prefix(a: &mut [i128], ext: &[usize], strides: &[usize], axis: usize) -> Option<()> {
    let n = ext[axis];
    let st = strides[axis];
    for start in 0..a.len() {
        if !(start / st).is_multiple_of(n) {
            continue;
        }
        let mut acc = 0i128;
        for i in 0..n {
            let p = start + i * st;
            let tmp = a[p];
            a[p] = acc;
            acc = acc.checked_add(tmp)?;
        }
    }
    Some(())
}
