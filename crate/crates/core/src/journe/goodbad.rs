use std::cmp::Ordering;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, DyadicRect, RectCollection, Region};
use crate::num::{serde_rational, serde_rational_vec, Rational};

/// Which stock member is selected next.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionOrder {
    /// Decreasing area, then lexicographic lower corner.
    #[default]
    AreaThenLex,
    /// These member indices first, the rest by area then corner.
    Priority(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "kebab-case")]
pub enum TraceStep {
    /// Member moved to the good part; `coverage[j]` is the fraction covered by
    /// good members longer in coordinate `j` at that moment.
    Select {
        index: usize,
        #[serde(with = "serde_rational_vec")]
        coverage: Vec<Rational>,
    },
    /// Member moved to the bad part of `axis`.
    Bad {
        index: usize,
        axis: usize,
        #[serde(with = "serde_rational")]
        coverage: Rational,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoodBadTrace {
    pub n_members: usize,
    #[serde(with = "serde_rational")]
    pub theta: Rational,
    pub steps: Vec<TraceStep>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoodBadResult {
    pub good: RectCollection,
    pub bad: Vec<RectCollection>,
    pub trace: GoodBadTrace,
}

impl GoodBadResult {
    /// Smallest `1 − coverage` over every selection and coordinate.
    pub fn min_private_fraction(&self) -> Rational {
        self.trace
            .steps
            .iter()
            .filter_map(|s| match s {
                TraceStep::Select { coverage, .. } => coverage.iter().max().map(|c| Rational::one() - c),
                TraceStep::Bad { .. } => None,
            })
            .min()
            .unwrap_or_else(Rational::one)
    }
}

fn default_cmp(a: &DyadicRect, b: &DyadicRect) -> Ordering {
    b.log_area().cmp(&a.log_area()).then_with(|| {
        let (x, y) = (a.to_box(), b.to_box());
        x.lo().cmp(y.lo()).then_with(|| x.hi().cmp(y.hi()))
    })
}

fn selection_sequence(u: &RectCollection, order: &SelectionOrder) -> Result<Vec<usize>> {
    let mut rest: Vec<usize> = (0..u.len()).collect();
    rest.sort_by(|&a, &b| default_cmp(&u.members()[a], &u.members()[b]));
    match order {
        SelectionOrder::AreaThenLex => Ok(rest),
        SelectionOrder::Priority(first) => {
            let mut seen = vec![false; u.len()];
            for &i in first {
                if i >= u.len() || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidParameter(format!("bad priority index {i}")));
                }
            }
            let mut seq = first.clone();
            seq.extend(rest.into_iter().filter(|&i| !seen[i]));
            Ok(seq)
        }
    }
}

/// `|R ∩ ∪{G ∈ good : G longer than R in coordinate j}| / |R|`.
fn coverage(r: &DyadicRect, rb: &Aabb, good: &[(DyadicRect, Aabb)], j: usize) -> Rational {
    let parts: Vec<Aabb> = good
        .iter()
        .filter(|(g, gb)| g.sides[j].scale > r.sides[j].scale && gb.overlaps(rb))
        .map(|(_, gb)| gb.intersect(rb))
        .collect();
    if parts.is_empty() {
        return Rational::zero();
    }
    Region::from_boxes(rb.dim(), &parts).expect("uniform dimension").measure() / rb.volume()
}

/// The good/bad loop: select a stock member into the good part, then move
/// every stock member nearly covered (`> θ`) by good members longer in
/// coordinate `j` into the bad part `j`, for `j` in order.
pub fn good_bad_decompose(u: &RectCollection, theta: &Rational, order: &SelectionOrder) -> Result<GoodBadResult> {
    if theta <= &Rational::zero() || theta >= &Rational::one() {
        return Err(Error::InvalidParameter(format!("θ = {theta} outside (0,1)")));
    }
    let d = u.dim();
    let members = u.members();
    let boxes = u.boxes();
    let seq = selection_sequence(u, order)?;
    let mut in_stock = vec![true; u.len()];
    let mut good: Vec<(DyadicRect, Aabb)> = Vec::new();
    let mut good_idx = Vec::new();
    let mut bad_idx: Vec<Vec<usize>> = vec![Vec::new(); d];
    let mut steps = Vec::new();
    for &i in &seq {
        if !in_stock[i] {
            continue;
        }
        in_stock[i] = false;
        let cov: Vec<Rational> = (0..d).map(|j| coverage(&members[i], &boxes[i], &good, j)).collect();
        steps.push(TraceStep::Select { index: i, coverage: cov });
        good.push((members[i].clone(), boxes[i].clone()));
        good_idx.push(i);
        for j in 0..d {
            for &k in &seq {
                // Coverage changes only through the newly selected member.
                if !in_stock[k]
                    || !boxes[k].overlaps(&boxes[i])
                    || members[i].sides[j].scale <= members[k].sides[j].scale
                {
                    continue;
                }
                let c = coverage(&members[k], &boxes[k], &good, j);
                if &c > theta {
                    in_stock[k] = false;
                    bad_idx[j].push(k);
                    steps.push(TraceStep::Bad { index: k, axis: j, coverage: c });
                }
            }
        }
    }
    let good = u.subset(&good_idx);
    let bad = bad_idx.iter().map(|ix| u.subset(ix)).collect();
    Ok(GoodBadResult { good, bad, trace: GoodBadTrace { n_members: u.len(), theta: theta.clone(), steps } })
}

/// Reproduce a decomposition from its trace; the selection order is read off
/// the trace and the rerun must match it step for step.
pub fn replay(u: &RectCollection, trace: &GoodBadTrace) -> Result<GoodBadResult> {
    if trace.n_members != u.len() {
        return Err(Error::InvalidParameter(format!(
            "trace was recorded for {} members, input has {}",
            trace.n_members,
            u.len()
        )));
    }
    let picks: Vec<usize> = trace
        .steps
        .iter()
        .filter_map(|s| match s {
            TraceStep::Select { index, .. } => Some(*index),
            TraceStep::Bad { .. } => None,
        })
        .collect();
    let out = good_bad_decompose(u, &trace.theta, &SelectionOrder::Priority(picks))?;
    if out.trace != *trace {
        let at = out
            .trace
            .steps
            .iter()
            .zip(&trace.steps)
            .position(|(a, b)| a != b)
            .unwrap_or(out.trace.steps.len().min(trace.steps.len()));
        return Err(Error::InvalidParameter(format!("trace diverges from the input at step {at}")));
    }
    Ok(out)
}

/// Second-round decomposition of every bad part.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BbReport {
    pub first: GoodBadResult,
    /// `second[j]` decomposes `bad_j` of the first round.
    pub second: Vec<GoodBadResult>,
    /// `(j, member)` with the member in `bad_j(bad_j(U))`.
    pub counterexample: Option<(usize, DyadicRect)>,
    #[serde(with = "serde_rational")]
    pub min_private_fraction: Rational,
    pub pass: bool,
}

/// `bad_j(bad_j(U)) = ∅` for every coordinate `j`.
pub fn bb_empty_check(u: &RectCollection, theta: &Rational) -> Result<BbReport> {
    let first = good_bad_decompose(u, theta, &SelectionOrder::AreaThenLex)?;
    let mut second = Vec::new();
    let mut counterexample = None;
    for (j, b) in first.bad.iter().enumerate() {
        let r = good_bad_decompose(b, theta, &SelectionOrder::AreaThenLex)?;
        if counterexample.is_none() {
            counterexample = r.bad[j].members().first().map(|m| (j, m.clone()));
        }
        second.push(r);
    }
    let min_private_fraction = first.min_private_fraction();
    let pass = counterexample.is_none();
    Ok(BbReport { first, second, counterexample, min_private_fraction, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::ratio;

    fn rect(pairs: &[(i32, i64)]) -> DyadicRect {
        DyadicRect::from_pairs(pairs)
    }

    fn slab_fixture() -> RectCollection {
        let mut rs = vec![rect(&[(0, 0), (0, 0)])];
        rs.extend((0..15).map(|i| rect(&[(1, 0), (-4, i)])));
        RectCollection::new(2, rs).unwrap()
    }

    #[test]
    fn trivial_inputs() {
        let one = RectCollection::new(2, [rect(&[(0, 0), (0, 0)])]).unwrap();
        let r = good_bad_decompose(&one, &ratio(8, 9), &SelectionOrder::AreaThenLex).unwrap();
        assert_eq!(r.good, one);
        assert!(r.bad.iter().all(RectCollection::is_empty));
        let two = RectCollection::new(2, [rect(&[(0, 0), (0, 0)]), rect(&[(0, 3), (0, 0)])]).unwrap();
        let r = good_bad_decompose(&two, &ratio(8, 9), &SelectionOrder::AreaThenLex).unwrap();
        assert_eq!(r.good.len(), 2);
    }

    #[test]
    fn slabs_first_put_the_square_in_the_first_bad_part() {
        let u = slab_fixture();
        let order = SelectionOrder::Priority((1..16).collect());
        let r = good_bad_decompose(&u, &ratio(8, 9), &order).unwrap();
        assert_eq!(r.bad[0].members(), &[rect(&[(0, 0), (0, 0)])]);
        assert_eq!(r.good.len(), 15);
        let last = r.trace.steps.last().unwrap();
        assert_eq!(last, &TraceStep::Bad { index: 0, axis: 0, coverage: ratio(15, 16) });
        // Default order selects the square first; the slabs are longer in
        // coordinate 0 so nothing covers them.
        let r = good_bad_decompose(&u, &ratio(8, 9), &SelectionOrder::AreaThenLex).unwrap();
        assert_eq!(r.good.len(), 16);
    }

    #[test]
    fn replay_reproduces() {
        let u = slab_fixture();
        let order = SelectionOrder::Priority((1..16).rev().collect());
        let r = good_bad_decompose(&u, &ratio(8, 9), &order).unwrap();
        assert_eq!(replay(&u, &r.trace).unwrap(), r);
        let mut bad = r.trace.clone();
        bad.theta = ratio(99, 100);
        assert!(replay(&u, &bad).is_err());
        let mut short = r.trace.clone();
        short.n_members = 3;
        assert!(replay(&u, &short).is_err());
    }

    #[test]
    fn parts_partition_the_input() {
        let u = slab_fixture();
        let r = good_bad_decompose(&u, &ratio(8, 9), &SelectionOrder::Priority(vec![3, 1, 2])).unwrap();
        let mut all: Vec<DyadicRect> = r.good.members().to_vec();
        for b in &r.bad {
            all.extend(b.members().iter().cloned());
        }
        all.sort();
        let mut want = u.members().to_vec();
        want.sort();
        assert_eq!(all, want);
        assert!(r.min_private_fraction() >= ratio(1, 9));
    }

    #[test]
    fn single_rectangle_bb_check_passes() {
        let one = RectCollection::new(2, [rect(&[(0, 0), (0, 0)])]).unwrap();
        let rep = bb_empty_check(&one, &ratio(8, 9)).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.min_private_fraction, Rational::one());
    }
}
