use std::collections::BTreeMap;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbSolver, EmbSpec, EmbVariant};
use crate::error::{Error, Result};
use crate::geometry::{DyadicInterval, DyadicRect, RectCollection, Region};
use crate::grids::AxisFamily;
use crate::maximal::{lattice_maximal_cells, StepFunction};
use crate::num::{floor_log2, nth_root_bracket, pow2, pow_bracket, serde_rational, Bracket, Rational};

/// `F(I, j, U′)`: members with side `I` in the dilated coordinate and
/// `2^{j−1} ≤ emb < 2^j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FSet {
    pub axis: usize,
    pub interval: DyadicInterval,
    pub bucket: i64,
    pub members: Vec<DyadicRect>,
    pub region: Region,
}

/// Group `u_prime` by (side in the dilated coordinate, dyadic embeddedness
/// bucket), with embeddedness against the enlarged set of `ambient`.
pub fn f_sets(u_prime: &RectCollection, ambient: &RectCollection, spec: &EmbSpec, cap: usize) -> Result<Vec<FSet>> {
    let EmbVariant::Directional { axes } = &spec.variant else {
        return Err(Error::InvalidParameter("F sets need a one-coordinate directional variant".into()));
    };
    let [axis] = axes.as_slice() else {
        return Err(Error::InvalidParameter("F sets need a one-coordinate directional variant".into()));
    };
    if u_prime.dim() < 2 {
        return Err(Error::InvalidParameter("F sets need dimension at least 2".into()));
    }
    if u_prime.is_empty() {
        return Ok(Vec::new());
    }
    let v = spec.enlarged(ambient, cap)?;
    let solver = EmbSolver::new(&v);
    let mut groups: BTreeMap<(DyadicInterval, i64), Vec<DyadicRect>> = BTreeMap::new();
    for r in u_prime {
        let e = solver.emb(&r.to_box(), &spec.variant)?;
        let bucket = floor_log2(&e.value) + 1;
        groups.entry((r.sides[*axis], bucket)).or_default().push(r.clone());
    }
    Ok(groups
        .into_iter()
        .map(|((interval, bucket), members)| {
            let boxes: Vec<_> = members.iter().map(DyadicRect::to_box).collect();
            let region = Region::from_boxes(u_prime.dim(), &boxes).expect("uniform dimension");
            FSet { axis: *axis, interval, bucket, members, region }
        })
        .collect())
}

/// `‖Σ 2^{−εj} (M 1_F)^n‖_p` with `M` the maximal function over the lattice
/// spanned by the F sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LpReport {
    pub n: u32,
    pub p: u32,
    pub lattice_cells: usize,
    #[serde(with = "serde_rational")]
    pub norm_lower: Rational,
    #[serde(with = "serde_rational")]
    pub norm_upper: Rational,
    /// `norm_upper / |sh U′|^{1/p}`, rounded up.
    #[serde(with = "serde_rational")]
    pub ratio_upper: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipherReport {
    #[serde(with = "serde_rational")]
    pub epsilon: Rational,
    #[serde(with = "serde_rational")]
    pub sum_lower: Rational,
    #[serde(with = "serde_rational")]
    pub sum_upper: Rational,
    #[serde(with = "serde_rational")]
    pub shadow: Rational,
    #[serde(with = "serde_rational")]
    pub ratio_upper: Rational,
    pub lp: Option<LpReport>,
}

fn bucket_weight(bucket: i64, epsilon: &Rational) -> Bracket {
    pow_bracket(&pow2(bucket), &-epsilon.clone())
}

/// `Σ_{(I,j)} 2^{−εj} |F(I,j)|` against `shadow`, optionally with the
/// `(n, p)` functional.
pub fn pipher_sum(
    fsets: &[FSet],
    epsilon: &Rational,
    shadow: &Rational,
    lp: Option<(u32, u32)>,
    cap: usize,
) -> Result<PipherReport> {
    if epsilon <= &Rational::zero() {
        return Err(Error::InvalidParameter(format!("ε = {epsilon} must be positive")));
    }
    let mut sum = Bracket::exact(Rational::zero());
    for f in fsets {
        sum = sum.add(&bucket_weight(f.bucket, epsilon).scale_nonneg(&f.region.measure()));
    }
    let ratio_upper = if shadow.is_zero() { Rational::zero() } else { &sum.hi / shadow };
    let lp = match lp {
        Some((n, p)) => Some(lp_functional(fsets, epsilon, shadow, n, p, cap)?),
        None => None,
    };
    Ok(PipherReport {
        epsilon: epsilon.clone(),
        sum_lower: sum.lo,
        sum_upper: sum.hi,
        shadow: shadow.clone(),
        ratio_upper,
        lp,
    })
}

fn lp_functional(
    fsets: &[FSet],
    epsilon: &Rational,
    shadow: &Rational,
    n: u32,
    p: u32,
    cap: usize,
) -> Result<LpReport> {
    if n < 1 || p < 1 {
        return Err(Error::InvalidParameter("n and p must be positive".into()));
    }
    let empty = LpReport {
        n,
        p,
        lattice_cells: 0,
        norm_lower: Rational::zero(),
        norm_upper: Rational::zero(),
        ratio_upper: Rational::zero(),
    };
    let Some(first) = fsets.first() else {
        return Ok(empty);
    };
    let d = first.region.dim();
    // Lattice: bounding box of all F sets, cell = finest side per coordinate.
    let all = Region::union_all(d, fsets.iter().map(|f| &f.region))?;
    let Some(bbox) = all.bounding_box() else {
        return Ok(empty);
    };
    let axes: Vec<AxisFamily> = (0..d)
        .map(|t| {
            let scale =
                fsets.iter().flat_map(|f| f.members.iter().map(move |r| r.sides[t].scale)).min().expect("nonempty");
            AxisFamily::Lattice { cell: pow2(scale as i64), lo: bbox.lo()[t].clone(), hi: bbox.hi()[t].clone() }
        })
        .collect();
    let mut g_lo: Vec<Rational> = Vec::new();
    let mut g_hi: Vec<Rational> = Vec::new();
    let mut widths: Vec<Vec<Rational>> = Vec::new();
    for f in fsets {
        let m = lattice_maximal_cells(&StepFunction::indicator(&f.region), &axes, cap)?;
        if g_lo.is_empty() {
            g_lo = vec![Rational::zero(); m.values.len()];
            g_hi = g_lo.clone();
            widths = m.points.iter().map(|pts| pts.windows(2).map(|w| &w[1] - &w[0]).collect()).collect();
        }
        let w = bucket_weight(f.bucket, epsilon);
        for (c, v) in m.values.iter().enumerate() {
            if v.is_zero() {
                continue;
            }
            let vn = num_traits::pow(v.clone(), n as usize);
            g_lo[c] += &w.lo * &vn;
            g_hi[c] += &w.hi * &vn;
        }
    }
    let dims: Vec<usize> = widths.iter().map(Vec::len).collect();
    let strides = crate::geometry::region::strides(&dims);
    let mut integral = Bracket::exact(Rational::zero());
    for c in 0..g_lo.len() {
        if g_hi[c].is_zero() {
            continue;
        }
        let vol: Rational = (0..d).map(|t| widths[t][(c / strides[t]) % dims[t]].clone()).product();
        integral.lo += num_traits::pow(g_lo[c].clone(), p as usize) * &vol;
        integral.hi += num_traits::pow(g_hi[c].clone(), p as usize) * &vol;
    }
    let norm_lower = nth_root_bracket(&integral.lo, p).lo;
    let norm_upper = nth_root_bracket(&integral.hi, p).hi;
    let ratio_upper = if shadow.is_zero() { Rational::zero() } else { &norm_upper / nth_root_bracket(shadow, p).lo };
    Ok(LpReport { n, p, lattice_cells: g_lo.len(), norm_lower, norm_upper, ratio_upper })
}

impl FSet {
    pub fn measure(&self) -> Rational {
        self.region.measure()
    }
}

impl PipherReport {
    pub fn is_empty(&self) -> bool {
        self.sum_upper.is_zero() && self.shadow.is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EnlargedSource;
    use crate::maximal::DEFAULT_CAP;
    use crate::num::{int, ratio};

    fn cube() -> RectCollection {
        RectCollection::new(3, [DyadicRect::from_pairs(&[(0, 0), (0, 0), (0, 0)])]).unwrap()
    }

    fn own_region(u: &RectCollection) -> EmbSpec {
        EmbSpec::new(EmbVariant::directional(0), EnlargedSource::Region(u.shadow()))
    }

    #[test]
    fn single_cube() {
        let u = cube();
        let fs = f_sets(&u, &u, &own_region(&u), DEFAULT_CAP).unwrap();
        assert_eq!(fs.len(), 1);
        assert_eq!((fs[0].interval, fs[0].bucket), (DyadicInterval::new(0, 0), 1));
        assert_eq!(fs[0].measure(), int(1));
        let rep = pipher_sum(&fs, &ratio(1, 2), &int(1), Some((2, 2)), DEFAULT_CAP).unwrap();
        // 2^{-1/2} is irrational: the bracket must straddle it.
        assert!(rep.sum_lower < rep.sum_upper);
        assert!(&rep.sum_lower * &rep.sum_lower * int(2) <= int(1));
        assert!(&rep.sum_upper * &rep.sum_upper * int(2) >= int(1));
        let lp = rep.lp.unwrap();
        // M 1_cube = 1 on the cube, so the functional equals the sum.
        assert_eq!(lp.lattice_cells, 1);
        assert!(lp.norm_lower <= rep.sum_upper && rep.sum_lower <= lp.norm_upper);
    }

    #[test]
    fn empty_inputs() {
        let u = cube();
        let empty = RectCollection::empty(3);
        assert!(f_sets(&empty, &u, &own_region(&u), DEFAULT_CAP).unwrap().is_empty());
        let rep = pipher_sum(&[], &ratio(1, 2), &int(0), Some((2, 2)), DEFAULT_CAP).unwrap();
        assert!(rep.is_empty());
        assert_eq!(rep.lp.unwrap().norm_upper, int(0));
    }

    #[test]
    fn shared_side_same_bucket_unions() {
        let a = DyadicRect::from_pairs(&[(0, 0), (0, 0), (0, 0)]);
        let b = DyadicRect::from_pairs(&[(0, 0), (0, 1), (0, 0)]);
        let u = RectCollection::new(3, [a, b]).unwrap();
        let fs = f_sets(&u, &u, &own_region(&u), DEFAULT_CAP).unwrap();
        assert_eq!(fs.len(), 1);
        assert_eq!(fs[0].members.len(), 2);
        assert_eq!(fs[0].measure(), int(2));
    }

    #[test]
    fn lp_matches_direct_evaluation() {
        // Two cubes at different buckets along the first coordinate.
        let a = DyadicRect::from_pairs(&[(0, 0), (0, 0)]);
        let b = DyadicRect::from_pairs(&[(0, 1), (0, 0)]);
        let fa = FSet {
            axis: 0,
            interval: a.sides[0],
            bucket: 1,
            members: vec![a.clone()],
            region: Region::from_box(&a.to_box()),
        };
        let fb = FSet {
            axis: 0,
            interval: b.sides[0],
            bucket: 2,
            members: vec![b.clone()],
            region: Region::from_box(&b.to_box()),
        };
        let eps = int(1);
        let rep = pipher_sum(&[fa, fb], &eps, &int(2), Some((2, 1)), DEFAULT_CAP).unwrap();
        assert_eq!(rep.sum_lower, ratio(1, 2) + ratio(1, 4));
        // On [0,2)×[0,1): M1_a = 1 on the first cell, 1/2 on the second, and
        // symmetrically for b; ∫ G = (1/2)(1 + 1/4) + (1/4)(1/4 + 1).
        let lp = rep.lp.unwrap();
        assert_eq!(lp.norm_lower, ratio(5, 8) + ratio(5, 16));
        assert_eq!(lp.norm_lower, lp.norm_upper);
    }
}
