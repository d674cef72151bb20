//! Enlarged sets and embeddedness: how far a rectangle can be dilated about
//! its center while staying inside an enlarged set.

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, CoverIndex, DyadicRect, RectCollection, Region};
use crate::grids::{delta, AxisFamily, GridFamily};
use crate::maximal::{one_coordinate_superlevel, superlevel, StepFunction, Threshold};
use crate::num::{serde_rational, Rational};

/// Iterated maximal-function enlargement `Enl_{j+1} = {M 1_{Enl_j} > λ}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnlargementSpec {
    pub family: GridFamily,
    #[serde(with = "serde_rational")]
    pub lambda: Rational,
    /// Number of applications; `0` returns the shadow.
    pub iterations: u32,
    /// Apply one-coordinate operators in this order instead of the product operator.
    #[serde(default)]
    pub coordinate_order: Option<Vec<usize>>,
    #[serde(default)]
    pub threshold: Threshold,
}

impl EnlargementSpec {
    pub fn new(family: GridFamily, lambda: Rational, iterations: u32) -> Self {
        Self { family, lambda, iterations, coordinate_order: None, threshold: Threshold::Above }
    }

    pub fn with_order(mut self, order: Vec<usize>) -> Self {
        self.coordinate_order = Some(order);
        self
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.family.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: self.family.dim() });
        }
        if !self.lambda.is_positive() || self.lambda >= Rational::one() {
            return Err(Error::InvalidParameter(format!("enlargement threshold {} outside (0,1)", self.lambda)));
        }
        if let Some(order) = &self.coordinate_order {
            if let Some(a) = order.iter().find(|&&a| a >= dim) {
                return Err(Error::InvalidParameter(format!("coordinate {a} out of range")));
            }
        }
        Ok(())
    }
}

/// One enlargement step applied to a region.
pub fn enlarge_once(region: &Region, spec: &EnlargementSpec, cap: usize) -> Result<Region> {
    spec.validate(region.dim())?;
    let next = match &spec.coordinate_order {
        None => superlevel(&spec.family, &StepFunction::indicator(region), &spec.lambda, spec.threshold, cap)?,
        Some(order) => {
            let mut cur = region.clone();
            for &axis in order {
                let f = StepFunction::indicator(&cur);
                cur = one_coordinate_superlevel(axis, &spec.family.axes[axis], &f, &spec.lambda, spec.threshold, cap)?;
            }
            cur
        }
    };
    // Lattice families need not cover the region itself.
    next.union(region)
}

pub fn enlarge(region: &Region, spec: &EnlargementSpec, cap: usize) -> Result<Region> {
    spec.validate(region.dim())?;
    let mut cur = region.clone();
    for _ in 0..spec.iterations {
        cur = enlarge_once(&cur, spec, cap)?;
    }
    Ok(cur)
}

pub fn enlarged_set(u: &RectCollection, spec: &EnlargementSpec, cap: usize) -> Result<Region> {
    let sh = u.shadow();
    if sh.is_empty() {
        return Err(Error::InvalidParameter("collection has empty shadow".into()));
    }
    enlarge(&sh, spec, cap)
}

/// Which coordinates of a rectangle are dilated.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbVariant {
    /// Common factor on the listed coordinates.
    Directional { axes: Vec<usize> },
    /// Common factor on every coordinate.
    Uniform,
    /// Independent factors on two coordinates, maximizing their product.
    ProductPair { first: usize, second: usize },
}

impl EmbVariant {
    pub fn directional(axis: usize) -> Self {
        EmbVariant::Directional { axes: vec![axis] }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let bad = |a: &usize| *a >= dim;
        match self {
            EmbVariant::Directional { axes } if axes.is_empty() => {
                Err(Error::InvalidParameter("directional variant needs a coordinate".into()))
            }
            EmbVariant::Directional { axes } if axes.iter().any(bad) => {
                Err(Error::InvalidParameter(format!("coordinates {axes:?} out of range for dimension {dim}")))
            }
            EmbVariant::ProductPair { first, second } if bad(first) || bad(second) || first == second => {
                Err(Error::InvalidParameter(format!("bad coordinate pair ({first}, {second})")))
            }
            _ => Ok(()),
        }
    }
}

/// Where the enlarged set comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnlargedSource {
    Enlarge(EnlargementSpec),
    Region(Region),
}

/// An embeddedness variant together with its enlarged set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbSpec {
    pub variant: EmbVariant,
    pub source: EnlargedSource,
}

impl EmbSpec {
    pub fn new(variant: EmbVariant, source: EnlargedSource) -> Self {
        Self { variant, source }
    }

    /// The enlarged set for the ambient collection `u`.
    pub fn enlarged(&self, u: &RectCollection, cap: usize) -> Result<Region> {
        match &self.source {
            EnlargedSource::Enlarge(spec) => enlarged_set(u, spec, cap),
            EnlargedSource::Region(v) if v.dim() != u.dim() => {
                Err(Error::DimensionMismatch { expected: u.dim(), got: v.dim() })
            }
            EnlargedSource::Region(v) => Ok(v.clone()),
        }
    }
}

/// Embeddedness value with the per-coordinate dilation factors attaining it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Embedding {
    #[serde(with = "serde_rational")]
    pub value: Rational,
    #[serde(with = "crate::num::serde_rational_vec")]
    pub mu: Vec<Rational>,
}

/// Exact embeddedness against a fixed region.
#[derive(Clone, Debug)]
pub struct EmbSolver {
    index: CoverIndex,
}

impl EmbSolver {
    pub fn new(v: &Region) -> Self {
        Self { index: v.index() }
    }

    fn fits(&self, r: &Aabb, mu: &[Rational]) -> bool {
        r.dilate(mu).map(|b| self.index.contains(&b)).unwrap_or(false)
    }

    /// Factors `μ ≥ 1` at which a face of the dilate of `r` along `axis` meets a
    /// line of the region.
    fn breakpoints(&self, r: &Aabb, axes: &[usize]) -> Vec<Rational> {
        let two = Rational::from_integer(2.into());
        let mut out = vec![Rational::one()];
        for &a in axes {
            let c = (&r.lo()[a] + &r.hi()[a]) / &two;
            let h = r.width(a) / &two;
            out.extend(self.index.lines(a).iter().map(|x| (x - &c).abs() / &h).filter(|m| m > &Rational::one()));
        }
        out.sort();
        out.dedup();
        out
    }

    /// Largest candidate in ascending `cands` passing the monotone `ok`.
    fn last_passing(cands: &[Rational], ok: impl Fn(&Rational) -> bool) -> Option<Rational> {
        let n = cands.partition_point(|m| ok(m));
        (n > 0).then(|| cands[n - 1].clone())
    }

    pub fn emb(&self, r: &Aabb, variant: &EmbVariant) -> Result<Embedding> {
        let d = r.dim();
        variant.validate(d)?;
        if r.is_empty() {
            return Err(Error::DegenerateBox);
        }
        let ones = vec![Rational::one(); d];
        if !self.fits(r, &ones) {
            return Err(Error::NotEmbedded);
        }
        let with = |axes: &[usize], m: &Rational| {
            let mut mu = ones.clone();
            for &a in axes {
                mu[a] = m.clone();
            }
            mu
        };
        match variant {
            EmbVariant::Directional { axes } => {
                let best = Self::last_passing(&self.breakpoints(r, axes), |m| self.fits(r, &with(axes, m)))
                    .expect("μ = 1 fits");
                Ok(Embedding { mu: with(axes, &best), value: best })
            }
            EmbVariant::Uniform => {
                let axes: Vec<usize> = (0..d).collect();
                let best = Self::last_passing(&self.breakpoints(r, &axes), |m| self.fits(r, &with(&axes, m)))
                    .expect("μ = 1 fits");
                Ok(Embedding { mu: with(&axes, &best), value: best })
            }
            EmbVariant::ProductPair { first, second } => {
                let (a, b) = (*first, *second);
                let ca = self.breakpoints(r, &[a]);
                let cb = self.breakpoints(r, &[b]);
                let mut best: Option<(Rational, Vec<Rational>)> = None;
                for ma in &ca {
                    let mut mu = ones.clone();
                    mu[a] = ma.clone();
                    if !self.fits(r, &mu) {
                        break;
                    }
                    let mb = Self::last_passing(&cb, |m| {
                        let mut t = mu.clone();
                        t[b] = m.clone();
                        self.fits(r, &t)
                    })
                    .expect("checked above");
                    let val = ma * &mb;
                    if best.as_ref().is_none_or(|(v, _)| &val > v) {
                        mu[b] = mb;
                        best = Some((val, mu));
                    }
                }
                let (value, mu) = best.expect("μ = (1,1) fits");
                Ok(Embedding { value, mu })
            }
        }
    }

    /// The bracketing `Dil(μ/2) ⊂ V`, `Dil(2μ) ⊄ V` around a product-pair optimum.
    pub fn pair_bracket(&self, r: &Aabb, e: &Embedding) -> (bool, bool) {
        let two = Rational::from_integer(2.into());
        let half: Vec<Rational> = e.mu.iter().map(|m| (m / &two).max(Rational::one())).collect();
        let double: Vec<Rational> =
            e.mu.iter().map(|m| if m > &Rational::one() { m * &two } else { m.clone() }).collect();
        let outside = if double == e.mu { true } else { !self.fits(r, &double) };
        (self.fits(r, &half), outside)
    }
}

pub fn emb(r: &DyadicRect, variant: &EmbVariant, v: &Region) -> Result<Embedding> {
    EmbSolver::new(v).emb(&r.to_box(), variant)
}

/// Embeddedness of every member, in member order.
pub fn emb_all(u: &RectCollection, variant: &EmbVariant, v: &Region) -> Result<Vec<Embedding>> {
    let solver = EmbSolver::new(v);
    u.members().par_iter().map(|r| solver.emb(&r.to_box(), variant)).collect()
}

/// `V₀` and `V` of the two-dimensional small-enlargement construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmallEnlargement {
    pub depth: u32,
    pub v0: Region,
    pub v: Region,
    #[serde(with = "serde_rational")]
    pub shadow_measure: Rational,
    /// `|V| / |sh U| − 1`.
    #[serde(with = "serde_rational")]
    pub excess: Rational,
}

/// `∪_{i≠j} {M_i 1_{{M_j 1_base ⋄ 1−δ}} ⋄ 1−δ}` with `M` over `family` in each coordinate.
fn two_stage(base: &Region, family: &AxisFamily, level: &Rational, th: Threshold, cap: usize) -> Result<Region> {
    let mut out = Region::empty(2);
    for (i, j) in [(0usize, 1usize), (1, 0)] {
        let inner = one_coordinate_superlevel(j, family, &StepFunction::indicator(base), level, th, cap)?;
        let outer = one_coordinate_superlevel(i, family, &StepFunction::indicator(&inner), level, th, cap)?;
        out = out.union(&outer)?;
    }
    Ok(out)
}

/// Two-stage enlargement in the plane: dyadic one-coordinate operators give
/// `V₀`, the shifted family `D_d` applied to `V₀` gives `V`. The comparison is
/// `≥ 1−δ` by default so that shifted members covering a `1−δ` fraction count.
pub fn small_enlargement(u: &RectCollection, depth: u32, th: Threshold, cap: usize) -> Result<SmallEnlargement> {
    if u.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: u.dim() });
    }
    let sh = u.shadow();
    let shadow_measure = sh.measure();
    if shadow_measure.is_zero() {
        return Err(Error::InvalidParameter("collection has empty shadow".into()));
    }
    let level = Rational::one() - delta(depth);
    let v0 = two_stage(&sh, &AxisFamily::Dyadic, &level, th, cap)?.union(&sh)?;
    let v = two_stage(&v0, &AxisFamily::ShiftedUnion { depth }, &level, th, cap)?.union(&v0)?;
    let excess = v.measure() / &shadow_measure - Rational::one();
    Ok(SmallEnlargement { depth, v0, v, shadow_measure, excess })
}

/// `(R₁ ± δ|R₁|) × (R₂ ± δ|R₂|)` in the order `(+,+), (+,−), (−,+), (−,−)`.
pub fn dd_translates(r: &DyadicRect, depth: u32) -> Result<[Aabb; 4]> {
    if r.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: r.dim() });
    }
    let dl = delta(depth);
    let b = r.to_box();
    let shift = |s0: i64, s1: i64| {
        let t = [
            b.width(0) * &dl * Rational::from_integer(s0.into()),
            b.width(1) * &dl * Rational::from_integer(s1.into()),
        ];
        b.translate(&t)
    };
    Ok([shift(1, 1), shift(1, -1), shift(-1, 1), shift(-1, -1)])
}

/// Containment of the four translates in `V`, for a dyadic `R ⊂ V₀`.
pub fn dd_certificate(se: &SmallEnlargement, r: &DyadicRect) -> Result<[bool; 4]> {
    if !se.v0.contains_ae(&r.to_box()) {
        return Err(Error::InvalidParameter(format!("{r} is not contained in V0")));
    }
    let idx = se.v.index();
    Ok(dd_translates(r, se.depth)?.map(|t| idx.contains(&t)))
}

/// Result of the one-coordinate shifted enlargement of a shadow.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinateEnlargement {
    pub depth: u32,
    pub axis: usize,
    pub v: Region,
    #[serde(with = "serde_rational")]
    pub shadow_measure: Rational,
    #[serde(with = "serde_rational")]
    pub excess: Rational,
}

/// `V = {M^{D_d}_c 1_{sh U} ⋄ 1 − δ}`. Under strict comparison every shifted
/// member straddling an endpoint of `sh U` covers exactly `1 − δ` of itself.
pub fn small_enlargement_1d(
    u: &RectCollection,
    depth: u32,
    axis: usize,
    th: Threshold,
    cap: usize,
) -> Result<CoordinateEnlargement> {
    coordinate_enlargement(&u.shadow(), depth, axis, th, cap)
}

/// [`small_enlargement_1d`] for an arbitrary base region.
pub fn coordinate_enlargement(
    sh: &Region,
    depth: u32,
    axis: usize,
    th: Threshold,
    cap: usize,
) -> Result<CoordinateEnlargement> {
    if axis >= sh.dim() {
        return Err(Error::InvalidParameter(format!("axis {axis} out of range")));
    }
    let shadow_measure = sh.measure();
    if shadow_measure.is_zero() {
        return Err(Error::InvalidParameter("collection has empty shadow".into()));
    }
    let level = Rational::one() - delta(depth);
    let f = StepFunction::indicator(sh);
    let v = one_coordinate_superlevel(axis, &AxisFamily::ShiftedUnion { depth }, &f, &level, th, cap)?.union(sh)?;
    let excess = v.measure() / &shadow_measure - Rational::one();
    Ok(CoordinateEnlargement { depth, axis, v, shadow_measure, excess })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maximal::DEFAULT_CAP;
    use crate::num::{int, ratio};

    fn bx(lo: &[i64], hi: &[i64]) -> Aabb {
        Aabb::new(lo.iter().map(|&v| int(v)).collect(), hi.iter().map(|&v| int(v)).collect()).unwrap()
    }

    fn unit_square() -> RectCollection {
        RectCollection::new(2, [DyadicRect::from_pairs(&[(0, 0), (0, 0)])]).unwrap()
    }

    /// Largest `k/8` in a scan whose dilate fits, by direct region containment.
    fn scan(r: &Aabb, v: &Region, axes: &[usize], top: i64) -> Rational {
        let mut best = int(1);
        for k in 8..=top {
            let m = ratio(k, 8);
            let mut mu = vec![int(1); r.dim()];
            for &a in axes {
                mu[a] = m.clone();
            }
            if v.contains_ae(&r.dilate(&mu).unwrap()) {
                best = m;
            } else {
                break;
            }
        }
        best
    }

    #[test]
    fn staircase_enlargement() {
        let spec = EnlargementSpec::new(GridFamily::dyadic(2), ratio(1, 16), 1);
        let enl = enlarged_set(&unit_square(), &spec, DEFAULT_CAP).unwrap();
        let stairs: Vec<Aabb> = (0..=3).map(|a| bx(&[0, 0], &[1 << a, 1 << (3 - a)])).collect();
        assert_eq!(enl, Region::from_boxes(2, &stairs).unwrap());
        // The staircase starts at the origin, so any centered dilate escapes.
        let r = DyadicRect::from_pairs(&[(0, 0), (0, 0)]);
        assert_eq!(emb(&r, &EmbVariant::Uniform, &enl).unwrap().value, int(1));
        let zero = EnlargementSpec::new(GridFamily::dyadic(2), ratio(1, 16), 0);
        assert_eq!(enlarged_set(&unit_square(), &zero, DEFAULT_CAP).unwrap(), unit_square().shadow());
        let two = EnlargementSpec::new(GridFamily::dyadic(2), ratio(1, 2), 2);
        let e2 = enlarged_set(&unit_square(), &two, DEFAULT_CAP).unwrap();
        let three = EnlargementSpec { iterations: 3, ..two };
        assert!(enlarged_set(&unit_square(), &three, DEFAULT_CAP).unwrap().contains_region(&e2));
    }

    #[test]
    fn solver_breakpoints() {
        let r = DyadicRect::from_pairs(&[(0, 0), (0, 0)]);
        let v = Region::from_box(&bx(&[-1, -1], &[2, 2]));
        assert_eq!(emb(&r, &EmbVariant::Uniform, &v).unwrap().value, int(3));
        let strip = Region::from_box(&bx(&[-7, 0], &[8, 1]));
        let e = emb(&r, &EmbVariant::directional(0), &strip).unwrap();
        assert_eq!(e.value, int(15));
        assert_eq!(e.mu, vec![int(15), int(1)]);
        assert_eq!(emb(&r, &EmbVariant::Uniform, &Region::from_box(&r.to_box())).unwrap().value, int(1));
        let outside = Region::from_box(&bx(&[5, 5], &[6, 6]));
        assert!(matches!(emb(&r, &EmbVariant::Uniform, &outside), Err(Error::NotEmbedded)));
    }

    #[test]
    fn solver_matches_scan() {
        let v = Region::from_boxes(2, &[bx(&[-3, -1], &[5, 2]), bx(&[0, -4], &[2, 6]), bx(&[-1, 1], &[3, 3])]).unwrap();
        for r in [
            DyadicRect::from_pairs(&[(0, 0), (0, 0)]),
            DyadicRect::from_pairs(&[(-1, 1), (-1, 0)]),
            DyadicRect::from_pairs(&[(1, 0), (-2, 1)]),
        ] {
            let b = r.to_box();
            for (variant, axes) in [
                (EmbVariant::Uniform, vec![0, 1]),
                (EmbVariant::directional(0), vec![0]),
                (EmbVariant::directional(1), vec![1]),
            ] {
                let e = emb(&r, &variant, &v).unwrap();
                assert_eq!(e.value, scan(&b, &v, &axes, 400), "{r} {variant:?}");
            }
            let pair = emb(&r, &EmbVariant::ProductPair { first: 0, second: 1 }, &v).unwrap();
            let d0 = emb(&r, &EmbVariant::directional(0), &v).unwrap().value;
            let d1 = emb(&r, &EmbVariant::directional(1), &v).unwrap().value;
            assert!(pair.value >= d0 && pair.value >= d1);
            let solver = EmbSolver::new(&v);
            assert_eq!(solver.pair_bracket(&b, &pair), (true, true));
            // Brute force over the scan lattice for the pair objective.
            let mut best = int(1);
            for a in 8..=120 {
                for c in 8..=120 {
                    let mu = [ratio(a, 8), ratio(c, 8)];
                    if v.contains_ae(&b.dilate(&mu).unwrap()) && &mu[0] * &mu[1] > best {
                        best = &mu[0] * &mu[1];
                    }
                }
            }
            assert!(pair.value >= best);
        }
    }

    #[test]
    fn small_enlargement_certificate() {
        let se = small_enlargement(&unit_square(), 4, Threshold::AtLeast, DEFAULT_CAP).unwrap();
        assert!(se.v.contains_ae(&Aabb::unit(2)));
        assert!(se.excess >= Rational::zero());
        let cert = dd_certificate(&se, &DyadicRect::from_pairs(&[(0, 0), (0, 0)])).unwrap();
        assert_eq!(cert, [true; 4]);
        let mut prev: Option<Rational> = None;
        for depth in 2..=6 {
            let k = small_enlargement(&unit_square(), depth, Threshold::AtLeast, DEFAULT_CAP).unwrap().excess;
            if let Some(p) = &prev {
                assert!(&k <= p, "depth {depth}");
            }
            prev = Some(k);
        }
    }

    #[test]
    fn coordinate_enlargement_merges() {
        let u = RectCollection::new(
            2,
            [DyadicRect::from_pairs(&[(0, 0), (0, 0)]), DyadicRect::from_pairs(&[(0, 0), (0, 1)])],
        )
        .unwrap();
        let ce = small_enlargement_1d(&u, 3, 0, Threshold::AtLeast, DEFAULT_CAP).unwrap();
        assert!(ce.v.contains_region(&u.shadow()));
        assert!(ce.excess > Rational::zero());
        let single = small_enlargement_1d(&unit_square(), 3, 0, Threshold::AtLeast, DEFAULT_CAP).unwrap();
        assert_eq!(ce.excess, single.excess);
        let strict = small_enlargement_1d(&u, 3, 0, Threshold::Above, DEFAULT_CAP).unwrap();
        assert_eq!(strict.excess, Rational::zero());
        let mut prev: Option<Rational> = None;
        for depth in 2..=8 {
            let k = small_enlargement_1d(&u, depth, 1, Threshold::AtLeast, DEFAULT_CAP).unwrap().excess;
            if let Some(p) = &prev {
                assert!(&k <= p, "depth {depth}");
            }
            prev = Some(k);
        }
    }
}
