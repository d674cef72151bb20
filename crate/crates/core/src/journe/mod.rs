//! Covering-lemma verifiers: scale separation, the standard reduction,
//! Journé-type sums, packing, and the constructive decompositions.

mod few;
mod goodbad;
mod uniform;

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbSolver, EmbSpec, EmbVariant, Embedding, EnlargedSource, EnlargementSpec};
use crate::error::{Error, Result};
use crate::geometry::{DyadicInterval, DyadicRect, RectCollection, Region};
use crate::grids::GridFamily;
use crate::num::{ceil_log2, pow2, pow_bracket, ratio, serde_rational, Bracket, Rational};

pub use few::{f_sets, pipher_sum, FSet, LpReport, PipherReport};
pub use goodbad::{
    bb_empty_check, good_bad_decompose, replay, BbReport, GoodBadResult, GoodBadTrace, SelectionOrder, TraceStep,
};
pub use uniform::{uniform_embed_construct, uniform_f_sum, GammaProfile, UniformEmbedding, UniformMember, UniformSum};

/// Partition by per-coordinate scale residues modulo `m = ⌈log₂ μ⌉ + 1`, so
/// that distinct side lengths within a class differ by a factor `≥ 2^m > μ`.
pub fn scale_separate(u: &RectCollection, mu: &Rational) -> Result<Vec<RectCollection>> {
    if mu <= &Rational::one() {
        return Err(Error::InvalidParameter(format!("separation factor {mu} must exceed 1")));
    }
    let m = ceil_log2(mu) + 1;
    let mut classes: BTreeMap<Vec<i64>, Vec<DyadicRect>> = BTreeMap::new();
    for r in u {
        let key = r.sides.iter().map(|s| (s.scale as i64).rem_euclid(m)).collect();
        classes.entry(key).or_default().push(r.clone());
    }
    classes.into_values().map(|rs| RectCollection::new(u.dim(), rs)).collect()
}

/// Number of residue classes per coordinate used by [`scale_separate`].
pub fn residue_modulus(mu: &Rational) -> i64 {
    ceil_log2(mu) + 1
}

/// `10^{3d} μ`.
pub fn default_separation(dim: usize, mu: &Rational) -> Rational {
    Rational::from_integer(num_traits::pow(num_bigint::BigInt::from(10), 3 * dim)) * mu
}

/// Members with `μ ≤ emb ≤ 2μ`, scale separated by `separation`.
pub fn standard_reduction(
    u: &RectCollection,
    spec: &EmbSpec,
    mu: &Rational,
    separation: &Rational,
    cap: usize,
) -> Result<Vec<RectCollection>> {
    if mu < &Rational::one() {
        return Err(Error::InvalidParameter(format!("μ = {mu} must be at least 1")));
    }
    if u.is_empty() {
        return Ok(Vec::new());
    }
    let v = spec.enlarged(u, cap)?;
    let solver = EmbSolver::new(&v);
    let two_mu = mu * Rational::from_integer(2.into());
    let mut kept = Vec::new();
    for r in u {
        let e = solver.emb(&r.to_box(), &spec.variant)?;
        if &e.value >= mu && e.value <= two_mu {
            kept.push(r.clone());
        }
    }
    let kept = RectCollection::new(u.dim(), kept)?;
    Ok(scale_separate(&kept, separation)?.into_iter().filter(|c| !c.is_empty()).collect())
}

/// The embeddedness sums being verified.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JourneVariant {
    /// First-coordinate dilation, dyadic enlargement at `λ = 1/2`.
    Classic,
    /// Uniform dilation at `λ = 1/16`.
    Uniform,
    /// Independent dilations of the first two coordinates at `λ = 1/16`.
    Redux,
    /// `Π_{j<d−1} emb_j^{−ε}` at `λ = 1/(2d)`.
    PipherRect,
}

impl JourneVariant {
    pub const ALL: [JourneVariant; 4] =
        [JourneVariant::Classic, JourneVariant::Uniform, JourneVariant::Redux, JourneVariant::PipherRect];

    pub fn name(&self) -> &'static str {
        match self {
            JourneVariant::Classic => "classic",
            JourneVariant::Uniform => "uniform",
            JourneVariant::Redux => "redux",
            JourneVariant::PipherRect => "pipher-rect",
        }
    }

    pub fn requires_incomparable(&self) -> bool {
        !matches!(self, JourneVariant::Uniform)
    }

    pub fn lambda(&self, dim: usize) -> Rational {
        match self {
            JourneVariant::Classic => ratio(1, 2),
            JourneVariant::Uniform | JourneVariant::Redux => ratio(1, 16),
            JourneVariant::PipherRect => ratio(1, 2 * dim as i64),
        }
    }

    /// One application of the dyadic strong maximal operator.
    pub fn default_source(&self, dim: usize) -> EnlargedSource {
        EnlargedSource::Enlarge(EnlargementSpec::new(GridFamily::dyadic(dim), self.lambda(dim), 1))
    }

    /// The embeddedness values multiplied together in the weight.
    pub fn emb_variants(&self, dim: usize) -> Result<Vec<EmbVariant>> {
        if dim < 2 {
            return Err(Error::InvalidParameter("Journé sums need dimension at least 2".into()));
        }
        Ok(match self {
            JourneVariant::Classic => vec![EmbVariant::directional(0)],
            JourneVariant::Uniform => vec![EmbVariant::Uniform],
            JourneVariant::Redux => vec![EmbVariant::ProductPair { first: 0, second: 1 }],
            JourneVariant::PipherRect => (0..dim - 1).map(EmbVariant::directional).collect(),
        })
    }
}

impl std::str::FromStr for JourneVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        JourneVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown variant {s:?}")))
    }
}

impl std::fmt::Display for JourneVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `Σ_{R∈U′} w(R)|R|` against `|sh U′|`, with `w` a product of `emb^{−ε}` terms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JourneReport {
    pub variant: JourneVariant,
    #[serde(with = "serde_rational")]
    pub epsilon: Rational,
    pub n_rects: usize,
    #[serde(with = "serde_rational")]
    pub lhs_lower: Rational,
    #[serde(with = "serde_rational")]
    pub lhs_upper: Rational,
    #[serde(with = "serde_rational")]
    pub shadow: Rational,
    /// `lhs_upper / shadow`, zero for an empty collection.
    #[serde(with = "serde_rational")]
    pub ratio_upper: Rational,
}

/// Embeddedness of an ambient collection against its enlarged set, computed
/// once and reused for every sub-collection.
#[derive(Clone, Debug)]
pub struct JourneContext {
    variant: JourneVariant,
    epsilon: Rational,
    ambient: RectCollection,
    enlarged: Region,
    embeddings: HashMap<DyadicRect, Vec<Embedding>>,
    weights: HashMap<DyadicRect, Bracket>,
}

impl JourneContext {
    pub fn new(
        ambient: &RectCollection,
        variant: JourneVariant,
        source: Option<EnlargedSource>,
        epsilon: &Rational,
        cap: usize,
    ) -> Result<Self> {
        if !epsilon.is_positive() {
            return Err(Error::InvalidParameter(format!("ε = {epsilon} must be positive")));
        }
        let d = ambient.dim();
        let variants = variant.emb_variants(d)?;
        let source = source.unwrap_or_else(|| variant.default_source(d));
        let enlarged = EmbSpec::new(variants[0].clone(), source).enlarged(ambient, cap)?;
        let solver = EmbSolver::new(&enlarged);
        let mut embeddings = HashMap::new();
        let mut weights = HashMap::new();
        let neg = -epsilon.clone();
        for r in ambient {
            let b = r.to_box();
            let es = variants.iter().map(|v| solver.emb(&b, v)).collect::<Result<Vec<_>>>()?;
            let w =
                es.iter().fold(Bracket::exact(Rational::one()), |acc, e| acc.mul_nonneg(&pow_bracket(&e.value, &neg)));
            weights.insert(r.clone(), w);
            embeddings.insert(r.clone(), es);
        }
        Ok(Self { variant, epsilon: epsilon.clone(), ambient: ambient.clone(), enlarged, embeddings, weights })
    }

    pub fn variant(&self) -> JourneVariant {
        self.variant
    }

    pub fn ambient(&self) -> &RectCollection {
        &self.ambient
    }

    pub fn enlarged(&self) -> &Region {
        &self.enlarged
    }

    pub fn embedding(&self, r: &DyadicRect) -> Option<&[Embedding]> {
        self.embeddings.get(r).map(Vec::as_slice)
    }

    pub fn weight(&self, r: &DyadicRect) -> Option<&Bracket> {
        self.weights.get(r)
    }

    pub fn sum(&self, sub: &RectCollection) -> Result<JourneReport> {
        if sub.dim() != self.ambient.dim() {
            return Err(Error::DimensionMismatch { expected: self.ambient.dim(), got: sub.dim() });
        }
        if self.variant.requires_incomparable() {
            sub.require_incomparable()?;
        }
        let mut lhs = Bracket::exact(Rational::zero());
        for r in sub {
            let w = self
                .weights
                .get(r)
                .ok_or_else(|| Error::InvalidParameter(format!("{r} is not a member of the ambient collection")))?;
            lhs = lhs.add(&w.scale_nonneg(&r.area()));
        }
        let shadow = sub.shadow().measure();
        let ratio_upper = if shadow.is_zero() { Rational::zero() } else { &lhs.hi / &shadow };
        Ok(JourneReport {
            variant: self.variant,
            epsilon: self.epsilon.clone(),
            n_rects: sub.len(),
            lhs_lower: lhs.lo,
            lhs_upper: lhs.hi,
            shadow,
            ratio_upper,
        })
    }
}

/// One-shot [`JourneContext::sum`].
pub fn journe_sum(
    sub: &RectCollection,
    variant: JourneVariant,
    source: Option<EnlargedSource>,
    epsilon: &Rational,
    ambient: &RectCollection,
    cap: usize,
) -> Result<JourneReport> {
    JourneContext::new(ambient, variant, source, epsilon, cap)?.sum(sub)
}

/// The packing inequality for `E(I,k) = {I×J ∈ U′ : Dil_{(2^k,1)}(I×J) ⊂ sh U}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingReport {
    pub interval: DyadicInterval,
    pub k: u32,
    pub members: Vec<DyadicRect>,
    #[serde(with = "serde_rational")]
    pub area_sum: Rational,
    /// `2 |sh E(I,k)|`.
    #[serde(with = "serde_rational")]
    pub bound: Rational,
    pub pass: bool,
}

pub fn packing_check(u: &RectCollection, i: &DyadicInterval, k: u32, ambient_shadow: &Region) -> Result<PackingReport> {
    if u.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: u.dim() });
    }
    u.require_incomparable()?;
    let index = ambient_shadow.index();
    let factor = vec![pow2(k as i64), Rational::one()];
    let mut members = Vec::new();
    for r in u.iter().filter(|r| r.sides[0] == *i) {
        if index.contains(&r.to_box().dilate(&factor)?) {
            members.push(r.clone());
        }
    }
    let e = RectCollection::new(2, members.iter().cloned())?;
    let area_sum = e.total_area();
    let bound = e.shadow().measure() * Rational::from_integer(2.into());
    let pass = area_sum <= bound;
    Ok(PackingReport { interval: *i, k, members, area_sum, bound, pass })
}

/// [`packing_check`] for every first side of `u` and every `k` up to the
/// first empty `E(I,k)`.
pub fn packing_suite(u: &RectCollection, ambient_shadow: &Region) -> Result<Vec<PackingReport>> {
    let mut firsts: Vec<DyadicInterval> = u.iter().map(|r| r.sides[0]).collect();
    firsts.sort();
    firsts.dedup();
    let mut out = Vec::new();
    for i in firsts {
        for k in 0.. {
            let rep = packing_check(u, &i, k, ambient_shadow)?;
            let done = rep.members.is_empty();
            out.push(rep);
            if done || k >= 62 {
                break;
            }
        }
    }
    Ok(out)
}

/// `min_R |R \ ∪(G − {R})| / |R|`; `1` for an empty collection.
pub fn essential_disjointness(g: &RectCollection) -> Rational {
    let boxes = g.boxes();
    let mut best = Rational::one();
    for (i, b) in boxes.iter().enumerate() {
        let others: Vec<_> =
            boxes.iter().enumerate().filter(|(k, o)| *k != i && o.overlaps(b)).map(|(_, o)| o.intersect(b)).collect();
        let covered = Region::from_boxes(g.dim(), &others).expect("uniform dimension").measure();
        let private = (b.volume() - covered) / b.volume();
        if private < best {
            best = private;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maximal::DEFAULT_CAP;
    use crate::num::int;

    fn rect(pairs: &[(i32, i64)]) -> DyadicRect {
        DyadicRect::from_pairs(pairs)
    }

    #[test]
    fn scale_classes() {
        let u = RectCollection::new(2, [rect(&[(0, 0), (0, 0)]), rect(&[(1, 0), (0, 0)]), rect(&[(2, 0), (0, 0)])])
            .unwrap();
        let classes = scale_separate(&u, &int(4)).unwrap();
        assert_eq!(residue_modulus(&int(4)), 3);
        assert_eq!(classes.len(), 3);
        let v = RectCollection::new(2, [rect(&[(0, 0), (0, 0)]), rect(&[(2, 0), (0, 0)])]).unwrap();
        assert_eq!(scale_separate(&v, &int(2)).unwrap().len(), 1);
        let same = RectCollection::new(2, [rect(&[(0, 0), (0, 0)]), rect(&[(0, 1), (0, 3)])]).unwrap();
        assert_eq!(scale_separate(&same, &int(5)).unwrap().len(), 1);
        assert!(scale_separate(&same, &int(1)).is_err());
    }

    #[test]
    fn separated_classes_have_large_gaps() {
        let u = RectCollection::new(2, (0..6).flat_map(|a| (0..4).map(move |b| rect(&[(a, 0), (b - 2, 1)])))).unwrap();
        let mu = int(3);
        for class in scale_separate(&u, &mu).unwrap() {
            for j in 0..2 {
                let mut scales: Vec<i32> = class.iter().map(|r| r.sides[j].scale).collect();
                scales.sort();
                scales.dedup();
                for w in scales.windows(2) {
                    assert!(pow2((w[1] - w[0]) as i64) > mu);
                }
            }
        }
    }

    #[test]
    fn reduction_keeps_the_bucket() {
        let r = rect(&[(0, 0), (0, 0)]);
        let u = RectCollection::new(2, [r.clone()]).unwrap();
        let v = Region::from_box(&r.to_box().scale(&int(3)).unwrap());
        let spec = EmbSpec::new(EmbVariant::Uniform, EnlargedSource::Region(v));
        let out = standard_reduction(&u, &spec, &int(3), &default_separation(2, &int(3)), DEFAULT_CAP).unwrap();
        assert_eq!(out, vec![u.clone()]);
        assert!(standard_reduction(&u, &spec, &int(7), &int(100), DEFAULT_CAP).unwrap().is_empty());
    }

    #[test]
    fn unit_square_sum_is_one() {
        let u = RectCollection::new(2, [rect(&[(0, 0), (0, 0)])]).unwrap();
        for variant in JourneVariant::ALL {
            let src = EnlargedSource::Region(u.shadow());
            let rep = journe_sum(&u, variant, Some(src), &ratio(1, 2), &u, DEFAULT_CAP).unwrap();
            assert_eq!((rep.lhs_lower.clone(), rep.lhs_upper.clone()), (int(1), int(1)), "{variant}");
            assert_eq!(rep.shadow, int(1));
            assert_eq!(rep.ratio_upper, int(1));
        }
    }

    #[test]
    fn incomparability_is_enforced() {
        let u = RectCollection::new(2, [rect(&[(0, 0), (0, 0)]), rect(&[(1, 0), (1, 0)])]).unwrap();
        let err = journe_sum(&u, JourneVariant::Classic, None, &ratio(1, 2), &u, DEFAULT_CAP).unwrap_err();
        assert!(matches!(err, Error::NotIncomparable(1, 0)));
        assert!(journe_sum(&u, JourneVariant::Uniform, None, &ratio(1, 2), &u, DEFAULT_CAP).is_ok());
    }

    #[test]
    fn staircase_matches_scan() {
        // Incomparable staircase [0,2^a)×[0,2^{2-a}).
        let u = RectCollection::new(2, (0..3).map(|a| rect(&[(a, 0), (2 - a, 0)]))).unwrap();
        let eps = ratio(1, 2);
        let ctx = JourneContext::new(&u, JourneVariant::Classic, None, &eps, DEFAULT_CAP).unwrap();
        let v = ctx.enlarged().clone();
        let mut lo = Rational::zero();
        for r in &u {
            // Scan μ over a 1/8 grid for the first-coordinate dilation.
            let b = r.to_box();
            let mut best = Rational::one();
            let mut m = Rational::one();
            while m <= int(64) {
                if v.contains_ae(&b.dilate(&[m.clone(), int(1)]).unwrap()) {
                    best = m.clone();
                }
                m += ratio(1, 8);
            }
            let e = &ctx.embedding(r).unwrap()[0].value;
            assert!(e >= &best && e < &(best.clone() + ratio(1, 8)), "{r}: {e} vs scan {best}");
            lo += pow_bracket(e, &-eps.clone()).lo * r.area();
        }
        let rep = ctx.sum(&u).unwrap();
        assert_eq!(rep.lhs_lower, lo);
        assert!(rep.lhs_upper >= rep.lhs_lower);
        assert_eq!(rep.shadow, int(8));
    }

    #[test]
    fn subsets_are_monotone() {
        let u = RectCollection::new(2, (0..4).map(|a| rect(&[(a, 0), (3 - a, 0)]))).unwrap();
        let ctx = JourneContext::new(&u, JourneVariant::Uniform, None, &ratio(1, 2), DEFAULT_CAP).unwrap();
        let all = ctx.sum(&u).unwrap();
        let some = ctx.sum(&u.subset(&[0, 2])).unwrap();
        assert!(some.lhs_upper <= all.lhs_upper);
    }

    #[test]
    fn packing_on_shared_first_sides() {
        let i = DyadicInterval::new(0, 0);
        let u = RectCollection::new(2, [rect(&[(0, 0), (0, 0)]), rect(&[(0, 0), (0, 1)]), rect(&[(1, 1), (2, 0)])])
            .unwrap();
        let sh = u.shadow();
        let rep = packing_check(&u, &i, 0, &sh).unwrap();
        assert_eq!(rep.members.len(), 2);
        assert_eq!(rep.area_sum * int(2), rep.bound);
        assert!(rep.pass);
        let empty = packing_check(&u, &DyadicInterval::new(5, 3), 0, &sh).unwrap();
        assert!(empty.members.is_empty() && empty.pass && empty.bound.is_zero());
        assert!(packing_suite(&u, &sh).unwrap().iter().all(|r| r.pass));
    }

    #[test]
    fn disjointness_extremes() {
        let a = rect(&[(0, 0), (0, 0)]);
        let u = RectCollection::new(2, [a.clone(), rect(&[(0, 1), (0, 0)])]).unwrap();
        assert_eq!(essential_disjointness(&u), int(1));
        let v = RectCollection::new(2, [a.clone(), rect(&[(1, 0), (-1, 0)])]).unwrap();
        assert_eq!(essential_disjointness(&v), ratio(1, 2));
    }
}
