use std::collections::{BTreeMap, HashSet};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::embedding::{coordinate_enlargement, EmbSolver, EmbVariant};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, CoverIndex, DyadicInterval, DyadicRect, Interval, RectCollection, Region};
use crate::grids::ShiftedGridId;
use crate::maximal::Threshold;
use crate::num::{ceil_log2, floor_log2, pow2, pow_bracket, serde_rational, serde_rational_vec, Bracket, Rational};

/// A depth-one shifted interval `Γ ⊇ J` together with the range of `γ` for
/// which `(J ∪ ¼γJ) ⊂ Γ ⊂ γJ`.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Window {
    gamma: Interval,
    lo: Rational,
    hi: Rational,
}

/// Shifted depth-one intervals containing `j` that are admissible for some
/// `γ ∈ [1, g]`.
fn windows(j: &Interval, g: &Rational) -> Vec<Window> {
    let two = Rational::from_integer(2.into());
    let len = j.len();
    let c = (&j.lo + &j.hi) / &two;
    let h = &len / &two;
    let mut out = Vec::new();
    let (kmin, kmax) = (ceil_log2(&len), floor_log2(&(&len * g)));
    for grid in ShiftedGridId::all(1).expect("depth one") {
        for k in kmin..=kmax {
            for gam in grid.level_members(k, &j.lo, &j.hi) {
                if !gam.contains(j) {
                    continue;
                }
                let (l, r) = (&c - &gam.lo, &gam.hi - &c);
                let a = l.clone().max(r.clone()) / &h;
                let b = l.min(r) * Rational::from_integer(4.into()) / &h;
                if a <= b && &a <= g && b >= Rational::one() {
                    out.push(Window { gamma: Interval::new(a, b), lo: gam.lo, hi: gam.hi });
                }
            }
        }
    }
    out
}

/// Longest admissible window at `γ`, ties broken by the smaller left end.
fn widest<'a>(ws: &'a [Window], gamma: &Rational) -> Option<&'a Window> {
    ws.iter()
        .filter(|w| &w.gamma.lo <= gamma && gamma <= &w.gamma.hi)
        .max_by(|x, y| (&x.hi - &x.lo).cmp(&(&y.hi - &y.lo)).then_with(|| y.lo.cmp(&x.lo)))
}

/// `β^m_γ` on its candidate set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GammaProfile {
    /// 1-based stage.
    pub m: usize,
    #[serde(with = "serde_rational")]
    pub gamma_max: Rational,
    /// `(γ, β_γ)`, ascending in `γ`; `β` is `None` when the modified
    /// rectangle is not inside `V^m`.
    pub samples: Vec<(String, Option<String>)>,
    #[serde(with = "serde_rational")]
    pub gamma_bar: Rational,
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformMember {
    pub rect: DyadicRect,
    /// `β^1, …, β^d`.
    #[serde(with = "serde_rational_vec")]
    pub beta: Vec<Rational>,
    #[serde(with = "serde_rational")]
    pub emb: Rational,
    /// 0-based coordinate attaining the minimum.
    pub coordinate: usize,
    /// `emb · R ⊂ V`.
    pub contained: bool,
    pub profiles: Vec<GammaProfile>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub axis: usize,
    /// Size of the collection whose shadow was enlarged.
    pub base_members: usize,
    #[serde(with = "serde_rational")]
    pub base_measure: Rational,
    #[serde(with = "serde_rational")]
    pub v_measure: Rational,
    /// Members kept unchanged because no shifted interval was admissible.
    pub fallbacks: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformEmbedding {
    pub depth: u32,
    pub v: Region,
    pub stages: Vec<StageSummary>,
    #[serde(with = "serde_rational")]
    pub shadow_measure: Rational,
    /// `|V| / |sh U|`.
    #[serde(with = "serde_rational")]
    pub v_ratio: Rational,
    pub members: Vec<UniformMember>,
}

impl UniformEmbedding {
    pub fn containment_violations(&self) -> usize {
        self.members.iter().filter(|m| !m.contained).count()
    }

    pub fn monotonicity_violations(&self) -> usize {
        self.members.iter().flat_map(|m| &m.profiles).filter(|p| !p.monotone).count()
    }
}

struct Stage {
    solver: EmbSolver,
    index: CoverIndex,
}

/// The inductive construction: `V^m` enlarges `sh U^{m−1}` in coordinate `m`
/// with the shifted family of depth `depth`; `U^m` widens coordinate `m` of
/// each member to admissible depth-one shifted intervals; `emb` and the
/// minimizing coordinate come from the `β^m` recursion. `V = V^d`.
pub fn uniform_embed_construct(u: &RectCollection, depth: u32, cap: usize) -> Result<UniformEmbedding> {
    let d = u.dim();
    if d < 2 {
        return Err(Error::InvalidParameter("the uniform construction needs dimension at least 2".into()));
    }
    if u.is_empty() {
        return Err(Error::InvalidParameter("collection is empty".into()));
    }
    let shadow_measure = u.shadow().measure();
    let mut layer: Vec<Aabb> = u.boxes();
    let mut stages: Vec<Stage> = Vec::with_capacity(d);
    let mut summaries = Vec::with_capacity(d);
    let mut v_last = Region::empty(d);
    for a in 0..d {
        let sh = Region::from_boxes(d, &layer)?;
        let ce = coordinate_enlargement(&sh, depth, a, Threshold::AtLeast, cap)?;
        let solver = EmbSolver::new(&ce.v);
        let mut fallbacks = 0;
        let base_members = layer.len();
        if a + 1 < d {
            let mut seen = HashSet::new();
            let mut next = Vec::new();
            for x in &layer {
                let e = solver.emb(x, &EmbVariant::directional(a))?.value;
                let ws: Vec<Window> =
                    windows(&x.side(a), &e).into_iter().filter(|w| w.gamma.lo <= e && e <= w.gamma.hi).collect();
                let widened: Vec<Aabb> = if ws.is_empty() {
                    fallbacks += 1;
                    vec![x.clone()]
                } else {
                    ws.iter().map(|w| x.with_side(a, &Interval::new(w.lo.clone(), w.hi.clone()))).collect()
                };
                for b in widened {
                    if seen.insert(b.clone()) {
                        next.push(b);
                    }
                }
            }
            layer = next;
        }
        summaries.push(StageSummary {
            axis: a,
            base_members,
            base_measure: sh.measure(),
            v_measure: ce.v.measure(),
            fallbacks,
        });
        stages.push(Stage { solver, index: ce.v.index() });
        v_last = ce.v;
    }
    let sixteen = Rational::from_integer(16.into());
    let mut members = Vec::with_capacity(u.len());
    for r in u {
        let b = r.to_box();
        let mut beta = vec![stages[0].solver.emb(&b, &EmbVariant::directional(0))?.value];
        let mut profiles = Vec::new();
        for m in 1..d {
            let gmax = beta.iter().min().expect("nonempty").clone();
            let ws: Vec<Vec<Window>> = (0..m).map(|j| windows(&b.side(j), &gmax)).collect();
            let eval = |g: &Rational| -> Option<Rational> {
                let mut phi = b.clone();
                for (j, w) in ws.iter().enumerate() {
                    if let Some(w) = widest(w, g) {
                        phi = phi.with_side(j, &Interval::new(w.lo.clone(), w.hi.clone()));
                    }
                }
                stages[m].solver.emb(&phi, &EmbVariant::directional(m)).ok().map(|e| e.value)
            };
            let in_range = |g: &Rational| g >= &Rational::one() && g <= &gmax;
            let mut cands: Vec<Rational> = vec![Rational::one(), gmax.clone()];
            for w in ws.iter().flatten() {
                cands.extend([w.gamma.lo.clone(), w.gamma.hi.clone()].into_iter().filter(|g| in_range(g)));
            }
            cands.sort();
            cands.dedup();
            let mut samples: BTreeMap<Rational, Option<Rational>> =
                cands.iter().map(|g| (g.clone(), eval(g))).collect();
            let attained: Vec<Rational> = samples.values().flatten().filter(|v| in_range(v)).cloned().collect();
            for g in attained {
                samples.entry(g.clone()).or_insert_with(|| eval(&g));
            }
            let gamma_bar = samples
                .iter()
                .filter(|(g, v)| v.as_ref().is_some_and(|v| v >= *g))
                .map(|(g, _)| g.clone())
                .next_back()
                .unwrap_or_else(Rational::one);
            let beta_m = samples
                .get(&gamma_bar)
                .cloned()
                .flatten()
                .ok_or_else(|| Error::NoWitness(format!("{r}: no admissible γ at stage {}", m + 1)))?;
            let zero = Rational::zero();
            let monotone = samples
                .values()
                .map(|v| v.as_ref().unwrap_or(&zero))
                .collect::<Vec<_>>()
                .windows(2)
                .all(|w| w[0] >= w[1]);
            profiles.push(GammaProfile {
                m: m + 1,
                gamma_max: gmax,
                samples: samples
                    .iter()
                    .map(|(g, v)| (crate::num::fmt_rational(g), v.as_ref().map(crate::num::fmt_rational)))
                    .collect(),
                gamma_bar,
                monotone,
            });
            beta.push(beta_m);
        }
        let (coordinate, min_beta) =
            beta.iter().enumerate().min_by(|x, y| x.1.cmp(y.1).then(x.0.cmp(&y.0))).expect("nonempty");
        let emb = (min_beta / &sixteen).max(Rational::one());
        let contained = stages[d - 1].index.contains(&b.scale(&emb)?);
        members.push(UniformMember { rect: r.clone(), beta: beta.clone(), emb, coordinate, contained, profiles });
    }
    let v_ratio = v_last.measure() / &shadow_measure;
    Ok(UniformEmbedding { depth, v: v_last, stages: summaries, shadow_measure, v_ratio, members })
}

/// `Σ_j Σ_v Σ_I 2^{−(d+ε)v} |F(I,j,v,U′)|` against `|sh U′|`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformSum {
    #[serde(with = "serde_rational")]
    pub epsilon: Rational,
    pub n_sets: usize,
    #[serde(with = "serde_rational")]
    pub sum_lower: Rational,
    #[serde(with = "serde_rational")]
    pub sum_upper: Rational,
    #[serde(with = "serde_rational")]
    pub shadow: Rational,
    #[serde(with = "serde_rational")]
    pub ratio_upper: Rational,
}

/// Bucket `v` with `2^v < emb ≤ 2^{v+1}`; `emb = 1` goes to `v = 0`.
pub fn uniform_bucket(emb: &Rational) -> i64 {
    (ceil_log2(emb) - 1).max(0)
}

pub fn uniform_f_sum(ue: &UniformEmbedding, sub: &RectCollection, epsilon: &Rational) -> Result<UniformSum> {
    if epsilon <= &Rational::zero() {
        return Err(Error::InvalidParameter(format!("ε = {epsilon} must be positive")));
    }
    let by_rect: std::collections::HashMap<&DyadicRect, &UniformMember> =
        ue.members.iter().map(|m| (&m.rect, m)).collect();
    let mut groups: BTreeMap<(usize, DyadicInterval, i64), Vec<Aabb>> = BTreeMap::new();
    for r in sub {
        let m = by_rect
            .get(r)
            .ok_or_else(|| Error::InvalidParameter(format!("{r} is not a member of the constructed collection")))?;
        let key = (m.coordinate, r.sides[m.coordinate], uniform_bucket(&m.emb));
        groups.entry(key).or_default().push(r.to_box());
    }
    let exp = -(Rational::from_integer((sub.dim() as i64).into()) + epsilon);
    let mut sum = Bracket::exact(Rational::zero());
    for ((_, _, v), boxes) in &groups {
        let measure = Region::from_boxes(sub.dim(), boxes)?.measure();
        sum = sum.add(&pow_bracket(&pow2(*v), &exp).scale_nonneg(&measure));
    }
    let shadow = sub.shadow().measure();
    let ratio_upper = if shadow.is_zero() { Rational::zero() } else { &sum.hi / &shadow };
    Ok(UniformSum {
        epsilon: epsilon.clone(),
        n_sets: groups.len(),
        sum_lower: sum.lo,
        sum_upper: sum.hi,
        shadow,
        ratio_upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maximal::DEFAULT_CAP;
    use crate::num::{int, ratio};

    #[test]
    fn windows_of_the_unit_interval() {
        let j = Interval::new(int(0), int(1));
        let ws = windows(&j, &int(8));
        // [−2/3, 4/3) is admissible for γ ∈ [7/3, 20/3].
        let w = ws.iter().find(|w| w.lo == ratio(-2, 3)).unwrap();
        assert_eq!((w.gamma.lo.clone(), w.gamma.hi.clone()), (ratio(7, 3), ratio(20, 3)));
        for w in &ws {
            let g = &w.gamma.lo;
            let gj = Interval::new(ratio(1, 2) - g / int(2), ratio(1, 2) + g / int(2));
            let q = Interval::new(ratio(1, 2) - g / int(8), ratio(1, 2) + g / int(8));
            let gam = Interval::new(w.lo.clone(), w.hi.clone());
            assert!(gj.contains(&gam) && gam.contains(&q) && gam.contains(&j));
        }
        assert!(widest(&ws, &int(1)).is_none());
    }

    #[test]
    fn bucket_convention() {
        assert_eq!(uniform_bucket(&int(1)), 0);
        assert_eq!(uniform_bucket(&int(2)), 0);
        assert_eq!(uniform_bucket(&ratio(5, 2)), 1);
        assert_eq!(uniform_bucket(&int(4)), 1);
    }

    #[test]
    fn single_rectangle_certificates() {
        let u = RectCollection::new(3, [DyadicRect::from_pairs(&[(0, 0), (0, 0), (0, 0)])]).unwrap();
        let ue = uniform_embed_construct(&u, 2, DEFAULT_CAP).unwrap();
        let m = &ue.members[0];
        assert!(m.emb >= int(1));
        assert!(m.contained);
        assert_eq!(ue.monotonicity_violations(), 0);
        assert!(ue.v.contains_region(&u.shadow()));
        let s = uniform_f_sum(&ue, &u, &ratio(1, 2)).unwrap();
        assert_eq!(s.n_sets, 1);
        assert!(s.ratio_upper <= int(1));
    }

    #[test]
    fn two_dimensional_staircase() {
        let u = RectCollection::new(2, (0..3).map(|a| DyadicRect::from_pairs(&[(a, 0), (2 - a, 0)]))).unwrap();
        let ue = uniform_embed_construct(&u, 2, DEFAULT_CAP).unwrap();
        assert_eq!(ue.containment_violations(), 0);
        assert_eq!(ue.monotonicity_violations(), 0);
        assert!(ue.v_ratio >= int(1));
    }
}
