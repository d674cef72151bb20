//! Product Haar coefficients and product BMO norms of dyadic step functions.
//!
//! `h = −1_{[−1/2,0)} + 1_{[0,1/2)}` and `h_I(x) = h((x − c(I))/|I|)`, so
//! `h_I` is `−1` on the left half of `I`, `+1` on the right half, and
//! `⟨h_I, h_I⟩ = |I|`. No `L²` normalization is applied anywhere.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::carleson::{cm_norm, cm_rec_norm, cm_restricted_ratio, CarlesonWeight, CmMode, CmReport};
use crate::embedding::EmbSpec;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, DyadicInterval, DyadicRect, RectCollection};
use crate::maximal::StepFunction;
use crate::num::{nth_root_bracket, serde_rational, DyadicRational, Rational};

/// Enumeration limit on candidate rectangles when computing a spectrum.
pub const SPECTRUM_CANDIDATE_LIMIT: usize = 1 << 20;

/// The `2^d` sub-rectangles of `r` with the sign of `h_R` on each.
fn signed_children(r: &DyadicRect) -> Vec<(Aabb, bool)> {
    let d = r.dim();
    (0..1usize << d)
        .map(|mask| {
            let sides: Vec<_> = (0..d).map(|j| r.sides[j].children()[mask >> j & 1].interval()).collect();
            // bit j set: right half in coordinate j
            (Aabb::from_intervals(&sides), (d - mask.count_ones() as usize).is_multiple_of(2))
        })
        .collect()
}

/// `h_R` as a signed step function.
pub fn haar_function(r: &DyadicRect) -> StepFunction {
    let terms =
        signed_children(r).into_iter().map(|(b, pos)| (b, if pos { Rational::one() } else { -Rational::one() }));
    StepFunction::from_signed_sum(r.dim(), terms).expect("children share the dimension")
}

/// `Σ c_R h_R`.
pub fn haar_sum(dim: usize, coeffs: &[(DyadicRect, Rational)]) -> Result<StepFunction> {
    let mut terms = Vec::new();
    for (r, c) in coeffs {
        if r.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: r.dim() });
        }
        for (b, pos) in signed_children(r) {
            terms.push((b, if pos { c.clone() } else { -c }));
        }
    }
    StepFunction::from_signed_sum(dim, terms)
}

/// `⟨b, h_R⟩ = ∫ b h_R`.
pub fn haar_coeff(b: &StepFunction, r: &DyadicRect) -> Result<Rational> {
    if b.dim() != r.dim() {
        return Err(Error::DimensionMismatch { expected: b.dim(), got: r.dim() });
    }
    Ok(signed_children(r)
        .iter()
        .map(|(c, pos)| {
            let v = b.integral_over(c);
            if *pos {
                v
            } else {
                -v
            }
        })
        .sum())
}

/// Nonzero Haar coefficients of a step function.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HaarSpectrum {
    pub dim: usize,
    #[serde(with = "crate::carleson::serde_entries")]
    pub coefficients: Vec<(DyadicRect, Rational)>,
    /// True when no coefficient outside the enumerated range can be nonzero,
    /// i.e. `∫ b dx_j` vanishes on both half-lines `x_j < 0`, `x_j ≥ 0`.
    pub complete: bool,
}

impl HaarSpectrum {
    /// `α(R) = ⟨b, h_R⟩²`.
    pub fn energy_weight(&self) -> CarlesonWeight {
        CarlesonWeight::new(self.dim, self.coefficients.iter().map(|(r, c)| (r.clone(), c * c)))
            .expect("same dimension")
    }

    pub fn support(&self) -> RectCollection {
        RectCollection::new(self.dim, self.coefficients.iter().map(|(r, _)| r.clone())).expect("same dimension")
    }
}

/// Scale `s` with every breakpoint of `b` along `axis` a multiple of `2^s`, or
/// `None` for a function constant along `axis`.
fn breakpoint_scale(b: &StepFunction, axis: usize) -> Result<Option<i64>> {
    let mut s: Option<i64> = None;
    for p in b.pieces() {
        for x in [&p.boxed.lo()[axis], &p.boxed.hi()[axis]] {
            if x.is_zero() {
                continue;
            }
            let dy = DyadicRational::from_rational(x).ok_or_else(|| Error::NonDyadicBreakpoint(x.to_string()))?;
            s = Some(s.map_or(dy.exponent(), |t| t.min(dy.exponent())));
        }
    }
    Ok(s)
}

/// `∫_{x_j ∈ H} b dx_j ≡ 0` for both half-lines `H`.
fn marginals_vanish(b: &StepFunction, axis: usize) -> Result<bool> {
    let d = b.dim();
    let zero = Rational::zero();
    for neg in [true, false] {
        let mut terms = Vec::new();
        let mut scalar = Rational::zero();
        for p in b.pieces() {
            let (lo, hi) = (&p.boxed.lo()[axis], &p.boxed.hi()[axis]);
            let (lo, hi) = if neg {
                (lo.clone(), hi.clone().min(zero.clone()))
            } else {
                (lo.clone().max(zero.clone()), hi.clone())
            };
            if lo >= hi {
                continue;
            }
            let mass = &p.value * (hi - lo);
            if d == 1 {
                scalar += mass;
            } else {
                let keep =
                    |v: &[Rational]| v.iter().enumerate().filter(|(j, _)| *j != axis).map(|(_, x)| x.clone()).collect();
                terms.push((Aabb::new(keep(p.boxed.lo()), keep(p.boxed.hi()))?, mass));
            }
        }
        let vanishes = if d == 1 { scalar.is_zero() } else { StepFunction::from_signed_sum(d - 1, terms)?.is_zero() };
        if !vanishes {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Dyadic intervals of scales `lo..=hi` meeting `[a, b)`.
fn intervals_meeting(a: &Rational, b: &Rational, lo: i64, hi: i64) -> Vec<DyadicInterval> {
    let mut out = Vec::new();
    for t in lo..=hi {
        let len = crate::num::pow2(t);
        let first = (a / &len).floor().to_integer();
        let last = (b / &len).ceil().to_integer();
        let mut k = first;
        while k < last {
            out.push(DyadicInterval::new(t as i32, i64::try_from(&k).expect("offset fits")));
            k += 1;
        }
    }
    out
}

/// Per-axis candidate sides: scales above the breakpoint resolution (a side at
/// or below it lies in one cell, where `b` is constant along that axis) and up
/// to the first scale with the support inside `[−2^T, 2^T)`.
fn candidate_sides(b: &StepFunction) -> Result<Option<Vec<Vec<DyadicInterval>>>> {
    let Some(bb) = b.support().bounding_box() else { return Ok(None) };
    let mut lists = Vec::new();
    for j in 0..b.dim() {
        let Some(s) = breakpoint_scale(b, j)? else { return Ok(None) };
        let extent = bb.lo()[j].abs().max(bb.hi()[j].abs());
        let top = crate::num::ceil_log2(&extent).max(s + 1);
        lists.push(intervals_meeting(&bb.lo()[j], &bb.hi()[j], s + 1, top));
    }
    Ok(Some(lists))
}

pub fn spectrum(b: &StepFunction) -> Result<HaarSpectrum> {
    let d = b.dim();
    let mut complete = true;
    for j in 0..d {
        complete &= marginals_vanish(b, j)?;
    }
    let Some(lists) = candidate_sides(b)? else {
        return Ok(HaarSpectrum { dim: d, coefficients: Vec::new(), complete });
    };
    let count = lists.iter().try_fold(1usize, |acc, l| acc.checked_mul(l.len())).unwrap_or(usize::MAX);
    if count > SPECTRUM_CANDIDATE_LIMIT {
        return Err(Error::CapExceeded { count, cap: SPECTRUM_CANDIDATE_LIMIT });
    }
    let mut coefficients = Vec::new();
    let mut idx = vec![0usize; d];
    'outer: loop {
        let r = DyadicRect::new((0..d).map(|j| lists[j][idx[j]]).collect());
        let c = haar_coeff(b, &r)?;
        if !c.is_zero() {
            coefficients.push((r, c));
        }
        let mut j = d;
        loop {
            if j == 0 {
                break 'outer;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < lists[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
    coefficients.sort();
    Ok(HaarSpectrum { dim: d, coefficients, complete })
}

/// Squared product BMO norms via Carleson norms of the Haar energy weight.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BmoReport {
    pub n_coefficients: usize,
    pub complete: bool,
    /// `‖b‖²_BMO = ‖α‖_CM`.
    pub bmo_sq: CmReport,
    /// `‖b‖²_BMO(rec) = ‖α‖_CM(rec)`.
    pub bmo_rec_sq: CmReport,
    #[serde(with = "serde_rational")]
    pub bmo_lower: Rational,
    #[serde(with = "serde_rational")]
    pub bmo_upper: Rational,
    #[serde(with = "serde_rational")]
    pub bmo_rec_lower: Rational,
    #[serde(with = "serde_rational")]
    pub bmo_rec_upper: Rational,
}

pub fn bmo_norms(b: &StepFunction, cap: usize) -> Result<BmoReport> {
    let spec = spectrum(b)?;
    let alpha = spec.energy_weight();
    let bmo_sq = cm_norm(&alpha, cap, CmMode::Exact)?;
    let bmo_rec_sq = cm_rec_norm(&alpha);
    let full = nth_root_bracket(&bmo_sq.value, 2);
    let rec = nth_root_bracket(&bmo_rec_sq.value, 2);
    Ok(BmoReport {
        n_coefficients: spec.coefficients.len(),
        complete: spec.complete,
        bmo_sq,
        bmo_rec_sq,
        bmo_lower: full.lo,
        bmo_upper: full.hi,
        bmo_rec_lower: rec.lo,
        bmo_rec_upper: rec.hi,
    })
}

/// `α = 1` on `[0,2^k) × [0,2^{n−k})`, `k = 0..=n`.
pub fn carleson_family(n: u32) -> CarlesonWeight {
    let n = n as i32;
    let entries = (0..=n)
        .map(|k| (DyadicRect::new(vec![DyadicInterval::new(k, 0), DyadicInterval::new(n - k, 0)]), Rational::one()));
    CarlesonWeight::new(2, entries).expect("two-dimensional")
}

/// `Σ_R |R|^{-1} h_R` over the family above: every coefficient equals 1, so
/// the energy weight is `carleson_family(n)`.
pub fn carleson_function(n: u32) -> StepFunction {
    let coeffs: Vec<(DyadicRect, Rational)> =
        carleson_family(n).iter().map(|(r, _)| (r.clone(), r.area().recip())).collect();
    haar_sum(2, &coeffs).expect("two-dimensional")
}

/// `‖Σ_{R∈U_μ} ⟨b,h_R⟩ h_R‖_BMO` against `μ^ε ‖b‖_BMO(rec)`, with `U_μ`
/// the spectrum rectangles with `μ ≤ emb(R) ≤ 2μ` relative to the enlarged
/// set of the whole spectrum.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionReport {
    #[serde(with = "serde_rational")]
    pub mu: Rational,
    #[serde(with = "serde_rational")]
    pub epsilon: Rational,
    pub n_spectrum: usize,
    pub n_projected: usize,
    #[serde(with = "serde_rational")]
    pub projection_bmo_sq: Rational,
    #[serde(with = "serde_rational")]
    pub bmo_rec_sq: Rational,
    #[serde(with = "serde_rational")]
    pub ratio_lower: Rational,
    #[serde(with = "serde_rational")]
    pub ratio_upper: Rational,
}

/// The projection has coefficients `⟨b,h_R⟩` on `U_μ`, so its squared norm is
/// the Carleson norm of the restricted energy weight; the squared ratio is the
/// restricted Carleson ratio at exponent `2ε`.
pub fn bmo_projection_check(
    b: &StepFunction,
    spec: &EmbSpec,
    mu: &Rational,
    epsilon: &Rational,
    cap: usize,
) -> Result<ProjectionReport> {
    if b.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: b.dim() });
    }
    let sp = spectrum(b)?;
    let alpha = sp.energy_weight();
    let two_eps = epsilon * Rational::from_integer(2.into());
    let r = cm_restricted_ratio(&alpha, &sp.support(), spec, mu, &two_eps, cap)?;
    Ok(ProjectionReport {
        mu: mu.clone(),
        epsilon: epsilon.clone(),
        n_spectrum: sp.coefficients.len(),
        n_projected: r.n_restricted,
        projection_bmo_sq: r.restricted_cm,
        bmo_rec_sq: r.base,
        ratio_lower: nth_root_bracket(&r.ratio_lower, 2).lo,
        ratio_upper: nth_root_bracket(&r.ratio_upper, 2).hi,
    })
}

/// Both sides of the identity
/// `|R|^{-1} ∫_R |b − b_I − b_J + b_R|² = |R|^{-1} Σ_{R′⊂R} ⟨b,h_{R′}⟩² / |R′|`
/// for `R = I × J`, where `b_I(y)` and `b_J(x)` are the averages over `I` in
/// `x` and over `J` in `y`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntrinsicCheck {
    #[serde(with = "serde_rational")]
    pub direct: Rational,
    #[serde(with = "serde_rational")]
    pub via_coefficients: Rational,
    pub equal: bool,
}

/// Mean square of the double difference over `R`, on the cells of `b` in `R`.
pub fn intrinsic_oscillation(b: &StepFunction, r: &DyadicRect) -> Result<Rational> {
    if b.dim() != 2 || r.dim() != 2 {
        return Err(Error::InvalidParameter("the intrinsic oscillation is two-dimensional".into()));
    }
    let rb = r.to_box();
    let lines: Vec<Vec<Rational>> = (0..2)
        .map(|j| {
            let mut l: Vec<Rational> = vec![rb.lo()[j].clone(), rb.hi()[j].clone()];
            for p in b.pieces() {
                for x in [&p.boxed.lo()[j], &p.boxed.hi()[j]] {
                    if &rb.lo()[j] < x && x < &rb.hi()[j] {
                        l.push(x.clone());
                    }
                }
            }
            l.sort();
            l.dedup();
            l
        })
        .collect();
    let (nx, ny) = (lines[0].len() - 1, lines[1].len() - 1);
    let w = |j: usize, i: usize| &lines[j][i + 1] - &lines[j][i];
    let two = Rational::from_integer(2.into());
    let mid = |j: usize, i: usize| (&lines[j][i + 1] + &lines[j][i]) / &two;
    let v: Vec<Vec<Rational>> =
        (0..nx).map(|i| (0..ny).map(|k| b.value_at(&[mid(0, i), mid(1, k)])).collect()).collect();
    let (li, lj) = (rb.width(0), rb.width(1));
    let b_i: Vec<Rational> = (0..ny).map(|k| (0..nx).map(|i| &v[i][k] * w(0, i)).sum::<Rational>() / &li).collect();
    let b_j: Vec<Rational> = (0..nx).map(|i| (0..ny).map(|k| &v[i][k] * w(1, k)).sum::<Rational>() / &lj).collect();
    let area = rb.volume();
    let b_r: Rational = (0..nx).map(|i| &b_j[i] * w(0, i)).sum::<Rational>() / &li;
    let mut total = Rational::zero();
    for i in 0..nx {
        for k in 0..ny {
            let e = &v[i][k] - &b_i[k] - &b_j[i] + &b_r;
            total += &e * &e * w(0, i) * w(1, k);
        }
    }
    Ok(total / area)
}

pub fn intrinsic_cross_check(b: &StepFunction, r: &DyadicRect) -> Result<IntrinsicCheck> {
    let direct = intrinsic_oscillation(b, r)?;
    let mut sum = Rational::zero();
    let floors: Vec<Option<i64>> = (0..2).map(|j| breakpoint_scale(b, j)).collect::<Result<_>>()?;
    if let (Some(sx), Some(sy)) = (floors[0], floors[1]) {
        let sub = |side: &DyadicInterval, s: i64| {
            intervals_meeting(&side.lo(), &side.hi(), s + 1, side.scale as i64)
                .into_iter()
                .filter(|c| side.contains(c))
                .collect::<Vec<_>>()
        };
        for x in sub(&r.sides[0], sx) {
            for y in sub(&r.sides[1], sy) {
                let q = DyadicRect::new(vec![x, y]);
                let c = haar_coeff(b, &q)?;
                sum += &c * &c / q.area();
            }
        }
    }
    let via_coefficients = sum / r.area();
    let equal = direct == via_coefficients;
    Ok(IntrinsicCheck { direct, via_coefficients, equal })
}

/// Coefficients as a map, for comparisons.
pub fn coefficient_map(sp: &HaarSpectrum) -> BTreeMap<DyadicRect, Rational> {
    sp.coefficients.iter().cloned().collect()
}
