//! Library results against direct enumeration.

use journe_core::carleson::{cm_norm, cm_rec_norm, CmMode};
use journe_core::embedding::{emb, EmbVariant};
use journe_core::geometry::{Aabb, DyadicInterval, DyadicRect, Region};
use journe_core::grids::GridFamily;
use journe_core::haar::{bmo_norms, carleson_family, carleson_function};
use journe_core::maximal::{superlevel, StepFunction, Threshold, DEFAULT_CAP};
use journe_core::num::{int, ratio, Rational};

fn interval_box(lo: Rational, hi: Rational) -> Aabb {
    Aabb::new(vec![lo], vec![hi]).unwrap()
}

fn boxed(lo: &[i64], hi: &[i64]) -> Aabb {
    Aabb::new(lo.iter().map(|&v| int(v)).collect(), hi.iter().map(|&v| int(v)).collect()).unwrap()
}

/// Union of every dyadic interval in `[-16, 16)` with scale in `-3..=4`
/// whose average exceeds `lambda`.
fn brute_dyadic_superlevel(f: &StepFunction, lambda: &Rational) -> Region {
    let mut hits = Vec::new();
    for k in -3..=4 {
        let n = 16i64 >> k.max(0) << (-k).max(0);
        for j in -n..n {
            let b = DyadicInterval::new(k, j).interval();
            let b = interval_box(b.lo, b.hi);
            if &f.average(&b).unwrap() > lambda {
                hits.push(b);
            }
        }
    }
    Region::from_boxes(1, &hits).unwrap()
}

#[test]
fn dyadic_superlevel_matches_enumeration() {
    let f = StepFunction::from_sum(
        1,
        [
            (interval_box(int(0), ratio(1, 2)), int(3)),
            (interval_box(int(2), int(3)), int(1)),
            (interval_box(int(-4), ratio(-7, 2)), ratio(5, 2)),
        ],
    )
    .unwrap();
    for lambda in [ratio(1, 8), ratio(1, 4), ratio(1, 2), ratio(3, 4), int(1), int(2), int(3)] {
        let got = superlevel(&GridFamily::dyadic(1), &f, &lambda, Threshold::Above, DEFAULT_CAP).unwrap();
        let want = brute_dyadic_superlevel(&f, &lambda);
        assert!(got.ae_eq(&want), "λ = {lambda}: {} vs {}", got.measure(), want.measure());
        assert!(&lambda * got.measure() <= f.integral());
    }
}

#[test]
fn staircase_carleson_norms() {
    for (n, cm, rec) in [(1, ratio(2, 3), ratio(1, 2)), (2, ratio(3, 8), ratio(1, 4))] {
        let w = carleson_family(n);
        assert_eq!(cm_norm(&w, DEFAULT_CAP, CmMode::Exact).unwrap().value, cm, "n = {n}");
        assert_eq!(cm_rec_norm(&w).value, rec, "n = {n}");
    }
}

#[test]
fn haar_coefficients_of_the_staircase_function_give_its_weight() {
    for n in 1..=2 {
        let b = bmo_norms(&carleson_function(n), DEFAULT_CAP).unwrap();
        let w = carleson_family(n);
        assert!(b.complete);
        assert_eq!(b.bmo_sq.value, cm_norm(&w, DEFAULT_CAP, CmMode::Exact).unwrap().value);
        assert_eq!(b.bmo_rec_sq.value, cm_rec_norm(&w).value);
    }
}

#[test]
fn embeddedness_of_a_centred_box() {
    let r = DyadicRect::from_pairs(&[(0, 0), (0, 0)]);
    // three times as wide as R, same height
    let wide = Region::from_box(&boxed(&[-1, 0], &[2, 1]));
    assert_eq!(emb(&r, &EmbVariant::directional(0), &wide).unwrap().value, int(3));
    assert_eq!(emb(&r, &EmbVariant::directional(1), &wide).unwrap().value, int(1));
    assert_eq!(emb(&r, &EmbVariant::Uniform, &wide).unwrap().value, int(1));
    // off-centre: the nearer edge decides
    let square = Region::from_box(&boxed(&[-1, -3], &[2, 2]));
    assert_eq!(emb(&r, &EmbVariant::Uniform, &square).unwrap().value, int(3));
    assert_eq!(emb(&r, &EmbVariant::directional(1), &square).unwrap().value, int(3));
}
