//! Seeded corpus generation.
//!
//! Every instance draws from its own ChaCha8 stream: the generator is seeded
//! from the 64-bit suite seed and the stream id is the instance index, so an
//! instance does not depend on how many others were generated or in what
//! order.

use std::fmt;
use std::str::FromStr;

use journe_core::carleson::CarlesonWeight;
use journe_core::geometry::{DyadicInterval, DyadicRect, RectCollection, Region};
use journe_core::haar::carleson_family;
use journe_core::journe::{default_separation, residue_modulus};
use journe_core::maximal::StepFunction;
use journe_core::num::{ratio, Rational};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SuiteConfig;
use crate::error::{LabError, LabResult};

pub type LabRng = ChaCha8Rng;

pub fn instance_rng(seed: u64, index: u64) -> LabRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenMode {
    /// Independent uniform dyadic rectangles in the scale box.
    #[default]
    Random,
    /// Rectangles of nearly equal area, each rejected unless incomparable
    /// with everything accepted so far.
    Incomparable,
    /// `[0,2^k) × [0,2^{n−k})`, `k = 0..n`.
    Staircase,
    /// Incomparable rectangles with scales `s·k`, `s` the residue modulus of
    /// the default separation for `μ`, and lower corners within four side
    /// lengths of the origin: the standard reduction keeps them together.
    Separated,
    /// Every dyadic sub-rectangle of a random rectangle down to `n` halvings
    /// of area.
    Carleson,
}

impl GenMode {
    pub const ALL: [GenMode; 5] =
        [GenMode::Random, GenMode::Incomparable, GenMode::Staircase, GenMode::Separated, GenMode::Carleson];

    pub fn name(&self) -> &'static str {
        match self {
            GenMode::Random => "random",
            GenMode::Incomparable => "incomparable",
            GenMode::Staircase => "staircase",
            GenMode::Separated => "separated",
            GenMode::Carleson => "carleson",
        }
    }
}

impl fmt::Display for GenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GenMode {
    type Err = LabError;

    fn from_str(s: &str) -> LabResult<Self> {
        GenMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| LabError::Config(format!("unknown mode {s:?}")))
    }
}

/// A dyadic rectangle inside `[0, 2^scale_max)^dim` with side scales drawn
/// uniformly from `scale_min..=scale_max`.
pub fn random_rect(rng: &mut LabRng, dim: usize, scale_min: i32, scale_max: i32) -> DyadicRect {
    let sides = (0..dim)
        .map(|_| {
            let k = rng.gen_range(scale_min..=scale_max);
            let slots = 1i64 << (scale_max - k);
            DyadicInterval::new(k, rng.gen_range(0..slots))
        })
        .collect();
    DyadicRect::new(sides)
}

/// Log-area within one of the middle of the scale box, so that strict
/// nesting is rare and rejection rarely starves.
fn near_area_rect(rng: &mut LabRng, dim: usize, scale_min: i32, scale_max: i32) -> DyadicRect {
    let mid = (dim as i32 * (scale_min + scale_max)) / 2;
    loop {
        let target = mid + rng.gen_range(-1..=1);
        let mut ks: Vec<i32> = (0..dim - 1).map(|_| rng.gen_range(scale_min..=scale_max)).collect();
        let last = target - ks.iter().sum::<i32>();
        if !(scale_min..=scale_max).contains(&last) {
            continue;
        }
        ks.push(last);
        let sides = ks.into_iter().map(|k| DyadicInterval::new(k, rng.gen_range(0..1i64 << (scale_max - k)))).collect();
        return DyadicRect::new(sides);
    }
}

/// `a/b` with `a ∈ 1..=8`, `b ∈ {1, 2, 4}`.
pub fn random_value(rng: &mut LabRng) -> Rational {
    ratio(rng.gen_range(1..=8), *[1, 2, 4].choose(rng).expect("nonempty"))
}

fn draw_n(rng: &mut LabRng, cfg: &SuiteConfig) -> usize {
    rng.gen_range(cfg.n_min..=cfg.n_max)
}

/// Instance `index` of the corpus described by `cfg`.
pub fn gen_collection(cfg: &SuiteConfig, index: u64) -> LabResult<RectCollection> {
    let mut rng = instance_rng(cfg.seed, index);
    gen_collection_with(&mut rng, cfg)
}

pub fn gen_collection_with(rng: &mut LabRng, cfg: &SuiteConfig) -> LabResult<RectCollection> {
    let n = draw_n(rng, cfg);
    let (d, lo, hi) = (cfg.dim, cfg.scale_min, cfg.scale_max);
    let u = match cfg.mode {
        GenMode::Random => RectCollection::new(d, (0..n).map(|_| random_rect(rng, d, lo, hi)))?,
        GenMode::Incomparable | GenMode::Separated => {
            let step = residue_modulus(&default_separation(d, &cfg.mu)) as i32;
            let mut kept: Vec<DyadicRect> = Vec::with_capacity(n);
            let budget = 200 * n;
            for _ in 0..budget {
                if kept.len() == n {
                    break;
                }
                let r = if cfg.mode == GenMode::Separated {
                    let sides = (0..d)
                        .map(|_| DyadicInterval::new(step * rng.gen_range(lo..=hi), rng.gen_range(0..4)))
                        .collect();
                    DyadicRect::new(sides)
                } else {
                    near_area_rect(rng, d, lo, hi)
                };
                if kept.iter().all(|s| !s.contains(&r) && !r.contains(s)) {
                    kept.push(r);
                }
            }
            if kept.len() < n {
                return Err(LabError::Infeasible(format!(
                    "only {} of {n} incomparable rectangles after {budget} draws",
                    kept.len()
                )));
            }
            RectCollection::new(d, kept)?
        }
        GenMode::Staircase => {
            if d != 2 {
                return Err(LabError::Infeasible("staircases are two-dimensional".into()));
            }
            carleson_family(n as u32 - 1).support()
        }
        GenMode::Carleson => {
            let top = random_rect(rng, d, lo, hi);
            RectCollection::new(d, sub_rectangles(&top, n as u32 - 1))?
        }
    };
    Ok(u)
}

/// Dyadic sub-rectangles of `top` whose area is at least `2^{−levels}|top|`.
pub fn sub_rectangles(top: &DyadicRect, levels: u32) -> Vec<DyadicRect> {
    let mut out = vec![top.clone()];
    let mut frontier = vec![(top.clone(), 0u32)];
    while let Some((r, used)) = frontier.pop() {
        if used == levels {
            continue;
        }
        for j in 0..r.dim() {
            for child in r.sides[j].children() {
                let c = r.with_side(j, child);
                if !out.contains(&c) {
                    out.push(c.clone());
                    frontier.push((c, used + 1));
                }
            }
        }
    }
    out.sort();
    out
}

/// Nonnegative step function: a sum of `terms` weighted rectangle indicators.
pub fn random_step(rng: &mut LabRng, dim: usize, terms: usize, scale_min: i32, scale_max: i32) -> StepFunction {
    let parts: Vec<_> =
        (0..terms).map(|_| (random_rect(rng, dim, scale_min, scale_max).to_box(), random_value(rng))).collect();
    StepFunction::from_sum(dim, parts).expect("positive values")
}

/// A union of `pieces` dyadic intervals.
pub fn random_union_1d(rng: &mut LabRng, pieces: usize, scale_min: i32, scale_max: i32) -> Region {
    let boxes: Vec<_> = (0..pieces).map(|_| random_rect(rng, 1, scale_min, scale_max).to_box()).collect();
    Region::from_boxes(1, &boxes).expect("one-dimensional")
}

/// Weight with up to `n` support rectangles and values from [`random_value`].
pub fn random_weight(rng: &mut LabRng, dim: usize, n: usize, scale_min: i32, scale_max: i32) -> CarlesonWeight {
    let entries: Vec<_> = (0..n).map(|_| (random_rect(rng, dim, scale_min, scale_max), random_value(rng))).collect();
    CarlesonWeight::new(dim, entries).expect("positive values")
}

/// A nonempty random sub-collection, each member kept with probability 1/2.
pub fn random_subset(rng: &mut LabRng, u: &RectCollection) -> RectCollection {
    loop {
        let idx: Vec<usize> = (0..u.len()).filter(|_| rng.gen_bool(0.5)).collect();
        if !idx.is_empty() || u.is_empty() {
            return u.subset(&idx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use journe_core::io::collection_to_json;

    fn cfg(mode: GenMode, n: usize) -> SuiteConfig {
        SuiteConfig { mode, n_min: n, n_max: n, ..SuiteConfig::default() }
    }

    #[test]
    fn deterministic_per_index() {
        let c = cfg(GenMode::Random, 1);
        let a = collection_to_json(&gen_collection(&c, 0).unwrap());
        assert_eq!(a, collection_to_json(&gen_collection(&c, 0).unwrap()));
        let c5 = cfg(GenMode::Random, 5);
        let later = gen_collection(&c5, 3).unwrap();
        assert_eq!(later, gen_collection(&c5, 3).unwrap());
        assert_ne!(later, gen_collection(&c5, 4).unwrap());
    }

    #[test]
    fn incomparable_mode_post_check() {
        let c = SuiteConfig { scale_max: 6, ..cfg(GenMode::Incomparable, 30) };
        for i in 0..20 {
            let u = gen_collection(&c, i).unwrap();
            assert_eq!(u.len(), 30);
            assert!(u.is_pairwise_incomparable());
        }
    }

    #[test]
    fn separated_mode_sits_on_the_residue_lattice() {
        let c = SuiteConfig { scale_max: 2, ..cfg(GenMode::Separated, 12) };
        let step = residue_modulus(&default_separation(2, &c.mu)) as i32;
        for i in 0..10 {
            let u = gen_collection(&c, i).unwrap();
            assert_eq!(u.len(), 12);
            assert!(u.is_pairwise_incomparable());
            for r in u.iter() {
                for j in 0..2 {
                    assert_eq!(r.side(j).scale.rem_euclid(step), 0);
                    assert!((0..4).contains(&r.side(j).offset));
                }
            }
        }
    }

    #[test]
    fn infeasible_incomparable_is_an_error() {
        let c = SuiteConfig { dim: 1, scale_min: 0, scale_max: 1, ..cfg(GenMode::Incomparable, 5) };
        assert!(matches!(gen_collection(&c, 0), Err(LabError::Infeasible(_))));
    }

    #[test]
    fn staircase_is_the_carleson_family() {
        let u = gen_collection(&cfg(GenMode::Staircase, 3), 0).unwrap();
        assert_eq!(u.len(), 3);
        let mut got = u.members().to_vec();
        got.sort();
        assert_eq!(got, carleson_family(2).support().members().to_vec());
    }

    #[test]
    fn carleson_mode_counts() {
        // 2-D: (j+1)·2^j rectangles at area ratio 2^{−j}.
        let u = gen_collection(&cfg(GenMode::Carleson, 3), 7).unwrap();
        assert_eq!(u.len(), 1 + 4 + 12);
        let top = u.iter().max_by_key(|r| r.log_area()).unwrap();
        assert!(u.iter().all(|r| top.contains(r)));
    }
}
