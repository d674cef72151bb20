//! Corpus suites, one per verified property.
//!
//! A suite runs its instances in parallel, folds the per-instance tallies in
//! index order and reports exact-check violations together with ratio metrics
//! whose maxima are compared against the ledger.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use journe_core::carleson::{
    cm_ell_norm, cm_norm, cm_rec_norm, dilation_check, jn_lp, weak_instance_check, CarlesonWeight, CmMode,
};
use journe_core::embedding::{dd_certificate, small_enlargement, EmbSolver, EmbSpec, EmbVariant};
use journe_core::geometry::{Aabb, DyadicInterval, DyadicRect, RectCollection, Region};
use journe_core::grids::{delta, shifted_cover, verify_grid_property, AxisFamily, GridSpec, ShiftedGridId};
use journe_core::haar::carleson_family;
use journe_core::journe::{
    bb_empty_check, default_separation, f_sets, packing_suite, pipher_sum, standard_reduction, uniform_embed_construct,
    uniform_f_sum, JourneContext, JourneVariant,
};
use journe_core::maximal::{small_weak_check, weak_type_check, Threshold};
use journe_core::num::{fmt_rational, int, pow2, ratio, Rational};
use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SuiteConfig;
use crate::error::{LabError, LabResult};
use crate::gen::{
    gen_collection_with, instance_rng, random_rect, random_step, random_subset, random_union_1d, random_weight,
    GenMode, LabRng,
};
use crate::ledger::{Ledger, LedgerCheck};
use crate::report::SuiteRow;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Grids,
    ShiftedCover,
    WeakType,
    SmallWeak,
    Packing,
    GoodBad,
    Journe,
    SmallEnlargement,
    Carleson,
    JohnNirenberg,
    WeakInstance,
    Few,
    UniformHigh,
    EmbScan,
}

impl Suite {
    pub const ALL: [Suite; 14] = [
        Suite::Grids,
        Suite::ShiftedCover,
        Suite::WeakType,
        Suite::SmallWeak,
        Suite::Packing,
        Suite::GoodBad,
        Suite::Journe,
        Suite::SmallEnlargement,
        Suite::Carleson,
        Suite::JohnNirenberg,
        Suite::WeakInstance,
        Suite::Few,
        Suite::UniformHigh,
        Suite::EmbScan,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Grids => "grids",
            Suite::ShiftedCover => "shifted-cover",
            Suite::WeakType => "weak-type",
            Suite::SmallWeak => "small-weak",
            Suite::Packing => "packing",
            Suite::GoodBad => "good-bad",
            Suite::Journe => "journe",
            Suite::SmallEnlargement => "small-enlargement",
            Suite::Carleson => "carleson",
            Suite::JohnNirenberg => "john-nirenberg",
            Suite::WeakInstance => "weak-instance",
            Suite::Few => "few",
            Suite::UniformHigh => "uniform-high",
            Suite::EmbScan => "emb-scan",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Suite::Grids => "nested-or-disjoint and tiling for the dyadic and every shifted grid",
            Suite::ShiftedCover => "I ± δ|I| is a member of some shifted grid",
            Suite::WeakType => "λ|{M^G f > λ}| ≤ ∫f for single grids",
            Suite::SmallWeak => "excess of the shifted superlevel set over a 1-D union",
            Suite::Packing => "Σ_{E(I,k)} |R| ≤ 2|sh E(I,k)| on incomparable collections",
            Suite::GoodBad => "ℬ_j(ℬ_j(U)) = ∅ on standard-reduced collections",
            Suite::Journe => "embeddedness-weighted area sums against the shadow",
            Suite::SmallEnlargement => "|V| against |sh U| and the four-translate certificate",
            Suite::Carleson => "CM(rec) ≤ CM(ℓ) ≤ CM and the staircase family",
            Suite::JohnNirenberg => "p = 2 John–Nirenberg comparison",
            Suite::WeakInstance => "dilation relabeling and the p = 2 superlevel measure",
            Suite::Few => "dyadic-bucket F-set sums in three dimensions",
            Suite::UniformHigh => "uniform embeddedness construction in three dimensions",
            Suite::EmbScan => "breakpoint embeddedness against a fine μ scan",
        }
    }

    /// The corpus used by the acceptance run and the ledger.
    pub fn default_config(&self) -> SuiteConfig {
        let base = SuiteConfig::default();
        match self {
            Suite::Grids | Suite::ShiftedCover => {
                SuiteConfig { count: 3, scale_min: -6, scale_max: 6, offsets: 64, ..base }
            }
            Suite::WeakType => {
                SuiteConfig { dim: 1, count: 1000, n_min: 1, n_max: 6, scale_min: -2, scale_max: 3, ..base }
            }
            Suite::SmallWeak => {
                SuiteConfig { dim: 1, count: 200, n_min: 1, n_max: 8, scale_min: -3, scale_max: 3, ..base }
            }
            Suite::Packing => SuiteConfig {
                count: 500,
                n_min: 1,
                n_max: 100,
                scale_min: 0,
                scale_max: 8,
                mode: GenMode::Incomparable,
                ..base
            },
            Suite::GoodBad => SuiteConfig {
                count: 200,
                n_min: 2,
                n_max: 24,
                scale_min: 0,
                scale_max: 2,
                mode: GenMode::Separated,
                ..base
            },
            Suite::Journe => SuiteConfig {
                count: 500,
                n_min: 1,
                n_max: 10,
                scale_min: 0,
                scale_max: 4,
                mode: GenMode::Incomparable,
                subsets: 50,
                ..base
            },
            Suite::SmallEnlargement => {
                SuiteConfig { count: 100, n_min: 1, n_max: 5, scale_min: 0, scale_max: 3, ..base }
            }
            Suite::Carleson => SuiteConfig { count: 100, n_min: 1, n_max: 16, scale_min: 0, scale_max: 3, ..base },
            Suite::JohnNirenberg => SuiteConfig { count: 100, n_min: 1, n_max: 10, scale_min: 0, scale_max: 3, ..base },
            Suite::WeakInstance => SuiteConfig { count: 50, n_min: 1, n_max: 6, scale_min: 0, scale_max: 3, ..base },
            Suite::Few | Suite::UniformHigh => {
                SuiteConfig { dim: 3, count: 100, n_min: 1, n_max: 8, scale_min: 0, scale_max: 3, depth: 1, ..base }
            }
            Suite::EmbScan => SuiteConfig { count: 1000, n_min: 1, n_max: 5, scale_min: 0, scale_max: 3, ..base },
        }
    }

    pub fn run(&self, cfg: &SuiteConfig) -> LabResult<SuiteOutcome> {
        cfg.validate()?;
        let tally = match self {
            Suite::Grids => grids(cfg),
            Suite::ShiftedCover => shifted_covers(cfg),
            Suite::WeakType => per_instance(cfg, weak_type),
            Suite::SmallWeak => per_instance(cfg, small_weak),
            Suite::Packing => per_instance(cfg, packing),
            Suite::GoodBad => per_instance(cfg, good_bad),
            Suite::Journe => per_instance(cfg, journe),
            Suite::SmallEnlargement => per_instance(cfg, small_enl),
            Suite::Carleson => carleson(cfg),
            Suite::JohnNirenberg => per_instance(cfg, john_nirenberg),
            Suite::WeakInstance => per_instance(cfg, weak_instance),
            Suite::Few => per_instance(cfg, few),
            Suite::UniformHigh => per_instance(cfg, uniform_high),
            Suite::EmbScan => per_instance(cfg, emb_scan),
        }?;
        Ok(tally.finish(*self, cfg))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = LabError;

    fn from_str(s: &str) -> LabResult<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| LabError::UnknownSuite(s.to_string()))
    }
}

const KEPT_EXAMPLES: usize = 5;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub seed: u64,
    pub instances: usize,
    pub checks: u64,
    pub violations: u64,
    /// The first few violations, described.
    pub examples: Vec<String>,
    /// Metric name → largest observed value; ledger key `suite/metric`.
    #[serde(serialize_with = "ser_metrics")]
    pub metrics: BTreeMap<String, Rational>,
    #[serde(skip)]
    pub rows: Vec<SuiteRow>,
    /// Compact corpus configuration.
    pub corpus: String,
}

fn ser_metrics<S: serde::Serializer>(m: &BTreeMap<String, Rational>, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut out = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        out.serialize_entry(k, &fmt_rational(v))?;
    }
    out.end()
}

impl SuiteOutcome {
    pub fn ledger_key(&self, metric: &str) -> String {
        format!("{}/{metric}", self.suite.name())
    }
}

#[derive(Debug, Default)]
struct Tally {
    checks: u64,
    violations: u64,
    examples: Vec<String>,
    metrics: BTreeMap<String, Rational>,
    rows: Vec<SuiteRow>,
}

impl Tally {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations += 1;
            if self.examples.len() < KEPT_EXAMPLES {
                self.examples.push(what());
            }
        }
    }

    fn metric(&mut self, name: &str, v: Rational) {
        match self.metrics.get_mut(name) {
            Some(cur) if *cur >= v => {}
            Some(cur) => *cur = v,
            None => {
                self.metrics.insert(name.to_string(), v);
            }
        }
    }

    fn row(&mut self, instance: u64, item: impl Into<String>, metric: &str, value: String, pass: bool) {
        self.rows.push(SuiteRow {
            seed: 0,
            suite: String::new(),
            instance,
            item: item.into(),
            metric: metric.to_string(),
            value,
            pass,
        });
    }

    fn merge(&mut self, other: Tally) {
        self.checks += other.checks;
        self.violations += other.violations;
        for e in other.examples {
            if self.examples.len() < KEPT_EXAMPLES {
                self.examples.push(e);
            }
        }
        for (k, v) in other.metrics {
            self.metric(&k, v);
        }
        self.rows.extend(other.rows);
    }

    fn finish(mut self, suite: Suite, cfg: &SuiteConfig) -> SuiteOutcome {
        for r in &mut self.rows {
            r.seed = cfg.seed;
            r.suite = suite.name().to_string();
        }
        SuiteOutcome {
            suite,
            seed: cfg.seed,
            instances: cfg.count,
            checks: self.checks,
            violations: self.violations,
            examples: self.examples,
            metrics: self.metrics,
            rows: self.rows,
            corpus: serde_json::to_string(cfg).expect("configs serialize"),
        }
    }
}

/// Runs `f` on every instance index with its own generator stream.
fn per_instance(
    cfg: &SuiteConfig,
    f: impl Fn(&SuiteConfig, u64, &mut LabRng) -> LabResult<Tally> + Sync,
) -> LabResult<Tally> {
    let parts: Vec<Tally> = (0..cfg.count as u64)
        .into_par_iter()
        .map(|i| f(cfg, i, &mut instance_rng(cfg.seed, i)))
        .collect::<LabResult<_>>()?;
    let mut total = Tally::default();
    for p in parts {
        total.merge(p);
    }
    Ok(total)
}

/// The grid suites read `count` as the largest depth.
fn depths(cfg: &SuiteConfig) -> std::ops::RangeInclusive<u32> {
    1..=cfg.count.min(8) as u32
}

fn grids(cfg: &SuiteConfig) -> LabResult<Tally> {
    let levels = cfg.scale_min as i64..=cfg.scale_max as i64;
    let offsets = -cfg.offsets..=cfg.offsets;
    let mut specs = vec![(0, GridSpec::Dyadic)];
    for d in depths(cfg) {
        specs.extend(ShiftedGridId::all(d)?.into_iter().map(|g| (d, GridSpec::Shifted(g))));
    }
    let results: Vec<_> = specs
        .par_iter()
        .map(|(d, spec)| (*d, *spec, verify_grid_property(*spec, levels.clone(), offsets.clone())))
        .collect();
    let mut t = Tally::default();
    for (d, spec, violations) in results {
        let label = match spec {
            GridSpec::Dyadic => "dyadic".to_string(),
            GridSpec::Shifted(g) => format!("depth={d} phase={} sign={}", g.phase, g.sign),
        };
        t.row(d as u64, label.clone(), "violations", violations.len().to_string(), violations.is_empty());
        t.check(violations.is_empty(), || format!("{label}: {}", violations[0]));
    }
    Ok(t)
}

fn shifted_covers(cfg: &SuiteConfig) -> LabResult<Tally> {
    let mut t = Tally::default();
    for d in depths(cfg) {
        let dl = delta(d);
        let parts: Vec<Tally> = (cfg.scale_min..=cfg.scale_max)
            .into_par_iter()
            .map(|k| {
                let mut t = Tally::default();
                for j in -cfg.offsets..=cfg.offsets {
                    let iv = DyadicInterval::new(k, j);
                    let shift = iv.len() * &dl;
                    match shifted_cover(&iv, d) {
                        Ok(c) => {
                            let plus = iv.interval().translate(&shift);
                            let minus = iv.interval().translate(&-shift.clone());
                            let ok = c.plus.verify()
                                && c.minus.verify()
                                && c.plus.interval == plus
                                && c.minus.interval == minus
                                && c.plus.grid.depth == d
                                && c.minus.grid.depth == d;
                            t.check(ok, || format!("depth {d}: wrong witness for {iv}"));
                        }
                        Err(e) => t.check(false, || format!("depth {d}: {iv}: {e}")),
                    }
                }
                t
            })
            .collect();
        let mut dt = Tally::default();
        for p in parts {
            dt.merge(p);
        }
        t.row(d as u64, "all", "failures", dt.violations.to_string(), dt.violations == 0);
        t.merge(dt);
    }
    Ok(t)
}

fn weak_type(cfg: &SuiteConfig, i: u64, rng: &mut LabRng) -> LabResult<Tally> {
    let terms = rng.gen_range(cfg.n_min..=cfg.n_max);
    let f = random_step(rng, 1, terms, cfg.scale_min, cfg.scale_max);
    let grids = ShiftedGridId::all(cfg.depth)?;
    let family = match rng.gen_range(0..=grids.len()) {
        0 => AxisFamily::Dyadic,
        g => AxisFamily::Shifted { grid: grids[g - 1] },
    };
    let mut t = Tally::default();
    for _ in 0..5 {
        let lambda = ratio(rng.gen_range(1..=32), 4);
        let r = weak_type_check(&family, &f, &lambda, cfg.cap)?;
        // λ|{M f > λ}| ≤ ∫f, recomputed from the report's parts.
        let ok = r.pass && r.lhs <= r.rhs && r.rhs == f.integral();
        t.check(ok, || format!("instance {i}, λ = {lambda}: {} > {}", r.lhs, r.rhs));
        t.row(i, format!("lambda={lambda}"), "lhs/rhs", fmt_rational(&(&r.lhs / &r.rhs)), ok);
    }
    Ok(t)
}

fn small_weak(cfg: &SuiteConfig, i: u64, rng: &mut LabRng) -> LabResult<Tally> {
    let pieces = rng.gen_range(cfg.n_min..=cfg.n_max);
    let u = random_union_1d(rng, pieces, cfg.scale_min, cfg.scale_max);
    let mut t = Tally::default();
    let mut prev: Option<Rational> = None;
    for d in 2..=6 {
        let r = small_weak_check(&u, d, cfg.cap)?;
        t.metric("kappa-over-delta", &r.kappa / &r.delta_depth);
        t.row(i, format!("depth={d}"), "kappa", fmt_rational(&r.kappa), true);
        // Strictly decreasing until it reaches zero.
        if let Some(p) = &prev {
            let ok = &r.kappa < p || (r.kappa.is_zero() && p.is_zero());
            t.check(ok, || format!("instance {i}: κ at depth {d} = {} not below {}", r.kappa, p));
        }
        prev = Some(r.kappa);
    }
    Ok(t)
}

fn packing(cfg: &SuiteConfig, i: u64, rng: &mut LabRng) -> LabResult<Tally> {
    let u = gen_collection_with(rng, cfg)?;
    let reports = packing_suite(&u, &u.shadow())?;
    let mut t = Tally::default();
    let mut worst = Rational::zero();
    for r in &reports {
        // Recompute both sides from the members.
        let area: Rational = r.members.iter().map(DyadicRect::area).sum();
        let sh = RectCollection::new(2, r.members.clone())?.shadow().measure();
        let ok = r.pass && area == r.area_sum && &sh * int(2) == r.bound && area <= &sh * int(2);
        t.check(ok, || format!("instance {i}: E({}, {}) area {} > {}", r.interval, r.k, area, &sh * int(2)));
        if !sh.is_zero() {
            worst = worst.max(&area / &sh);
        }
    }
    t.row(i, format!("n={}", u.len()), "max area/shadow", fmt_rational(&worst), worst <= int(2));
    Ok(t)
}

fn classic_spec(dim: usize) -> EmbSpec {
    EmbSpec::new(EmbVariant::directional(0), JourneVariant::Classic.default_source(dim))
}

fn good_bad(cfg: &SuiteConfig, i: u64, rng: &mut LabRng) -> LabResult<Tally> {
    let mu = [int(2), int(4), int(8)][i as usize % 3].clone();
    let u = gen_collection_with(rng, &SuiteConfig { mu: mu.clone(), ..cfg.clone() })?;
    let parts = standard_reduction(&u, &classic_spec(u.dim()), &mu, &default_separation(u.dim(), &mu), cfg.cap)?;
    let floor = Rational::one() - &cfg.theta;
    let mut t = Tally::default();
    for (c, part) in parts.iter().enumerate() {
        let r = bb_empty_check(part, &cfg.theta)?;
        t.check(r.pass, || format!("instance {i} part {c}: {:?}", r.counterexample));
        let frac = r.first.min_private_fraction();
        t.check(frac >= floor, || format!("instance {i} part {c}: private fraction {frac} < {floor}"));
        t.row(i, format!("mu={mu} part={c} n={}", part.len()), "min private fraction", fmt_rational(&frac), r.pass);
    }
    Ok(t)
}

fn journe(cfg: &SuiteConfig, i: u64, rng: &mut LabRng) -> LabResult<Tally> {
    let u = gen_collection_with(rng, cfg)?;
    let subsets: Vec<RectCollection> = (0..cfg.subsets.max(1)).map(|_| random_subset(rng, &u)).collect();
    let variants = match cfg.variant {
        Some(v) => vec![v],
        None => JourneVariant::ALL.to_vec(),
    };
    let mut t = Tally::default();
    for v in variants {
        let ctx = JourneContext::new(&u, v, None, &cfg.epsilon, cfg.cap)?;
        let mut worst = Rational::zero();
        for s in &subsets {
            let r = ctx.sum(s)?;
            t.check(r.lhs_lower <= r.lhs_upper, || format!("instance {i} {v}: inverted bracket"));
            worst = worst.max(r.ratio_upper);
        }
        t.row(i, v.name(), "max ratio_upper", fmt_rational(&worst), true);
        t.metric(v.name(), worst);
    }
    Ok(t)
}

fn small_enl(cfg: &SuiteConfig, i: u64, rng: &mut LabRng) -> LabResult<Tally> {
    let u = gen_collection_with(rng, &SuiteConfig { dim: 2, mode: GenMode::Random, ..cfg.clone() })?;
    let depth = 1 + (i % 3) as u32;
    let se = small_enlargement(&u, depth, Threshold::AtLeast, cfg.cap)?;
    let mut t = Tally::default();
    let norm = &se.excess / (delta(depth) * int(depth as i64));
    t.metric("excess-over-delta-d", norm.clone());
    t.row(i, format!("depth={depth}"), "excess/(δd)", fmt_rational(&norm), true);
    t.check(se.v.contains_region(&u.shadow()), || format!("instance {i}: V misses sh U"));
    let r = u.members()[rng.gen_range(0..u.len())].clone();
    let cert = dd_certificate(&se, &r)?;
    t.check(cert.iter().all(|&c| c), || format!("instance {i}: {r} translates {cert:?}"));
    Ok(t)
}

/// `max_S Σ_{R ⊂ sh S} α(R) / |sh S|` over nonempty subsets `S` of the support.
pub fn brute_cm(alpha: &CarlesonWeight) -> Rational {
    let rects: Vec<(&DyadicRect, &Rational)> = alpha.iter().collect();
    let mut best = Rational::zero();
    for mask in 1u32..(1 << rects.len()) {
        let boxes: Vec<Aabb> =
            rects.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, (r, _))| r.to_box()).collect();
        let sh = Region::from_boxes(alpha.dim(), &boxes).expect("same dimension");
        let mass: Rational = rects.iter().filter(|(r, _)| sh.contains_ae(&r.to_box())).map(|(_, v)| (*v).clone()).sum();
        best = best.max(mass / sh.measure());
    }
    best
}

/// `max_{R₀} Σ_{R ⊂ R₀} α(R) / |R₀|` over every dyadic rectangle in `[0, 2^top)^2`
/// with sides at least `2^bottom`.
pub fn brute_cm_rec(alpha: &CarlesonWeight, bottom: i32, top: i32) -> Rational {
    let sides: Vec<DyadicInterval> =
        (bottom..=top).flat_map(|k| (0..1i64 << (top - k)).map(move |j| DyadicInterval::new(k, j))).collect();
    let mut best = Rational::zero();
    for a in &sides {
        for b in &sides {
            let r0 = DyadicRect::new(vec![*a, *b]);
            let mass: Rational = alpha.iter().filter(|(r, _)| r0.contains(r)).map(|(_, v)| v.clone()).sum();
            best = best.max(mass / r0.area());
        }
    }
    best
}

fn carleson(cfg: &SuiteConfig) -> LabResult<Tally> {
    let mut t = per_instance(cfg, carleson_instance)?;
    let mut prev: Option<Rational> = None;
    for n in 1..=6u32 {
        let w = carleson_family(n);
        let cm = cm_norm(&w, cfg.cap, CmMode::Exact)?.value;
        let rec = cm_rec_norm(&w).value;
        t.check(cm == brute_cm(&w), || format!("staircase n={n}: CM {cm} disagrees with subsets"));
        t.check(rec == brute_cm_rec(&w, 0, n as i32), || format!("staircase n={n}: CM(rec) {rec} disagrees"));
        let expected = match n {
            1 => Some((ratio(2, 3), ratio(1, 2))),
            2 => Some((ratio(3, 8), ratio(1, 4))),
            _ => None,
        };
        if let Some((e_cm, e_rec)) = expected {
            t.check(cm == e_cm && rec == e_rec, || format!("staircase n={n}: ({cm}, {rec}) ≠ ({e_cm}, {e_rec})"));
        }
        let q = &rec / &cm;
        if let Some(p) = &prev {
            t.check(&q < p, || format!("staircase n={n}: ratio {q} not below {p}"));
        }
        t.row(n as u64, "staircase", "rec/cm", fmt_rational(&q), true);
        prev = Some(q);
    }
    Ok(t)
}

fn carleson_instance(cfg: &SuiteConfig, i: u64, rng: &mut LabRng) -> LabResult<Tally> {
    let n = rng.gen_range(cfg.n_min..=cfg.n_max);
    let w = random_weight(rng, 2, n, cfg.scale_min, cfg.scale_max);
    let cm = cm_norm(&w, cfg.cap, CmMode::Exact)?.value;
    let ell = cm_ell_norm(&w, 1, cfg.cap)?.value;
    let rec = cm_rec_norm(&w).value;
    let mut t = Tally::default();
    t.check(rec <= ell && ell <= cm, || format!("instance {i}: chain {rec} ≤ {ell} ≤ {cm} fails"));
    if w.len() <= 10 {
        let b = brute_cm(&w);
        t.check(cm == b, || format!("instance {i}: CM {cm} ≠ subset oracle {b}"));
    }
    let b = brute_cm_rec(&w, cfg.scale_min, cfg.scale_max);
    t.check(rec == b, || format!("instance {i}: CM(rec) {rec} ≠ rectangle oracle {b}"));
    t.row(i, format!("support={}", w.len()), "rec/ell/cm", format!("{rec};{ell};{cm}"), true);
    Ok(t)
}

fn john_nirenberg(cfg: &SuiteConfig, i: u64, rng: &mut LabRng) -> LabResult<Tally> {
    let mut t = Tally::default();
    let r = random_rect(rng, 2, cfg.scale_min, cfg.scale_max);
    let one = RectCollection::new(2, [r.clone()])?;
    let single = jn_lp(&CarlesonWeight::indicator(&one), &one, 2, cfg.cap)?;
    // F = |R|^{-1} 1_R and CM = |R|^{-1}, so both sides equal |R|^{-1}.
    t.check(single.lhs_pow == single.rhs_pow && single.lhs_pow == r.area().recip(), || {
        format!("instance {i}: single rectangle {r}: {} vs {}", single.lhs_pow, single.rhs_pow)
    });
    let n = rng.gen_range(cfg.n_min..=cfg.n_max);
    let w = random_weight(rng, 2, n, cfg.scale_min, cfg.scale_max);
    let rep = jn_lp(&w, &w.support(), 2, cfg.cap)?;
    t.check(rep.lhs_lower <= rep.lhs_upper, || format!("instance {i}: inverted bracket"));
    t.metric("ratio", rep.ratio_upper.clone());
    t.row(i, format!("support={}", w.len()), "ratio_upper", fmt_rational(&rep.ratio_upper), true);
    Ok(t)
}

fn weak_instance(cfg: &SuiteConfig, i: u64, rng: &mut LabRng) -> LabResult<Tally> {
    let n = rng.gen_range(cfg.n_min..=cfg.n_max);
    let w = random_weight(rng, 2, n, cfg.scale_min, cfg.scale_max);
    let terms = rng.gen_range(1..=4);
    let f = random_step(rng, 2, terms, cfg.scale_min, cfg.scale_max);
    let k = [-2, -1, 1, 2][i as usize % 4];
    let mut t = Tally::default();
    let d = dilation_check(&w, &f, k, 2, cfg.cap)?;
    let scaled = &d.measure_alpha * pow2(-2 * k as i64);
    // CM is invariant: mass and shadow both scale by 2^{-kd}.
    let ok = d.pass && d.operator_identity && d.measure_beta == scaled && d.cm_beta == d.cm_alpha;
    t.check(ok, || format!("instance {i}, k = {k}: relabeling broken: {d:?}"));
    let r = weak_instance_check(&w, &f, 2, None, cfg.cap)?;
    t.metric("measure-p2", r.superlevel_measure.clone());
    t.row(i, format!("k={k}"), "superlevel measure", fmt_rational(&r.superlevel_measure), ok);
    Ok(t)
}

fn few(cfg: &SuiteConfig, i: u64, rng: &mut LabRng) -> LabResult<Tally> {
    let u = gen_collection_with(rng, cfg)?;
    let sub = random_subset(rng, &u);
    let fs = f_sets(&sub, &u, &classic_spec(u.dim()), cfg.cap)?;
    let shadow = sub.shadow().measure();
    let rep = pipher_sum(&fs, &cfg.epsilon, &shadow, Some((2, 2)), cfg.cap)?;
    let mut t = Tally::default();
    // The F sets partition the sub-collection.
    let members: usize = fs.iter().map(|f| f.members.len()).sum();
    t.check(members == sub.len(), || format!("instance {i}: F sets hold {members} of {}", sub.len()));
    t.metric("sum", rep.ratio_upper.clone());
    let lp = rep.lp.as_ref().expect("requested").ratio_upper.clone();
    t.metric("lp-n2-p2", lp.clone());
    t.row(i, format!("n={} sets={}", sub.len(), fs.len()), "sum;lp", format!("{};{}", rep.ratio_upper, lp), true);
    Ok(t)
}

fn uniform_high(cfg: &SuiteConfig, i: u64, rng: &mut LabRng) -> LabResult<Tally> {
    let u = gen_collection_with(rng, cfg)?;
    let ue = uniform_embed_construct(&u, cfg.depth, cfg.cap)?;
    let mut t = Tally::default();
    // emb(R)·R ⊂ V re-derived from the region itself.
    for m in &ue.members {
        let dil = m.rect.to_box().scale(&m.emb)?;
        let ok = m.contained && ue.v.contains_ae(&dil) && m.emb >= Rational::one();
        t.check(ok, || format!("instance {i}: {}·{} ⊄ V", m.emb, m.rect));
    }
    t.check(ue.monotonicity_violations() == 0, || format!("instance {i}: β profile increases"));
    t.check(ue.v.contains_region(&u.shadow()), || format!("instance {i}: V misses sh U"));
    t.metric("v-ratio", ue.v_ratio.clone());
    let sub = random_subset(rng, &u);
    let s = uniform_f_sum(&ue, &sub, &cfg.epsilon)?;
    t.metric("f-sum", s.ratio_upper.clone());
    t.row(i, format!("n={}", u.len()), "v_ratio;f_sum", format!("{};{}", ue.v_ratio, s.ratio_upper), true);
    Ok(t)
}

const SCAN_STEPS: i64 = 64;

fn emb_scan(cfg: &SuiteConfig, i: u64, rng: &mut LabRng) -> LabResult<Tally> {
    let pieces = rng.gen_range(cfg.n_min..=cfg.n_max);
    let boxes: Vec<DyadicRect> = (0..pieces).map(|_| random_rect(rng, 2, cfg.scale_min, cfg.scale_max)).collect();
    let v = Region::from_boxes(2, &boxes.iter().map(DyadicRect::to_box).collect::<Vec<_>>())?;
    // A dyadic rectangle inside one of the pieces.
    let host = &boxes[rng.gen_range(0..boxes.len())];
    let sides = host
        .sides
        .iter()
        .map(|s| {
            let down = rng.gen_range(0..=2);
            DyadicInterval::new(s.scale - down, (s.offset << down) + rng.gen_range(0..1i64 << down))
        })
        .collect();
    let r = DyadicRect::new(sides).to_box();
    let variant = match i % 4 {
        0 => EmbVariant::directional(0),
        1 => EmbVariant::directional(1),
        2 => EmbVariant::Uniform,
        _ => EmbVariant::ProductPair { first: 0, second: 1 },
    };
    let e = EmbSolver::new(&v).emb(&r, &variant)?;
    let mut t = Tally::default();
    let fits = |mu: &[Rational]| r.dilate(mu).map(|b| v.contains_ae(&b)).unwrap_or(false);
    let tiny = pow2(-40);
    match &variant {
        EmbVariant::ProductPair { first, second } => {
            t.check(fits(&e.mu) && &e.mu[*first] * &e.mu[*second] == e.value, || {
                format!("instance {i}: reported μ {:?} does not fit", e.mu)
            });
            for a in [*first, *second] {
                let mut up = e.mu.clone();
                up[a] += &tiny;
                t.check(!fits(&up), || format!("instance {i}: μ_{a} can grow past {}", e.mu[a]));
            }
            let scan = pair_scan(&r, &v, *first, *second);
            t.check(scan <= e.value, || format!("instance {i}: scan product {scan} beats {}", e.value));
        }
        _ => {
            let axes: Vec<usize> = match &variant {
                EmbVariant::Directional { axes } => axes.clone(),
                _ => vec![0, 1],
            };
            let at = |m: &Rational| {
                let mut mu = vec![Rational::one(); 2];
                for &a in &axes {
                    mu[a] = m.clone();
                }
                mu
            };
            t.check(fits(&at(&e.value)), || format!("instance {i}: Dil({}) ⊄ V", e.value));
            t.check(!fits(&at(&(&e.value + &tiny))), || format!("instance {i}: Dil just above {} ⊂ V", e.value));
            let scan = line_scan(|m| fits(&at(m)));
            let step = ratio(1, SCAN_STEPS);
            t.check(scan <= e.value && e.value < &scan + &step, || {
                format!("instance {i}: scan {scan} vs breakpoint {}", e.value)
            });
            t.check(e.mu == at(&e.value), || format!("instance {i}: witness {:?}", e.mu));
        }
    }
    t.row(i, format!("{variant:?}"), "emb", fmt_rational(&e.value), true);
    Ok(t)
}

/// Largest `1 + k/64` with the dilate inside, scanning upward until the first miss.
fn line_scan(fits: impl Fn(&Rational) -> bool) -> Rational {
    let step = ratio(1, SCAN_STEPS);
    let mut m = Rational::one();
    loop {
        let next = &m + &step;
        if !fits(&next) {
            return m;
        }
        m = next;
    }
}

/// Best product over the `1/64`-grid of factor pairs.
fn pair_scan(r: &Aabb, v: &Region, a: usize, b: usize) -> Rational {
    let step = ratio(1, SCAN_STEPS);
    let fits = |ma: &Rational, mb: &Rational| {
        let mut mu = vec![Rational::one(); r.dim()];
        mu[a] = ma.clone();
        mu[b] = mb.clone();
        r.dilate(&mu).map(|x| v.contains_ae(&x)).unwrap_or(false)
    };
    let mut best = Rational::one();
    let mut ma = Rational::one();
    while fits(&ma, &Rational::one()) {
        let mb = line_scan(|m| fits(&ma, m));
        best = best.max(&ma * &mb);
        ma += &step;
    }
    best
}

/// Suite outcome judged against the ledger.
#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub outcome: SuiteOutcome,
    pub ledger: Vec<LedgerCheck>,
    pub exact_pass: bool,
    pub pass: bool,
}

impl Verdict {
    pub fn summary(&self) -> String {
        let o = &self.outcome;
        let mut s = format!(
            "{}: {} ({} checks, {} violations",
            o.suite,
            if self.pass { "PASS" } else { "FAIL" },
            o.checks,
            o.violations
        );
        for c in &self.ledger {
            s.push_str("; ");
            s.push_str(&c.describe());
        }
        s.push(')');
        for e in &o.examples {
            s.push_str("\n    ");
            s.push_str(e);
        }
        s
    }
}

/// Compare every metric with the ledger, or freeze it.
pub fn judge(outcome: SuiteOutcome, ledger: &mut Ledger, freeze: bool) -> LabResult<Verdict> {
    let mut checks = Vec::new();
    for (m, v) in &outcome.metrics {
        checks.push(ledger.check(&outcome.ledger_key(m), v, &[outcome.seed], &outcome.corpus, freeze)?);
    }
    let exact_pass = outcome.violations == 0;
    let pass = exact_pass && checks.iter().all(|c| c.within);
    Ok(Verdict { outcome, ledger: checks, exact_pass, pass })
}
