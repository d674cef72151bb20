//! Embeddedness sums over one collection and its random sub-collections.

use std::fmt;
use std::str::FromStr;

use journe_core::embedding::{EmbSpec, EmbVariant};
use journe_core::geometry::RectCollection;
use journe_core::journe::{f_sets, pipher_sum, uniform_embed_construct, uniform_f_sum, JourneContext, JourneVariant};
use journe_core::num::{fmt_rational, ratio, Rational};
use num_traits::Zero;

use crate::error::{LabError, LabResult};
use crate::gen::{instance_rng, random_subset};
use crate::ledger::{Ledger, LedgerCheck};
use crate::report::VerifyRow;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyVariant {
    Journe(JourneVariant),
    Few,
    UniformHigh,
}

impl VerifyVariant {
    pub fn name(&self) -> &'static str {
        match self {
            VerifyVariant::Journe(v) => v.name(),
            VerifyVariant::Few => "few",
            VerifyVariant::UniformHigh => "uniform-high",
        }
    }

    /// Ledger key of the ratio constant; ε other than 1/2 gets its own key.
    pub fn ledger_key(&self, epsilon: &Rational) -> String {
        let base = match self {
            VerifyVariant::Journe(v) => format!("journe/{}", v.name()),
            VerifyVariant::Few => "few/sum".to_string(),
            VerifyVariant::UniformHigh => "uniform-high/f-sum".to_string(),
        };
        if *epsilon == ratio(1, 2) {
            base
        } else {
            format!("{base}@epsilon={}", fmt_rational(epsilon))
        }
    }
}

impl fmt::Display for VerifyVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VerifyVariant {
    type Err = LabError;

    fn from_str(s: &str) -> LabResult<Self> {
        match s {
            "few" => Ok(VerifyVariant::Few),
            "uniform-high" => Ok(VerifyVariant::UniformHigh),
            _ => Ok(VerifyVariant::Journe(s.parse()?)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerifyRun {
    pub rows: Vec<VerifyRow>,
    pub ratios: Vec<Rational>,
    /// Exact checks that failed (containment of the uniform construction).
    pub violations: Vec<String>,
}

impl VerifyRun {
    pub fn max_ratio(&self) -> Rational {
        self.ratios.iter().max().cloned().unwrap_or_else(Rational::zero)
    }
}

/// Sums for `u` itself followed by `subsets` random sub-collections drawn
/// from stream 0 of `seed`.
pub fn verify_collection(
    u: &RectCollection,
    variant: VerifyVariant,
    epsilon: &Rational,
    subsets: usize,
    depth: u32,
    seed: u64,
    cap: usize,
) -> LabResult<VerifyRun> {
    let mut rng = instance_rng(seed, 0);
    let mut subs = vec![u.clone()];
    subs.extend((0..subsets).map(|_| random_subset(&mut rng, u)));
    let mut out = VerifyRun { rows: Vec::new(), ratios: Vec::new(), violations: Vec::new() };
    let mut push = |n: usize, lhs: &Rational, shadow: &Rational, r: Rational| {
        out.rows.push(VerifyRow {
            seed,
            variant: variant.name().to_string(),
            n_rects: n,
            epsilon: fmt_rational(epsilon),
            lhs_upper: fmt_rational(lhs),
            shadow: fmt_rational(shadow),
            ratio_upper: fmt_rational(&r),
            pass: true,
        });
        out.ratios.push(r);
    };
    match variant {
        VerifyVariant::Journe(v) => {
            let ctx = JourneContext::new(u, v, None, epsilon, cap)?;
            for s in &subs {
                let r = ctx.sum(s)?;
                push(r.n_rects, &r.lhs_upper, &r.shadow, r.ratio_upper);
            }
        }
        VerifyVariant::Few => {
            let spec = EmbSpec::new(EmbVariant::directional(0), JourneVariant::Classic.default_source(u.dim()));
            for s in &subs {
                let fs = f_sets(s, u, &spec, cap)?;
                let r = pipher_sum(&fs, epsilon, &s.shadow().measure(), None, cap)?;
                push(s.len(), &r.sum_upper, &r.shadow, r.ratio_upper);
            }
        }
        VerifyVariant::UniformHigh => {
            let ue = uniform_embed_construct(u, depth, cap)?;
            let bad = ue.containment_violations();
            if bad > 0 {
                out.violations.push(format!("{bad} rectangles with emb(R)·R ⊄ V"));
            }
            for s in &subs {
                let r = uniform_f_sum(&ue, s, epsilon)?;
                push(s.len(), &r.sum_upper, &r.shadow, r.ratio_upper);
            }
        }
    }
    Ok(out)
}

/// Marks each row against the ledger constant, freezing the maximum first
/// when asked.
pub fn judge_rows(
    run: &mut VerifyRun,
    key: &str,
    ledger: &mut Ledger,
    seed: u64,
    corpus: &str,
    freeze: bool,
) -> LabResult<LedgerCheck> {
    let check = ledger.check(key, &run.max_ratio(), &[seed], corpus, freeze)?;
    for (row, r) in run.rows.iter_mut().zip(&run.ratios) {
        row.pass = r <= &check.constant;
    }
    Ok(check)
}
