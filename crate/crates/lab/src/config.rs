//! Suite parameters, stored as JSON with rationals written `"p/q"`.

use std::path::{Path, PathBuf};

use journe_core::journe::JourneVariant;
use journe_core::num::{ratio, serde_rational, Rational};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};
use crate::gen::GenMode;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    pub dim: usize,
    /// Number of corpus instances.
    pub count: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Side lengths `2^k` with `scale_min ≤ k ≤ scale_max`.
    pub scale_min: i32,
    pub scale_max: i32,
    /// Offset bound `|j| ≤ offsets` for the exhaustive grid suites.
    #[serde(default = "default_offsets")]
    pub offsets: i64,
    pub mode: GenMode,
    #[serde(default)]
    pub variant: Option<JourneVariant>,
    #[serde(with = "serde_rational")]
    pub epsilon: Rational,
    #[serde(with = "serde_rational")]
    pub mu: Rational,
    #[serde(with = "serde_rational")]
    pub theta: Rational,
    /// Shifted-grid depth `𝗱`.
    pub depth: u32,
    /// Random sub-collections per instance.
    pub subsets: usize,
    pub cap: usize,
    #[serde(default)]
    pub report: Option<PathBuf>,
}

fn default_offsets() -> i64 {
    64
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            dim: 2,
            count: 100,
            n_min: 1,
            n_max: 12,
            scale_min: 0,
            scale_max: 4,
            offsets: default_offsets(),
            mode: GenMode::Random,
            variant: None,
            epsilon: ratio(1, 2),
            mu: Rational::from_integer(2.into()),
            theta: ratio(8, 9),
            depth: 2,
            subsets: 0,
            cap: journe_core::maximal::DEFAULT_CAP,
            report: None,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> LabResult<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if !(1..=4).contains(&self.dim) {
            return bad(format!("dim {} outside 1..=4", self.dim));
        }
        if self.count == 0 {
            return bad("count must be positive".into());
        }
        if self.n_min == 0 || self.n_min > self.n_max {
            return bad(format!("need 1 ≤ n_min ≤ n_max, got {}..{}", self.n_min, self.n_max));
        }
        if self.scale_min > self.scale_max || self.scale_min < -30 || self.scale_max > 30 {
            return bad(format!("scales {}..{} outside -30..=30", self.scale_min, self.scale_max));
        }
        if !(0..=1 << 16).contains(&self.offsets) {
            return bad(format!("offsets {} outside 0..=65536", self.offsets));
        }
        if self.epsilon <= Rational::zero() {
            return bad("ε must be positive".into());
        }
        if self.mu < Rational::one() {
            return bad("μ must be at least 1".into());
        }
        if self.theta <= Rational::zero() || self.theta >= Rational::one() {
            return bad("θ must lie in (0, 1)".into());
        }
        if !(1..=8).contains(&self.depth) {
            return bad(format!("depth {} outside 1..=8", self.depth));
        }
        if self.cap == 0 {
            return bad("cap must be positive".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    pub fn from_json(s: &str) -> LabResult<Self> {
        let cfg: SuiteConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &Path) -> LabResult<()> {
        std::fs::write(path, self.to_json()).map_err(|e| LabError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = SuiteConfig { variant: Some(JourneVariant::Redux), theta: ratio(7, 9), ..SuiteConfig::default() };
        let s = cfg.to_json();
        assert!(s.contains("\"7/9\"") && s.contains("\"redux\""));
        assert_eq!(SuiteConfig::from_json(&s).unwrap(), cfg);
    }

    #[test]
    fn rejects_out_of_range() {
        for cfg in [
            SuiteConfig { dim: 0, ..SuiteConfig::default() },
            SuiteConfig { n_min: 5, n_max: 4, ..SuiteConfig::default() },
            SuiteConfig { theta: ratio(1, 1), ..SuiteConfig::default() },
            SuiteConfig { epsilon: ratio(0, 1), ..SuiteConfig::default() },
        ] {
            assert!(SuiteConfig::from_json(&cfg.to_json()).is_err());
        }
    }
}
