//! Frozen regression constants.
//!
//! A constant is written only when a run passes `--freeze`; otherwise the
//! observed value is compared against it and the file is left untouched.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use journe_core::num::{fmt_rational, serde_rational, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    #[serde(with = "serde_rational")]
    pub value: Rational,
    /// Unix seconds of the freezing run.
    pub frozen_at: u64,
    pub seeds: Vec<u64>,
    /// Corpus description at freezing time.
    #[serde(default)]
    pub corpus: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub constants: BTreeMap<String, LedgerEntry>,
}

/// Outcome of comparing one metric with its constant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LedgerCheck {
    pub key: String,
    #[serde(with = "serde_rational")]
    pub observed: Rational,
    #[serde(with = "serde_rational")]
    pub constant: Rational,
    pub within: bool,
    pub frozen: bool,
}

impl LedgerCheck {
    pub fn describe(&self) -> String {
        let verb = if self.frozen {
            "frozen at"
        } else if self.within {
            "≤"
        } else {
            "EXCEEDS"
        };
        format!("{} = {} {verb} {}", self.key, approx(&self.observed), approx(&self.constant))
    }
}

/// Short decimal rendering for logs; exact values live in the JSON.
pub fn approx(q: &Rational) -> String {
    use num_traits::ToPrimitive;
    match q.to_f64() {
        Some(x) if q.is_integer() || q.denom().bits() <= 16 => format!("{} (≈{x:.6})", fmt_rational(q)),
        Some(x) => format!("≈{x:.6}"),
        None => fmt_rational(q),
    }
}

impl Ledger {
    /// A missing file is an empty ledger.
    pub fn load(path: &Path) -> LabResult<Self> {
        match std::fs::read_to_string(path) {
            Ok(s) => Ok(serde_json::from_str(&s)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(LabError::io(path, e)),
        }
    }

    pub fn save(&self, path: &Path) -> LabResult<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s).map_err(|e| LabError::io(path, e))
    }

    pub fn get(&self, key: &str) -> Option<&LedgerEntry> {
        self.constants.get(key)
    }

    /// Compare `observed` with the constant for `key`, or freeze it.
    pub fn check(
        &mut self,
        key: &str,
        observed: &Rational,
        seeds: &[u64],
        corpus: &str,
        freeze: bool,
    ) -> LabResult<LedgerCheck> {
        if freeze {
            let frozen_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            self.constants.insert(
                key.to_string(),
                LedgerEntry { value: observed.clone(), frozen_at, seeds: seeds.to_vec(), corpus: corpus.to_string() },
            );
            return Ok(LedgerCheck {
                key: key.to_string(),
                observed: observed.clone(),
                constant: observed.clone(),
                within: true,
                frozen: true,
            });
        }
        let entry = self.constants.get(key).ok_or_else(|| LabError::LedgerMissing(key.to_string()))?;
        Ok(LedgerCheck {
            key: key.to_string(),
            observed: observed.clone(),
            constant: entry.value.clone(),
            within: observed <= &entry.value,
            frozen: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use journe_core::num::ratio;

    #[test]
    fn freeze_then_compare() {
        let mut l = Ledger::default();
        assert!(matches!(l.check("s/m", &ratio(1, 2), &[1], "", false), Err(LabError::LedgerMissing(_))));
        assert!(l.check("s/m", &ratio(1, 2), &[1], "c", true).unwrap().frozen);
        let before = l.clone();
        assert!(l.check("s/m", &ratio(1, 3), &[2], "", false).unwrap().within);
        assert!(!l.check("s/m", &ratio(2, 3), &[2], "", false).unwrap().within);
        assert_eq!(l, before);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.json");
        assert_eq!(Ledger::load(&path).unwrap(), Ledger::default());
        let mut l = Ledger::default();
        l.check("a/b", &ratio(7, 3), &[42], "corpus", true).unwrap();
        l.save(&path).unwrap();
        let back = Ledger::load(&path).unwrap();
        assert_eq!(back, l);
        assert!(std::fs::read_to_string(&path).unwrap().contains("\"7/3\""));
    }
}
