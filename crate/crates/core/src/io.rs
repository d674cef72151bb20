//! File formats shared by the library and the command line.
//!
//! Collections are `{"dim": d, "rects": [{"lo": [[m,k],...], "hi": [[m,k],...]}]}`
//! with each coordinate the dyadic rational `m·2^k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DyadicInterval, DyadicRect, RectCollection};
use crate::num::{exact_log2, DyadicRational, Rational};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RectRepr {
    pub lo: Vec<DyadicRational>,
    pub hi: Vec<DyadicRational>,
}

impl From<&DyadicRect> for RectRepr {
    fn from(r: &DyadicRect) -> Self {
        let dy = |q: Rational| DyadicRational::from_rational(&q).expect("dyadic endpoints");
        RectRepr { lo: r.sides.iter().map(|s| dy(s.lo())).collect(), hi: r.sides.iter().map(|s| dy(s.hi())).collect() }
    }
}

impl TryFrom<&RectRepr> for DyadicRect {
    type Error = Error;

    fn try_from(r: &RectRepr) -> Result<Self> {
        if r.lo.len() != r.hi.len() || r.lo.is_empty() {
            return Err(Error::Parse("rectangle needs matching nonempty lo/hi".into()));
        }
        let sides =
            r.lo.iter()
                .zip(&r.hi)
                .map(|(lo, hi)| dyadic_interval(&lo.to_rational(), &hi.to_rational()))
                .collect::<Result<Vec<_>>>()?;
        Ok(DyadicRect::new(sides))
    }
}

/// The dyadic interval `[lo, hi)`, if it is one.
pub fn dyadic_interval(lo: &Rational, hi: &Rational) -> Result<DyadicInterval> {
    let bad = || Error::Parse(format!("[{lo}, {hi}) is not a dyadic interval"));
    let len = hi - lo;
    let scale = exact_log2(&len).ok_or_else(bad)?;
    let off = lo / &len;
    if !off.is_integer() {
        return Err(bad());
    }
    let offset = i64::try_from(off.to_integer()).map_err(|_| bad())?;
    let scale = i32::try_from(scale).map_err(|_| bad())?;
    Ok(DyadicInterval::new(scale, offset))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionFile {
    pub dim: usize,
    pub rects: Vec<RectRepr>,
}

impl From<&RectCollection> for CollectionFile {
    fn from(u: &RectCollection) -> Self {
        CollectionFile { dim: u.dim(), rects: u.iter().map(RectRepr::from).collect() }
    }
}

impl TryFrom<&CollectionFile> for RectCollection {
    type Error = Error;

    fn try_from(f: &CollectionFile) -> Result<Self> {
        let rects = f.rects.iter().map(DyadicRect::try_from).collect::<Result<Vec<_>>>()?;
        RectCollection::new(f.dim, rects)
    }
}

/// Serde adapter writing rectangle lists in the `lo`/`hi` form.
pub mod serde_rects {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::RectRepr;
    use crate::geometry::DyadicRect;

    pub fn serialize<S: Serializer>(rs: &[DyadicRect], s: S) -> std::result::Result<S::Ok, S::Error> {
        rs.iter().map(RectRepr::from).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<DyadicRect>, D::Error> {
        let reprs: Vec<RectRepr> = Deserialize::deserialize(d)?;
        reprs.iter().map(|r| DyadicRect::try_from(r).map_err(serde::de::Error::custom)).collect()
    }
}

pub fn collection_to_json(u: &RectCollection) -> String {
    serde_json::to_string_pretty(&CollectionFile::from(u)).expect("collections serialize")
}

pub fn collection_from_json(s: &str) -> Result<RectCollection> {
    let f: CollectionFile = serde_json::from_str(s)?;
    RectCollection::try_from(&f)
}
