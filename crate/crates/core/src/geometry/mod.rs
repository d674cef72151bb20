//! Exact intervals, boxes, dyadic rectangles and regions.

mod aabb;
mod collection;
mod interval;
mod rect;
pub(crate) mod region;

pub use aabb::Aabb;
pub use collection::RectCollection;
pub use interval::{DyadicInterval, Interval};
pub use rect::DyadicRect;
pub use region::{CoverIndex, Region};
