//! Exact-arithmetic constructions around Journé's covering lemma: dyadic and
//! shifted grids, maximal-operator superlevel sets, enlarged sets and
//! embeddedness, covering decompositions, and product Carleson norms.

pub mod carleson;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod grids;
pub mod haar;
pub mod io;
pub mod journe;
pub mod maximal;
pub mod num;

pub use error::{Error, Result};
