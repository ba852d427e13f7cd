//! Landmark matching across consecutive, differently stained tissue sections,
//! and multi-stain neighbourhood features on the matched landmarks.
//!
//! The pipeline is:
//!
//! 1. load landmark centroids per slide ([`io`], [`model`]),
//! 2. match them pairwise and chain the matches across the stack ([`matching`]),
//! 3. unmix stained tiles into cell point sets ([`stain`]),
//! 4. compute per-landmark features and a first-principal-component score ([`features`]).
//!
//! [`synthetic`] and [`evaluation`] reproduce the controlled robustness
//! experiments for the matcher.

pub mod error;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod io;
pub mod matching;
pub mod model;
pub mod par;
pub mod stain;
pub mod synthetic;

pub use error::{Error, Result};
pub use geometry::{Point, Polygon, Window};
pub use matching::{chain_matches, match_bidirectional, match_directed, DSub, MatchParams};
pub use model::{
    auto_d_sub, CellMap, ChainRow, Direction, GroundTruthMatches, Landmark, MatchChain, MatchPair, MatchSet, SlideGraph,
};
