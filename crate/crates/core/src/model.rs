//! Domain types shared by every stage of the pipeline.
//!
//! All coordinates are micrometres in the shared, rigidly registered frame.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon};

/// One landmark slice (a glomerulus cut) in one section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: String,
    pub slide_id: String,
    pub position: Point,
    pub boundary: Option<Polygon>,
}

impl Landmark {
    pub fn new(slide_id: impl Into<String>, id: impl Into<String>, x: f64, y: f64) -> Self {
        Landmark { id: id.into(), slide_id: slide_id.into(), position: Point::new(x, y), boundary: None }
    }

    pub fn with_boundary(mut self, boundary: Polygon) -> Self {
        self.boundary = Some(boundary);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("empty landmark id".into()));
        }
        if !self.position.is_finite() {
            return Err(Error::Validation(format!("landmark `{}` has non-finite coordinates", self.id)));
        }
        if let Some(poly) = &self.boundary {
            if poly.vertices.len() < 3 {
                return Err(Error::Validation(format!("landmark `{}` boundary has fewer than 3 vertices", self.id)));
            }
            if poly.vertices.iter().any(|p| !p.is_finite()) {
                return Err(Error::Validation(format!("landmark `{}` boundary has non-finite vertices", self.id)));
            }
            if !poly.is_simple() {
                return Err(Error::Validation(format!("landmark `{}` boundary is not a simple polygon", self.id)));
            }
            if !poly.contains_strict(self.position) {
                return Err(Error::Validation(format!("landmark `{}` centroid lies outside its boundary", self.id)));
            }
        }
        Ok(())
    }

    pub fn boundary_or_err(&self) -> Result<&Polygon> {
        self.boundary.as_ref().ok_or_else(|| Error::MissingBoundary(self.id.clone()))
    }
}

/// Checks every landmark and rejects duplicate ids within a slide.
pub fn validate_landmarks(landmarks: &[Landmark]) -> Result<()> {
    let mut seen = HashSet::new();
    for lm in landmarks {
        lm.validate()?;
        if !seen.insert((lm.slide_id.as_str(), lm.id.as_str())) {
            return Err(Error::Validation(format!("duplicate landmark id `{}` in slide `{}`", lm.id, lm.slide_id)));
        }
    }
    Ok(())
}

type Indexed = GeomWithData<[f64; 2], usize>;

pub(crate) fn build_index(points: impl Iterator<Item = Point>) -> RTree<Indexed> {
    RTree::bulk_load(points.enumerate().map(|(i, p)| Indexed::new([p.x, p.y], i)).collect())
}

/// Indices of all points within `radius` (inclusive, Euclidean) of `center`.
pub(crate) fn within_radius(tree: &RTree<Indexed>, points: &[Point], center: Point, radius: f64) -> Vec<usize> {
    // The tree filters on squared distance; pad it and confirm with the exact metric.
    let pad = radius * (1.0 + 1e-9) + 1e-12;
    let mut out: Vec<usize> = tree
        .locate_within_distance([center.x, center.y], pad * pad)
        .map(|e| e.data)
        .filter(|&i| points[i].distance(center) <= radius)
        .collect();
    out.sort_unstable();
    out
}

/// All landmarks of one section plus the distance-bounded edge structure.
#[derive(Debug, Clone)]
pub struct SlideGraph {
    slide_id: String,
    landmarks: Vec<Landmark>,
    d_sub: f64,
    neighbors: Vec<Vec<usize>>,
    by_id: HashMap<String, usize>,
}

impl SlideGraph {
    /// Builds the graph whose edges are all landmark pairs at distance `<= d_sub`.
    ///
    /// Landmarks are stored sorted by id so the result does not depend on input order.
    pub fn build(landmarks: &[Landmark], d_sub: f64) -> Result<Self> {
        if !(d_sub > 0.0 && d_sub.is_finite()) {
            return Err(Error::InvalidParameter(format!("d_sub must be positive, got {d_sub}")));
        }
        validate_landmarks(landmarks)?;
        let slide_id = landmarks.first().map(|l| l.slide_id.clone()).unwrap_or_default();
        if let Some(other) = landmarks.iter().find(|l| l.slide_id != slide_id) {
            return Err(Error::Validation(format!(
                "landmarks from slides `{}` and `{}` mixed in one graph",
                slide_id, other.slide_id
            )));
        }
        let mut landmarks = landmarks.to_vec();
        landmarks.sort_by(|a, b| a.id.cmp(&b.id));
        let points: Vec<Point> = landmarks.iter().map(|l| l.position).collect();
        let tree = build_index(points.iter().copied());
        let neighbors = points
            .iter()
            .enumerate()
            .map(|(i, &p)| within_radius(&tree, &points, p, d_sub).into_iter().filter(|&j| j != i).collect())
            .collect();
        let by_id = landmarks.iter().enumerate().map(|(i, l)| (l.id.clone(), i)).collect();
        Ok(SlideGraph { slide_id, landmarks, d_sub, neighbors, by_id })
    }

    pub fn slide_id(&self) -> &str {
        &self.slide_id
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn d_sub(&self) -> f64 {
        self.d_sub
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn position(&self, i: usize) -> Point {
        self.landmarks[i].position
    }

    /// Indices of the landmarks adjacent to landmark `i`, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Undirected edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, ns) in self.neighbors.iter().enumerate() {
            out.extend(ns.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    /// Edges as id pairs, each pair lexicographically ordered.
    pub fn edge_ids(&self) -> BTreeSet<(String, String)> {
        self.edges()
            .into_iter()
            .map(|(i, j)| {
                let (a, b) = (&self.landmarks[i].id, &self.landmarks[j].id);
                if a <= b {
                    (a.clone(), b.clone())
                } else {
                    (b.clone(), a.clone())
                }
            })
            .collect()
    }
}

/// Smallest distance such that at least `coverage` of the landmarks have `n + 1`
/// neighbours within it.
///
/// Exact: the `(n+1)`-th nearest-neighbour distance is computed per landmark and
/// the required order statistic is returned. With `coverage = 0` the smallest
/// such distance is returned.
pub fn auto_d_sub(landmarks: &[Landmark], n: usize, coverage: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&coverage) {
        return Err(Error::InvalidParameter(format!("coverage must lie in [0, 1], got {coverage}")));
    }
    let k = n + 1;
    if landmarks.len() <= k {
        return Err(Error::InsufficientData(format!(
            "auto d_sub with N={n} needs more than {k} landmarks, got {}",
            landmarks.len()
        )));
    }
    let points: Vec<Point> = landmarks.iter().map(|l| l.position).collect();
    let tree = build_index(points.iter().copied());
    let mut kth: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut dists: Vec<f64> = tree
                .nearest_neighbor_iter(&[p.x, p.y])
                .filter(|e| e.data != i)
                .take(k + 1)
                .map(|e| points[e.data].distance(p))
                .collect();
            // The tree orders by squared distance; re-sort on the exact metric.
            dists.sort_by(f64::total_cmp);
            dists[k - 1]
        })
        .collect();
    kth.sort_by(f64::total_cmp);
    let required = ((coverage * kth.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let d = kth[required.min(kth.len()) - 1];
    if d > 0.0 {
        Ok(d)
    } else {
        // Coincident landmarks give zero distances; never return a zero radius.
        kth.into_iter().find(|&d| d > 0.0).ok_or_else(|| Error::Degenerate("all landmarks coincide".into()))
    }
}

/// Which way a match set was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
    Bidirectional,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "G->H",
            Direction::Backward => "H->G",
            Direction::Bidirectional => "bidirectional",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "G->H" => Some(Direction::Forward),
            "H->G" => Some(Direction::Backward),
            "bidirectional" => Some(Direction::Bidirectional),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub g_id: String,
    pub h_id: String,
    pub energy: f64,
}

/// Landmark associations between a source and a target slide.
///
/// `g_id` always refers to `source_slide` and `h_id` to `target_slide`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub source_slide: String,
    pub target_slide: String,
    pub direction: Direction,
    pub pairs: Vec<MatchPair>,
}

impl MatchSet {
    pub fn pair_ids(&self) -> BTreeSet<(String, String)> {
        self.pairs.iter().map(|p| (p.g_id.clone(), p.h_id.clone())).collect()
    }

    /// True when no source or target id occurs twice.
    pub fn is_injective(&self) -> bool {
        let mut gs = HashSet::new();
        let mut hs = HashSet::new();
        self.pairs.iter().all(|p| gs.insert(&p.g_id) && hs.insert(&p.h_id))
    }

    pub fn target_of(&self, g_id: &str) -> Option<&MatchPair> {
        self.pairs.iter().find(|p| p.g_id == g_id)
    }
}

/// One row of a chain: a landmark id per slide, `None` outside the matched run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainRow {
    pub ids: Vec<Option<String>>,
}

impl ChainRow {
    pub fn is_complete(&self) -> bool {
        self.ids.iter().all(Option::is_some)
    }

    pub fn span(&self) -> Option<(usize, usize)> {
        let first = self.ids.iter().position(Option::is_some)?;
        let last = self.ids.iter().rposition(Option::is_some)?;
        Some((first, last))
    }
}

/// Landmark correspondences spanning an ordered stack of slides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchChain {
    pub slides: Vec<String>,
    pub rows: Vec<ChainRow>,
}

impl MatchChain {
    /// Stable row identifier, derived from the row position.
    pub fn chain_id(index: usize) -> String {
        format!("chain{index:04}")
    }

    pub fn complete_rows(&self) -> impl Iterator<Item = (usize, &ChainRow)> {
        self.rows.iter().enumerate().filter(|(_, r)| r.is_complete())
    }
}

/// Point set of one cell type detected in one slide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMap {
    pub slide_id: String,
    pub cell_type: String,
    pub points: Vec<Point>,
}

impl CellMap {
    pub fn new(slide_id: impl Into<String>, cell_type: impl Into<String>, points: Vec<Point>) -> Self {
        CellMap { slide_id: slide_id.into(), cell_type: cell_type.into(), points }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cell_type.is_empty() {
            return Err(Error::Validation("empty cell type".into()));
        }
        if self.points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation(format!(
                "cell map `{}` in slide `{}` has non-finite points",
                self.cell_type, self.slide_id
            )));
        }
        Ok(())
    }
}

/// Reference correspondences: one row per association group, one column per slide.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthMatches {
    pub slides: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl GroundTruthMatches {
    pub fn new(slides: Vec<String>, rows: Vec<Vec<Option<String>>>) -> Result<Self> {
        let gt = GroundTruthMatches { slides, rows };
        gt.validate()?;
        Ok(gt)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen: Vec<HashSet<&str>> = vec![HashSet::new(); self.slides.len()];
        for row in &self.rows {
            if row.len() != self.slides.len() {
                return Err(Error::Validation(format!(
                    "ground-truth row has {} cells, expected {}",
                    row.len(),
                    self.slides.len()
                )));
            }
            for (col, cell) in row.iter().enumerate() {
                if let Some(id) = cell {
                    if !seen[col].insert(id) {
                        return Err(Error::Validation(format!(
                            "landmark `{id}` of slide `{}` appears in more than one ground-truth row",
                            self.slides[col]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn column(&self, slide: &str) -> Option<usize> {
        self.slides.iter().position(|s| s == slide)
    }

    /// All landmark ids listed for `slide`.
    pub fn universe(&self, slide: &str) -> Result<BTreeSet<String>> {
        let c = self.column_or_err(slide)?;
        Ok(self.rows.iter().filter_map(|r| r[c].clone()).collect())
    }

    /// True pairs between two slides.
    pub fn pairs(&self, source: &str, target: &str) -> Result<BTreeSet<(String, String)>> {
        let (a, b) = (self.column_or_err(source)?, self.column_or_err(target)?);
        Ok(self.rows.iter().filter_map(|r| Some((r[a].clone()?, r[b].clone()?))).collect())
    }

    /// Ids of `slide` that have no counterpart in `other`.
    pub fn unpaired(&self, slide: &str, other: &str) -> Result<BTreeSet<String>> {
        let (a, b) = (self.column_or_err(slide)?, self.column_or_err(other)?);
        Ok(self.rows.iter().filter(|r| r[b].is_none()).filter_map(|r| r[a].clone()).collect())
    }

    fn column_or_err(&self, slide: &str) -> Result<usize> {
        self.column(slide).ok_or_else(|| Error::Validation(format!("slide `{slide}` not present in ground truth")))
    }

    /// Truth for two slides from explicit pairs and unpaired ids.
    pub fn from_pairs(
        source: &str,
        target: &str,
        pairs: &[(String, String)],
        unpaired_source: &[String],
        unpaired_target: &[String],
    ) -> Result<Self> {
        let mut rows: Vec<Vec<Option<String>>> =
            pairs.iter().map(|(g, h)| vec![Some(g.clone()), Some(h.clone())]).collect();
        rows.extend(unpaired_source.iter().map(|g| vec![Some(g.clone()), None]));
        rows.extend(unpaired_target.iter().map(|h| vec![None, Some(h.clone())]));
        GroundTruthMatches::new(vec![source.to_string(), target.to_string()], rows)
    }

    /// Pairs per adjacent slide as a map from source id to target id.
    pub fn successor_map(&self, col: usize) -> BTreeMap<String, String> {
        self.rows.iter().filter_map(|r| Some((r[col].clone()?, r.get(col + 1)?.clone()?))).collect()
    }
}
