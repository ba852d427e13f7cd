//! Landmark matching between consecutive sections.
//!
//! Each source landmark solves its own small problem: among the target
//! landmarks within `d_match` it picks the one whose neighbourhood star is
//! cheapest to assign onto its own. Claims on the same target are resolved
//! by lowest energy, and the final correspondence keeps only pairs found in
//! both directions.

mod assignment;
mod chain;
mod energy;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use assignment::{assignment_energy, min_cost_k_matching};
pub use chain::chain_matches;
pub use energy::neighbor_energy;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::model::{auto_d_sub, build_index, within_radius, Direction, Landmark, MatchPair, MatchSet, SlideGraph};
use crate::par;

/// Subgraph radius policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DSub {
    /// Derived per slide from the `(N+1)`-th nearest-neighbour distances.
    Auto,
    /// Fixed radius in micrometres.
    Fixed(f64),
}

impl std::str::FromStr for DSub {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(DSub::Auto);
        }
        s.parse::<f64>()
            .map(DSub::Fixed)
            .map_err(|_| Error::InvalidParameter(format!("d_sub must be `auto` or a number, got `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchParams {
    /// Candidate search radius, µm.
    pub d_match: f64,
    /// Number of neighbour associations summed into the match energy.
    pub n_neighbors: usize,
    pub d_sub: DSub,
    /// Fraction of landmarks that must reach `N+1` neighbours under `DSub::Auto`.
    pub coverage: f64,
    /// Optional upper bound on accepted match energies.
    pub energy_cap: Option<f64>,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams::tissue()
    }
}

impl MatchParams {
    /// Preset for registered tissue sections.
    pub fn tissue() -> Self {
        MatchParams { d_match: 300.0, n_neighbors: 4, d_sub: DSub::Auto, coverage: 0.9, energy_cap: None }
    }

    /// Preset for the synthetic 300 x 300 validation fields. Every landmark
    /// gets `N+1` neighbours, since sparse uniform fields leave isolated points
    /// that a partial coverage would cut off from any neighbourhood.
    pub fn synthetic() -> Self {
        MatchParams { d_match: 80.0, n_neighbors: 3, coverage: 1.0, ..MatchParams::tissue() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_match > 0.0 && self.d_match.is_finite()) {
            return Err(Error::InvalidParameter(format!("d_match must be positive, got {}", self.d_match)));
        }
        if self.n_neighbors == 0 {
            return Err(Error::InvalidParameter("n_neighbors must be at least 1".into()));
        }
        if let DSub::Fixed(d) = self.d_sub {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(format!("d_sub must be positive, got {d}")));
            }
        }
        if !(0.0..=1.0).contains(&self.coverage) {
            return Err(Error::InvalidParameter(format!("coverage must lie in [0, 1], got {}", self.coverage)));
        }
        if let Some(cap) = self.energy_cap {
            if !(cap > 0.0) {
                return Err(Error::InvalidParameter(format!("energy_cap must be positive, got {cap}")));
            }
        }
        Ok(())
    }

    /// Subgraph radius for one slide under this policy.
    pub fn resolve_d_sub(&self, landmarks: &[Landmark]) -> Result<f64> {
        match self.d_sub {
            DSub::Fixed(d) => Ok(d),
            DSub::Auto => auto_d_sub(landmarks, self.n_neighbors, self.coverage),
        }
    }

    pub fn build_graph(&self, landmarks: &[Landmark]) -> Result<SlideGraph> {
        self.validate()?;
        SlideGraph::build(landmarks, self.resolve_d_sub(landmarks)?)
    }
}

/// Target landmarks within `d_match` of one source landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub g_id: String,
    pub candidates: Vec<String>,
}

/// Candidate sets for every landmark of `g`, in id order.
pub fn candidate_sets(g: &SlideGraph, h: &SlideGraph, d_match: f64) -> Vec<CandidateSet> {
    let h_points: Vec<Point> = h.landmarks().iter().map(|l| l.position).collect();
    let tree = build_index(h_points.iter().copied());
    g.landmarks()
        .iter()
        .map(|l| CandidateSet {
            g_id: l.id.clone(),
            candidates: within_radius(&tree, &h_points, l.position, d_match)
                .into_iter()
                .map(|j| h.landmarks()[j].id.clone())
                .collect(),
        })
        .collect()
}

/// Neighbour positions of landmark `i`, skipping any that coincide with it.
fn star(graph: &SlideGraph, i: usize) -> Vec<Point> {
    let c = graph.position(i);
    graph.neighbors(i).iter().map(|&k| graph.position(k)).filter(|&p| p != c).collect()
}

/// Best target for one source landmark: `(target index, energy)`.
fn best_target(
    g: &SlideGraph,
    h: &SlideGraph,
    h_stars: &[Vec<Point>],
    i: usize,
    candidates: &[usize],
    n: usize,
) -> Option<(usize, f64)> {
    let g_star = star(g, i);
    if g_star.is_empty() {
        return None;
    }
    let g_i = g.position(i);
    let mut best: Option<(usize, f64)> = None;
    // Candidates are in ascending id order, so strict improvement keeps the
    // lexicographically smallest target on ties.
    for &j in candidates {
        if h_stars[j].is_empty() {
            continue;
        }
        let e = assignment::assignment_energy_lenient(&g_star, &h_stars[j], g_i, h.position(j), n);
        if best.is_none_or(|(_, be)| e < be) {
            best = Some((j, e));
        }
    }
    best
}

/// One-directional matching of `g` onto `h`, injective on both sides.
pub fn match_directed(g: &SlideGraph, h: &SlideGraph, params: &MatchParams) -> Result<MatchSet> {
    params.validate()?;
    Ok(directed(g, h, params, Direction::Forward))
}

fn directed(g: &SlideGraph, h: &SlideGraph, params: &MatchParams, direction: Direction) -> MatchSet {
    let h_points: Vec<Point> = h.landmarks().iter().map(|l| l.position).collect();
    let tree = build_index(h_points.iter().copied());
    let h_stars: Vec<Vec<Point>> = (0..h.len()).map(|j| star(h, j)).collect();

    let proposals: Vec<Option<(usize, f64)>> = par::map_range(g.len(), |i| {
        let candidates = within_radius(&tree, &h_points, g.position(i), params.d_match);
        best_target(g, h, &h_stars, i, &candidates, params.n_neighbors)
    });

    // Sequential conflict resolution: lowest energy wins, then smallest source id.
    let mut winner: Vec<Option<(usize, f64)>> = vec![None; h.len()];
    for (i, p) in proposals.iter().enumerate() {
        let Some((j, e)) = *p else { continue };
        if winner[j].is_none_or(|(_, we)| e < we) {
            winner[j] = Some((i, e));
        }
    }
    let mut pairs: Vec<MatchPair> = winner
        .iter()
        .enumerate()
        .filter_map(|(j, w)| w.map(|(i, e)| (i, j, e)))
        .filter(|&(_, _, e)| params.energy_cap.is_none_or(|cap| e <= cap))
        .map(|(i, j, e)| MatchPair { g_id: g.landmarks()[i].id.clone(), h_id: h.landmarks()[j].id.clone(), energy: e })
        .collect();
    pairs.sort_by(|a, b| a.g_id.cmp(&b.g_id));
    MatchSet { source_slide: g.slide_id().to_string(), target_slide: h.slide_id().to_string(), direction, pairs }
}

/// Pairs found both from `g` to `h` and from `h` to `g`; energies are the forward ones.
pub fn match_bidirectional(g: &SlideGraph, h: &SlideGraph, params: &MatchParams) -> Result<MatchSet> {
    let (forward, backward) = match_both(g, h, params)?;
    Ok(intersect(&forward, &backward))
}

/// Both directed match sets; the second has `h` as its source.
pub fn match_both(g: &SlideGraph, h: &SlideGraph, params: &MatchParams) -> Result<(MatchSet, MatchSet)> {
    params.validate()?;
    let forward = directed(g, h, params, Direction::Forward);
    let mut backward = directed(h, g, params, Direction::Backward);
    // Keep slide roles explicit: the backward set maps h ids to g ids.
    backward.direction = Direction::Backward;
    Ok((forward, backward))
}

fn intersect(forward: &MatchSet, backward: &MatchSet) -> MatchSet {
    let back: BTreeSet<(&str, &str)> = backward.pairs.iter().map(|p| (p.h_id.as_str(), p.g_id.as_str())).collect();
    MatchSet {
        source_slide: forward.source_slide.clone(),
        target_slide: forward.target_slide.clone(),
        direction: Direction::Bidirectional,
        pairs: forward.pairs.iter().filter(|p| back.contains(&(p.g_id.as_str(), p.h_id.as_str()))).cloned().collect(),
    }
}

/// Builds graphs for two landmark sets and matches them bidirectionally.
pub fn match_landmarks(g: &[Landmark], h: &[Landmark], params: &MatchParams) -> Result<MatchSet> {
    let gg = params.build_graph(g)?;
    let hh = params.build_graph(h)?;
    match_bidirectional(&gg, &hh, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lms(slide: &str, prefix: &str, coords: &[(f64, f64)]) -> Vec<Landmark> {
        coords.iter().enumerate().map(|(i, &(x, y))| Landmark::new(slide, format!("{prefix}{i:02}"), x, y)).collect()
    }

    fn scatter(n: usize, seed: u64) -> Vec<(f64, f64)> {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) * 300.0
        };
        (0..n).map(|_| (next(), next())).collect()
    }

    #[test]
    fn self_match_is_identity() {
        let pts = scatter(30, 7);
        let a = lms("A", "a", &pts);
        let b = lms("B", "a", &pts);
        let params = MatchParams::synthetic();
        let (ga, gb) = (params.build_graph(&a).unwrap(), params.build_graph(&b).unwrap());
        let m = match_directed(&ga, &gb, &params).unwrap();
        assert!(m.pairs.iter().all(|p| p.g_id == p.h_id && p.energy == 0.0));
        let bi = match_bidirectional(&ga, &gb, &params).unwrap();
        assert!(bi.pairs.iter().all(|p| p.g_id == p.h_id));
    }

    #[test]
    fn no_candidates_means_unmatched() {
        let a = lms("A", "a", &[(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]);
        let b = lms("B", "b", &[(1000.0, 0.0), (1010.0, 0.0), (1000.0, 10.0)]);
        let params = MatchParams { d_sub: DSub::Fixed(50.0), ..MatchParams::synthetic() };
        let m = match_directed(&params.build_graph(&a).unwrap(), &params.build_graph(&b).unwrap(), &params).unwrap();
        assert!(m.pairs.is_empty());
    }

    #[test]
    fn candidate_sets_respect_radius() {
        let a = lms("A", "a", &[(0.0, 0.0)]);
        let b = lms("B", "b", &[(0.0, 50.0), (0.0, 80.0), (0.0, 81.0)]);
        let ga = SlideGraph::build(&a, 10.0).unwrap();
        let gb = SlideGraph::build(&b, 10.0).unwrap();
        let c = candidate_sets(&ga, &gb, 80.0);
        assert_eq!(c[0].candidates, vec!["b00".to_string(), "b01".to_string()]);
    }

    #[test]
    fn energy_cap_drops_pairs() {
        let pts = scatter(30, 11);
        let a = lms("A", "a", &pts);
        let shifted: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x + 3.0, y - 2.0)).collect();
        let b = lms("B", "b", &shifted);
        let open = MatchParams::synthetic();
        let m_open = match_landmarks(&a, &b, &open).unwrap();
        let capped = MatchParams { energy_cap: Some(1e-3), ..open };
        let m_cap = match_landmarks(&a, &b, &capped).unwrap();
        assert!(m_cap.pairs.len() < m_open.pairs.len());
        assert!(m_cap.pairs.iter().all(|p| p.energy <= 1e-3));
    }

    #[test]
    fn forward_only_pair_is_excluded() {
        let f = MatchSet {
            source_slide: "A".into(),
            target_slide: "B".into(),
            direction: Direction::Forward,
            pairs: vec![
                MatchPair { g_id: "a1".into(), h_id: "b1".into(), energy: 0.1 },
                MatchPair { g_id: "a2".into(), h_id: "b2".into(), energy: 0.2 },
            ],
        };
        let b = MatchSet {
            source_slide: "B".into(),
            target_slide: "A".into(),
            direction: Direction::Backward,
            pairs: vec![MatchPair { g_id: "b1".into(), h_id: "a1".into(), energy: 0.3 }],
        };
        let bi = intersect(&f, &b);
        assert_eq!(bi.pairs.len(), 1);
        assert_eq!(bi.pairs[0].energy, 0.1);
    }

    #[test]
    fn params_validation() {
        assert!(MatchParams { d_match: 0.0, ..MatchParams::tissue() }.validate().is_err());
        assert!(MatchParams { n_neighbors: 0, ..MatchParams::tissue() }.validate().is_err());
        assert!(MatchParams { energy_cap: Some(0.0), ..MatchParams::tissue() }.validate().is_err());
        assert_eq!("auto".parse::<DSub>().unwrap(), DSub::Auto);
        assert_eq!("120".parse::<DSub>().unwrap(), DSub::Fixed(120.0));
        assert!("x".parse::<DSub>().is_err());
    }
}
