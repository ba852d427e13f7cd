//! Neighbourhood features around matched landmarks and their ranking score.
//!
//! Every slide is read in its own local frame: the window is a square of
//! fixed side centred on that slide's copy of the matched landmark. Features
//! that combine slides superimpose those local frames by aligning the
//! landmark centroids.

mod pca;

use std::collections::BTreeMap;

use rstar::RTree;
use serde::{Deserialize, Serialize};

pub use pca::{pca_rank, score_histogram, RankScore};

use crate::error::{Error, Result};
use crate::evaluation::mean_defined;
use crate::geometry::{Point, Polygon, Window};
use crate::model::{CellMap, Landmark, MatchChain};
use crate::par;

/// Side of the square neighbourhood window, µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighbourhoodSpec {
    pub size: f64,
}

impl Default for NeighbourhoodSpec {
    fn default() -> Self {
        NeighbourhoodSpec { size: 258.0 }
    }
}

impl NeighbourhoodSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.size > 0.0 && self.size.is_finite()) {
            return Err(Error::InvalidParameter(format!("neighbourhood size must be positive, got {}", self.size)));
        }
        Ok(())
    }

    pub fn window_at(&self, center: Point) -> Window {
        Window::new(center, self.size)
    }
}

/// Cell counts and areas of the parts of a window inside and outside a boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionCounts {
    pub inside: usize,
    pub outside: usize,
    pub area_inside: f64,
    pub area_outside: f64,
}

impl RegionCounts {
    pub fn in_window(&self) -> usize {
        self.inside + self.outside
    }

    pub fn density_inside(&self) -> Option<f64> {
        (self.area_inside > 0.0).then(|| self.inside as f64 / self.area_inside)
    }

    pub fn density_outside(&self) -> Option<f64> {
        (self.area_outside > 0.0).then(|| self.outside as f64 / self.area_outside)
    }
}

/// Splits the cells in `window` into strictly-inside-boundary and the rest.
pub fn region_counts(cells: &[Point], boundary: &Polygon, window: &Window) -> RegionCounts {
    let area_inside = boundary.intersection_area(window).min(window.area());
    let (mut inside, mut outside) = (0, 0);
    for &p in cells.iter().filter(|&&p| window.contains(p)) {
        if boundary.contains_strict(p) {
            inside += 1;
        } else {
            outside += 1;
        }
    }
    RegionCounts { inside, outside, area_inside, area_outside: (window.area() - area_inside).max(0.0) }
}

fn glom_region(cells: &CellMap, glom: &Landmark, spec: &NeighbourhoodSpec) -> Result<RegionCounts> {
    spec.validate()?;
    let boundary = glom.boundary_or_err()?;
    Ok(region_counts(&cells.points, boundary, &spec.window_at(glom.position)))
}

/// Cells strictly inside the landmark boundary per µm² of boundary within the window.
pub fn density_inside(cells: &CellMap, glom: &Landmark, spec: &NeighbourhoodSpec) -> Result<f64> {
    glom_region(cells, glom, spec)?
        .density_inside()
        .ok_or_else(|| Error::Degenerate(format!("landmark `{}` has zero area inside its window", glom.id)))
}

/// Cells in the window but not strictly inside the boundary, per µm² of that area.
pub fn density_outside(cells: &CellMap, glom: &Landmark, spec: &NeighbourhoodSpec) -> Result<f64> {
    glom_region(cells, glom, spec)?
        .density_outside()
        .ok_or_else(|| Error::Degenerate(format!("landmark `{}` covers its whole window", glom.id)))
}

/// Mean distance to the boundary over window cells not strictly inside it.
///
/// `Ok(None)` when no cell contributes.
pub fn mean_distance_to_glomerulus(cells: &CellMap, glom: &Landmark, spec: &NeighbourhoodSpec) -> Result<Option<f64>> {
    spec.validate()?;
    let boundary = glom.boundary_or_err()?;
    Ok(mean_boundary_distance(&cells.points, boundary, &spec.window_at(glom.position)))
}

fn mean_boundary_distance(cells: &[Point], boundary: &Polygon, window: &Window) -> Option<f64> {
    mean_defined(
        cells
            .iter()
            .filter(|&&p| window.contains(p) && !boundary.contains_strict(p))
            .map(|&p| Some(boundary.boundary_distance(p))),
    )
}

/// Mean, over `a` cells in the window, of the distance to the nearest `b` cell in the window.
pub fn mean_pairwise_distance(a: &[Point], b: &[Point], window: &Window) -> Option<f64> {
    let targets: Vec<[f64; 2]> = b.iter().filter(|&&p| window.contains(p)).map(|p| [p.x, p.y]).collect();
    if targets.is_empty() {
        return None;
    }
    let tree = RTree::bulk_load(targets);
    mean_defined(
        a.iter()
            .filter(|&&p| window.contains(p))
            .map(|&p| tree.nearest_neighbor(&[p.x, p.y]).map(|q| p.distance(Point::new(q[0], q[1])))),
    )
}

/// Cell types that make up the feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePanel {
    /// Type present in every slide.
    pub shared: String,
    /// Types each present in one home slide.
    pub specific: Vec<String>,
}

impl Default for FeaturePanel {
    fn default() -> Self {
        FeaturePanel { shared: "CD3".into(), specific: ["CD68", "CD163", "CD206", "MS4A4A"].map(String::from).to_vec() }
    }
}

impl FeaturePanel {
    /// Canonical column order: per specific type density inside, density
    /// outside, distance to glomerulus; then the shared type's averaged
    /// densities, each specific type's distance to the shared type, and the
    /// shared type's averaged distance to glomerulus.
    pub fn column_names(&self) -> Vec<String> {
        let t = &self.shared;
        let mut cols = Vec::with_capacity(4 * self.specific.len() + 3);
        cols.extend(self.specific.iter().map(|m| format!("density_inside_{m}")));
        cols.extend(self.specific.iter().map(|m| format!("density_outside_{m}")));
        cols.extend(self.specific.iter().map(|m| format!("distance_to_glomerulus_{m}")));
        cols.push(format!("density_inside_{t}_mean"));
        cols.push(format!("density_outside_{t}_mean"));
        cols.extend(self.specific.iter().map(|m| format!("distance_{m}_to_{t}")));
        cols.push(format!("distance_to_glomerulus_{t}_mean"));
        cols
    }
}

/// Landmarks and cell maps of one slide.
#[derive(Debug, Clone)]
pub struct SlideData {
    pub slide_id: String,
    pub landmarks: Vec<Landmark>,
    pub cellmaps: Vec<CellMap>,
}

impl SlideData {
    fn cells(&self, cell_type: &str) -> Option<&CellMap> {
        self.cellmaps.iter().find(|m| m.cell_type == cell_type)
    }
}

/// Rows of named feature values; `None` marks an undefined entry.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub row_ids: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<String>, row_ids: Vec<String>, values: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = columns.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Validation(format!("duplicate feature column `{dup}`")));
        }
        if row_ids.len() != values.len() || values.iter().any(|r| r.len() != columns.len()) {
            return Err(Error::Validation("feature matrix shape mismatch".into()));
        }
        Ok(FeatureMatrix { columns, row_ids, values })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// CSV with a `chain_id` column followed by the feature columns.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("chain_id");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (id, row) in self.row_ids.iter().zip(&self.values) {
            s.push_str(id);
            for v in row {
                s.push(',');
                match v {
                    Some(x) => s.push_str(&x.to_string()),
                    None => s.push_str("undefined"),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str, path: &std::path::Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, header)) = lines.next() else {
            return Err(Error::parse(path, 1, "empty feature matrix"));
        };
        let mut cols = header.split(',').map(str::trim);
        if cols.next() != Some("chain_id") {
            return Err(Error::parse(path, 1, "first column must be `chain_id`"));
        }
        let columns: Vec<String> = cols.map(str::to_string).collect();
        let (mut row_ids, mut values) = (Vec::new(), Vec::new());
        for (k, line) in lines {
            let lineno = k as u64 + 1;
            let mut cells = line.split(',').map(str::trim);
            let id = cells.next().unwrap_or_default().to_string();
            let row = cells
                .map(|c| match c {
                    "undefined" | "" => Ok(None),
                    c => c
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::parse(path, lineno, format!("invalid value `{c}`"))),
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != columns.len() {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected {} values, got {}", columns.len(), row.len()),
                ));
            }
            row_ids.push(id);
            values.push(row);
        }
        FeatureMatrix::new(columns, row_ids, values)
    }
}

/// Feature matrix plus the chains left out of it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBuild {
    pub matrix: FeatureMatrix,
    /// Chain ids of rows that do not span every slide.
    pub incomplete_chains: Vec<String>,
}

/// Home slide index of each specific cell type, checking that every slide
/// carries the shared type.
fn resolve_panel(slides: &[SlideData], panel: &FeaturePanel) -> Result<Vec<usize>> {
    let mut gaps = Vec::new();
    for s in slides {
        if s.cells(&panel.shared).is_none() {
            gaps.push(format!("`{}` missing in slide `{}`", panel.shared, s.slide_id));
        }
    }
    let mut homes = Vec::new();
    for m in &panel.specific {
        match slides.iter().position(|s| s.cells(m).is_some()) {
            Some(k) => homes.push(k),
            None => gaps.push(format!("`{m}` missing in every slide")),
        }
    }
    if gaps.is_empty() {
        Ok(homes)
    } else {
        Err(Error::MissingCellType(gaps.join("; ")))
    }
}

/// Translates points from a frame centred on `from` to one centred on the origin.
fn localise(points: &[Point], from: Point) -> Vec<Point> {
    points.iter().map(|p| p.translate(-from.x, -from.y)).collect()
}

/// Feature row for one complete chain row.
fn feature_row(
    gloms: &[&Landmark],
    slides: &[SlideData],
    panel: &FeaturePanel,
    homes: &[usize],
    spec: &NeighbourhoodSpec,
) -> Result<Vec<Option<f64>>> {
    let boundaries: Vec<&Polygon> = gloms.iter().map(|g| g.boundary_or_err()).collect::<Result<_>>()?;
    let windows: Vec<Window> = gloms.iter().map(|g| spec.window_at(g.position)).collect();
    let cells_of = |k: usize, t: &str| -> &[Point] { slides[k].cells(t).map_or(&[], |m| m.points.as_slice()) };

    let specific: Vec<RegionCounts> = panel
        .specific
        .iter()
        .zip(homes)
        .map(|(m, &k)| region_counts(cells_of(k, m), boundaries[k], &windows[k]))
        .collect();
    let shared: Vec<RegionCounts> =
        (0..slides.len()).map(|k| region_counts(cells_of(k, &panel.shared), boundaries[k], &windows[k])).collect();

    let mut row = Vec::with_capacity(4 * panel.specific.len() + 3);
    row.extend(specific.iter().map(RegionCounts::density_inside));
    row.extend(specific.iter().map(RegionCounts::density_outside));
    row.extend(
        panel
            .specific
            .iter()
            .zip(homes)
            .map(|(m, &k)| mean_boundary_distance(cells_of(k, m), boundaries[k], &windows[k])),
    );
    row.push(mean_defined(shared.iter().map(RegionCounts::density_inside)));
    row.push(mean_defined(shared.iter().map(RegionCounts::density_outside)));

    let local_window = spec.window_at(Point::new(0.0, 0.0));
    let shared_local: Vec<Vec<Point>> =
        (0..slides.len()).map(|k| localise(cells_of(k, &panel.shared), gloms[k].position)).collect();
    for (m, &k) in panel.specific.iter().zip(homes) {
        let a = localise(cells_of(k, m), gloms[k].position);
        row.push(mean_defined(shared_local.iter().map(|b| mean_pairwise_distance(&a, b, &local_window))));
    }
    row.push(mean_defined(
        (0..slides.len()).map(|k| mean_boundary_distance(cells_of(k, &panel.shared), boundaries[k], &windows[k])),
    ));
    Ok(row)
}

/// Assembles the feature matrix over every complete chain row.
///
/// `slides` must follow the chain's slide order.
pub fn build_feature_matrix(
    chain: &MatchChain,
    slides: &[SlideData],
    panel: &FeaturePanel,
    spec: &NeighbourhoodSpec,
) -> Result<FeatureBuild> {
    spec.validate()?;
    let order: Vec<&str> = slides.iter().map(|s| s.slide_id.as_str()).collect();
    if order != chain.slides.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::SlideOrder(format!("slide data {order:?} does not follow chain order {:?}", chain.slides)));
    }
    let homes = resolve_panel(slides, panel)?;
    let lookup: Vec<BTreeMap<&str, &Landmark>> =
        slides.iter().map(|s| s.landmarks.iter().map(|l| (l.id.as_str(), l)).collect()).collect();

    let mut complete = Vec::new();
    let mut incomplete_chains = Vec::new();
    for (index, row) in chain.rows.iter().enumerate() {
        if row.is_complete() {
            complete.push(index);
        } else {
            incomplete_chains.push(MatchChain::chain_id(index));
        }
    }
    let rows: Vec<Result<Vec<Option<f64>>>> = par::map(&complete, |&index| {
        let gloms = chain.rows[index]
            .ids
            .iter()
            .enumerate()
            .map(|(k, id)| {
                let id = id.as_deref().expect("complete row");
                lookup[k]
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::UnknownLandmark { slide: slides[k].slide_id.clone(), id: id.to_string() })
            })
            .collect::<Result<Vec<_>>>()?;
        feature_row(&gloms, slides, panel, &homes, spec)
    });
    let values = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let matrix =
        FeatureMatrix::new(panel.column_names(), complete.iter().map(|&i| MatchChain::chain_id(i)).collect(), values)?;
    Ok(FeatureBuild { matrix, incomplete_chains })
}

/// Centroid of each complete chain row in the first slide, keyed by chain id.
pub fn chain_positions(chain: &MatchChain, first_slide: &[Landmark]) -> BTreeMap<String, Point> {
    let by_id: BTreeMap<&str, Point> = first_slide.iter().map(|l| (l.id.as_str(), l.position)).collect();
    chain
        .rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let id = r.ids.first()?.as_deref()?;
            Some((MatchChain::chain_id(i), *by_id.get(id)?))
        })
        .collect()
}
