//! Colour deconvolution of bright-field RGB tiles and cell centroid extraction.
//!
//! Each stain is a unit optical-density vector over (R, G, B). The optical
//! density of a pixel is the stain-weighted sum of those vectors, so the
//! per-stain concentrations are recovered by inverting the 3 x 3 stain matrix.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::model::CellMap;

/// Condition numbers above this are treated as singular.
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StainVector {
    pub label: String,
    pub od_vector: [f64; 3],
}

/// Thresholding rule turning one concentration channel into cell centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRule {
    pub cell_type: String,
    pub channel: String,
    pub threshold: f64,
    #[serde(default)]
    pub min_area_um2: f64,
    #[serde(default = "unbounded")]
    pub max_area_um2: f64,
}

fn unbounded() -> f64 {
    f64::INFINITY
}

fn default_background() -> [f64; 3] {
    [255.0; 3]
}

/// Stain configuration file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StainConfig {
    pub stains: Vec<StainVector>,
    #[serde(default = "default_background")]
    pub background: [f64; 3],
    #[serde(default)]
    pub cells: Vec<CellRule>,
}

impl StainConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })
    }

    pub fn matrix(&self) -> Result<StainMatrix> {
        StainMatrix::new(&self.stains)
    }
}

/// Three labelled unit stain vectors and their precomputed inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct StainMatrix {
    labels: [String; 3],
    /// Columns are the stain OD vectors.
    forward: Matrix3<f64>,
    inverse: Matrix3<f64>,
    condition: f64,
}

impl StainMatrix {
    pub fn new(stains: &[StainVector]) -> Result<Self> {
        if stains.len() != 3 {
            return Err(Error::InvalidParameter(format!("expected 3 stain vectors, got {}", stains.len())));
        }
        let mut cols = [Vector3::zeros(); 3];
        for (k, s) in stains.iter().enumerate() {
            if s.label.is_empty() {
                return Err(Error::InvalidParameter("empty stain label".into()));
            }
            let v = Vector3::from(s.od_vector);
            if v.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
                return Err(Error::InvalidParameter(format!(
                    "stain `{}` has negative or non-finite components",
                    s.label
                )));
            }
            let norm = v.norm();
            if norm == 0.0 {
                return Err(Error::InvalidParameter(format!("stain `{}` is the zero vector", s.label)));
            }
            cols[k] = v / norm;
        }
        let labels = [stains[0].label.clone(), stains[1].label.clone(), stains[2].label.clone()];
        if labels[0] == labels[1] || labels[0] == labels[2] || labels[1] == labels[2] {
            return Err(Error::InvalidParameter("stain labels must be distinct".into()));
        }
        let forward = Matrix3::from_columns(&cols);
        let sv = forward.singular_values();
        let smin = sv.min();
        let condition = if smin > 0.0 { sv.max() / smin } else { f64::INFINITY };
        if !(condition < MAX_CONDITION) {
            return Err(Error::SingularStainMatrix(condition));
        }
        let inverse = forward.try_inverse().ok_or(Error::SingularStainMatrix(condition))?;
        Ok(StainMatrix { labels, forward, inverse, condition })
    }

    pub fn labels(&self) -> &[String; 3] {
        &self.labels
    }

    pub fn channel(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    /// Unit stain vector `k`.
    pub fn vector(&self, k: usize) -> [f64; 3] {
        let c = self.forward.column(k);
        [c[0], c[1], c[2]]
    }

    /// Optical density produced by the given concentrations.
    pub fn mix(&self, conc: [f64; 3]) -> [f64; 3] {
        let od = self.forward * Vector3::from(conc);
        [od[0], od[1], od[2]]
    }

    /// Concentrations for one OD triple, without clamping.
    pub fn solve(&self, od: [f64; 3]) -> [f64; 3] {
        let c = self.inverse * Vector3::from(od);
        [c[0], c[1], c[2]]
    }
}

/// Placement of a tile in the registered frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileGeometry {
    pub width: usize,
    pub height: usize,
    /// µm per pixel.
    pub resolution: f64,
    /// Position of the tile's top-left corner, µm.
    pub origin: Point,
}

impl TileGeometry {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Registered-frame position of a (fractional) pixel coordinate.
    pub fn to_frame(&self, col: f64, row: f64) -> Point {
        self.origin.translate(col * self.resolution, row * self.resolution)
    }
}

/// 8-bit RGB tile, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbTile {
    pub geometry: TileGeometry,
    pub pixels: Vec<[u8; 3]>,
}

/// Three channels of floating-point values per pixel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTile {
    pub geometry: TileGeometry,
    pub data: Vec<[f64; 3]>,
}

/// Stain concentrations per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationTile {
    pub geometry: TileGeometry,
    pub labels: [String; 3],
    pub data: Vec<[f64; 3]>,
    /// Fraction of pixel channels whose negative concentration was clamped to 0.
    pub clamp_fraction: f64,
}

fn check_background(background: [f64; 3]) -> Result<()> {
    if background.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
        return Err(Error::InvalidParameter(format!("background intensities must be positive, got {background:?}")));
    }
    Ok(())
}

/// `OD = -log10(max(I, 1) / I0)` per channel on floating-point intensities.
pub fn optical_density_f64(
    geometry: TileGeometry,
    intensities: &[[f64; 3]],
    background: [f64; 3],
) -> Result<ChannelTile> {
    check_background(background)?;
    if intensities.len() != geometry.pixels() {
        return Err(Error::InvalidParameter(format!(
            "tile has {} samples, expected {}",
            intensities.len(),
            geometry.pixels()
        )));
    }
    let data = intensities
        .iter()
        .map(|px| {
            let mut od = [0.0; 3];
            for c in 0..3 {
                od[c] = -(px[c].max(1.0) / background[c]).log10();
            }
            od
        })
        .collect();
    Ok(ChannelTile { geometry, data })
}

pub fn optical_density(tile: &RgbTile, background: [f64; 3]) -> Result<ChannelTile> {
    let intensities: Vec<[f64; 3]> =
        tile.pixels.iter().map(|p| [f64::from(p[0]), f64::from(p[1]), f64::from(p[2])]).collect();
    optical_density_f64(tile.geometry, &intensities, background)
}

/// Per-pixel concentrations; negative values are clamped to zero.
pub fn unmix(od: &ChannelTile, matrix: &StainMatrix) -> ConcentrationTile {
    let mut clamped = 0usize;
    let data: Vec<[f64; 3]> = od
        .data
        .iter()
        .map(|&px| {
            let mut c = matrix.solve(px);
            for v in &mut c {
                if *v < 0.0 {
                    *v = 0.0;
                    clamped += 1;
                }
            }
            c
        })
        .collect();
    let total = data.len() * 3;
    ConcentrationTile {
        geometry: od.geometry,
        labels: matrix.labels().clone(),
        data,
        clamp_fraction: if total > 0 { clamped as f64 / total as f64 } else { 0.0 },
    }
}

/// Connected components (8-neighbourhood) of a boolean mask, as pixel index lists.
pub fn label_components(mask: &[bool], width: usize, height: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(idx) = queue.pop_front() {
            comp.push(idx);
            let (r, c) = ((idx / width) as isize, (idx % width) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= height as isize || nc >= width as isize {
                        continue;
                    }
                    let n = nr as usize * width + nc as usize;
                    if mask[n] && !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        components.push(comp);
    }
    components
}

/// Thresholds one channel and returns centroids of components within the area bounds.
///
/// Pixel `(col, row)` covers `[col, col+1) x [row, row+1)` in pixel units, so
/// its centre sits at `origin + (col + 0.5, row + 0.5) * resolution`.
pub fn extract_cells(conc: &ConcentrationTile, slide_id: &str, rule: &CellRule) -> Result<CellMap> {
    let ch = conc
        .labels
        .iter()
        .position(|l| *l == rule.channel)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown stain channel `{}`", rule.channel)))?;
    if !(rule.threshold > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be positive, got {}", rule.threshold)));
    }
    if rule.min_area_um2 < 0.0 || !(rule.max_area_um2 >= rule.min_area_um2) {
        return Err(Error::InvalidParameter("area bounds must satisfy 0 <= min <= max".into()));
    }
    let g = conc.geometry;
    let mask: Vec<bool> = conc.data.iter().map(|px| px[ch] >= rule.threshold).collect();
    let pixel_area = g.resolution * g.resolution;
    let points = label_components(&mask, g.width, g.height)
        .into_iter()
        .filter(|comp| {
            let area = comp.len() as f64 * pixel_area;
            area >= rule.min_area_um2 && area <= rule.max_area_um2
        })
        .map(|comp| {
            let n = comp.len() as f64;
            let (sc, sr) = comp
                .iter()
                .fold((0.0, 0.0), |(sc, sr), &idx| (sc + (idx % g.width) as f64, sr + (idx / g.width) as f64));
            g.to_frame(sc / n + 0.5, sr / n + 0.5)
        })
        .collect();
    Ok(CellMap::new(slide_id, &rule.cell_type, points))
}

#[derive(Debug, Deserialize)]
struct Sidecar {
    origin: [f64; 2],
    resolution_um_per_px: f64,
}

/// Sidecar path for a tile image: same directory, same stem, `.json` extension.
pub fn sidecar_path(image: &Path) -> PathBuf {
    image.with_extension("json")
}

/// Reads a PNG or PPM tile and its placement sidecar.
pub fn load_tile(path: impl AsRef<Path>) -> Result<RgbTile> {
    let path = path.as_ref();
    let sidecar_file = sidecar_path(path);
    let text = std::fs::read_to_string(&sidecar_file).map_err(|e| Error::io(&sidecar_file, e))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::Json { path: sidecar_file.clone(), source: e })?;
    if !(sidecar.resolution_um_per_px > 0.0) {
        return Err(Error::InvalidParameter(format!("{}: resolution must be positive", sidecar_file.display())));
    }
    let img =
        image::open(path).map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(RgbTile {
        geometry: TileGeometry {
            width: w as usize,
            height: h as usize,
            resolution: sidecar.resolution_um_per_px,
            origin: Point::new(sidecar.origin[0], sidecar.origin[1]),
        },
        pixels: img.pixels().map(|p| p.0).collect(),
    })
}

/// Writes a tile as PNG or PPM (by extension) together with its sidecar.
pub fn save_tile(path: impl AsRef<Path>, tile: &RgbTile) -> Result<()> {
    let path = path.as_ref();
    let g = tile.geometry;
    let raw: Vec<u8> = tile.pixels.iter().flat_map(|p| p.iter().copied()).collect();
    let img = image::RgbImage::from_raw(g.width as u32, g.height as u32, raw)
        .ok_or_else(|| Error::Image { path: path.to_path_buf(), message: "pixel buffer size mismatch".into() })?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save(path).map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })?;
    let sidecar = serde_json::json!({
        "origin": [g.origin.x, g.origin.y],
        "resolution_um_per_px": g.resolution,
    });
    crate::io::save_text(sidecar_path(path), &format!("{sidecar:#}\n"))
}
